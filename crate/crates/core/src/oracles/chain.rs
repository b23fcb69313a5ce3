//! Finite Markov chains `P(a) = P_base + s(a)·ΔP` on `d ≤ 200` states.
//!
//! Everything is dense linear algebra. The stationary vector, the
//! fundamental solution `ψ = (1 − P)⁻¹(φ − ⟨φ,μ⟩)` on `ker μ` and the
//! derivative of `μ` all come from bordered systems that are nonsingular
//! exactly when eigenvalue 1 is simple.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::Amplitude;
use crate::dynamics::{Dynamics, StateMetric, StepWeights};
use crate::rng::{SeqRng, StepRng};
use crate::{Error, Result};

const MAX_STATES: usize = 200;
const ROW_SUM_TOL: f64 = 1e-14;

/// A chain whose kernel is affine in a scalar profile of the parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineChain {
    d: usize,
    base: Vec<f64>,
    direction: Vec<f64>,
    amplitude: Amplitude,
}

/// Sup-norm bound on the inverse of `1 − P` restricted to `ker μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventReport {
    /// Operator norm of `(1 − P)⁻¹` on `ker μ` in the sup norm.
    pub inverse_norm: f64,
    /// Contraction coefficient of `P` on `ker μ` in the same norm.
    pub rho: f64,
    /// `1/(1 − ρ)`, infinite when `ρ ≥ 1`.
    pub bound: f64,
    /// Second-largest eigenvalue modulus, for comparison.
    pub spectral_rho: f64,
}

impl ResolventReport {
    pub fn holds(&self) -> bool {
        self.inverse_norm <= self.bound * (1.0 + 1e-12)
    }
}

fn random_stochastic(d: usize, mix: f64, rng: &mut SeqRng) -> Vec<f64> {
    // Convex combination with a rank-one kernel keeps a uniform gap.
    let mut nu: Vec<f64> = (0..d).map(|_| rng.uniform() + 1e-3).collect();
    let s: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|v| *v /= s);
    let mut p = vec![0.0; d * d];
    for i in 0..d {
        let row = &mut p[i * d..(i + 1) * d];
        for v in row.iter_mut() {
            let u = rng.uniform();
            *v = u * u * u;
        }
        let s: f64 = row.iter().sum();
        for (v, n) in row.iter_mut().zip(&nu) {
            *v = (1.0 - mix) * *v / s + mix * n;
        }
    }
    p
}

impl AffineChain {
    /// `direction` must have zero row sums; the kernel is validated at each
    /// parameter value where it is used.
    pub fn new(d: usize, base: Vec<f64>, direction: Vec<f64>, amplitude: Amplitude) -> Result<Self> {
        if d == 0 || d > MAX_STATES {
            return Err(Error::InvalidArgument(alloc::format!("chain size {d} outside 1..={MAX_STATES}")));
        }
        if base.len() != d * d {
            return Err(Error::SizeMismatch { left: base.len(), right: d * d });
        }
        if direction.len() != d * d {
            return Err(Error::SizeMismatch { left: direction.len(), right: d * d });
        }
        amplitude.validate()?;
        for i in 0..d {
            let s: f64 = direction[i * d..(i + 1) * d].iter().sum();
            if libm::fabs(s) > ROW_SUM_TOL {
                return Err(Error::NotStochastic(alloc::format!("direction row {i} sums to {s}")));
            }
        }
        Ok(AffineChain { d, base, direction, amplitude })
    }

    /// `P(a) = ½(P₀ + P₁) + ½ sin(a)(P₁ − P₀)` with random kernels `P₀, P₁`
    /// each mixed with weight `mix` into a rank-one kernel.
    pub fn random_smooth(d: usize, mix: f64, rng: &mut SeqRng) -> Result<Self> {
        let p0 = random_stochastic(d, mix, rng);
        let p1 = random_stochastic(d, mix, rng);
        let base = p0.iter().zip(&p1).map(|(a, b)| 0.5 * (a + b)).collect();
        let dir = Self::balanced_difference(d, &p0, &p1, 0.5);
        Self::new(d, base, dir, Amplitude::Sine)
    }

    /// `P(a) = P₀ + sign(a − a₀)|a − a₀|^β·½(P₁ − P₀)`, valid for
    /// `|a − a₀| ≤ 1`.
    pub fn random_holder(d: usize, mix: f64, beta: f64, anchor: f64, rng: &mut SeqRng) -> Result<Self> {
        let p0 = random_stochastic(d, mix, rng);
        let p1 = random_stochastic(d, mix, rng);
        // P₀ ± ½(P₁ − P₀) stays stochastic only if P₀ dominates half the
        // difference; centre on the midpoint instead.
        let base = p0.iter().zip(&p1).map(|(a, b)| 0.5 * (a + b)).collect();
        let dir = Self::balanced_difference(d, &p0, &p1, 0.5);
        Self::new(d, base, dir, Amplitude::Holder { beta, anchor })
    }

    /// `[[1 − a, a], [b, 1 − b]]`.
    pub fn two_state(b: f64) -> Result<Self> {
        Self::new(2, vec![1.0, 0.0, b, 1.0 - b], vec![-1.0, 1.0, 0.0, 0.0], Amplitude::Linear)
    }

    /// `c·(P₁ − P₀)` with row sums forced to exactly zero.
    fn balanced_difference(d: usize, p0: &[f64], p1: &[f64], c: f64) -> Vec<f64> {
        let mut dir: Vec<f64> = p0.iter().zip(p1).map(|(a, b)| c * (b - a)).collect();
        for i in 0..d {
            let row = &mut dir[i * d..(i + 1) * d];
            let s: f64 = row.iter().sum();
            let j = (0..d).max_by(|&x, &y| row[x].abs().total_cmp(&row[y].abs())).unwrap_or(0);
            row[j] -= s;
        }
        dir
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn amplitude(&self) -> Amplitude {
        self.amplitude
    }

    /// Entry `P(a)[x][y]`.
    pub fn entry(&self, a: f64, x: usize, y: usize) -> f64 {
        let i = x * self.d + y;
        self.base[i] + self.amplitude.at(a) * self.direction[i]
    }

    /// The kernel at `a`, checked to be stochastic.
    pub fn matrix(&self, a: f64) -> Result<DMatrix<f64>> {
        let d = self.d;
        let s = self.amplitude.at(a);
        let p = DMatrix::from_fn(d, d, |i, j| self.base[i * d + j] + s * self.direction[i * d + j]);
        for i in 0..d {
            let row = p.row(i);
            if let Some(v) = row.iter().find(|v| !(**v >= 0.0)) {
                return Err(Error::NotStochastic(alloc::format!("entry {v} in row {i} at a = {a}")));
            }
            let sum: f64 = row.iter().sum();
            if libm::fabs(sum - 1.0) > ROW_SUM_TOL * d as f64 {
                return Err(Error::NotStochastic(alloc::format!("row {i} sums to {sum} at a = {a}")));
            }
        }
        Ok(p)
    }

    /// `∂_a P(a)`.
    pub fn derivative(&self, a: f64) -> Result<DMatrix<f64>> {
        let s = self.amplitude.derivative(a)?;
        let d = self.d;
        Ok(DMatrix::from_fn(d, d, |i, j| s * self.direction[i * d + j]))
    }

    /// Eigenvalue moduli of `P(a)` in decreasing order.
    pub fn eigen_moduli(&self, a: f64) -> Result<Vec<f64>> {
        let p = self.matrix(a)?;
        let mut m: Vec<f64> = p.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        m.sort_by(|x, y| y.total_cmp(x));
        Ok(m)
    }

    /// Second-largest eigenvalue modulus; errors if eigenvalue 1 is not
    /// simple.
    pub fn second_eigenvalue_modulus(&self, a: f64) -> Result<f64> {
        let p = self.matrix(a)?;
        let ev = p.complex_eigenvalues();
        let ones = ev.iter().filter(|z| (*z - nalgebra::Complex::new(1.0, 0.0)).norm() < 1e-9).count();
        if ones != 1 {
            return Err(Error::Reducible(ones));
        }
        let mut m: Vec<f64> = ev.iter().map(|z| z.norm()).collect();
        m.sort_by(|x, y| y.total_cmp(x));
        Ok(m.get(1).copied().unwrap_or(0.0))
    }

    fn require_gap(&self, a: f64) -> Result<f64> {
        let rho = self.second_eigenvalue_modulus(a)?;
        if rho >= 1.0 - 1e-12 {
            return Err(Error::NoGap(rho));
        }
        Ok(rho)
    }

    /// Solves `[[M, u], [wᵀ, 0]]·[x; c] = [rhs; tail]`.
    fn bordered(
        m: &DMatrix<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
        rhs: &DVector<f64>,
        tail: f64,
    ) -> Result<DVector<f64>> {
        let d = m.nrows();
        let mut big = DMatrix::zeros(d + 1, d + 1);
        big.view_mut((0, 0), (d, d)).copy_from(m);
        big.view_mut((0, d), (d, 1)).copy_from(u);
        big.view_mut((d, 0), (1, d)).copy_from(&w.transpose());
        let mut b = DVector::zeros(d + 1);
        b.rows_mut(0, d).copy_from(rhs);
        b[d] = tail;
        let x = big.lu().solve(&b).ok_or(Error::Reducible(2))?;
        Ok(x.rows(0, d).into_owned())
    }

    fn stationary_of(&self, p: &DMatrix<f64>) -> Result<DVector<f64>> {
        let d = self.d;
        let ones = DVector::from_element(d, 1.0);
        let m = (DMatrix::identity(d, d) - p).transpose();
        let mu = Self::bordered(&m, &ones, &ones, &DVector::zeros(d), 1.0)?;
        let residual = (p.transpose() * &mu - &mu).amax();
        if !(residual <= 1e-12) {
            return Err(Error::Reducible(2));
        }
        Ok(mu)
    }

    /// The stationary probability vector of `P(a)`.
    pub fn stationary(&self, a: f64) -> Result<Vec<f64>> {
        self.second_eigenvalue_modulus(a)?;
        let p = self.matrix(a)?;
        Ok(self.stationary_of(&p)?.as_slice().to_vec())
    }

    fn check_observable(&self, phi: &[f64]) -> Result<DVector<f64>> {
        if phi.len() != self.d {
            return Err(Error::SizeMismatch { left: phi.len(), right: self.d });
        }
        Ok(DVector::from_column_slice(phi))
    }

    /// `ψ = (1 − P)⁻¹(φ − ⟨φ,μ⟩)` with `⟨ψ,μ⟩ = 0`.
    pub fn fundamental_solution(&self, a: f64, phi: &[f64]) -> Result<Vec<f64>> {
        let phi = self.check_observable(phi)?;
        self.require_gap(a)?;
        let p = self.matrix(a)?;
        let mu = self.stationary_of(&p)?;
        Ok(self.psi(&p, &mu, &phi)?.as_slice().to_vec())
    }

    fn psi(&self, p: &DMatrix<f64>, mu: &DVector<f64>, phi: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.d;
        let centred = phi.add_scalar(-phi.dot(mu));
        let ones = DVector::from_element(d, 1.0);
        Self::bordered(&(DMatrix::identity(d, d) - p), &ones, mu, &centred, 0.0)
    }

    /// `⟨(∂_a P) ψ, μ⟩` at `a₀`: the response of `⟨φ, μ_a⟩`.
    pub fn response_exact(&self, a0: f64, phi: &[f64]) -> Result<f64> {
        let phi = self.check_observable(phi)?;
        self.require_gap(a0)?;
        let p = self.matrix(a0)?;
        let dp = self.derivative(a0)?;
        let mu = self.stationary_of(&p)?;
        let psi = self.psi(&p, &mu, &phi)?;
        Ok(mu.dot(&(dp * psi)))
    }

    /// `∂_a μ_a`, from `∂μ·(1 − P) = μ·∂P` and `∂μ·1 = 0`.
    pub fn stationary_derivative(&self, a: f64) -> Result<Vec<f64>> {
        let d = self.d;
        let p = self.matrix(a)?;
        let dp = self.derivative(a)?;
        let mu = self.stationary_of(&p)?;
        let ones = DVector::from_element(d, 1.0);
        let rhs = dp.transpose() * &mu;
        let m = (DMatrix::identity(d, d) - p).transpose();
        Ok(Self::bordered(&m, &ones, &ones, &rhs, 0.0)?.as_slice().to_vec())
    }

    /// `d⟨φ,μ_a⟩/da` by differentiating the stationary vector directly.
    pub fn response_by_differentiation(&self, a0: f64, phi: &[f64]) -> Result<f64> {
        self.check_observable(phi)?;
        let dmu = self.stationary_derivative(a0)?;
        Ok(dmu.iter().zip(phi).map(|(a, b)| a * b).sum())
    }

    /// Both sides of `⟨φ, μ₂ − μ₁⟩ = ⟨(P₂ − P₁)ψ₁, μ₂⟩`, with `ψ₁` the
    /// fundamental solution at `a₁`.
    pub fn perturbation_identity(&self, a1: f64, a2: f64, phi: &[f64]) -> Result<(f64, f64)> {
        let phi = self.check_observable(phi)?;
        let p1 = self.matrix(a1)?;
        let p2 = self.matrix(a2)?;
        self.require_gap(a1)?;
        let mu1 = self.stationary_of(&p1)?;
        let mu2 = self.stationary_of(&p2)?;
        let psi1 = self.psi(&p1, &mu1, &phi)?;
        let lhs = phi.dot(&(&mu2 - &mu1));
        let rhs = mu2.dot(&((p2 - p1) * psi1));
        Ok((lhs, rhs))
    }

    /// Compares the sup norm of `(1 − P)⁻¹` on `ker μ` with `1/(1 − ρ)`,
    /// `ρ` the contraction coefficient of `P` on `ker μ` in the same norm.
    pub fn resolvent_report(&self, a: f64) -> Result<ResolventReport> {
        let d = self.d;
        let spectral_rho = self.require_gap(a)?;
        let p = self.matrix(a)?;
        let mu = self.stationary_of(&p)?;
        // Z = (1 − P + 1μᵀ)⁻¹ agrees with (1 − P)⁻¹ on ker μ and maps it
        // into itself.
        let z = (DMatrix::identity(d, d) - &p + DVector::from_element(d, 1.0) * mu.transpose())
            .try_inverse()
            .ok_or(Error::Reducible(2))?;
        let inverse_norm = restricted_sup_norm(&z, &mu);
        let rho = restricted_sup_norm(&p, &mu);
        let bound = if rho < 1.0 { 1.0 / (1.0 - rho) } else { f64::INFINITY };
        Ok(ResolventReport { inverse_norm, rho, bound, spectral_rho })
    }
}

/// `sup{‖Mg‖∞ : μ·g = 0, ‖g‖∞ ≤ 1} = max_i min_τ ‖M_i − τμ‖₁` by LP
/// duality; the inner minimum is attained at a weighted median.
fn restricted_sup_norm(m: &DMatrix<f64>, mu: &DVector<f64>) -> f64 {
    let d = mu.len();
    let mut best = 0.0f64;
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(d);
    for i in 0..d {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        pts.clear();
        pts.extend((0..d).filter(|&j| mu[j] > 0.0).map(|j| (row[j] / mu[j], mu[j])));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pts.iter().map(|p| p.1).sum();
        let mut acc = 0.0;
        let mut tau = 0.0;
        for &(t, w) in &pts {
            acc += w;
            if acc >= 0.5 * total {
                tau = t;
                break;
            }
        }
        let cost: f64 = (0..d).map(|j| libm::fabs(row[j] - tau * mu[j])).sum();
        best = best.max(cost);
    }
    best
}

/// Simulates an [`AffineChain`] one transition per step. The score is the
/// exact likelihood ratio derivative `∂_a P(x, y)/P(x, y)`.
#[derive(Debug, Clone)]
pub struct ChainSampler<'c> {
    chain: &'c AffineChain,
}

impl<'c> ChainSampler<'c> {
    pub fn new(chain: &'c AffineChain) -> Self {
        ChainSampler { chain }
    }

    pub fn chain(&self) -> &AffineChain {
        self.chain
    }
}

impl Dynamics for ChainSampler<'_> {
    type State = usize;
    type Workspace = ();

    fn workspace(&self) {}

    fn dt(&self) -> f64 {
        1.0
    }

    fn advance(
        &self,
        x: &mut usize,
        _: &mut (),
        a: f64,
        rng: &mut StepRng,
        weights: Option<&mut StepWeights>,
    ) -> Result<()> {
        let c = self.chain;
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut next = c.d - 1;
        for y in 0..c.d {
            acc += c.entry(a, *x, y);
            if u < acc {
                next = y;
                break;
            }
        }
        // Round-off can leave the tail with zero mass.
        while c.entry(a, *x, next) <= 0.0 && next > 0 {
            next -= 1;
        }
        if let Some(w) = weights {
            let p = c.entry(a, *x, next);
            let dp = c.amplitude.derivative(a)? * c.direction[*x * c.d + next];
            w.score += dp / p;
            if let Some(alt) = w.alternative {
                w.log_ratio += libm::log(c.entry(alt, *x, next) / p);
            }
        }
        *x = next;
        Ok(())
    }

    fn check_score_available(&self) -> Result<()> {
        match self.chain.amplitude {
            Amplitude::Holder { beta, .. } if beta < 1.0 => Err(Error::NotDifferentiable),
            _ => Ok(()),
        }
    }

    fn is_finite(&self, x: &usize) -> bool {
        *x < self.chain.d
    }
}

/// The discrete metric on states, with `V ≡ 0`.
impl StateMetric<usize> for ChainSampler<'_> {
    fn distance(&self, x: &usize, y: &usize) -> f64 {
        if x == y {
            0.0
        } else {
            1.0
        }
    }

    fn h_norm_sq(&self, _: &usize) -> f64 {
        0.0
    }

    fn v_norm_sq(&self, _: &usize) -> f64 {
        0.0
    }
}

//! Ornstein–Uhlenbeck processes `dX = (−AX + f(a)) dt + Σ^{1/2} dW` with
//! diagonal noise covariance `Σ` and forcing `f(a) = f_base + s(a)·f₀`.
//!
//! The continuous-time invariant law is Gaussian with mean `A⁻¹f(a)` and
//! covariance solving `AC + CAᵀ = Σ`. The simulated chain is
//! Euler–Maruyama; it shares the stationary mean, and its own covariance
//! and finite-time laws are provided for exact comparisons.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::Amplitude;
use crate::dynamics::{Dynamics, StateMetric, StepWeights};
use crate::observable::VectorObservable;
use crate::rng::StepRng;
use crate::{Error, Result};

const MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct OuModel {
    d: usize,
    drift: DMatrix<f64>,
    sigma2: Vec<f64>,
    base: Vec<f64>,
    f0: Vec<f64>,
    amplitude: Amplitude,
    dt: f64,
}

/// Scratch for one Euler–Maruyama step.
#[derive(Debug, Clone)]
pub struct OuWorkspace {
    dw: Vec<f64>,
    next: Vec<f64>,
}

impl OuModel {
    /// `drift` is `A` in row-major order.
    pub fn new(drift: &[f64], sigma2: Vec<f64>, f0: Vec<f64>, amplitude: Amplitude, dt: f64) -> Result<Self> {
        let d = sigma2.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidArgument(alloc::format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        if drift.len() != d * d {
            return Err(Error::SizeMismatch { left: drift.len(), right: d * d });
        }
        if f0.len() != d {
            return Err(Error::SizeMismatch { left: f0.len(), right: d });
        }
        if sigma2.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("noise variances must be positive".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!("time step {dt}")));
        }
        amplitude.validate()?;
        let drift = DMatrix::from_row_slice(d, d, drift);
        if drift.complex_eigenvalues().iter().any(|z| !(z.re > 0.0)) {
            return Err(Error::Unstable);
        }
        Ok(OuModel { d, drift, sigma2, base: vec![0.0; d], f0, amplitude, dt })
    }

    /// `dX = (−λX + a·f₀) dt + σ dW` in one dimension.
    pub fn scalar(lambda: f64, sigma2: f64, f0: f64, dt: f64) -> Result<Self> {
        Self::new(&[lambda], vec![sigma2], vec![f0], Amplitude::Linear, dt)
    }

    pub fn with_base(mut self, base: Vec<f64>) -> Result<Self> {
        if base.len() != self.d {
            return Err(Error::SizeMismatch { left: base.len(), right: self.d });
        }
        self.base = base;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.drift
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn amplitude(&self) -> Amplitude {
        self.amplitude
    }

    pub fn forcing(&self, a: f64) -> Vec<f64> {
        let s = self.amplitude.at(a);
        self.base.iter().zip(&self.f0).map(|(b, f)| b + s * f).collect()
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        // A is stable, hence invertible.
        let x = self.drift.clone().lu().solve(&DVector::from_column_slice(rhs));
        x.map_or_else(|| vec![f64::NAN; self.d], |x| x.as_slice().to_vec())
    }

    /// Stationary mean `m(a)` solving `A m = f(a)`.
    pub fn mean(&self, a: f64) -> Vec<f64> {
        self.solve(&self.forcing(a))
    }

    /// `∂_a m(a) = s'(a)·A⁻¹f₀`.
    pub fn mean_derivative(&self, a: f64) -> Result<Vec<f64>> {
        let s = self.amplitude.derivative(a)?;
        Ok(self.solve(&self.f0).into_iter().map(|v| s * v).collect())
    }

    /// Solves `L(C) = Σ` for the linear map `vec C ↦ K·vec C`.
    fn lyapunov(&self, k: DMatrix<f64>) -> DMatrix<f64> {
        let d = self.d;
        let rhs = DVector::from_fn(d * d, |i, _| if i % (d + 1) == 0 { self.sigma2[i / (d + 1)] } else { 0.0 });
        let v = k.lu().solve(&rhs).unwrap_or_else(|| DVector::from_element(d * d, f64::NAN));
        let c = DMatrix::from_column_slice(d, d, v.as_slice());
        (&c + c.transpose()) * 0.5
    }

    /// Continuous-time stationary covariance: `AC + CAᵀ = Σ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let id = DMatrix::identity(self.d, self.d);
        self.lyapunov(id.kronecker(&self.drift) + self.drift.kronecker(&id))
    }

    fn step_matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(self.d, self.d) - &self.drift * self.dt
    }

    /// Stationary covariance of the Euler–Maruyama chain:
    /// `C = BCBᵀ + dt·Σ` with `B = 1 − dt·A`.
    pub fn discrete_covariance(&self) -> Result<DMatrix<f64>> {
        let b = self.step_matrix();
        if b.complex_eigenvalues().iter().any(|z| z.norm() >= 1.0) {
            return Err(Error::StepTooLarge { dt: self.dt, limit: f64::NAN });
        }
        let n = self.d * self.d;
        let c = self.lyapunov(DMatrix::identity(n, n) - b.kronecker(&b));
        Ok(c * self.dt)
    }

    /// `(⟨φ, μ_a⟩, ∂_a⟨φ, μ_a⟩)` under the continuous-time invariant law.
    pub fn exact(&self, a: f64, phi: &VectorObservable) -> Result<(f64, f64)> {
        self.gaussian_average(a, phi, &self.covariance())
    }

    /// As [`OuModel::exact`] for the invariant law of the simulated chain.
    pub fn exact_discrete(&self, a: f64, phi: &VectorObservable) -> Result<(f64, f64)> {
        self.gaussian_average(a, phi, &self.discrete_covariance()?)
    }

    fn gaussian_average(&self, a: f64, phi: &VectorObservable, cov: &DMatrix<f64>) -> Result<(f64, f64)> {
        let d = self.d;
        let m = self.mean(a);
        let dm = self.mean_derivative(a)?;
        match phi {
            VectorObservable::Linear { c, clip } => {
                unclipped(*clip)?;
                if c.len() != d {
                    return Err(Error::SizeMismatch { left: c.len(), right: d });
                }
                let dot = |v: &[f64]| c.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
                Ok((dot(&m), dot(&dm)))
            }
            VectorObservable::Quadratic { h, clip } => {
                unclipped(*clip)?;
                if h.len() != d * d {
                    return Err(Error::SizeMismatch { left: h.len(), right: d * d });
                }
                let hm = DMatrix::from_row_slice(d, d, h);
                let mv = DVector::from_column_slice(&m);
                let dv = DVector::from_column_slice(&dm);
                let value = mv.dot(&(&hm * &mv)) + (&hm * cov).trace();
                let response = dv.dot(&((&hm + hm.transpose()) * &mv));
                Ok((value, response))
            }
        }
    }

    /// Mean and covariance of the chain after `n` steps from `x`.
    pub fn transient_law(&self, x: &[f64], a: f64, n: u64) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.d;
        let b = self.step_matrix();
        let m = DVector::from_column_slice(&self.mean(a));
        let mut dev = DVector::from_column_slice(x) - &m;
        let mut cov = DMatrix::zeros(d, d);
        let sig = DMatrix::from_diagonal(&DVector::from_column_slice(&self.sigma2)) * self.dt;
        for _ in 0..n {
            dev = &b * dev;
            cov = &b * cov * b.transpose() + &sig;
        }
        ((dev + m).as_slice().to_vec(), cov)
    }

    /// `∂_a E_x φ(X_n)` for linear `φ = c·x`.
    pub fn transient_response(&self, c: &[f64], a: f64, n: u64) -> Result<f64> {
        // ∂_a E X_n = Σ_{k<n} Bᵏ dt f₀ s'(a) = (1 − Bⁿ)A⁻¹ f₀ s'(a).
        let b = self.step_matrix();
        let dm = DVector::from_column_slice(&self.mean_derivative(a)?);
        let bn = b.pow(n as u32);
        let v = &dm - bn * &dm;
        Ok(c.iter().zip(v.iter()).map(|(x, y)| x * y).sum())
    }

    /// `E_x |X_n|²` for the simulated chain.
    pub fn second_moment(&self, x: &[f64], a: f64, n: u64) -> f64 {
        let (m, c) = self.transient_law(x, a, n);
        m.iter().map(|v| v * v).sum::<f64>() + c.trace()
    }

    /// `E_x exp(η|X_n|²)`, or `None` when it is infinite.
    pub fn exp_moment(&self, x: &[f64], a: f64, n: u64, eta: f64) -> Option<f64> {
        let (m, c) = self.transient_law(x, a, n);
        gaussian_exp_moment(&m, &c, eta)
    }

    /// `∫ exp(η|x|²) dμ` under the chain's invariant law.
    pub fn stationary_exp_moment(&self, a: f64, eta: f64) -> Result<Option<f64>> {
        Ok(gaussian_exp_moment(&self.mean(a), &self.discrete_covariance()?, eta))
    }

    /// The exponential-martingale tail rate `(2 − κ₂)λ_min/(4σ²_max)` for
    /// the audited functional, with `λ_min` the smallest eigenvalue of the
    /// symmetric part of `A`; valid for `f = 0` and `κ₂ < 2`.
    pub fn tail_rate(&self, kappa2: f64) -> f64 {
        let sym = (&self.drift + self.drift.transpose()) * 0.5;
        let lmin = sym.symmetric_eigenvalues().min();
        let smax = self.sigma2.iter().copied().fold(0.0, f64::max);
        (2.0 - kappa2) * lmin / (4.0 * smax)
    }
}

fn unclipped(clip: f64) -> Result<()> {
    if clip.is_infinite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument("closed forms need an unclipped observable".into()))
    }
}

/// `E exp(η|X|²)` for `X ~ N(m, C)`.
fn gaussian_exp_moment(m: &[f64], c: &DMatrix<f64>, eta: f64) -> Option<f64> {
    let d = m.len();
    let k = DMatrix::identity(d, d) - c * (2.0 * eta);
    let chol = k.clone().cholesky()?;
    let det: f64 = chol.l().diagonal().iter().map(|v| v * v).product();
    let mv = DVector::from_column_slice(m);
    let quad = mv.dot(&chol.solve(&mv));
    Some(libm::exp(eta * quad) / libm::sqrt(det))
}

impl Dynamics for OuModel {
    type State = Vec<f64>;
    type Workspace = OuWorkspace;

    fn workspace(&self) -> OuWorkspace {
        OuWorkspace { dw: vec![0.0; self.d], next: vec![0.0; self.d] }
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn advance(
        &self,
        x: &mut Vec<f64>,
        ws: &mut OuWorkspace,
        a: f64,
        rng: &mut StepRng,
        weights: Option<&mut StepWeights>,
    ) -> Result<()> {
        let d = self.d;
        if x.len() != d {
            return Err(Error::SizeMismatch { left: x.len(), right: d });
        }
        let s = self.amplitude.at(a);
        for i in 0..d {
            ws.dw[i] = libm::sqrt(self.sigma2[i] * self.dt) * rng.normal();
        }
        for i in 0..d {
            let mut drift = self.base[i] + s * self.f0[i];
            for j in 0..d {
                drift -= self.drift[(i, j)] * x[j];
            }
            ws.next[i] = x[i] + self.dt * drift + ws.dw[i];
        }
        x.copy_from_slice(&ws.next);
        if let Some(w) = weights {
            let pair = |g: &[f64]| -> f64 { (0..d).map(|i| g[i] * ws.dw[i] / self.sigma2[i]).sum() };
            let cm = |g: &[f64]| -> f64 { (0..d).map(|i| g[i] * g[i] * self.dt / self.sigma2[i]).sum() };
            w.score += self.amplitude.derivative(a)? * pair(&self.f0);
            if let Some(alt) = w.alternative {
                let ds = self.amplitude.at(alt) - s;
                let shift: Vec<f64> = self.f0.iter().map(|f| ds * f).collect();
                let q = cm(&shift);
                w.log_ratio += pair(&shift) - 0.5 * q;
                w.quad += q;
            }
        }
        Ok(())
    }

    fn check_score_available(&self) -> Result<()> {
        match self.amplitude {
            Amplitude::Holder { beta, .. } if beta < 1.0 => Err(Error::NotDifferentiable),
            _ => Ok(()),
        }
    }

    fn is_finite(&self, x: &Vec<f64>) -> bool {
        x.iter().all(|v| v.is_finite())
    }
}

impl StateMetric<Vec<f64>> for OuModel {
    fn distance(&self, x: &Vec<f64>, y: &Vec<f64>) -> f64 {
        libm::sqrt(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    fn h_norm_sq(&self, x: &Vec<f64>) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    /// `⟨Ax, x⟩`.
    fn v_norm_sq(&self, x: &Vec<f64>) -> f64 {
        let v = DVector::from_column_slice(x);
        v.dot(&(&self.drift * &v))
    }
}

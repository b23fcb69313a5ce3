//! The stochastic two-layer quasi-geostrophic model.
//!
//! Potential vorticities `q = (Δ + M)ψ` with `M = [[−F₁, F₁], [F₂, −F₂]]`
//! evolve by
//!
//! `dq + (B(ψ, ψ) + β∂ₓψ) dt = (νΔ²ψ − r(0, Δψ₂) + (f(a), 0)) dt + (dW, 0)`,
//!
//! where `B(ψ, ξ) = (J(ψ₁, Δξ₁ + F₁ξ₂), J(ψ₂, Δξ₂ + F₂ξ₁))`. Hyperviscosity and
//! bottom friction are stiff and act through the inversion, so they are
//! taken implicitly with one 2×2 solve per mode; everything else is explicit.
//! All inner products carry the layer weights `(h₁, h₂)`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::dynamics::{Dynamics, StateMetric, StepWeights};
use crate::noise::{ForcingFamily, NoiseSpec};
use crate::observable::SpectralState;
use crate::rng::StepRng;
use crate::spectral::{Grid, JacobianScratch, SpectralField};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A real 2×2 matrix `[[a, b], [c, d]]`.
type Mat2 = [f64; 4];

fn mat_vec(m: &Mat2, x: Complex64, y: Complex64) -> (Complex64, Complex64) {
    (x * m[0] + y * m[1], x * m[2] + y * m[3])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QgParams {
    pub nu: f64,
    /// Bottom friction on the lower layer.
    pub r: f64,
    pub beta: f64,
    pub f1: f64,
    pub f2: f64,
    pub h1: f64,
    pub h2: f64,
    pub dt: f64,
    pub max_courant: f64,
    pub nonlinear: bool,
}

impl QgParams {
    /// Layers of equal depth with `F₁ = F₂ = f`.
    pub fn symmetric(nu: f64, r: f64, beta: f64, f: f64, dt: f64) -> Self {
        QgParams { nu, r, beta, f1: f, f2: f, h1: 1.0, h2: 1.0, dt, max_courant: 1.0, nonlinear: true }
    }

    /// `p = h₁F₁ = h₂F₂`.
    pub fn p(&self) -> f64 {
        self.h1 * self.f1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(alloc::string::String::from(what)));
        if !(self.nu > 0.0) {
            return bad("viscosity must be positive");
        }
        if !(self.r >= 0.0) {
            return bad("bottom friction must be nonnegative");
        }
        if !(self.h1 > 0.0 && self.h2 > 0.0) {
            return bad("layer depths must be positive");
        }
        if !(self.f1 >= 0.0 && self.f2 >= 0.0) {
            return bad("coupling constants must be nonnegative");
        }
        let (p1, p2) = (self.h1 * self.f1, self.h2 * self.f2);
        if (p1 - p2).abs() > 1e-12 * p1.abs().max(p2.abs()).max(1.0) {
            return bad("coupling must satisfy h1·F1 = h2·F2");
        }
        if !(self.dt > 0.0) || !self.beta.is_finite() {
            return bad("time step must be positive and beta finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QgState {
    pub q1: SpectralField,
    pub q2: SpectralField,
    pub t: f64,
}

impl QgState {
    pub fn new(q1: SpectralField, q2: SpectralField) -> Self {
        QgState { q1, q2, t: 0.0 }
    }

    pub fn zero(grid: &Arc<Grid>) -> Self {
        Self::new(SpectralField::zeros(grid), SpectralField::zeros(grid))
    }

    pub fn is_finite(&self) -> bool {
        self.q1.is_finite() && self.q2.is_finite()
    }

    pub fn sub(&self, other: &QgState) -> QgState {
        QgState { q1: self.q1.sub(&other.q1), q2: self.q2.sub(&other.q2), t: self.t }
    }
}

impl SpectralState for QgState {
    fn layer(&self, i: usize) -> Option<&SpectralField> {
        match i {
            0 => Some(&self.q1),
            1 => Some(&self.q2),
            _ => None,
        }
    }
}

/// Layer streamfunctions.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamfunction {
    pub psi1: SpectralField,
    pub psi2: SpectralField,
}

pub struct QgWorkspace {
    jac: JacobianScratch,
    psi1: Vec<Complex64>,
    psi2: Vec<Complex64>,
    c1: Vec<Complex64>,
    c2: Vec<Complex64>,
    b1: Vec<Complex64>,
    b2: Vec<Complex64>,
    dw: Vec<Complex64>,
    force: Vec<Complex64>,
    force_at: Option<f64>,
    control: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct TwoLayerQg {
    grid: Arc<Grid>,
    params: QgParams,
    noise: NoiseSpec,
    forcing: ForcingFamily,
    /// `(−λI + M)⁻¹` per mode: streamfunction from potential vorticity.
    inverse: Vec<Mat2>,
    /// `(I − dt·D(−λI + M)⁻¹)⁻¹` with `D = diag(νλ², νλ² + rλ)`.
    resolvent: Vec<Mat2>,
    dir_in_range: bool,
}

impl TwoLayerQg {
    pub fn new(grid: &Arc<Grid>, params: QgParams, noise: NoiseSpec, forcing: ForcingFamily) -> Result<Self> {
        params.validate()?;
        if noise.grid().as_ref() != grid.as_ref() {
            return Err(Error::GridMismatch);
        }
        forcing.base().same_grid(&SpectralField::zeros(grid))?;
        let n = grid.len();
        let mut inverse = vec![[0.0; 4]; n];
        let mut resolvent = vec![[0.0; 4]; n];
        let (f1, f2, dt) = (params.f1, params.f2, params.dt);
        for i in 0..n {
            if !grid.is_retained(i) {
                continue;
            }
            let l = grid.lambda(i);
            let det = l * l + l * (f1 + f2);
            let s = [(-l - f2) / det, -f1 / det, -f2 / det, (-l - f1) / det];
            let d1 = params.nu * l * l;
            let d2 = d1 + params.r * l;
            // I − dt·D·S
            let m = [1.0 - dt * d1 * s[0], -dt * d1 * s[1], -dt * d2 * s[2], 1.0 - dt * d2 * s[3]];
            let md = m[0] * m[3] - m[1] * m[2];
            inverse[i] = s;
            resolvent[i] = [m[3] / md, -m[1] / md, -m[2] / md, m[0] / md];
        }
        let dir_in_range = forcing.in_range(&noise);
        Ok(TwoLayerQg { grid: grid.clone(), params, noise, forcing, inverse, resolvent, dir_in_range })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn params(&self) -> &QgParams {
        &self.params
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn forcing(&self) -> &ForcingFamily {
        &self.forcing
    }

    /// Solves `(Δ + M)ψ = q` mode by mode.
    pub fn invert(&self, q: &QgState) -> Streamfunction {
        let mut psi1 = SpectralField::zeros(&self.grid);
        let mut psi2 = SpectralField::zeros(&self.grid);
        self.invert_into(q.q1.coeffs(), q.q2.coeffs(), psi1.coeffs_mut(), psi2.coeffs_mut());
        Streamfunction { psi1, psi2 }
    }

    fn invert_into(&self, q1: &[Complex64], q2: &[Complex64], p1: &mut [Complex64], p2: &mut [Complex64]) {
        for i in 0..self.grid.len() {
            if self.grid.is_retained(i) {
                (p1[i], p2[i]) = mat_vec(&self.inverse[i], q1[i], q2[i]);
            } else {
                p1[i] = ZERO;
                p2[i] = ZERO;
            }
        }
    }

    /// `q = (Δ + M)ψ`.
    pub fn synthesize(&self, psi: &Streamfunction) -> QgState {
        let (f1, f2) = (self.params.f1, self.params.f2);
        let mut q = QgState::zero(&self.grid);
        let (a, b) = (psi.psi1.coeffs(), psi.psi2.coeffs());
        for i in 0..self.grid.len() {
            if !self.grid.is_retained(i) {
                continue;
            }
            let l = self.grid.lambda(i);
            q.q1.coeffs_mut()[i] = a[i] * (-l - f1) + b[i] * f1;
            q.q2.coeffs_mut()[i] = a[i] * f2 + b[i] * (-l - f2);
        }
        q
    }

    /// `(a, b)_s = h₁⟨a₁, b₁⟩_s + h₂⟨a₂, b₂⟩_s` with Sobolev weight `λ^s`.
    pub fn layer_inner(&self, a: (&SpectralField, &SpectralField), b: (&SpectralField, &SpectralField), s: f64) -> f64 {
        self.params.h1 * a.0.inner(b.0, s) + self.params.h2 * a.1.inner(b.1, s)
    }

    /// `|||q|||²₋₁ = ‖ψ‖² + p|ψ₁ − ψ₂|²`.
    pub fn norm_m1_sq(&self, q: &QgState) -> f64 {
        let psi = self.invert(q);
        let d = psi.psi1.sub(&psi.psi2);
        self.layer_inner((&psi.psi1, &psi.psi2), (&psi.psi1, &psi.psi2), 1.0) + self.params.p() * d.norm_sq(0.0)
    }

    /// `|||q|||²₀ = |Δψ|² + p‖ψ₁ − ψ₂‖²`.
    pub fn norm_0_sq(&self, q: &QgState) -> f64 {
        let psi = self.invert(q);
        let d = psi.psi1.sub(&psi.psi2);
        self.layer_inner((&psi.psi1, &psi.psi2), (&psi.psi1, &psi.psi2), 2.0) + self.params.p() * d.norm_sq(1.0)
    }

    /// `1 + 2λ₁⁻¹ max(F₁, F₂)`.
    pub fn c0(&self) -> f64 {
        1.0 + 2.0 * self.params.f1.max(self.params.f2) / self.grid.lambda1()
    }

    /// `T_Q = h₁ Σ_k q_k (Ã_k⁻¹)₁₁` with `Ã = −Δ − M`: the Itô correction of
    /// `|||q|||²₋₁` under noise on the upper layer.
    pub fn t_q(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.grid.len() {
            let q = self.noise.q(i);
            if q > 0.0 {
                acc += q * -self.inverse[i][0];
            }
        }
        self.params.h1 * acc
    }

    /// `B(ψ, ξ)` for arbitrary layer pairs.
    pub fn bilinear(&self, psi: &Streamfunction, xi: &Streamfunction) -> (SpectralField, SpectralField) {
        let mut ws = self.workspace();
        self.bilinear_into(psi.psi1.coeffs(), psi.psi2.coeffs(), xi.psi1.coeffs(), xi.psi2.coeffs(), &mut ws);
        let mut b1 = SpectralField::zeros(&self.grid);
        let mut b2 = SpectralField::zeros(&self.grid);
        b1.coeffs_mut().copy_from_slice(&ws.b1);
        b2.coeffs_mut().copy_from_slice(&ws.b2);
        (b1, b2)
    }

    /// Fills `ws.b1`, `ws.b2`; returns `max |∇ψ|` over both layers.
    fn bilinear_into(
        &self,
        p1: &[Complex64],
        p2: &[Complex64],
        x1: &[Complex64],
        x2: &[Complex64],
        ws: &mut QgWorkspace,
    ) -> f64 {
        let (f1, f2) = (self.params.f1, self.params.f2);
        for i in 0..self.grid.len() {
            let l = self.grid.lambda(i);
            ws.c1[i] = -x1[i] * l + x2[i] * f1;
            ws.c2[i] = -x2[i] * l + x1[i] * f2;
        }
        self.grid.jacobian_pair(p1, &ws.c1, p2, &ws.c2, &mut ws.b1, &mut ws.b2, &mut ws.jac)
    }

    /// Itô drift of `|||q|||²₋₁`:
    /// `−2ν|Δψ|² − 2h₁⟨f(a), ψ₁⟩ − 2r h₂‖ψ₂‖² + T_Q`.
    pub fn energy_drift(&self, q: &QgState, a: f64) -> f64 {
        let psi = self.invert(q);
        let f = self.forcing.at(a);
        -2.0 * self.params.nu * self.layer_inner((&psi.psi1, &psi.psi2), (&psi.psi1, &psi.psi2), 2.0)
            - 2.0 * self.params.h1 * f.inner(&psi.psi1, 0.0)
            - 2.0 * self.params.r * self.params.h2 * psi.psi2.norm_sq(1.0)
            + self.t_q()
    }

    fn step_with_control(
        &self,
        x: &mut QgState,
        ws: &mut QgWorkspace,
        a: f64,
        rng: &mut StepRng,
        weights: Option<&mut StepWeights>,
        controlled: bool,
    ) -> Result<()> {
        let dt = self.params.dt;
        let g = &*self.grid;
        self.invert_into(x.q1.coeffs(), x.q2.coeffs(), &mut ws.psi1, &mut ws.psi2);
        if self.params.nonlinear {
            let (p1, p2) = (core::mem::take(&mut ws.psi1), core::mem::take(&mut ws.psi2));
            let vmax = self.bilinear_into(&p1, &p2, &p1, &p2, ws);
            ws.psi1 = p1;
            ws.psi2 = p2;
            let courant = vmax * dt / g.spacing();
            if !courant.is_finite() {
                return Err(Error::BlowUp { step: 0 });
            }
            if courant > self.params.max_courant {
                return Err(Error::CflViolation { step: 0, courant });
            }
        } else {
            ws.b1.iter_mut().for_each(|c| *c = ZERO);
            ws.b2.iter_mut().for_each(|c| *c = ZERO);
        }
        if ws.force_at != Some(a) {
            self.forcing.write_at(a, &mut ws.force);
            ws.force_at = Some(a);
        }
        self.noise.sample_into(dt, rng, &mut ws.dw);
        let beta = self.params.beta;
        let (q1, q2) = (x.q1.coeffs_mut(), x.q2.coeffs_mut());
        for i in 0..g.len() {
            if !g.is_retained(i) {
                continue;
            }
            let ikx = Complex64::new(0.0, g.wavenumber(i).0);
            let mut e1 = -ws.b1[i] - ikx * beta * ws.psi1[i] + ws.force[i];
            let e2 = -ws.b2[i] - ikx * beta * ws.psi2[i];
            if controlled {
                e1 += ws.control[i];
            }
            let r1 = q1[i] + e1 * dt + ws.dw[i];
            let r2 = q2[i] + e2 * dt;
            (q1[i], q2[i]) = mat_vec(&self.resolvent[i], r1, r2);
        }
        x.t += dt;
        if let Some(wt) = weights {
            let dir = self.forcing.direction().coeffs();
            if !self.dir_in_range {
                self.forcing.check_range(&self.noise)?;
            }
            let pair = self.noise.pair(dir, &ws.dw, None);
            if let Ok(d) = self.forcing.amplitude_derivative() {
                wt.score += d * pair;
            }
            if let Some(alt) = wt.alternative {
                let s = self.forcing.amplitude(alt) - self.forcing.amplitude(a);
                if s != 0.0 {
                    let dq = s * s * self.noise.cameron_martin_sq(dir, None) * dt;
                    wt.log_ratio += s * pair - 0.5 * dq;
                    wt.quad += dq;
                }
            }
        }
        Ok(())
    }

    /// Advances `x` and `y` with the same noise; `y`'s upper layer is also
    /// driven by `r·Π_n(ψ₁(x) − ψ₁(y))`.
    pub fn coupled_advance(
        &self,
        x: &mut QgState,
        y: &mut QgState,
        ws: &mut QgWorkspace,
        a: f64,
        n: usize,
        rng: &mut StepRng,
    ) -> Result<()> {
        let (px, py) = (self.invert(x), self.invert(y));
        let diff = px.psi1.sub(&py.psi1).project_low_modes(n)?;
        for (c, d) in ws.control.iter_mut().zip(diff.coeffs()) {
            *c = d * self.params.r;
        }
        let mut rng_y = rng.clone();
        self.step_with_control(x, ws, a, rng, None, false)?;
        self.step_with_control(y, ws, a, &mut rng_y, None, true)
    }
}

impl Dynamics for TwoLayerQg {
    type State = QgState;
    type Workspace = QgWorkspace;

    fn workspace(&self) -> QgWorkspace {
        let z = vec![ZERO; self.grid.len()];
        QgWorkspace {
            jac: JacobianScratch::new(&self.grid),
            psi1: z.clone(),
            psi2: z.clone(),
            c1: z.clone(),
            c2: z.clone(),
            b1: z.clone(),
            b2: z.clone(),
            dw: z.clone(),
            force: z.clone(),
            force_at: None,
            control: z,
        }
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn advance(
        &self,
        x: &mut QgState,
        ws: &mut QgWorkspace,
        a: f64,
        rng: &mut StepRng,
        weights: Option<&mut StepWeights>,
    ) -> Result<()> {
        self.step_with_control(x, ws, a, rng, weights, false)
    }

    fn check_score_available(&self) -> Result<()> {
        self.forcing.check_range(&self.noise)?;
        self.forcing.amplitude_derivative().map(|_| ())
    }

    fn is_finite(&self, x: &QgState) -> bool {
        x.is_finite()
    }
}

impl StateMetric<QgState> for TwoLayerQg {
    fn distance(&self, x: &QgState, y: &QgState) -> f64 {
        libm::sqrt(self.norm_m1_sq(&x.sub(y)))
    }

    fn h_norm_sq(&self, x: &QgState) -> f64 {
        self.norm_m1_sq(x)
    }

    fn v_norm_sq(&self, x: &QgState) -> f64 {
        self.norm_0_sq(x)
    }
}

impl crate::dynamics::Coupled for TwoLayerQg {
    fn coupled_advance(
        &self,
        x: &mut QgState,
        y: &mut QgState,
        ws: &mut QgWorkspace,
        a: f64,
        n: usize,
        rng: &mut StepRng,
    ) -> Result<()> {
        TwoLayerQg::coupled_advance(self, x, y, ws, a, n, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Trajectory;
    use crate::rng::SeqRng;
    use core::f64::consts::PI;

    fn random_field(g: &Arc<Grid>, r: &mut SeqRng) -> SpectralField {
        let mut f = SpectralField::zeros(g);
        for &i in g.canonical() {
            let (m, n) = g.wavevector(i);
            let amp = 1.0 / (1.0 + g.lambda(i));
            f.set(m, n, Complex64::new(amp * r.normal(), amp * r.normal())).unwrap();
        }
        f
    }

    fn model(p: QgParams, k: usize) -> TwoLayerQg {
        let g = Grid::new(2.0 * PI, k).unwrap();
        TwoLayerQg::new(&g, p, NoiseSpec::zero(&g), ForcingFamily::zero(&g)).unwrap()
    }

    #[test]
    fn inversion_worked_example() {
        let m = model(QgParams::symmetric(0.1, 1.0, 0.0, 1.0, 1e-3), 16);
        let g = m.grid().clone();
        let q1 = SpectralField::from_modes(&g, &[(1, 0, Complex64::new(1.0, 0.0))]).unwrap();
        let psi = m.invert(&QgState::new(q1, SpectralField::zeros(&g)));
        assert!((psi.psi1.get(1, 0).unwrap() - Complex64::new(-2.0 / 3.0, 0.0)).norm() < 1e-15);
        assert!((psi.psi2.get(1, 0).unwrap() - Complex64::new(-1.0 / 3.0, 0.0)).norm() < 1e-15);
        let zero = m.invert(&QgState::zero(&g));
        assert_eq!(zero.psi1, SpectralField::zeros(&g));
    }

    #[test]
    fn equal_layers_are_barotropic() {
        let mut p = QgParams::symmetric(0.1, 1.0, 0.0, 2.0, 1e-3);
        p.h1 = 2.0;
        p.f1 = 1.0;
        let m = model(p, 16);
        let mut r = SeqRng::new(1);
        let psi = random_field(m.grid(), &mut r);
        let s = Streamfunction { psi1: psi.clone(), psi2: psi.clone() };
        let q = m.synthesize(&s);
        let back = m.invert(&q);
        assert!(back.psi1.sub(&back.psi2).norm_sq(0.0) < 1e-28);
        let want = m.layer_inner((&psi, &psi), (&psi, &psi), 1.0);
        assert!((m.norm_m1_sq(&q) - want).abs() < 1e-13 * want);
    }

    #[test]
    fn rejects_unbalanced_coupling() {
        let mut p = QgParams::symmetric(0.1, 1.0, 0.0, 1.0, 1e-3);
        p.h1 = 2.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn structural_identities() {
        let mut p = QgParams::symmetric(0.05, 1.0, 1.0, 3.0, 1e-3);
        p.h1 = 0.5;
        p.f1 = 6.0;
        let m = model(p, 16);
        let mut r = SeqRng::new(7);
        let c0 = m.c0();
        let l1 = m.grid().lambda1();
        for _ in 0..100 {
            let q = QgState::new(random_field(m.grid(), &mut r), random_field(m.grid(), &mut r));
            let psi = m.invert(&q);
            // Round trip.
            let back = m.synthesize(&psi);
            let scale = q.q1.norm_sq(0.0) + q.q2.norm_sq(0.0);
            assert!(back.sub(&q).q1.norm_sq(0.0) + back.sub(&q).q2.norm_sq(0.0) < 1e-26 * scale);
            let n1 = m.norm_m1_sq(&q);
            let n0 = m.norm_0_sq(&q);
            let qpsi = m.layer_inner((&q.q1, &q.q2), (&psi.psi1, &psi.psi2), 0.0);
            let mut lap1 = psi.psi1.clone();
            let mut lap2 = psi.psi2.clone();
            lap1.apply_power(1.0);
            lap2.apply_power(1.0);
            // Δψ = −λψ, so (q, Δψ) = −(q, λψ).
            let qlap = -m.layer_inner((&q.q1, &q.q2), (&lap1, &lap2), 0.0);
            assert!((-qpsi - n1).abs() < 1e-11 * n1);
            assert!((qlap - n0).abs() < 1e-11 * n0);
            let h1 = m.layer_inner((&psi.psi1, &psi.psi2), (&psi.psi1, &psi.psi2), 1.0);
            assert!(h1 <= n1 * (1.0 + 1e-12) && n1 <= c0 * h1 * (1.0 + 1e-12));
            assert!(n1 <= n0 / l1 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn bilinear_antisymmetry() {
        let mut p = QgParams::symmetric(0.05, 1.0, 1.0, 3.0, 1e-3);
        p.h2 = 3.0;
        p.f2 = 1.0;
        let m = model(p, 16);
        let mut r = SeqRng::new(11);
        for _ in 0..30 {
            let mk =
                |r: &mut SeqRng| Streamfunction { psi1: random_field(m.grid(), r), psi2: random_field(m.grid(), r) };
            let (psi, xi, phi) = (mk(&mut r), mk(&mut r), mk(&mut r));
            let (b1, b2) = m.bilinear(&psi, &xi);
            let (c1, c2) = m.bilinear(&phi, &xi);
            let lhs = m.layer_inner((&b1, &b2), (&phi.psi1, &phi.psi2), 0.0);
            let rhs = m.layer_inner((&c1, &c2), (&psi.psi1, &psi.psi2), 0.0);
            let scale = libm::sqrt(b1.norm_sq(0.0) + b2.norm_sq(0.0));
            assert!((lhs + rhs).abs() < 1e-11 * scale.max(1.0));
            let zero = m.layer_inner((&b1, &b2), (&psi.psi1, &psi.psi2), 0.0);
            assert!(zero.abs() < 1e-11 * scale.max(1.0));
        }
    }

    #[test]
    fn parallel_single_modes_do_not_interact() {
        let m = model(QgParams::symmetric(0.05, 1.0, 0.0, 1.0, 1e-3), 16);
        let g = m.grid().clone();
        let a = SpectralField::from_modes(&g, &[(2, 1, Complex64::new(0.3, 0.2))]).unwrap();
        let mut b = a.clone();
        b.scale(-1.7);
        let s = Streamfunction { psi1: a, psi2: b };
        let (b1, b2) = m.bilinear(&s, &s);
        assert!(b1.norm_sq(0.0) < 1e-28 && b2.norm_sq(0.0) < 1e-28);
    }

    #[test]
    fn barotropic_mode_decays_by_implicit_relation() {
        let (nu, dt) = (0.05, 0.01);
        let m = model(QgParams::symmetric(nu, 0.0, 0.0, 1.0, dt), 16);
        let g = m.grid().clone();
        let psi = SpectralField::from_modes(&g, &[(1, 1, Complex64::new(1.0, 0.5))]).unwrap();
        let q0 = m.synthesize(&Streamfunction { psi1: psi.clone(), psi2: psi });
        let mut t = Trajectory::new(&m, q0.clone(), 0, 0);
        t.run(0.0, 100).unwrap();
        // Equal layers: q = −λψ and dq/dt = νλ²ψ = −νλ q, stepped by backward Euler.
        let l = 2.0;
        let want = q0.q1.get(1, 1).unwrap() * libm::pow(1.0 / (1.0 + dt * nu * l), 100.0);
        assert!((t.state().q1.get(1, 1).unwrap() - want).norm() < 1e-13);
        assert!((t.state().q2.get(1, 1).unwrap() - want).norm() < 1e-13);
    }

    #[test]
    fn decoupled_lower_layer_runs_alone() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let noise = NoiseSpec::power_law(&g, 0.5, 1.0, 3.0).unwrap();
        let p = QgParams::symmetric(0.05, 0.3, 0.0, 0.0, 1e-3);
        let coupled = TwoLayerQg::new(&g, p, noise, ForcingFamily::zero(&g)).unwrap();
        // The same lower layer with the upper layer left quiet.
        let quiet = TwoLayerQg::new(&g, p, NoiseSpec::zero(&g), ForcingFamily::zero(&g)).unwrap();
        let mut r = SeqRng::new(3);
        let x0 = QgState::new(random_field(&g, &mut r), random_field(&g, &mut r));
        let y0 = QgState::new(SpectralField::zeros(&g), x0.q2.clone());
        let mut a = Trajectory::new(&coupled, x0, 4, 0);
        let mut b = Trajectory::new(&quiet, y0, 4, 0);
        a.run(0.0, 200).unwrap();
        b.run(0.0, 200).unwrap();
        // Equal up to the round-off that packing both layers into one
        // transform lets leak between them.
        let err = a.state().q2.sub(&b.state().q2).norm_sq(0.0);
        assert!(libm::sqrt(err) < 1e-13 * libm::sqrt(b.state().q2.norm_sq(0.0)));
    }

    #[test]
    fn one_step_energy_drift() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let noise = NoiseSpec::power_law(&g, 0.2, 1.0, 3.0).unwrap();
        let f = SpectralField::from_modes(&g, &[(1, 1, Complex64::new(0.4, 0.1))]).unwrap();
        let fam = ForcingFamily::linear(f, SpectralField::zeros(&g)).unwrap();
        let mut p = QgParams::symmetric(0.02, 0.5, 0.7, 2.0, 1e-4);
        p.nonlinear = true;
        let m = TwoLayerQg::new(&g, p, noise, fam).unwrap();
        let mut r = SeqRng::new(5);
        let x = QgState::new(random_field(&g, &mut r), random_field(&g, &mut r));
        let v0 = m.norm_m1_sq(&x);
        let drift = m.energy_drift(&x, 0.0);
        // Average the one-step increment over many noise draws.
        let mut acc = crate::stats::Welford::new();
        let mut ws = m.workspace();
        for s in 0..4000 {
            let mut y = x.clone();
            m.advance(&mut y, &mut ws, 0.0, &mut StepRng::new(6, 0, s), None).unwrap();
            acc.push((m.norm_m1_sq(&y) - v0) / p.dt);
        }
        let tol = 3.0 * acc.sem() + 0.02 * drift.abs();
        assert!((acc.mean() - drift).abs() < tol, "{} ± {} vs {drift}", acc.mean(), acc.sem());
    }

    #[test]
    fn coupled_identical_states_stay_identical() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let noise = NoiseSpec::power_law(&g, 0.5, 1.0, 3.0).unwrap();
        let m = TwoLayerQg::new(&g, QgParams::symmetric(0.05, 1.0, 0.5, 1.0, 1e-3), noise, ForcingFamily::zero(&g))
            .unwrap();
        let mut r = SeqRng::new(8);
        let x0 = QgState::new(random_field(&g, &mut r), random_field(&g, &mut r));
        let (mut x, mut y) = (x0.clone(), x0);
        let mut ws = m.workspace();
        for s in 0..50 {
            m.coupled_advance(&mut x, &mut y, &mut ws, 0.0, 12, &mut StepRng::new(1, 0, s)).unwrap();
        }
        assert_eq!(x, y);
    }
}

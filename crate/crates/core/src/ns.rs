//! Two-dimensional stochastic Navier–Stokes in vorticity form,
//!
//! `dω + (u·∇ω − νΔω) dt = f(a) dt + dW`,  `u = ∇⊥(−Δ)⁻¹ω`,
//!
//! integrated by exponential Euler–Maruyama: the viscous part exactly, the
//! advection explicitly from the start of the step.

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

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsParams {
    /// Kinematic viscosity `ν`.
    pub nu: f64,
    pub dt: f64,
    /// Step-size policy: `dt ≤ stability / (ν λ_max)`.
    pub stability: f64,
    /// Largest admissible Courant number `dt·max|u|/Δx`.
    pub max_courant: f64,
    /// Advection on (the physical model) or off (a linear Ornstein–Uhlenbeck field).
    pub nonlinear: bool,
}

impl NsParams {
    pub fn new(nu: f64, dt: f64) -> Self {
        NsParams { nu, dt, stability: 0.1, max_courant: 1.0, nonlinear: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsState {
    pub omega: SpectralField,
    pub t: f64,
}

impl NsState {
    pub fn new(omega: SpectralField) -> Self {
        NsState { omega, t: 0.0 }
    }

    pub fn zero(grid: &Arc<Grid>) -> Self {
        Self::new(SpectralField::zeros(grid))
    }

    /// Kinetic energy `|u|² = Σ_k |ω̂_k|²/λ_k` (box-averaged).
    pub fn energy(&self) -> f64 {
        self.omega.norm_sq(-1.0)
    }

    /// Enstrophy `‖u‖² = |ω|²`.
    pub fn enstrophy(&self) -> f64 {
        self.omega.norm_sq(0.0)
    }
}

impl StateMetric<NsState> for NavierStokes {
    fn distance(&self, x: &NsState, y: &NsState) -> f64 {
        libm::sqrt(x.omega.sub(&y.omega).norm_sq(-1.0))
    }

    fn h_norm_sq(&self, x: &NsState) -> f64 {
        x.energy()
    }

    fn v_norm_sq(&self, x: &NsState) -> f64 {
        x.enstrophy()
    }
}

impl SpectralState for NsState {
    fn layer(&self, i: usize) -> Option<&SpectralField> {
        (i == 0).then_some(&self.omega)
    }
}

pub struct NsWorkspace {
    jac: JacobianScratch,
    psi: Vec<Complex64>,
    nl: Vec<Complex64>,
    dw: Vec<Complex64>,
    force: Vec<Complex64>,
    force_at: Option<f64>,
    control: Vec<Complex64>,
}

/// The discretized stochastic Navier–Stokes equation on one grid.
#[derive(Debug, Clone)]
pub struct NavierStokes {
    grid: Arc<Grid>,
    params: NsParams,
    noise: NoiseSpec,
    forcing: ForcingFamily,
    /// `e^{−νλdt}`.
    decay: Vec<f64>,
    /// `(1 − e^{−νλdt})/(νλ)`, the integrating factor applied to forcing.
    phi: Vec<f64>,
    /// `(e^{νλdt} − 1)/(νλdt)`: a forcing perturbation `δf` shifts the step
    /// exactly like a noise shift `gain·δf·dt`.
    gain: Vec<f64>,
    dir_in_range: bool,
}

impl NavierStokes {
    pub fn new(grid: &Arc<Grid>, params: NsParams, noise: NoiseSpec, forcing: ForcingFamily) -> Result<Self> {
        if !(params.nu > 0.0 && params.nu.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!("viscosity {} must be positive", params.nu)));
        }
        if !(params.dt > 0.0 && params.dt.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!("time step {} must be positive", params.dt)));
        }
        let limit = params.stability / (params.nu * grid.lambda_max());
        if params.dt > limit {
            return Err(Error::StepTooLarge { dt: params.dt, limit });
        }
        if noise.grid().as_ref() != grid.as_ref() {
            return Err(Error::GridMismatch);
        }
        forcing.base().same_grid(&SpectralField::zeros(grid))?;
        let n = grid.len();
        let (mut decay, mut phi, mut gain) = (vec![0.0; n], vec![0.0; n], vec![1.0; n]);
        for i in 0..n {
            if !grid.is_retained(i) {
                continue;
            }
            let z = params.nu * grid.lambda(i);
            decay[i] = libm::exp(-z * params.dt);
            phi[i] = -libm::expm1(-z * params.dt) / z;
            gain[i] = libm::expm1(z * params.dt) / (z * params.dt);
        }
        let dir_in_range = forcing.in_range(&noise);
        Ok(NavierStokes { grid: grid.clone(), params, noise, forcing, decay, phi, gain, dir_in_range })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn params(&self) -> &NsParams {
        &self.params
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn forcing(&self) -> &ForcingFamily {
        &self.forcing
    }

    /// Trace of the noise seen by the velocity, `Σ_k q_k/λ_k`.
    pub fn velocity_noise_trace(&self) -> f64 {
        self.noise.weighted_trace(-1.0)
    }

    /// Per-mode factors relating forcing perturbations to noise shifts.
    pub fn score_gain(&self) -> &[f64] {
        &self.gain
    }

    /// Advection term `−u·∇ω = J(ψ, ω)` with `ψ = (−Δ)⁻¹ω`, dealiased.
    pub fn nonlinear_term(&self, omega: &SpectralField) -> SpectralField {
        let mut ws = self.workspace();
        let mut out = SpectralField::zeros(&self.grid);
        self.nonlinear_into(omega.coeffs(), &mut ws);
        out.coeffs_mut().copy_from_slice(&ws.nl);
        out
    }

    /// Fills `ws.nl`; returns `max |u|`.
    fn nonlinear_into(&self, omega: &[Complex64], ws: &mut NsWorkspace) -> f64 {
        for (i, p) in ws.psi.iter_mut().enumerate() {
            *p = if self.grid.is_retained(i) { omega[i] / self.grid.lambda(i) } else { ZERO };
        }
        self.grid.jacobian(&ws.psi, omega, &mut ws.nl, &mut ws.jac)
    }

    fn step_with_control(
        &self,
        x: &mut NsState,
        ws: &mut NsWorkspace,
        a: f64,
        rng: &mut StepRng,
        weights: Option<&mut StepWeights>,
        controlled: bool,
    ) -> Result<()> {
        let dt = self.params.dt;
        if self.params.nonlinear {
            let vmax = self.nonlinear_into(x.omega.coeffs(), ws);
            let courant = vmax * dt / self.grid.spacing();
            if !courant.is_finite() {
                return Err(Error::BlowUp { step: 0 });
            }
            if courant > self.params.max_courant {
                return Err(Error::CflViolation { step: 0, courant });
            }
        } else {
            ws.nl.iter_mut().for_each(|c| *c = ZERO);
        }
        if ws.force_at != Some(a) {
            self.forcing.write_at(a, &mut ws.force);
            ws.force_at = Some(a);
        }
        self.noise.sample_into(dt, rng, &mut ws.dw);
        let w = x.omega.coeffs_mut();
        for i in 0..self.grid.len() {
            if !self.grid.is_retained(i) {
                continue;
            }
            let mut drive = ws.nl[i] + ws.force[i];
            if controlled {
                drive += ws.control[i];
            }
            w[i] = self.decay[i] * (w[i] + ws.dw[i]) + self.phi[i] * drive;
        }
        x.t += dt;
        if let Some(wt) = weights {
            self.weigh(wt, a, &ws.dw)?;
        }
        Ok(())
    }

    fn weigh(&self, wt: &mut StepWeights, a: f64, dw: &[Complex64]) -> Result<()> {
        let dir = self.forcing.direction().coeffs();
        if !self.dir_in_range {
            self.forcing.check_range(&self.noise)?;
        }
        let pair = self.noise.pair(dir, dw, Some(&self.gain));
        if let Ok(d) = self.forcing.amplitude_derivative() {
            wt.score += d * pair;
        }
        if let Some(alt) = wt.alternative {
            let s = self.forcing.amplitude(alt) - self.forcing.amplitude(a);
            if s != 0.0 {
                let dq = s * s * self.noise.cameron_martin_sq(dir, Some(&self.gain)) * self.params.dt;
                wt.log_ratio += s * pair - 0.5 * dq;
                wt.quad += dq;
            }
        }
        Ok(())
    }

    /// Advances `x` and `y` with the same noise; `y` is additionally driven by
    /// `(νλ_n/2)·Π_n(ω_x − ω_y)`, which pulls its low modes onto those of `x`.
    pub fn coupled_advance(
        &self,
        x: &mut NsState,
        y: &mut NsState,
        ws: &mut NsWorkspace,
        a: f64,
        n: usize,
        rng: &mut StepRng,
    ) -> Result<()> {
        let gain = 0.5 * self.params.nu * self.grid.basis_lambda(n);
        let diff = x.omega.sub(&y.omega).project_low_modes(n)?;
        for (c, d) in ws.control.iter_mut().zip(diff.coeffs()) {
            *c = d * gain;
        }
        let mut rng_y = rng.clone();
        self.step_with_control(x, ws, a, rng, None, false)?;
        self.step_with_control(y, ws, a, &mut rng_y, None, true)
    }

    /// `b(u, v, w) = ⟨(u·∇)v, w⟩` for velocities given by their vorticities.
    pub fn trilinear(&self, u: &SpectralField, v: &SpectralField, w: &SpectralField) -> f64 {
        let g = &*self.grid;
        let vel = |f: &SpectralField| -> (SpectralField, SpectralField) {
            let (mut a, mut b) = (f.clone(), f.clone());
            for (i, (x, y)) in a.coeffs_mut().iter_mut().zip(b.coeffs_mut().iter_mut()).enumerate() {
                if !g.is_retained(i) {
                    continue;
                }
                let (kx, ky) = g.wavenumber(i);
                let l = g.lambda(i);
                *x *= Complex64::new(0.0, ky / l);
                *y *= Complex64::new(0.0, -kx / l);
            }
            (a, b)
        };
        let deriv = |f: &SpectralField, along_x: bool| -> Vec<f64> {
            let mut h = f.clone();
            for (i, c) in h.coeffs_mut().iter_mut().enumerate() {
                let (kx, ky) = g.wavenumber(i);
                *c *= Complex64::new(0.0, if along_x { kx } else { ky });
            }
            h.to_physical()
        };
        let (u1, u2) = vel(u);
        let (v1, v2) = vel(v);
        let (w1, w2) = vel(w);
        let (u1, u2) = (u1.to_physical(), u2.to_physical());
        let (w1, w2) = (w1.to_physical(), w2.to_physical());
        let (v1x, v1y, v2x, v2y) = (deriv(&v1, true), deriv(&v1, false), deriv(&v2, true), deriv(&v2, false));
        let mut acc = 0.0;
        for i in 0..g.len() {
            acc += (u1[i] * v1x[i] + u2[i] * v1y[i]) * w1[i] + (u1[i] * v2x[i] + u2[i] * v2y[i]) * w2[i];
        }
        acc / g.len() as f64
    }
}

impl Dynamics for NavierStokes {
    type State = NsState;
    type Workspace = NsWorkspace;

    fn workspace(&self) -> NsWorkspace {
        let z = vec![ZERO; self.grid.len()];
        NsWorkspace {
            jac: JacobianScratch::new(&self.grid),
            psi: z.clone(),
            nl: z.clone(),
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
        x: &mut NsState,
        ws: &mut NsWorkspace,
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

    fn is_finite(&self, x: &NsState) -> bool {
        x.omega.is_finite()
    }
}

impl crate::dynamics::Coupled for NavierStokes {
    fn coupled_advance(
        &self,
        x: &mut NsState,
        y: &mut NsState,
        ws: &mut NsWorkspace,
        a: f64,
        n: usize,
        rng: &mut StepRng,
    ) -> Result<()> {
        NavierStokes::coupled_advance(self, x, y, ws, a, n, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Trajectory;
    use crate::rng::SeqRng;
    use crate::stats::Welford;
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

    fn model(k: usize, nu: f64, dt: f64, noise: Option<NoiseSpec>) -> NavierStokes {
        let g = Grid::new(2.0 * PI, k).unwrap();
        let noise = noise.unwrap_or_else(|| NoiseSpec::zero(&g));
        NavierStokes::new(&g, NsParams::new(nu, dt), noise, ForcingFamily::zero(&g)).unwrap()
    }

    #[test]
    fn single_mode_has_no_self_advection() {
        let m = model(16, 0.1, 0.01, None);
        let w = SpectralField::from_modes(m.grid(), &[(2, 1, Complex64::new(0.7, -0.2))]).unwrap();
        let n = m.nonlinear_term(&w);
        assert!(n.norm_sq(0.0) < 1e-28);
    }

    #[test]
    fn advection_conserves_energy_and_enstrophy() {
        let m = model(16, 0.1, 0.01, None);
        let mut r = SeqRng::new(17);
        for _ in 0..50 {
            let w = random_field(m.grid(), &mut r);
            let n = m.nonlinear_term(&w);
            let scale = n.norm_sq(0.0).sqrt() * w.norm_sq(0.0).sqrt();
            assert!(n.inner(&w, -1.0).abs() < 1e-11 * scale.max(1.0));
            assert!(n.inner(&w, 0.0).abs() < 1e-11 * scale.max(1.0));
        }
    }

    #[test]
    fn enstrophy_neutrality_by_quadrature() {
        // ⟨−u·∇ω, ω⟩ evaluated directly on the collocation points.
        let m = model(16, 0.1, 0.01, None);
        let mut r = SeqRng::new(4);
        let w = random_field(m.grid(), &mut r);
        let b = m.trilinear(&w, &w, &w);
        assert!(b.abs() < 1e-11 * w.norm_sq(-1.0).max(1.0) * 10.0);
        let n = m.nonlinear_term(&w);
        let (np, wp) = (n.to_physical(), w.to_physical());
        let quad: f64 = np.iter().zip(&wp).map(|(a, b)| a * b).sum::<f64>() / np.len() as f64;
        assert!(quad.abs() < 1e-11);
    }

    #[test]
    fn step_policy_is_enforced() {
        let g = Grid::new(2.0 * PI, 32).unwrap();
        let p = NsParams::new(0.1, 0.1);
        let err = NavierStokes::new(&g, p, NoiseSpec::zero(&g), ForcingFamily::zero(&g)).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn free_decay_of_one_mode() {
        let m = model(16, 0.2, 0.004, None);
        let c = Complex64::new(0.3, 0.4);
        let w = SpectralField::from_modes(m.grid(), &[(1, 2, c)]).unwrap();
        let mut t = Trajectory::new(&m, NsState::new(w), 1, 0);
        t.run(0.0, 250).unwrap();
        let got = t.state().omega.get(1, 2).unwrap();
        let want = c * libm::exp(-0.2 * 5.0 * 250.0 * 0.004);
        assert!((got - want).norm() < 1e-14);
    }

    #[test]
    fn forced_mode_reaches_balance() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let f = SpectralField::from_modes(&g, &[(0, 2, Complex64::new(0.5, 0.0))]).unwrap();
        let fam = ForcingFamily::linear(f, SpectralField::zeros(&g)).unwrap();
        let m = NavierStokes::new(&g, NsParams::new(0.5, 0.004), NoiseSpec::zero(&g), fam).unwrap();
        let mut t = Trajectory::new(&m, NsState::zero(&g), 1, 0);
        t.run(0.0, 5000).unwrap();
        let got = t.state().omega.get(0, 2).unwrap();
        assert!((got - Complex64::new(0.5 / (0.5 * 4.0), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn coupling_identical_states_stay_identical() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let noise = NoiseSpec::power_law(&g, 0.5, 1.0, 3.0).unwrap();
        let m = model(16, 0.1, 0.01, Some(noise));
        let mut r = SeqRng::new(2);
        let w = random_field(m.grid(), &mut r);
        let (mut x, mut y) = (NsState::new(w.clone()), NsState::new(w));
        let mut ws = m.workspace();
        for s in 0..100 {
            m.coupled_advance(&mut x, &mut y, &mut ws, 0.0, 10, &mut StepRng::new(3, 0, s)).unwrap();
        }
        assert_eq!(x, y);
    }

    #[test]
    fn linear_regime_matches_ou_variance() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let noise = NoiseSpec::zero(&g).with_override(2, 0, 0.4).unwrap();
        let mut p = NsParams::new(0.5, 0.004);
        p.nonlinear = false;
        let m = NavierStokes::new(&g, p, noise, ForcingFamily::zero(&g)).unwrap();
        let i = g.index(2, 0).unwrap();
        let mut t = Trajectory::new(&m, NsState::zero(&g), 9, 0);
        t.run(0.0, 1000).unwrap();
        // Samples two relaxation times apart are nearly independent.
        let mut w = Welford::new();
        for _ in 0..20_000 {
            t.run(0.0, 250).unwrap();
            w.push(t.state().omega.coeffs()[i].norm_sqr());
        }
        let want = 0.4 / (2.0 * 0.5 * 4.0);
        assert!((w.mean() - want).abs() < 3.0 * w.sem(), "{} ± {} vs {want}", w.mean(), w.sem());
    }
}

//! Assumption audits: the parameter tables that make the abstract
//! hypotheses concrete for each model, the Hölder exponent `α₀` they imply,
//! the spectral-gap condition on bottom friction, and empirical diagnostics
//! (Lyapunov drift, the tail of the energy excursion, exponential moments,
//! coupling decay, the advection constant `k₀`).
//!
//! Audits never stop a simulation; they only decide whether the
//! likelihood-ratio estimators may run (see [`crate::response::Gate`]).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::dynamics::{Coupled, Dynamics, StateMetric, Trajectory};
use crate::exec::Executor;
use crate::ns::NavierStokes;
use crate::qg::{Streamfunction, TwoLayerQg};
use crate::response::Gate;
use crate::rng::{SeqRng, StepRng};
use crate::spectral::{Grid, SpectralField};
use crate::stats::{linear_fit, Estimate, Welford};
use crate::{Error, Result};

/// The constants of the abstract assumptions for one model and one choice
/// of the free parameter `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionAParams {
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa_eps: f64,
    pub gamma_eps: f64,
    pub k_eps: f64,
    pub gamma: f64,
    pub upsilon: f64,
    pub alpha0: f64,
    /// `κ₀κ₂ > κ₁κ_ε`.
    pub feasible: bool,
}

impl AssumptionAParams {
    fn assemble(kappa0: f64, kappa1: f64, kappa2: f64, kappa_eps: f64, gamma_eps: f64, gamma: f64) -> Result<Self> {
        let (upsilon, alpha0) = alpha0(kappa1, kappa2, gamma)?;
        Ok(AssumptionAParams {
            kappa0,
            kappa1,
            kappa2,
            kappa_eps,
            gamma_eps,
            k_eps: kappa_eps,
            gamma,
            upsilon,
            alpha0,
            feasible: kappa0 * kappa2 > kappa1 * kappa_eps,
        })
    }
}

/// `υ = κ₁/κ₂` and `α₀ = min(1/2, 2γ/(υ + 2γ))`.
pub fn alpha0(kappa1: f64, kappa2: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(kappa2 > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa_2 = {kappa2} must be positive")));
    }
    if !(gamma > 0.0) || !(kappa1 >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma}, kappa_1 = {kappa1}")));
    }
    let upsilon = kappa1 / kappa2;
    let ratio = if gamma.is_infinite() { 1.0 } else { 2.0 * gamma / (upsilon + 2.0 * gamma) };
    Ok((upsilon, ratio.min(0.5)))
}

/// Navier–Stokes inputs: `trace_q` is the trace of the velocity noise
/// covariance and `f_sup_sq` bounds `‖f(a)‖²₋₁` over the parameter interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsTableInput {
    pub nu: f64,
    pub lambda1: f64,
    pub lambda_n: f64,
    pub trace_q: f64,
    pub f_sup_sq: f64,
    pub gamma: f64,
    pub k0: f64,
}

impl NsTableInput {
    /// `γ` must stay below `νλ₁/Tr Q`.
    pub fn gamma_cap(&self) -> f64 {
        self.nu * self.lambda1 / self.trace_q
    }
}

pub fn derive_params_ns(p: &NsTableInput) -> Result<AssumptionAParams> {
    let kappa2 = p.nu - p.gamma * p.trace_q / p.lambda1;
    if !(kappa2 > 0.0) {
        return Err(Error::InfeasibleGamma { gamma: p.gamma, cap: p.gamma_cap() });
    }
    let kappa_eps = p.trace_q + p.f_sup_sq / p.nu;
    AssumptionAParams::assemble(p.nu * p.lambda_n, p.k0 * p.k0 / p.nu, kappa2, kappa_eps, p.nu * p.lambda1, p.gamma)
}

/// Two-layer inputs: `t_q` is the inverse-weighted noise trace, `f_sup_sq`
/// bounds `‖f(a)‖²₋₂`, and `k_b` is the unspecified constant of the
/// friction condition, supplied by the user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QgTableInput {
    pub nu: f64,
    pub r: f64,
    pub lambda1: f64,
    pub trace_q: f64,
    pub t_q: f64,
    pub h1: f64,
    pub f_sup_sq: f64,
    pub gamma: f64,
    pub k0: f64,
    pub c0: f64,
    pub k_b: f64,
}

impl QgTableInput {
    /// `γ` must stay below `νλ₁²/(2 Tr Q)`.
    pub fn gamma_cap(&self) -> f64 {
        self.nu * self.lambda1 * self.lambda1 / (2.0 * self.trace_q)
    }
}

/// The friction condition `r > (2k_B/ν)(h₁‖f‖²₋₂/ν + T_Q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RCondition {
    pub r: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

impl RCondition {
    pub fn gate(&self) -> Gate {
        if self.satisfied {
            Gate::Verified
        } else {
            Gate::Unmet(format!(
                "bottom friction r = {} does not exceed the spectral-gap threshold {} for the supplied k_B",
                self.r, self.threshold
            ))
        }
    }
}

pub fn derive_params_qg(p: &QgTableInput) -> Result<(AssumptionAParams, RCondition)> {
    let kappa2 = p.nu - 2.0 * p.gamma * p.trace_q / (p.lambda1 * p.lambda1);
    if !(kappa2 > 0.0) {
        return Err(Error::InfeasibleGamma { gamma: p.gamma, cap: p.gamma_cap() });
    }
    let kappa_eps = p.t_q + p.h1 * p.f_sup_sq / p.nu;
    let params =
        AssumptionAParams::assemble(p.r, p.k0 * p.k0 / p.nu, kappa2, kappa_eps, p.nu * p.lambda1 / p.c0, p.gamma)?;
    let threshold = 2.0 * p.k_b / p.nu * (p.h1 / p.nu * p.f_sup_sq + p.t_q);
    Ok((params, RCondition { r: p.r, threshold, satisfied: p.r > threshold }))
}

fn random_field(grid: &alloc::sync::Arc<Grid>, rng: &mut SeqRng) -> SpectralField {
    let mut f = SpectralField::zeros(grid);
    for &i in grid.canonical() {
        let (m, n) = grid.wavevector(i);
        let amp = 1.0 / (1.0 + grid.lambda(i));
        let _ = f.set(m, n, Complex64::new(amp * rng.normal(), amp * rng.normal()));
    }
    f
}

/// Largest observed `|b(u, v, u)|/(|u|·‖u‖·‖v‖)` over random pairs.
pub fn estimate_k0_ns(model: &NavierStokes, samples: usize, seed: u64) -> f64 {
    let mut rng = SeqRng::new(seed);
    let g = model.grid();
    (0..samples)
        .map(|_| {
            let u = random_field(g, &mut rng);
            let v = random_field(g, &mut rng);
            let b = model.trilinear(&u, &v, &u);
            libm::fabs(b) / libm::sqrt(u.norm_sq(-1.0) * u.norm_sq(0.0) * v.norm_sq(0.0))
        })
        .fold(0.0, f64::max)
}

/// Largest observed `|(B(ψ, ψ), ξ)|/(‖ψ‖·|Δψ|·|Δξ|)` over random pairs.
pub fn estimate_k0_qg(model: &TwoLayerQg, samples: usize, seed: u64) -> f64 {
    let mut rng = SeqRng::new(seed);
    let g = model.grid();
    (0..samples)
        .map(|_| {
            let psi = Streamfunction { psi1: random_field(g, &mut rng), psi2: random_field(g, &mut rng) };
            let xi = Streamfunction { psi1: random_field(g, &mut rng), psi2: random_field(g, &mut rng) };
            let (b1, b2) = model.bilinear(&psi, &psi);
            let pair = model.layer_inner((&b1, &b2), (&xi.psi1, &xi.psi2), 0.0);
            let n1 = model.layer_inner((&psi.psi1, &psi.psi2), (&psi.psi1, &psi.psi2), 1.0);
            let d2 = model.layer_inner((&psi.psi1, &psi.psi2), (&psi.psi1, &psi.psi2), 2.0);
            let x2 = model.layer_inner((&xi.psi1, &xi.psi2), (&xi.psi1, &xi.psi2), 2.0);
            libm::fabs(pair) / libm::sqrt(n1 * d2 * x2)
        })
        .fold(0.0, f64::max)
}

/// `E V(X_t)` from one starting point at one time, with its fitted value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftPoint {
    pub start: usize,
    pub time: f64,
    pub v0: f64,
    pub mean: Estimate,
    pub fitted: f64,
}

/// Fit of `E V(X_t) ≈ C e^{−γt} V(x) + K(1 − e^{−γt})` across starting
/// points; `K` is the long-time level.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub c: f64,
    pub gamma_decay: f64,
    pub k: f64,
    pub points: Vec<DriftPoint>,
    /// Every empirical mean lies below the fit plus 3 SEM (plus the 0.1%
    /// relative floor used in the fit weights).
    pub passes: bool,
    /// Largest `(mean − fit)/SEM` over the points.
    pub worst_excess: f64,
}

fn fit_ck(points: &[DriftPoint], gamma: f64) -> (f64, f64, f64) {
    // Weighted least squares in (C, K) for fixed γ.
    let (mut suu, mut suv, mut svv, mut suy, mut svy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let w = |p: &DriftPoint| 1.0 / (p.mean.sem * p.mean.sem + (1e-3 * p.mean.value) * (1e-3 * p.mean.value) + 1e-300);
    for p in points {
        let e = libm::exp(-gamma * p.time);
        let (u, v, y, wt) = (e * p.v0, 1.0 - e, p.mean.value, w(p));
        suu += wt * u * u;
        suv += wt * u * v;
        svv += wt * v * v;
        suy += wt * u * y;
        svy += wt * v * y;
    }
    let det = suu * svv - suv * suv;
    let (c, k) = if det.abs() > 1e-300 {
        ((suy * svv - svy * suv) / det, (svy * suu - suy * suv) / det)
    } else {
        (suy / suu, 0.0)
    };
    let rss = points
        .iter()
        .map(|p| {
            let e = libm::exp(-gamma * p.time);
            {
                let r = p.mean.value - c * e * p.v0 - k * (1.0 - e);
                w(p) * r * r
            }
        })
        .sum();
    (c, k, rss)
}

/// Empirical Lyapunov drift from at least two starting points observed at
/// at least ten times (given in steps).
#[allow(clippy::too_many_arguments)]
pub fn audit_lyapunov<D, M, E>(
    dynamics: &D,
    metric: &M,
    starts: &[D::State],
    a: f64,
    times: &[u64],
    ensemble: usize,
    seed: u64,
    exec: &E,
) -> Result<DriftReport>
where
    D: Dynamics,
    M: StateMetric<D::State> + Sync,
    E: Executor,
{
    if starts.len() < 2 || times.len() < 10 || ensemble < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{} starting points, {} times, ensemble {ensemble}; need 2, 10 and 2",
            starts.len(),
            times.len()
        )));
    }
    let mut sorted = times.to_vec();
    sorted.sort_unstable();
    let runs = exec.map(starts.len() * ensemble, |task| -> Result<Vec<f64>> {
        let s = task / ensemble;
        let mut t = Trajectory::new(dynamics, starts[s].clone(), seed, task as u32);
        let mut out = Vec::with_capacity(sorted.len());
        for &n in &sorted {
            t.run(a, n - t.step_index())?;
            out.push(metric.h_norm_sq(t.state()));
        }
        Ok(out)
    });
    let runs: Vec<Vec<f64>> = runs.into_iter().collect::<Result<_>>()?;
    let dt = dynamics.dt();
    let mut points = Vec::new();
    for (s, x) in starts.iter().enumerate() {
        let v0 = metric.h_norm_sq(x);
        for (j, &n) in sorted.iter().enumerate() {
            let w: Welford = (0..ensemble).map(|i| runs[s * ensemble + i][j]).collect();
            points.push(DriftPoint {
                start: s,
                time: n as f64 * dt,
                v0,
                mean: Estimate::new(w.mean(), w.sem()),
                fitted: 0.0,
            });
        }
    }
    let t_max = sorted.last().copied().unwrap_or(1).max(1) as f64 * dt;
    let t_min = sorted.iter().copied().find(|&n| n > 0).unwrap_or(1) as f64 * dt;
    let (lo, hi) = (libm::log(1e-3 / t_max), libm::log(1e3 / t_min));
    let objective = |lg: f64| fit_ck(&points, libm::exp(lg)).2;
    let grid = 400;
    let mut best = (lo, f64::INFINITY);
    for i in 0..=grid {
        let lg = lo + (hi - lo) * i as f64 / grid as f64;
        let r = objective(lg);
        if r < best.1 {
            best = (lg, r);
        }
    }
    // Golden-section refinement around the best grid point.
    let step = (hi - lo) / grid as f64;
    let (mut a_, mut b_) = (best.0 - step, best.0 + step);
    let phi = 0.5 * (libm::sqrt(5.0) - 1.0);
    for _ in 0..60 {
        let c = b_ - phi * (b_ - a_);
        let d = a_ + phi * (b_ - a_);
        if objective(c) < objective(d) {
            b_ = d;
        } else {
            a_ = c;
        }
    }
    let gamma_decay = libm::exp(0.5 * (a_ + b_));
    let (c, k, _) = fit_ck(&points, gamma_decay);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut passes = true;
    for p in points.iter_mut() {
        let e = libm::exp(-gamma_decay * p.time);
        p.fitted = c * e * p.v0 + k * (1.0 - e);
        let slack = p.mean.value - p.fitted;
        let tol = 3.0 * p.mean.sem + 1e-3 * libm::fabs(p.fitted);
        if slack > tol {
            passes = false;
        }
        let z = if p.mean.sem > 0.0 {
            slack / p.mean.sem
        } else if slack > 1e-3 * p.fitted.abs() {
            f64::INFINITY
        } else {
            0.0
        };
        worst_excess = worst_excess.max(z);
    }
    Ok(DriftReport { c, gamma_decay, k, points, passes, worst_excess })
}

/// Samples of the energy excursion
/// `Ξ̂ = max_{n ≤ N} (|X_n|² + κ₂ Σ_{k<n} ‖X_k‖² dt − |x|² − κ_ε n dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    /// Sorted ascending.
    pub xi: Vec<f64>,
    pub kappa2: f64,
    pub kappa_eps: f64,
    /// Largest `γ` with `P(Ξ̂ ≥ R) ≤ e^{−2γR}` at every level `R > 0`
    /// exceeded by at least [`TailReport::MIN_EXCEEDANCES`] samples.
    pub gamma_hat: f64,
}

impl TailReport {
    pub const MIN_EXCEEDANCES: usize = 20;

    /// Empirical `P(Ξ̂ ≥ r)`.
    pub fn survival(&self, r: f64) -> f64 {
        let below = self.xi.partition_point(|x| *x < r);
        (self.xi.len() - below) as f64 / self.xi.len() as f64
    }

    fn levels(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.xi.len();
        self.xi
            .iter()
            .enumerate()
            .filter(move |(i, x)| **x > 0.0 && n - i >= Self::MIN_EXCEEDANCES)
            .map(move |(_, &x)| (x, self.survival(x)))
    }

    /// Does the empirical tail respect `e^{−2γR}` at every usable level?
    pub fn holds(&self, gamma: f64) -> bool {
        self.levels().all(|(r, s)| s <= libm::exp(-2.0 * gamma * r))
    }

    fn fit(xi: Vec<f64>, kappa2: f64, kappa_eps: f64) -> Self {
        let mut r = TailReport { xi, kappa2, kappa_eps, gamma_hat: f64::INFINITY };
        r.gamma_hat = r.levels().map(|(x, s)| -libm::log(s) / (2.0 * x)).fold(f64::INFINITY, f64::min);
        r
    }
}

#[allow(clippy::too_many_arguments)]
pub fn audit_tail<D, M, E>(
    dynamics: &D,
    metric: &M,
    x0: &D::State,
    a: f64,
    steps: u64,
    ensemble: usize,
    kappa2: f64,
    kappa_eps: f64,
    seed: u64,
    exec: &E,
) -> Result<TailReport>
where
    D: Dynamics,
    M: StateMetric<D::State> + Sync,
    E: Executor,
{
    let dt = dynamics.dt();
    let v0 = metric.h_norm_sq(x0);
    let xi = exec.map(ensemble, |i| -> Result<f64> {
        let mut t = Trajectory::new(dynamics, x0.clone(), seed, i as u32);
        let (mut integral, mut sup) = (0.0, 0.0f64);
        for n in 1..=steps {
            integral += kappa2 * metric.v_norm_sq(t.state()) * dt;
            t.step(a, None)?;
            sup = sup.max(metric.h_norm_sq(t.state()) + integral - v0 - kappa_eps * n as f64 * dt);
        }
        Ok(sup)
    });
    let mut xi: Vec<f64> = xi.into_iter().collect::<Result<_>>()?;
    xi.sort_by(f64::total_cmp);
    Ok(TailReport::fit(xi, kappa2, kappa_eps))
}

/// `E exp(η|X_t|²)` from one start at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpMomentRow {
    pub eta: f64,
    pub start: usize,
    pub time: f64,
    pub estimate: Estimate,
    /// A single sample carries most of the mass or the average overflowed:
    /// `η` is too large for the estimator.
    pub too_large: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpMomentFit {
    pub eta: f64,
    /// Long-time level, from the last observation time.
    pub c: f64,
    /// Decay rate of the initial-condition dependence, when measurable.
    pub chi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpMomentReport {
    pub rows: Vec<ExpMomentRow>,
    pub fits: Vec<ExpMomentFit>,
}

#[allow(clippy::too_many_arguments)]
pub fn audit_exp_moment<D, M, E>(
    dynamics: &D,
    metric: &M,
    starts: &[D::State],
    a: f64,
    etas: &[f64],
    times: &[u64],
    ensemble: usize,
    seed: u64,
    exec: &E,
) -> Result<ExpMomentReport>
where
    D: Dynamics,
    M: StateMetric<D::State> + Sync,
    E: Executor,
{
    if ensemble < 2 || starts.is_empty() || times.is_empty() {
        return Err(Error::InsufficientSamples("exponential moments need starts, times and an ensemble".into()));
    }
    let mut sorted = times.to_vec();
    sorted.sort_unstable();
    let runs = exec.map(starts.len() * ensemble, |task| -> Result<Vec<f64>> {
        let mut t = Trajectory::new(dynamics, starts[task / ensemble].clone(), seed, task as u32);
        let mut out = Vec::with_capacity(sorted.len());
        for &n in &sorted {
            t.run(a, n - t.step_index())?;
            out.push(metric.h_norm_sq(t.state()));
        }
        Ok(out)
    });
    let runs: Vec<Vec<f64>> = runs.into_iter().collect::<Result<_>>()?;
    let dt = dynamics.dt();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &eta in etas {
        for s in 0..starts.len() {
            for (j, &n) in sorted.iter().enumerate() {
                let vals: Vec<f64> = (0..ensemble).map(|i| libm::exp(eta * runs[s * ensemble + i][j])).collect();
                let w: Welford = vals.iter().copied().collect();
                let total: f64 = vals.iter().sum();
                let max = vals.iter().copied().fold(0.0, f64::max);
                let too_large = !total.is_finite() || (ensemble >= 10 && max > 0.5 * total);
                rows.push(ExpMomentRow {
                    eta,
                    start: s,
                    time: n as f64 * dt,
                    estimate: Estimate::new(w.mean(), w.sem()),
                    too_large,
                });
            }
        }
        let last = sorted.len() - 1;
        let c = rows
            .iter()
            .filter(|r| r.eta == eta && r.time == sorted[last] as f64 * dt)
            .map(|r| r.estimate.value)
            .fold(0.0, f64::max);
        // ln E exp(η|X_t|²) − ln c ≈ η|x|² e^{−χt} for the largest start.
        let big =
            (0..starts.len()).max_by(|&i, &j| metric.h_norm_sq(&starts[i]).total_cmp(&metric.h_norm_sq(&starts[j])));
        let chi = big.and_then(|s| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.eta == eta && r.start == s && !r.too_large)
                .filter_map(|r| {
                    let excess = libm::log(r.estimate.value) - libm::log(c);
                    (excess > 0.0 && excess.is_finite()).then(|| (r.time, libm::log(excess)))
                })
                .unzip();
            linear_fit(&xs, &ys).ok().map(|f| -f.slope)
        });
        fits.push(ExpMomentFit { eta, c, chi });
    }
    Ok(ExpMomentReport { rows, fits })
}

/// `|x − y|²` along a controlled coupling, with the fitted log-slope.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    pub times: Vec<f64>,
    pub distance_sq: Vec<f64>,
    /// Slope of `ln |x − y|²` against time; negative means contraction.
    pub log_slope: f64,
}

/// Runs the controlled pair `(x, y)` with `n` controlled modes, recording
/// `|x − y|²` every `every` steps.
#[allow(clippy::too_many_arguments)]
pub fn audit_coupling<D>(
    dynamics: &D,
    x: &D::State,
    y: &D::State,
    a: f64,
    n: usize,
    steps: u64,
    every: u64,
    seed: u64,
) -> Result<CouplingReport>
where
    D: Coupled + StateMetric<D::State>,
{
    if every == 0 {
        return Err(Error::InvalidArgument("sampling interval must be positive".into()));
    }
    let (mut x, mut y) = (x.clone(), y.clone());
    let mut ws = dynamics.workspace();
    let mut times = vec![0.0];
    let mut distance_sq = vec![libm::pow(dynamics.distance(&x, &y), 2.0)];
    for s in 0..steps {
        let mut rng = StepRng::new(seed, 0, s);
        dynamics.coupled_advance(&mut x, &mut y, &mut ws, a, n, &mut rng)?;
        if !dynamics.is_finite(&x) || !dynamics.is_finite(&y) {
            return Err(Error::BlowUp { step: s });
        }
        if (s + 1) % every == 0 {
            times.push((s + 1) as f64 * dynamics.dt());
            distance_sq.push(libm::pow(dynamics.distance(&x, &y), 2.0));
        }
    }
    let (ts, ls): (Vec<f64>, Vec<f64>) =
        times.iter().zip(&distance_sq).filter(|(_, d)| **d > 1e-300).map(|(t, d)| (*t, libm::log(*d))).unzip();
    let log_slope = linear_fit(&ts, &ls).map_or(f64::NAN, |f| f.slope);
    Ok(CouplingReport { times, distance_sq, log_slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::noise::{ForcingFamily, NoiseSpec};
    use crate::ns::{NsParams, NsState};
    use crate::oracles::OuModel;
    use core::f64::consts::PI;

    #[test]
    fn alpha0_hand_values() {
        assert_eq!(alpha0(2.0, 1.0, 0.5).unwrap(), (2.0, 1.0 / 3.0));
        assert_eq!(alpha0(0.0, 1.0, 0.1).unwrap(), (0.0, 0.5));
        assert_eq!(alpha0(1.0, 1.0, f64::INFINITY).unwrap().1, 0.5);
        assert!(alpha0(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn ns_table_example() {
        let input =
            NsTableInput { nu: 1.0, lambda1: 1.0, lambda_n: 10.0, trace_q: 1.0, f_sup_sq: 0.0, gamma: 0.5, k0: 1.0 };
        let p = derive_params_ns(&input).unwrap();
        assert_eq!((p.kappa0, p.kappa1, p.kappa2, p.kappa_eps), (10.0, 1.0, 0.5, 1.0));
        assert_eq!(p.gamma_eps, 1.0);
        assert!(p.feasible);
        let at_cap = NsTableInput { gamma: 1.0, ..input };
        assert_eq!(derive_params_ns(&at_cap), Err(Error::InfeasibleGamma { gamma: 1.0, cap: 1.0 }));
    }

    #[test]
    fn qg_friction_threshold() {
        let input = QgTableInput {
            nu: 1.0,
            r: 2.0,
            lambda1: 1.0,
            trace_q: 1.0,
            t_q: 1.0,
            h1: 1.0,
            f_sup_sq: 0.0,
            gamma: 1e-9,
            k0: 1.0,
            c0: 3.0,
            k_b: 1.0,
        };
        let (p, rc) = derive_params_qg(&input).unwrap();
        assert_eq!(rc.threshold, 2.0);
        assert!(!rc.satisfied);
        assert!(matches!(rc.gate(), Gate::Unmet(_)));
        assert!((p.kappa2 - 1.0).abs() < 1e-8);
        let (_, rc) = derive_params_qg(&QgTableInput { r: 2.0 + 1e-12, ..input }).unwrap();
        assert!(rc.satisfied);
    }

    #[test]
    fn lyapunov_audit_recovers_ou_rates() {
        let ou = OuModel::new(
            &[1.0, 0.0, 0.0, 1.0],
            vec![0.5, 0.5],
            vec![0.0, 0.0],
            crate::oracles::Amplitude::Linear,
            0.01,
        )
        .unwrap();
        let starts = vec![vec![3.0, 0.0], vec![0.0, 1.5]];
        let times: Vec<u64> = (0..12).map(|i| i * 25).collect();
        let r = audit_lyapunov(&ou, &ou, &starts, 0.0, &times, 400, 1, &Sequential).unwrap();
        let gamma = -2.0 * libm::log(0.99) / 0.01;
        let k = ou.second_moment(&[0.0, 0.0], 0.0, 100_000);
        assert!((r.gamma_decay / gamma - 1.0).abs() < 0.1, "{r:?}");
        assert!((r.k / k - 1.0).abs() < 0.1 && (r.c - 1.0).abs() < 0.1, "{r:?}");
        assert!(r.passes, "{r:?}");
    }

    #[test]
    fn noiseless_decay_of_a_single_mode() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let m = NavierStokes::new(&g, NsParams::new(0.1, 0.01), NoiseSpec::zero(&g), ForcingFamily::zero(&g)).unwrap();
        let start = |c: f64| NsState::new(SpectralField::from_modes(&g, &[(1, 0, Complex64::new(c, 0.0))]).unwrap());
        let times: Vec<u64> = (0..10).map(|i| i * 50).collect();
        let r = audit_lyapunov(&m, &m, &[start(1.0), start(0.3)], 0.0, &times, 2, 1, &Sequential).unwrap();
        assert!((r.gamma_decay / (2.0 * 0.1 * g.lambda1()) - 1.0).abs() < 0.1, "{r:?}");
        assert!(r.k.abs() < 1e-6);
    }

    #[test]
    fn tail_audit() {
        // Zero noise: the excursion never exceeds its starting value.
        let ou = OuModel::new(&[1.0], vec![1e-30], vec![0.0], crate::oracles::Amplitude::Linear, 0.01).unwrap();
        let r = audit_tail(&ou, &ou, &vec![1.0], 0.0, 200, 50, 1.0, 0.0, 1, &Sequential).unwrap();
        assert!(r.xi.iter().all(|x| *x <= 0.0) && r.gamma_hat.is_infinite());
        // Noisy: the empirical tail decays at least at the martingale rate.
        let ou = OuModel::scalar(1.0, 1.0, 0.0, 0.01).unwrap();
        let r = audit_tail(&ou, &ou, &vec![0.0], 0.0, 500, 2000, 1.0, 1.0, 2, &Sequential).unwrap();
        assert!(r.gamma_hat >= ou.tail_rate(1.0), "{} < {}", r.gamma_hat, ou.tail_rate(1.0));
        assert!(r.holds(r.gamma_hat * 0.99) && r.holds(0.0));
        assert!(!r.holds(r.gamma_hat * 1.5) || r.gamma_hat.is_infinite());
    }

    #[test]
    fn exp_moment_audit_matches_gaussian_oracle() {
        let ou = OuModel::scalar(1.0, 1.0, 0.0, 0.01).unwrap();
        let starts = vec![vec![0.0], vec![1.0]];
        let r = audit_exp_moment(&ou, &ou, &starts, 0.0, &[0.0, 0.3], &[50, 100, 200], 4000, 3, &Sequential).unwrap();
        for row in &r.rows {
            if row.eta == 0.0 {
                assert_eq!(row.estimate, Estimate::new(1.0, 0.0));
            } else {
                let n = libm::round(row.time / 0.01) as u64;
                let exact = ou.exp_moment(&starts[row.start], 0.0, n, row.eta).unwrap();
                assert!(row.estimate.covers(exact, 3.0), "{row:?} vs {exact}");
            }
        }
    }

    #[test]
    fn k0_estimates_are_finite() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let m = NavierStokes::new(&g, NsParams::new(0.1, 0.01), NoiseSpec::zero(&g), ForcingFamily::zero(&g)).unwrap();
        let k0 = estimate_k0_ns(&m, 20, 1);
        assert!(k0 > 0.0 && k0.is_finite());
    }

    #[test]
    fn coupling_of_identical_states_stays_zero() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let noise = NoiseSpec::power_law(&g, 0.1, 1.0, 3.0).unwrap();
        let m = NavierStokes::new(&g, NsParams::new(0.1, 0.01), noise, ForcingFamily::zero(&g)).unwrap();
        let x = NsState::zero(&g);
        let r = audit_coupling(&m, &x, &x, 0.0, 4, 50, 10, 1).unwrap();
        assert!(r.distance_sq.iter().all(|d| *d == 0.0));
    }
}

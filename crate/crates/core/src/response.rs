//! Estimators of stationary averages `⟨φ, μ_a⟩` and their sensitivity to the
//! forcing parameter.
//!
//! * [`ergodic_average`]: batch-means time averages over an ensemble.
//! * [`response_fdt`]: the Girsanov / fluctuation–dissipation estimator
//!   `Σ_{n=0}^{N} E[(φ(X_{(j+n+1)t}) − φ̄)·m_j]`, with `m_j` the score
//!   accumulated over window `j` and the resolvent replaced by its Neumann
//!   series.
//! * [`response_single_step`]: `D_a P_t φ(x)` from one window.
//! * [`response_finite_difference`]: central differences, optionally with
//!   common random numbers.
//! * [`holder_scan`]: log–log slopes of `|⟨φ, μ_{a₀+h}⟩ − ⟨φ, μ_{a₀}⟩|`.
//!
//! Trajectory `i` of an ensemble always uses stream index `i`, so runs at
//! different parameters with the same seed share their noise.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::{Dynamics, Observable, StepWeights, Trajectory};
use crate::exec::Executor;
use crate::stats::{integrated_autocorrelation_time, linear_fit, mean_sem, Estimate, Welford};
use crate::{Error, Result};

const MIN_BATCHES: usize = 20;

/// Seed offset giving finite differences independent noise when common
/// random numbers are off.
const INDEPENDENT_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fdt,
    FiniteDifference,
    Exact,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Fdt => "fdt",
            Method::FiniteDifference => "finite-difference",
            Method::Exact => "exact",
        }
    }
}

/// An estimate of `d⟨φ, μ_a⟩/da`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseEstimate {
    pub value: f64,
    pub sem: f64,
    pub method: Method,
    /// Window length in physical time (zero when not applicable).
    pub window: f64,
    pub lags: usize,
    /// Per-lag contributions; they sum to `value`.
    pub lag_terms: Vec<Estimate>,
    /// Set when one of the last three lag terms is not within 2 SEM of 0.
    pub truncation_flag: bool,
    pub samples: u64,
}

impl ResponseEstimate {
    pub fn exact(value: f64) -> Self {
        ResponseEstimate {
            value,
            sem: 0.0,
            method: Method::Exact,
            window: 0.0,
            lags: 0,
            lag_terms: Vec::new(),
            truncation_flag: false,
            samples: 0,
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.value, self.sem)
    }
}

/// Whether the spectral-gap preconditions of the likelihood-ratio path hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Verified,
    Unmet(String),
    /// Run anyway; results carry no guarantee.
    Overridden,
}

impl Gate {
    pub fn check(&self) -> Result<()> {
        match self {
            Gate::Unmet(reason) => Err(Error::PreconditionUnmet(reason.clone())),
            _ => Ok(()),
        }
    }
}

/// Ensemble of ergodic runs: each trajectory relaxes for `burn_in` steps
/// and then records observables every `stride` steps for `steps` steps,
/// cut into `batches` contiguous batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingPlan {
    pub burn_in: u64,
    pub steps: u64,
    pub stride: u64,
    pub batches: usize,
    pub ensemble: usize,
    pub seed: u64,
}

impl SamplingPlan {
    fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.ensemble == 0 || self.batches == 0 {
            return Err(Error::InvalidArgument("stride, ensemble and batches must be positive".into()));
        }
        if self.batches * self.ensemble < MIN_BATCHES {
            return Err(Error::InsufficientSamples(format!(
                "{} batches in total, need at least {MIN_BATCHES}",
                self.batches * self.ensemble
            )));
        }
        if self.steps / self.stride < self.batches as u64 {
            return Err(Error::InsufficientSamples(format!(
                "{} samples per trajectory for {} batches",
                self.steps / self.stride,
                self.batches
            )));
        }
        Ok(())
    }
}

/// Windowed runs for the fluctuation–dissipation estimator: after
/// `burn_in` steps each trajectory records `windows` consecutive windows of
/// `window` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdtPlan {
    pub burn_in: u64,
    pub window: u64,
    pub lags: usize,
    pub windows: u64,
    pub batches: usize,
    pub ensemble: usize,
    pub seed: u64,
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn eval_checked<S, O: Observable<S>>(o: &O, x: &S) -> Result<f64> {
    let v = o.eval(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("observable value".into()))
    }
}

/// Batch means of every observable along trajectory `index` at parameter
/// `a`; indexed `[observable][batch]`.
fn batch_run<D: Dynamics, O: Observable<D::State>>(
    dynamics: &D,
    x0: &D::State,
    a: f64,
    observables: &[O],
    plan: &SamplingPlan,
    seed: u64,
    index: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut t = Trajectory::new(dynamics, x0.clone(), seed, index as u32);
    t.run(a, plan.burn_in)?;
    let samples = plan.steps / plan.stride;
    let per_batch = samples / plan.batches as u64;
    let mut out = vec![Vec::with_capacity(plan.batches); observables.len()];
    for _ in 0..plan.batches {
        let mut sums = vec![0.0; observables.len()];
        for _ in 0..per_batch {
            t.run(a, plan.stride)?;
            for (s, o) in sums.iter_mut().zip(observables) {
                *s += eval_checked(o, t.state())?;
            }
        }
        for (b, s) in out.iter_mut().zip(sums) {
            b.push(s / per_batch as f64);
        }
    }
    Ok(out)
}

fn flatten(per_traj: &[Vec<Vec<f64>>], k: usize) -> Vec<f64> {
    per_traj.iter().flat_map(|t| t[k].iter().copied()).collect()
}

/// `⟨φ, μ_a⟩` for each observable by batch means over an ensemble.
pub fn ergodic_average<D, O, E>(
    dynamics: &D,
    x0: &D::State,
    a: f64,
    observables: &[O],
    plan: &SamplingPlan,
    exec: &E,
) -> Result<Vec<Estimate>>
where
    D: Dynamics,
    O: Observable<D::State>,
    E: Executor,
{
    plan.validate()?;
    let runs = collect(exec.map(plan.ensemble, |i| batch_run(dynamics, x0, a, observables, plan, plan.seed, i)))?;
    Ok((0..observables.len()).map(|k| mean_sem(&flatten(&runs, k))).collect())
}

/// Central differences `(⟨φ⟩_{a₀+δ} − ⟨φ⟩_{a₀−δ})/(2δ)`. With `crn` both
/// sides share their noise; the standard error comes from the paired batch
/// differences either way.
#[allow(clippy::too_many_arguments)]
pub fn response_finite_difference<D, O, E>(
    dynamics: &D,
    x0: &D::State,
    a0: f64,
    delta: f64,
    crn: bool,
    observables: &[O],
    plan: &SamplingPlan,
    exec: &E,
) -> Result<Vec<ResponseEstimate>>
where
    D: Dynamics,
    O: Observable<D::State>,
    E: Executor,
{
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("finite-difference step {delta} must be positive")));
    }
    plan.validate()?;
    let minus_seed = if crn { plan.seed } else { plan.seed ^ INDEPENDENT_STREAM };
    let runs = collect(exec.map(plan.ensemble, |i| {
        let plus = batch_run(dynamics, x0, a0 + delta, observables, plan, plan.seed, i)?;
        let minus = batch_run(dynamics, x0, a0 - delta, observables, plan, minus_seed, i)?;
        Ok(plus
            .iter()
            .zip(&minus)
            .map(|(p, m)| p.iter().zip(m).map(|(a, b)| (a - b) / (2.0 * delta)).collect())
            .collect::<Vec<Vec<f64>>>())
    }))?;
    let samples = plan.ensemble as u64 * (plan.steps / plan.stride);
    Ok((0..observables.len())
        .map(|k| {
            let e = mean_sem(&flatten(&runs, k));
            ResponseEstimate {
                value: e.value,
                sem: e.sem,
                method: Method::FiniteDifference,
                window: 0.0,
                lags: 0,
                lag_terms: Vec::new(),
                truncation_flag: false,
                samples,
            }
        })
        .collect())
}

/// Scores `m_j` and end-of-window observables `φ_k(X_{(j+1)t})` of one
/// trajectory.
struct WindowSeries {
    scores: Vec<f64>,
    values: Vec<Vec<f64>>,
}

fn window_run<D: Dynamics, O: Observable<D::State>>(
    dynamics: &D,
    x0: &D::State,
    a0: f64,
    observables: &[O],
    plan: &FdtPlan,
    index: usize,
) -> Result<WindowSeries> {
    let mut t = Trajectory::new(dynamics, x0.clone(), plan.seed, index as u32);
    t.run(a0, plan.burn_in)?;
    let n = plan.windows as usize;
    let mut scores = Vec::with_capacity(n);
    let mut values = vec![Vec::with_capacity(n); observables.len()];
    for _ in 0..n {
        let mut w = StepWeights::new();
        t.run_weighted(a0, plan.window, &mut w)?;
        scores.push(w.score);
        for (v, o) in values.iter_mut().zip(observables) {
            v.push(eval_checked(o, t.state())?);
        }
    }
    Ok(WindowSeries { scores, values })
}

/// The fluctuation–dissipation response estimator.
///
/// Requires a differentiable family with its direction in the range of the
/// noise covariance (checked through the dynamics) and an open `gate`.
pub fn response_fdt<D, O, E>(
    dynamics: &D,
    x0: &D::State,
    a0: f64,
    observables: &[O],
    plan: &FdtPlan,
    gate: &Gate,
    exec: &E,
) -> Result<Vec<ResponseEstimate>>
where
    D: Dynamics,
    O: Observable<D::State>,
    E: Executor,
{
    dynamics.check_score_available()?;
    gate.check()?;
    if plan.window == 0 || plan.ensemble == 0 || plan.batches == 0 {
        return Err(Error::InvalidArgument("window, ensemble and batches must be positive".into()));
    }
    let rows = (plan.windows as usize).saturating_sub(plan.lags);
    if rows < plan.batches || plan.batches * plan.ensemble < MIN_BATCHES {
        return Err(Error::InsufficientSamples(format!(
            "{rows} usable windows per trajectory in {} batches × {} trajectories",
            plan.batches, plan.ensemble
        )));
    }
    let runs = collect(exec.map(plan.ensemble, |i| window_run(dynamics, x0, a0, observables, plan, i)))?;
    let per_batch = rows / plan.batches;
    let used = per_batch * plan.batches;
    let nl = plan.lags + 1;
    let mut out = Vec::with_capacity(observables.len());
    for k in 0..observables.len() {
        let mean: Welford = runs.iter().flat_map(|r| r.values[k].iter().copied()).collect();
        let centre = mean.mean();
        // Batch means of each lag term and of their sum.
        let mut lag_batches = vec![Vec::with_capacity(plan.ensemble * plan.batches); nl];
        let mut total_batches = Vec::with_capacity(plan.ensemble * plan.batches);
        for r in &runs {
            let v = &r.values[k];
            for b in 0..plan.batches {
                let mut sums = vec![0.0; nl];
                for j in b * per_batch..(b + 1) * per_batch {
                    let m = r.scores[j];
                    for (n, s) in sums.iter_mut().enumerate() {
                        *s += m * (v[j + n] - centre);
                    }
                }
                let total: f64 = sums.iter().sum();
                for (lb, s) in lag_batches.iter_mut().zip(&sums) {
                    lb.push(s / per_batch as f64);
                }
                total_batches.push(total / per_batch as f64);
            }
        }
        let lag_terms: Vec<Estimate> = lag_batches.iter().map(|b| mean_sem(b)).collect();
        let total = mean_sem(&total_batches);
        let truncation_flag = lag_terms.iter().rev().take(3).any(|e| !e.covers(0.0, 2.0));
        out.push(ResponseEstimate {
            value: lag_terms.iter().map(|e| e.value).sum(),
            sem: total.sem,
            method: Method::Fdt,
            window: plan.window as f64 * dynamics.dt(),
            lags: plan.lags,
            lag_terms,
            truncation_flag,
            samples: (used * plan.ensemble) as u64,
        });
    }
    Ok(out)
}

/// `D_a P_t φ(x)` at `a₀` for `t = steps·dt`, as
/// `E[(φ(X_t) − φ(x))·m(t)]`; subtracting `φ(x)` is a control variate
/// since `E m(t) = 0`.
#[allow(clippy::too_many_arguments)]
pub fn response_single_step<D, O, E>(
    dynamics: &D,
    x: &D::State,
    a0: f64,
    steps: u64,
    observables: &[O],
    ensemble: usize,
    seed: u64,
    gate: &Gate,
    exec: &E,
) -> Result<Vec<Estimate>>
where
    D: Dynamics,
    O: Observable<D::State>,
    E: Executor,
{
    dynamics.check_score_available()?;
    gate.check()?;
    if ensemble < 2 {
        return Err(Error::InsufficientSamples(format!("ensemble of {ensemble}")));
    }
    let start: Vec<f64> = observables.iter().map(|o| eval_checked(o, x)).collect::<Result<_>>()?;
    let samples = collect(exec.map(ensemble, |i| {
        let mut t = Trajectory::new(dynamics, x.clone(), seed, i as u32);
        let mut w = StepWeights::new();
        t.run_weighted(a0, steps, &mut w)?;
        observables
            .iter()
            .zip(&start)
            .map(|(o, s)| Ok((eval_checked(o, t.state())? - s) * w.score))
            .collect::<Result<Vec<f64>>>()
    }))?;
    Ok((0..observables.len()).map(|k| mean_sem(&samples.iter().map(|s| s[k]).collect::<Vec<_>>())).collect())
}

/// Window length (in steps) from the integrated autocorrelation time of
/// the observables along a pilot run, sampled every step.
pub fn pilot_window<D, O>(
    dynamics: &D,
    x0: &D::State,
    a0: f64,
    observables: &[O],
    burn_in: u64,
    steps: u64,
    seed: u64,
) -> Result<u64>
where
    D: Dynamics,
    O: Observable<D::State>,
{
    let mut t = Trajectory::new(dynamics, x0.clone(), seed, 0);
    t.run(a0, burn_in)?;
    let mut series = vec![Vec::with_capacity(steps as usize); observables.len()];
    for _ in 0..steps {
        t.step(a0, None)?;
        for (s, o) in series.iter_mut().zip(observables) {
            s.push(eval_checked(o, t.state())?);
        }
    }
    let tau = series.iter().map(|s| integrated_autocorrelation_time(s)).fold(1.0, f64::max);
    Ok(libm::ceil(tau) as u64)
}

/// One separation of a Hölder scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderPoint {
    pub separation: f64,
    /// `⟨φ, μ_{a₀+h}⟩ − ⟨φ, μ_{a₀}⟩`.
    pub difference: Estimate,
    /// False when the difference is within 2 SEM of zero.
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderScan {
    pub points: Vec<HolderPoint>,
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence half-width of the slope.
    pub ci: f64,
    /// Theoretical lower bound `α·β_f` on the slope.
    pub floor: f64,
    /// Decades of separation spanned by the usable points.
    pub decades: f64,
    /// Every difference vanished or drowned in noise.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

impl HolderScan {
    /// Slope at least `floor − ci` over at least 1.5 usable decades.
    pub fn passes(&self) -> bool {
        !self.degenerate && self.decades >= 1.5 && self.slope >= self.floor - self.ci
    }
}

/// Regresses `log|⟨φ, μ_{a₀+h}⟩ − ⟨φ, μ_{a₀}⟩|` on `log h`. All runs share
/// their noise, so the differences are far less noisy than either average.
#[allow(clippy::too_many_arguments)]
pub fn holder_scan<D, O, E>(
    dynamics: &D,
    x0: &D::State,
    a0: f64,
    separations: &[f64],
    floor: f64,
    observables: &[O],
    plan: &SamplingPlan,
    exec: &E,
) -> Result<Vec<HolderScan>>
where
    D: Dynamics,
    O: Observable<D::State>,
    E: Executor,
{
    plan.validate()?;
    if separations.len() < 5 || separations.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidArgument("a Hölder scan needs at least 5 positive separations".into()));
    }
    let (lo, hi) = separations.iter().fold((f64::INFINITY, 0.0f64), |(l, h), s| (l.min(*s), h.max(*s)));
    if libm::log10(hi / lo) < 1.5 {
        return Err(Error::InvalidArgument("separations must span at least 1.5 decades".into()));
    }
    // [trajectory][separation][observable][batch]
    let runs = collect(exec.map(plan.ensemble, |i| {
        let anchor = batch_run(dynamics, x0, a0, observables, plan, plan.seed, i)?;
        separations
            .iter()
            .map(|h| {
                let r = batch_run(dynamics, x0, a0 + h, observables, plan, plan.seed, i)?;
                Ok(r.iter()
                    .zip(&anchor)
                    .map(|(p, q)| p.iter().zip(q).map(|(a, b)| a - b).collect())
                    .collect::<Vec<Vec<f64>>>())
            })
            .collect::<Result<Vec<_>>>()
    }))?;
    let mut out = Vec::with_capacity(observables.len());
    for k in 0..observables.len() {
        let mut warnings = Vec::new();
        let points: Vec<HolderPoint> = separations
            .iter()
            .enumerate()
            .map(|(s, &h)| {
                let diffs: Vec<f64> = runs.iter().flat_map(|r| r[s][k].iter().copied()).collect();
                let e = mean_sem(&diffs);
                let used = e.value != 0.0 && libm::fabs(e.value) >= 2.0 * e.sem;
                HolderPoint { separation: h, difference: e, used }
            })
            .collect();
        for p in points.iter().filter(|p| !p.used) {
            warnings.push(format!(
                "separation {} excluded: difference {} below twice its standard error {}",
                p.separation, p.difference.value, p.difference.sem
            ));
        }
        let (x, y): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter(|p| p.used)
            .map(|p| (libm::log(p.separation), libm::log(libm::fabs(p.difference.value))))
            .unzip();
        let scan = match linear_fit(&x, &y) {
            Ok(fit) => {
                let (l, h) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
                HolderScan {
                    points,
                    slope: fit.slope,
                    intercept: fit.intercept,
                    ci: fit.slope_ci(0.95),
                    floor,
                    decades: (h - l) / core::f64::consts::LN_10,
                    degenerate: false,
                    warnings,
                }
            }
            Err(_) => {
                warnings.push("fewer than 3 usable separations; scan is degenerate".into());
                HolderScan {
                    points,
                    slope: f64::NAN,
                    intercept: f64::NAN,
                    ci: f64::NAN,
                    floor,
                    decades: 0.0,
                    degenerate: true,
                    warnings,
                }
            }
        };
        out.push(scan);
    }
    Ok(out)
}

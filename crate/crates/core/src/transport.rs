//! Distance-like functions and optimal transport between empirical measures.
//!
//! The contraction argument works with the premetric
//! `θ_α(x, y) = |x − y|^{2α} e^{αυV(x)}` with `V = |x|²`, truncated and
//! symmetrised into the semimetric `d_N = min(Nθ(x,y), Nθ(y,x), 1)`, and then
//! weighted into `d̃(x, y) = √(d_N(x, y)(1 + V(x) + V(y)))`. Neither `θ` nor
//! `d_N` satisfies the triangle inequality; `d̃` is what the Wasserstein
//! distance is taken in.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::{Dynamics, StateMetric, Trajectory};
use crate::exec::Executor;
use crate::stats::{mean_sem, Estimate};
use crate::{Error, Result};

/// Largest empirical measure accepted by the exact assignment solver.
pub const MAX_ATOMS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemimetricParams {
    pub alpha: f64,
    pub upsilon: f64,
    /// Truncation level `N` of `d_N`.
    pub n: f64,
}

impl SemimetricParams {
    pub fn new(alpha: f64, upsilon: f64, n: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(upsilon >= 0.0) || !(n > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "semimetric needs alpha in (0, 1], upsilon >= 0, N > 0 (got {alpha}, {upsilon}, {n})"
            )));
        }
        Ok(SemimetricParams { alpha, upsilon, n })
    }

    /// The contraction estimates need `α` strictly below `α₀`.
    pub fn check_alpha(&self, alpha0: f64) -> Result<()> {
        if self.alpha < alpha0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("alpha = {} must be below alpha_0 = {alpha0}", self.alpha)))
        }
    }
}

/// The weighted distances built from a state metric.
#[derive(Debug, Clone, Copy)]
pub struct Semimetric<'m, M> {
    pub metric: &'m M,
    pub params: SemimetricParams,
}

impl<'m, M> Semimetric<'m, M> {
    pub fn new(metric: &'m M, params: SemimetricParams) -> Self {
        Semimetric { metric, params }
    }

    /// `θ_α(x, y)`; not symmetric.
    pub fn theta<S>(&self, x: &S, y: &S) -> f64
    where
        M: StateMetric<S>,
    {
        let d = self.metric.distance(x, y);
        if d == 0.0 {
            return 0.0;
        }
        let SemimetricParams { alpha, upsilon, .. } = self.params;
        libm::pow(d, 2.0 * alpha) * libm::exp(alpha * upsilon * self.metric.h_norm_sq(x))
    }

    /// `d_N(x, y) = min(Nθ(x, y), Nθ(y, x), 1)`.
    pub fn d_n<S>(&self, x: &S, y: &S) -> f64
    where
        M: StateMetric<S>,
    {
        let n = self.params.n;
        (n * self.theta(x, y)).min(n * self.theta(y, x)).min(1.0)
    }

    /// `d̃(x, y) = √(d_N(x, y)(1 + V(x) + V(y)))`.
    pub fn d_tilde<S>(&self, x: &S, y: &S) -> f64
    where
        M: StateMetric<S>,
    {
        // Summed before adding 1 so that the result is exactly symmetric.
        let v = 1.0 + (self.metric.h_norm_sq(x) + self.metric.h_norm_sq(y));
        libm::sqrt(self.d_n(x, y) * v)
    }
}

/// An optimal matching between two uniform empirical measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `target[i]` is the atom of the second measure matched with atom `i`.
    pub target: Vec<usize>,
    /// Mean cost of the matching, i.e. the transport cost.
    pub cost: f64,
    /// Dual potentials `(u, v)` with `u_i + v_j ≤ c_ij`, equality on the matching.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Exact minimum-cost perfect matching on a square cost matrix (row-major),
/// by the shortest-augmenting-path Hungarian method, `O(n³)`.
pub fn assignment(cost: &[f64], n: usize) -> Result<Assignment> {
    if cost.len() != n * n {
        return Err(Error::SizeMismatch { left: cost.len(), right: n * n });
    }
    if n > MAX_ATOMS {
        return Err(Error::InvalidArgument(format!("{n} atoms exceed the limit of {MAX_ATOMS}")));
    }
    if let Some(c) = cost.iter().find(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("transport cost {c}")));
    }
    if n == 0 {
        return Ok(Assignment { target: Vec::new(), cost: 0.0, u: Vec::new(), v: Vec::new() });
    }
    // 1-based arrays with a virtual column 0, as in the classical formulation.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut target = vec![0; n];
    for j in 1..=n {
        target[row_of[j] - 1] = j - 1;
    }
    let total: f64 = target.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(Assignment { target, cost: total / n as f64, u: u[1..].to_vec(), v: v[1..].to_vec() })
}

/// `W_c(μ, ν)` between two uniform empirical measures of equal size.
pub fn wasserstein<S, F>(xs: &[S], ys: &[S], cost: F) -> Result<Assignment>
where
    F: Fn(&S, &S) -> f64,
{
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch { left: xs.len(), right: ys.len() });
    }
    let n = xs.len();
    if n > MAX_ATOMS {
        return Err(Error::InvalidArgument(format!("{n} atoms exceed the limit of {MAX_ATOMS}")));
    }
    let mut c = Vec::with_capacity(n * n);
    for x in xs {
        for y in ys {
            c.push(cost(x, y));
        }
    }
    assignment(&c, n)
}

/// Kantorovich–Rubinstein check: the optimal potential `u` (shifted to be
/// defined on the union of atoms) is a 1-Lipschitz test function for the
/// cost, so `∫u dμ − ∫u dν` bounds the primal cost from below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityCheck {
    pub primal: f64,
    pub dual: f64,
    /// Largest `|u(x) − u(y)|/c(x, y)` over all cross pairs.
    pub lipschitz: f64,
}

impl DualityCheck {
    pub fn gap(&self) -> f64 {
        self.primal - self.dual
    }
}

/// Evaluates the dual of a solved assignment. The potentials `(u, −v)` define
/// a function on the atoms of both measures; the dual value is
/// `mean(u) + mean(v)`.
pub fn duality_check(cost: &[f64], n: usize, a: &Assignment) -> DualityCheck {
    let dual = (a.u.iter().sum::<f64>() + a.v.iter().sum::<f64>()) / n as f64;
    let mut lipschitz: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = cost[i * n + j];
            let du = a.u[i] + a.v[j];
            if c > 0.0 {
                lipschitz = lipschitz.max(du / c);
            } else if du > 1e-12 {
                lipschitz = f64::INFINITY;
            }
        }
    }
    DualityCheck { primal: a.cost, dual, lipschitz }
}

/// Empirical view of the contraction `W_d̃(P_t δ_x, P_t δ_y)` against the
/// synchronous-coupling bound `E d̃(X_t^x, X_t^y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionProbe {
    pub time: f64,
    /// Optimal transport between independent ensembles.
    pub wasserstein: Estimate,
    /// Mean distance along the coupling driven by common noise.
    pub coupling: Estimate,
    /// `d̃(x, y)` at time zero.
    pub initial: f64,
    /// `x = y`: both quantities vanish identically.
    pub degenerate: bool,
}

impl ContractionProbe {
    /// `W_d̃(P_t δ_x, P_t δ_y)/d̃(x, y)`, biased upwards by sampling error.
    pub fn ratio(&self) -> Estimate {
        self.scaled(self.wasserstein)
    }

    /// `E d̃(X_t, Y_t)/d̃(x, y)` under common noise.
    pub fn coupling_ratio(&self) -> Estimate {
        self.scaled(self.coupling)
    }

    fn scaled(&self, e: Estimate) -> Estimate {
        if self.degenerate {
            Estimate::new(0.0, 0.0)
        } else {
            Estimate::new(e.value / self.initial, e.sem / self.initial)
        }
    }
}

/// `‖φ‖_d̃ = sup |φ(x) − φ(y)|/d̃(x, y)` over all pairs of atoms of both
/// samples, given `φ` evaluated at `xs` then `ys`.
pub fn lipschitz_seminorm<S, F>(xs: &[S], ys: &[S], phi: &[f64], cost: F) -> Result<f64>
where
    F: Fn(&S, &S) -> f64,
{
    if phi.len() != xs.len() + ys.len() {
        return Err(Error::SizeMismatch { left: phi.len(), right: xs.len() + ys.len() });
    }
    let atoms: Vec<&S> = xs.iter().chain(ys).collect();
    let mut best: f64 = 0.0;
    for i in 0..atoms.len() {
        for j in i + 1..atoms.len() {
            let dphi = (phi[i] - phi[j]).abs();
            let c = cost(atoms[i], atoms[j]);
            if c > 0.0 {
                best = best.max(dphi / c);
            } else if dphi > 0.0 {
                return Ok(f64::INFINITY);
            }
        }
    }
    Ok(best)
}

/// Runs `ensemble` trajectories from each of `x` and `y` for `steps` steps.
/// The Wasserstein estimate and its SEM come from four independent
/// sub-ensembles.
#[allow(clippy::too_many_arguments)]
pub fn contraction_probe<D, M, E>(
    dynamics: &D,
    semimetric: &Semimetric<'_, M>,
    x: &D::State,
    y: &D::State,
    a: f64,
    steps: u64,
    ensemble: usize,
    seed: u64,
    exec: &E,
) -> Result<ContractionProbe>
where
    D: Dynamics,
    M: StateMetric<D::State> + Sync,
    E: Executor,
{
    const GROUPS: usize = 4;
    let time = steps as f64 * dynamics.dt();
    if semimetric.metric.distance(x, y) == 0.0 {
        let zero = Estimate::new(0.0, 0.0);
        return Ok(ContractionProbe { time, wasserstein: zero, coupling: zero, initial: 0.0, degenerate: true });
    }
    if ensemble < GROUPS * 2 || !ensemble.is_multiple_of(GROUPS) || ensemble / GROUPS > MAX_ATOMS {
        return Err(Error::InsufficientSamples(format!(
            "ensemble {ensemble} must be a multiple of {GROUPS}, at least {}, at most {}",
            GROUPS * 2,
            GROUPS * MAX_ATOMS
        )));
    }
    // Tasks 0..E: from x with streams 0..E; E..2E: from y with streams E..2E
    // (independent); 2E..3E: from y with streams 0..E (coupled to x).
    let finals = exec.map(3 * ensemble, |task| -> Result<D::State> {
        let (start, stream) = match task / ensemble {
            0 => (x, task),
            1 => (y, task),
            _ => (y, task - 2 * ensemble),
        };
        let mut t = Trajectory::new(dynamics, start.clone(), seed, stream as u32);
        t.run(a, steps)?;
        Ok(t.into_state())
    });
    let finals: Vec<D::State> = finals.into_iter().collect::<Result<_>>()?;
    let (xs, rest) = finals.split_at(ensemble);
    let (ys_ind, ys_cpl) = rest.split_at(ensemble);
    let m = ensemble / GROUPS;
    let cost = |p: &D::State, q: &D::State| semimetric.d_tilde(p, q);
    let mut groups = Vec::with_capacity(GROUPS);
    for g in 0..GROUPS {
        let r = g * m..(g + 1) * m;
        groups.push(wasserstein(&xs[r.clone()], &ys_ind[r], cost)?.cost);
    }
    let coupled: Vec<f64> = xs.iter().zip(ys_cpl).map(|(p, q)| cost(p, q)).collect();
    Ok(ContractionProbe {
        time,
        wasserstein: mean_sem(&groups),
        coupling: mean_sem(&coupled),
        initial: semimetric.d_tilde(x, y),
        degenerate: false,
    })
}

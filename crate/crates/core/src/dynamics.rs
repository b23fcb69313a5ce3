//! The Markov-chain interface shared by every backend, and trajectories
//! that drive it with addressable random streams.

use crate::rng::StepRng;
use crate::{Error, Result};

/// Likelihood weights carried alongside a step.
///
/// `score` accumulates `∂_a log p_a(x → x')` at the simulated parameter.
/// When `alternative` is set, `log_ratio` accumulates
/// `log p_{alt}(x → x') − log p_a(x → x')` and `quad` the matching quadratic
/// variation, so `exp(log_ratio)` is the Girsanov density of the path.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepWeights {
    pub score: f64,
    pub alternative: Option<f64>,
    pub log_ratio: f64,
    pub quad: f64,
}

impl StepWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn against(alternative: f64) -> Self {
        StepWeights { alternative: Some(alternative), ..Self::default() }
    }
}

/// A time-homogeneous Markov chain `x_{n+1} = Φ_a(x_n, ξ_n)` indexed by a
/// scalar forcing parameter `a`.
pub trait Dynamics: Sync {
    type State: Clone + Send + Sync;
    type Workspace: Send;

    fn workspace(&self) -> Self::Workspace;

    /// Physical time per step.
    fn dt(&self) -> f64;

    /// Advances `x` by one step at parameter `a`, drawing all randomness from
    /// `rng`. Weights, when requested, are accumulated in place.
    fn advance(
        &self,
        x: &mut Self::State,
        ws: &mut Self::Workspace,
        a: f64,
        rng: &mut StepRng,
        weights: Option<&mut StepWeights>,
    ) -> Result<()>;

    /// Errors unless the transition density is differentiable in `a` with a
    /// computable score (the likelihood-ratio estimators need it).
    fn check_score_available(&self) -> Result<()>;

    fn is_finite(&self, x: &Self::State) -> bool;
}

/// One trajectory: a state plus the step counter that addresses its noise.
///
/// Step `s` of trajectory `i` under seed `σ` always consumes the stream
/// `(σ, i, s)`, so a trajectory restarted from a saved `(state, step)` pair
/// continues bit for bit.
pub struct Trajectory<'d, D: Dynamics> {
    dynamics: &'d D,
    state: D::State,
    workspace: D::Workspace,
    seed: u64,
    index: u32,
    step: u64,
}

impl<'d, D: Dynamics> Trajectory<'d, D> {
    pub fn new(dynamics: &'d D, x0: D::State, seed: u64, index: u32) -> Self {
        Self::resume(dynamics, x0, seed, index, 0)
    }

    pub fn resume(dynamics: &'d D, x: D::State, seed: u64, index: u32, step: u64) -> Self {
        Trajectory { dynamics, state: x, workspace: dynamics.workspace(), seed, index, step }
    }

    pub fn state(&self) -> &D::State {
        &self.state
    }

    pub fn into_state(self) -> D::State {
        self.state
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dynamics.dt()
    }

    /// Replaces the state without touching the step counter.
    pub fn set_state(&mut self, x: D::State) {
        self.state = x;
    }

    pub fn step(&mut self, a: f64, weights: Option<&mut StepWeights>) -> Result<()> {
        let mut rng = StepRng::new(self.seed, self.index, self.step);
        let step = self.step;
        self.dynamics.advance(&mut self.state, &mut self.workspace, a, &mut rng, weights).map_err(|e| match e {
            Error::BlowUp { .. } => Error::BlowUp { step },
            Error::CflViolation { courant, .. } => Error::CflViolation { step, courant },
            e => e,
        })?;
        self.step += 1;
        if !self.dynamics.is_finite(&self.state) {
            return Err(Error::BlowUp { step });
        }
        Ok(())
    }

    pub fn run(&mut self, a: f64, steps: u64) -> Result<()> {
        for _ in 0..steps {
            self.step(a, None)?;
        }
        Ok(())
    }

    /// Runs `steps` steps accumulating weights.
    pub fn run_weighted(&mut self, a: f64, steps: u64, weights: &mut StepWeights) -> Result<()> {
        for _ in 0..steps {
            self.step(a, Some(weights))?;
        }
        Ok(())
    }
}

/// A scalar function of the state.
pub trait Observable<S>: Sync {
    fn eval(&self, x: &S) -> f64;
}

impl<S, F: Fn(&S) -> f64 + Sync> Observable<S> for F {
    fn eval(&self, x: &S) -> f64 {
        self(x)
    }
}

/// The state-space geometry used by audits and transport: `|x|` is the
/// norm of the phase space and `‖x‖` the stronger dissipation norm. Models
/// implement it because the norms may depend on their parameters.
pub trait StateMetric<S> {
    /// `|x − y|`.
    fn distance(&self, x: &S, y: &S) -> f64;
    /// `|x|²`.
    fn h_norm_sq(&self, x: &S) -> f64;
    /// `‖x‖²`.
    fn v_norm_sq(&self, x: &S) -> f64;
}

/// Models with a controlled companion trajectory: `y` sees the same noise
/// as `x` plus a feedback on its `n` lowest modes that pulls it onto `x`.
pub trait Coupled: Dynamics {
    fn coupled_advance(
        &self,
        x: &mut Self::State,
        y: &mut Self::State,
        ws: &mut Self::Workspace,
        a: f64,
        n: usize,
        rng: &mut StepRng,
    ) -> Result<()>;
}

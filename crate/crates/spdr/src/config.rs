//! Experiment configuration.
//!
//! Configs are TOML. Every table rejects unknown keys, every field has a
//! default, and the resolved config (defaults applied) is echoed into each
//! run manifest. Sparse spectral fields are lists of `[m, n, re, im]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ns,
    Qg,
    Ou,
    Chain,
}

impl ModelKind {
    /// Model id stored in checkpoints.
    pub fn id(self) -> u8 {
        match self {
            ModelKind::Ns => 0,
            ModelKind::Qg => 1,
            ModelKind::Ou => 2,
            ModelKind::Chain => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub ou: OuConfig,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub response: ResponseConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Side of the periodic box.
    pub l: f64,
    /// Grid points per direction.
    pub k: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { l: 2.0 * std::f64::consts::PI, k: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub nu: f64,
    pub r: f64,
    pub beta: f64,
    pub f1: f64,
    pub f2: f64,
    pub h1: f64,
    pub h2: f64,
    /// Step-size policy factor: `dt ≤ stability/(ν λ_max)`.
    pub stability: f64,
    pub max_courant: f64,
    pub nonlinear: bool,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            nu: 0.1,
            r: 1.0,
            beta: 0.0,
            f1: 1.0,
            f2: 1.0,
            h1: 1.0,
            h2: 1.0,
            stability: 0.1,
            max_courant: 1.0,
            nonlinear: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// `q_k = c·|k|^{−s}` for `0 < |k| ≤ k_max`.
    pub c: f64,
    pub s: f64,
    pub k_max: f64,
    /// `[m, n, q]` replacing the variance of the pair `±(m, n)`.
    pub overrides: Vec<[f64; 3]>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { c: 0.1, s: 0.0, k_max: 4.0, overrides: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Linear,
    Holder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingConfig {
    pub base: Vec<[f64; 4]>,
    pub dir: Vec<[f64; 4]>,
    pub mode: FamilyKind,
    /// Hölder exponent of the amplitude; ignored for linear families.
    pub beta_f: f64,
    /// Point of non-smoothness of the Hölder amplitude; defaults to `a0`.
    pub anchor: Option<f64>,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        ForcingConfig {
            base: Vec::new(),
            dir: vec![[1.0, 0.0, 1.0, 0.0]],
            mode: FamilyKind::Linear,
            beta_f: 1.0,
            anchor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuConfig {
    /// Drift matrix, row-major.
    pub drift: Vec<f64>,
    /// Diagonal noise variances.
    pub sigma2: Vec<f64>,
    pub f0: Vec<f64>,
    pub base: Vec<f64>,
}

impl Default for OuConfig {
    fn default() -> Self {
        OuConfig { drift: vec![1.0], sigma2: vec![1.0], f0: vec![1.0], base: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub d: usize,
    /// Weight of the rank-one mixing kernel that enforces a spectral gap.
    pub mix: f64,
    /// Seed of the random chain instance.
    pub instance: u64,
    /// Explicit `P(a) = base + s(a)·direction` (row-major); overrides the
    /// random instance when given.
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { d: 10, mix: 0.3, instance: 0, base: Vec::new(), direction: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartKind {
    Re,
    Im,
}

fn no_clip() -> f64 {
    f64::INFINITY
}

/// Observables; the applicable kinds depend on the model. `clip` (soft
/// saturation scale) defaults to none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObservableConfig {
    /// One Fourier coefficient of a layer.
    Mode {
        name: String,
        layer: usize,
        m: i64,
        n: i64,
        part: PartKind,
        #[serde(default = "no_clip")]
        clip: f64,
    },
    /// `Σ λ^s |ω̂_k|²` over a shell band.
    Band {
        name: String,
        layer: usize,
        k_min: f64,
        k_max: f64,
        sobolev: f64,
        #[serde(default = "no_clip")]
        clip: f64,
    },
    /// `c·x` for vector states.
    Linear {
        name: String,
        c: Vec<f64>,
        #[serde(default = "no_clip")]
        clip: f64,
    },
    /// `xᵀHx` for vector states, `H` row-major.
    Quadratic {
        name: String,
        h: Vec<f64>,
        #[serde(default = "no_clip")]
        clip: f64,
    },
    /// Values on the states of a chain.
    Table { name: String, values: Vec<f64> },
}

impl ObservableConfig {
    pub fn name(&self) -> &str {
        match self {
            ObservableConfig::Mode { name, .. }
            | ObservableConfig::Band { name, .. }
            | ObservableConfig::Linear { name, .. }
            | ObservableConfig::Quadratic { name, .. }
            | ObservableConfig::Table { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResponseConfig {
    pub a0: f64,
    /// Half-width of the parameter interval `(a0 − ε, a0 + ε)`.
    pub epsilon: f64,
    /// Finite-difference half step.
    pub delta: f64,
    /// Common random numbers across the two finite-difference arms.
    pub crn: bool,
    /// Window length in steps; 0 selects the pilot autocorrelation time.
    pub window: u64,
    pub lags: usize,
    /// Windows per trajectory.
    pub windows: u64,
    pub batches: usize,
    /// Hölder-scan separations `|a1 − a2|`.
    pub separations: Vec<f64>,
    pub observables: Vec<ObservableConfig>,
}

impl Default for ResponseConfig {
    fn default() -> Self {
        ResponseConfig {
            a0: 0.0,
            epsilon: 0.5,
            delta: 0.05,
            crn: true,
            window: 0,
            lags: 10,
            windows: 1000,
            batches: 10,
            separations: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.4],
            observables: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dt: f64,
    pub burn_in: u64,
    /// Steps recorded after burn-in.
    pub steps: u64,
    pub stride: u64,
    pub ensemble: usize,
    pub seed: u64,
    /// Checkpoint cadence in steps (0 disables periodic checkpoints).
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { dt: 0.01, burn_in: 1000, steps: 10_000, stride: 10, ensemble: 4, seed: 1, checkpoint_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    /// Exponent of the exponential Lyapunov function; defaults to half of
    /// the largest value keeping `κ₂ > 0`.
    pub gamma: Option<f64>,
    /// Constant of the bottom-friction condition (not fixed by the theory).
    pub k_b: f64,
    /// Advection constant; estimated from random fields when absent.
    pub k0: Option<f64>,
    /// Number of controlled modes `N` in the coupling.
    pub modes: usize,
    pub etas: Vec<f64>,
    /// Starting states are these multiples of a relaxed reference state.
    pub start_scales: Vec<f64>,
    /// Observation times (steps) for drift and moment audits.
    pub times: Vec<u64>,
    pub ensemble: usize,
    /// Length (steps) of excursion paths for the tail audit.
    pub tail_steps: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            gamma: None,
            k_b: 1.0,
            k0: None,
            modes: 4,
            etas: vec![0.0, 0.01],
            start_scales: vec![0.5, 2.0],
            times: (0..10).map(|i| i * 100).collect(),
            ensemble: 32,
            tail_steps: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    /// Exponent of the premetric; defaults to half of `α₀`.
    pub alpha: Option<f64>,
    pub upsilon: Option<f64>,
    pub n: f64,
    /// Multiples of the relaxed reference state used as `x` and `y`.
    pub x_scale: f64,
    pub y_scale: f64,
    /// Probe times in steps.
    pub times: Vec<u64>,
    pub ensemble: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            alpha: None,
            upsilon: None,
            n: 1.0,
            x_scale: 1.0,
            y_scale: -1.0,
            times: vec![0, 100, 500],
            ensemble: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub instances: usize,
    pub max_dim: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { instances: 100, max_dim: 50 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The resolved config as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let r = &self.run;
        if !(r.dt > 0.0 && r.dt.is_finite()) {
            return bad(format!("run.dt = {} must be positive", r.dt));
        }
        if r.ensemble == 0 || r.stride == 0 {
            return bad("run.ensemble and run.stride must be positive".into());
        }
        let resp = &self.response;
        if !(resp.epsilon > 0.0) || !(resp.delta > 0.0) || resp.delta >= resp.epsilon {
            return bad(format!(
                "response.delta = {} must be positive and below response.epsilon = {}",
                resp.delta, resp.epsilon
            ));
        }
        if resp.separations.iter().any(|s| *s >= resp.epsilon) {
            return bad("every Hölder separation must stay inside (a0 − ε, a0 + ε)".into());
        }
        if self.forcing.mode == FamilyKind::Holder && !(self.forcing.beta_f > 0.0 && self.forcing.beta_f <= 1.0) {
            return bad(format!("forcing.beta_f = {} must lie in (0, 1]", self.forcing.beta_f));
        }
        for o in &resp.observables {
            let fits = matches!(
                (self.model, o),
                (ModelKind::Ns | ModelKind::Qg, ObservableConfig::Mode { .. } | ObservableConfig::Band { .. })
                    | (ModelKind::Ou, ObservableConfig::Linear { .. } | ObservableConfig::Quadratic { .. })
                    | (ModelKind::Chain, ObservableConfig::Table { .. })
            );
            if !fits {
                return bad(format!("observable '{}' does not apply to this model", o.name()));
            }
        }
        if self.audit.gamma.is_some_and(|g| !(g > 0.0)) || !(self.audit.k_b >= 0.0) {
            return bad("audit.gamma must be positive and audit.k_b nonnegative".into());
        }
        if !(self.transport.n > 0.0) || self.transport.ensemble == 0 {
            return bad("transport.n and transport.ensemble must be positive".into());
        }
        Ok(())
    }

    /// `a0 ± ε` — the interval on which forcing bounds are taken.
    pub fn interval(&self) -> (f64, f64) {
        (self.response.a0 - self.response.epsilon, self.response.a0 + self.response.epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves_defaults() {
        let c = ExperimentConfig::from_toml("model = \"ou\"").unwrap();
        assert_eq!(c.run.ensemble, 4);
        let echoed = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, echoed);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("model = \"ou\"\nbogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("model = \"ou\"\n[run]\nsteps = 1\nspeed = 2").is_err());
        assert!(ExperimentConfig::from_toml("model = \"other\"").is_err());
    }

    #[test]
    fn observables_must_match_the_model() {
        let text = r#"
model = "ou"
[[response.observables]]
kind = "table"
name = "x"
values = [1.0]
"#;
        assert!(matches!(ExperimentConfig::from_toml(text), Err(CliError::Config(_))));
    }
}

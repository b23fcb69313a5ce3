//! Building models, observables and audit tables from a config, and the
//! per-model glue the subcommands need (checkpoint payloads, scaling of
//! states, coupling).

use std::sync::Arc;

use spdr_core::audit::{
    audit_coupling, derive_params_ns, derive_params_qg, estimate_k0_ns, estimate_k0_qg, AssumptionAParams,
    CouplingReport, NsTableInput, QgTableInput, RCondition,
};
use spdr_core::dynamics::{Dynamics, StateMetric, Trajectory};
use spdr_core::noise::{ForcingFamily, ForcingMode, NoiseSpec};
use spdr_core::ns::{NavierStokes, NsParams, NsState};
use spdr_core::observable::{ChainObservable, Part, SpectralObservable, VectorObservable};
use spdr_core::oracles::{AffineChain, Amplitude, ChainSampler, OuModel};
use spdr_core::qg::{QgParams, QgState, TwoLayerQg};
use spdr_core::response::Gate;
use spdr_core::rng::SeqRng;
use spdr_core::spectral::{Grid, SpectralField};
use spdr_core::Complex64;

use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, FamilyKind, ModelKind, ObservableConfig, PartKind};
use crate::error::{CliError, Result};

/// Trajectory index reserved for the relaxation run that produces the
/// reference state; ensembles use indices from 0.
pub const REFERENCE_STREAM: u32 = u32::MAX;

/// The assumption table of a model, when it has one.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditTable {
    pub params: AssumptionAParams,
    pub gamma_cap: f64,
    pub k0: f64,
    pub f_sup_sq: f64,
    pub r_condition: Option<RCondition>,
}

impl AuditTable {
    pub fn gate(&self) -> Gate {
        self.r_condition.map_or(Gate::Verified, |r| r.gate())
    }
}

/// What the subcommands need from a model beyond [`Dynamics`].
pub trait Backend: Dynamics + StateMetric<<Self as Dynamics>::State> {
    fn kind(&self) -> ModelKind;

    fn zero_state(&self) -> Self::State;

    /// `c·x`.
    fn scale(&self, x: &Self::State, c: f64) -> Self::State;

    fn encode(&self, x: &Self::State) -> (u32, Vec<Vec<Complex64>>);

    fn decode(&self, ck: &Checkpoint) -> Result<Self::State>;

    fn table(&self, cfg: &ExperimentConfig) -> Result<Option<AuditTable>>;

    /// Runs the controlled coupling from `(x, y)` when the model has one.
    #[allow(clippy::too_many_arguments)]
    fn coupling(
        &self,
        _x: &Self::State,
        _y: &Self::State,
        _a: f64,
        _modes: usize,
        _steps: u64,
        _every: u64,
        _seed: u64,
    ) -> Option<spdr_core::Result<CouplingReport>> {
        None
    }
}

/// The state reached from zero after `burn_in` steps at `a` on a stream of
/// its own.
pub fn reference_state<B: Backend>(b: &B, a: f64, burn_in: u64, seed: u64) -> spdr_core::Result<B::State> {
    let mut t = Trajectory::new(b, b.zero_state(), seed, REFERENCE_STREAM);
    t.run(a, burn_in)?;
    Ok(t.into_state())
}

fn field(grid: &Arc<Grid>, modes: &[[f64; 4]]) -> Result<SpectralField> {
    let mut f = SpectralField::zeros(grid);
    for &[m, n, re, im] in modes {
        if m.fract() != 0.0 || n.fract() != 0.0 {
            return Err(CliError::Config(format!("mode indices ({m}, {n}) must be integers")));
        }
        f.set(m as i64, n as i64, Complex64::new(re, im))?;
    }
    Ok(f)
}

fn check_len(what: &str, data: &[Complex64], len: usize) -> Result<()> {
    if data.len() == len {
        Ok(())
    } else {
        Err(CliError::Checkpoint(format!("{what}: {} coefficients, expected {len}", data.len())))
    }
}

fn expect_model(ck: &Checkpoint, kind: ModelKind, k: u32) -> Result<()> {
    if ck.model != kind || ck.k != k {
        return Err(CliError::Checkpoint(format!(
            "checkpoint holds a {:?} state with K = {}, the config describes {:?} with K = {k}",
            ck.model, ck.k, kind
        )));
    }
    Ok(())
}

pub struct Spectral {
    pub grid: Arc<Grid>,
    pub noise: NoiseSpec,
    pub forcing: ForcingFamily,
}

pub fn spectral_setup(cfg: &ExperimentConfig) -> Result<Spectral> {
    let grid = Grid::new(cfg.grid.l, cfg.grid.k)?;
    let mut noise = NoiseSpec::power_law(&grid, cfg.noise.c, cfg.noise.s, cfg.noise.k_max)?;
    for &[m, n, q] in &cfg.noise.overrides {
        noise = noise.with_override(m as i64, n as i64, q)?;
    }
    let mode = match cfg.forcing.mode {
        FamilyKind::Linear => ForcingMode::Linear,
        FamilyKind::Holder => {
            ForcingMode::Holder { beta: cfg.forcing.beta_f, anchor: cfg.forcing.anchor.unwrap_or(cfg.response.a0) }
        }
    };
    let forcing = ForcingFamily::new(field(&grid, &cfg.forcing.base)?, field(&grid, &cfg.forcing.dir)?, mode)?;
    Ok(Spectral { grid, noise, forcing })
}

pub fn build_ns(cfg: &ExperimentConfig) -> Result<NavierStokes> {
    let s = spectral_setup(cfg)?;
    let p = &cfg.physics;
    let params = NsParams {
        nu: p.nu,
        dt: cfg.run.dt,
        stability: p.stability,
        max_courant: p.max_courant,
        nonlinear: p.nonlinear,
    };
    Ok(NavierStokes::new(&s.grid, params, s.noise, s.forcing)?)
}

pub fn build_qg(cfg: &ExperimentConfig) -> Result<TwoLayerQg> {
    let s = spectral_setup(cfg)?;
    let p = &cfg.physics;
    let params = QgParams {
        nu: p.nu,
        r: p.r,
        beta: p.beta,
        f1: p.f1,
        f2: p.f2,
        h1: p.h1,
        h2: p.h2,
        dt: cfg.run.dt,
        max_courant: p.max_courant,
        nonlinear: p.nonlinear,
    };
    Ok(TwoLayerQg::new(&s.grid, params, s.noise, s.forcing)?)
}

fn amplitude(cfg: &ExperimentConfig) -> Amplitude {
    match cfg.forcing.mode {
        FamilyKind::Linear => Amplitude::Linear,
        FamilyKind::Holder => {
            Amplitude::Holder { beta: cfg.forcing.beta_f, anchor: cfg.forcing.anchor.unwrap_or(cfg.response.a0) }
        }
    }
}

pub fn build_ou(cfg: &ExperimentConfig) -> Result<OuModel> {
    let o = &cfg.ou;
    let m = OuModel::new(&o.drift, o.sigma2.clone(), o.f0.clone(), amplitude(cfg), cfg.run.dt)?;
    if o.base.is_empty() {
        Ok(m)
    } else {
        Ok(m.with_base(o.base.clone())?)
    }
}

pub fn build_chain(cfg: &ExperimentConfig) -> Result<AffineChain> {
    let c = &cfg.chain;
    if !c.base.is_empty() {
        return Ok(AffineChain::new(c.d, c.base.clone(), c.direction.clone(), amplitude(cfg))?);
    }
    let mut rng = SeqRng::new(c.instance);
    Ok(match cfg.forcing.mode {
        FamilyKind::Linear => AffineChain::random_smooth(c.d, c.mix, &mut rng)?,
        FamilyKind::Holder => AffineChain::random_holder(
            c.d,
            c.mix,
            cfg.forcing.beta_f,
            cfg.forcing.anchor.unwrap_or(cfg.response.a0),
            &mut rng,
        )?,
    })
}

fn part(p: PartKind) -> Part {
    match p {
        PartKind::Re => Part::Re,
        PartKind::Im => Part::Im,
    }
}

pub fn spectral_observables(cfg: &ExperimentConfig) -> (Vec<String>, Vec<SpectralObservable>) {
    if cfg.response.observables.is_empty() {
        let energy =
            SpectralObservable::BandEnergy { layer: 0, k_min: 0.0, k_max: f64::INFINITY, sobolev: -1.0, clip: 1e3 };
        let enstrophy =
            SpectralObservable::BandEnergy { layer: 0, k_min: 0.0, k_max: f64::INFINITY, sobolev: 0.0, clip: 1e3 };
        return (vec!["energy".into(), "enstrophy".into()], vec![energy, enstrophy]);
    }
    cfg.response
        .observables
        .iter()
        .filter_map(|o| {
            let obs = match *o {
                ObservableConfig::Mode { layer, m, n, part: p, clip, .. } => {
                    SpectralObservable::Mode { layer, m, n, part: part(p), clip }
                }
                ObservableConfig::Band { layer, k_min, k_max, sobolev, clip, .. } => {
                    SpectralObservable::BandEnergy { layer, k_min, k_max, sobolev, clip }
                }
                _ => return None,
            };
            Some((o.name().to_string(), obs))
        })
        .unzip()
}

pub fn vector_observables(cfg: &ExperimentConfig, d: usize) -> (Vec<String>, Vec<VectorObservable>) {
    if cfg.response.observables.is_empty() {
        let mut c = vec![0.0; d];
        c[0] = 1.0;
        return (vec!["x0".into()], vec![VectorObservable::Linear { c, clip: f64::INFINITY }]);
    }
    cfg.response
        .observables
        .iter()
        .filter_map(|o| {
            let obs = match o {
                ObservableConfig::Linear { c, clip, .. } => VectorObservable::Linear { c: c.clone(), clip: *clip },
                ObservableConfig::Quadratic { h, clip, .. } => {
                    VectorObservable::Quadratic { h: h.clone(), clip: *clip }
                }
                _ => return None,
            };
            Some((o.name().to_string(), obs))
        })
        .unzip()
}

pub fn chain_observables(cfg: &ExperimentConfig, d: usize) -> Result<(Vec<String>, Vec<ChainObservable>)> {
    if cfg.response.observables.is_empty() {
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        return Ok((vec!["state0".into()], vec![ChainObservable(v)]));
    }
    let mut names = Vec::new();
    let mut obs = Vec::new();
    for o in &cfg.response.observables {
        if let ObservableConfig::Table { name, values } = o {
            if values.len() != d {
                return Err(CliError::Config(format!(
                    "observable '{name}' has {} values for {d} states",
                    values.len()
                )));
            }
            names.push(name.clone());
            obs.push(ChainObservable(values.clone()));
        }
    }
    Ok((names, obs))
}

/// `sup ‖f(a)‖²` over the interval endpoints and `a0` in the weighted
/// norm `Σ λ^s |f̂_k|²` (the amplitude is monotone in `a`).
fn forcing_sup(forcing: &ForcingFamily, cfg: &ExperimentConfig, s: f64) -> f64 {
    let (lo, hi) = cfg.interval();
    [lo, cfg.response.a0, hi].iter().map(|&a| forcing.at(a).norm_sq(s)).fold(0.0, f64::max)
}

const K0_SAMPLES: usize = 200;

/// The configured Lyapunov exponent, or half of the largest admissible one.
fn admissible_gamma(cfg: &ExperimentConfig, cap: f64) -> f64 {
    cfg.audit.gamma.unwrap_or(0.5 * cap)
}

impl Backend for NavierStokes {
    fn kind(&self) -> ModelKind {
        ModelKind::Ns
    }

    fn zero_state(&self) -> NsState {
        NsState::zero(self.grid())
    }

    fn scale(&self, x: &NsState, c: f64) -> NsState {
        let mut y = x.clone();
        y.omega.scale(c);
        y
    }

    fn encode(&self, x: &NsState) -> (u32, Vec<Vec<Complex64>>) {
        (self.grid().size() as u32, vec![x.omega.coeffs().to_vec()])
    }

    fn decode(&self, ck: &Checkpoint) -> Result<NsState> {
        let k = self.grid().size() as u32;
        expect_model(ck, ModelKind::Ns, k)?;
        check_len("vorticity", &ck.arrays[0], self.grid().len())?;
        let mut x = NsState::new(SpectralField::from_coeffs(self.grid(), ck.arrays[0].clone())?);
        x.t = ck.time;
        Ok(x)
    }

    fn table(&self, cfg: &ExperimentConfig) -> Result<Option<AuditTable>> {
        let g = self.grid();
        let k0 = cfg.audit.k0.unwrap_or_else(|| estimate_k0_ns(self, K0_SAMPLES, cfg.run.seed));
        // The velocity forcing in H⁻¹ is the vorticity forcing in H⁻².
        let f_sup_sq = forcing_sup(self.forcing(), cfg, -2.0);
        let mut input = NsTableInput {
            nu: self.params().nu,
            lambda1: g.lambda1(),
            lambda_n: g.basis_lambda(cfg.audit.modes.max(1)),
            trace_q: self.velocity_noise_trace(),
            f_sup_sq,
            gamma: 0.0,
            k0,
        };
        input.gamma = admissible_gamma(cfg, input.gamma_cap());
        let params = derive_params_ns(&input)?;
        Ok(Some(AuditTable { params, gamma_cap: input.gamma_cap(), k0, f_sup_sq, r_condition: None }))
    }

    fn coupling(
        &self,
        x: &NsState,
        y: &NsState,
        a: f64,
        modes: usize,
        steps: u64,
        every: u64,
        seed: u64,
    ) -> Option<spdr_core::Result<CouplingReport>> {
        Some(audit_coupling(self, x, y, a, modes, steps, every, seed))
    }
}

impl Backend for TwoLayerQg {
    fn kind(&self) -> ModelKind {
        ModelKind::Qg
    }

    fn zero_state(&self) -> QgState {
        QgState::zero(self.grid())
    }

    fn scale(&self, x: &QgState, c: f64) -> QgState {
        let mut y = x.clone();
        y.q1.scale(c);
        y.q2.scale(c);
        y
    }

    fn encode(&self, x: &QgState) -> (u32, Vec<Vec<Complex64>>) {
        (self.grid().size() as u32, vec![x.q1.coeffs().to_vec(), x.q2.coeffs().to_vec()])
    }

    fn decode(&self, ck: &Checkpoint) -> Result<QgState> {
        let k = self.grid().size() as u32;
        expect_model(ck, ModelKind::Qg, k)?;
        check_len("upper layer", &ck.arrays[0], self.grid().len())?;
        check_len("lower layer", &ck.arrays[1], self.grid().len())?;
        let mut x = QgState::new(
            SpectralField::from_coeffs(self.grid(), ck.arrays[0].clone())?,
            SpectralField::from_coeffs(self.grid(), ck.arrays[1].clone())?,
        );
        x.t = ck.time;
        Ok(x)
    }

    fn table(&self, cfg: &ExperimentConfig) -> Result<Option<AuditTable>> {
        let k0 = cfg.audit.k0.unwrap_or_else(|| estimate_k0_qg(self, K0_SAMPLES, cfg.run.seed));
        let p = self.params();
        let f_sup_sq = forcing_sup(self.forcing(), cfg, -2.0);
        let mut input = QgTableInput {
            nu: p.nu,
            r: p.r,
            lambda1: self.grid().lambda1(),
            trace_q: self.noise().trace(),
            t_q: self.t_q(),
            h1: p.h1,
            f_sup_sq,
            gamma: 0.0,
            k0,
            c0: self.c0(),
            k_b: cfg.audit.k_b,
        };
        input.gamma = admissible_gamma(cfg, input.gamma_cap());
        let (params, rc) = derive_params_qg(&input)?;
        Ok(Some(AuditTable { params, gamma_cap: input.gamma_cap(), k0, f_sup_sq, r_condition: Some(rc) }))
    }

    fn coupling(
        &self,
        x: &QgState,
        y: &QgState,
        a: f64,
        modes: usize,
        steps: u64,
        every: u64,
        seed: u64,
    ) -> Option<spdr_core::Result<CouplingReport>> {
        Some(audit_coupling(self, x, y, a, modes, steps, every, seed))
    }
}

impl Backend for OuModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Ou
    }

    fn zero_state(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn scale(&self, x: &Vec<f64>, c: f64) -> Vec<f64> {
        x.iter().map(|v| c * v).collect()
    }

    fn encode(&self, x: &Vec<f64>) -> (u32, Vec<Vec<Complex64>>) {
        (x.len() as u32, vec![x.iter().map(|v| Complex64::new(*v, 0.0)).collect()])
    }

    fn decode(&self, ck: &Checkpoint) -> Result<Vec<f64>> {
        expect_model(ck, ModelKind::Ou, self.dim() as u32)?;
        Ok(ck.arrays[0].iter().map(|c| c.re).collect())
    }

    /// The linear analogue of the Navier–Stokes table with `ν = 1`, the
    /// symmetric part of the drift in place of `−Δ`, and no advection.
    fn table(&self, cfg: &ExperimentConfig) -> Result<Option<AuditTable>> {
        let a = self.drift();
        let sym = (a + a.transpose()) * 0.5;
        let lmin = sym.symmetric_eigenvalues().min();
        let (lo, hi) = cfg.interval();
        let f_sup_sq = [lo, cfg.response.a0, hi]
            .iter()
            .map(|&x| self.forcing(x).iter().map(|f| f * f).sum::<f64>() / lmin)
            .fold(0.0, f64::max);
        let mut input = NsTableInput {
            nu: 1.0,
            lambda1: lmin,
            lambda_n: lmin,
            trace_q: self.sigma2().iter().sum(),
            f_sup_sq,
            gamma: 0.0,
            k0: 0.0,
        };
        input.gamma = admissible_gamma(cfg, input.gamma_cap());
        let params = derive_params_ns(&input)?;
        Ok(Some(AuditTable { params, gamma_cap: input.gamma_cap(), k0: 0.0, f_sup_sq, r_condition: None }))
    }
}

impl Backend for ChainSampler<'_> {
    fn kind(&self) -> ModelKind {
        ModelKind::Chain
    }

    fn zero_state(&self) -> usize {
        0
    }

    /// Negative factors reflect the state index, so that a reference state
    /// and its "negative" are distinct.
    fn scale(&self, x: &usize, c: f64) -> usize {
        if c < 0.0 {
            self.chain().dim() - 1 - x
        } else {
            *x
        }
    }

    fn encode(&self, x: &usize) -> (u32, Vec<Vec<Complex64>>) {
        (1, vec![vec![Complex64::new(*x as f64, 0.0)]])
    }

    fn decode(&self, ck: &Checkpoint) -> Result<usize> {
        expect_model(ck, ModelKind::Chain, 1)?;
        let v = ck.arrays[0][0].re;
        if v < 0.0 || v.fract() != 0.0 || !self.is_finite(&(v as usize)) {
            return Err(CliError::Checkpoint(format!("{v} is not a state of this chain")));
        }
        Ok(v as usize)
    }

    fn table(&self, _: &ExperimentConfig) -> Result<Option<AuditTable>> {
        Ok(None)
    }
}

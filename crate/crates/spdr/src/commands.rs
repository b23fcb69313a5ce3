//! The subcommands. Each one computes in parallel, reduces in task order and
//! then writes its CSVs and the manifest through one [`Output`].

use std::fmt::Write as _;
use std::sync::mpsc;

use spdr_core::audit::{audit_exp_moment, audit_lyapunov, audit_tail};
use spdr_core::dynamics::{Observable, Trajectory};
use spdr_core::exec::Executor;
use spdr_core::observable::VectorObservable;
use spdr_core::oracles::{AffineChain, ChainSampler, ResolventReport};
use spdr_core::response::{
    holder_scan, pilot_window, response_fdt, response_finite_difference, FdtPlan, Gate, ResponseEstimate, SamplingPlan,
};
use spdr_core::rng::SeqRng;
use spdr_core::transport::{contraction_probe, Semimetric, SemimetricParams};

use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, FamilyKind, ModelKind};
use crate::error::{CliError, Result};
use crate::exec::RayonExecutor;
use crate::model::{
    build_chain, build_ns, build_ou, build_qg, chain_observables, reference_state, spectral_observables,
    vector_observables, AuditTable, Backend,
};
use crate::output::{num, Output, Table};

/// Recorded `(step, observable values)` pairs of one trajectory.
type Records = Vec<(u64, Vec<f64>)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Exact response identities on random finite chains.
    ChainResponse,
    /// Closed-form Gaussian values for the configured OU model.
    Ou,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Respond,
    Holder,
    Audit,
    Oracle(Suite),
    Wasserstein,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Respond => "respond",
            Command::Holder => "holder",
            Command::Audit => "audit",
            Command::Oracle(_) => "oracle",
            Command::Wasserstein => "wasserstein",
        }
    }
}

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub exec: &'a RayonExecutor,
    pub out: Output,
    pub resume: Option<Checkpoint>,
    pub skip_audit: bool,
}

/// Model-specific closed forms available to the subcommands.
#[derive(Default)]
struct Extras {
    /// Exact `d⟨φ, μ_a⟩/da` at `a0`, per observable.
    exact: Vec<Option<f64>>,
    /// Spectral-gap failure of a finite chain.
    gap_error: Option<String>,
    resolvent: Option<ResolventReport>,
}

trait Visit {
    fn visit<B, O>(&mut self, ctx: &mut Context, b: &B, names: &[String], obs: &[O], extras: &Extras) -> Result<()>
    where
        B: Backend + Sync,
        O: Observable<B::State>;
}

fn dispatch<V: Visit>(ctx: &mut Context, v: &mut V) -> Result<()> {
    let cfg = ctx.cfg;
    match cfg.model {
        ModelKind::Ns => {
            let m = build_ns(cfg)?;
            let (names, obs) = spectral_observables(cfg);
            v.visit(ctx, &m, &names, &obs, &Extras::default())
        }
        ModelKind::Qg => {
            let m = build_qg(cfg)?;
            let (names, obs) = spectral_observables(cfg);
            v.visit(ctx, &m, &names, &obs, &Extras::default())
        }
        ModelKind::Ou => {
            let m = build_ou(cfg)?;
            let (names, obs) = vector_observables(cfg, m.dim());
            let exact = obs.iter().map(|o| m.exact_discrete(cfg.response.a0, o).ok().map(|r| r.1)).collect();
            v.visit(ctx, &m, &names, &obs, &Extras { exact, ..Extras::default() })
        }
        ModelKind::Chain => {
            let c = build_chain(cfg)?;
            let (names, obs) = chain_observables(cfg, c.dim())?;
            let a0 = cfg.response.a0;
            let exact = obs.iter().map(|o| c.response_exact(a0, &o.0).ok()).collect();
            let (resolvent, gap_error) = match c.resolvent_report(a0) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let s = ChainSampler::new(&c);
            v.visit(ctx, &s, &names, &obs, &Extras { exact, gap_error, resolvent })
        }
    }
}

pub fn run(command: Command, mut ctx: Context) -> Result<()> {
    let result = match command {
        Command::Simulate => dispatch(&mut ctx, &mut Simulate),
        Command::Respond => dispatch(&mut ctx, &mut Respond),
        Command::Holder => dispatch(&mut ctx, &mut Holder),
        Command::Audit => dispatch(&mut ctx, &mut Audit),
        Command::Wasserstein => dispatch(&mut ctx, &mut Wasserstein),
        Command::Oracle(suite) => oracle(&mut ctx, suite),
    };
    // The manifest is written even when a precondition fails after the
    // report was produced, so the failing run is still documented.
    match &result {
        Ok(()) | Err(CliError::Precondition(_)) => ctx.out.write_manifest(command.name(), ctx.cfg)?,
        Err(_) => {}
    }
    result
}

fn common(cfg: &ExperimentConfig, method: &str) -> Vec<String> {
    vec![num(cfg.response.a0), cfg.run.seed.to_string(), method.to_string()]
}

fn row(cfg: &ExperimentConfig, method: &str, rest: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut r = common(cfg, method);
    r.extend(rest);
    r
}

/// Gate of the likelihood-ratio path: the model's spectral-gap conditions
/// unless the audit is explicitly skipped.
fn gate(ctx: &Context, table: Option<&AuditTable>, extras: &Extras) -> Gate {
    if ctx.skip_audit {
        return Gate::Overridden;
    }
    if let Some(e) = &extras.gap_error {
        return Gate::Unmet(e.clone());
    }
    table.map_or(Gate::Verified, AuditTable::gate)
}

struct Simulate;

impl Visit for Simulate {
    fn visit<B, O>(&mut self, ctx: &mut Context, b: &B, names: &[String], obs: &[O], _: &Extras) -> Result<()>
    where
        B: Backend + Sync,
        O: Observable<B::State>,
    {
        let cfg = ctx.cfg;
        let (a, seed) = (cfg.response.a0, cfg.run.seed);
        let total = cfg.run.burn_in + cfg.run.steps;
        let starts: Vec<(u32, u64, B::State)> = match &ctx.resume {
            Some(ck) => {
                if ck.seed != seed {
                    return Err(CliError::Config(format!(
                        "checkpoint was written with seed {}, the run uses seed {seed}",
                        ck.seed
                    )));
                }
                let traj = u32::try_from(ck.trajectory)
                    .map_err(|_| CliError::Checkpoint(format!("trajectory index {}", ck.trajectory)))?;
                vec![(traj, ck.step, b.decode(ck)?)]
            }
            None => (0..cfg.run.ensemble as u32).map(|i| (i, 0, b.zero_state())).collect(),
        };
        let every = cfg.run.checkpoint_every;
        let checkpoint = |x: &B::State, traj: u32, step: u64| {
            let (k, arrays) = b.encode(x);
            Checkpoint { model: b.kind(), k, time: step as f64 * b.dt(), seed, trajectory: traj as u64, step, arrays }
        };
        let (tx, rx) = mpsc::channel::<(String, Checkpoint)>();
        let dir = ctx.out.dir().to_path_buf();
        let results = std::thread::scope(|s| {
            // Single writer for periodic checkpoints.
            let writer = s.spawn(move || -> Result<()> {
                for (name, ck) in rx {
                    ck.save(&dir.join(name))?;
                }
                Ok(())
            });
            let results = ctx.exec.map(starts.len(), |task| -> Result<(Records, Checkpoint)> {
                let (traj, step0, x0) = &starts[task];
                let mut t = Trajectory::resume(b, x0.clone(), seed, *traj, *step0);
                let mut records = Vec::new();
                while t.step_index() < total {
                    t.step(a, None)?;
                    let n = t.step_index();
                    if n > cfg.run.burn_in && (n - cfg.run.burn_in).is_multiple_of(cfg.run.stride) {
                        records.push((n, obs.iter().map(|o| o.eval(t.state())).collect()));
                    }
                    if every > 0 && n.is_multiple_of(every) && n < total {
                        let _ = tx.send((format!("checkpoint_{traj}.spdr"), checkpoint(t.state(), *traj, n)));
                    }
                }
                Ok((records, checkpoint(t.state(), *traj, t.step_index())))
            });
            drop(tx);
            let written = writer.join().expect("checkpoint writer");
            written.map(|_| results)
        })?;
        let mut table = Table::new(&["a", "seed", "method", "trajectory", "step", "time", "observable", "value"]);
        for ((traj, _, _), r) in starts.iter().zip(results) {
            let (records, last) = r?;
            for (n, values) in records {
                for (name, v) in names.iter().zip(values) {
                    table.push(row(
                        cfg,
                        "simulate",
                        [traj.to_string(), n.to_string(), num(n as f64 * b.dt()), name.clone(), num(v)],
                    ));
                }
            }
            last.save(&ctx.out.path(&format!("final_{traj}.spdr")))?;
        }
        ctx.out.write_csv("simulate.csv", &table)
    }
}

fn response_rows(cfg: &ExperimentConfig, name: &str, r: &ResponseEstimate, table: &mut Table, lags: &mut Table) {
    table.push(row(
        cfg,
        r.method.name(),
        [
            name.to_string(),
            num(r.value),
            num(r.sem),
            num(r.window),
            r.lags.to_string(),
            r.samples.to_string(),
            r.truncation_flag.to_string(),
        ],
    ));
    for (n, t) in r.lag_terms.iter().enumerate() {
        lags.push(row(cfg, r.method.name(), [name.to_string(), n.to_string(), num(t.value), num(t.sem)]));
    }
}

struct Respond;

impl Visit for Respond {
    fn visit<B, O>(&mut self, ctx: &mut Context, b: &B, names: &[String], obs: &[O], extras: &Extras) -> Result<()>
    where
        B: Backend + Sync,
        O: Observable<B::State>,
    {
        let cfg = ctx.cfg;
        let (a0, seed, resp) = (cfg.response.a0, cfg.run.seed, &cfg.response);
        // Preconditions first: they are cheap and decide whether anything runs.
        b.check_score_available()?;
        let table = b.table(cfg)?;
        let gate = gate(ctx, table.as_ref(), extras);
        gate.check()?;
        let x0 = reference_state(b, a0, cfg.run.burn_in, seed)?;
        let window = if resp.window > 0 { resp.window } else { pilot_window(b, &x0, a0, obs, 0, cfg.run.steps, seed)? };
        let burn_in = window * resp.lags as u64;
        let plan = FdtPlan {
            burn_in,
            window,
            lags: resp.lags,
            windows: resp.windows,
            batches: resp.batches,
            ensemble: cfg.run.ensemble,
            seed,
        };
        let fdt = response_fdt(b, &x0, a0, obs, &plan, &gate, ctx.exec)?;
        let sampling = SamplingPlan {
            burn_in,
            steps: resp.windows * window,
            stride: cfg.run.stride,
            batches: resp.batches,
            ensemble: cfg.run.ensemble,
            seed,
        };
        let fd = response_finite_difference(b, &x0, a0, resp.delta, resp.crn, obs, &sampling, ctx.exec)?;
        let mut out = Table::new(&[
            "a",
            "seed",
            "method",
            "observable",
            "value",
            "sem",
            "window",
            "lags",
            "samples",
            "truncation_flag",
        ]);
        let mut lags = Table::new(&["a", "seed", "method", "observable", "lag", "value", "sem"]);
        for (k, name) in names.iter().enumerate() {
            response_rows(cfg, name, &fdt[k], &mut out, &mut lags);
            response_rows(cfg, name, &fd[k], &mut out, &mut lags);
            if let Some(Some(v)) = extras.exact.get(k) {
                response_rows(cfg, name, &ResponseEstimate::exact(*v), &mut out, &mut lags);
            }
        }
        ctx.out.write_csv("respond.csv", &out)?;
        ctx.out.write_csv("lags.csv", &lags)
    }
}

struct Holder;

impl Visit for Holder {
    fn visit<B, O>(&mut self, ctx: &mut Context, b: &B, names: &[String], obs: &[O], _: &Extras) -> Result<()>
    where
        B: Backend + Sync,
        O: Observable<B::State>,
    {
        let cfg = ctx.cfg;
        let (a0, seed) = (cfg.response.a0, cfg.run.seed);
        let alpha0 = b.table(cfg)?.map_or(0.5, |t| t.params.alpha0);
        let beta_f = if cfg.forcing.mode == FamilyKind::Holder { cfg.forcing.beta_f } else { 1.0 };
        let floor = alpha0 * beta_f;
        let x0 = reference_state(b, a0, cfg.run.burn_in, seed)?;
        let plan = SamplingPlan {
            burn_in: cfg.run.burn_in,
            steps: cfg.run.steps,
            stride: cfg.run.stride,
            batches: cfg.response.batches,
            ensemble: cfg.run.ensemble,
            seed,
        };
        let scans = holder_scan(b, &x0, a0, &cfg.response.separations, floor, obs, &plan, ctx.exec)?;
        let mut points = Table::new(&["a", "seed", "method", "observable", "separation", "difference", "sem", "used"]);
        let mut fits = Table::new(&[
            "a",
            "seed",
            "method",
            "observable",
            "slope",
            "intercept",
            "ci",
            "floor",
            "decades",
            "degenerate",
            "passes",
        ]);
        let mut notes = String::new();
        for (name, s) in names.iter().zip(&scans) {
            for p in &s.points {
                points.push(row(
                    cfg,
                    "holder",
                    [
                        name.clone(),
                        num(p.separation),
                        num(p.difference.value),
                        num(p.difference.sem),
                        p.used.to_string(),
                    ],
                ));
            }
            fits.push(row(
                cfg,
                "holder",
                [
                    name.clone(),
                    num(s.slope),
                    num(s.intercept),
                    num(s.ci),
                    num(s.floor),
                    num(s.decades),
                    s.degenerate.to_string(),
                    s.passes().to_string(),
                ],
            ));
            for w in &s.warnings {
                let _ = writeln!(notes, "{name}: {w}");
            }
        }
        ctx.out.write_csv("holder.csv", &points)?;
        ctx.out.write_csv("holder_fit.csv", &fits)?;
        if !notes.is_empty() {
            ctx.out.write_text("holder_warnings.txt", &notes)?;
        }
        Ok(())
    }
}

struct Audit;

impl Visit for Audit {
    fn visit<B, O>(&mut self, ctx: &mut Context, b: &B, _: &[String], _: &[O], extras: &Extras) -> Result<()>
    where
        B: Backend + Sync,
        O: Observable<B::State>,
    {
        let cfg = ctx.cfg;
        let au = &cfg.audit;
        let (a0, seed) = (cfg.response.a0, cfg.run.seed);
        let mut quantities = Table::new(&["a", "seed", "method", "quantity", "value"]);
        let mut text = String::new();
        let mut q = |method: &str, name: &str, v: f64, text: &mut String| {
            quantities.push(row(cfg, method, [name.to_string(), num(v)]));
            let _ = writeln!(text, "{method:>10}  {name:<22} {v}");
        };
        let table = b.table(cfg)?;
        if let Some(t) = &table {
            let p = &t.params;
            for (name, v) in [
                ("kappa0", p.kappa0),
                ("kappa1", p.kappa1),
                ("kappa2", p.kappa2),
                ("kappa_eps", p.kappa_eps),
                ("gamma_eps", p.gamma_eps),
                ("k_eps", p.k_eps),
                ("gamma", p.gamma),
                ("gamma_cap", t.gamma_cap),
                ("upsilon", p.upsilon),
                ("alpha0", p.alpha0),
                ("k0", t.k0),
                ("f_sup_sq", t.f_sup_sq),
                ("feasible", f64::from(u8::from(p.feasible))),
            ] {
                q("table", name, v, &mut text);
            }
            if let Some(rc) = t.r_condition {
                q("table", "r", rc.r, &mut text);
                q("table", "r_threshold", rc.threshold, &mut text);
                q("table", "r_satisfied", f64::from(u8::from(rc.satisfied)), &mut text);
                let _ = writeln!(text, "note: k_B = {} is a user-supplied constant", au.k_b);
            }
        }
        if let Some(r) = &extras.resolvent {
            q("resolvent", "rho", r.rho, &mut text);
            q("resolvent", "spectral_rho", r.spectral_rho, &mut text);
            q("resolvent", "inverse_norm", r.inverse_norm, &mut text);
            q("resolvent", "bound", r.bound, &mut text);
            q("resolvent", "bound_holds", f64::from(u8::from(r.holds())), &mut text);
        }
        if let Some(e) = &extras.gap_error {
            let _ = writeln!(text, "chain: {e}");
        }
        if au.ensemble > 0 && cfg.model != ModelKind::Chain {
            let reference = reference_state(b, a0, cfg.run.burn_in, seed)?;
            let starts: Vec<B::State> = au.start_scales.iter().map(|c| b.scale(&reference, *c)).collect();
            let drift = audit_lyapunov(b, b, &starts, a0, &au.times, au.ensemble, seed, ctx.exec)?;
            let mut rows = Table::new(&["a", "seed", "method", "start", "v0", "time", "mean", "sem", "fitted"]);
            for p in &drift.points {
                rows.push(row(
                    cfg,
                    "lyapunov",
                    [p.start.to_string(), num(p.v0), num(p.time), num(p.mean.value), num(p.mean.sem), num(p.fitted)],
                ));
            }
            ctx.out.write_csv("audit_drift.csv", &rows)?;
            q("lyapunov", "c", drift.c, &mut text);
            q("lyapunov", "gamma_decay", drift.gamma_decay, &mut text);
            q("lyapunov", "k", drift.k, &mut text);
            q("lyapunov", "passes", f64::from(u8::from(drift.passes)), &mut text);
            if let Some(t) = &table {
                let p = &t.params;
                let tail = audit_tail(
                    b,
                    b,
                    &reference,
                    a0,
                    au.tail_steps,
                    au.ensemble,
                    p.kappa2,
                    p.kappa_eps,
                    seed,
                    ctx.exec,
                )?;
                q("tail", "gamma_hat", tail.gamma_hat, &mut text);
                q("tail", "holds_at_gamma", f64::from(u8::from(tail.holds(p.gamma))), &mut text);
                let mut rows = Table::new(&["a", "seed", "method", "level", "survival", "bound"]);
                let n = tail.xi.len();
                for i in (0..n).step_by((n / 50).max(1)) {
                    let r = tail.xi[i];
                    rows.push(row(
                        cfg,
                        "tail",
                        [num(r), num(tail.survival(r)), num((-2.0 * p.gamma * r.max(0.0)).exp())],
                    ));
                }
                ctx.out.write_csv("audit_tail.csv", &rows)?;
            }
            let moments = audit_exp_moment(b, b, &starts, a0, &au.etas, &au.times, au.ensemble, seed, ctx.exec)?;
            let mut rows = Table::new(&["a", "seed", "method", "eta", "start", "time", "value", "sem", "too_large"]);
            for r in &moments.rows {
                rows.push(row(
                    cfg,
                    "exp-moment",
                    [
                        num(r.eta),
                        r.start.to_string(),
                        num(r.time),
                        num(r.estimate.value),
                        num(r.estimate.sem),
                        r.too_large.to_string(),
                    ],
                ));
            }
            ctx.out.write_csv("audit_moments.csv", &rows)?;
            for f in &moments.fits {
                q("exp-moment", &format!("c(eta={})", f.eta), f.c, &mut text);
                if let Some(chi) = f.chi {
                    q("exp-moment", &format!("chi(eta={})", f.eta), chi, &mut text);
                }
            }
            if starts.len() >= 2 {
                let steps = au.times.iter().copied().max().unwrap_or(0);
                let every = (steps / 20).max(1);
                if let Some(c) = b.coupling(&starts[0], &starts[1], a0, au.modes, steps, every, seed) {
                    let c = c?;
                    let mut rows = Table::new(&["a", "seed", "method", "time", "distance_sq"]);
                    for (t, d) in c.times.iter().zip(&c.distance_sq) {
                        rows.push(row(cfg, "coupling", [num(*t), num(*d)]));
                    }
                    ctx.out.write_csv("audit_coupling.csv", &rows)?;
                    q("coupling", "log_slope", c.log_slope, &mut text);
                }
            }
        }
        ctx.out.write_csv("audit.csv", &quantities)?;
        ctx.out.write_text("audit.txt", &text)?;
        if let Some(rc) = table.and_then(|t| t.r_condition).filter(|rc| !rc.satisfied) {
            return Err(CliError::Precondition(format!(
                "bottom friction r = {} does not exceed the spectral-gap threshold {} (k_B = {})",
                rc.r, rc.threshold, au.k_b
            )));
        }
        if let Some(e) = &extras.gap_error {
            return Err(CliError::Precondition(e.clone()));
        }
        Ok(())
    }
}

struct Wasserstein;

impl Visit for Wasserstein {
    fn visit<B, O>(&mut self, ctx: &mut Context, b: &B, _: &[String], _: &[O], _: &Extras) -> Result<()>
    where
        B: Backend + Sync,
        O: Observable<B::State>,
    {
        let cfg = ctx.cfg;
        let tr = &cfg.transport;
        let (a0, seed) = (cfg.response.a0, cfg.run.seed);
        let (alpha0, upsilon) = b.table(cfg)?.map_or((0.5, 0.0), |t| (t.params.alpha0, t.params.upsilon));
        let params = SemimetricParams::new(tr.alpha.unwrap_or(0.5 * alpha0), tr.upsilon.unwrap_or(upsilon), tr.n)?;
        params.check_alpha(alpha0).map_err(|e| CliError::Precondition(e.to_string()))?;
        let semi = Semimetric::new(b, params);
        let reference = reference_state(b, a0, cfg.run.burn_in, seed)?;
        let (x, y) = (b.scale(&reference, tr.x_scale), b.scale(&reference, tr.y_scale));
        let mut table =
            Table::new(&["a", "seed", "method", "time", "value", "sem", "ratio", "ratio_sem", "degenerate"]);
        for &steps in &tr.times {
            let p = contraction_probe(b, &semi, &x, &y, a0, steps, tr.ensemble, seed, ctx.exec)?;
            for (method, e, r) in
                [("wasserstein", p.wasserstein, p.ratio()), ("coupling", p.coupling, p.coupling_ratio())]
            {
                table.push(row(
                    cfg,
                    method,
                    [num(p.time), num(e.value), num(e.sem), num(r.value), num(r.sem), p.degenerate.to_string()],
                ));
            }
        }
        ctx.out.write_csv("wasserstein.csv", &table)
    }
}

/// One random chain instance of the response-identity suite.
pub struct ChainCase {
    pub d: usize,
    pub a: f64,
    pub exact: f64,
    pub differentiated: f64,
    pub identity: (f64, f64),
    pub rho: f64,
    pub inverse_norm: f64,
    pub bound_holds: bool,
}

impl ChainCase {
    pub fn residual(&self) -> f64 {
        (self.exact - self.differentiated).abs()
    }

    pub fn identity_residual(&self) -> f64 {
        (self.identity.0 - self.identity.1).abs()
    }
}

/// Random smooth chain `i` of the suite: dimension cycles through
/// `2..=max_dim`, everything else is drawn from `seed + i`.
pub fn chain_case(seed: u64, i: usize, max_dim: usize) -> spdr_core::Result<ChainCase> {
    let d = 2 + i % (max_dim.max(2) - 1);
    let mut rng = SeqRng::new(seed.wrapping_add(i as u64));
    let chain = AffineChain::random_smooth(d, 0.05 + 0.5 * rng.uniform(), &mut rng)?;
    let a = 2.0 * rng.uniform() - 1.0;
    let phi: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let (a1, a2) = (2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0);
    let report = chain.resolvent_report(a)?;
    Ok(ChainCase {
        d,
        a,
        exact: chain.response_exact(a, &phi)?,
        differentiated: chain.response_by_differentiation(a, &phi)?,
        identity: chain.perturbation_identity(a1, a2, &phi)?,
        rho: report.rho,
        inverse_norm: report.inverse_norm,
        bound_holds: report.holds(),
    })
}

fn oracle(ctx: &mut Context, suite: Suite) -> Result<()> {
    let cfg = ctx.cfg;
    match suite {
        Suite::ChainResponse => {
            let oc = &cfg.oracle;
            let cases = ctx.exec.map(oc.instances, |i| chain_case(cfg.run.seed, i, oc.max_dim));
            let mut table = Table::new(&[
                "a",
                "seed",
                "method",
                "instance",
                "d",
                "response",
                "differentiated",
                "residual",
                "identity_lhs",
                "identity_rhs",
                "identity_residual",
                "rho",
                "inverse_norm",
                "bound_holds",
            ]);
            let mut worst: (f64, f64) = (0.0, 0.0);
            for (i, c) in cases.into_iter().enumerate() {
                let c = c?;
                worst = (worst.0.max(c.residual()), worst.1.max(c.identity_residual()));
                table.push(vec![
                    num(c.a),
                    cfg.run.seed.to_string(),
                    "exact".into(),
                    i.to_string(),
                    c.d.to_string(),
                    num(c.exact),
                    num(c.differentiated),
                    num(c.residual()),
                    num(c.identity.0),
                    num(c.identity.1),
                    num(c.identity_residual()),
                    num(c.rho),
                    num(c.inverse_norm),
                    c.bound_holds.to_string(),
                ]);
            }
            ctx.out.write_csv("oracle.csv", &table)?;
            println!("max response residual {:e}, max identity residual {:e}", worst.0, worst.1);
            Ok(())
        }
        Suite::Ou => {
            if cfg.model != ModelKind::Ou {
                return Err(CliError::Config("the ou oracle suite needs model = \"ou\"".into()));
            }
            let m = build_ou(cfg)?;
            let (names, obs) = vector_observables(cfg, m.dim());
            let mut table = Table::new(&["a", "seed", "method", "observable", "law", "value", "response"]);
            for (name, o) in names.iter().zip(&obs) {
                let o: &VectorObservable = o;
                for (law, r) in
                    [("continuous", m.exact(cfg.response.a0, o)), ("discrete", m.exact_discrete(cfg.response.a0, o))]
                {
                    let (v, dv) = r?;
                    table.push(row(cfg, "exact", [name.clone(), law.into(), num(v), num(dv)]));
                }
            }
            ctx.out.write_csv("oracle.csv", &table)
        }
    }
}

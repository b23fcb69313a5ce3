use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spdr::checkpoint::Checkpoint;
use spdr::commands::{self, Command, Context, Suite};
use spdr::config::ExperimentConfig;
use spdr::exec::RayonExecutor;
use spdr::output::Output;
use spdr::Result;

/// Numerical lab for dissipative stochastic PDEs: simulation, linear
/// response, Hölder scans, ergodicity audits and transport diagnostics.
#[derive(Parser)]
#[command(name = "spdr", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    #[value(name = "chain-response", alias = "thm2.4")]
    ChainResponse,
    Ou,
}

#[derive(Subcommand)]
enum Sub {
    /// Run an ensemble and record observables.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Continue a single trajectory from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Estimate d⟨φ, μ_a⟩/da by fluctuation–dissipation and finite differences.
    Respond {
        #[command(flatten)]
        common: Common,
        /// Run the likelihood-ratio estimators even if the spectral-gap audit fails.
        #[arg(long)]
        unsafe_skip_audit: bool,
    },
    /// Scan |⟨φ, μ_{a+h}⟩ − ⟨φ, μ_a⟩| against h and fit the Hölder exponent.
    Holder {
        #[command(flatten)]
        common: Common,
    },
    /// Derive the drift constants and check them empirically.
    Audit {
        #[command(flatten)]
        common: Common,
    },
    /// Exact oracle suites.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "chain-response")]
        suite: SuiteArg,
    },
    /// Contraction of the semimetric Wasserstein distance.
    Wasserstein {
        #[command(flatten)]
        common: Common,
    },
}

fn execute(cli: Cli) -> Result<()> {
    let (command, common, resume, skip_audit) = match cli.command {
        Sub::Simulate { common, resume } => (Command::Simulate, common, resume, false),
        Sub::Respond { common, unsafe_skip_audit } => (Command::Respond, common, None, unsafe_skip_audit),
        Sub::Holder { common } => (Command::Holder, common, None, false),
        Sub::Audit { common } => (Command::Audit, common, None, false),
        Sub::Wasserstein { common } => (Command::Wasserstein, common, None, false),
        Sub::Oracle { common, suite } => {
            let suite = match suite {
                SuiteArg::ChainResponse => Suite::ChainResponse,
                SuiteArg::Ou => Suite::Ou,
            };
            (Command::Oracle(suite), common, None, false)
        }
    };
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    cfg.validate()?;
    let resume = resume.map(|p| Checkpoint::load(&p)).transpose()?;
    let exec = RayonExecutor::new(common.threads);
    let ctx = Context { cfg: &cfg, exec: &exec, out: Output::new(&common.out)?, resume, skip_audit };
    commands::run(command, ctx)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(hint) = e.hint() {
                eprintln!("hint: {hint}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `sglss`: simulate, fit, baseline and evaluate spike-and-slab image
//! regressions from the command line.

mod commands;
mod config;
mod eval;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{KernelSpec, RunConfig, ScenarioName};

/// Error in how the program was invoked or configured (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "sglss", version, about = "Spike-and-slab image-on-scalar regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Fit the Bayesian model by Gibbs sampling.
    Fit(FitArgs),
    /// Run the mass univariate baseline.
    Mua(MuaArgs),
    /// Score a fit or baseline directory against ground truth.
    Eval(EvalArgs),
    /// Simulate, fit, baseline and evaluate a range of seeds.
    Replicate(ReplicateArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "SGLSS_THREADS")]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    S1,
    S2,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
pub enum Format {
    Bin,
    Csv,
    Both,
}

#[derive(Args, Clone, Default)]
struct SimArgs {
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    /// Support fraction of each influential covariate in scenario 2.
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Lattice side length.
    #[arg(long)]
    side: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct FitFlags {
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    burnin: Option<u64>,
    #[arg(long)]
    thin: Option<u64>,
    #[arg(long)]
    chains: Option<u64>,
    #[arg(long)]
    d: Option<f64>,
    /// Use this kernel variance instead of fitting the kernel (needs --rho).
    #[arg(long, requires = "rho")]
    sigma2_s: Option<f64>,
    #[arg(long, requires = "sigma2_s")]
    rho: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, value_enum, default_value = "bin")]
    format: Format,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    fit: FitFlags,
    /// Z-score the non-binary covariate columns before fitting.
    #[arg(long)]
    standardize_continuous: bool,
}

#[derive(Args)]
struct MuaArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    standardize_continuous: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Directory with summary.json and/or mua_summary.json (or truth.json
    /// for a self-comparison).
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct ReplicateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    fit: FitFlags,
    /// Number of consecutive seeds, starting at --seed.
    #[arg(long, default_value_t = 10)]
    replicates: u64,
    #[arg(long)]
    alpha: Option<f64>,
}

fn base_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_sim(cfg: &mut RunConfig, a: &SimArgs) {
    if let Some(s) = a.scenario {
        cfg.scenario = match s {
            Scenario::S1 => ScenarioName::S1,
            Scenario::S2 => ScenarioName::S2,
        };
    }
    if let Some(v) = a.pi {
        cfg.pi = v;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.side {
        cfg.side = v;
    }
}

fn apply_fit(cfg: &mut RunConfig, a: &FitFlags) {
    if let Some(v) = a.iters {
        cfg.iters = v;
    }
    if let Some(v) = a.burnin {
        cfg.burnin = v;
    }
    if let Some(v) = a.thin {
        cfg.thin = v;
    }
    if let Some(v) = a.chains {
        cfg.chains = v;
    }
    if let Some(v) = a.d {
        cfg.d = v;
    }
    if let (Some(sigma2_s), Some(rho)) = (a.sigma2_s, a.rho) {
        cfg.kernel = KernelSpec::Explicit { sigma2_s, rho };
    }
}

fn setup_threads(common: &Common) -> anyhow::Result<usize> {
    let n = common
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        return Err(UsageError("--threads must be at least 1".into()).into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    Ok(n)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_sim(&mut cfg, &a.sim);
            let threads = setup_threads(&a.common)?;
            commands::simulate(&cfg, a.format, threads)
        }
        Command::Fit(a) => {
            let mut cfg = base_config(&a.common)?;
            if let Some(d) = a.data {
                cfg.data = Some(d);
            }
            apply_fit(&mut cfg, &a.fit);
            cfg.standardize_continuous |= a.standardize_continuous;
            let threads = setup_threads(&a.common)?;
            commands::fit(&cfg, threads).map(|_| ())
        }
        Command::Mua(a) => {
            let mut cfg = base_config(&a.common)?;
            if let Some(d) = a.data {
                cfg.data = Some(d);
            }
            if let Some(v) = a.alpha {
                cfg.alpha = v;
            }
            cfg.standardize_continuous |= a.standardize_continuous;
            let threads = setup_threads(&a.common)?;
            commands::mua(&cfg, threads).map(|_| ())
        }
        Command::Eval(a) => {
            let cfg = base_config(&a.common)?;
            setup_threads(&a.common)?;
            commands::eval(&a.fit, &a.truth, cfg.out.as_deref()).map(|_| ())
        }
        Command::Replicate(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_sim(&mut cfg, &a.sim);
            apply_fit(&mut cfg, &a.fit);
            if let Some(v) = a.alpha {
                cfg.alpha = v;
            }
            let threads = setup_threads(&a.common)?;
            commands::replicate(&cfg, a.replicates, threads)
        }
    }
}

/// 2 for usage and configuration problems, 3 for numerical failures, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(f) = cause.downcast_ref::<sglss::sampler::ChainFailure>() {
            return if f.source.is_numeric() { 3 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<sglss::Error>() {
            return match e {
                e if e.is_numeric() => 3,
                sglss::Error::Io(io) if io.kind() != std::io::ErrorKind::NotFound => 1,
                _ => 2,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

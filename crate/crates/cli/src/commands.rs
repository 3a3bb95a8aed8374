use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use serde::Serialize;
use sglss::io;
use sglss::kernels::{fit_kernel_to_covariance, residual_covariance, rho_search_range};
use sglss::model::{Dataset, MaternKernel, PosteriorSummary};
use sglss::mua::{mua_pipeline, MuaResult, Procedure, ProcedureSelection, STOREY_LAMBDA};
use sglss::sampler::{geweke_table, run_chains, ChainConfig, GewekeTable};
use sglss::simulate::{gen_scenario1, gen_scenario2, GroundTruth, Scenario};

use crate::config::{KernelSpec, RunConfig, ScenarioName};
use crate::eval::{self, MetricsFile};
use crate::{Format, UsageError};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    threads: usize,
    elapsed_seconds: f64,
    #[serde(flatten)]
    details: T,
}

fn write_manifest<T: Serialize>(
    dir: &Path,
    command: &'static str,
    cfg: &RunConfig,
    threads: usize,
    start: Instant,
    details: T,
) -> anyhow::Result<()> {
    let m = Manifest {
        tool: "sglss",
        version: VERSION,
        command,
        config: cfg,
        threads,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        details,
    };
    io::save_json(&dir.join("manifest.json"), &m)?;
    cfg.save(&dir.join("config.json"))
}

fn create_out(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let out = cfg.out_dir()?.to_path_buf();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn load_data(cfg: &RunConfig) -> anyhow::Result<(Dataset, Vec<usize>)> {
    let path = cfg.data_path()?;
    if !path.exists() {
        return Err(UsageError(format!("dataset {} does not exist", path.display())).into());
    }
    let mut data = io::read_dataset(path).with_context(|| format!("reading {}", path.display()))?;
    let standardized = if cfg.standardize_continuous {
        data.standardize_continuous()
    } else {
        Vec::new()
    };
    Ok((data, standardized))
}

pub fn generate(cfg: &RunConfig) -> anyhow::Result<(Dataset, GroundTruth)> {
    let sim = cfg.sim_config();
    let r = match cfg.scenario {
        ScenarioName::S1 => gen_scenario1(&sim, cfg.seed),
        ScenarioName::S2 => gen_scenario2(cfg.pi, &sim, cfg.seed),
    };
    r.map_err(|e| match e {
        sglss::Error::InvalidHyperparameter { .. } => UsageError(e.to_string()).into(),
        e => anyhow::Error::from(e),
    })
}

#[derive(Serialize)]
struct SimulateDetails {
    seed: u64,
    scenario: Scenario,
    dataset: Vec<String>,
    truth: &'static str,
}

pub fn simulate(cfg: &RunConfig, format: Format, threads: usize) -> anyhow::Result<()> {
    let start = Instant::now();
    let out = create_out(cfg)?;
    let (data, truth) = generate(cfg)?;
    let mut files = Vec::new();
    if format != Format::Csv {
        io::write_biosr1(&out.join("data.bin"), &data)?;
        files.push("data.bin".to_string());
    }
    if format != Format::Bin {
        io::write_csv_dir(&out.join("data"), &data)?;
        files.push("data".to_string());
    }
    io::write_truth(&out, &truth)?;
    let details = SimulateDetails {
        seed: cfg.seed,
        scenario: truth.scenario,
        dataset: files,
        truth: "truth.json",
    };
    write_manifest(&out, "simulate", cfg, threads, start, details)
}

#[derive(Serialize)]
struct KernelReport {
    source: &'static str,
    sigma2_s: f64,
    rho: f64,
    nu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho_search_range: Option<(f64, f64)>,
}

fn choose_kernel(cfg: &RunConfig, data: &Dataset) -> anyhow::Result<KernelReport> {
    Ok(match cfg.kernel {
        KernelSpec::Explicit { sigma2_s, rho } => {
            let k = MaternKernel::new(sigma2_s, rho).map_err(|e| UsageError(e.to_string()))?;
            KernelReport {
                source: "explicit",
                sigma2_s: k.sigma2_s,
                rho: k.rho,
                nu: MaternKernel::NU,
                fit_mse: None,
                rho_search_range: None,
            }
        }
        KernelSpec::Empirical => {
            let ols = sglss::mua::ols_per_location(data).context("per-site OLS for the kernel fit")?;
            let s = residual_covariance(data, &ols.beta_hat)?;
            let fit = fit_kernel_to_covariance(&data.grid, &s)?;
            KernelReport {
                source: "empirical",
                sigma2_s: fit.kernel.sigma2_s,
                rho: fit.kernel.rho,
                nu: MaternKernel::NU,
                fit_mse: Some(fit.mse),
                rho_search_range: Some(rho_search_range(&data.grid)),
            }
        }
    })
}

#[derive(Serialize)]
struct FitDetails {
    seed: u64,
    chains: u64,
    chain_streams: Vec<(u64, u64)>,
    standardized_columns: Vec<usize>,
    kernel: KernelReport,
    n_selected_global: usize,
    geweke: GewekeTable,
}

pub fn fit(cfg: &RunConfig, threads: usize) -> anyhow::Result<PosteriorSummary> {
    let start = Instant::now();
    let out = create_out(cfg)?;
    let (data, standardized) = load_data(cfg)?;
    let kernel = choose_kernel(cfg, &data)?;
    let k = MaternKernel::new(kernel.sigma2_s, kernel.rho)?;
    let hyper = cfg.hyperparams(data.q(), data.p(), k);
    sglss::validate(&data, &hyper).map_err(|e| UsageError(e.to_string()))?;
    let chain = ChainConfig {
        thin: cfg.thin,
        ..ChainConfig::new(cfg.iters, cfg.burnin, cfg.seed)
    };
    chain.check().map_err(|e| UsageError(e.to_string()))?;
    let summary = match run_chains(&data, &hyper, &chain, cfg.chains) {
        Ok(s) => s,
        Err(f) => {
            let path = out.join(format!("trace_chain{}_partial.csv", f.chain));
            io::write_traces_csv(&path, &f.partial)?;
            return Err(f.into());
        }
    };
    io::write_summary(&out, &summary)?;
    let details = FitDetails {
        seed: cfg.seed,
        chains: cfg.chains,
        chain_streams: (0..cfg.chains).map(|c| (cfg.seed, c)).collect(),
        standardized_columns: standardized,
        kernel,
        n_selected_global: summary.selected_global.iter().filter(|&&b| b).count(),
        geweke: geweke_table(&summary.traces),
    };
    write_manifest(&out, "fit", cfg, threads, start, details)?;
    Ok(summary)
}

#[derive(Serialize)]
struct MuaSummaryFile<'a> {
    alpha: f64,
    df: usize,
    null_proportion_estimator: String,
    global_pvals: &'a [f64],
    procedures: &'a [ProcedureSelection],
    selected_global: std::collections::BTreeMap<&'static str, Vec<usize>>,
    n_selected_local: std::collections::BTreeMap<&'static str, Vec<usize>>,
    pvals_file: &'static str,
    beta_file: &'static str,
}

pub fn write_mua(out: &Path, m: &MuaResult) -> anyhow::Result<()> {
    let mut selected_global = std::collections::BTreeMap::new();
    let mut n_local = std::collections::BTreeMap::new();
    for proc in Procedure::ALL {
        let s = m.selection(proc);
        selected_global.insert(
            proc.name(),
            s.global.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j + 1).collect(),
        );
        n_local.insert(proc.name(), (0..s.local.rows()).map(|j| s.local.row_count(j)).collect());
    }
    let file = MuaSummaryFile {
        alpha: m.alpha,
        df: m.df,
        null_proportion_estimator: format!(
            "Storey, lambda = {STOREY_LAMBDA}; pi0 = 1 (plain BH) when fewer than {} p-values",
            sglss::mua::SBH_MIN_M
        ),
        global_pvals: &m.global_pvals,
        procedures: &m.selections,
        selected_global,
        n_selected_local: n_local,
        pvals_file: "mua_pvals.csv",
        beta_file: "mua_beta.csv",
    };
    io::write_matrix_csv(&out.join("mua_pvals.csv"), &m.pvals)?;
    io::write_matrix_csv(&out.join("mua_beta.csv"), &m.beta_hat)?;
    io::save_json(&out.join("mua_summary.json"), &file)?;
    Ok(())
}

/// Reads the parts of a baseline directory that evaluation needs.
fn read_mua(dir: &Path) -> anyhow::Result<MuaResult> {
    #[derive(serde::Deserialize)]
    struct Partial {
        alpha: f64,
        df: usize,
        global_pvals: Vec<f64>,
        procedures: Vec<ProcedureSelection>,
    }
    let p: Partial = io::load_json(&dir.join("mua_summary.json"))?;
    Ok(MuaResult {
        alpha: p.alpha,
        beta_hat: io::read_matrix_csv(&dir.join("mua_beta.csv"))?,
        pvals: io::read_matrix_csv(&dir.join("mua_pvals.csv"))?,
        global_pvals: p.global_pvals,
        selections: p.procedures,
        df: p.df,
        mean_sq_resid: f64::NAN,
    })
}

#[derive(Serialize)]
struct MuaDetails {
    standardized_columns: Vec<usize>,
}

pub fn mua(cfg: &RunConfig, threads: usize) -> anyhow::Result<MuaResult> {
    let start = Instant::now();
    let out = create_out(cfg)?;
    let (data, standardized) = load_data(cfg)?;
    if !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
        return Err(UsageError(format!("--alpha must lie in (0, 1], got {}", cfg.alpha)).into());
    }
    let m = mua_pipeline(&data, cfg.alpha)?;
    write_mua(&out, &m)?;
    write_manifest(
        &out,
        "mua",
        cfg,
        threads,
        start,
        MuaDetails {
            standardized_columns: standardized,
        },
    )?;
    Ok(m)
}

pub fn eval(fit_dir: &Path, truth_path: &Path, out: Option<&Path>) -> anyhow::Result<MetricsFile> {
    if !truth_path.exists() {
        return Err(UsageError(format!("truth file {} does not exist", truth_path.display())).into());
    }
    if !fit_dir.is_dir() {
        return Err(UsageError(format!("{} is not a directory", fit_dir.display())).into());
    }
    let truth = io::read_truth(truth_path)?;
    let mut file = MetricsFile {
        bhm: None,
        mua: Default::default(),
    };
    if fit_dir.join("summary.json").exists() {
        file.bhm = Some(eval::bhm_report(&truth, &io::read_summary(fit_dir)?)?);
    }
    if fit_dir.join("mua_summary.json").exists() {
        file.mua = eval::mua_reports(&truth, &read_mua(fit_dir)?)?;
    }
    if file.bhm.is_none() && file.mua.is_empty() {
        if fit_dir.join("truth.json").exists() {
            let own = io::read_truth(&fit_dir.join("truth.json"))?;
            file.bhm = Some(eval_truth_as_estimate(&truth, &own)?);
        } else {
            bail!(UsageError(format!(
                "{} has neither summary.json nor mua_summary.json",
                fit_dir.display()
            )));
        }
    }
    let out = out.unwrap_or(fit_dir);
    fs::create_dir_all(out)?;
    io::save_json(&out.join("metrics.json"), &file)?;
    Ok(file)
}

fn eval_truth_as_estimate(truth: &GroundTruth, est: &GroundTruth) -> anyhow::Result<eval::MethodReport> {
    if truth == est {
        return eval::self_report(truth);
    }
    eval::report(
        truth,
        &est.influential_global,
        &est.support_true,
        &est.beta_true,
        Some(&est.z_true),
        Some(&est.sigma_true()),
        Some(est.sigma2_eps_true),
    )
}

#[derive(Serialize)]
struct ReplicateDetails {
    seeds: Vec<u64>,
    runs: Vec<String>,
    aggregate: &'static str,
}

pub fn replicate(cfg: &RunConfig, replicates: u64, threads: usize) -> anyhow::Result<()> {
    use rayon::prelude::*;
    let start = Instant::now();
    let out = create_out(cfg)?;
    if replicates == 0 {
        return Err(UsageError("--replicates must be positive".into()).into());
    }
    let seeds: Vec<u64> = (0..replicates).map(|k| cfg.seed + k).collect();
    let results: Vec<anyhow::Result<MetricsFile>> = seeds
        .par_iter()
        .map(|&seed| {
            let dir = out.join(format!("seed_{seed}"));
            let run = |sub: &str| RunConfig {
                seed,
                out: Some(dir.join(sub)),
                data: Some(dir.join("sim").join("data.bin")),
                ..cfg.clone()
            };
            let sim_cfg = run("sim");
            simulate(&sim_cfg, Format::Bin, threads)?;
            fit(&run("fit"), threads)?;
            mua(&run("mua"), threads)?;
            let truth = dir.join("sim").join("truth.json");
            let mut m = eval(&dir.join("fit"), &truth, None)?;
            m.mua = eval(&dir.join("mua"), &truth, None)?.mua;
            io::save_json(&dir.join("metrics.json"), &m)?;
            Ok(m)
        })
        .collect();
    let files = results.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    io::save_json(&out.join("aggregate.json"), &eval::aggregate(&files))?;
    let details = ReplicateDetails {
        runs: seeds.iter().map(|s| format!("seed_{s}")).collect(),
        seeds,
        aggregate: "aggregate.json",
    };
    write_manifest(&out, "replicate", cfg, threads, start, details)
}

use std::fmt;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::updates::Gibbs;
use crate::error::{Error, Result};
use crate::kernels::{build_psi, ScaleMatrix};
use crate::model::{validate, ChainState, Dataset, Hyperparams, IndicatorMatrix, PosteriorSummary, Traces};
use crate::mua::ols_per_location;
use crate::rng::Streams;

/// Starting point of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// β from per-site OLS, Σ = Ψ, τ = 1, π = 0.5, σ²_ε = mean squared OLS
    /// residual and Z = [1, X]·β. Rows whose π starts below `d` start at zero.
    Mua,
    /// An explicit state.
    State(Box<ChainState>),
}

/// Length, thinning and seeding of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub thin: u64,
    pub init: Init,
    /// Keep Σ at its initial value instead of sampling it.
    #[serde(default)]
    pub fix_sigma: bool,
}

impl ChainConfig {
    pub fn new(n_iter: u64, burn_in: u64, seed: u64) -> Self {
        Self {
            n_iter,
            burn_in,
            seed,
            thin: 1,
            init: Init::Mua,
            fix_sigma: false,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(Error::InvalidHyperparameter {
                field: "n_iter",
                reason: "must be positive".into(),
            });
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::InvalidHyperparameter {
                field: "burn_in",
                reason: format!("must be below n_iter = {}, got {}", self.n_iter, self.burn_in),
            });
        }
        if self.thin == 0 {
            return Err(Error::InvalidHyperparameter {
                field: "thin",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    fn stores(&self, iter: u64) -> bool {
        iter >= self.burn_in && (iter - self.burn_in) % self.thin == 0
    }
}

/// A chain that stopped early, with the traces recorded so far.
#[derive(Debug)]
pub struct ChainFailure {
    pub chain: u64,
    pub iteration: u64,
    pub source: Error,
    pub partial: Traces,
}

impl fmt::Display for ChainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "chain {} failed at iteration {}: {}",
            self.chain, self.iteration, self.source
        )
    }
}

impl std::error::Error for ChainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

fn setup_failure(chain: u64, q: usize, source: Error) -> ChainFailure {
    ChainFailure {
        chain,
        iteration: 0,
        source,
        partial: Traces::new(q),
    }
}

fn initial_state(data: &Dataset, hyper: &Hyperparams, psi: &ScaleMatrix, init: &Init) -> Result<ChainState> {
    let (n, p, q) = (data.n(), data.p(), data.q());
    let mut state = match init {
        Init::State(s) => {
            check_shapes(s, n, p, q)?;
            s.check_invariants(hyper.d)?;
            return Ok((**s).clone());
        }
        Init::Mua => {
            let (beta, sigma2_eps) = match ols_per_location(data) {
                Ok(fit) => (fit.beta_hat, fit.mean_sq_resid),
                // too few observations for OLS: intercept at the site means
                Err(_) => {
                    let mean: Vec<f64> = (0..p).map(|s| (0..n).map(|i| data.y[(i, s)]).sum::<f64>() / n as f64).collect();
                    let ss: f64 = (0..p)
                        .map(|s| (0..n).map(|i| (data.y[(i, s)] - mean[s]).powi(2)).sum::<f64>())
                        .sum();
                    let beta = Mat::from_fn(q + 1, p, |j, s| if j == 0 { mean[s] } else { 0.0 });
                    (beta, ss / (n * p) as f64)
                }
            };
            ChainState {
                z: Mat::zeros(n, p),
                beta,
                tau: IndicatorMatrix::filled(q, p, true),
                pi: vec![0.5; q],
                sigma2_eps: if sigma2_eps > 0.0 { sigma2_eps } else { 1.0 },
                sigma: psi.psi().clone(),
            }
        }
    };
    for j in 0..q {
        if state.pi[j] < hyper.d {
            for s in 0..p {
                state.beta[(j + 1, s)] = 0.0;
            }
        }
    }
    state.z = crate::linalg::mul(data.design().as_ref(), state.beta.as_ref());
    Ok(state)
}

fn check_shapes(s: &ChainState, n: usize, p: usize, q: usize) -> Result<()> {
    let dims = [
        ("z", (n, p), (s.z.nrows(), s.z.ncols())),
        ("beta", (q + 1, p), (s.beta.nrows(), s.beta.ncols())),
        ("tau", (q, p), (s.tau.rows(), s.tau.cols())),
        ("pi", (q, 1), (s.pi.len(), 1)),
        ("sigma", (p, p), (s.sigma.nrows(), s.sigma.ncols())),
    ];
    for (field, want, got) in dims {
        if want != got {
            return Err(Error::DimensionMismatch {
                field,
                expected: want.0 * want.1,
                found: got.0 * got.1,
            });
        }
    }
    Ok(())
}

/// Running sums over stored draws.
struct Accumulator {
    n: usize,
    d: f64,
    global: Vec<f64>,
    local: Mat<f64>,
    beta: Mat<f64>,
    z: Mat<f64>,
    sigma: Mat<f64>,
    sigma2_eps: f64,
}

impl Accumulator {
    fn new(data: &Dataset, d: f64) -> Self {
        let (n, p, q) = (data.n(), data.p(), data.q());
        Self {
            n: 0,
            d,
            global: vec![0.0; q],
            local: Mat::zeros(q, p),
            beta: Mat::zeros(q + 1, p),
            z: Mat::zeros(n, p),
            sigma: Mat::zeros(p, p),
            sigma2_eps: 0.0,
        }
    }

    fn add(&mut self, state: &ChainState) {
        self.n += 1;
        for (j, &pi) in state.pi.iter().enumerate() {
            if pi >= self.d {
                self.global[j] += 1.0;
                for (s, &t) in state.tau.row(j).iter().enumerate() {
                    if t {
                        self.local[(j, s)] += 1.0;
                    }
                }
            }
        }
        self.beta += &state.beta;
        self.z += &state.z;
        self.sigma += &state.sigma;
        self.sigma2_eps += state.sigma2_eps;
    }

    fn merge(&mut self, other: Accumulator) {
        self.n += other.n;
        for (a, b) in self.global.iter_mut().zip(other.global) {
            *a += b;
        }
        self.local += &other.local;
        self.beta += &other.beta;
        self.z += &other.z;
        self.sigma += &other.sigma;
        self.sigma2_eps += other.sigma2_eps;
    }

    fn finish(self, traces: Vec<Traces>) -> PosteriorSummary {
        let k = 1.0 / self.n as f64;
        let mppi_global: Vec<f64> = self.global.iter().map(|v| v * k).collect();
        let mppi_local = &self.local * faer::Scale(k);
        let (selected_global, selected_local) = PosteriorSummary::select(&mppi_global, &mppi_local);
        PosteriorSummary {
            d: self.d,
            n_stored: self.n,
            mppi_global,
            mppi_local,
            selected_global,
            selected_local,
            beta_mean: &self.beta * faer::Scale(k),
            z_mean: &self.z * faer::Scale(k),
            sigma_mean: &self.sigma * faer::Scale(k),
            sigma2_eps_mean: self.sigma2_eps * k,
            traces,
        }
    }
}

fn run_one(
    data: &Dataset,
    hyper: &Hyperparams,
    psi: &ScaleMatrix,
    config: &ChainConfig,
    chain: u64,
) -> std::result::Result<(Accumulator, Traces), ChainFailure> {
    let q = data.q();
    let state = initial_state(data, hyper, psi, &config.init).map_err(|e| setup_failure(chain, q, e))?;
    let mut gibbs = Gibbs::new(data, hyper, psi, state, Streams::new(config.seed, chain))
        .map_err(|e| setup_failure(chain, q, e))?;
    let mut acc = Accumulator::new(data, hyper.d);
    let mut traces = Traces::new(q);
    let mut tausum = vec![0u32; q];
    for iter in 0..config.n_iter {
        if let Err(source) = gibbs.sweep(iter, !config.fix_sigma) {
            return Err(ChainFailure {
                chain,
                iteration: iter,
                source,
                partial: traces,
            });
        }
        if config.stores(iter) {
            let st = &gibbs.state;
            for (j, t) in tausum.iter_mut().enumerate() {
                *t = st.tau.row_count(j) as u32;
            }
            traces.push(iter, st.sigma2_eps, &st.pi, &tausum);
            acc.add(st);
        }
    }
    Ok((acc, traces))
}

/// Runs one chain (chain index 0) and summarizes its stored draws.
pub fn run_chain(
    data: &Dataset,
    hyper: &Hyperparams,
    config: &ChainConfig,
) -> std::result::Result<PosteriorSummary, ChainFailure> {
    run_chains(data, hyper, config, 1)
}

/// Runs `chains` independent chains in parallel and pools their stored draws.
/// Chain `c` uses the stream family `(seed, c)`.
pub fn run_chains(
    data: &Dataset,
    hyper: &Hyperparams,
    config: &ChainConfig,
    chains: u64,
) -> std::result::Result<PosteriorSummary, ChainFailure> {
    let q = data.q();
    validate(data, hyper).map_err(|e| setup_failure(0, q, e))?;
    config.check().map_err(|e| setup_failure(0, q, e))?;
    if chains == 0 {
        return Err(setup_failure(
            0,
            q,
            Error::InvalidHyperparameter {
                field: "chains",
                reason: "must be positive".into(),
            },
        ));
    }
    let psi = build_psi(&data.grid, &hyper.kernel).map_err(|e| setup_failure(0, q, e))?;
    let results: Vec<_> = (0..chains)
        .into_par_iter()
        .map(|c| run_one(data, hyper, &psi, config, c))
        .collect();
    let mut total: Option<Accumulator> = None;
    let mut traces = Vec::with_capacity(chains as usize);
    for r in results {
        let (acc, t) = r?;
        traces.push(t);
        match total.as_mut() {
            Some(tot) => tot.merge(acc),
            None => total = Some(acc),
        }
    }
    Ok(total.expect("at least one chain").finish(traces))
}

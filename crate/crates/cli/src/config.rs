//! JSON run configuration. Every key is optional; missing keys take the
//! defaults below and unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sglss::model::{Hyperparams, MaternKernel};
use sglss::simulate::SimConfig;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    S1,
    S2,
}

/// Either fit the scale-matrix kernel to MUA residuals or use given values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "mode")]
pub enum KernelSpec {
    Empirical,
    Explicit { sigma2_s: f64, rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Dataset: a `BIOSR1` file or a directory with grid.csv, Y.csv, X.csv.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,

    pub a_eps: f64,
    pub b_eps: f64,
    pub a_pi: f64,
    pub b_pi: f64,
    pub d: f64,
    /// Slab mean, the same at every covariate and site.
    pub mu0: f64,
    /// Slab variance, the same at every covariate and site.
    pub sigma2_0: f64,
    pub delta: u32,
    pub kernel: KernelSpec,

    pub iters: u64,
    pub burnin: u64,
    pub thin: u64,
    pub seed: u64,
    pub chains: u64,

    pub alpha: f64,
    pub standardize_continuous: bool,

    pub scenario: ScenarioName,
    /// Support fraction for scenario 2 (0.09 or 0.188 on a 30×30 grid).
    pub pi: f64,
    pub n: usize,
    pub q: usize,
    /// Lattice side length.
    pub side: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: None,
            a_eps: 1.0,
            b_eps: 1.0,
            a_pi: 1.0,
            b_pi: 1.0,
            d: 0.05,
            mu0: 0.0,
            sigma2_0: 1.0,
            delta: 5,
            kernel: KernelSpec::Empirical,
            iters: 2000,
            burnin: 500,
            thin: 1,
            seed: 1,
            chains: 1,
            alpha: 0.05,
            standardize_continuous: false,
            scenario: ScenarioName::S1,
            pi: 0.09,
            n: 100,
            q: 15,
            side: 30,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    pub fn data_path(&self) -> anyhow::Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| UsageError("no dataset given (--data or \"data\" in the config)".into()).into())
    }

    pub fn out_dir(&self) -> anyhow::Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| UsageError("no output directory given (--out or \"out\" in the config)".into()).into())
    }

    pub fn hyperparams(&self, q: usize, p: usize, kernel: MaternKernel) -> Hyperparams {
        Hyperparams {
            a_eps: self.a_eps,
            b_eps: self.b_eps,
            a_pi: self.a_pi,
            b_pi: self.b_pi,
            d: self.d,
            delta: self.delta,
            ..Hyperparams::defaults(q, p, kernel).with_slab(self.mu0, self.sigma2_0)
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            n: self.n,
            q: self.q,
            rows: self.side,
            cols: self.side,
            spacing: sglss::simulate::unit_square_spacing(self.side),
            ..SimConfig::default()
        }
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        sglss::io::save_json(path, self).with_context(|| format!("writing {}", path.display()))
    }
}

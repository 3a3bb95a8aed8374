use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::model::Traces;

/// Spectral density at frequency zero times the segment length's
/// normalization, from a Bartlett-windowed autocovariance sum with a lag
/// window of 4% of the segment.
fn spectral_variance(x: &[f64]) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let lag = ((0.04 * n as f64).round() as usize).max(1).min(n - 1);
    let acov = |k: usize| -> f64 {
        (0..n - k).map(|t| (x[t] - mean) * (x[t + k] - mean)).sum::<f64>() / n as f64
    };
    let mut s = acov(0);
    for k in 1..=lag {
        s += 2.0 * (1.0 - k as f64 / (lag + 1) as f64) * acov(k);
    }
    s.max(0.0)
}

/// Geweke z-score comparing the mean of the first `frac_first` of a trace
/// with the mean of its last `frac_last`.
pub fn geweke_z(trace: &[f64], frac_first: f64, frac_last: f64) -> Result<f64> {
    if trace.len() < 50 {
        return Err(Error::Domain(format!("trace of length {} is shorter than 50", trace.len())));
    }
    if !(frac_first > 0.0 && frac_last > 0.0 && frac_first + frac_last <= 1.0) {
        return Err(Error::Domain(format!(
            "segment fractions {frac_first} and {frac_last} must be positive and sum to at most 1"
        )));
    }
    let n = trace.len();
    let na = ((frac_first * n as f64).floor() as usize).max(2);
    let nb = ((frac_last * n as f64).floor() as usize).max(2);
    let a = &trace[..na];
    let b = &trace[n - nb..];
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = spectral_variance(a) / na as f64 + spectral_variance(b) / nb as f64;
    if !(var > 0.0) {
        return Err(Error::Degenerate("trace has zero variance".into()));
    }
    Ok((mean(a) - mean(b)) / var.sqrt())
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeRow {
    pub chain: usize,
    pub name: String,
    /// `None` when the trace is constant.
    pub z: Option<f64>,
}

/// Per-trace Geweke scores with the mean absolute score per family.
/// Constant traces (for example an indicator count pinned at p) have no
/// score and are left out of the means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeTable {
    pub rows: Vec<GewekeRow>,
    pub mean_abs_pi: Option<f64>,
    pub mean_abs_tausum: Option<f64>,
    pub mean_abs_sigma2_eps: Option<f64>,
    /// How the family means are formed.
    pub aggregation: String,
}

/// Geweke scores of every `π`, `Στ` and `σ²_ε` trace of every chain.
pub fn geweke_table(traces: &[Traces]) -> GewekeTable {
    let mut rows = Vec::new();
    let mut fam: [Vec<f64>; 3] = Default::default();
    for (c, t) in traces.iter().enumerate() {
        let mut push = |name: String, v: Vec<f64>, k: usize| {
            let z = geweke_z(&v, 0.1, 0.5).ok();
            if let Some(z) = z {
                fam[k].push(z.abs());
            }
            rows.push(GewekeRow { chain: c, name, z });
        };
        for j in 0..t.q {
            push(format!("pi_{}", j + 1), t.pi_trace(j), 0);
        }
        for j in 0..t.q {
            push(format!("tausum_{}", j + 1), t.tausum_trace(j), 1);
        }
        push("sigma2_eps".into(), t.sigma2_eps.clone(), 2);
    }
    let mean = |v: &Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    GewekeTable {
        mean_abs_pi: mean(&fam[0]),
        mean_abs_tausum: mean(&fam[1]),
        mean_abs_sigma2_eps: mean(&fam[2]),
        rows,
        aggregation: "mean of |z| over non-constant per-trace scores; first 10% vs last 50%".into(),
    }
}

/// Prior probability that a site is selected, `E[I(π ≥ d)·τ]`, which is
/// `(a/(a+b))·(1 − F_{Beta(a+1, b)}(d))`.
pub fn sparsity_discount(a_pi: f64, b_pi: f64, d: f64) -> Result<f64> {
    if !(a_pi > 0.0 && b_pi > 0.0) {
        return Err(Error::Domain(format!("Beta parameters must be positive, got ({a_pi}, {b_pi})")));
    }
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::Domain(format!("threshold must lie in [0, 1], got {d}")));
    }
    let cdf = if d == 0.0 {
        0.0
    } else if d == 1.0 {
        1.0
    } else {
        beta_reg(a_pi + 1.0, b_pi, d)
    };
    Ok(a_pi / (a_pi + b_pi) * (1.0 - cdf))
}

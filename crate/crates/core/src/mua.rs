//! Mass univariate analysis: independent OLS fits at each site, Simes
//! combination into one p-value per coefficient image, and BH, BY and
//! Storey-type BH false-discovery-rate control.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dataset, IndicatorMatrix};

/// Tuning constant of the Storey null-proportion estimator.
pub const STOREY_LAMBDA: f64 = 0.5;

/// Smallest number of p-values for which the Storey estimator is used.
pub const SBH_MIN_M: usize = 20;

/// Per-site OLS fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// (q+1)×p estimates, row 0 is the intercept.
    pub beta_hat: Mat<f64>,
    /// q×p standard errors of the covariate coefficients.
    pub std_err: Mat<f64>,
    /// q×p two-sided p-values.
    pub pvals: Mat<f64>,
    /// Residual degrees of freedom `n − q − 1`.
    pub df: usize,
    /// Mean squared residual over all entries of `Y`.
    pub mean_sq_resid: f64,
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

/// OLS of every column of `Y` on `[1, X]`, with t-test p-values for the
/// q covariate coefficients.
pub fn ols_per_location(data: &Dataset) -> Result<OlsFit> {
    let (n, p, q) = (data.n(), data.p(), data.q());
    if n <= q + 1 {
        return Err(Error::Degenerate(format!(
            "OLS needs more observations than coefficients: n = {n}, q + 1 = {}",
            q + 1
        )));
    }
    let xt = data.design();
    let g = linalg::gram(xt.as_ref());
    let l = linalg::cholesky(g.as_ref())
        .map_err(|_| Error::Degenerate("design matrix [1, X] is rank deficient".into()))?;
    for i in 0..=q {
        if l[(i, i)] * l[(i, i)] <= 1e-12 * g[(i, i)] {
            return Err(Error::Degenerate(format!(
                "design matrix [1, X] is rank deficient at column {i}"
            )));
        }
    }
    let ginv = linalg::inverse_from_cholesky(l.as_ref());
    let mut beta_hat = linalg::mul(xt.transpose(), data.y.as_ref());
    linalg::solve_lower_in_place(l.as_ref(), &mut beta_hat);
    linalg::solve_lower_transpose_in_place(l.as_ref(), &mut beta_hat);

    let fitted = linalg::mul(xt.as_ref(), beta_hat.as_ref());
    let df = n - q - 1;
    let rss: Vec<f64> = (0..p)
        .map(|s| (0..n).map(|i| (data.y[(i, s)] - fitted[(i, s)]).powi(2)).sum())
        .collect();
    let mean_sq_resid = rss.iter().sum::<f64>() / (n * p) as f64;

    let cols: Vec<(Vec<f64>, Vec<f64>)> = (0..p)
        .into_par_iter()
        .map(|s| {
            let s2 = rss[s] / df as f64;
            (0..q)
                .map(|j| {
                    let se = (s2 * ginv[(j + 1, j + 1)]).sqrt();
                    let b = beta_hat[(j + 1, s)];
                    let t = if b == 0.0 { 0.0 } else { b / se };
                    (se, t_two_sided(t, df as f64))
                })
                .unzip()
        })
        .collect();
    let std_err = Mat::from_fn(q, p, |j, s| cols[s].0[j]);
    let pvals = Mat::from_fn(q, p, |j, s| cols[s].1[j]);
    Ok(OlsFit {
        beta_hat,
        std_err,
        pvals,
        df,
        mean_sq_resid,
    })
}

fn check_pvals(pvals: &[f64]) -> Result<()> {
    match pvals.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(Error::Domain(format!("p-value {i} = {} outside [0, 1]", pvals[i]))),
        None => Ok(()),
    }
}

fn sorted_order(pvals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pvals.len()).collect();
    idx.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));
    idx
}

/// Simes combination `min_i m·p₍ᵢ₎/i`, capped at 1.
pub fn simes_combine(pvals: &[f64]) -> Result<f64> {
    if pvals.is_empty() {
        return Err(Error::Domain("Simes combination of an empty set".into()));
    }
    check_pvals(pvals)?;
    let m = pvals.len() as f64;
    let mut sorted = pvals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let best = sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| p * (m / (i + 1) as f64))
        .fold(f64::INFINITY, f64::min);
    Ok(best.min(1.0))
}

/// Step-up rejections at per-rank thresholds `i·level/m`. Ties with the
/// largest passing p-value are rejected together.
fn step_up(pvals: &[f64], level: f64) -> Vec<bool> {
    let m = pvals.len();
    let order = sorted_order(pvals);
    let mut cutoff = None;
    for (rank, &i) in order.iter().enumerate() {
        if pvals[i] <= (rank + 1) as f64 * level / m as f64 {
            cutoff = Some(pvals[i]);
        }
    }
    match cutoff {
        Some(c) => pvals.iter().map(|&p| p <= c).collect(),
        None => vec![false; m],
    }
}

/// Benjamini–Hochberg step-up.
pub fn fdr_bh(pvals: &[f64], q_level: f64) -> Result<Vec<bool>> {
    check_pvals(pvals)?;
    Ok(step_up(pvals, q_level))
}

/// Benjamini–Yekutieli: BH at level `q / Σ_{i≤m} 1/i`.
pub fn fdr_by(pvals: &[f64], q_level: f64) -> Result<Vec<bool>> {
    check_pvals(pvals)?;
    let c: f64 = (1..=pvals.len()).map(|i| 1.0 / i as f64).sum();
    Ok(step_up(pvals, q_level / c.max(1.0)))
}

/// Storey estimate `min(1, #{p > λ} / ((1 − λ) m))` of the null proportion.
pub fn storey_pi0(pvals: &[f64], lambda: f64) -> f64 {
    let above = pvals.iter().filter(|&&p| p > lambda).count() as f64;
    (above / ((1.0 - lambda) * pvals.len() as f64)).min(1.0)
}

/// BH at level `q / π̂₀` with the Storey estimate at `λ = 0.5`. Needs at
/// least [`SBH_MIN_M`] p-values.
pub fn fdr_sbh(pvals: &[f64], q_level: f64) -> Result<Vec<bool>> {
    if pvals.len() < SBH_MIN_M {
        return Err(Error::Domain(format!(
            "SBH needs at least {SBH_MIN_M} p-values, got {}",
            pvals.len()
        )));
    }
    check_pvals(pvals)?;
    Ok(sbh_at(pvals, q_level, storey_pi0(pvals, STOREY_LAMBDA)))
}

fn sbh_at(pvals: &[f64], q_level: f64, pi0: f64) -> Vec<bool> {
    if pi0 == 0.0 {
        return vec![true; pvals.len()];
    }
    step_up(pvals, q_level / pi0)
}

/// FDR procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Procedure {
    Sbh,
    Bh,
    By,
}

impl Procedure {
    pub const ALL: [Procedure; 3] = [Procedure::Sbh, Procedure::Bh, Procedure::By];

    pub fn name(self) -> &'static str {
        match self {
            Procedure::Sbh => "SBH",
            Procedure::Bh => "BH",
            Procedure::By => "BY",
        }
    }

    /// Applies the procedure. SBH falls back to `π̂₀ = 1` (plain BH) when
    /// there are fewer than [`SBH_MIN_M`] p-values; the π̂₀ used is returned.
    pub fn apply(self, pvals: &[f64], q_level: f64) -> Result<(Vec<bool>, f64)> {
        match self {
            Procedure::Bh => Ok((fdr_bh(pvals, q_level)?, 1.0)),
            Procedure::By => Ok((fdr_by(pvals, q_level)?, 1.0)),
            Procedure::Sbh => {
                check_pvals(pvals)?;
                let pi0 = if pvals.len() >= SBH_MIN_M {
                    storey_pi0(pvals, STOREY_LAMBDA)
                } else {
                    1.0
                };
                Ok((sbh_at(pvals, q_level, pi0), pi0))
            }
        }
    }
}

/// Selections of one procedure at both levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureSelection {
    pub procedure: Procedure,
    pub global: Vec<bool>,
    pub local: IndicatorMatrix,
    /// Null proportion used for the global decision.
    pub pi0_global: f64,
    /// Null proportion used for each covariate's local decision.
    pub pi0_local: Vec<f64>,
}

/// Output of the full baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct MuaResult {
    pub alpha: f64,
    pub beta_hat: Mat<f64>,
    pub pvals: Mat<f64>,
    /// Simes-combined p-value per covariate.
    pub global_pvals: Vec<f64>,
    pub selections: Vec<ProcedureSelection>,
    pub df: usize,
    pub mean_sq_resid: f64,
}

impl MuaResult {
    pub fn selection(&self, procedure: Procedure) -> &ProcedureSelection {
        self.selections
            .iter()
            .find(|s| s.procedure == procedure)
            .expect("every procedure is run")
    }
}

/// Per-site OLS, Simes global p-values, and BH/BY/SBH at both levels.
/// Global decisions run over the q Simes p-values; local decisions run,
/// per covariate, over its p site-wise p-values.
pub fn mua_pipeline(data: &Dataset, alpha: f64) -> Result<MuaResult> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidHyperparameter {
            field: "alpha",
            reason: format!("must lie in (0, 1], got {alpha}"),
        });
    }
    let fit = ols_per_location(data)?;
    let (q, p) = (data.q(), data.p());
    let rows: Vec<Vec<f64>> = (0..q).map(|j| (0..p).map(|s| fit.pvals[(j, s)]).collect()).collect();
    let global_pvals = rows.iter().map(|r| simes_combine(r)).collect::<Result<Vec<_>>>()?;
    let mut selections = Vec::new();
    for proc in Procedure::ALL {
        let (global, pi0_global) = proc.apply(&global_pvals, alpha)?;
        let mut local = IndicatorMatrix::filled(q, p, false);
        let mut pi0_local = Vec::with_capacity(q);
        for (j, r) in rows.iter().enumerate() {
            let (rej, pi0) = proc.apply(r, alpha)?;
            local.row_mut(j).copy_from_slice(&rej);
            pi0_local.push(pi0);
        }
        selections.push(ProcedureSelection {
            procedure: proc,
            global,
            local,
            pi0_global,
            pi0_local,
        });
    }
    Ok(MuaResult {
        alpha,
        beta_hat: fit.beta_hat,
        pvals: fit.pvals,
        global_pvals,
        selections,
        df: fit.df,
        mean_sq_resid: fit.mean_sq_resid,
    })
}

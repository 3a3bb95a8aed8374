//! Scores fits and baselines against simulated ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sglss::metrics::{mse_mat, precision_recall_f1, MeanSe, SelectionMetrics};
use sglss::model::{IndicatorMatrix, PosteriorSummary};
use sglss::mua::{MuaResult, Procedure};
use sglss::simulate::{GroundTruth, DISCRETE};
use sglss::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRow {
    /// 1-based covariate index.
    pub covariate: usize,
    pub discrete: bool,
    pub metrics: SelectionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseBlock {
    pub z: Option<f64>,
    pub beta: f64,
    pub sigma: Option<f64>,
    pub sigma2_eps: Option<f64>,
}

/// Selection and estimation quality of one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub global: SelectionMetrics,
    /// Truly influential covariates only.
    pub local: Vec<LocalRow>,
    pub local_f1_continuous: Option<f64>,
    pub local_f1_discrete: Option<f64>,
    pub mse: MseBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bhm: Option<MethodReport>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub mua: BTreeMap<String, MethodReport>,
}

fn mean_defined(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    MeanSe::of(v).mean
}

pub fn report(
    truth: &GroundTruth,
    selected_global: &[bool],
    selected_local: &IndicatorMatrix,
    beta: &Mat<f64>,
    z: Option<&Mat<f64>>,
    sigma: Option<&Mat<f64>>,
    sigma2_eps: Option<f64>,
) -> anyhow::Result<MethodReport> {
    let global = precision_recall_f1(selected_global, &truth.influential_global)?;
    let mut local = Vec::new();
    for j in 0..truth.influential_global.len() {
        if truth.influential_global[j] {
            local.push(LocalRow {
                covariate: j + 1,
                discrete: DISCRETE.contains(&(j + 1)),
                metrics: precision_recall_f1(selected_local.row(j), truth.support_true.row(j))?,
            });
        }
    }
    let local_f1_continuous = mean_defined(local.iter().filter(|r| !r.discrete).map(|r| r.metrics.f1));
    let local_f1_discrete = mean_defined(local.iter().filter(|r| r.discrete).map(|r| r.metrics.f1));
    let mse = MseBlock {
        z: z.map(|z| mse_mat(&truth.z_true, z)).transpose()?,
        beta: mse_mat(&truth.beta_true, beta)?,
        sigma: sigma.map(|s| mse_mat(&truth.sigma_true(), s)).transpose()?,
        sigma2_eps: sigma2_eps.map(|v| (v - truth.sigma2_eps_true).powi(2)),
    };
    Ok(MethodReport {
        global,
        local,
        local_f1_continuous,
        local_f1_discrete,
        mse,
    })
}

pub fn bhm_report(truth: &GroundTruth, s: &PosteriorSummary) -> anyhow::Result<MethodReport> {
    report(
        truth,
        &s.selected_global,
        &s.selected_local,
        &s.beta_mean,
        Some(&s.z_mean),
        Some(&s.sigma_mean),
        Some(s.sigma2_eps_mean),
    )
}

pub fn mua_reports(truth: &GroundTruth, m: &MuaResult) -> anyhow::Result<BTreeMap<String, MethodReport>> {
    let mut out = BTreeMap::new();
    for proc in Procedure::ALL {
        let sel = m.selection(proc);
        out.insert(
            proc.name().to_string(),
            report(truth, &sel.global, &sel.local, &m.beta_hat, None, None, None)?,
        );
    }
    Ok(out)
}

/// Truth scored against itself.
pub fn self_report(truth: &GroundTruth) -> anyhow::Result<MethodReport> {
    report(
        truth,
        &truth.influential_global,
        &truth.support_true,
        &truth.beta_true,
        Some(&truth.z_true),
        Some(&truth.sigma_true()),
        Some(truth.sigma2_eps_true),
    )
}

/// Mean and SE of each scalar across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub metric: String,
    #[serde(flatten)]
    pub value: MeanSe,
}

fn scalars(r: &MethodReport) -> Vec<(&'static str, Option<f64>)> {
    vec![
        ("global_precision", r.global.precision),
        ("global_recall", r.global.recall),
        ("global_f1", r.global.f1),
        ("local_f1_continuous", r.local_f1_continuous),
        ("local_f1_discrete", r.local_f1_discrete),
        ("mse_beta", Some(r.mse.beta)),
        ("mse_z", r.mse.z),
        ("mse_sigma", r.mse.sigma),
        ("mse_sigma2_eps", r.mse.sigma2_eps),
    ]
}

pub fn aggregate(files: &[MetricsFile]) -> Vec<AggregateRow> {
    let mut methods: Vec<(String, Vec<&MethodReport>)> = Vec::new();
    let bhm: Vec<&MethodReport> = files.iter().filter_map(|f| f.bhm.as_ref()).collect();
    if !bhm.is_empty() {
        methods.push(("BHM".into(), bhm));
    }
    for proc in Procedure::ALL {
        let v: Vec<&MethodReport> = files.iter().filter_map(|f| f.mua.get(proc.name())).collect();
        if !v.is_empty() {
            methods.push((format!("MUA({})", proc.name()), v));
        }
    }
    let mut rows = Vec::new();
    for (name, reports) in methods {
        let keys: Vec<&str> = scalars(reports[0]).into_iter().map(|(k, _)| k).collect();
        for (k, key) in keys.into_iter().enumerate() {
            let value = MeanSe::of(reports.iter().map(|r| scalars(r)[k].1));
            if value.count > 0 {
                rows.push(AggregateRow {
                    method: name.clone(),
                    metric: key.to_string(),
                    value,
                });
            }
        }
    }
    rows
}

//! Selection and estimation error metrics.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with precision, recall and F1. Ratios are `None` when
/// their denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl SelectionMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |a: usize, b: usize| if a + b == 0 { None } else { Some(a as f64 / (a + b) as f64) };
        let precision = ratio(tp, fp);
        let recall = ratio(tp, fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Compares a selected set with the true set, element by element.
pub fn precision_recall_f1(selected: &[bool], truth: &[bool]) -> Result<SelectionMetrics> {
    if selected.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            field: "selection mask",
            expected: truth.len(),
            found: selected.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&s, &t) in selected.iter().zip(truth) {
        match (s, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(SelectionMetrics::from_counts(tp, fp, fn_, tn))
}

/// Mean squared difference over all entries.
pub fn mse(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            field: "mse operand",
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Domain("mse of empty arrays".into()));
    }
    let sum: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / truth.len() as f64)
}

/// [`mse`] over all entries of two equally shaped matrices.
pub fn mse_mat(truth: &Mat<f64>, estimate: &Mat<f64>) -> Result<f64> {
    if truth.nrows() != estimate.nrows() || truth.ncols() != estimate.ncols() {
        return Err(Error::DimensionMismatch {
            field: "mse matrix shape",
            expected: truth.nrows() * truth.ncols(),
            found: estimate.nrows() * estimate.ncols(),
        });
    }
    let mut sum = 0.0;
    for j in 0..truth.ncols() {
        for i in 0..truth.nrows() {
            sum += (truth[(i, j)] - estimate[(i, j)]).powi(2);
        }
    }
    Ok(sum / (truth.nrows() * truth.ncols()).max(1) as f64)
}

/// Mean and standard error over replicates; undefined values are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: Option<f64>,
    pub se: Option<f64>,
    /// Number of defined values.
    pub count: usize,
}

impl MeanSe {
    pub fn of<I: IntoIterator<Item = Option<f64>>>(values: I) -> Self {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        let count = v.len();
        if count == 0 {
            return Self { mean: None, se: None, count };
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let se = (count > 1).then(|| {
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        });
        Self { mean: Some(mean), se, count }
    }
}

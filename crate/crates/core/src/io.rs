//! File formats: the `BIOSR1` binary dataset, headerless CSV datasets,
//! matrix CSV/binary blocks, chain traces, and JSON summaries.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, IndicatorMatrix, LocationGrid, MaternKernel, PosteriorSummary, Traces};
use crate::simulate::{GroundTruth, Scenario};

pub const DATASET_MAGIC: &[u8; 7] = b"BIOSR1\n";
pub const MATRIX_MAGIC: &[u8; 7] = b"BIOSM1\n";

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Renders a value with 17 significant digits, which round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_u64(r: &mut impl Read, path: &Path, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| format_err(path, format!("truncated before {what}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, count: usize, path: &Path, what: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| format_err(path, format!("truncated inside {what}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn write_f64s(w: &mut impl Write, m: &Mat<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn checked_len(path: &Path, dims: &[u64]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
        .filter(|&n| n <= (1 << 34))
        .ok_or_else(|| format_err(path, format!("implausible dimensions {dims:?}")))
}

/// Writes a dataset in the `BIOSR1` layout: magic, little-endian `u64`
/// `n, p, K, q`, then row-major `f64` grid, `Y` and `X`.
pub fn write_biosr1(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    for v in [data.n(), data.p(), data.grid.k(), data.q()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for c in data.grid.coords() {
        w.write_all(&c.to_le_bytes())?;
    }
    write_f64s(&mut w, &data.y)?;
    write_f64s(&mut w, &data.x)?;
    w.flush()?;
    Ok(())
}

pub fn read_biosr1(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)
        .map_err(|_| format_err(path, "file shorter than the magic"))?;
    if &magic != DATASET_MAGIC {
        return Err(format_err(path, "bad magic, expected BIOSR1"));
    }
    let n = read_u64(&mut r, path, "n")?;
    let p = read_u64(&mut r, path, "p")?;
    let k = read_u64(&mut r, path, "K")?;
    let q = read_u64(&mut r, path, "q")?;
    let coords = read_f64s(&mut r, checked_len(path, &[p, k])?, path, "grid")?;
    let y = read_f64s(&mut r, checked_len(path, &[n, p])?, path, "Y")?;
    let x = read_f64s(&mut r, checked_len(path, &[n, q])?, path, "X")?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(format_err(path, format!("{} trailing bytes", rest.len())));
    }
    let (n, p, k, q) = (n as usize, p as usize, k as usize, q as usize);
    let grid = LocationGrid::new(coords, p, k)?;
    Dataset::new(
        crate::linalg::from_row_major(n, p, &y),
        crate::linalg::from_row_major(n, q, &x),
        grid,
    )
}

/// Writes a headerless CSV, one matrix row per line.
pub fn write_matrix_csv(path: &Path, m: &Mat<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| fmt_f64(m[(i, j)])))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless numeric CSV; every row must have the same length.
pub fn read_matrix_csv(path: &Path) -> Result<Mat<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(format_err(path, format!("row {i} has {} fields", rec.len())));
        }
        for (j, f) in rec.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| format_err(path, format!("row {i}, column {j}: '{f}' is not a number")))?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(crate::linalg::from_row_major(rows, cols.unwrap_or(0), &data))
}

/// Writes `grid.csv`, `Y.csv` and `X.csv` into `dir`.
pub fn write_csv_dir(dir: &Path, data: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let g = crate::linalg::from_row_major(data.p(), data.grid.k(), data.grid.coords());
    write_matrix_csv(&dir.join("grid.csv"), &g)?;
    write_matrix_csv(&dir.join("Y.csv"), &data.y)?;
    write_matrix_csv(&dir.join("X.csv"), &data.x)?;
    Ok(())
}

pub fn read_csv_dir(dir: &Path) -> Result<Dataset> {
    let g = read_matrix_csv(&dir.join("grid.csv"))?;
    let y = read_matrix_csv(&dir.join("Y.csv"))?;
    let x = read_matrix_csv(&dir.join("X.csv"))?;
    let grid = LocationGrid::new(crate::linalg::to_row_major(g.as_ref()), g.nrows(), g.ncols())?;
    Dataset::new(y, x, grid)
}

/// Reads a CSV directory or a `BIOSR1` file, whichever `path` is.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    if path.is_dir() {
        read_csv_dir(path)
    } else {
        read_biosr1(path)
    }
}

/// Square or rectangular `f64` block: magic `BIOSM1\n`, little-endian `u64`
/// rows and cols, then row-major values.
pub fn write_matrix_bin(path: &Path, m: &Mat<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    write_f64s(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn read_matrix_bin(path: &Path) -> Result<Mat<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)
        .map_err(|_| format_err(path, "file shorter than the magic"))?;
    if &magic != MATRIX_MAGIC {
        return Err(format_err(path, "bad magic, expected BIOSM1"));
    }
    let rows = read_u64(&mut r, path, "rows")?;
    let cols = read_u64(&mut r, path, "cols")?;
    let v = read_f64s(&mut r, checked_len(path, &[rows, cols])?, path, "matrix")?;
    Ok(crate::linalg::from_row_major(rows as usize, cols as usize, &v))
}

/// Trace CSV with header `iter,sigma2_eps,pi_1..pi_q,tausum_1..tausum_q`.
pub fn write_traces_csv(path: &Path, t: &Traces) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iter".to_string(), "sigma2_eps".to_string()];
    header.extend((1..=t.q).map(|j| format!("pi_{j}")));
    header.extend((1..=t.q).map(|j| format!("tausum_{j}")));
    w.write_record(&header)?;
    for r in 0..t.len() {
        let mut rec = vec![t.iter[r].to_string(), fmt_f64(t.sigma2_eps[r])];
        rec.extend(t.pi[r * t.q..(r + 1) * t.q].iter().map(|&v| fmt_f64(v)));
        rec.extend(t.tausum[r * t.q..(r + 1) * t.q].iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_traces_csv(path: &Path) -> Result<Traces> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width < 2 || (width - 2) % 2 != 0 {
        return Err(format_err(path, format!("unexpected trace header with {width} columns")));
    }
    let q = (width - 2) / 2;
    let mut t = Traces::new(q);
    for rec in r.records() {
        let rec = rec?;
        let bad = |f: &str| format_err(path, format!("'{f}' is not a number"));
        let iter: u64 = rec[0].parse().map_err(|_| bad(&rec[0]))?;
        let s2: f64 = rec[1].parse().map_err(|_| bad(&rec[1]))?;
        let pi = (0..q)
            .map(|j| rec[2 + j].parse::<f64>().map_err(|_| bad(&rec[2 + j])))
            .collect::<Result<Vec<_>>>()?;
        let ts = (0..q)
            .map(|j| rec[2 + q + j].parse::<u32>().map_err(|_| bad(&rec[2 + q + j])))
            .collect::<Result<Vec<_>>>()?;
        t.push(iter, s2, &pi, &ts);
    }
    Ok(t)
}

/// Run-length encoding of a boolean row: alternating run lengths starting
/// with a (possibly empty) run of `false`.
pub fn rle_encode(mask: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0;
    for &b in mask {
        if b == current {
            len += 1;
        } else {
            runs.push(len);
            current = b;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn rle_decode(runs: &[usize]) -> Vec<bool> {
    let mut out = Vec::with_capacity(runs.iter().sum());
    for (k, &len) in runs.iter().enumerate() {
        out.extend(std::iter::repeat(k % 2 == 1).take(len));
    }
    out
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path).map_err(|e| format_err(path, e.to_string()))?);
    Ok(serde_json::from_reader(r)?)
}

/// Contents of `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub scenario: Scenario,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
    pub q: usize,
    pub influential_global: Vec<bool>,
    /// Nonzero count per covariate.
    pub support_counts: Vec<usize>,
    /// Run-length encoded support per covariate (see [`rle_encode`]).
    pub support_rle: Vec<Vec<usize>>,
    pub sigma_kernel: MaternKernel,
    pub sigma2_eps: f64,
    pub beta_file: String,
    pub z_file: String,
}

/// Writes `truth.json`, `beta_true.csv` and `Z_true.csv`.
pub fn write_truth(dir: &Path, truth: &GroundTruth) -> Result<()> {
    fs::create_dir_all(dir)?;
    let q = truth.support_true.rows();
    let file = TruthFile {
        scenario: truth.scenario,
        seed: truth.generator_seed,
        rows: truth.rows,
        cols: truth.cols,
        spacing: truth.spacing,
        q,
        influential_global: truth.influential_global.clone(),
        support_counts: (0..q).map(|j| truth.support_true.row_count(j)).collect(),
        support_rle: (0..q).map(|j| rle_encode(truth.support_true.row(j))).collect(),
        sigma_kernel: truth.sigma_kernel,
        sigma2_eps: truth.sigma2_eps_true,
        beta_file: "beta_true.csv".into(),
        z_file: "Z_true.csv".into(),
    };
    write_matrix_csv(&dir.join(&file.beta_file), &truth.beta_true)?;
    write_matrix_csv(&dir.join(&file.z_file), &truth.z_true)?;
    write_json(&dir.join("truth.json"), &file)
}

/// Reads `truth.json` and the matrices it references.
pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    let file: TruthFile = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let beta_true = read_matrix_csv(&dir.join(&file.beta_file))?;
    let z_true = read_matrix_csv(&dir.join(&file.z_file))?;
    let p = file.rows * file.cols;
    if beta_true.nrows() != file.q + 1 || beta_true.ncols() != p {
        return Err(format_err(path, "beta_true shape does not match the metadata"));
    }
    let support_true = IndicatorMatrix::from_fn(file.q, p, |j, s| beta_true[(j + 1, s)] != 0.0);
    for j in 0..file.q {
        if rle_decode(&file.support_rle[j]) != support_true.row(j) {
            return Err(format_err(path, format!("support of covariate {} disagrees with beta_true", j + 1)));
        }
    }
    Ok(GroundTruth {
        beta_true,
        support_true,
        influential_global: file.influential_global,
        generator_seed: file.seed,
        scenario: file.scenario,
        z_true,
        sigma_kernel: file.sigma_kernel,
        sigma2_eps_true: file.sigma2_eps,
        rows: file.rows,
        cols: file.cols,
        spacing: file.spacing,
    })
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub d: f64,
    pub n_stored: usize,
    pub chains: usize,
    pub mppi_global: Vec<f64>,
    pub selected_global: Vec<bool>,
    pub n_selected_global: usize,
    /// q rows of p values.
    pub mppi_local: Vec<Vec<f64>>,
    /// Run-length encoded local selections per covariate.
    pub selected_local_rle: Vec<Vec<usize>>,
    pub n_selected_local: Vec<usize>,
    pub sigma2_eps_mean: f64,
    pub beta_mean_file: String,
    pub sigma_mean_file: String,
    pub z_mean_file: String,
    pub trace_files: Vec<String>,
}

/// Writes `summary.json`, `beta_mean.csv`, `Sigma_mean.bin`, `Z_mean.csv`
/// and one `trace_chain<k>.csv` per chain.
pub fn write_summary(dir: &Path, s: &PosteriorSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    let q = s.mppi_global.len();
    let trace_files: Vec<String> = (0..s.traces.len()).map(|c| format!("trace_chain{c}.csv")).collect();
    for (t, f) in s.traces.iter().zip(&trace_files) {
        write_traces_csv(&dir.join(f), t)?;
    }
    let file = SummaryFile {
        d: s.d,
        n_stored: s.n_stored,
        chains: s.traces.len(),
        mppi_global: s.mppi_global.clone(),
        selected_global: s.selected_global.clone(),
        n_selected_global: s.selected_global.iter().filter(|&&b| b).count(),
        mppi_local: (0..q)
            .map(|j| (0..s.mppi_local.ncols()).map(|k| s.mppi_local[(j, k)]).collect())
            .collect(),
        selected_local_rle: (0..q).map(|j| rle_encode(s.selected_local.row(j))).collect(),
        n_selected_local: (0..q).map(|j| s.selected_local.row_count(j)).collect(),
        sigma2_eps_mean: s.sigma2_eps_mean,
        beta_mean_file: "beta_mean.csv".into(),
        sigma_mean_file: "Sigma_mean.bin".into(),
        z_mean_file: "Z_mean.csv".into(),
        trace_files,
    };
    write_matrix_csv(&dir.join(&file.beta_mean_file), &s.beta_mean)?;
    write_matrix_bin(&dir.join(&file.sigma_mean_file), &s.sigma_mean)?;
    write_matrix_csv(&dir.join(&file.z_mean_file), &s.z_mean)?;
    write_json(&dir.join("summary.json"), &file)
}

/// Reads a fit directory back into a summary (traces included).
pub fn read_summary(dir: &Path) -> Result<PosteriorSummary> {
    let path = dir.join("summary.json");
    let f: SummaryFile = read_json(&path)?;
    let q = f.mppi_global.len();
    let p = f.mppi_local.first().map_or(0, Vec::len);
    let mppi_local = Mat::from_fn(q, p, |j, s| f.mppi_local[j][s]);
    let decoded: Vec<Vec<bool>> = f.selected_local_rle.iter().map(|r| rle_decode(r)).collect();
    if decoded.len() != q || decoded.iter().any(|r| r.len() != p) {
        return Err(format_err(&path, "local selections do not match the MPPI shape"));
    }
    let selected_local = IndicatorMatrix::from_fn(q, p, |j, s| decoded[j][s]);
    let traces = f
        .trace_files
        .iter()
        .map(|t| read_traces_csv(&dir.join(t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSummary {
        d: f.d,
        n_stored: f.n_stored,
        mppi_global: f.mppi_global,
        mppi_local,
        selected_global: f.selected_global,
        selected_local,
        beta_mean: read_matrix_csv(&dir.join(&f.beta_mean_file))?,
        z_mean: read_matrix_csv(&dir.join(&f.z_mean_file))?,
        sigma_mean: read_matrix_bin(&dir.join(&f.sigma_mean_file))?,
        sigma2_eps_mean: f.sigma2_eps_mean,
        traces,
    })
}

/// Writes any serializable value as pretty JSON.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

/// Reads any deserializable value from JSON.
pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    read_json(path)
}

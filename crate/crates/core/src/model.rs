//! Domain types shared by every other module, and their validation.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, serde_mat};

/// The `p` observation sites in a `K`-dimensional domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationGrid {
    coords: Vec<f64>,
    p: usize,
    k: usize,
}

impl LocationGrid {
    /// Sites from row-major `p×k` coordinates. Rejects empty grids,
    /// non-finite coordinates and repeated sites.
    pub fn new(coords: Vec<f64>, p: usize, k: usize) -> Result<Self> {
        if p == 0 || k == 0 {
            return Err(Error::InvalidGrid(format!("need p >= 1 and K >= 1, got p={p}, K={k}")));
        }
        if coords.len() != p * k {
            return Err(Error::DimensionMismatch {
                field: "grid coordinates",
                expected: p * k,
                found: coords.len(),
            });
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                field: "grid",
                row: pos / k,
                col: pos % k,
            });
        }
        let grid = Self { coords, p, k };
        grid.check_distinct()?;
        Ok(grid)
    }

    /// `rows × cols` integer lattice with unit spacing. Site `r·cols + c`
    /// sits at `(r, c)`.
    pub fn lattice(rows: usize, cols: usize) -> Self {
        Self::scaled_lattice(rows, cols, 1.0)
    }

    /// Lattice with neighbouring sites `spacing` apart; site `r·cols + c`
    /// sits at `(r·spacing, c·spacing)`.
    pub fn scaled_lattice(rows: usize, cols: usize, spacing: f64) -> Self {
        assert!(rows > 0 && cols > 0, "lattice must be non-empty");
        assert!(spacing > 0.0 && spacing.is_finite(), "spacing must be positive");
        let mut coords = Vec::with_capacity(rows * cols * 2);
        for r in 0..rows {
            for c in 0..cols {
                coords.push(r as f64 * spacing);
                coords.push(c as f64 * spacing);
            }
        }
        Self {
            coords,
            p: rows * cols,
            k: 2,
        }
    }

    fn check_distinct(&self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.p).collect();
        order.sort_by(|&a, &b| {
            self.site(a)
                .iter()
                .zip(self.site(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            if self.site(w[0]) == self.site(w[1]) {
                return Err(Error::InvalidGrid(format!(
                    "sites {} and {} coincide",
                    w[0].min(w[1]),
                    w[0].max(w[1])
                )));
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn site(&self, i: usize) -> &[f64] {
        &self.coords[i * self.k..(i + 1) * self.k]
    }

    /// Euclidean distance between sites `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.site(i)
            .iter()
            .zip(self.site(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn distance_matrix(&self) -> Mat<f64> {
        let mut d = Mat::zeros(self.p, self.p);
        for j in 0..self.p {
            for i in (j + 1)..self.p {
                let r = self.distance(i, j);
                d[(i, j)] = r;
                d[(j, i)] = r;
            }
        }
        d
    }

    /// Largest pairwise distance (0 for a single site).
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.p {
            for i in (j + 1)..self.p {
                best = best.max(self.distance(i, j));
            }
        }
        best
    }

    /// Smallest pairwise distance (0 for a single site).
    pub fn min_spacing(&self) -> f64 {
        let mut best = f64::INFINITY;
        for j in 0..self.p {
            for i in (j + 1)..self.p {
                best = best.min(self.distance(i, j));
            }
        }
        if best.is_finite() {
            best
        } else {
            0.0
        }
    }
}

/// Observed images `y` (n×p) and covariates `x` (n×q) on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    #[serde(with = "serde_mat")]
    pub y: Mat<f64>,
    #[serde(with = "serde_mat")]
    pub x: Mat<f64>,
    pub grid: LocationGrid,
}

impl Dataset {
    /// Builds a dataset and checks shapes and finiteness.
    pub fn new(y: Mat<f64>, x: Mat<f64>, grid: LocationGrid) -> Result<Self> {
        let data = Self { y, x, grid };
        data.check()?;
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    fn check(&self) -> Result<()> {
        if self.y.ncols() != self.grid.p() {
            return Err(Error::DimensionMismatch {
                field: "Y column count vs grid sites",
                expected: self.grid.p(),
                found: self.y.ncols(),
            });
        }
        if self.x.nrows() != self.y.nrows() {
            return Err(Error::DimensionMismatch {
                field: "X row count vs Y row count",
                expected: self.y.nrows(),
                found: self.x.nrows(),
            });
        }
        if self.y.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                field: "Y row count",
                expected: 1,
                found: 0,
            });
        }
        check_finite("Y", &self.y)?;
        check_finite("X", &self.x)?;
        Ok(())
    }

    /// `[1, X]`, the n×(q+1) design with the intercept column first.
    pub fn design(&self) -> Mat<f64> {
        let (n, q) = (self.n(), self.q());
        Mat::from_fn(n, q + 1, |i, j| if j == 0 { 1.0 } else { self.x[(i, j - 1)] })
    }

    /// Z-scores every covariate column that is not binary 0/1 and returns the
    /// indices of the columns it touched. Constant columns are left alone.
    pub fn standardize_continuous(&mut self) -> Vec<usize> {
        let n = self.n();
        let mut touched = Vec::new();
        if n < 2 {
            return touched;
        }
        for j in 0..self.q() {
            let col: Vec<f64> = (0..n).map(|i| self.x[(i, j)]).collect();
            if col.iter().all(|&v| v == 0.0 || v == 1.0) {
                continue;
            }
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            if var <= 0.0 {
                continue;
            }
            let sd = var.sqrt();
            for i in 0..n {
                self.x[(i, j)] = (col[i] - mean) / sd;
            }
            touched.push(j);
        }
        touched
    }
}

fn check_finite(field: &'static str, m: &Mat<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { field, row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Matérn covariance with smoothness fixed at ν = 5/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternKernel {
    pub sigma2_s: f64,
    pub rho: f64,
}

impl MaternKernel {
    pub const NU: f64 = 2.5;

    pub fn new(sigma2_s: f64, rho: f64) -> Result<Self> {
        let k = Self { sigma2_s, rho };
        k.check()?;
        Ok(k)
    }

    /// Accepts only ν = 5/2.
    pub fn with_nu(sigma2_s: f64, rho: f64, nu: f64) -> Result<Self> {
        if nu != Self::NU {
            return Err(Error::InvalidHyperparameter {
                field: "kernel.nu",
                reason: format!("only nu = 5/2 is supported, got {nu}"),
            });
        }
        Self::new(sigma2_s, rho)
    }

    fn check(&self) -> Result<()> {
        if !(self.sigma2_s > 0.0 && self.sigma2_s.is_finite()) {
            return Err(Error::InvalidHyperparameter {
                field: "kernel.sigma2_s",
                reason: format!("must be positive and finite, got {}", self.sigma2_s),
            });
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidHyperparameter {
                field: "kernel.rho",
                reason: format!("must be positive and finite, got {}", self.rho),
            });
        }
        Ok(())
    }
}

/// Fixed prior constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub a_eps: f64,
    pub b_eps: f64,
    pub a_pi: f64,
    pub b_pi: f64,
    /// Global threshold on the participation rate.
    pub d: f64,
    /// Slab means, (q+1)×p; row 0 is the intercept.
    #[serde(with = "serde_mat")]
    pub mu0: Mat<f64>,
    /// Slab variances, (q+1)×p.
    #[serde(with = "serde_mat")]
    pub sigma2_0: Mat<f64>,
    /// IWP degrees-of-freedom parameter (Dawid parameterization).
    pub delta: u32,
    pub kernel: MaternKernel,
}

impl Hyperparams {
    /// Default priors: `a_ε = b_ε = 1`, `a_π = b_π = 1`, `d = 0.05`,
    /// slab `N(0, 1)` everywhere, `δ = 5`.
    pub fn defaults(q: usize, p: usize, kernel: MaternKernel) -> Self {
        Self {
            a_eps: 1.0,
            b_eps: 1.0,
            a_pi: 1.0,
            b_pi: 1.0,
            d: 0.05,
            mu0: Mat::zeros(q + 1, p),
            sigma2_0: Mat::from_fn(q + 1, p, |_, _| 1.0),
            delta: 5,
            kernel,
        }
    }

    /// Replace the slab with constant mean and variance.
    pub fn with_slab(mut self, mu0: f64, sigma2_0: f64) -> Self {
        let (r, c) = (self.mu0.nrows(), self.mu0.ncols());
        self.mu0 = Mat::from_fn(r, c, |_, _| mu0);
        self.sigma2_0 = Mat::from_fn(r, c, |_, _| sigma2_0);
        self
    }

    fn check(&self, q: usize, p: usize) -> Result<()> {
        let positive = [
            ("a_eps", self.a_eps),
            ("b_eps", self.b_eps),
            ("a_pi", self.a_pi),
            ("b_pi", self.b_pi),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidHyperparameter {
                    field,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.d) {
            return Err(Error::InvalidHyperparameter {
                field: "d",
                reason: format!("must lie in [0, 1], got {}", self.d),
            });
        }
        if self.delta < 5 {
            return Err(Error::InvalidHyperparameter {
                field: "delta",
                reason: format!("must be at least 5, got {}", self.delta),
            });
        }
        for (field, m) in [("mu0", &self.mu0), ("sigma2_0", &self.sigma2_0)] {
            if m.nrows() != q + 1 || m.ncols() != p {
                return Err(Error::InvalidHyperparameter {
                    field,
                    reason: format!(
                        "shape {}x{} does not match (q+1)x p = {}x{}",
                        m.nrows(),
                        m.ncols(),
                        q + 1,
                        p
                    ),
                });
            }
        }
        check_finite("mu0", &self.mu0)?;
        for j in 0..p {
            for i in 0..=q {
                let v = self.sigma2_0[(i, j)];
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidHyperparameter {
                        field: "sigma2_0",
                        reason: format!("entry ({i}, {j}) must be positive, got {v}"),
                    });
                }
            }
        }
        self.kernel.check()
    }
}

/// Dimensions of a validated (dataset, hyperparameters) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelContext {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub k: usize,
}

/// Checks every dataset and hyperparameter invariant.
pub fn validate(dataset: &Dataset, hyper: &Hyperparams) -> Result<ModelContext> {
    dataset.check()?;
    hyper.check(dataset.q(), dataset.p())?;
    Ok(ModelContext {
        n: dataset.n(),
        p: dataset.p(),
        q: dataset.q(),
        k: dataset.grid.k(),
    })
}

/// Dense boolean matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl IndicatorMatrix {
    pub fn filled(rows: usize, cols: usize, value: bool) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [bool] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_count(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&b| b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }
}

/// One state of the Gibbs chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    /// Noise-free surfaces, n×p.
    #[serde(with = "serde_mat")]
    pub z: Mat<f64>,
    /// Coefficient images, (q+1)×p, row 0 is the intercept.
    #[serde(with = "serde_mat")]
    pub beta: Mat<f64>,
    /// Local indicators, q×p (no intercept row).
    pub tau: IndicatorMatrix,
    /// Participation rates, length q.
    pub pi: Vec<f64>,
    pub sigma2_eps: f64,
    /// Within-image covariance, p×p.
    #[serde(with = "serde_mat")]
    pub sigma: Mat<f64>,
}

impl ChainState {
    /// Checks the covariance, range, and sparsity-consistency invariants
    /// against the global threshold `d`.
    pub fn check_invariants(&self, d: f64) -> Result<()> {
        if !(self.sigma2_eps > 0.0 && self.sigma2_eps.is_finite()) {
            return Err(Error::Domain(format!("sigma2_eps = {} is not positive", self.sigma2_eps)));
        }
        if let Some(j) = self.pi.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Domain(format!("pi[{j}] = {} outside [0, 1]", self.pi[j])));
        }
        if linalg::asymmetry(self.sigma.as_ref()) > 1e-10 {
            return Err(Error::Domain("Sigma is not symmetric".into()));
        }
        linalg::cholesky(self.sigma.as_ref())?;
        if let Some((j, s)) = self.sparsity_violation(d) {
            return Err(Error::Domain(format!(
                "beta[{}, {s}] is nonzero but tau = {} and pi = {}",
                j + 1,
                self.tau.get(j, s),
                self.pi[j]
            )));
        }
        Ok(())
    }

    /// First `(j, s)` (covariate index without the intercept) where
    /// `beta ≠ 0` although `tau = 0` or `pi < d`.
    pub fn sparsity_violation(&self, d: f64) -> Option<(usize, usize)> {
        let q = self.pi.len();
        for j in 0..q {
            let on = self.pi[j] >= d;
            for s in 0..self.beta.ncols() {
                if self.beta[(j + 1, s)] != 0.0 && !(on && self.tau.get(j, s)) {
                    return Some((j, s));
                }
            }
        }
        None
    }
}

/// Per-iteration scalar traces of one chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Traces {
    pub q: usize,
    pub iter: Vec<u64>,
    pub sigma2_eps: Vec<f64>,
    /// Row-major `len × q`.
    pub pi: Vec<f64>,
    /// Row-major `len × q`.
    pub tausum: Vec<u32>,
}

impl Traces {
    pub fn new(q: usize) -> Self {
        Self {
            q,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.iter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iter.is_empty()
    }

    pub fn push(&mut self, iter: u64, sigma2_eps: f64, pi: &[f64], tausum: &[u32]) {
        debug_assert_eq!(pi.len(), self.q);
        debug_assert_eq!(tausum.len(), self.q);
        self.iter.push(iter);
        self.sigma2_eps.push(sigma2_eps);
        self.pi.extend_from_slice(pi);
        self.tausum.extend_from_slice(tausum);
    }

    pub fn pi_trace(&self, j: usize) -> Vec<f64> {
        self.pi.iter().skip(j).step_by(self.q.max(1)).copied().collect()
    }

    pub fn tausum_trace(&self, j: usize) -> Vec<f64> {
        self.tausum
            .iter()
            .skip(j)
            .step_by(self.q.max(1))
            .map(|&c| c as f64)
            .collect()
    }

    /// Fraction of recorded draws with `pi_j >= d`.
    pub fn global_inclusion_rate(&self, j: usize, d: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let hits = self.pi_trace(j).iter().filter(|&&v| v >= d).count();
        hits as f64 / self.len() as f64
    }
}

/// Posterior summaries of one or more chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub d: f64,
    /// Number of stored draws the averages run over.
    pub n_stored: usize,
    /// Mean of `I(pi_j >= d)`.
    pub mppi_global: Vec<f64>,
    /// Mean of `I(pi_j >= d)·tau_j(s)`, q×p.
    #[serde(with = "serde_mat")]
    pub mppi_local: Mat<f64>,
    pub selected_global: Vec<bool>,
    pub selected_local: IndicatorMatrix,
    #[serde(with = "serde_mat")]
    pub beta_mean: Mat<f64>,
    #[serde(with = "serde_mat")]
    pub z_mean: Mat<f64>,
    #[serde(with = "serde_mat")]
    pub sigma_mean: Mat<f64>,
    pub sigma2_eps_mean: f64,
    /// One entry per chain.
    pub traces: Vec<Traces>,
}

impl PosteriorSummary {
    /// Median-probability-model selections from the MPPIs (strictly above 0.5).
    pub fn select(mppi_global: &[f64], mppi_local: &Mat<f64>) -> (Vec<bool>, IndicatorMatrix) {
        let global = mppi_global.iter().map(|&m| m > 0.5).collect();
        let local = IndicatorMatrix::from_fn(mppi_local.nrows(), mppi_local.ncols(), |j, s| {
            mppi_local[(j, s)] > 0.5
        });
        (global, local)
    }
}

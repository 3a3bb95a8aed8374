//! Synthetic datasets with known coefficient images.
//!
//! Both scenarios draw coefficient images from a Matérn-5/2 Gaussian process
//! on a lattice spanning the unit square, rescale them away from zero, and then impose a
//! sparsity pattern: random site deletion (scenario 1) or a single square
//! support (scenario 2). Covariates 1–5 are standard normal, 6–8 are fair
//! Bernoulli and 9.. are standard normal with zero coefficients.

use faer::Mat;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::build_psi;
use crate::linalg;
use crate::model::{Dataset, IndicatorMatrix, LocationGrid, MaternKernel};
use crate::rng::stream;

/// Which generator produced a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scenario {
    S1,
    S2 { pi_target: f64 },
}

/// Number of covariates with nonzero coefficient images.
pub const INFLUENTIAL: usize = 8;

/// Covariates (1-based) that are Bernoulli(0.5); the rest are standard normal.
pub const DISCRETE: [usize; 3] = [6, 7, 8];

/// Fraction of sites zeroed per covariate (1-based) in scenario 1.
pub const S1_ZERO_FRACTIONS: [(usize, f64); 6] =
    [(2, 0.1), (7, 0.1), (3, 0.2), (8, 0.2), (4, 0.3), (5, 0.4)];

/// Sizes and kernels of a simulated study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub q: usize,
    pub rows: usize,
    pub cols: usize,
    /// Kernel of the coefficient-image process.
    pub beta_kernel: MaternKernel,
    /// Kernel of the within-image covariance Σ.
    pub sigma_kernel: MaternKernel,
    pub noise_var: f64,
    /// Distance between neighbouring sites.
    pub spacing: f64,
}

/// Spacing that stretches `side` sites across `[0, 1]`.
pub fn unit_square_spacing(side: usize) -> f64 {
    1.0 / side.saturating_sub(1).max(1) as f64
}

impl Default for SimConfig {
    fn default() -> Self {
        let k = MaternKernel { sigma2_s: 1.0, rho: 0.25 };
        Self {
            n: 100,
            q: 15,
            rows: 30,
            cols: 30,
            beta_kernel: k,
            sigma_kernel: k,
            noise_var: 1.0,
            spacing: unit_square_spacing(30),
        }
    }
}

impl SimConfig {
    fn check(&self) -> Result<()> {
        if self.q < INFLUENTIAL {
            return Err(Error::InvalidHyperparameter {
                field: "q",
                reason: format!("scenarios need at least {INFLUENTIAL} covariates, got {}", self.q),
            });
        }
        if self.n == 0 || self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidHyperparameter {
                field: "n",
                reason: "n, rows and cols must be positive".into(),
            });
        }
        if !(self.noise_var > 0.0) {
            return Err(Error::InvalidHyperparameter {
                field: "noise_var",
                reason: format!("must be positive, got {}", self.noise_var),
            });
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidHyperparameter {
                field: "spacing",
                reason: format!("must be positive, got {}", self.spacing),
            });
        }
        MaternKernel::new(self.beta_kernel.sigma2_s, self.beta_kernel.rho)?;
        MaternKernel::new(self.sigma_kernel.sigma2_s, self.sigma_kernel.rho)?;
        Ok(())
    }
}

/// Everything needed to score a fit against a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(with = "linalg::serde_mat")]
    pub beta_true: Mat<f64>,
    pub support_true: IndicatorMatrix,
    pub influential_global: Vec<bool>,
    pub generator_seed: u64,
    pub scenario: Scenario,
    #[serde(with = "linalg::serde_mat")]
    pub z_true: Mat<f64>,
    pub sigma_kernel: MaternKernel,
    pub sigma2_eps_true: f64,
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

impl GroundTruth {
    /// True Σ, without jitter.
    pub fn sigma_true(&self) -> Mat<f64> {
        crate::kernels::gram_matrix(&LocationGrid::scaled_lattice(self.rows, self.cols, self.spacing), &self.sigma_kernel)
    }

    /// Rebuilds support and global flags from `beta_true`.
    pub fn from_beta(
        beta_true: Mat<f64>,
        z_true: Mat<f64>,
        generator_seed: u64,
        scenario: Scenario,
        config: &SimConfig,
    ) -> Self {
        let q = beta_true.nrows() - 1;
        let p = beta_true.ncols();
        let support_true = IndicatorMatrix::from_fn(q, p, |j, s| beta_true[(j + 1, s)] != 0.0);
        let influential_global = (0..q).map(|j| support_true.row_count(j) > 0).collect();
        Self {
            beta_true,
            support_true,
            influential_global,
            generator_seed,
            scenario,
            z_true,
            sigma_kernel: config.sigma_kernel,
            sigma2_eps_true: config.noise_var,
            rows: config.rows,
            cols: config.cols,
            spacing: config.spacing,
        }
    }
}

/// `mean + L·ε` with `L` the Cholesky factor of `sigma`.
pub fn sample_gp<R: Rng + ?Sized>(mean: &[f64], sigma: &Mat<f64>, rng: &mut R) -> Result<Vec<f64>> {
    if sigma.nrows() != mean.len() || sigma.ncols() != mean.len() {
        return Err(Error::DimensionMismatch {
            field: "GP covariance",
            expected: mean.len(),
            found: sigma.nrows(),
        });
    }
    let l = linalg::cholesky(sigma.as_ref())?;
    Ok(sample_gp_chol(mean, &l, rng))
}

/// As [`sample_gp`] with a precomputed lower Cholesky factor.
pub fn sample_gp_chol<R: Rng + ?Sized>(mean: &[f64], l: &Mat<f64>, rng: &mut R) -> Vec<f64> {
    let p = mean.len();
    let eps: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = mean.to_vec();
    for j in 0..p {
        let e = eps[j];
        if e == 0.0 {
            continue;
        }
        let col = l.col_as_slice(j);
        for i in j..p {
            out[i] += col[i] * e;
        }
    }
    out
}

/// Shifts and scales a GP draw so that it no longer crosses zero:
/// `(β̃(s) + sign(β̃(s'))|β̃(s')|) / (2|β̃(s')|)` with `s' = argmax |β̃|`.
pub fn rescale_beta(beta_tilde: &[f64]) -> Result<Vec<f64>> {
    let (arg, m) = beta_tilde
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, &v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
    if m == 0.0 {
        return Err(Error::Degenerate("cannot rescale an all-zero coefficient image".into()));
    }
    let shift = beta_tilde[arg].signum() * m;
    Ok(beta_tilde.iter().map(|&b| (b + shift) / (2.0 * m)).collect())
}

struct Common {
    grid: LocationGrid,
    /// Rescaled GP draws for rows 0..=INFLUENTIAL, remaining rows zero.
    beta: Mat<f64>,
    x: Mat<f64>,
}

const TAG_BETA: u64 = 1;
const TAG_X: u64 = 2;
const TAG_Z: u64 = 3;
const TAG_NOISE: u64 = 4;
const TAG_SUPPORT: u64 = 5;

fn common(config: &SimConfig, seed: u64) -> Result<Common> {
    config.check()?;
    let grid = LocationGrid::scaled_lattice(config.rows, config.cols, config.spacing);
    let p = grid.p();
    let q = config.q;
    let psi = build_psi(&grid, &config.beta_kernel)?;
    let zeros = vec![0.0; p];
    let mut beta = Mat::zeros(q + 1, p);
    for j in 0..=INFLUENTIAL {
        let mut rng = stream(seed, &[TAG_BETA, j as u64]);
        let draw = rescale_beta(&sample_gp_chol(&zeros, psi.chol(), &mut rng))?;
        for (s, v) in draw.into_iter().enumerate() {
            beta[(j, s)] = v;
        }
    }
    let coin = Bernoulli::new(0.5).expect("valid probability");
    let mut x = Mat::zeros(config.n, q);
    for j in 0..q {
        let mut rng = stream(seed, &[TAG_X, j as u64]);
        let discrete = DISCRETE.contains(&(j + 1));
        for i in 0..config.n {
            x[(i, j)] = if discrete {
                coin.sample(&mut rng) as u8 as f64
            } else {
                rng.sample(StandardNormal)
            };
        }
    }
    Ok(Common { grid, beta, x })
}

fn finish(
    c: Common,
    config: &SimConfig,
    seed: u64,
    scenario: Scenario,
) -> Result<(Dataset, GroundTruth)> {
    let p = c.grid.p();
    let n = config.n;
    let mu = linalg::mul(design(&c.x).as_ref(), c.beta.as_ref());
    let sigma = build_psi(&c.grid, &config.sigma_kernel)?;
    let noise_sd = config.noise_var.sqrt();
    let mut z = Mat::zeros(n, p);
    let mut y = Mat::zeros(n, p);
    for i in 0..n {
        let mean: Vec<f64> = (0..p).map(|s| mu[(i, s)]).collect();
        let zi = sample_gp_chol(&mean, sigma.chol(), &mut stream(seed, &[TAG_Z, i as u64]));
        let mut rng = stream(seed, &[TAG_NOISE, i as u64]);
        for s in 0..p {
            z[(i, s)] = zi[s];
            y[(i, s)] = zi[s] + noise_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let data = Dataset::new(y, c.x, c.grid)?;
    let truth = GroundTruth::from_beta(c.beta, z, seed, scenario, config);
    Ok((data, truth))
}

fn design(x: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

/// Scenario 1: covariates 2 and 7 lose 10% of their sites, 3 and 8 lose
/// 20%, 4 loses 30% and 5 loses 40%; covariates 1 and 6 stay fully nonzero.
pub fn gen_scenario1(config: &SimConfig, seed: u64) -> Result<(Dataset, GroundTruth)> {
    let mut c = common(config, seed)?;
    let p = c.grid.p();
    for &(j, frac) in &S1_ZERO_FRACTIONS {
        let count = (frac * p as f64).round() as usize;
        let mut sites: Vec<usize> = (0..p).collect();
        let mut rng = stream(seed, &[TAG_SUPPORT, j as u64]);
        let (chosen, _) = sites.partial_shuffle(&mut rng, count);
        for &s in chosen.iter() {
            c.beta[(j, s)] = 0.0;
        }
    }
    finish(c, config, seed, Scenario::S1)
}

/// Side length of the square support for `pi_target` on a `rows × cols` grid.
pub fn square_side(pi_target: f64, rows: usize, cols: usize) -> Result<usize> {
    let target = (pi_target * (rows * cols) as f64).round();
    let side = target.sqrt().round() as usize;
    if !(pi_target > 0.0 && pi_target <= 1.0) || side == 0 || (side * side) as f64 != target {
        return Err(Error::InvalidHyperparameter {
            field: "pi_target",
            reason: format!("{pi_target} of {} sites is not a perfect square", rows * cols),
        });
    }
    if side > rows || side > cols {
        return Err(Error::InvalidHyperparameter {
            field: "pi_target",
            reason: format!("a {side}x{side} square does not fit a {rows}x{cols} grid"),
        });
    }
    Ok(side)
}

/// Top-left corner `(row, col)` of the square support of covariate `j`.
pub fn square_corner(seed: u64, j: usize, side: usize, rows: usize, cols: usize) -> (usize, usize) {
    let mut rng = stream(seed, &[TAG_SUPPORT, j as u64]);
    let r = rng.random_range(0..=rows - side);
    let c = rng.random_range(0..=cols - side);
    (r, c)
}

/// Scenario 2: each influential covariate is supported on one axis-aligned
/// square covering `pi_target` of the sites, placed uniformly at random.
pub fn gen_scenario2(pi_target: f64, config: &SimConfig, seed: u64) -> Result<(Dataset, GroundTruth)> {
    let side = square_side(pi_target, config.rows, config.cols)?;
    let mut c = common(config, seed)?;
    for j in 1..=INFLUENTIAL {
        let (r0, c0) = square_corner(seed, j, side, config.rows, config.cols);
        for r in 0..config.rows {
            for col in 0..config.cols {
                let inside = (r0..r0 + side).contains(&r) && (c0..c0 + side).contains(&col);
                if !inside {
                    c.beta[(j, r * config.cols + col)] = 0.0;
                }
            }
        }
    }
    finish(c, config, seed, Scenario::S2 { pi_target })
}

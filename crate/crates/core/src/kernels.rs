//! Matérn-5/2 kernel, Inverse-Wishart scale matrices, empirical kernel
//! fitting and Inverse-Wishart draws in the Dawid parameterization.

use std::collections::HashMap;

use faer::linalg::matmul::triangular::{matmul as tri_matmul, BlockStructure};
use faer::linalg::triangular_inverse::invert_upper_triangular;
use faer::{Accum, Mat, Par};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dataset, LocationGrid, MaternKernel};

/// Matérn covariance with ν = 5/2 at distance `r`:
/// `σ²(1 + √5 r/ρ + 5r²/(3ρ²)) exp(−√5 r/ρ)`.
pub fn matern52(r: f64, sigma2: f64, rho: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("distance must be nonnegative, got {r}")));
    }
    if !(sigma2 > 0.0) || !(rho > 0.0) {
        return Err(Error::Domain(format!(
            "Matérn parameters must be positive, got sigma2={sigma2}, rho={rho}"
        )));
    }
    Ok(sigma2 * matern52_unit(r / rho))
}

/// Unit-variance Matérn-5/2 correlation at scaled distance `u = r/ρ`.
#[inline]
pub(crate) fn matern52_unit(u: f64) -> f64 {
    let a = 5f64.sqrt() * u;
    (1.0 + a + a * a / 3.0) * (-a).exp()
}

/// Gram matrix of `kernel` over the grid, without jitter.
pub fn gram_matrix(grid: &LocationGrid, kernel: &MaternKernel) -> Mat<f64> {
    let p = grid.p();
    let mut k = Mat::zeros(p, p);
    for j in 0..p {
        k[(j, j)] = kernel.sigma2_s;
        for i in (j + 1)..p {
            let v = kernel.sigma2_s * matern52_unit(grid.distance(i, j) / kernel.rho);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Symmetric positive-definite scale matrix with its cached lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct ScaleMatrix {
    psi: Mat<f64>,
    chol: Mat<f64>,
    jitter: f64,
}

impl ScaleMatrix {
    /// Factorizes `psi` as given, falling back to diagonal jitter relative to
    /// its mean diagonal when plain Cholesky fails.
    pub fn new(psi: Mat<f64>) -> Result<Self> {
        if psi.nrows() != psi.ncols() {
            return Err(Error::DimensionMismatch {
                field: "scale matrix",
                expected: psi.nrows(),
                found: psi.ncols(),
            });
        }
        if let Ok(chol) = linalg::cholesky(psi.as_ref()) {
            return Ok(Self { psi, chol, jitter: 0.0 });
        }
        let p = psi.nrows();
        let scale = (0..p).map(|i| psi[(i, i)].abs()).sum::<f64>() / p.max(1) as f64;
        let (chol, jitter) = linalg::cholesky_with_jitter(psi.as_ref(), scale)?;
        let mut psi = psi;
        for i in 0..p {
            psi[(i, i)] += jitter;
        }
        Ok(Self { psi, chol, jitter })
    }

    pub fn psi(&self) -> &Mat<f64> {
        &self.psi
    }

    pub fn chol(&self) -> &Mat<f64> {
        &self.chol
    }

    /// Amount that was added to the diagonal to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.psi.nrows()
    }
}

/// `Ψ[i,j] = matern52(‖s_i − s_j‖)` with `1e-8·σ²_s` added to the diagonal,
/// escalated tenfold up to `1e-4·σ²_s` until Cholesky succeeds.
pub fn build_psi(grid: &LocationGrid, kernel: &MaternKernel) -> Result<ScaleMatrix> {
    let k = gram_matrix(grid, kernel);
    let (chol, jitter) = linalg::cholesky_with_jitter(k.as_ref(), kernel.sigma2_s).map_err(|_| {
        Error::Factorization(format!(
            "Matérn Gram matrix over {} sites is singular even after maximum jitter; the grid is degenerate",
            grid.p()
        ))
    })?;
    let mut psi = k;
    for i in 0..psi.nrows() {
        psi[(i, i)] += jitter;
    }
    Ok(ScaleMatrix { psi, chol, jitter })
}

/// Result of fitting a kernel to an empirical covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelFit {
    pub kernel: MaternKernel,
    /// Mean squared Frobenius error per matrix entry at the optimum.
    pub mse: f64,
}

/// Sample covariance `(1/(n−1)) Σ rᵢ rᵢᵀ` of the residuals `rᵢ = Yᵢ − [1, Xᵢ]·β`.
pub fn residual_covariance(data: &Dataset, beta: &Mat<f64>) -> Result<Mat<f64>> {
    let n = data.n();
    if n < 2 {
        return Err(Error::Degenerate(format!("need n >= 2 observations, got {n}")));
    }
    if beta.nrows() != data.q() + 1 || beta.ncols() != data.p() {
        return Err(Error::DimensionMismatch {
            field: "coefficient rows",
            expected: data.q() + 1,
            found: beta.nrows(),
        });
    }
    let fitted = linalg::mul(data.design().as_ref(), beta.as_ref());
    let resid = Mat::from_fn(n, data.p(), |i, s| data.y[(i, s)] - fitted[(i, s)]);
    let mut s = linalg::gram(resid.as_ref());
    let scale = 1.0 / (n - 1) as f64;
    for j in 0..s.ncols() {
        for i in 0..s.nrows() {
            s[(i, j)] *= scale;
        }
    }
    if (0..s.nrows()).all(|i| s[(i, i)] == 0.0) {
        return Err(Error::Degenerate("residuals are identically zero".into()));
    }
    Ok(s)
}

/// Fits `(σ²_s, ρ)` of a Matérn-5/2 kernel to the covariance of the
/// residuals left by `mua_beta`.
pub fn fit_kernel_empirical(data: &Dataset, mua_beta: &Mat<f64>) -> Result<MaternKernel> {
    let s = residual_covariance(data, mua_beta)?;
    Ok(fit_kernel_to_covariance(&data.grid, &s)?.kernel)
}

/// Distance-binned sufficient statistics of the Frobenius objective.
struct Binned {
    /// (distance, number of matrix entries, sum of S over those entries)
    bins: Vec<(f64, f64, f64)>,
    sum_sq: f64,
    entries: f64,
}

impl Binned {
    fn new(grid: &LocationGrid, s: &Mat<f64>) -> Self {
        let p = grid.p();
        let mut map: HashMap<u64, (f64, f64, f64)> = HashMap::new();
        let mut sum_sq = 0.0;
        for j in 0..p {
            let e = map.entry(0f64.to_bits()).or_insert((0.0, 0.0, 0.0));
            e.1 += 1.0;
            e.2 += s[(j, j)];
            sum_sq += s[(j, j)] * s[(j, j)];
            for i in (j + 1)..p {
                let r = grid.distance(i, j);
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                let e = map.entry(r.to_bits()).or_insert((r, 0.0, 0.0));
                e.1 += 2.0;
                e.2 += 2.0 * v;
                sum_sq += s[(i, j)] * s[(i, j)] + s[(j, i)] * s[(j, i)];
            }
        }
        let mut bins: Vec<_> = map.into_values().collect();
        bins.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            bins,
            sum_sq,
            entries: (p * p) as f64,
        }
    }

    /// Profiled objective at `rho`: returns (optimal σ², squared error).
    fn profile(&self, rho: f64) -> (f64, f64) {
        let mut ks = 0.0;
        let mut kk = 0.0;
        for &(r, count, sum) in &self.bins {
            let k = matern52_unit(r / rho);
            ks += k * sum;
            kk += count * k * k;
        }
        let sigma2 = (ks / kk).max(0.0);
        (sigma2, self.sum_sq - sigma2 * ks.max(0.0))
    }

    /// Squared error at arbitrary `(σ², ρ)`.
    fn objective(&self, sigma2: f64, rho: f64) -> f64 {
        let mut ks = 0.0;
        let mut kk = 0.0;
        for &(r, count, sum) in &self.bins {
            let k = matern52_unit(r / rho);
            ks += k * sum;
            kk += count * k * k;
        }
        self.sum_sq - 2.0 * sigma2 * ks + sigma2 * sigma2 * kk
    }
}

/// Number of log-spaced length scales scanned before refinement.
pub const RHO_GRID_POINTS: usize = 60;

/// The length-scale search range `[lo, hi]` used for `grid`.
pub fn rho_search_range(grid: &LocationGrid) -> (f64, f64) {
    let hi = grid.diameter();
    let lo = (1e-2 * hi).min(0.1 * grid.min_spacing());
    (lo, hi)
}

/// Minimizes `‖S − σ² K₁(ρ)‖²_F` over `(σ², ρ)`. `σ²` is profiled out in
/// closed form; `ρ` is scanned on a log grid and refined by golden section.
pub fn fit_kernel_to_covariance(grid: &LocationGrid, s: &Mat<f64>) -> Result<KernelFit> {
    let p = grid.p();
    if s.nrows() != p || s.ncols() != p {
        return Err(Error::DimensionMismatch {
            field: "empirical covariance",
            expected: p,
            found: s.nrows(),
        });
    }
    let binned = Binned::new(grid, s);
    if binned.sum_sq == 0.0 {
        return Err(Error::Degenerate("empirical covariance is identically zero".into()));
    }

    let (best_rho, (sigma2, err)) = if p == 1 {
        // a single site carries no information about the length scale
        (1.0, binned.profile(1.0))
    } else {
        let (lo, hi) = rho_search_range(grid);
        let (llo, lhi) = (lo.ln(), hi.ln());
        let step = (lhi - llo) / (RHO_GRID_POINTS - 1) as f64;
        let log_rhos: Vec<f64> = (0..RHO_GRID_POINTS).map(|k| llo + step * k as f64).collect();
        let errs: Vec<f64> = log_rhos.iter().map(|&l| binned.profile(l.exp()).1).collect();
        let k = errs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap();
        let a = log_rhos[k.saturating_sub(1)];
        let b = log_rhos[(k + 1).min(RHO_GRID_POINTS - 1)];
        let l = golden_section(|l| binned.profile(l.exp()).1, a, b, 1e-10);
        let (l, e) = if binned.profile(l.exp()).1 <= errs[k] {
            (l, binned.profile(l.exp()))
        } else {
            (log_rhos[k], binned.profile(log_rhos[k].exp()))
        };
        (l.exp(), e)
    };

    if !(sigma2 > 0.0) {
        return Err(Error::Degenerate(
            "empirical covariance has no positive projection onto any Matérn kernel".into(),
        ));
    }
    debug_assert!((binned.objective(sigma2, best_rho) - err).abs() <= 1e-8 * binned.sum_sq.max(1.0));
    Ok(KernelFit {
        kernel: MaternKernel::new(sigma2, best_rho)?,
        mse: err.max(0.0) / binned.entries,
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// One draw from the Inverse-Wishart distribution with Dawid parameter
/// `delta` and scale `psi`, i.e. standard degrees of freedom
/// `ν = delta + p − 1`. Under this mapping every principal submatrix of a
/// draw follows the same law with the same `delta`.
///
/// `W ~ Wishart(ν, Ψ⁻¹)` is drawn through a Bartlett factor ordered so that
/// `W = L⁻ᵀ U Uᵀ L⁻¹` with `U` upper triangular; then `W⁻¹ = T Tᵀ` with the
/// lower-triangular `T = L U⁻ᵀ`, so no dense inverse is formed. The diagonal
/// of `U` has `U_ii² ~ χ²(delta + i)`, independent of `p`.
pub fn sample_iw_dawid<R: Rng + ?Sized>(delta: f64, psi: &ScaleMatrix, rng: &mut R) -> Result<Mat<f64>> {
    let (sigma, _) = sample_iw_dawid_factor(delta, psi, rng)?;
    Ok(sigma)
}

/// As [`sample_iw_dawid`], also returning the lower Cholesky factor of the draw.
pub fn sample_iw_dawid_factor<R: Rng + ?Sized>(
    delta: f64,
    psi: &ScaleMatrix,
    rng: &mut R,
) -> Result<(Mat<f64>, Mat<f64>)> {
    if !(delta >= 1.0) {
        return Err(Error::Domain(format!("delta must be at least 1, got {delta}")));
    }
    let p = psi.dim();
    let mut u = Mat::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(delta + i as f64)
            .map_err(|e| Error::Domain(format!("chi-squared with {} dof: {e}", delta + i as f64)))?;
        u[(i, i)] = chi.sample(rng).sqrt();
        for j in (i + 1)..p {
            u[(i, j)] = rng.sample(StandardNormal);
        }
    }
    if (0..p).any(|i| !(u[(i, i)] > 0.0)) {
        return Err(Error::Factorization("Bartlett factor has a zero pivot".into()));
    }
    let mut u_inv = Mat::<f64>::zeros(p, p);
    invert_upper_triangular(u_inv.as_mut(), u.as_ref(), Par::Seq);

    // T = L · U⁻ᵀ (lower · lower)
    let mut t = Mat::<f64>::zeros(p, p);
    tri_matmul(
        t.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        psi.chol().as_ref(),
        BlockStructure::TriangularLower,
        u_inv.transpose(),
        BlockStructure::TriangularLower,
        1.0,
        Par::Seq,
    );
    // Σ = T Tᵀ, lower half then mirrored
    let mut sigma = Mat::<f64>::zeros(p, p);
    tri_matmul(
        sigma.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        t.as_ref(),
        BlockStructure::TriangularLower,
        t.transpose(),
        BlockStructure::TriangularUpper,
        1.0,
        Par::Seq,
    );
    linalg::mirror_lower(&mut sigma);
    if (0..p).any(|i| !(sigma[(i, i)] > 0.0 && sigma[(i, i)].is_finite())) {
        return Err(Error::Factorization("Inverse-Wishart draw is not positive definite".into()));
    }
    Ok((sigma, t))
}

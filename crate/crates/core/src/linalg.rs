//! Dense linear-algebra helpers on top of `faer`.
//!
//! Every routine runs sequentially so that results never depend on the
//! thread count; parallelism lives one level up, over sites and subjects.

use faer::linalg::matmul::matmul;
use faer::linalg::matmul::triangular::{matmul as tri_matmul, BlockStructure};
use faer::linalg::triangular_inverse::invert_lower_triangular;
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

/// Lower Cholesky factor `L` with `a = L Lᵀ`. Only the lower triangle of `a` is read.
pub fn cholesky(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            field: "cholesky input",
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    match a.llt(Side::Lower) {
        Ok(llt) => Ok(llt.L().to_owned()),
        Err(e) => Err(Error::Factorization(format!("{e:?}"))),
    }
}

/// Cholesky after adding `jitter·scale` to the diagonal, escalating the
/// jitter tenfold from `1e-8` up to `1e-4`. Returns the factor and the
/// absolute amount added to the diagonal.
pub fn cholesky_with_jitter(a: MatRef<'_, f64>, scale: f64) -> Result<(Mat<f64>, f64)> {
    let mut rel = 1e-8;
    while rel <= 1e-4 * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut shifted = a.to_owned();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Ok(l) = cholesky(shifted.as_ref()) {
            return Ok((l, jitter));
        }
        rel *= 10.0;
    }
    Err(Error::Factorization(format!(
        "matrix of order {} is not positive definite even with diagonal jitter 1e-4·{scale}",
        a.nrows()
    )))
}

/// `a · b`
pub fn mul(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a, b, 1.0, Par::Seq);
    out
}

/// `l · b` for lower-triangular `l`.
pub fn mul_lower(l: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(l.nrows(), b.ncols());
    tri_matmul(
        out.as_mut(),
        BlockStructure::Rectangular,
        Accum::Replace,
        l,
        BlockStructure::TriangularLower,
        b,
        BlockStructure::Rectangular,
        1.0,
        Par::Seq,
    );
    out
}

/// `aᵀ · a`, exactly symmetric.
pub fn gram(a: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = mul(a.transpose(), a);
    mirror_lower(&mut out);
    out
}

/// Copy the strict lower triangle onto the upper one.
pub fn mirror_lower(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            m[(j, i)] = m[(i, j)];
        }
    }
}

/// Inverse of `L Lᵀ` given its lower Cholesky factor.
pub fn inverse_from_cholesky(l: MatRef<'_, f64>) -> Mat<f64> {
    let n = l.nrows();
    let mut linv = Mat::zeros(n, n);
    invert_lower_triangular(linv.as_mut(), l, Par::Seq);
    let mut inv = Mat::zeros(n, n);
    tri_matmul(
        inv.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        linv.transpose(),
        BlockStructure::TriangularUpper,
        linv.as_ref(),
        BlockStructure::TriangularLower,
        1.0,
        Par::Seq,
    );
    mirror_lower(&mut inv);
    inv
}

/// Solve `L X = B` in place.
pub fn solve_lower_in_place(l: MatRef<'_, f64>, b: &mut Mat<f64>) {
    solve_lower_triangular_in_place(l, b.as_mut(), Par::Seq);
}

/// Solve `Lᵀ X = B` in place.
pub fn solve_lower_transpose_in_place(l: MatRef<'_, f64>, b: &mut Mat<f64>) {
    solve_upper_triangular_in_place(l.transpose(), b.as_mut(), Par::Seq);
}

/// Solve `U X = B` in place for upper-triangular `U`.
pub fn solve_upper_in_place(u: MatRef<'_, f64>, b: &mut Mat<f64>) {
    solve_upper_triangular_in_place(u, b.as_mut(), Par::Seq);
}

/// Largest `|a_ij - a_ji|` relative to the largest `|a_ij|`.
pub fn asymmetry(m: MatRef<'_, f64>) -> f64 {
    let n = m.nrows();
    let mut scale = 0.0f64;
    let mut diff = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            scale = scale.max(m[(i, j)].abs());
            diff = diff.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Row-major copy of a matrix.
pub fn to_row_major(m: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Matrix from row-major data.
pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Mat<f64> {
    assert_eq!(data.len(), rows * cols);
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

/// Serde adapter storing a matrix as `{rows, cols, data}` with row-major data.
pub mod serde_mat {
    use faer::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &Mat<f64>, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            rows: m.nrows(),
            cols: m.ncols(),
            data: super::to_row_major(m.as_ref()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat<f64>, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.data.len() != r.rows * r.cols {
            return Err(serde::de::Error::custom(format!(
                "matrix data has {} entries, expected {}x{}",
                r.data.len(),
                r.rows,
                r.cols
            )));
        }
        Ok(super::from_row_major(r.rows, r.cols, &r.data))
    }
}

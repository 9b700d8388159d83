//! Dense linear-algebra helpers shared by the rest of the crate.
//!
//! Every rank decision goes through [`rank_tolerance`]: singular values below
//! `max_dim * sigma_max * 1e-10` count as zero.

use nalgebra::{DMatrix, DVector};

pub const RANK_RTOL: f64 = 1e-10;

/// Numerical-rank cutoff for a matrix with the given shape and largest singular value.
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * RANK_RTOL
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

pub fn rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    if sv.is_empty() {
        return 0;
    }
    let tol = rank_tolerance(m.nrows(), m.ncols(), sv[0]);
    sv.iter().filter(|&&s| s > tol && s > 0.0).count()
}

/// Orthonormal basis of the null space of `m` (columns).
pub fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    if r == 0 {
        return DMatrix::identity(c, c);
    }
    // Pad to at least square so the SVD returns a full right factor.
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let sv = &svd.singular_values;
    let tol = rank_tolerance(r, c, sv[0]);
    let rk = sv.iter().filter(|&&s| s > tol && s > 0.0).count();
    let mut out = DMatrix::zeros(c, c - rk);
    for (j, row) in (rk..c).enumerate() {
        out.set_column(j, &vt.row(row).transpose());
    }
    out
}

/// Orthonormal basis of the column space of `m`.
pub fn col_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(r, 0);
    }
    let padded = if c < r {
        let mut p = DMatrix::zeros(r, r);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sv = &svd.singular_values;
    let tol = rank_tolerance(r, c, sv[0]);
    let rk = sv.iter().filter(|&&s| s > tol && s > 0.0).count();
    u.columns(0, rk).into_owned()
}

/// Moore-Penrose pseudo-inverse with the crate-wide cutoff.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let sv = &svd.singular_values;
    let tol = rank_tolerance(r, c, sv[0]);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut out = DMatrix::zeros(c, r);
    for k in 0..sv.len() {
        if sv[k] > tol && sv[k] > 0.0 {
            out += (vt.row(k).transpose() * u.column(k).transpose()) / sv[k];
        }
    }
    out
}

/// Minimum-norm least-squares solution of `m x = b`.
pub fn pinv_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DVector::zeros(c);
    }
    let svd = m.clone().svd(true, true);
    let sv = &svd.singular_values;
    let tol = rank_tolerance(r, c, sv[0]);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut x = DVector::zeros(c);
    for k in 0..sv.len() {
        if sv[k] > tol && sv[k] > 0.0 {
            let coef = u.column(k).dot(b) / sv[k];
            x += vt.row(k).transpose() * coef;
        }
    }
    x
}

/// Greedy rank-revealing selection of linearly independent rows
/// (modified Gram-Schmidt with reorthogonalisation). Returns the kept row indices
/// in their original order.
pub fn independent_rows(a: &DMatrix<f64>, rtol: f64) -> Vec<usize> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for i in 0..a.nrows() {
        let mut v = a.row(i).transpose();
        let norm0 = v.norm();
        if norm0 <= rtol * scale {
            continue;
        }
        for _ in 0..2 {
            for q in &basis {
                let d = q.dot(&v);
                v.axpy(-d, q, 1.0);
            }
        }
        let n = v.norm();
        if n > rtol * norm0.max(scale) {
            basis.push(v / n);
            kept.push(i);
        }
    }
    kept
}

pub fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

pub fn select_entries(b: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_fn(rows.len(), |i, _| b[rows[i]])
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn is_zero(m: &DMatrix<f64>, atol: f64) -> bool {
    m.iter().all(|v| v.abs() <= atol)
}

pub fn mat_pow(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), b.shape()).copy_from(*b);
        c += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.iter().map(|b| b.ncols()).max().unwrap_or(0);
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        if b.nrows() > 0 {
            out.view_mut((r, 0), b.shape()).copy_from(*b);
        }
        r += b.nrows();
    }
    out
}

/// Builds a matrix from row-major nested vectors. Empty input gives a 0x0 matrix.
pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

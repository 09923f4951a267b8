//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Smallest and largest eigenvalue of the symmetric part `(M + Mᵀ)/2`.
pub fn sym_eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Numerical rank with cutoff `RANK_TOL * max(1, σ_max)`.
pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let cutoff = RANK_TOL * smax.max(1.0);
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Orthonormal basis (as columns) of the span of the rows of `a`.
pub fn row_space_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = a.transpose().svd(true, false);
    let u = svd.u.expect("svd u requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = RANK_TOL * smax.max(1.0);
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > cutoff)
        .map(|(i, _)| i)
        .collect();
    let mut basis = DMatrix::zeros(n, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        basis.set_column(c, &u.column(k));
    }
    basis
}

/// `I − QQᵀ` where `Q` spans the rows of `a`.
pub fn nullspace_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let q = row_space_basis(a);
    DMatrix::identity(n, n) - &q * q.transpose()
}

/// Stack the given rows into a matrix with `ncols` columns.
pub fn stack_rows(rows: &[DVector<f64>], ncols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), ncols);
    for (i, r) in rows.iter().enumerate() {
        out.set_row(i, &r.transpose());
    }
    out
}

/// Block-diagonal assembly of square blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let m: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, m);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Relative difference `‖a − b‖ / max(1e-300, ‖b‖)`; falls back to the absolute
/// difference when `b` is tiny.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

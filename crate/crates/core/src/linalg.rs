//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending
/// order with matching eigenvector columns.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Largest absolute entry of `a - aᵀ`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Orthonormal basis (as columns) for the span of `vectors`, discarding
/// directions whose singular value is below `rel_tol` times the largest.
pub fn orthonormal_basis(d: usize, vectors: &[DVector<f64>], rel_tol: f64) -> DMatrix<f64> {
    if vectors.is_empty() {
        return DMatrix::zeros(d, 0);
    }
    let a = DMatrix::from_columns(vectors);
    let svd = a.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(d, 0);
    }
    let keep: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > rel_tol * smax).collect();
    let mut basis = DMatrix::zeros(d, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &u.column(i));
    }
    basis
}

/// `B Bᵀ` for a basis with orthonormal columns.
pub fn projector(basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis * basis.transpose()
}

/// Principal angles (radians, ascending) between the column spans of two
/// orthonormal bases. Returns `min(dim a, dim b)` angles, computed from sines
/// so that tiny angles keep full relative precision.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let (small, large) = if a.ncols() <= b.ncols() { (a, b) } else { (b, a) };
    if small.ncols() == 0 {
        return Vec::new();
    }
    let residual = small - large * (large.transpose() * small);
    let sv = residual.svd(false, false).singular_values;
    let mut angles: Vec<f64> = sv.iter().map(|s| s.clamp(0.0, 1.0).asin()).collect();
    angles.sort_by(f64::total_cmp);
    angles
}

//! Small dense helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector};

use crate::C64;

/// Largest entry modulus.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix (the input is symmetrized first).
/// Eigenvalues ascend.
pub fn eigh(m: &DMatrix<C64>) -> (DVector<f64>, DMatrix<C64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(m: &DMatrix<C64>) -> Vec<f64> {
    eigh(m).0.iter().copied().collect()
}

/// Eigenvalue floor applied before logarithms and pseudo-inverses.
pub const CLIP: f64 = 1e-12;

/// `−Σ λ ln λ` over eigenvalues above [`CLIP`].
pub fn entropy_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().filter(|&l| l > CLIP).map(|l| -l * l.ln()).sum()
}

/// `f(H)` for Hermitian `H` through its spectrum.
pub fn hermitian_fn(m: &DMatrix<C64>, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
    let (vals, vecs) = eigh(m);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for j in 0..n {
        let s = C64::new(f(vals[j]), 0.0);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    scaled * vecs.adjoint()
}

/// Trace norm `‖A‖_1` of a Hermitian matrix.
pub fn trace_norm(m: &DMatrix<C64>) -> f64 {
    eigvalsh(m).iter().map(|x| x.abs()).sum()
}

/// Absolute floor on Gram eigenvalues in [`orthonormal_columns`].
pub const GRAM_FLOOR: f64 = 1e-20;

/// Orthonormal basis of the column span of `m`, dropping directions whose
/// Gram eigenvalue falls below `rel_tol` times the largest or below
/// [`GRAM_FLOOR`] (so a numerically zero matrix has an empty span).
pub fn orthonormal_columns(m: &DMatrix<C64>, rel_tol: f64) -> DMatrix<C64> {
    if m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let g = m.adjoint() * m;
    let (vals, vecs) = eigh(&g);
    let top = vals.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..vals.len()).rev().filter(|&i| vals[i] > (rel_tol * top).max(GRAM_FLOOR)).collect();
    let mut out = DMatrix::zeros(m.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let col = m * vecs.column(i) / C64::new(vals[i].sqrt(), 0.0);
        out.set_column(c, &col);
    }
    out
}

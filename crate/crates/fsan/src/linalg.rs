//! Thin wrappers around the dense Hermitian kernels used across the crate.

use faer::{c64, Mat, Side};

use crate::error::{Error, Result};

/// Eigendecomposition of a (numerically) Hermitian matrix. The input is
/// symmetrized first; eigenvalues are returned ascending with matching
/// eigenvector columns.
pub(crate) fn eigh(m: &Mat<c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let n = m.nrows();
    let h = hermitian_part(m);
    let ed = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NumericalBreakdown(format!("eigendecomposition failed: {e:?}")))?;
    let u = ed.U();
    let s = ed.S();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].re.partial_cmp(&s[b].re).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| s[i].re).collect();
    let mut vecs = Mat::<c64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vecs[(r, dst)] = u[(r, src)];
        }
    }
    Ok((vals, vecs))
}

/// Eigenvalues only, ascending.
pub(crate) fn eigvalsh(m: &Mat<c64>) -> Result<Vec<f64>> {
    Ok(eigh(m)?.0)
}

pub(crate) fn hermitian_part(m: &Mat<c64>) -> Mat<c64> {
    let n = m.nrows();
    Mat::from_fn(n, n, |r, c| (m[(r, c)] + m[(c, r)].conj()) * 0.5)
}


//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::numeric::{RealVector, RngStream};

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// sign of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal(dim: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.gaussian());
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Eigenvalues in `[lo, hi]`: the first two are pinned to the endpoints
/// (so the spectrum bounds are attained), the rest are uniform.
pub fn pinned_spectrum(dim: usize, lo: f64, hi: f64, rng: &mut RngStream) -> Vec<f64> {
    (0..dim)
        .map(|i| match i {
            0 => lo,
            1 => hi,
            _ => rng.uniform(lo, hi),
        })
        .collect()
}

/// `Q diag(eigs) Q^T` for a random orthogonal `Q`.
pub fn symmetric_with_spectrum(eigs: &[f64], rng: &mut RngStream) -> DMatrix<f64> {
    let dim = eigs.len();
    let q = random_orthogonal(dim, rng);
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(eigs));
    let m = &q * d * q.transpose();
    // exact symmetry
    (&m + m.transpose()) * 0.5
}

/// Random SPD matrix with spectrum in `[mu, l]` (endpoints attained).
pub fn random_spd(dim: usize, mu: f64, l: f64, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    if !(mu > 0.0 && l >= mu && l.is_finite()) {
        return Err(invalid(format!("spectrum bounds need 0 < mu <= L, got mu={mu}, L={l}")));
    }
    let eigs = pinned_spectrum(dim, mu, l, rng);
    Ok(symmetric_with_spectrum(&eigs, rng))
}

pub fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut RngStream) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.gaussian())
}

pub fn mat_vec(m: &DMatrix<f64>, v: &RealVector) -> Result<RealVector> {
    if m.ncols() != v.dim() {
        return Err(crate::error::Error::DimensionMismatch {
            left: m.ncols(),
            right: v.dim(),
        });
    }
    RealVector::from_dvector(&(m * v.to_dvector()))
}

pub fn mat_t_vec(m: &DMatrix<f64>, v: &RealVector) -> Result<RealVector> {
    if m.nrows() != v.dim() {
        return Err(crate::error::Error::DimensionMismatch {
            left: m.nrows(),
            right: v.dim(),
        });
    }
    RealVector::from_dvector(&(m.transpose() * v.to_dvector()))
}

/// Spectral norm of a general matrix (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut e: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|a, b| a.total_cmp(b));
    e
}

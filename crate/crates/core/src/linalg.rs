//! Thin adapters between `ndarray` storage and the `nalgebra` decompositions,
//! plus a few dense helpers shared across solvers.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::{Error, Result};

/// Iteration cap handed to the SVD backend.
pub const SVD_MAX_ITERS: usize = 10_000;

pub fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn frobenius_sq(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn l1_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// `trace(A Bᵀ)` for equally shaped matrices.
pub fn trace_abt(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn all_finite(a: &Array2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
///
/// Singular values are sorted in decreasing order and each left singular
/// vector is oriented so that its first entry of non-negligible magnitude is
/// non-negative (the paired right vector is flipped with it).
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

impl Svd {
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        let (m, n) = a.dim();
        let r = m.min(n);
        if r == 0 {
            return Ok(Svd {
                u: Array2::zeros((m, 0)),
                s: Array1::zeros(0),
                vt: Array2::zeros((0, n)),
            });
        }
        let svd = nalgebra::linalg::SVD::try_new(to_dmatrix(a.view()), true, true, f64::EPSILON, SVD_MAX_ITERS)
            .ok_or_else(|| {
                Error::numerical(SVD_MAX_ITERS, "SVD did not converge within the iteration cap")
            })?;
        let (u, vt) = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => (u, vt),
            _ => return Err(Error::numerical(0, "SVD did not return singular vectors")),
        };
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

        let mut u_out = Array2::zeros((m, r));
        let mut vt_out = Array2::zeros((r, n));
        let mut s_out = Array1::zeros(r);
        for (dst, &src) in order.iter().enumerate() {
            s_out[dst] = svd.singular_values[src];
            let col = u.column(src);
            let scale = col.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let sign = col
                .iter()
                .find(|v| v.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE))
                .map_or(1.0, |v| if *v < 0.0 { -1.0 } else { 1.0 });
            for i in 0..m {
                u_out[[i, dst]] = sign * u[(i, src)];
            }
            for j in 0..n {
                vt_out[[dst, j]] = sign * vt[(src, j)];
            }
        }
        Ok(Svd {
            u: u_out,
            s: s_out,
            vt: vt_out,
        })
    }

    /// `U diag(s') Vᵀ` for a replacement spectrum `s'`.
    pub fn reconstruct_with(&self, s: &Array1<f64>) -> Array2<f64> {
        let mut us = self.u.clone();
        for (mut col, &sv) in us.columns_mut().into_iter().zip(s.iter()) {
            col *= sv;
        }
        us.dot(&self.vt)
    }
}

pub fn nuclear_norm(a: &Array2<f64>) -> Result<f64> {
    Ok(Svd::new(a)?.s.sum())
}

/// Cholesky factor of a symmetric positive definite matrix, reusable across
/// right-hand sides.
pub struct Cholesky {
    inner: nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>,
}

impl Cholesky {
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        let inner = nalgebra::linalg::Cholesky::new(to_dmatrix(a.view())).ok_or_else(|| {
            Error::numerical(0, "matrix is not positive definite; Cholesky factorisation failed")
        })?;
        Ok(Cholesky { inner })
    }

    pub fn solve(&self, b: &Array2<f64>) -> Array2<f64> {
        from_dmatrix(&self.inner.solve(&to_dmatrix(b.view())))
    }
}

/// Solve `A x = b` for a general square system; `None` if singular.
pub fn solve_dense(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let lu = to_dmatrix(a.view()).lu();
    let rhs = nalgebra::DVector::from_iterator(b.len(), b.iter().copied());
    lu.solve(&rhs).map(|x| Array1::from_iter(x.iter().copied()))
}

pub fn identity_plus(a: &Array2<f64>, shift: f64) -> Array2<f64> {
    let mut out = a.clone();
    for i in 0..out.nrows().min(out.ncols()) {
        out[[i, i]] += shift;
    }
    out
}

//! Block-structured matrix primitives shared by every solver.

use std::ops::Range;

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::linalg::Svd;
use crate::{Error, Result};

/// Partition metadata: per-class sample counts `n`, per-class dictionary
/// sizes `k` and the size `k0` of the shared dictionary.
///
/// Column blocks of data/coefficient matrices follow `n`; row blocks of
/// coefficient matrices (and column blocks of dictionaries) follow `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    n: Vec<usize>,
    k: Vec<usize>,
    k0: usize,
}

impl BlockLayout {
    pub fn new(n: Vec<usize>, k: Vec<usize>, k0: usize) -> Result<Self> {
        if n.is_empty() {
            return Err(Error::InvalidArgument("layout needs at least one class".into()));
        }
        if n.len() != k.len() {
            return Err(Error::InvalidArgument(format!(
                "layout has {} sample blocks but {} dictionary blocks",
                n.len(),
                k.len()
            )));
        }
        if let Some(c) = n.iter().position(|&v| v == 0) {
            return Err(Error::InvalidArgument(format!("class {} has no samples", c + 1)));
        }
        if let Some(c) = k.iter().position(|&v| v == 0) {
            return Err(Error::InvalidArgument(format!("class {} has an empty dictionary", c + 1)));
        }
        Ok(BlockLayout { n, k, k0 })
    }

    /// Layout with the same dictionary size `k` for every class.
    pub fn uniform(n: Vec<usize>, k: usize, k0: usize) -> Result<Self> {
        let c = n.len();
        Self::new(n, vec![k; c], k0)
    }

    pub fn num_classes(&self) -> usize {
        self.n.len()
    }

    pub fn samples(&self) -> &[usize] {
        &self.n
    }

    pub fn atoms(&self) -> &[usize] {
        &self.k
    }

    pub fn shared_atoms(&self) -> usize {
        self.k0
    }

    /// Total number of samples `N`.
    pub fn total_samples(&self) -> usize {
        self.n.iter().sum()
    }

    /// Total number of class-specific atoms `K`.
    pub fn total_atoms(&self) -> usize {
        self.k.iter().sum()
    }

    pub fn sample_range(&self, c: usize) -> Range<usize> {
        let start: usize = self.n[..c].iter().sum();
        start..start + self.n[c]
    }

    pub fn atom_range(&self, c: usize) -> Range<usize> {
        let start: usize = self.k[..c].iter().sum();
        start..start + self.k[c]
    }

    /// Same layout with a different shared dictionary size.
    pub fn with_shared(&self, k0: usize) -> Self {
        BlockLayout {
            n: self.n.clone(),
            k: self.k.clone(),
            k0,
        }
    }

    /// Class index of every column, in order.
    pub fn class_of_samples(&self) -> Vec<usize> {
        self.n
            .iter()
            .enumerate()
            .flat_map(|(c, &nc)| std::iter::repeat_n(c, nc))
            .collect()
    }
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    out.push(0);
    for &s in sizes {
        acc += s;
        out.push(acc);
    }
    out
}

/// Doubles the diagonal blocks of `a`: returns `A + blockdiag(A_11, ..., A_CC)`.
///
/// `rows` and `cols` are the block sizes of the row and column partitions;
/// both must have the same number of blocks and tile `a` exactly.
pub fn apply_m(a: &Array2<f64>, rows: &[usize], cols: &[usize]) -> Result<Array2<f64>> {
    if rows.len() != cols.len() {
        return Err(Error::Partition(format!(
            "{} row blocks vs {} column blocks",
            rows.len(),
            cols.len()
        )));
    }
    let (r, c): (usize, usize) = (rows.iter().sum(), cols.iter().sum());
    if a.dim() != (r, c) {
        return Err(Error::Partition(format!(
            "matrix is {}x{} but partition covers {}x{}",
            a.nrows(),
            a.ncols(),
            r,
            c
        )));
    }
    let ro = offsets(rows);
    let co = offsets(cols);
    let mut out = a.clone();
    for b in 0..rows.len() {
        let block = a.slice(s![ro[b]..ro[b + 1], co[b]..co[b + 1]]);
        let mut dst = out.slice_mut(s![ro[b]..ro[b + 1], co[b]..co[b + 1]]);
        dst += &block;
    }
    Ok(out)
}

pub fn column_mean(a: &Array2<f64>) -> Array1<f64> {
    if a.ncols() == 0 {
        return Array1::zeros(a.nrows());
    }
    a.sum_axis(Axis(1)) / a.ncols() as f64
}

/// Matrix with `n` identical columns, each the mean of the columns of `a`.
/// `None` uses the column count of `a`.
pub fn mean_matrix(a: &Array2<f64>, n: Option<usize>) -> Result<Array2<f64>> {
    let n = n.unwrap_or(a.ncols());
    if n == 0 {
        return Err(Error::InvalidArgument("mean matrix needs at least one column".into()));
    }
    if a.ncols() == 0 {
        return Err(Error::InvalidArgument("mean of a matrix without columns".into()));
    }
    let m = column_mean(a);
    Ok(broadcast_column(&m, n))
}

pub(crate) fn broadcast_column(m: &Array1<f64>, n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((m.len(), n));
    for mut col in out.columns_mut() {
        col.assign(m);
    }
    out
}

/// Elementwise `sgn(x) (|x| - alpha)_+`.
pub fn soft_threshold(a: &Array2<f64>, alpha: f64) -> Result<Array2<f64>> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be >= 0, got {alpha}")));
    }
    Ok(a.mapv(|x| shrink(x, alpha)))
}

#[inline]
pub(crate) fn shrink(x: f64, alpha: f64) -> f64 {
    if x > alpha {
        x - alpha
    } else if x < -alpha {
        x + alpha
    } else {
        0.0
    }
}

/// Singular value thresholding: the proximal operator of `tau ||.||_*`.
pub fn svt(a: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be >= 0, got {tau}")));
    }
    if a.is_empty() {
        return Ok(a.clone());
    }
    let svd = Svd::new(a)?;
    let shrunk = svd.s.mapv(|v| (v - tau).max(0.0));
    Ok(svd.reconstruct_with(&shrunk))
}

pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITERS: usize = 200;
pub const SPECTRAL_SAFETY: f64 = 1.01;

/// Upper estimate of the largest eigenvalue of a symmetric PSD matrix.
///
/// Power iteration on the Rayleigh quotient, inflated by [`SPECTRAL_SAFETY`].
pub fn spectral_bound(a: &Array2<f64>) -> Result<f64> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::InvalidArgument(format!("spectral bound of a non-square {r}x{c} matrix")));
    }
    if r == 0 {
        return Ok(0.0);
    }
    // deterministic start with no special alignment to coordinate axes
    let mut v = Array1::from_shape_fn(r, |i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).sin());
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut rayleigh = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = a.dot(&v);
        let next = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            rayleigh = next.max(0.0);
            break;
        }
        v = w / wn;
        let converged = (next - rayleigh).abs() <= POWER_TOL * next.abs().max(1e-300);
        rayleigh = next;
        if converged {
            break;
        }
    }
    Ok(rayleigh.max(0.0) * SPECTRAL_SAFETY)
}

/// Scales every column with Euclidean norm above one back onto the unit sphere.
pub fn normalize_atoms(d: &Array2<f64>) -> Array2<f64> {
    let mut out = d.clone();
    for mut col in out.columns_mut() {
        let norm = col.dot(&col).sqrt();
        if norm > 1.0 {
            col /= norm;
        }
    }
    out
}

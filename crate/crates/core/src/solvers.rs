//! Iterative engines reused by every method: FISTA, the ODL column update,
//! and the two ADMM dictionary loops.

use std::time::Instant;

use log::warn;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blockmat::{shrink, spectral_bound, svt};
use crate::linalg::{all_finite, frobenius, frobenius_sq, identity_plus, l1_norm, to_dmatrix, trace_abt, Cholesky};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for FistaOptions {
    fn default() -> Self {
        FistaOptions {
            max_iters: 100,
            tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FistaOutput {
    pub x: Array2<f64>,
    pub iterations: usize,
}

/// Accelerated proximal gradient for `min h(X) + lambda ||X||_1`.
///
/// `grad` evaluates the gradient of the smooth part; `lipschitz` must upper
/// bound its Lipschitz constant. Stops when the relative change of the
/// proximal iterate drops below `opts.tol` or after `opts.max_iters` steps.
pub fn fista<G>(mut grad: G, lipschitz: f64, lambda: f64, x_init: &Array2<f64>, opts: FistaOptions) -> Result<FistaOutput>
where
    G: FnMut(&Array2<f64>) -> Array2<f64>,
{
    if !(lipschitz > 0.0) || !lipschitz.is_finite() {
        return Err(Error::InvalidArgument(format!("Lipschitz bound must be > 0, got {lipschitz}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("l1 weight must be >= 0, got {lambda}")));
    }
    let step = 1.0 / lipschitz;
    let thresh = lambda * step;
    let mut z_prev = x_init.clone();
    let mut w = x_init.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    for k in 1..=opts.max_iters {
        iterations = k;
        let g = grad(&w);
        if !all_finite(&g) {
            return Err(Error::numerical(k, "gradient has non-finite entries"));
        }
        let mut z = w;
        z.zip_mut_with(&g, |zi, &gi| *zi = shrink(*zi - step * gi, thresh));

        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        let diff = &z - &z_prev;
        let change = frobenius(&diff) / frobenius(&z_prev).max(1.0);
        w = &z + &(beta * &diff);
        t = t_next;
        z_prev = z;
        if change < opts.tol {
            break;
        }
    }
    Ok(FistaOutput { x: z_prev, iterations })
}

/// Lasso `min 1/2 ||Y - D X||^2 + lambda ||X||_1` given `gram = DᵀD` and `dty = DᵀY`.
pub fn lasso(gram: &Array2<f64>, dty: &Array2<f64>, lambda: f64, x_init: &Array2<f64>, opts: FistaOptions) -> Result<FistaOutput> {
    let lip = spectral_bound(gram)?.max(1e-12);
    fista(|x| gram.dot(x) - dty, lip, lambda, x_init, opts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdlOptions {
    pub sweeps: usize,
    pub tol: f64,
}

impl Default for OdlOptions {
    fn default() -> Self {
        OdlOptions { sweeps: 50, tol: 1e-6 }
    }
}

/// Columns with a diagonal weight below this are left untouched.
pub const FROZEN_DIAG: f64 = 1e-10;

/// `-2 tr(E Dᵀ) + tr(F Dᵀ D)`.
pub fn quadratic_dict_objective(e: &Array2<f64>, f: &Array2<f64>, d: &Array2<f64>) -> f64 {
    let dtd = d.t().dot(d);
    -2.0 * trace_abt(e, d) + trace_abt(f, &dtd)
}

fn check_ef(e: &Array2<f64>, f: &Array2<f64>, d: &Array2<f64>) -> Result<()> {
    let k = d.ncols();
    if e.dim() != d.dim() || f.dim() != (k, k) {
        return Err(Error::Dimension(format!(
            "E {:?}, F {:?} incompatible with D {:?}",
            e.dim(),
            f.dim(),
            d.dim()
        )));
    }
    Ok(())
}

/// Block-coordinate descent over columns for
/// `min -2 tr(E Dᵀ) + tr(F Dᵀ D)` subject to `||d_i|| <= 1`.
pub fn odl_dict_update(e: &Array2<f64>, f: &Array2<f64>, d_init: &Array2<f64>, opts: OdlOptions) -> Result<Array2<f64>> {
    check_ef(e, f, d_init)?;
    if let Some(i) = (0..f.nrows()).find(|&i| f[[i, i]] < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "F is not PSD: diagonal entry {i} is {}",
            f[[i, i]]
        )));
    }
    // atoms are kept as contiguous rows of Dᵀ
    let mut dt = d_init.t().as_standard_layout().into_owned();
    let et = e.t().as_standard_layout().into_owned();
    let k = dt.nrows();
    let mut u = Array1::zeros(dt.ncols());
    for _ in 0..opts.sweeps {
        let mut change_sq: f64 = 0.0;
        for i in 0..k {
            let fii = f[[i, i]];
            if fii < FROZEN_DIAG {
                continue;
            }
            // u = d_i + (e_i - D f_i) / F_ii
            u.assign(&et.row(i));
            for j in 0..k {
                let fji = f[[j, i]];
                if fji != 0.0 {
                    u.scaled_add(-fji, &dt.row(j));
                }
            }
            u /= fii;
            u += &dt.row(i);
            let norm = u.dot(&u).sqrt();
            if norm > 1.0 {
                u /= norm;
            }
            let mut di = dt.row_mut(i);
            change_sq += u.iter().zip(di.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            di.assign(&u);
        }
        let rel = change_sq.sqrt() / frobenius(&dt).max(1.0);
        if rel < opts.tol {
            break;
        }
    }
    Ok(dt.t().as_standard_layout().into_owned())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmOptions {
    pub rho: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub odl: OdlOptions,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            rho: 1.0,
            max_iters: 100,
            tol: 1e-6,
            odl: OdlOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutput {
    pub dict: Array2<f64>,
    pub iterations: usize,
    /// `||D - Z||_F` at the last iterate.
    pub primal_residual: f64,
    pub converged: bool,
}

const DIVERGENCE_FACTOR: f64 = 1e6;

fn check_admm(eta: f64, opts: &AdmmOptions) -> Result<()> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be >= 0, got {eta}")));
    }
    if !(opts.rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be > 0, got {}", opts.rho)));
    }
    Ok(())
}

/// Shared ADMM skeleton: `D`-step by ODL on the shifted quadratic, a
/// caller-supplied `Z`-step, then the scaled dual update.
fn admm_loop<Z, T>(
    e: &Array2<f64>,
    f: &Array2<f64>,
    d_init: &Array2<f64>,
    opts: AdmmOptions,
    mut z_step: Z,
    mut trace: T,
) -> Result<(Array2<f64>, Array2<f64>, usize, f64, bool)>
where
    Z: FnMut(&Array2<f64>) -> Result<Array2<f64>>,
    T: FnMut(usize, &Array2<f64>, &Array2<f64>),
{
    check_ef(e, f, d_init)?;
    let rho = opts.rho;
    let f_bar = identity_plus(f, rho / 2.0);
    let mut d = d_init.clone();
    let mut z = d_init.clone();
    let mut u = Array2::<f64>::zeros(d_init.dim());
    let baseline = frobenius(d_init).max(1.0);
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iters {
        iterations = it;
        let e_bar = e + &((rho / 2.0) * (&z - &u));
        d = odl_dict_update(&e_bar, &f_bar, &d, opts.odl)?;
        let z_prev = std::mem::replace(&mut z, z_step(&(&d + &u))?);
        u = u + &d - &z;
        let un = frobenius(&u);
        if !un.is_finite() || un > DIVERGENCE_FACTOR * baseline {
            return Err(Error::numerical(
                it,
                format!("ADMM dual variable diverged (||U|| = {un:e}); try a different rho"),
            ));
        }
        trace(it, &d, &z);
        residual = frobenius(&(&d - &z));
        let dual = rho * frobenius(&(&z - &z_prev));
        if residual.max(dual) / frobenius(&d).max(1.0) < opts.tol {
            converged = true;
            break;
        }
    }
    Ok((d, z, iterations, residual, converged))
}

/// ADMM for `min tr(F Dᵀ D) - 2 tr(E Dᵀ) + eta ||D||_*` with unit-norm atoms.
///
/// Returns the low-rank iterate `Z`.
pub fn admm_lowrank_dict(
    e: &Array2<f64>,
    f: &Array2<f64>,
    eta: f64,
    d_init: &Array2<f64>,
    opts: AdmmOptions,
) -> Result<AdmmOutput> {
    check_admm(eta, &opts)?;
    let tau = eta / opts.rho;
    let (_, z, iterations, primal_residual, converged) =
        admm_loop(e, f, d_init, opts, |v| svt(v, tau), |_, _, _| {})?;
    Ok(AdmmOutput {
        dict: z,
        iterations,
        primal_residual,
        converged,
    })
}

/// `(2 eta AᵀA + rho I)`, the only matrix the incoherent ADMM factorises.
fn incoherent_system(a: &Array2<f64>, eta: f64, rho: f64, dim: usize) -> Result<Array2<f64>> {
    if a.ncols() != dim {
        return Err(Error::Dimension(format!(
            "cross-class matrix has {} columns, expected {dim}",
            a.ncols()
        )));
    }
    let ata = a.t().dot(a);
    Ok(identity_plus(&(2.0 * eta * ata), rho))
}

/// ADMM for `min tr(F Dᵀ D) - 2 tr(E Dᵀ) + eta ||A D||_F^2` with unit-norm atoms.
///
/// `(2 eta AᵀA + rho I)` is factorised once; each iteration costs one ODL
/// solve and one pair of triangular solves. Returns the feasible `D` iterate.
pub fn admm_incoherent_dict(
    e: &Array2<f64>,
    f: &Array2<f64>,
    a: &Array2<f64>,
    eta: f64,
    d_init: &Array2<f64>,
    opts: AdmmOptions,
) -> Result<AdmmOutput> {
    admm_incoherent_dict_traced(e, f, a, eta, d_init, opts, |_, _| {})
}

/// As [`admm_incoherent_dict`], calling `trace(iteration, D)` after every iteration.
pub fn admm_incoherent_dict_traced<T>(
    e: &Array2<f64>,
    f: &Array2<f64>,
    a: &Array2<f64>,
    eta: f64,
    d_init: &Array2<f64>,
    opts: AdmmOptions,
    mut trace: T,
) -> Result<AdmmOutput>
where
    T: FnMut(usize, &Array2<f64>),
{
    check_admm(eta, &opts)?;
    let rho = opts.rho;
    let chol = Cholesky::new(&incoherent_system(a, eta, rho, d_init.nrows())?)?;
    let (d, _, iterations, primal_residual, converged) = admm_loop(
        e,
        f,
        d_init,
        opts,
        |v| Ok(chol.solve(&(rho * v))),
        |it, d, _| trace(it, d),
    )?;
    Ok(AdmmOutput {
        dict: d,
        iterations,
        primal_residual,
        converged,
    })
}

/// `tr(F Dᵀ D) - 2 tr(E Dᵀ) + eta ||A D||_F^2`.
pub fn incoherent_objective(e: &Array2<f64>, f: &Array2<f64>, a: &Array2<f64>, eta: f64, d: &Array2<f64>) -> f64 {
    quadratic_dict_objective(e, f, d) + eta * frobenius_sq(&a.dot(d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdlsiOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for OdlsiOptions {
    fn default() -> Self {
        OdlsiOptions {
            max_iters: 50,
            tol: 1e-6,
        }
    }
}

/// Column-by-column incoherent dictionary update with one `d x d` inversion
/// per column, written against the general `(E, F)` form.
///
/// Column `j` solves `(F_jj I + eta AᵀA) u = e_j - Σ_{i≠j} d_i F_ij`, then
/// projects `u` onto the unit ball.
pub fn odlsi_dict_update_ef(
    e: &Array2<f64>,
    f: &Array2<f64>,
    a: &Array2<f64>,
    eta: f64,
    d_init: &Array2<f64>,
    opts: OdlsiOptions,
) -> Result<Array2<f64>> {
    check_ef(e, f, d_init)?;
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be >= 0, got {eta}")));
    }
    let dim = d_init.nrows();
    if a.ncols() != dim {
        return Err(Error::Dimension(format!(
            "cross-class matrix has {} columns, expected {dim}",
            a.ncols()
        )));
    }
    let eta_ata = eta * a.t().dot(a);
    let mut d = d_init.clone();
    for _ in 0..opts.max_iters {
        let mut change_sq: f64 = 0.0;
        for j in 0..d.ncols() {
            let fjj = f[[j, j]];
            if fjj < FROZEN_DIAG {
                continue;
            }
            let old = d.column(j).to_owned();
            let rhs = &e.column(j) - &d.dot(&f.column(j)) + &(fjj * &old);
            let system = identity_plus(&eta_ata, fjj);
            let Some(inv) = to_dmatrix(system.view()).try_inverse() else {
                warn!("singular column system for atom {j}; column left unchanged");
                continue;
            };
            let mut u = Array1::from_shape_fn(dim, |r| (0..dim).map(|c| inv[(r, c)] * rhs[c]).sum::<f64>());
            let norm = u.dot(&u).sqrt();
            if norm > 1.0 {
                u /= norm;
            }
            change_sq += (&u - &old).mapv(|v| v * v).sum();
            d.column_mut(j).assign(&u);
        }
        if change_sq.sqrt() / frobenius(&d).max(1.0) < opts.tol {
            break;
        }
    }
    Ok(d)
}

/// Original per-column incoherent update for `min ||Y_c - D_c X^c||^2 + eta ||A D_c||^2`.
pub fn odlsi_dict_update(
    yc: &Array2<f64>,
    xc: &Array2<f64>,
    a: &Array2<f64>,
    eta: f64,
    d_init: &Array2<f64>,
    opts: OdlsiOptions,
) -> Result<Array2<f64>> {
    if yc.ncols() != xc.ncols() || xc.nrows() != d_init.ncols() || yc.nrows() != d_init.nrows() {
        return Err(Error::Dimension(format!(
            "Y {:?}, X {:?}, D {:?} are inconsistent",
            yc.dim(),
            xc.dim(),
            d_init.dim()
        )));
    }
    let e = yc.dot(&xc.t());
    let f = xc.dot(&xc.t());
    odlsi_dict_update_ef(&e, &f, a, eta, d_init, opts)
}

/// Unit-normalised random columns of `y` (zero columns stay zero).
pub fn sample_atoms(y: ArrayView2<f64>, k: usize, seed: u64) -> Result<Array2<f64>> {
    if y.ncols() < k {
        return Err(Error::Config(format!(
            "cannot draw {k} atoms from {} samples",
            y.ncols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, y.ncols(), k).into_vec();
    idx.sort_unstable();
    let mut d = y.select(Axis(1), &idx);
    for mut col in d.columns_mut() {
        let n = col.dot(&col).sqrt();
        if n > 0.0 {
            col /= n;
        }
    }
    Ok(d)
}

/// Objective of plain dictionary learning `1/2 ||Y - D X||^2 + lambda ||X||_1`.
pub fn odl_objective(y: ArrayView2<f64>, d: &Array2<f64>, x: &Array2<f64>, lambda: f64) -> f64 {
    0.5 * frobenius_sq(&(&y - &d.dot(x))) + lambda * l1_norm(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdlLearnOptions {
    pub iters: usize,
    pub fista: FistaOptions,
    pub odl: OdlOptions,
}

/// Result of plain dictionary learning with its per-iteration objective.
#[derive(Debug, Clone)]
pub struct OdlLearned {
    pub dict: Array2<f64>,
    pub codes: Array2<f64>,
    pub history: Vec<(usize, f64, f64)>,
}

/// Plain dictionary learning by alternating lasso coding and ODL updates,
/// starting from `d_init`.
pub fn odl_learn_from(
    y: ArrayView2<f64>,
    d_init: Array2<f64>,
    lambda: f64,
    opts: OdlLearnOptions,
) -> Result<OdlLearned> {
    let start = Instant::now();
    let mut d = d_init;
    let mut x = Array2::zeros((d.ncols(), y.ncols()));
    let mut history = vec![(0, odl_objective(y, &d, &x, lambda), 0.0)];
    for it in 1..=opts.iters {
        let gram = d.t().dot(&d);
        let dty = d.t().dot(&y);
        x = lasso(&gram, &dty, lambda, &x, opts.fista)?.x;
        let e = y.dot(&x.t());
        let f = x.dot(&x.t());
        d = odl_dict_update(&e, &f, &d, opts.odl)?;
        history.push((it, odl_objective(y, &d, &x, lambda), start.elapsed().as_secs_f64()));
    }
    Ok(OdlLearned {
        dict: d,
        codes: x,
        history,
    })
}

/// Plain dictionary learning from `k` seeded random samples of `y`.
pub fn odl_learn(y: ArrayView2<f64>, k: usize, lambda: f64, seed: u64, opts: OdlLearnOptions) -> Result<OdlLearned> {
    let d_init = sample_atoms(y, k, seed)?;
    odl_learn_from(y, d_init, lambda, opts)
}

//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numerical routines.

#![allow(dead_code)]

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lrsdl::{BlockLayout, LabeledDataset};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Gaussian matrix with unit-norm columns.
pub fn unit_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut a = randn(rng, rows, cols);
    for mut col in a.columns_mut() {
        let n = col.dot(&col).sqrt();
        col /= n;
    }
    a
}

/// Random dataset with `counts[c]` samples of class `c + 1`, grouped by class.
pub fn dataset(rng: &mut ChaCha8Rng, dim: usize, counts: &[usize]) -> LabeledDataset {
    let total: usize = counts.iter().sum();
    let y = randn(rng, dim, total);
    let labels = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c + 1, n))
        .collect();
    LabeledDataset::new(y, labels).unwrap()
}

pub fn frob_sq(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn frob(a: &Array2<f64>) -> f64 {
    frob_sq(a).sqrt()
}

pub fn l1(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

pub fn rel_err(a: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    frob(&(a - reference)) / frob(reference).max(1e-300)
}

pub fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn mean_of_columns(a: ArrayView2<f64>) -> Array1<f64> {
    let mut m = Array1::zeros(a.nrows());
    for col in a.columns() {
        m += &col;
    }
    m / a.ncols() as f64
}

/// `Σ_c ‖Y_c − Σ_j D_j X_c^j‖² + ‖Y_c − D_c X_c^c‖² + Σ_{j≠c} ‖D_j X_c^j‖²`,
/// materialising every block product separately.
pub fn naive_fidelity(y: &Array2<f64>, d: &Array2<f64>, x: &Array2<f64>, layout: &BlockLayout) -> f64 {
    let mut total = 0.0;
    for c in 0..layout.num_classes() {
        let sc = layout.sample_range(c);
        let yc = y.slice(s![.., sc.clone()]).to_owned();
        let mut recon = Array2::<f64>::zeros(yc.dim());
        for j in 0..layout.num_classes() {
            let aj = layout.atom_range(j);
            let part = d.slice(s![.., aj.clone()]).dot(&x.slice(s![aj, sc.clone()]));
            recon += &part;
            if j == c {
                total += frob_sq(&(&yc - &part));
            } else {
                total += frob_sq(&part);
            }
        }
        total += frob_sq(&(&yc - &recon));
    }
    total
}

/// Within-class scatter minus between-class scatter plus `‖X‖²`, column by column.
pub fn naive_fisher(x: &Array2<f64>, layout: &BlockLayout) -> f64 {
    let m = mean_of_columns(x.view());
    let mut total = frob_sq(x);
    for c in 0..layout.num_classes() {
        let xc = x.slice(s![.., layout.sample_range(c)]);
        let mc = mean_of_columns(xc);
        for col in xc.columns() {
            let diff = &col - &mc;
            total += diff.dot(&diff);
        }
        let between = &mc - &m;
        total -= xc.ncols() as f64 * between.dot(&between);
    }
    total
}

/// `½ f + (λ2/2) g`.
pub fn naive_fddl_smooth(y: &Array2<f64>, d: &Array2<f64>, x: &Array2<f64>, layout: &BlockLayout, lambda2: f64) -> f64 {
    0.5 * naive_fidelity(y, d, x, layout) + 0.5 * lambda2 * naive_fisher(x, layout)
}

/// `½ f(Y − D0X0) + (λ2/2)(g(X) + ‖X0 − M0‖²)`.
pub fn naive_lrsdl_smooth(
    y: &Array2<f64>,
    d: &Array2<f64>,
    d0: &Array2<f64>,
    x: &Array2<f64>,
    x0: &Array2<f64>,
    layout: &BlockLayout,
    lambda2: f64,
) -> f64 {
    let y_bar = y - &d0.dot(x0);
    let mut shared = 0.0;
    if x0.nrows() > 0 {
        let m0 = mean_of_columns(x0.view());
        for col in x0.columns() {
            let diff = &col - &m0;
            shared += diff.dot(&diff);
        }
    }
    0.5 * naive_fidelity(&y_bar, d, x, layout) + 0.5 * lambda2 * (naive_fisher(x, layout) + shared)
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_diff<F: Fn(&Array2<f64>) -> f64>(f: F, x: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.dim());
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = probe[[r, c]];
        probe[[r, c]] = orig + h;
        let up = f(&probe);
        probe[[r, c]] = orig - h;
        let down = f(&probe);
        probe[[r, c]] = orig;
        g[[r, c]] = (up - down) / (2.0 * h);
    }
    g
}

/// Diagonal 0/1 matrix selecting block `j` of a partition.
pub fn mask(sizes: &[usize], j: usize) -> Array2<f64> {
    let n: usize = sizes.iter().sum();
    let start: usize = sizes[..j].iter().sum();
    let mut w = Array2::zeros((n, n));
    for i in start..start + sizes[j] {
        w[[i, i]] = 1.0;
    }
    w
}

/// `A + Σ_j W_j^rows A W_j^cols`.
pub fn mask_form(a: &Array2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    let mut out = a.clone();
    for j in 0..rows.len() {
        out += &mask(rows, j).dot(a).dot(&mask(cols, j));
    }
    out
}

/// One-sided Jacobi SVD: `a = u diag(s) vᵀ` with `s` descending and
/// `min(m, n)` singular triplets.
pub fn jacobi_svd(a: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    if a.nrows() < a.ncols() {
        let (u, s, v) = jacobi_svd(&a.t().to_owned());
        return (v, s, u);
    }
    let (m, n) = a.dim();
    let mut w = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    alpha += w[[i, p]] * w[[i, p]];
                    beta += w[[i, q]] * w[[i, q]];
                    gamma += w[[i, p]] * w[[i, q]];
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for i in 0..m {
                    let (wp, wq) = (w[[i, p]], w[[i, q]]);
                    w[[i, p]] = c * wp - sn * wq;
                    w[[i, q]] = sn * wp + c * wq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[[i, p]], v[[i, q]]);
                    v[[i, p]] = c * vp - sn * vq;
                    v[[i, q]] = sn * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).dot(&w.column(j)).sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut u = Array2::zeros((m, n));
    let mut s = Array1::zeros(n);
    let mut vs = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        if norms[src] > 0.0 {
            u.column_mut(dst).assign(&(&w.column(src) / norms[src]));
        }
        vs.column_mut(dst).assign(&v.column(src));
    }
    (u, s, vs)
}

pub fn nuclear(a: &Array2<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    jacobi_svd(a).1.sum()
}

/// Singular value shrinkage built on [`jacobi_svd`].
pub fn svt_oracle(a: &Array2<f64>, tau: f64) -> Array2<f64> {
    let (u, s, v) = jacobi_svd(a);
    let shrunk = s.mapv(|x| (x - tau).max(0.0));
    let mut out = Array2::zeros(a.dim());
    for i in 0..shrunk.len() {
        if shrunk[i] > 0.0 {
            let ui = u.column(i).insert_axis(ndarray::Axis(1)).to_owned();
            let vi = v.column(i).insert_axis(ndarray::Axis(0)).to_owned();
            out += &(shrunk[i] * ui.dot(&vi));
        }
    }
    out
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_eig_max(a: &Array2<f64>) -> f64 {
    sym_eigenvalues(a)[0]
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn sym_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        let scale: f64 = (0..n).map(|i| m[[i, i]] * m[[i, i]]).sum::<f64>().max(1e-300);
        if off < 1e-26 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eig
}

/// `½‖Y − DX‖² + λ‖X‖₁`.
pub fn lasso_objective(d: &Array2<f64>, y: &Array2<f64>, x: &Array2<f64>, lambda: f64) -> f64 {
    0.5 * frob_sq(&(y - &d.dot(x))) + lambda * l1(x)
}

fn shrink(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Plain iterative shrinkage-thresholding from zero.
pub fn ista(d: &Array2<f64>, y: &Array2<f64>, lambda: f64, iters: usize) -> Array2<f64> {
    let gram = d.t().dot(d);
    let dty = d.t().dot(y);
    let l = sym_eig_max(&gram) * (1.0 + 1e-9);
    let mut x = Array2::zeros((d.ncols(), y.ncols()));
    for _ in 0..iters {
        let g = gram.dot(&x) - &dty;
        x = (&x - &(g / l)).mapv(|v| shrink(v, lambda / l));
    }
    x
}

/// Projection of every column onto the unit ball.
pub fn project_columns(d: &Array2<f64>) -> Array2<f64> {
    let mut out = d.clone();
    for mut col in out.columns_mut() {
        let n = col.dot(&col).sqrt();
        if n > 1.0 {
            col /= n;
        }
    }
    out
}

/// `tr(F DᵀD) − 2 tr(E Dᵀ)`.
pub fn quad_objective(e: &Array2<f64>, f: &Array2<f64>, d: &Array2<f64>) -> f64 {
    let dtd = d.t().dot(d);
    (f * &dtd).sum() - 2.0 * (e * d).sum()
}

/// Projected gradient for `min tr(F DᵀD) − 2 tr(E Dᵀ)` over unit-ball atoms.
pub fn projected_gradient_dict(e: &Array2<f64>, f: &Array2<f64>, d_init: &Array2<f64>, iters: usize) -> Array2<f64> {
    let l = 2.0 * sym_eig_max(f).max(1e-12) * (1.0 + 1e-9);
    let mut d = d_init.clone();
    for _ in 0..iters {
        let g = 2.0 * (d.dot(f) - e);
        d = project_columns(&(&d - &(g / l)));
    }
    d
}

/// `tr(F DᵀD) − 2 tr(E Dᵀ) + η ‖D‖_*`.
pub fn lowrank_objective(e: &Array2<f64>, f: &Array2<f64>, eta: f64, d: &Array2<f64>) -> f64 {
    quad_objective(e, f, d) + eta * nuclear(d)
}

/// `argmin_Z ½‖Z − V‖² + t‖Z‖_* + ι(unit-ball columns)` by the Dykstra-like
/// proximal splitting of the two terms.
fn prox_nuclear_ball(v: &Array2<f64>, t: f64) -> Array2<f64> {
    let mut x = v.clone();
    let mut p = Array2::zeros(v.dim());
    let mut q = Array2::zeros(v.dim());
    for _ in 0..500 {
        let y = svt_oracle(&(&x + &p), t);
        p = &x + &p - &y;
        let x_new = project_columns(&(&y + &q));
        q = &y + &q - &x_new;
        let change = max_abs(&x_new, &x);
        x = x_new;
        if change < 1e-15 {
            break;
        }
    }
    x
}

/// Proximal gradient for `min tr(F DᵀD) − 2 tr(E Dᵀ) + η‖D‖_*` over unit-ball atoms.
pub fn lowrank_oracle(e: &Array2<f64>, f: &Array2<f64>, eta: f64, d_init: &Array2<f64>, iters: usize) -> Array2<f64> {
    let l = 2.0 * sym_eig_max(f).max(1e-12) * (1.0 + 1e-9);
    let mut d = project_columns(d_init);
    for _ in 0..iters {
        let g = 2.0 * (d.dot(f) - e);
        let next = prox_nuclear_ball(&(&d - &(g / l)), eta / l);
        let change = max_abs(&next, &d);
        d = next;
        if change < 1e-15 {
            break;
        }
    }
    d
}

/// `tr(F DᵀD) − 2 tr(E Dᵀ) + η ‖A D‖²`.
pub fn incoherent_obj(e: &Array2<f64>, f: &Array2<f64>, a: &Array2<f64>, eta: f64, d: &Array2<f64>) -> f64 {
    quad_objective(e, f, d) + eta * frob_sq(&a.dot(d))
}

/// Projected gradient on `incoherent_obj`; the smooth part has Lipschitz
/// constant `2 λmax(F) + 2 η λmax(AᵀA)`.
pub fn projected_gradient_incoherent(
    e: &Array2<f64>,
    f: &Array2<f64>,
    a: &Array2<f64>,
    eta: f64,
    d_init: &Array2<f64>,
    iters: usize,
) -> Array2<f64> {
    let ata = a.t().dot(a);
    let l = (2.0 * sym_eig_max(f) + 2.0 * eta * sym_eig_max(&ata)).max(1e-12) * (1.0 + 1e-9);
    let mut d = d_init.clone();
    for _ in 0..iters {
        let g = 2.0 * (d.dot(f) - e) + 2.0 * eta * ata.dot(&d);
        d = project_columns(&(&d - &(g / l)));
    }
    d
}

/// Hessian of a quadratic `h` over the entries of `x`, by central differences
/// of the finite-difference gradient.
pub fn numeric_hessian<F: Fn(&Array2<f64>) -> f64 + Copy>(h: F, x: &Array2<f64>) -> Array2<f64> {
    let n = x.len();
    let mut hess = Array2::zeros((n, n));
    let step = 1e-3;
    for i in 0..n {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus.as_slice_mut().unwrap()[i] += step;
        minus.as_slice_mut().unwrap()[i] -= step;
        let gp = central_diff(h, &plus, 1e-3);
        let gm = central_diff(h, &minus, 1e-3);
        for j in 0..n {
            hess[[i, j]] = (gp.as_slice().unwrap()[j] - gm.as_slice().unwrap()[j]) / (2.0 * step);
        }
    }
    (&hess + &hess.t()) / 2.0
}

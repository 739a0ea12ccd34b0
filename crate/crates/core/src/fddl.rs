//! Fisher discrimination dictionary learning: cost, the efficient coefficient
//! and dictionary updates, and the per-class original dictionary update.

use log::debug;
use ndarray::{s, Array2, ArrayView2, Axis};

use crate::bench::{BenchRecord, Stopwatch};
use crate::blockmat::{apply_m, broadcast_column, column_mean, spectral_bound, BlockLayout};
use crate::linalg::{frobenius, frobenius_sq, identity_plus, l1_norm};
use crate::model::{CoefficientMatrix, DictionaryModel, HyperParams, LabeledDataset, Method, TrainedModel, Variant};
use crate::solvers::{fista, odl_dict_update, odl_learn, FistaOptions, FistaOutput, OdlLearnOptions, OdlOptions};
use crate::{Error, Result};

pub(crate) fn fista_opts(p: &HyperParams) -> FistaOptions {
    FistaOptions {
        max_iters: p.fista_max_iters,
        tol: p.fista_tol,
    }
}

pub(crate) fn odl_opts(p: &HyperParams) -> OdlOptions {
    OdlOptions {
        sweeps: p.odl_sweeps,
        tol: p.odl_tol,
    }
}

pub(crate) fn check_layout(data: &LabeledDataset, d: &Array2<f64>, layout: &BlockLayout) -> Result<()> {
    if layout.samples() != data.class_counts() {
        return Err(Error::Dimension(format!(
            "code layout has class sizes {:?}, data has {:?}",
            layout.samples(),
            data.class_counts()
        )));
    }
    if d.dim() != (data.dim(), layout.total_atoms()) {
        return Err(Error::Dimension(format!(
            "D is {:?}, expected ({}, {})",
            d.dim(),
            data.dim(),
            layout.total_atoms()
        )));
    }
    Ok(())
}

fn require_no_shared(layout: &BlockLayout) -> Result<()> {
    if layout.shared_atoms() != 0 {
        return Err(Error::Partition(format!(
            "FDDL expects no shared atoms, layout has {}",
            layout.shared_atoms()
        )));
    }
    Ok(())
}

/// `Σ_c ‖Y_c − D X_c‖² + ‖Y_c − D_c X_c^c‖² + Σ_{j≠c} ‖D_j X_c^j‖²`.
pub(crate) fn fidelity(y: &Array2<f64>, d: &Array2<f64>, x: &Array2<f64>, layout: &BlockLayout) -> f64 {
    let dx = d.dot(x);
    let mut total = frobenius_sq(&(y - &dx));
    for c in 0..layout.num_classes() {
        let sc = layout.sample_range(c);
        let yc = y.slice(s![.., sc.clone()]);
        for j in 0..layout.num_classes() {
            let aj = layout.atom_range(j);
            let part = d.slice(s![.., aj.clone()]).dot(&x.slice(s![aj, sc.clone()]));
            if j == c {
                total += frobenius_sq(&(&yc - &part));
            } else {
                total += frobenius_sq(&part);
            }
        }
    }
    total
}

/// `Σ_c (‖X_c − M_c‖² − ‖M_c − M‖²) + ‖X‖²`.
pub(crate) fn fisher(x: &Array2<f64>, layout: &BlockLayout) -> f64 {
    let m = column_mean(x);
    let mut g = frobenius_sq(x);
    for c in 0..layout.num_classes() {
        let xc = x.slice(s![.., layout.sample_range(c)]).to_owned();
        let mc = column_mean(&xc);
        let within = frobenius_sq(&(&xc - &broadcast_column(&mc, xc.ncols())));
        let diff = &mc - &m;
        g += within - xc.ncols() as f64 * diff.dot(&diff);
    }
    g
}

/// `M − 2M̂`: global mean minus twice the class means, broadcast over columns.
pub(crate) fn mean_correction(x: &Array2<f64>, layout: &BlockLayout) -> Array2<f64> {
    let m = column_mean(x);
    let mut out = Array2::zeros(x.dim());
    for c in 0..layout.num_classes() {
        let sc = layout.sample_range(c);
        let mc = column_mean(&x.slice(s![.., sc.clone()]).to_owned());
        let col = &m - &(2.0 * &mc);
        for mut dst in out.slice_mut(s![.., sc]).columns_mut() {
            dst.assign(&col);
        }
    }
    out
}

/// Full FDDL objective `½f + λ1‖X‖₁ + (λ2/2) g(X)`.
pub fn fddl_cost(data: &LabeledDataset, d: &Array2<f64>, x: &CoefficientMatrix, params: &HyperParams) -> Result<f64> {
    let layout = x.layout();
    require_no_shared(layout)?;
    check_layout(data, d, layout)?;
    let f = fidelity(data.features(), d, &x.x, layout);
    let g = fisher(&x.x, layout);
    Ok(0.5 * f + params.lambda1 * l1_norm(&x.x) + 0.5 * params.lambda2 * g)
}

/// Precomputed `M(DᵀD) + 2λ2 I` and `M(DᵀY)` for one outer iteration.
#[derive(Debug, Clone)]
pub struct FddlGradCache {
    a: Array2<f64>,
    mdty: Array2<f64>,
    lambda2: f64,
    layout: BlockLayout,
}

impl FddlGradCache {
    pub fn new(y: &Array2<f64>, d: &Array2<f64>, layout: &BlockLayout, lambda2: f64) -> Result<Self> {
        let k = layout.atoms();
        let mdtd = apply_m(&d.t().dot(d), k, k)?;
        let mdty = apply_m(&d.t().dot(y), k, layout.samples())?;
        Ok(FddlGradCache {
            a: identity_plus(&mdtd, 2.0 * lambda2),
            mdty,
            lambda2,
            layout: layout.clone(),
        })
    }

    /// `(M(DᵀD) + 2λ2 I) X − M(DᵀY) + λ2 (M − 2M̂)`.
    pub fn gradient(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut g = self.a.dot(x) - &self.mdty;
        if self.lambda2 != 0.0 {
            g.scaled_add(self.lambda2, &mean_correction(x, &self.layout));
        }
        g
    }

    pub fn lipschitz(&self) -> Result<f64> {
        Ok(spectral_bound(&self.a)? + 4.0 * self.lambda2 + 1.0)
    }
}

/// Gradient of the smooth part `½f + (λ2/2) g` with respect to `X`.
pub fn efddl_x_gradient(data: &LabeledDataset, d: &Array2<f64>, x: &CoefficientMatrix, lambda2: f64) -> Result<Array2<f64>> {
    let layout = x.layout();
    require_no_shared(layout)?;
    check_layout(data, d, layout)?;
    Ok(FddlGradCache::new(data.features(), d, layout, lambda2)?.gradient(&x.x))
}

/// Coefficient update by FISTA; also reports the iteration count.
pub fn efddl_x_solve(data: &LabeledDataset, d: &Array2<f64>, x_init: &CoefficientMatrix, params: &HyperParams) -> Result<FistaOutput> {
    let layout = x_init.layout();
    require_no_shared(layout)?;
    check_layout(data, d, layout)?;
    let cache = FddlGradCache::new(data.features(), d, layout, params.lambda2)?;
    fista(|x| cache.gradient(x), cache.lipschitz()?, params.lambda1, &x_init.x, fista_opts(params))
}

pub fn efddl_x_update(data: &LabeledDataset, d: &Array2<f64>, x_init: &CoefficientMatrix, params: &HyperParams) -> Result<CoefficientMatrix> {
    let out = efddl_x_solve(data, d, x_init, params)?;
    let n = out.x.ncols();
    CoefficientMatrix::new(out.x, Array2::zeros((0, n)), x_init.layout())
}

/// `E = Y M(Xᵀ)`, `F = M(X Xᵀ)`.
pub(crate) fn fddl_ef(y: &Array2<f64>, x: &Array2<f64>, layout: &BlockLayout) -> Result<(Array2<f64>, Array2<f64>)> {
    let mxt = apply_m(&x.t().to_owned(), layout.samples(), layout.atoms())?;
    let e = y.dot(&mxt);
    let f = apply_m(&x.dot(&x.t()), layout.atoms(), layout.atoms())?;
    Ok((e, f))
}

/// Whole-dictionary update: one ODL solve on `E = Y M(Xᵀ)`, `F = M(XXᵀ)`.
pub fn efddl_d_update(data: &LabeledDataset, x: &CoefficientMatrix, d_init: &Array2<f64>, params: &HyperParams) -> Result<Array2<f64>> {
    let layout = x.layout();
    require_no_shared(layout)?;
    check_layout(data, d_init, layout)?;
    let (e, f) = fddl_ef(data.features(), &x.x, layout)?;
    odl_dict_update(&e, &f, d_init, odl_opts(params))
}

/// Class-by-class update: `D_c` is solved with every other block fixed, and
/// passes over the classes repeat until the dictionary stops moving.
pub fn ofddl_d_update(data: &LabeledDataset, x: &CoefficientMatrix, d_init: &Array2<f64>, params: &HyperParams) -> Result<Array2<f64>> {
    let layout = x.layout();
    require_no_shared(layout)?;
    check_layout(data, d_init, layout)?;
    let y = data.features();
    let xx = &x.x;
    let mut d = d_init.clone();
    for _ in 0..params.odl_sweeps {
        let before = d.clone();
        for c in 0..layout.num_classes() {
            let ac = layout.atom_range(c);
            let sc = layout.sample_range(c);
            let xc = xx.slice(s![ac.clone(), ..]);
            let mut y_hat = y.clone();
            for i in (0..layout.num_classes()).filter(|&i| i != c) {
                let ai = layout.atom_range(i);
                y_hat -= &d.slice(s![.., ai.clone()]).dot(&xx.slice(s![ai, ..]));
            }
            let xcc = xx.slice(s![ac.clone(), sc.clone()]);
            let e = y_hat.dot(&xc.t()) + y.slice(s![.., sc]).dot(&xcc.t());
            let f = 2.0 * xc.dot(&xc.t());
            let dc = odl_dict_update(&e, &f, &d.slice(s![.., ac.clone()]).to_owned(), odl_opts(params))?;
            d.slice_mut(s![.., ac]).assign(&dc);
        }
        if frobenius(&(&d - &before)) / frobenius(&d).max(1.0) < params.odl_tol {
            break;
        }
    }
    Ok(d)
}

/// Per-class ODL initialisation of the class-specific dictionaries.
pub(crate) fn init_class_dicts(data: &LabeledDataset, params: &HyperParams) -> Result<Array2<f64>> {
    let blocks = (0..data.num_classes())
        .map(|c| {
            let yc = data.class_samples(c);
            if yc.ncols() < params.k {
                return Err(Error::Config(format!(
                    "class {} has {} samples, fewer than k = {}",
                    c + 1,
                    yc.ncols(),
                    params.k
                )));
            }
            Ok(odl_learn(yc, params.k, params.lambda1, params.seed.wrapping_add(c as u64), init_opts(params))?.dict)
        })
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<ArrayView2<f64>> = blocks.iter().map(|b| b.view()).collect();
    Ok(ndarray::concatenate(Axis(1), &views).expect("blocks share a row count"))
}

pub(crate) fn init_opts(params: &HyperParams) -> OdlLearnOptions {
    OdlLearnOptions {
        iters: params.init_iters,
        fista: fista_opts(params),
        odl: odl_opts(params),
    }
}

/// Relative decrease used by the outer stopping rule.
pub(crate) fn relative_change(prev: f64, cur: f64) -> f64 {
    (prev - cur).abs() / prev.abs().max(f64::MIN_POSITIVE)
}

/// Keeps `candidate` only if it does not increase the objective.
pub(crate) fn accept_if_better<T>(current: &mut T, cost: &mut f64, candidate: T, candidate_cost: f64, what: &str) {
    if candidate_cost <= *cost {
        *current = candidate;
        *cost = candidate_cost;
    } else {
        debug!("{what} update rejected: cost {candidate_cost:e} > {:e}", *cost);
    }
}


/// FDDL training with the efficient updates.
pub fn fddl_train(data: &LabeledDataset, params: &HyperParams) -> Result<TrainedModel> {
    fddl_train_variant(data, params, Variant::Efficient)
}

/// FDDL training; `d_variant` picks the efficient whole-dictionary update or the
/// original class-by-class one. The coefficient update is always E-FDDL-X.
pub fn fddl_train_variant(data: &LabeledDataset, params: &HyperParams, d_variant: Variant) -> Result<TrainedModel> {
    params.validate()?;
    let d = init_class_dicts(data, params)?;
    fddl_train_from(data, params, d, d_variant)
}

/// FDDL training from a given initial dictionary with `X = 0`.
pub fn fddl_train_from(data: &LabeledDataset, params: &HyperParams, d_init: Array2<f64>, d_variant: Variant) -> Result<TrainedModel> {
    let layout = data.layout(params.k, 0)?;
    let clock = Stopwatch::start();
    let mut d = d_init;
    let mut codes = CoefficientMatrix::zeros(&layout);
    let mut cost = fddl_cost(data, &d, &codes, params)?;
    let mut history = Vec::with_capacity(params.max_outer_iters);
    for iter in 1..=params.max_outer_iters {
        let prev = cost;
        let cand = efddl_x_update(data, &d, &codes, params)?;
        let cand_cost = fddl_cost(data, &d, &cand, params)?;
        accept_if_better(&mut codes, &mut cost, cand, cand_cost, "X");

        let cand = match d_variant {
            Variant::Efficient => efddl_d_update(data, &codes, &d, params)?,
            Variant::Original => ofddl_d_update(data, &codes, &d, params)?,
        };
        let cand_cost = fddl_cost(data, &cand, &codes, params)?;
        accept_if_better(&mut d, &mut cost, cand, cand_cost, "D");

        if !cost.is_finite() {
            return Err(Error::numerical(iter, "cost became non-finite"));
        }
        history.push(BenchRecord {
            iter,
            cost,
            elapsed: clock.elapsed(),
        });
        if relative_change(prev, cost) < params.outer_tol {
            break;
        }
    }
    let recorded = HyperParams { k0: 0, ..params.clone() };
    let model = DictionaryModel::new(Method::Fddl, d, Array2::zeros((data.dim(), 0)), &codes, recorded)?;
    Ok(TrainedModel {
        model,
        coeffs: codes,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> (LabeledDataset, Array2<f64>, BlockLayout) {
        let y = array![[1.0, 0.5, -0.2, 0.3], [0.1, -0.4, 0.8, 0.2], [0.0, 0.3, 0.5, -0.6]];
        let data = LabeledDataset::new(y, vec![1, 1, 2, 2]).unwrap();
        let d = array![[0.6, 0.0, 0.3, 0.1], [0.8, 0.6, 0.0, 0.7], [0.0, 0.8, 0.9, 0.2]];
        let layout = data.layout(2, 0).unwrap();
        (data, d, layout)
    }

    #[test]
    fn zero_codes_cost_is_doubled_energy() {
        let (data, d, layout) = toy();
        let x = CoefficientMatrix::zeros(&layout);
        let cost = fddl_cost(&data, &d, &x, &HyperParams::default()).unwrap();
        let expected = frobenius_sq(data.features());
        assert!((cost - expected).abs() < 1e-14);
    }

    #[test]
    fn single_class_fisher_has_no_between_term() {
        // one class: M_1 = M, leaving the within-class scatter plus ||X||^2
        let x = array![[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]];
        let layout = BlockLayout::uniform(vec![3], 2, 0).unwrap();
        let centred = &x - &broadcast_column(&column_mean(&x), 3);
        let expected = frobenius_sq(&centred) + frobenius_sq(&x);
        assert!((fisher(&x, &layout) - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_case_gradient_is_minus_mdty() {
        let (data, d, layout) = toy();
        let x = CoefficientMatrix::zeros(&layout);
        let g = efddl_x_gradient(&data, &d, &x, 0.3).unwrap();
        let mdty = apply_m(&d.t().dot(data.features()), layout.atoms(), layout.samples()).unwrap();
        assert!(crate::linalg::max_abs_diff(&g, &(-&mdty)) < 1e-15);
    }

    #[test]
    fn single_class_gradient_doubles() {
        let y = array![[1.0, 0.5], [0.1, -0.4]];
        let data = LabeledDataset::new(y.clone(), vec![1, 1]).unwrap();
        let d = array![[0.6, 0.0], [0.8, 1.0]];
        let layout = data.layout(2, 0).unwrap();
        let xm = array![[0.2, -0.1], [0.4, 0.3]];
        let x = CoefficientMatrix::new(xm.clone(), Array2::zeros((0, 2)), &layout).unwrap();
        let g = efddl_x_gradient(&data, &d, &x, 0.0).unwrap();
        let expected = 2.0 * d.t().dot(&d).dot(&xm) - 2.0 * d.t().dot(&y);
        assert!(crate::linalg::max_abs_diff(&g, &expected) < 1e-14);
    }

    #[test]
    fn huge_lambda_gives_zero_codes() {
        let (data, d, layout) = toy();
        let p = HyperParams {
            lambda1: 1e6,
            ..HyperParams::default()
        };
        let x = efddl_x_update(&data, &d, &CoefficientMatrix::zeros(&layout), &p).unwrap();
        assert!(x.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_codes_leave_dictionary() {
        let (data, d, layout) = toy();
        let x = CoefficientMatrix::zeros(&layout);
        let p = HyperParams::default();
        assert_eq!(efddl_d_update(&data, &x, &d, &p).unwrap(), d);
        assert_eq!(ofddl_d_update(&data, &x, &d, &p).unwrap(), d);
    }

    #[test]
    fn shared_atoms_rejected() {
        let (data, d, _) = toy();
        let layout = data.layout(2, 1).unwrap();
        let x = CoefficientMatrix::zeros(&layout);
        assert!(matches!(
            fddl_cost(&data, &d, &x, &HyperParams::default()),
            Err(Error::Partition(_))
        ));
    }
}

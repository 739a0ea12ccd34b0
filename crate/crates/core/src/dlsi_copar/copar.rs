use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use super::{incoherent_step, stack_transposed};
use crate::bench::{BenchRecord, Stopwatch};
use crate::blockmat::{spectral_bound, BlockLayout};
use crate::fddl::{accept_if_better, check_layout, fista_opts, init_class_dicts, relative_change};
use crate::linalg::{frobenius_sq, l1_norm};
use crate::lrsdl::{init_shared_dict, Classifier, Prediction};
use crate::model::{CoefficientMatrix, DictionaryModel, HyperParams, LabeledDataset, Method, TrainedModel, Variant};
use crate::solvers::fista;
use crate::{Error, Result};

fn check(data: &LabeledDataset, d: &Array2<f64>, d0: &Array2<f64>, codes: &CoefficientMatrix) -> Result<()> {
    let layout = codes.layout();
    if layout.shared_atoms() == 0 {
        return Err(Error::Partition("COPAR needs at least one shared atom".into()));
    }
    check_layout(data, d, layout)?;
    if d0.dim() != (data.dim(), layout.shared_atoms()) {
        return Err(Error::Dimension(format!(
            "D0 is {:?}, expected ({}, {})",
            d0.dim(),
            data.dim(),
            layout.shared_atoms()
        )));
    }
    Ok(())
}

/// Column ranges of every block of `[D D0]`, the shared block last.
fn all_blocks(layout: &BlockLayout) -> Vec<std::ops::Range<usize>> {
    let kk = layout.total_atoms();
    let mut out: Vec<_> = (0..layout.num_classes()).map(|c| layout.atom_range(c)).collect();
    out.push(kk..kk + layout.shared_atoms());
    out
}

/// `½ Σ_c r1_c + λ ‖X̄‖₁ + η Σ_{c=0..C} Σ_{i≠c} ‖D_iᵀ D_c‖²` with
/// `r1_c = ‖Y_c − D̄X̄_c‖² + ‖Y_c − D0X0_c − D_cX_c^c‖² + Σ_{j≠c} ‖X_c^j‖²`.
pub fn copar_cost(
    data: &LabeledDataset,
    d: &Array2<f64>,
    d0: &Array2<f64>,
    codes: &CoefficientMatrix,
    lambda: f64,
    eta: f64,
) -> Result<f64> {
    check(data, d, d0, codes)?;
    let layout = codes.layout();
    let y = data.features();
    let dbar = concatenate(Axis(1), &[d.view(), d0.view()]).expect("equal row counts");
    let shared_fit = d0.dot(&codes.x0);
    let mut r1 = frobenius_sq(&(y - &dbar.dot(&codes.stacked())));
    for c in 0..layout.num_classes() {
        let sc = layout.sample_range(c);
        let ac = layout.atom_range(c);
        let own = d.slice(s![.., ac.clone()]).dot(&codes.block(c, c));
        let res = &y.slice(s![.., sc.clone()]) - &shared_fit.slice(s![.., sc]) - &own;
        r1 += frobenius_sq(&res);
        for j in (0..layout.num_classes()).filter(|&j| j != c) {
            r1 += frobenius_sq(&codes.block(j, c).to_owned());
        }
    }
    let gram = dbar.t().dot(&dbar);
    let blocks = all_blocks(layout);
    let mut incoherence = 0.0;
    for (c, bc) in blocks.iter().enumerate() {
        for (i, bi) in blocks.iter().enumerate() {
            if i != c {
                incoherence += frobenius_sq(&gram.slice(s![bi.clone(), bc.clone()]).to_owned());
            }
        }
    }
    let l1 = l1_norm(&codes.x) + l1_norm(&codes.x0);
    Ok(0.5 * r1 + lambda * l1 + eta * incoherence)
}

/// Augmented system `D̃` for class `c`: `[D̄; D̄ restricted to D_c and D0;
/// selectors of the rows X^j, j ≠ c]`, of height `2d + (K − k_c)`.
pub fn copar_code_system(d: &Array2<f64>, d0: &Array2<f64>, layout: &BlockLayout, c: usize) -> Array2<f64> {
    let dim = d.nrows();
    let kk = layout.total_atoms();
    let width = kk + layout.shared_atoms();
    let ac = layout.atom_range(c);
    let off = kk - ac.len();
    let mut sys = Array2::zeros((2 * dim + off, width));
    sys.slice_mut(s![..dim, ..kk]).assign(d);
    sys.slice_mut(s![..dim, kk..]).assign(d0);
    sys.slice_mut(s![dim..2 * dim, ac.clone()]).assign(&d.slice(s![.., ac.clone()]));
    sys.slice_mut(s![dim..2 * dim, kk..]).assign(d0);
    let mut row = 2 * dim;
    for j in (0..kk).filter(|j| !ac.contains(j)) {
        sys[[row, j]] = 1.0;
        row += 1;
    }
    sys
}

/// Per-class code update, each class solving `min ½‖Ỹ − D̃X̄_c‖² + λ‖X̄_c‖₁` by FISTA.
pub fn copar_x_update(
    data: &LabeledDataset,
    d: &Array2<f64>,
    d0: &Array2<f64>,
    codes: &CoefficientMatrix,
    params: &HyperParams,
) -> Result<CoefficientMatrix> {
    check(data, d, d0, codes)?;
    let layout = codes.layout();
    let dim = d.nrows();
    let mut stacked = codes.stacked();
    for c in 0..layout.num_classes() {
        let sys = copar_code_system(d, d0, layout, c);
        let gram = sys.t().dot(&sys);
        let yc = data.class_samples(c);
        // Ỹ = [Y_c; Y_c; 0]
        let sty = sys.slice(s![..dim, ..]).t().dot(&yc) + sys.slice(s![dim..2 * dim, ..]).t().dot(&yc);
        let lip = spectral_bound(&gram)?.max(1e-12);
        let sc = layout.sample_range(c);
        let init = stacked.slice(s![.., sc.clone()]).to_owned();
        let out = fista(|x| gram.dot(x) - &sty, lip, params.lambda1, &init, fista_opts(params))?;
        stacked.slice_mut(s![.., sc]).assign(&out.x);
    }
    CoefficientMatrix::from_stacked(&stacked, layout)
}

/// Update of class block `c` with every other block (and `D0`) fixed.
pub fn copar_dc_update(
    data: &LabeledDataset,
    d: &Array2<f64>,
    d0: &Array2<f64>,
    codes: &CoefficientMatrix,
    c: usize,
    params: &HyperParams,
    variant: Variant,
) -> Result<Array2<f64>> {
    check(data, d, d0, codes)?;
    let layout = codes.layout();
    let y = data.features();
    let ac = layout.atom_range(c);
    let sc = layout.sample_range(c);
    let dc = d.slice(s![.., ac.clone()]).to_owned();
    let xc = codes.atom_rows(c);
    let xcc = codes.block(c, c);
    // Ŷ = Y − Σ_{i≠c} D_i X^i − D0 X0
    let y_hat = y - &d.dot(&codes.x) + &dc.dot(&xc) - &d0.dot(&codes.x0);
    let y_own = &y.slice(s![.., sc.clone()]) - &d0.dot(&codes.shared_block(c));
    let e = y_hat.dot(&xc.t()) + y_own.dot(&xcc.t());
    let f = xc.dot(&xc.t()) + xcc.dot(&xcc.t());
    let mut others: Vec<ArrayView2<f64>> = (0..layout.num_classes())
        .filter(|&j| j != c)
        .map(|j| d.slice(s![.., layout.atom_range(j)]))
        .collect();
    others.push(d0.view());
    let a = stack_transposed(d.nrows(), &others);
    incoherent_step(&e, &f, &a, 4.0 * params.eta, &dc, params, variant)
}

/// Shared dictionary update with every class block fixed.
pub fn copar_d0_update(
    data: &LabeledDataset,
    d: &Array2<f64>,
    d0: &Array2<f64>,
    codes: &CoefficientMatrix,
    params: &HyperParams,
    variant: Variant,
) -> Result<Array2<f64>> {
    check(data, d, d0, codes)?;
    let layout = codes.layout();
    let y = data.features();
    let y_hat = y - &d.dot(&codes.x);
    let mut y_own = y.clone();
    for c in 0..layout.num_classes() {
        let ac = layout.atom_range(c);
        let sc = layout.sample_range(c);
        let fit = d.slice(s![.., ac]).dot(&codes.block(c, c));
        let mut dst = y_own.slice_mut(s![.., sc]);
        dst -= &fit;
    }
    let e = (y_hat + y_own).dot(&codes.x0.t());
    let f = 2.0 * codes.x0.dot(&codes.x0.t());
    let a = d.t().to_owned();
    incoherent_step(&e, &f, &a, 4.0 * params.eta, d0, params, variant)
}

/// COPAR training; `variant` selects the column-wise or the ADMM dictionary update.
pub fn copar_train(data: &LabeledDataset, params: &HyperParams, variant: Variant) -> Result<TrainedModel> {
    params.validate()?;
    if params.k0 == 0 {
        return Err(Error::Config("COPAR needs k0 >= 1".into()));
    }
    let d = init_class_dicts(data, params)?;
    let d0 = init_shared_dict(data, params)?;
    copar_train_from(data, params, d, d0, variant)
}

pub fn copar_train_from(
    data: &LabeledDataset,
    params: &HyperParams,
    d_init: Array2<f64>,
    d0_init: Array2<f64>,
    variant: Variant,
) -> Result<TrainedModel> {
    let layout = data.layout(params.k, params.k0)?;
    let (lambda, eta) = (params.lambda1, params.eta);
    let clock = Stopwatch::start();
    let mut d = d_init;
    let mut d0 = d0_init;
    let mut codes = CoefficientMatrix::zeros(&layout);
    let mut cost = copar_cost(data, &d, &d0, &codes, lambda, eta)?;
    let mut history = Vec::with_capacity(params.max_outer_iters);
    for iter in 1..=params.max_outer_iters {
        let prev = cost;
        let cand = copar_x_update(data, &d, &d0, &codes, params)?;
        let cand_cost = copar_cost(data, &d, &d0, &cand, lambda, eta)?;
        accept_if_better(&mut codes, &mut cost, cand, cand_cost, "X");

        for c in 0..layout.num_classes() {
            let new_dc = copar_dc_update(data, &d, &d0, &codes, c, params, variant)?;
            let mut cand = d.clone();
            cand.slice_mut(s![.., layout.atom_range(c)]).assign(&new_dc);
            let cand_cost = copar_cost(data, &cand, &d0, &codes, lambda, eta)?;
            accept_if_better(&mut d, &mut cost, cand, cand_cost, "D_c");
        }
        let cand = copar_d0_update(data, &d, &d0, &codes, params, variant)?;
        let cand_cost = copar_cost(data, &d, &cand, &codes, lambda, eta)?;
        accept_if_better(&mut d0, &mut cost, cand, cand_cost, "D0");

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
    let model = DictionaryModel::new(Method::Copar, d, d0, &codes, params.clone())?;
    Ok(TrainedModel {
        model,
        coeffs: codes,
        history,
    })
}

/// Codes over `[D D0]`, removes the shared part, and scores by class residual.
#[derive(Debug, Clone)]
pub struct CoparClassifier(Classifier);

impl CoparClassifier {
    pub fn new(model: &DictionaryModel) -> Result<Self> {
        Ok(CoparClassifier(Classifier::with_lambda2(model, 1.0, 0.0)?))
    }

    pub fn classify(&self, y: &Array1<f64>) -> Result<Prediction> {
        self.0.classify(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_codes_cost() {
        let y = array![[1.0, 0.5, -0.2], [0.1, -0.4, 0.8]];
        let data = LabeledDataset::new(y.clone(), vec![1, 2, 2]).unwrap();
        let layout = data.layout(1, 1).unwrap();
        let d = array![[0.6, 0.0], [0.8, 1.0]];
        let d0 = array![[1.0], [0.0]];
        let codes = CoefficientMatrix::zeros(&layout);
        let cost = copar_cost(&data, &d, &d0, &codes, 0.1, 0.5).unwrap();
        // D1ᵀD2 = 0.8, D1ᵀD0 = 0.6, D2ᵀD0 = 0; each ordered pair counted once
        let incoherence = 2.0 * (0.8f64.powi(2) + 0.6f64.powi(2));
        assert!((cost - (frobenius_sq(&y) + 0.5 * incoherence)).abs() < 1e-14);
    }

    #[test]
    fn code_system_shape_and_selectors() {
        let layout = BlockLayout::uniform(vec![2, 2, 2], 2, 1).unwrap();
        let d = Array2::ones((3, 6));
        let d0 = Array2::ones((3, 1));
        let sys = copar_code_system(&d, &d0, &layout, 1);
        assert_eq!(sys.dim(), (2 * 3 + 4, 7));
        assert_eq!(sys.row(6).to_vec(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(sys.row(8).to_vec(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(sys.row(3).to_vec(), vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    }
}

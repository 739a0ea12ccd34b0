use ndarray::{s, Array1, Array2, ArrayView2};

use super::{incoherent_step, stack_transposed};
use crate::bench::{BenchRecord, Stopwatch};
use crate::blockmat::{spectral_bound, BlockLayout};
use crate::fddl::{accept_if_better, check_layout, fista_opts, init_class_dicts, relative_change};
use crate::linalg::{frobenius_sq, l1_norm};
use crate::lrsdl::{argmin, Prediction};
use crate::model::{CoefficientMatrix, DictionaryModel, HyperParams, LabeledDataset, Method, TrainedModel, Variant};
use crate::solvers::{fista, FistaOptions};
use crate::{Error, Result};

fn check_codes(layout: &BlockLayout, codes: &[Array2<f64>]) -> Result<()> {
    let ok = codes.len() == layout.num_classes()
        && codes
            .iter()
            .enumerate()
            .all(|(c, x)| x.dim() == (layout.atoms()[c], layout.samples()[c]));
    if !ok {
        return Err(Error::Dimension("per-class codes do not match the block layout".into()));
    }
    Ok(())
}

/// `‖A D_c‖²` summed into the DLSI form `(η/2) Σ_c Σ_{j≠c} ‖D_jᵀ D_c‖²` (without `η/2`).
fn cross_gram_energy(d: &Array2<f64>, layout: &BlockLayout) -> f64 {
    let gram = d.t().dot(d);
    let mut total = 0.0;
    for c in 0..layout.num_classes() {
        for j in (0..layout.num_classes()).filter(|&j| j != c) {
            total += frobenius_sq(&gram.slice(s![layout.atom_range(j), layout.atom_range(c)]).to_owned());
        }
    }
    total
}

/// `Σ_c ‖Y_c − D_c X^c‖² + λ ‖X^c‖₁ + (η/2) Σ_{j≠c} ‖D_jᵀ D_c‖²`.
pub fn dlsi_cost(data: &LabeledDataset, d: &Array2<f64>, codes: &[Array2<f64>], lambda: f64, eta: f64) -> Result<f64> {
    let layout = BlockLayout::new(data.class_counts().to_vec(), codes.iter().map(|x| x.nrows()).collect(), 0)?;
    check_layout(data, d, &layout)?;
    check_codes(&layout, codes)?;
    let mut total = 0.0;
    for (c, xc) in codes.iter().enumerate() {
        let dc = d.slice(s![.., layout.atom_range(c)]);
        total += frobenius_sq(&(&data.class_samples(c) - &dc.dot(xc))) + lambda * l1_norm(xc);
    }
    Ok(total + 0.5 * eta * cross_gram_energy(d, &layout))
}

/// Codes `min ‖Y − D X‖² + λ ‖X‖₁` for one class dictionary.
fn local_lasso(dc: ArrayView2<f64>, yc: ArrayView2<f64>, lambda: f64, init: &Array2<f64>, opts: FistaOptions) -> Result<Array2<f64>> {
    let gram = 2.0 * dc.t().dot(&dc);
    let dty = 2.0 * dc.t().dot(&yc);
    let lip = spectral_bound(&gram)?.max(1e-12);
    Ok(fista(|x| gram.dot(x) - &dty, lip, lambda, init, opts)?.x)
}

/// Per-class code update, each class coded on its own dictionary only.
pub fn dlsi_x_update(data: &LabeledDataset, d: &Array2<f64>, codes: &[Array2<f64>], params: &HyperParams) -> Result<Vec<Array2<f64>>> {
    let layout = data.layout(params.k, 0)?;
    check_layout(data, d, &layout)?;
    check_codes(&layout, codes)?;
    (0..layout.num_classes())
        .map(|c| {
            let dc = d.slice(s![.., layout.atom_range(c)]);
            local_lasso(dc, data.class_samples(c), params.lambda1, &codes[c], fista_opts(params))
        })
        .collect()
}

fn block_diagonal(codes: &[Array2<f64>], layout: &BlockLayout) -> Result<CoefficientMatrix> {
    let mut x = Array2::zeros((layout.total_atoms(), layout.total_samples()));
    for (c, xc) in codes.iter().enumerate() {
        x.slice_mut(s![layout.atom_range(c), layout.sample_range(c)]).assign(xc);
    }
    CoefficientMatrix::new(x, Array2::zeros((0, layout.total_samples())), layout)
}

/// DLSI training; `variant` selects the column-wise or the ADMM dictionary update.
pub fn dlsi_train(data: &LabeledDataset, params: &HyperParams, variant: Variant) -> Result<TrainedModel> {
    params.validate()?;
    let d = init_class_dicts(data, params)?;
    dlsi_train_from(data, params, d, variant)
}

pub fn dlsi_train_from(data: &LabeledDataset, params: &HyperParams, d_init: Array2<f64>, variant: Variant) -> Result<TrainedModel> {
    let layout = data.layout(params.k, 0)?;
    let (lambda, eta) = (params.lambda1, params.eta);
    let clock = Stopwatch::start();
    let mut d = d_init;
    let mut codes: Vec<Array2<f64>> = (0..layout.num_classes())
        .map(|c| Array2::zeros((layout.atoms()[c], layout.samples()[c])))
        .collect();
    let mut cost = dlsi_cost(data, &d, &codes, lambda, eta)?;
    let mut history = Vec::with_capacity(params.max_outer_iters);
    for iter in 1..=params.max_outer_iters {
        let prev = cost;
        let cand = dlsi_x_update(data, &d, &codes, params)?;
        let cand_cost = dlsi_cost(data, &d, &cand, lambda, eta)?;
        accept_if_better(&mut codes, &mut cost, cand, cand_cost, "X");

        for c in 0..layout.num_classes() {
            let ac = layout.atom_range(c);
            let others: Vec<ArrayView2<f64>> = (0..layout.num_classes())
                .filter(|&j| j != c)
                .map(|j| d.slice(s![.., layout.atom_range(j)]))
                .collect();
            let a = stack_transposed(d.nrows(), &others);
            let xc = &codes[c];
            let e = data.class_samples(c).dot(&xc.t());
            let f = xc.dot(&xc.t());
            let dc = d.slice(s![.., ac.clone()]).to_owned();
            let new_dc = incoherent_step(&e, &f, &a, eta, &dc, params, variant)?;
            let mut cand = d.clone();
            cand.slice_mut(s![.., ac]).assign(&new_dc);
            let cand_cost = dlsi_cost(data, &cand, &codes, lambda, eta)?;
            accept_if_better(&mut d, &mut cost, cand, cand_cost, "D_c");
        }

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
    let coeffs = block_diagonal(&codes, &layout)?;
    let recorded = HyperParams { k0: 0, ..params.clone() };
    let model = DictionaryModel::new(Method::Dlsi, d, Array2::zeros((data.dim(), 0)), &coeffs, recorded)?;
    Ok(TrainedModel { model, coeffs, history })
}

/// Local-coding classifier: each class codes the sample on its own dictionary
/// and the smallest reconstruction residual wins.
#[derive(Debug, Clone)]
pub struct DlsiClassifier {
    blocks: Vec<(Array2<f64>, Array2<f64>, f64)>,
    lambda: f64,
    opts: FistaOptions,
    dim: usize,
}

impl DlsiClassifier {
    pub fn new(model: &DictionaryModel) -> Result<Self> {
        if model.d.ncols() == 0 {
            return Err(Error::State("model has no class-specific atoms".into()));
        }
        let blocks = (0..model.num_classes())
            .map(|c| {
                let dc = model.class_dict(c).to_owned();
                let gram = 2.0 * dc.t().dot(&dc);
                let lip = spectral_bound(&gram)?.max(1e-12);
                Ok((dc, gram, lip))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DlsiClassifier {
            blocks,
            lambda: model.params.lambda1,
            opts: fista_opts(&model.params),
            dim: model.dim(),
        })
    }

    pub fn classify(&self, y: &Array1<f64>) -> Result<Prediction> {
        if y.len() != self.dim {
            return Err(Error::Dimension(format!(
                "sample has {} features, model expects {}",
                y.len(),
                self.dim
            )));
        }
        let ycol = y.view().insert_axis(ndarray::Axis(1));
        let mut scores = Vec::with_capacity(self.blocks.len());
        for (dc, gram, lip) in &self.blocks {
            let dty = 2.0 * dc.t().dot(&ycol);
            let init = Array2::zeros((dc.ncols(), 1));
            let x = fista(|x| gram.dot(x) - &dty, *lip, self.lambda, &init, self.opts)?.x;
            let r = &ycol - &dc.dot(&x);
            scores.push(frobenius_sq(&r));
        }
        Ok(Prediction {
            label: argmin(&scores) + 1,
            scores,
        })
    }
}

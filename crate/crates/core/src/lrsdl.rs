//! Dictionary learning with a low-rank shared dictionary: extended cost,
//! stacked coefficient update, the two dictionary updates, training, and the
//! two-stage classifier.

use log::warn;
use ndarray::{s, concatenate, Array1, Array2, Axis};

use crate::bench::{BenchRecord, Stopwatch};
use crate::blockmat::{apply_m, broadcast_column, column_mean, normalize_atoms, spectral_bound, BlockLayout};
use crate::fddl::{
    accept_if_better, check_layout, fddl_ef, fidelity, fisher, fista_opts, init_class_dicts, init_opts, mean_correction,
    odl_opts, relative_change,
};
use crate::linalg::{frobenius_sq, identity_plus, l1_norm, nuclear_norm};
use crate::model::{CoefficientMatrix, DictionaryModel, HyperParams, LabeledDataset, Method, TrainedModel};
use crate::solvers::{admm_lowrank_dict, fista, odl_dict_update, odl_learn, AdmmOptions, FistaOptions};
use crate::{Error, Result};

/// Which expression of the stacked gradient to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientForm {
    /// The gradient of the cost, derived block by block.
    #[default]
    Derived,
    /// The expression as printed in the reference algorithm listing, kept
    /// only for comparison; it is not the gradient of the cost.
    Printed,
}

/// Outer-loop iterates of training.
pub type LrsdlState = TrainedModel;

fn check_shared(data: &LabeledDataset, d0: &Array2<f64>, layout: &BlockLayout) -> Result<()> {
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

fn check_all(data: &LabeledDataset, d: &Array2<f64>, d0: &Array2<f64>, codes: &CoefficientMatrix) -> Result<()> {
    check_layout(data, d, codes.layout())?;
    check_shared(data, d0, codes.layout())
}

/// `Ȳ = Y − D0 X0`.
fn residual_target(y: &Array2<f64>, d0: &Array2<f64>, x0: &Array2<f64>) -> Array2<f64> {
    y - &d0.dot(x0)
}

/// `½ f̄ + λ1 ‖X̄‖₁ + (λ2/2)(g(X) + ‖X0 − M0‖²) + η ‖D0‖_*`.
pub fn lrsdl_cost(
    data: &LabeledDataset,
    d: &Array2<f64>,
    d0: &Array2<f64>,
    codes: &CoefficientMatrix,
    params: &HyperParams,
) -> Result<f64> {
    check_all(data, d, d0, codes)?;
    let layout = codes.layout();
    let y_bar = residual_target(data.features(), d0, &codes.x0);
    let f = fidelity(&y_bar, d, &codes.x, layout);
    let g = fisher(&codes.x, layout);
    let shared = shared_scatter(&codes.x0);
    let l1 = l1_norm(&codes.x) + l1_norm(&codes.x0);
    let nuc = if d0.is_empty() { 0.0 } else { nuclear_norm(d0)? };
    Ok(0.5 * f + params.lambda1 * l1 + 0.5 * params.lambda2 * (g + shared) + params.eta * nuc)
}

/// `‖X0 − M0‖²`.
fn shared_scatter(x0: &Array2<f64>) -> f64 {
    if x0.nrows() == 0 {
        return 0.0;
    }
    frobenius_sq(&(x0 - &broadcast_column(&column_mean(x0), x0.ncols())))
}

/// Products of `D`, `D0` and `Y` that stay fixed during one coefficient update.
#[derive(Debug, Clone)]
pub struct LrsdlGradCache {
    a: Array2<f64>,
    b: Array2<f64>,
    mdty: Array2<f64>,
    dtd0: Array2<f64>,
    d0ty: Array2<f64>,
    d0td: Array2<f64>,
    lambda2: f64,
    layout: BlockLayout,
    form: GradientForm,
}

impl LrsdlGradCache {
    pub fn new(
        y: &Array2<f64>,
        d: &Array2<f64>,
        d0: &Array2<f64>,
        layout: &BlockLayout,
        lambda2: f64,
        form: GradientForm,
    ) -> Result<Self> {
        let k = layout.atoms();
        let mdtd = apply_m(&d.t().dot(d), k, k)?;
        let mdty = apply_m(&d.t().dot(y), k, layout.samples())?;
        let b = identity_plus(&(2.0 * d0.t().dot(d0)), lambda2);
        Ok(LrsdlGradCache {
            a: identity_plus(&mdtd, 2.0 * lambda2),
            b,
            mdty,
            dtd0: d.t().dot(d0),
            d0ty: d0.t().dot(y),
            d0td: d0.t().dot(d),
            lambda2,
            layout: layout.clone(),
            form,
        })
    }

    /// Gradient with respect to the stacked variable `[X; X0]`.
    pub fn gradient(&self, stacked: &Array2<f64>) -> Array2<f64> {
        let kk = self.layout.total_atoms();
        let x = stacked.slice(s![..kk, ..]).to_owned();
        let x0 = stacked.slice(s![kk.., ..]).to_owned();
        let k = self.layout.atoms();
        let n = self.layout.samples();

        // M(DᵀȲ) = M(DᵀY) − M(DᵀD0 X0)
        let mdtyb = &self.mdty - &apply_m(&self.dtd0.dot(&x0), k, n).expect("layout checked");
        let mut upper = self.a.dot(&x) - &mdtyb;
        let mut lower = self.b.dot(&x0);
        if x0.nrows() > 0 {
            // D0ᵀV with V = Y − ½ D M(X)
            let mx = apply_m(&x, k, n).expect("layout checked");
            let d0tv = &self.d0ty - &(0.5 * self.d0td.dot(&mx));
            let m0 = broadcast_column(&column_mean(&x0), x0.ncols());
            match self.form {
                GradientForm::Derived => {
                    lower.scaled_add(-2.0, &d0tv);
                    lower.scaled_add(-self.lambda2, &m0);
                }
                GradientForm::Printed => {
                    lower -= &d0tv;
                    lower.scaled_add(-self.lambda2, &m0);
                }
            }
        }
        if self.lambda2 != 0.0 {
            match self.form {
                GradientForm::Derived => upper.scaled_add(self.lambda2, &mean_correction(&x, &self.layout)),
                GradientForm::Printed => upper.scaled_add(self.lambda2, &printed_mean_term(&x, &self.layout)),
            }
        }
        concatenate(Axis(0), &[upper.view(), lower.view()]).expect("equal column counts")
    }

    /// `λmax(A) + λmax(B) + 4λ2 + 1`.
    pub fn lipschitz(&self) -> Result<f64> {
        Ok(spectral_bound(&self.a)? + spectral_bound(&self.b)? + 4.0 * self.lambda2 + 1.0)
    }
}

/// `M − M̂`, the printed mean term.
fn printed_mean_term(x: &Array2<f64>, layout: &BlockLayout) -> Array2<f64> {
    let m = column_mean(x);
    let mut out = Array2::zeros(x.dim());
    for c in 0..layout.num_classes() {
        let sc = layout.sample_range(c);
        let col = &m - &column_mean(&x.slice(s![.., sc.clone()]).to_owned());
        for mut dst in out.slice_mut(s![.., sc]).columns_mut() {
            dst.assign(&col);
        }
    }
    out
}

/// Gradient of the smooth part of [`lrsdl_cost`] with respect to `[X; X0]`.
pub fn lrsdl_x_gradient(
    data: &LabeledDataset,
    d: &Array2<f64>,
    d0: &Array2<f64>,
    codes: &CoefficientMatrix,
    lambda2: f64,
    form: GradientForm,
) -> Result<Array2<f64>> {
    check_all(data, d, d0, codes)?;
    let cache = LrsdlGradCache::new(data.features(), d, d0, codes.layout(), lambda2, form)?;
    Ok(cache.gradient(&codes.stacked()))
}

/// Coefficient update by FISTA on the stacked variable.
pub fn lrsdl_x_update(
    data: &LabeledDataset,
    d: &Array2<f64>,
    d0: &Array2<f64>,
    codes: &CoefficientMatrix,
    params: &HyperParams,
) -> Result<CoefficientMatrix> {
    lrsdl_x_update_with_form(data, d, d0, codes, params, GradientForm::Derived)
}

pub fn lrsdl_x_update_with_form(
    data: &LabeledDataset,
    d: &Array2<f64>,
    d0: &Array2<f64>,
    codes: &CoefficientMatrix,
    params: &HyperParams,
    form: GradientForm,
) -> Result<CoefficientMatrix> {
    check_all(data, d, d0, codes)?;
    let cache = LrsdlGradCache::new(data.features(), d, d0, codes.layout(), params.lambda2, form)?;
    let out = fista(
        |x| cache.gradient(x),
        cache.lipschitz()?,
        params.lambda1,
        &codes.stacked(),
        fista_opts(params),
    )?;
    CoefficientMatrix::from_stacked(&out.x, codes.layout())
}

/// Class-specific dictionary update on the residual `Ȳ = Y − D0 X0`.
pub fn lrsdl_d_update(
    data: &LabeledDataset,
    d: &Array2<f64>,
    d0: &Array2<f64>,
    codes: &CoefficientMatrix,
    params: &HyperParams,
) -> Result<Array2<f64>> {
    check_all(data, d, d0, codes)?;
    let y_bar = residual_target(data.features(), d0, &codes.x0);
    let (e, f) = fddl_ef(&y_bar, &codes.x, codes.layout())?;
    odl_dict_update(&e, &f, d, odl_opts(params))
}

/// `V = Y − ½ D M(X)`.
pub fn shared_target(y: &Array2<f64>, d: &Array2<f64>, x: &Array2<f64>, layout: &BlockLayout) -> Result<Array2<f64>> {
    let mx = apply_m(x, layout.atoms(), layout.samples())?;
    Ok(y - &(0.5 * d.dot(&mx)))
}

pub(crate) fn admm_opts(params: &HyperParams) -> AdmmOptions {
    AdmmOptions {
        rho: params.admm_rho,
        max_iters: params.admm_max_iters,
        tol: params.admm_tol,
        odl: odl_opts(params),
    }
}

/// Shared dictionary update: ADMM on `E = V X0ᵀ`, `F = X0 X0ᵀ` with the nuclear norm.
pub fn lrsdl_d0_update(
    data: &LabeledDataset,
    d: &Array2<f64>,
    d0: &Array2<f64>,
    codes: &CoefficientMatrix,
    params: &HyperParams,
) -> Result<Array2<f64>> {
    check_all(data, d, d0, codes)?;
    if d0.ncols() == 0 {
        return Err(Error::InvalidArgument("shared dictionary update needs k0 >= 1".into()));
    }
    let v = shared_target(data.features(), d, &codes.x, codes.layout())?;
    let e = v.dot(&codes.x0.t());
    let f = codes.x0.dot(&codes.x0.t());
    let out = admm_lowrank_dict(&e, &f, params.eta, d0, admm_opts(params))?;
    Ok(normalize_atoms(&out.dict))
}

/// Trains the class-specific dictionaries, the shared dictionary and the codes.
pub fn lrsdl_train(data: &LabeledDataset, params: &HyperParams) -> Result<LrsdlState> {
    params.validate()?;
    let d = init_class_dicts(data, params)?;
    let d0 = init_shared_dict(data, params)?;
    lrsdl_train_from(data, params, d, d0)
}

pub(crate) fn init_shared_dict(data: &LabeledDataset, params: &HyperParams) -> Result<Array2<f64>> {
    if params.k0 == 0 {
        return Ok(Array2::zeros((data.dim(), 0)));
    }
    let seed = params.seed.wrapping_add(data.num_classes() as u64);
    Ok(odl_learn(data.features().view(), params.k0, params.lambda1, seed, init_opts(params))?.dict)
}

/// Outer loop from given initial dictionaries with `X̄ = 0`.
pub fn lrsdl_train_from(data: &LabeledDataset, params: &HyperParams, d_init: Array2<f64>, d0_init: Array2<f64>) -> Result<LrsdlState> {
    params.validate()?;
    let layout = data.layout(params.k, params.k0)?;
    let clock = Stopwatch::start();
    let mut d = d_init;
    let mut d0 = d0_init;
    let mut codes = CoefficientMatrix::zeros(&layout);
    let mut cost = lrsdl_cost(data, &d, &d0, &codes, params)?;
    let mut history = Vec::with_capacity(params.max_outer_iters);
    for iter in 1..=params.max_outer_iters {
        let prev = cost;
        let cand = lrsdl_x_update(data, &d, &d0, &codes, params)?;
        let cand_cost = lrsdl_cost(data, &d, &d0, &cand, params)?;
        accept_if_better(&mut codes, &mut cost, cand, cand_cost, "X");

        let cand = lrsdl_d_update(data, &d, &d0, &codes, params)?;
        let cand_cost = lrsdl_cost(data, &cand, &d0, &codes, params)?;
        accept_if_better(&mut d, &mut cost, cand, cand_cost, "D");

        if params.k0 > 0 {
            let cand = lrsdl_d0_update(data, &d, &d0, &codes, params)?;
            let cand_cost = lrsdl_cost(data, &d, &cand, &codes, params)?;
            accept_if_better(&mut d0, &mut cost, cand, cand_cost, "D0");
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
    let model = DictionaryModel::new(Method::Lrsdl, d, d0, &codes, params.clone())?;
    Ok(LrsdlState {
        model,
        coeffs: codes,
        history,
    })
}

/// Cost of a trained LRSDL or FDDL state on its training data.
pub fn state_cost(data: &LabeledDataset, state: &LrsdlState) -> Result<f64> {
    lrsdl_cost(data, &state.model.d, &state.model.d0, &state.coeffs, &state.model.params)
}

/// Per-sample decision with every class score.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// 1-based class label.
    pub label: usize,
    pub scores: Vec<f64>,
}

/// Global-coding classifier prepared once per model: codes a sample over
/// `[D D0]`, removes the shared part, and scores each class by
/// `w ‖ȳ − D_c x^c‖² + (1 − w) ‖x − m_c‖²`.
#[derive(Debug, Clone)]
pub struct Classifier {
    d: Array2<f64>,
    d0: Array2<f64>,
    dbar: Array2<f64>,
    gram: Array2<f64>,
    lipschitz: f64,
    class_means: Vec<Array1<f64>>,
    shared_mean: Array1<f64>,
    layout: BlockLayout,
    lambda1: f64,
    lambda2: f64,
    w: f64,
    opts: FistaOptions,
}

impl Classifier {
    pub fn new(model: &DictionaryModel, w: f64) -> Result<Self> {
        Self::with_lambda2(model, w, model.params.lambda2)
    }

    /// As [`Classifier::new`] with an explicit weight on `‖x0 − m0‖²`.
    pub fn with_lambda2(model: &DictionaryModel, w: f64, lambda2: f64) -> Result<Self> {
        if model.d.ncols() == 0 {
            return Err(Error::State("model has no class-specific atoms".into()));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidArgument(format!("w must lie in [0, 1], got {w}")));
        }
        let dbar = model.total_dict();
        let gram = dbar.t().dot(&dbar);
        let lipschitz = spectral_bound(&gram)? + lambda2 + 1.0;
        Ok(Classifier {
            d: model.d.clone(),
            d0: model.d0.clone(),
            dbar,
            gram,
            lipschitz,
            class_means: model.class_means.clone(),
            shared_mean: model.shared_mean.clone(),
            layout: model.layout.clone(),
            lambda1: model.params.lambda1,
            lambda2,
            w,
            opts: fista_opts(&model.params),
        })
    }

    /// Sparse code of one sample over `[D D0]` with the pull of `x0` toward `m0`.
    pub fn code(&self, y: &Array1<f64>) -> Result<Array1<f64>> {
        if y.len() != self.dbar.nrows() {
            return Err(Error::Dimension(format!(
                "sample has {} features, model expects {}",
                y.len(),
                self.dbar.nrows()
            )));
        }
        let kk = self.layout.total_atoms();
        let dty = self.dbar.t().dot(y).insert_axis(Axis(1));
        let m0 = self.shared_mean.clone().insert_axis(Axis(1));
        let init = Array2::zeros((self.dbar.ncols(), 1));
        let out = fista(
            |x| {
                let mut g = self.gram.dot(x) - &dty;
                if self.lambda2 != 0.0 {
                    let mut tail = g.slice_mut(s![kk.., ..]);
                    tail.scaled_add(self.lambda2, &(&x.slice(s![kk.., ..]) - &m0));
                }
                g
            },
            self.lipschitz,
            self.lambda1,
            &init,
            self.opts,
        )?;
        Ok(out.x.column(0).to_owned())
    }

    pub fn classify(&self, y: &Array1<f64>) -> Result<Prediction> {
        let code = self.code(y)?;
        let kk = self.layout.total_atoms();
        let x = code.slice(s![..kk]);
        let x0 = code.slice(s![kk..]);
        let y_bar = y - &self.d0.dot(&x0);
        let mut scores = Vec::with_capacity(self.layout.num_classes());
        for c in 0..self.layout.num_classes() {
            let ac = self.layout.atom_range(c);
            let r = &y_bar - &self.d.slice(s![.., ac.clone()]).dot(&x.slice(s![ac]));
            let dm = &x - &self.class_means[c];
            scores.push(self.w * r.dot(&r) + (1.0 - self.w) * dm.dot(&dm));
        }
        Ok(Prediction {
            label: argmin(&scores) + 1,
            scores,
        })
    }
}

/// Index of the smallest score; ties go to the smallest index.
pub(crate) fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

/// One-off classification of a single sample.
pub fn lrsdl_classify(model: &DictionaryModel, y: &Array1<f64>, w: f64) -> Result<Prediction> {
    if model.params.k0 == 0 && model.method == Method::Lrsdl {
        warn!("model has no shared atoms; classification reduces to FDDL");
    }
    Classifier::new(model, w)?.classify(y)
}

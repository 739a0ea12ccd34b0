//! Method dispatch for training and batch classification.

use log::warn;
use ndarray::Array2;

use crate::dlsi_copar::{copar_train, dlsi_train, CoparClassifier, DlsiClassifier};
use crate::fddl::fddl_train_variant;
use crate::lrsdl::{lrsdl_train, Classifier, Prediction};
use crate::model::{DictionaryModel, HyperParams, LabeledDataset, Method, TrainedModel, Variant};
use crate::{Error, Result};

/// Trains `method`; `variant` selects the dictionary update where a method has two.
pub fn train(data: &LabeledDataset, params: &HyperParams, method: Method, variant: Variant) -> Result<TrainedModel> {
    match method {
        Method::Lrsdl => {
            if params.k0 == 0 {
                warn!("k0 = 0: LRSDL without a shared dictionary is FDDL");
            }
            lrsdl_train(data, params)
        }
        Method::Fddl => fddl_train_variant(data, params, variant),
        Method::Dlsi => dlsi_train(data, params, variant),
        Method::Copar => copar_train(data, params, variant),
    }
}

/// The classification rule that belongs to a model's method.
#[derive(Debug, Clone)]
pub enum AnyClassifier {
    Global(Classifier),
    Local(DlsiClassifier),
    Shared(CoparClassifier),
}

impl AnyClassifier {
    /// `w` overrides the model's stored weight (used by LRSDL and FDDL only).
    pub fn new(model: &DictionaryModel, w: Option<f64>) -> Result<Self> {
        Ok(match model.method {
            Method::Lrsdl | Method::Fddl => AnyClassifier::Global(Classifier::new(model, w.unwrap_or(model.params.w))?),
            Method::Dlsi => AnyClassifier::Local(DlsiClassifier::new(model)?),
            Method::Copar => AnyClassifier::Shared(CoparClassifier::new(model)?),
        })
    }

    pub fn classify(&self, y: &ndarray::Array1<f64>) -> Result<Prediction> {
        match self {
            AnyClassifier::Global(c) => c.classify(y),
            AnyClassifier::Local(c) => c.classify(y),
            AnyClassifier::Shared(c) => c.classify(y),
        }
    }
}

/// Classifies every column of `y`.
pub fn classify_batch(model: &DictionaryModel, y: &Array2<f64>, w: Option<f64>) -> Result<Vec<Prediction>> {
    if y.nrows() != model.dim() {
        return Err(Error::Dimension(format!(
            "data has {} features, model expects {}",
            y.nrows(),
            model.dim()
        )));
    }
    let clf = AnyClassifier::new(model, w)?;
    y.columns().into_iter().map(|col| clf.classify(&col.to_owned())).collect()
}

/// Fraction of predictions matching `labels`.
pub fn accuracy(predictions: &[Prediction], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, &l)| p.label == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

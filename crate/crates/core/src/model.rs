//! Core data types and model serialization.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::blockmat::{column_mean, BlockLayout};
use crate::bench::BenchRecord;
use crate::synthdata::{read_matrix, write_matrix};
use crate::{Error, Result};

pub const FORMAT_VERSION: &str = "1";
/// Atom norm slack accepted when constructing a model in memory.
pub const ATOM_NORM_SLACK: f64 = 1e-9;
/// Atom norm slack accepted when loading a model from disk.
pub const LOAD_NORM_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lrsdl,
    Fddl,
    Dlsi,
    Copar,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lrsdl" => Ok(Method::Lrsdl),
            "fddl" => Ok(Method::Fddl),
            "dlsi" => Ok(Method::Dlsi),
            "copar" => Ok(Method::Copar),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Lrsdl => "lrsdl",
            Method::Fddl => "fddl",
            Method::Dlsi => "dlsi",
            Method::Copar => "copar",
        })
    }
}

/// Which dictionary-update algorithm a training run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Original,
    #[default]
    Efficient,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Variant::Original),
            "efficient" => Ok(Variant::Efficient),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

/// Feature matrix with 1-based labels, columns grouped by class.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    y: Array2<f64>,
    labels: Vec<usize>,
    counts: Vec<usize>,
    /// `permutation[j]` is the original column index of sorted column `j`.
    permutation: Vec<usize>,
}

impl LabeledDataset {
    /// Builds a dataset, stably sorting columns by label when needed.
    pub fn new(y: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if y.ncols() != labels.len() {
            return Err(Error::Validation(format!(
                "{} columns but {} labels",
                y.ncols(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Validation("dataset has no samples".into()));
        }
        if labels.contains(&0) {
            return Err(Error::Validation("labels are 1-based; found label 0".into()));
        }
        let c = *labels.iter().max().unwrap();
        let mut counts = vec![0usize; c];
        for &l in &labels {
            counts[l - 1] += 1;
        }
        if let Some(missing) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Validation(format!("class {} has no samples", missing + 1)));
        }
        let mut permutation: Vec<usize> = (0..labels.len()).collect();
        permutation.sort_by_key(|&j| labels[j]);
        let sorted = permutation.windows(2).all(|w| w[0] < w[1]);
        let (y, labels) = if sorted {
            (y, labels)
        } else {
            let ys = y.select(Axis(1), &permutation);
            let ls = permutation.iter().map(|&j| labels[j]).collect();
            (ys, ls)
        };
        Ok(LabeledDataset {
            y,
            labels,
            counts,
            permutation,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Block layout of this dataset with per-class dictionary size `k`.
    pub fn layout(&self, k: usize, k0: usize) -> Result<BlockLayout> {
        BlockLayout::uniform(self.counts.clone(), k, k0)
    }

    pub fn class_samples(&self, c: usize) -> ArrayView2<'_, f64> {
        let start: usize = self.counts[..c].iter().sum();
        self.y.slice(s![.., start..start + self.counts[c]])
    }
}

/// Regularisation weights and solver budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Sparsity weight.
    pub lambda1: f64,
    /// Fisher / code-similarity weight.
    pub lambda2: f64,
    /// Nuclear norm weight (LRSDL) or incoherence weight (DLSI, COPAR).
    pub eta: f64,
    /// Balance between residual and mean distance at classification.
    pub w: f64,
    /// Atoms per class-specific dictionary.
    pub k: usize,
    /// Atoms in the shared dictionary.
    pub k0: usize,
    pub max_outer_iters: usize,
    pub outer_tol: f64,
    pub fista_max_iters: usize,
    pub fista_tol: f64,
    pub odl_sweeps: usize,
    pub odl_tol: f64,
    pub admm_rho: f64,
    pub admm_max_iters: usize,
    pub admm_tol: f64,
    /// Alternations of the plain ODL initialisation.
    pub init_iters: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda1: 0.01,
            lambda2: 0.003,
            eta: 0.003,
            w: 0.5,
            k: 5,
            k0: 2,
            max_outer_iters: 25,
            outer_tol: 1e-5,
            fista_max_iters: 100,
            fista_tol: 1e-5,
            odl_sweeps: 50,
            odl_tol: 1e-6,
            admm_rho: 1.0,
            admm_max_iters: 100,
            admm_tol: 1e-6,
            init_iters: 5,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("eta", self.eta),
            ("outer_tol", self.outer_tol),
            ("fista_tol", self.fista_tol),
            ("odl_tol", self.odl_tol),
            ("admm_tol", self.admm_tol),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::Config(format!("w must lie in [0, 1], got {}", self.w)));
        }
        if !(self.admm_rho > 0.0) || !self.admm_rho.is_finite() {
            return Err(Error::Config(format!("admm_rho must be > 0, got {}", self.admm_rho)));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.fista_max_iters == 0 || self.odl_sweeps == 0 || self.admm_max_iters == 0 {
            return Err(Error::Config("iteration budgets must be >= 1".into()));
        }
        Ok(())
    }
}

/// Stacked sparse codes `[X; X0]` with block views.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub x: Array2<f64>,
    pub x0: Array2<f64>,
    layout: BlockLayout,
}

impl CoefficientMatrix {
    pub fn zeros(layout: &BlockLayout) -> Self {
        let n = layout.total_samples();
        CoefficientMatrix {
            x: Array2::zeros((layout.total_atoms(), n)),
            x0: Array2::zeros((layout.shared_atoms(), n)),
            layout: layout.clone(),
        }
    }

    pub fn new(x: Array2<f64>, x0: Array2<f64>, layout: &BlockLayout) -> Result<Self> {
        let n = layout.total_samples();
        if x.dim() != (layout.total_atoms(), n) || x0.dim() != (layout.shared_atoms(), n) {
            return Err(Error::Dimension(format!(
                "codes {:?} / {:?} do not match layout ({}+{})x{}",
                x.dim(),
                x0.dim(),
                layout.total_atoms(),
                layout.shared_atoms(),
                n
            )));
        }
        Ok(CoefficientMatrix {
            x,
            x0,
            layout: layout.clone(),
        })
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    /// `X_c`: all class-specific rows, columns of class `c`.
    pub fn class_cols(&self, c: usize) -> ArrayView2<'_, f64> {
        self.x.slice(s![.., self.layout.sample_range(c)])
    }

    /// `X^i`: rows of dictionary block `i`, all columns.
    pub fn atom_rows(&self, i: usize) -> ArrayView2<'_, f64> {
        self.x.slice(s![self.layout.atom_range(i), ..])
    }

    /// `X_c^i`.
    pub fn block(&self, i: usize, c: usize) -> ArrayView2<'_, f64> {
        self.x
            .slice(s![self.layout.atom_range(i), self.layout.sample_range(c)])
    }

    /// `X_c^0`.
    pub fn shared_block(&self, c: usize) -> ArrayView2<'_, f64> {
        self.x0.slice(s![.., self.layout.sample_range(c)])
    }

    pub fn stacked(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(0), &[self.x.view(), self.x0.view()]).expect("equal column counts")
    }

    pub fn from_stacked(stacked: &Array2<f64>, layout: &BlockLayout) -> Result<Self> {
        let k = layout.total_atoms();
        if stacked.nrows() != k + layout.shared_atoms() {
            return Err(Error::Dimension(format!(
                "stacked codes have {} rows, expected {}",
                stacked.nrows(),
                k + layout.shared_atoms()
            )));
        }
        Self::new(
            stacked.slice(s![..k, ..]).to_owned(),
            stacked.slice(s![k.., ..]).to_owned(),
            layout,
        )
    }

    /// Column means `m_c` of every `X_c` and the shared mean `m0`.
    pub fn means(&self) -> (Vec<Array1<f64>>, Array1<f64>) {
        let class = (0..self.layout.num_classes())
            .map(|c| column_mean(&self.class_cols(c).to_owned()))
            .collect();
        (class, column_mean(&self.x0))
    }
}

/// Trained dictionaries, coefficient means and the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryModel {
    pub method: Method,
    pub d: Array2<f64>,
    pub d0: Array2<f64>,
    pub class_means: Vec<Array1<f64>>,
    pub shared_mean: Array1<f64>,
    pub params: HyperParams,
    pub layout: BlockLayout,
}

impl DictionaryModel {
    pub fn new(
        method: Method,
        d: Array2<f64>,
        d0: Array2<f64>,
        codes: &CoefficientMatrix,
        params: HyperParams,
    ) -> Result<Self> {
        let (class_means, shared_mean) = codes.means();
        let model = DictionaryModel {
            method,
            d,
            d0,
            class_means,
            shared_mean,
            params,
            layout: codes.layout().clone(),
        };
        model.validate(ATOM_NORM_SLACK)?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.layout.num_classes()
    }

    pub fn class_dict(&self, c: usize) -> ArrayView2<'_, f64> {
        self.d.slice(s![.., self.layout.atom_range(c)])
    }

    /// Total dictionary `[D D0]`.
    pub fn total_dict(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(1), &[self.d.view(), self.d0.view()]).expect("equal row counts")
    }

    fn validate(&self, slack: f64) -> Result<()> {
        let l = &self.layout;
        let dim = self.d.nrows();
        if self.d.ncols() != l.total_atoms() {
            return Err(Error::Dimension(format!(
                "D has {} atoms, layout expects {}",
                self.d.ncols(),
                l.total_atoms()
            )));
        }
        if self.d0.dim() != (dim, l.shared_atoms()) {
            return Err(Error::Dimension(format!(
                "D0 is {:?}, expected ({dim}, {})",
                self.d0.dim(),
                l.shared_atoms()
            )));
        }
        if self.class_means.len() != l.num_classes()
            || self.class_means.iter().any(|m| m.len() != l.total_atoms())
            || self.shared_mean.len() != l.shared_atoms()
        {
            return Err(Error::Dimension("mean vectors do not match layout".into()));
        }
        for (name, dict) in [("D", &self.d), ("D0", &self.d0)] {
            for (j, col) in dict.columns().into_iter().enumerate() {
                let norm = col.dot(&col).sqrt();
                if !(norm <= 1.0 + slack) {
                    return Err(Error::Validation(format!(
                        "atom {j} of {name} has norm {norm}, exceeding 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A trained model with its final codes and outer-loop cost history.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: DictionaryModel,
    pub coeffs: CoefficientMatrix,
    pub history: Vec<BenchRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: String,
    method: Method,
    #[serde(rename = "C")]
    classes: usize,
    d: usize,
    n: Vec<usize>,
    #[serde(rename = "N")]
    total_samples: usize,
    k: Vec<usize>,
    k0: usize,
    params: HyperParams,
    files: ManifestFiles,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFiles {
    #[serde(rename = "D")]
    d: String,
    #[serde(rename = "D0")]
    d0: String,
    means: String,
}

/// Writes `manifest.json`, `D.txt`, `D0.txt` and `means.txt` into `dir`.
///
/// `means.txt` is a `(K + k0) x (C + 1)` matrix: column `c` holds `m_c` in its
/// first `K` rows, the last column holds `m0` in its last `k0` rows.
pub fn save_model(model: &DictionaryModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let l = &model.layout;
    let (k, k0, c) = (l.total_atoms(), l.shared_atoms(), l.num_classes());
    let mut means = Array2::zeros((k + k0, c + 1));
    for (j, m) in model.class_means.iter().enumerate() {
        means.slice_mut(s![..k, j]).assign(m);
    }
    means.slice_mut(s![k.., c]).assign(&model.shared_mean);

    let manifest = Manifest {
        version: FORMAT_VERSION.into(),
        method: model.method,
        classes: c,
        d: model.dim(),
        n: l.samples().to_vec(),
        total_samples: l.total_samples(),
        k: l.atoms().to_vec(),
        k0,
        params: model.params.clone(),
        files: ManifestFiles {
            d: "D.txt".into(),
            d0: "D0.txt".into(),
            means: "means.txt".into(),
        },
    };
    write_matrix(&dir.join("D.txt"), &model.d)?;
    write_matrix(&dir.join("D0.txt"), &model.d0)?;
    write_matrix(&dir.join("means.txt"), &means)?;
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_model(dir: &Path) -> Result<DictionaryModel> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let version = raw.get("version").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version.to_string(),
        });
    }
    let manifest: Manifest = serde_json::from_value(raw).map_err(|e| Error::Parse {
        path: path.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    if manifest.n.len() != manifest.classes || manifest.k.len() != manifest.classes {
        return Err(Error::Validation(format!(
            "manifest declares {} classes but lists {} sample counts and {} dictionary sizes",
            manifest.classes,
            manifest.n.len(),
            manifest.k.len()
        )));
    }
    if manifest.n.iter().sum::<usize>() != manifest.total_samples {
        return Err(Error::Validation(format!(
            "manifest N = {} but per-class counts sum to {}",
            manifest.total_samples,
            manifest.n.iter().sum::<usize>()
        )));
    }
    let layout = BlockLayout::new(manifest.n.clone(), manifest.k.clone(), manifest.k0)
        .map_err(|e| Error::Validation(e.to_string()))?;

    let d = read_matrix(&dir.join(&manifest.files.d))?;
    let d0 = read_matrix(&dir.join(&manifest.files.d0))?;
    let means = read_matrix(&dir.join(&manifest.files.means))?;
    let (k, k0, c) = (layout.total_atoms(), layout.shared_atoms(), layout.num_classes());
    if d.dim() != (manifest.d, k) {
        return Err(Error::Dimension(format!("D.txt is {:?}, manifest expects ({}, {k})", d.dim(), manifest.d)));
    }
    if d0.dim() != (manifest.d, k0) {
        return Err(Error::Dimension(format!(
            "D0.txt is {:?}, manifest expects ({}, {k0})",
            d0.dim(),
            manifest.d
        )));
    }
    if means.dim() != (k + k0, c + 1) {
        return Err(Error::Dimension(format!(
            "means.txt is {:?}, manifest expects ({}, {})",
            means.dim(),
            k + k0,
            c + 1
        )));
    }
    let class_means = (0..c).map(|j| means.slice(s![..k, j]).to_owned()).collect();
    let shared_mean = means.slice(s![k.., c]).to_owned();
    let model = DictionaryModel {
        method: manifest.method,
        d,
        d0,
        class_means,
        shared_mean,
        params: manifest.params,
        layout,
    };
    model.validate(LOAD_NORM_SLACK)?;
    Ok(model)
}

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::Svd;
use crate::model::LabeledDataset;
use crate::{Error, Result};

/// Parameters of the synthetic shared-feature problem.
///
/// Every sample of class `c` is a positive combination of the class's own
/// localized elements plus the shared elements, followed by Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub classes: usize,
    /// Feature dimension; a perfect square is laid out as a square image,
    /// anything else as a single row.
    pub dim: usize,
    pub elems_per_class: usize,
    pub shared_elems: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Noise standard deviation relative to the RMS of each clean sample.
    pub noise_sigma: f64,
    pub coef_low: f64,
    pub coef_high: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 4,
            dim: 400,
            elems_per_class: 2,
            shared_elems: 1,
            train_per_class: 200,
            test_per_class: 800,
            noise_sigma: 0.05,
            coef_low: 0.5,
            coef_high: 1.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("classes", self.classes),
            ("dim", self.dim),
            ("elems_per_class", self.elems_per_class),
            ("train_per_class", self.train_per_class),
            ("test_per_class", self.test_per_class),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.coef_low <= self.coef_high) || !self.coef_low.is_finite() || !self.coef_high.is_finite() {
            return Err(Error::Config(format!(
                "coefficient range [{}, {}] is empty",
                self.coef_low, self.coef_high
            )));
        }
        Ok(())
    }

    fn grid(&self) -> (usize, usize) {
        let side = (self.dim as f64).sqrt().round() as usize;
        if side * side == self.dim {
            (side, side)
        } else {
            (1, self.dim)
        }
    }
}

/// Planted unit-norm elements used to build the data.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// One `dim x elems_per_class` matrix per class.
    pub class_elems: Vec<Array2<f64>>,
    /// `dim x shared_elems`.
    pub shared: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub truth: GroundTruth,
}

fn random_patch(
    rng: &mut ChaCha8Rng,
    width: usize,
    cell: (usize, usize),
    cell_size: (usize, usize),
    dim: usize,
) -> Array1<f64> {
    let (ch, cw) = cell_size;
    let ph = rng.random_range(ch.div_ceil(2)..=ch);
    let pw = rng.random_range(cw.div_ceil(2)..=cw);
    let top = cell.0 * ch + rng.random_range(0..=ch - ph);
    let left = cell.1 * cw + rng.random_range(0..=cw - pw);
    let mut v = Array1::<f64>::zeros(dim);
    for r in top..top + ph {
        for c in left..left + pw {
            v[r * width + c] = rng.random_range(0.5..=1.0);
        }
    }
    let norm = v.dot(&v).sqrt();
    v / norm
}

fn plant_elements(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<GroundTruth> {
    let (height, width) = spec.grid();
    let total = spec.classes * spec.elems_per_class + spec.shared_elems;
    let (gr, gc) = if height == 1 {
        (1, total)
    } else {
        let gr = (total as f64).sqrt().ceil() as usize;
        (gr, total.div_ceil(gr))
    };
    if gr > height || gc > width {
        return Err(Error::Config(format!(
            "{total} disjoint supports do not fit in a {height}x{width} grid"
        )));
    }
    let cell_size = (height / gr, width / gc);
    let mut cells: Vec<(usize, usize)> = (0..gr).flat_map(|r| (0..gc).map(move |c| (r, c))).collect();
    cells.shuffle(rng);

    let mut next = cells.into_iter();
    let mut class_elems = Vec::with_capacity(spec.classes);
    for _ in 0..spec.classes {
        let mut m = Array2::zeros((spec.dim, spec.elems_per_class));
        for e in 0..spec.elems_per_class {
            let cell = next.next().expect("enough cells");
            m.column_mut(e).assign(&random_patch(rng, width, cell, cell_size, spec.dim));
        }
        class_elems.push(m);
    }
    let mut shared = Array2::zeros((spec.dim, spec.shared_elems));
    for e in 0..spec.shared_elems {
        let cell = next.next().expect("enough cells");
        shared.column_mut(e).assign(&random_patch(rng, width, cell, cell_size, spec.dim));
    }
    Ok(GroundTruth { class_elems, shared })
}

/// Generates train and test sets plus the planted elements. Deterministic in `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = plant_elements(spec, &mut rng)?;

    let per_class = spec.train_per_class + spec.test_per_class;
    let total = spec.classes * per_class;
    let mut clean = Array2::zeros((spec.dim, total));
    for c in 0..spec.classes {
        for i in 0..per_class {
            let mut col = clean.column_mut(c * per_class + i);
            for elems in [&truth.class_elems[c], &truth.shared] {
                for e in elems.columns() {
                    let a = if spec.coef_low == spec.coef_high {
                        spec.coef_low
                    } else {
                        rng.random_range(spec.coef_low..spec.coef_high)
                    };
                    col.scaled_add(a, &e);
                }
            }
        }
    }
    let mut noisy = clean;
    if spec.noise_sigma > 0.0 {
        for mut col in noisy.columns_mut() {
            let rms = (col.dot(&col) / spec.dim as f64).sqrt();
            let std = spec.noise_sigma * rms;
            for v in col.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += std * z;
            }
        }
    }

    let mut train_idx = Vec::with_capacity(spec.classes * spec.train_per_class);
    let mut test_idx = Vec::with_capacity(spec.classes * spec.test_per_class);
    for c in 0..spec.classes {
        let base = c * per_class;
        train_idx.extend(base..base + spec.train_per_class);
        test_idx.extend(base + spec.train_per_class..base + per_class);
    }
    let pick = |idx: &[usize]| -> Result<LabeledDataset> {
        let y = noisy.select(ndarray::Axis(1), idx);
        let labels = idx.iter().map(|&j| j / per_class + 1).collect();
        LabeledDataset::new(y, labels)
    };
    Ok(SynthData {
        train: pick(&train_idx)?,
        test: pick(&test_idx)?,
        truth,
    })
}

/// Seeded training instance of a given size, used by the benchmark harness.
pub fn generate_instance(classes: usize, dim: usize, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let spec = SynthSpec {
        classes,
        dim,
        train_per_class: per_class,
        test_per_class: 1,
        seed,
        ..SynthSpec::default()
    };
    Ok(generate(&spec)?.train)
}

/// Absolute correlation between a planted element and the leading left
/// singular vector of a learned dictionary (both unit-normalised).
pub fn recovery_correlation(planted: &Array1<f64>, learned: &Array2<f64>) -> Result<f64> {
    if learned.ncols() == 0 {
        return Ok(0.0);
    }
    if learned.nrows() != planted.len() {
        return Err(Error::Dimension(format!(
            "planted element has length {}, dictionary has {} rows",
            planted.len(),
            learned.nrows()
        )));
    }
    let svd = Svd::new(learned)?;
    if svd.s[0] == 0.0 {
        return Ok(0.0);
    }
    let u = svd.u.column(0);
    let pn = planted.dot(planted).sqrt();
    Ok((u.dot(planted) / pn).abs())
}

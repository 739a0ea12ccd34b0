//! Convergence records and the original-versus-efficient benchmark harness.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::dlsi_copar::{copar_train_from, dlsi_train_from};
use crate::fddl::{fddl_train_from, init_class_dicts};
use crate::lrsdl::init_shared_dict;
use crate::model::{HyperParams, Variant};
use crate::synthdata::generate_instance;
use crate::{Error, Result};


/// One outer iteration: objective value and wall-clock seconds since the start of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRecord {
    pub iter: usize,
    pub cost: f64,
    pub elapsed: f64,
}

/// Monotonic wall clock started at construction.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch(Instant);

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch(Instant::now())
    }

    pub fn elapsed(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

impl Default for Stopwatch {
    fn default() -> Self {
        Self::start()
    }
}

/// Which original/efficient pair of dictionary updates to compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    FddlD,
    DlsiD,
    CoparD,
}

impl std::str::FromStr for Comparison {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fddl-d" => Ok(Comparison::FddlD),
            "dlsi-d" => Ok(Comparison::DlsiD),
            "copar-d" => Ok(Comparison::CoparD),
            other => Err(Error::InvalidArgument(format!(
                "unknown comparison '{other}' (expected fddl-d, dlsi-d or copar-d)"
            ))),
        }
    }
}

impl std::fmt::Display for Comparison {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Comparison::FddlD => "fddl-d",
            Comparison::DlsiD => "dlsi-d",
            Comparison::CoparD => "copar-d",
        })
    }
}

/// Size of the generated benchmark instance and the run length.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub compare: Comparison,
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub k: usize,
    pub k0: usize,
    pub iters: usize,
    pub seed: u64,
    pub params: HyperParams,
}

impl BenchConfig {
    pub fn new(compare: Comparison) -> Self {
        BenchConfig {
            compare,
            classes: 10,
            dim: 100,
            per_class: 7,
            k: 7,
            k0: 2,
            iters: 20,
            seed: 0,
            params: HyperParams::default(),
        }
    }

    fn hyper(&self) -> HyperParams {
        let k0 = if self.compare == Comparison::CoparD { self.k0.max(1) } else { 0 };
        HyperParams {
            k: self.k,
            k0,
            max_outer_iters: self.iters,
            outer_tol: 0.0,
            seed: self.seed,
            ..self.params.clone()
        }
    }
}

/// Cost history of one variant.
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub variant: Variant,
    pub history: Vec<BenchRecord>,
}

impl BenchRun {
    pub fn final_cost(&self) -> Option<f64> {
        self.history.last().map(|r| r.cost)
    }

    pub fn total_time(&self) -> f64 {
        self.history.last().map_or(0.0, |r| r.elapsed)
    }
}

#[derive(Debug, Clone)]
pub struct BenchSummary {
    pub compare: Comparison,
    pub original: BenchRun,
    pub efficient: BenchRun,
}

impl BenchSummary {
    /// Original total time over efficient total time.
    pub fn speedup(&self) -> f64 {
        self.original.total_time() / self.efficient.total_time()
    }

    /// `|cost_eff − cost_orig| / |cost_orig|` at the last iteration.
    pub fn relative_cost_gap(&self) -> Option<f64> {
        let (o, e) = (self.original.final_cost()?, self.efficient.final_cost()?);
        Some((e - o).abs() / o.abs().max(f64::MIN_POSITIVE))
    }

    pub fn report(&self) -> String {
        let fmt = |c: Option<f64>| c.map_or_else(|| "n/a".to_string(), |v| format!("{v:.10e}"));
        format!(
            "{}: original final cost {} in {:.3}s; efficient final cost {} in {:.3}s; speedup {}",
            self.compare,
            fmt(self.original.final_cost()),
            self.original.total_time(),
            fmt(self.efficient.final_cost()),
            self.efficient.total_time(),
            if self.efficient.history.is_empty() {
                "n/a".to_string()
            } else {
                format!("{:.2}x", self.speedup())
            }
        )
    }
}

/// Runs both variants from one shared initialisation on a generated instance.
pub fn run_comparison(cfg: &BenchConfig) -> Result<BenchSummary> {
    let params = cfg.hyper();
    params.validate()?;
    let data = generate_instance(cfg.classes, cfg.dim, cfg.per_class, cfg.seed)?;
    let d = init_class_dicts(&data, &params)?;
    let run = |variant: Variant| -> Result<BenchRun> {
        let trained = match cfg.compare {
            Comparison::FddlD => fddl_train_from(&data, &params, d.clone(), variant)?,
            Comparison::DlsiD => dlsi_train_from(&data, &params, d.clone(), variant)?,
            Comparison::CoparD => {
                let d0 = init_shared_dict(&data, &params)?;
                copar_train_from(&data, &params, d.clone(), d0, variant)?
            }
        };
        Ok(BenchRun {
            variant,
            history: trained.history,
        })
    };
    let original = run(Variant::Original)?;
    let efficient = run(Variant::Efficient)?;
    Ok(BenchSummary {
        compare: cfg.compare,
        original,
        efficient,
    })
}

/// Writes `variant,iter,cost,elapsed_sec` rows for both runs.
pub fn write_curves_csv(path: &Path, summary: &BenchSummary) -> Result<()> {
    let mut out = String::from("variant,iter,cost,elapsed_sec\n");
    for run in [&summary.original, &summary.efficient] {
        let name = match run.variant {
            Variant::Original => "original",
            Variant::Efficient => "efficient",
        };
        for r in &run.history {
            out.push_str(&format!("{name},{},{:.17e},{:.6}\n", r.iter, r.cost, r.elapsed));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes an `iter,cost,elapsed_sec` training history.
pub fn write_history_csv(path: &Path, history: &[BenchRecord]) -> Result<()> {
    let mut out = String::from("iter,cost,elapsed_sec\n");
    for r in history {
        out.push_str(&format!("{},{:.17e},{:.6}\n", r.iter, r.cost, r.elapsed));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

//! `lrsdl` command-line interface.
//!
//! Exit codes: 0 success, 2 argument or configuration error, 3 data error
//! (I/O, parse, validation, dimension, format version), 4 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lrsdl::bench::{run_comparison, write_curves_csv, write_history_csv, BenchConfig, Comparison};
use lrsdl::complexity::{evaluate, ComplexityInputs};
use lrsdl::model::{load_model, save_model, Variant};
use lrsdl::pipeline::{accuracy, classify_batch, train};
use lrsdl::synthdata::{generate, read_labels, read_matrix, write_labels, write_matrix, SynthSpec};
use lrsdl::{Error, HyperParams, LabeledDataset, Method};

#[derive(Parser)]
#[command(name = "lrsdl", version, about = "Discriminative dictionary learning with a low-rank shared dictionary")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and save it to a directory.
    Train(TrainArgs),
    /// Classify samples with a saved model.
    Classify(ClassifyArgs),
    /// Generate a synthetic shared-feature dataset.
    Synth(SynthArgs),
    /// Compare original and efficient dictionary updates.
    Bench(BenchArgs),
    /// Evaluate the analytic complexity formulas.
    Complexity(ComplexityArgs),
}

/// Every field is optional so that a `--config` file can fill in what the
/// command line leaves out; defaults are applied after merging.
#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TrainArgs {
    /// JSON file whose keys are flag names; explicit flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// lrsdl, fddl, dlsi or copar (default lrsdl).
    #[arg(long)]
    method: Option<Method>,
    /// Feature matrix file (d x N).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Label file, one 1-based label per sample.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k0: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    /// Maximum outer iterations.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output model directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// original or efficient dictionary update (default efficient).
    #[arg(long)]
    variant: Option<Variant>,
    /// Cost history CSV (iter,cost,elapsed_sec).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ClassifyArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Model directory written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Optional true labels; enables the accuracy field.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Override the model's residual/mean balance.
    #[arg(long)]
    w: Option<f64>,
    /// JSON report path (standard output when omitted).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SynthArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Number of classes.
    #[arg(long = "C")]
    #[serde(rename = "C")]
    classes: Option<usize>,
    /// Feature dimension.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    elems_per_class: Option<usize>,
    #[arg(long)]
    shared_elems: Option<usize>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    test_per_class: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    coef_low: Option<f64>,
    #[arg(long)]
    coef_high: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct BenchArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// fddl-d, dlsi-d or copar-d.
    #[arg(long)]
    compare: Option<String>,
    #[arg(long = "C")]
    #[serde(rename = "C")]
    classes: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// Samples per class.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Shared atoms (copar-d only).
    #[arg(long)]
    k0: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Curves CSV (variant,iter,cost,elapsed_sec).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ComplexityArgs {
    #[arg(long = "C", default_value_t = 100)]
    classes: u64,
    #[arg(long, default_value_t = 20)]
    n: u64,
    #[arg(long, default_value_t = 10)]
    k: u64,
    #[arg(long, default_value_t = 50)]
    q: u64,
    #[arg(long, default_value_t = 500)]
    d: u64,
    #[arg(long, default_value_t = 50)]
    q2: u64,
}

/// A failed command: exit code plus the message for standard error.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>, subcommand: &str) -> Self {
        let mut cmd = Cli::command();
        cmd.build();
        let usage = cmd
            .find_subcommand_mut(subcommand)
            .map(|c| c.render_usage().to_string())
            .unwrap_or_default();
        Failure {
            code: 2,
            message: format!("{}\n\n{usage}", message.into()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::Config(_) => 2,
            Error::Numerical { .. } => 4,
            Error::Partition(_)
            | Error::Dimension(_)
            | Error::Io { .. }
            | Error::Parse { .. }
            | Error::Version { .. }
            | Error::Validation(_)
            | Error::State(_) => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Overlays the explicitly given flags onto the `--config` file contents.
fn merge_config<T: Serialize + DeserializeOwned>(args: T, config: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = config else {
        return Ok(args);
    };
    let fail = |msg: String| Failure {
        code: 2,
        message: format!("config {}: {msg}", path.display()),
    };
    let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
    let mut base: serde_json::Value = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
    let base_obj = base
        .as_object_mut()
        .ok_or_else(|| fail("expected a JSON object".into()))?;
    let flags = serde_json::to_value(&args).map_err(|e| fail(e.to_string()))?;
    if let serde_json::Value::Object(flags) = flags {
        for (key, value) in flags {
            if !value.is_null() {
                base_obj.insert(key, value);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| fail(e.to_string()))
}

fn load_dataset(data: &Path, labels: &Path) -> Result<LabeledDataset, Failure> {
    let y = read_matrix(data)?;
    let labels = read_labels(labels)?;
    Ok(LabeledDataset::new(y, labels)?)
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let config = args.config.clone();
    let a = merge_config(args, config.as_deref())?;
    let data = a.data.ok_or_else(|| Failure::usage("missing --data", "train"))?;
    let labels = a.labels.ok_or_else(|| Failure::usage("missing --labels", "train"))?;
    let out = a.out.ok_or_else(|| Failure::usage("missing --out", "train"))?;
    let method = a.method.unwrap_or(Method::Lrsdl);
    let variant = a.variant.unwrap_or_default();

    let defaults = HyperParams::default();
    let params = HyperParams {
        k: a.k.unwrap_or(defaults.k),
        k0: a.k0.unwrap_or(match method {
            Method::Lrsdl | Method::Copar => defaults.k0,
            Method::Fddl | Method::Dlsi => 0,
        }),
        lambda1: a.lambda1.unwrap_or(defaults.lambda1),
        lambda2: a.lambda2.unwrap_or(defaults.lambda2),
        eta: a.eta.unwrap_or(defaults.eta),
        w: a.w.unwrap_or(defaults.w),
        max_outer_iters: a.iters.unwrap_or(defaults.max_outer_iters),
        seed: a.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    params.validate()?;

    let dataset = load_dataset(&data, &labels)?;
    let trained = train(&dataset, &params, method, variant)?;
    save_model(&trained.model, &out)?;
    if let Some(path) = a.history {
        write_history_csv(&path, &trained.history)?;
    }
    match trained.history.last() {
        Some(r) => println!(
            "{method}: {} iterations, final cost {:.10e}, {:.3}s; model saved to {}",
            trained.history.len(),
            r.cost,
            r.elapsed,
            out.display()
        ),
        None => println!("{method}: no iterations run; model saved to {}", out.display()),
    }
    Ok(())
}

#[derive(Serialize)]
struct SampleReport {
    #[serde(rename = "true", skip_serializing_if = "Option::is_none")]
    truth: Option<usize>,
    predicted: usize,
    scores: Vec<f64>,
}

#[derive(Serialize)]
struct ClassifyReport {
    per_sample: Vec<SampleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
}

fn cmd_classify(args: ClassifyArgs) -> CmdResult {
    let config = args.config.clone();
    let a = merge_config(args, config.as_deref())?;
    let model_dir = a.model.ok_or_else(|| Failure::usage("missing --model", "classify"))?;
    let data = a.data.ok_or_else(|| Failure::usage("missing --data", "classify"))?;
    if let Some(w) = a.w {
        if !(0.0..=1.0).contains(&w) {
            return Err(Failure::usage(format!("--w must lie in [0, 1], got {w}"), "classify"));
        }
    }

    let model = load_model(&model_dir)?;
    let y = read_matrix(&data)?;
    let truth = a.labels.as_deref().map(read_labels).transpose()?;
    if let Some(t) = &truth {
        if t.len() != y.ncols() {
            return Err(Error::Validation(format!("{} samples but {} labels", y.ncols(), t.len())).into());
        }
    }
    let predictions = classify_batch(&model, &y, a.w)?;
    let acc = truth.as_deref().map(|t| accuracy(&predictions, t)).transpose()?;
    let report = ClassifyReport {
        per_sample: predictions
            .into_iter()
            .enumerate()
            .map(|(j, p)| SampleReport {
                truth: truth.as_ref().map(|t| t[j]),
                predicted: p.label,
                scores: p.scores,
            })
            .collect(),
        accuracy: acc,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match &a.report {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::from(Error::Io {
            path: path.clone(),
            source: e,
        }))?,
        None => println!("{text}"),
    }
    if let Some(acc) = acc {
        eprintln!("accuracy {acc:.4}");
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CmdResult {
    let config = args.config.clone();
    let a = merge_config(args, config.as_deref())?;
    let out = a.out.ok_or_else(|| Failure::usage("missing --out", "synth"))?;
    let defaults = SynthSpec::default();
    let spec = SynthSpec {
        classes: a.classes.unwrap_or(defaults.classes),
        dim: a.d.unwrap_or(defaults.dim),
        elems_per_class: a.elems_per_class.unwrap_or(defaults.elems_per_class),
        shared_elems: a.shared_elems.unwrap_or(defaults.shared_elems),
        train_per_class: a.train_per_class.unwrap_or(defaults.train_per_class),
        test_per_class: a.test_per_class.unwrap_or(defaults.test_per_class),
        noise_sigma: a.noise_sigma.unwrap_or(defaults.noise_sigma),
        coef_low: a.coef_low.unwrap_or(defaults.coef_low),
        coef_high: a.coef_high.unwrap_or(defaults.coef_high),
        seed: a.seed.unwrap_or(defaults.seed),
    };
    let synth = generate(&spec)?;
    std::fs::create_dir_all(&out).map_err(|e| Failure::from(Error::Io {
        path: out.clone(),
        source: e,
    }))?;
    write_matrix(&out.join("train_data.txt"), synth.train.features())?;
    write_labels(&out.join("train_labels.txt"), synth.train.labels())?;
    write_matrix(&out.join("test_data.txt"), synth.test.features())?;
    write_labels(&out.join("test_labels.txt"), synth.test.labels())?;
    let class_elems: Vec<_> = synth.truth.class_elems.iter().map(|m| m.view()).collect();
    let stacked = ndarray::concatenate(ndarray::Axis(1), &class_elems).expect("equal row counts");
    write_matrix(&out.join("truth_class.txt"), &stacked)?;
    write_matrix(&out.join("truth_shared.txt"), &synth.truth.shared)?;
    println!(
        "wrote {} training and {} test samples to {}",
        synth.train.labels().len(),
        synth.test.labels().len(),
        out.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let config = args.config.clone();
    let a = merge_config(args, config.as_deref())?;
    let compare: Comparison = a
        .compare
        .as_deref()
        .ok_or_else(|| Failure::usage("missing --compare", "bench"))?
        .parse()?;
    let defaults = BenchConfig::new(compare);
    let cfg = BenchConfig {
        classes: a.classes.unwrap_or(defaults.classes),
        dim: a.d.unwrap_or(defaults.dim),
        per_class: a.n.unwrap_or(defaults.per_class),
        k: a.k.unwrap_or(defaults.k),
        k0: a.k0.unwrap_or(defaults.k0),
        iters: a.iters.unwrap_or(defaults.iters),
        seed: a.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let summary = run_comparison(&cfg)?;
    if let Some(path) = &a.out {
        write_curves_csv(path, &summary)?;
    }
    println!("{}", summary.report());
    Ok(())
}

fn cmd_complexity(a: ComplexityArgs) -> CmdResult {
    let inputs = ComplexityInputs {
        c: a.classes,
        n: a.n,
        k: a.k,
        q: a.q,
        d: a.d,
        q2: a.q2,
    };
    let rows = evaluate(&inputs)?;
    let name_w = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let formula_w = rows.iter().map(|r| r.formula.len()).max().unwrap_or(0);
    for r in rows {
        println!("{:<name_w$}  {:<formula_w$}  {:.4e}", r.name, r.formula, r.value);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Complexity(a) => cmd_complexity(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

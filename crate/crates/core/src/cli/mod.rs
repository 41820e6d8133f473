//! `peakunroll` command line: `gen`, `train`, `eval` and `report`.
//!
//! Every command writes a JSON echo of its fully resolved configuration next
//! to its outputs. Outputs contain no timestamps, so reruns with the same
//! inputs are byte-identical; timings go to stderr only.

mod report;
mod svg;

pub use report::{build_report, Report};
pub use svg::scatter_svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{evaluate_dataset, EvalConfig, Restorer, TsnrConvention, DEFAULT_THETA, METRIC_CSV_HEADER};
use crate::operators::ForwardModel;
use crate::sigmodel::{generate_dataset, load_dataset, DatasetSpec, SignalTriple, Split, PRESET_NAMES};
use crate::solvers::{hq_solve, ista_solve, primal_dual_solve, HqConfig, IstaConfig, PdConfig};
use crate::unrolled::{
    train, Checkpoint, History, LossTarget, ModelInit, TrainConfig, UnrolledModel, Variant,
};

/// Overrides the root that relative `--out` paths are resolved against.
pub const OUT_ROOT_ENV: &str = "PEAKUNROLL_OUT_ROOT";

/// Stable process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const COMPAT: i32 = 5;
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidSpec(_) | Error::Placement { .. } | Error::LengthMismatch { .. } => exit::USAGE,
        Error::NonConvergence { .. }
        | Error::Divergence { .. }
        | Error::Infeasible { .. }
        | Error::NonFinite { .. }
        | Error::TrainingAborted { .. }
        | Error::ZeroReference
        | Error::EmptySupport
        | Error::ZeroDenominator => exit::NUMERIC,
        Error::Record { source, .. } => exit_code(source),
        Error::Incompatible(_) => exit::COMPAT,
        Error::Format { .. } | Error::Io { .. } | Error::Json(_) => exit::IO,
    }
}

#[derive(Debug, Parser)]
#[command(name = "peakunroll", version, about = "Unrolled restoration of sparse chromatographic signals")]
pub struct Cli {
    /// Worker threads for record-level parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset from a preset or a JSON spec.
    Gen(GenArgs),
    /// Train an unrolled network.
    Train(TrainArgs),
    /// Score a method on a dataset split.
    Eval(EvalArgs),
    /// Merge metric CSVs into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// One of D0..D6.
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<String>,
    /// JSON file holding a full dataset spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Signal length override.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    /// Dataset name stored in the manifest (default: preset or spec file stem).
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    UIsta,
    UPd,
    UHq,
    Ista,
    Pd,
    Hq,
    Oracle,
}

impl MethodArg {
    pub fn name(self) -> &'static str {
        match self {
            MethodArg::UIsta => "u-ista",
            MethodArg::UPd => "u-pd",
            MethodArg::UHq => "u-hq",
            MethodArg::Ista => "ista",
            MethodArg::Pd => "pd",
            MethodArg::Hq => "hq",
            MethodArg::Oracle => "oracle",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            MethodArg::UIsta => Some(Variant::Ista),
            MethodArg::UPd => Some(Variant::Pd),
            MethodArg::UHq => Some(Variant::Hq),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Peaks,
    Spikes,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, value_enum, default_value_t = LossArg::Peaks)]
    pub loss: LossArg,
    /// CG iterations per half-quadratic layer.
    #[arg(long, default_value_t = ModelInit::DEFAULT_CG_ITERS)]
    pub cg_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TsnrArg {
    EnergyRatio,
    Literal,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Trained network; unrolled methods without one run at their defaults.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Layer count for an unrolled method without checkpoint.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Iteration budget for classical methods.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    #[arg(long, value_enum, default_value_t = TsnrArg::EnergyRatio)]
    pub tsnr: TsnrArg,
    /// Also write an SVG height scatter.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding metric CSVs.
    pub results: PathBuf,
    /// Where to write the markdown summary (default: RESULTS/report.md).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match run(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::spec("--threads must be >= 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

/// Resolves `path` against the output-root override when it is relative.
pub fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if path.is_relative() && !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct GenEcho<'a> {
    command: &'static str,
    name: &'a str,
    spec: &'a DatasetSpec,
}

pub fn cmd_gen(a: &GenArgs) -> Result<()> {
    let (mut spec, default_name) = match (&a.preset, &a.spec) {
        (Some(p), _) => {
            let spec = DatasetSpec::preset(p).ok_or_else(|| {
                Error::spec(format!("unknown preset {p:?} (expected one of {})", PRESET_NAMES.join(", ")))
            })?;
            (spec, p.clone())
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let spec: DatasetSpec =
                serde_json::from_str(&text).map_err(|e| Error::spec(format!("{}: {e}", path.display())))?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
            (spec, stem.unwrap_or_else(|| "custom".into()))
        }
        (None, None) => return Err(Error::spec("one of --preset or --spec is required")),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(c) = a.train {
        spec.count_train = c;
    }
    if let Some(c) = a.val {
        spec.count_val = c;
    }
    if let Some(c) = a.test {
        spec.count_test = c;
    }
    spec.validate()?;
    let name = a.name.clone().unwrap_or(default_name);
    let out = resolve_out(&a.out);
    let manifest = generate_dataset(&spec, &name, &out)?;
    write_json(
        &out.join("gen_config.json"),
        &GenEcho {
            command: "gen",
            name: &name,
            spec: &spec,
        },
    )?;
    println!("{}", out.join("manifest.json").display());
    for e in &manifest.splits {
        println!("{} {} {} {}", e.split.name(), e.file, e.records, e.sha256);
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainEcho<'a> {
    command: &'static str,
    method: &'static str,
    k: usize,
    data: String,
    dataset: &'a str,
    cg_iters: usize,
    init_chi: f64,
    init_rho: f64,
    train: TrainConfig,
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let variant = a
        .method
        .variant()
        .ok_or_else(|| Error::spec(format!("{} is not trainable", a.method.name())))?;
    if a.k == 0 {
        return Err(Error::spec("K must be >= 1"));
    }
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch.unwrap_or(defaults.batch_size),
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        seed: a.seed.unwrap_or(defaults.seed),
        patience: a.patience,
        loss: match a.loss {
            LossArg::Peaks => LossTarget::Peaks,
            LossArg::Spikes => LossTarget::Spikes,
        },
        ..defaults
    };
    cfg.validate()?;

    let ds = load_dataset(&a.data)?;
    let spec = ds.spec().clone();
    let train_set = ds.load_split(Split::Train)?;
    let val_set = ds.load_split(Split::Val)?;
    let op = Arc::new(spec.forward_model()?);
    let init = ModelInit {
        cg_iters: a.cg_iters,
        ..ModelInit::defaults(spec.sigma_e, spec.n)
    };
    let model = UnrolledModel::new(variant, a.k, op, init)?;
    let (model, history) = train(model, &train_set, &val_set, &cfg)?;

    let out = resolve_out(&a.out);
    create_dir(&out)?;
    write_json(
        &out.join("train_config.json"),
        &TrainEcho {
            command: "train",
            method: variant.name(),
            k: a.k,
            data: a.data.display().to_string(),
            dataset: ds.name(),
            cg_iters: a.cg_iters,
            init_chi: init.chi,
            init_rho: init.rho,
            train: cfg,
        },
    )?;
    let ckpt = out.join("checkpoint.json");
    Checkpoint::from_model(&model, Some(cfg), Some(history.clone())).save(&ckpt)?;
    write_text(&out.join("history.csv"), &history_csv(&history))?;
    eprintln!(
        "best epoch {} val loss {:.6e} (initial {:.6e})",
        history.best_epoch, history.best_val_loss, history.initial_val_loss
    );
    println!("{}", ckpt.display());
    Ok(())
}

pub fn history_csv(h: &History) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    let _ = writeln!(s, "0,,{}", h.initial_val_loss);
    for e in &h.epochs {
        let _ = writeln!(s, "{},{},{}", e.epoch, e.train_loss, e.val_loss);
    }
    s
}

/// A method ready to restore records of one dataset.
pub enum Method {
    Oracle,
    Unrolled(UnrolledModel),
    Ista(IstaConfig, Arc<ForwardModel>),
    Pd(PdConfig, Arc<ForwardModel>),
    Hq(HqConfig, Arc<ForwardModel>),
}

pub struct NamedMethod {
    pub name: String,
    pub method: Method,
}

impl Restorer for NamedMethod {
    fn name(&self) -> &str {
        &self.name
    }

    fn restore(&self, record: &SignalTriple) -> Result<Vec<f64>> {
        let z = &record.z;
        match &self.method {
            Method::Oracle => Ok(record.p.clone()),
            Method::Unrolled(m) => Ok(m.infer(z)?.1),
            Method::Ista(c, op) => Ok(op.peak_signal(&ista_solve(op.as_ref(), z, c)?.x)),
            Method::Pd(c, op) => Ok(op.peak_signal(&primal_dual_solve(op.as_ref(), z, c)?.x)),
            Method::Hq(c, op) => Ok(op.peak_signal(&hq_solve(op.as_ref(), z, c)?.x)),
        }
    }
}

/// Builds the restorer for `method` on a dataset with `spec`.
pub fn build_method(
    method: MethodArg,
    spec: &DatasetSpec,
    checkpoint: Option<&Path>,
    k: usize,
    iters: Option<usize>,
) -> Result<NamedMethod> {
    let op = Arc::new(spec.forward_model()?);
    let l = op.norm();
    let rho = ModelInit::defaults(spec.sigma_e, spec.n).rho;
    let m = match (method, checkpoint) {
        (MethodArg::Oracle, _) => Method::Oracle,
        (m, Some(path)) => {
            let ck = Checkpoint::load(path)?;
            if m.variant() != Some(ck.variant) {
                return Err(Error::Incompatible(format!(
                    "checkpoint holds {} but --method is {}",
                    ck.variant,
                    m.name()
                )));
            }
            Method::Unrolled(ck.into_model(op)?)
        }
        (m, None) if m.variant().is_some() => {
            if k == 0 {
                return Err(Error::spec("K must be >= 1"));
            }
            let init = ModelInit::defaults(spec.sigma_e, spec.n);
            Method::Unrolled(UnrolledModel::new(m.variant().unwrap(), k, op, init)?)
        }
        (MethodArg::Ista, None) => {
            let mut c = IstaConfig::for_norm(l, ModelInit::DEFAULT_CHI)?;
            if let Some(it) = iters {
                c.max_iter = it;
            }
            Method::Ista(c, op)
        }
        (MethodArg::Pd, None) => {
            let mut c = PdConfig::for_norm(l, rho)?;
            if let Some(it) = iters {
                c.max_iter = it;
            }
            Method::Pd(c, op)
        }
        (MethodArg::Hq, None) => {
            let mut c = HqConfig::default();
            if let Some(it) = iters {
                c.max_iter = it;
            }
            Method::Hq(c, op)
        }
        _ => unreachable!("unrolled methods handled above"),
    };
    Ok(NamedMethod {
        name: method.name().to_string(),
        method: m,
    })
}

#[derive(Serialize)]
struct EvalEcho<'a> {
    command: &'static str,
    method: &'static str,
    checkpoint: Option<String>,
    data: String,
    dataset: &'a str,
    split: &'static str,
    k: Option<usize>,
    iters: Option<usize>,
    theta: f64,
    tsnr: TsnrConvention,
    format: &'static str,
    svg: bool,
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let spec = ds.spec().clone();
    let test = ds.load_split(Split::Test)?;
    let restorer = build_method(a.method, &spec, a.checkpoint.as_deref(), a.k, a.iters)?;
    let cfg = EvalConfig {
        theta: DEFAULT_THETA,
        tsnr: match a.tsnr {
            TsnrArg::EnergyRatio => TsnrConvention::EnergyRatio,
            TsnrArg::Literal => TsnrConvention::Literal,
        },
    };
    let kernel = crate::sigmodel::sample_kernel(&spec.kernel_spec())?;
    let start = std::time::Instant::now();
    let evaluation = evaluate_dataset(&restorer, &test, &kernel, &cfg)?;
    let elapsed = start.elapsed();

    let out = resolve_out(&a.out);
    create_dir(&out)?;
    let stem = format!("{}_{}", ds.name(), restorer.name);
    let k = match &restorer.method {
        Method::Unrolled(m) => Some(m.k()),
        _ => None,
    };
    write_json(
        &out.join(format!("{stem}_eval.json")),
        &EvalEcho {
            command: "eval",
            method: a.method.name(),
            checkpoint: a.checkpoint.as_ref().map(|p| p.display().to_string()),
            data: a.data.display().to_string(),
            dataset: ds.name(),
            split: Split::Test.name(),
            k,
            iters: a.iters,
            theta: cfg.theta,
            tsnr: cfg.tsnr,
            format: "csv",
            svg: a.svg,
        },
    )?;
    let row = evaluation.summary(ds.name(), &restorer.name);
    let metrics_path = out.join(format!("{stem}_metrics.csv"));
    write_text(&metrics_path, &format!("{METRIC_CSV_HEADER}\n{}\n", row.to_csv()))?;
    write_text(&out.join(format!("{stem}_scatter.csv")), &evaluation.scatter_csv())?;
    if a.svg {
        let title = format!("{} on {}", restorer.name, ds.name());
        write_text(&out.join(format!("{stem}_scatter.svg")), &scatter_svg(&evaluation.peaks, &title))?;
    }
    eprintln!(
        "{} records in {:.3} s ({:.3} ms per record)",
        test.len(),
        elapsed.as_secs_f64(),
        per_record_ms(elapsed, test.len())
    );
    println!("{METRIC_CSV_HEADER}\n{}", row.to_csv());
    Ok(())
}

fn per_record_ms(d: Duration, count: usize) -> f64 {
    1e3 * d.as_secs_f64() / count.max(1) as f64
}

pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    let report = build_report(&a.results)?;
    let text = report.to_markdown();
    let out = match &a.out {
        Some(p) => resolve_out(p),
        None => a.results.join("report.md"),
    };
    write_text(&out, &text)?;
    print!("{text}");
    Ok(())
}

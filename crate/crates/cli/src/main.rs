//! `rulerkit` command-line front end.
//!
//! Every option can also come from a JSON file given with `--config`, keyed
//! by the long flag name (`{"seed": 7, "max-tilt": 0.1}`). Flags override
//! the file, the file overrides built-in defaults.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use rulerkit::deepgp::{deepgp_train, TrainConfig};
use rulerkit::eval::{BenchOptions, BenchmarkReport, SizeRule, DEFAULT_N};
use rulerkit::gpfit::DeSettings;
use rulerkit::heatmap::{extract_peaks, PeakConfig};
use rulerkit::io::{self, DetectionFile, DetectionSource, Document};
use rulerkit::pipeline::{self, BatchOptions, EstimatorConfig, PipelineConfig, PointSource, RulerEstimate};
use rulerkit::synth::{self, SpecRanges, SynthConfig};

#[derive(Parser)]
#[command(name = "rulerkit", version, about = "Ruler scale estimation toolkit")]
struct Cli {
    /// JSON file with option defaults, keyed by flag name.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic rulers and a manifest.
    Synth(SynthArgs),
    /// Extract mark detections from a PFM heatmap.
    Peaks(PeaksArgs),
    /// Estimate the scale from a detection file.
    Fit(FitArgs),
    /// Train a DeepGP regressor.
    DeepgpTrain(TrainArgs),
    /// Benchmark one method over a manifest.
    Eval(EvalArgs),
    /// Compare the speed of several methods over a manifest.
    Bench(BenchArgs),
}

/// Takes the flag, then the config value, then the default.
macro_rules! pick {
    ($flag:expr, $cfg:expr, $default:expr) => {
        $flag.clone().or($cfg.clone()).unwrap_or_else(|| $default)
    };
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct SynthArgs {
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory of PNG/PPM background images.
    #[arg(long)]
    backgrounds: Option<PathBuf>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    max_tilt: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct PeaksArgs {
    #[arg(long)]
    heatmap: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    kernel: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Defaults to the heatmap file stem.
    #[arg(long)]
    image_id: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Options shared by every command that runs an estimator.
#[derive(Args, Deserialize, Default, Clone)]
#[serde(rename_all = "kebab-case")]
struct EstimatorArgs {
    /// DeepGP model file (DGP1).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Seed of the differential-evolution search.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    max_generations: Option<usize>,
    /// Report every ruler found instead of the dominant one.
    #[arg(long)]
    multi_line: Option<bool>,
    #[arg(long)]
    delta_rho: Option<f64>,
    #[arg(long)]
    delta_theta: Option<f64>,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(rename_all = "kebab-case")]
struct FitArgs {
    /// Detection file (JSON).
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    est: EstimatorArgs,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct TrainArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    warmup_steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss log (JSON lines); defaults to `<out>.loss.jsonl`.
    #[arg(long)]
    loss_log: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(rename_all = "kebab-case")]
struct EvalArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    n: Option<f64>,
    /// auto, detections, heatmap, gt-points or gt-heatmap.
    #[arg(long)]
    source: Option<String>,
    /// Image size in the metric: max, width, height or diagonal.
    #[arg(long)]
    size_rule: Option<String>,
    /// Serial run with per-sample timing.
    #[arg(long)]
    timing: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    est: EstimatorArgs,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(rename_all = "kebab-case")]
struct BenchArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated method names.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    n: Option<f64>,
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    est: EstimatorArgs,
}

fn load_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read(p).with_context(|| format!("reading config {}", p.display()))?;
            let value: Value = serde_json::from_slice(&text)?;
            Ok(io::from_value(&value)?)
        }
    }
}

fn required<T: Clone>(v: Option<T>, c: Option<T>, flag: &str) -> Result<T> {
    match v.or(c) {
        Some(x) => Ok(x),
        None => bail!(rulerkit::Error::InvalidParams(format!("--{flag} is required"))),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn run_synth(a: SynthArgs, c: SynthArgs) -> Result<()> {
    let out = required(a.out, c.out, "out")?;
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        count: pick!(a.count, c.count, defaults.count),
        seed: pick!(a.seed, c.seed, 0),
        width: pick!(a.width, c.width, defaults.width),
        height: pick!(a.height, c.height, defaults.height),
        ranges: SpecRanges {
            max_tilt: pick!(a.max_tilt, c.max_tilt, defaults.ranges.max_tilt),
            ..defaults.ranges
        },
        backgrounds: a.backgrounds.or(c.backgrounds),
    };
    let jobs = pick!(a.jobs, c.jobs, 0);
    let manifest = rulerkit::seed::with_jobs(jobs, || synth::write_dataset(&cfg, &out))?;
    info!("wrote {} samples to {}", manifest.entries.len(), out.display());
    println!("{}", json!({"count": manifest.entries.len(), "manifest": out.join(synth::MANIFEST_FILE)}));
    Ok(())
}

fn run_peaks(a: PeaksArgs, c: PeaksArgs) -> Result<()> {
    let path = required(a.heatmap, c.heatmap, "heatmap")?;
    let d = PeakConfig::default();
    let cfg = PeakConfig {
        tau: pick!(a.tau, c.tau, d.tau),
        kernel: pick!(a.kernel, c.kernel, d.kernel),
        sigma: pick!(a.sigma, c.sigma, d.sigma),
    };
    let h = io::read_pfm(&path)?;
    let points = extract_peaks(&h, &cfg)?;
    let image_id = a
        .image_id
        .or(c.image_id)
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let det = Document::new(DetectionFile {
        image_id,
        points,
        source: Some(DetectionSource::Heatmap),
    });
    write_output(a.out.or(c.out).as_deref(), &det.to_json()?)
}

fn estimator_setup(a: &EstimatorArgs, c: &EstimatorArgs) -> Result<(EstimatorConfig, PipelineConfig)> {
    let d = DeSettings::default();
    let de = DeSettings {
        seed: pick!(a.seed, c.seed, d.seed),
        population: pick!(a.population, c.population, d.population),
        max_generations: pick!(a.max_generations, c.max_generations, d.max_generations),
        ..d
    };
    let model = match a.model.clone().or(c.model.clone()) {
        Some(p) => Some(Arc::new(io::read_model(&p)?)),
        None => None,
    };
    let mut pc = PipelineConfig {
        multi_line: pick!(a.multi_line, c.multi_line, false),
        ..PipelineConfig::default()
    };
    pc.hough.delta_rho = pick!(a.delta_rho, c.delta_rho, pc.hough.delta_rho);
    pc.hough.delta_theta = pick!(a.delta_theta, c.delta_theta, pc.hough.delta_theta);
    Ok((EstimatorConfig { de, model }, pc))
}

#[derive(Serialize)]
struct FitOutput<'a> {
    image_id: &'a str,
    method: &'a str,
    pixels_per_cm: f64,
    status: rulerkit::gpfit::Status,
    rulers: &'a [RulerEstimate],
}

fn run_fit(a: FitArgs, c: FitArgs) -> Result<()> {
    let path = required(a.points, c.points, "points")?;
    let method = pick!(a.method, c.method, "gp-de".to_string());
    let (ec, pc) = estimator_setup(&a.est, &c.est)?;
    let est = pipeline::create_estimator(&method, &ec)?;
    let det = io::read_detections(&path)?.data;
    let rulers = pipeline::estimate_points(&det.points, est.as_ref(), &pc);
    let primary = &rulers[0].estimate;
    let out = FitOutput {
        image_id: &det.image_id,
        method: &method,
        pixels_per_cm: primary.pixels_per_cm,
        status: primary.status,
        rulers: &rulers,
    };
    write_output(a.out.or(c.out).as_deref(), &to_json(&out)?)
}

fn run_train(a: TrainArgs, c: TrainArgs) -> Result<()> {
    let out = required(a.out, c.out, "out")?;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        steps: pick!(a.steps, c.steps, d.steps),
        batch: pick!(a.batch, c.batch, d.batch),
        seed: pick!(a.seed, c.seed, d.seed),
        learning_rate: pick!(a.learning_rate, c.learning_rate, d.learning_rate),
        warmup_steps: pick!(a.warmup_steps, c.warmup_steps, d.warmup_steps),
        ..d
    };
    let log_path = a.loss_log.or(c.loss_log).unwrap_or_else(|| {
        let mut p = out.clone().into_os_string();
        p.push(".loss.jsonl");
        PathBuf::from(p)
    });
    let jobs = pick!(a.jobs, c.jobs, 0);
    let mut log = String::new();
    let model = rulerkit::seed::with_jobs(jobs, || {
        deepgp_train(&cfg, |r| {
            if r.step % 100 == 0 {
                info!("step {} loss {:.6}", r.step, r.loss);
            }
            log.push_str(&serde_json::to_string(&r).expect("record serializes"));
            log.push('\n');
        })
    })?;
    io::write_model(&model, &out)?;
    fs::write(&log_path, log)?;
    println!("{}", json!({"model": out, "loss_log": log_path, "steps": cfg.steps}));
    Ok(())
}

fn batch_options(source: Option<String>, size_rule: Option<String>, n: f64, timed: bool, jobs: usize) -> Result<BatchOptions> {
    Ok(BatchOptions {
        source: source.as_deref().unwrap_or("auto").parse::<PointSource>()?,
        size_rule: size_rule.as_deref().unwrap_or("max").parse::<SizeRule>()?,
        bench: BenchOptions { n, timed, jobs },
    })
}

fn run_eval(a: EvalArgs, c: EvalArgs) -> Result<()> {
    let manifest = io::read_manifest(&required(a.manifest, c.manifest, "manifest")?)?;
    let method = pick!(a.method, c.method, "gp-de".to_string());
    let (ec, pc) = estimator_setup(&a.est, &c.est)?;
    let est = pipeline::create_estimator(&method, &ec)?;
    let opts = batch_options(
        a.source.or(c.source),
        a.size_rule.or(c.size_rule),
        pick!(a.n, c.n, DEFAULT_N),
        pick!(a.timing, c.timing, false),
        pick!(a.jobs, c.jobs, 0),
    )?;
    let report = pipeline::estimate_batch(&manifest, est.as_ref(), &pc, &opts)?;
    info!("{method}: mape {:.6} over {} records", report.mape, report.records.len());
    write_output(a.out.or(c.out).as_deref(), &to_json(&report)?)?;
    if let Some(csv) = a.csv.or(c.csv) {
        fs::write(csv, report.to_csv())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    method: String,
    n: usize,
    mape: f64,
    ms_per_sample: Option<f64>,
}

fn run_bench(a: BenchArgs, c: BenchArgs) -> Result<()> {
    let manifest = io::read_manifest(&required(a.manifest, c.manifest, "manifest")?)?;
    let methods = pick!(a.methods, c.methods, "gp-de,deepgp".to_string());
    let (ec, pc) = estimator_setup(&a.est, &c.est)?;
    let opts = batch_options(a.source.or(c.source), None, pick!(a.n, c.n, DEFAULT_N), true, 1)?;
    let mut rows = Vec::new();
    for method in methods.split(',').map(str::trim).filter(|m| !m.is_empty()) {
        let est = pipeline::create_estimator(method, &ec)?;
        let report: BenchmarkReport = pipeline::estimate_batch(&manifest, est.as_ref(), &pc, &opts)?;
        rows.push(BenchRow {
            method: method.to_string(),
            n: report.records.len(),
            mape: report.mape,
            ms_per_sample: report.ms_per_sample,
        });
    }
    let mut table = format!("{:<10} {:>8} {:>12} {:>14}\n", "method", "samples", "mape", "ms/sample");
    for r in &rows {
        table += &format!(
            "{:<10} {:>8} {:>12.4} {:>14.3}\n",
            r.method,
            r.n,
            r.mape,
            r.ms_per_sample.unwrap_or(f64::NAN)
        );
    }
    print!("{table}");
    if let Some(out) = a.out.or(c.out) {
        fs::write(out, to_json(&rows)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Synth(a) => run_synth(a, load_config(cfg)?),
        Command::Peaks(a) => run_peaks(a, load_config(cfg)?),
        Command::Fit(a) => run_fit(a, load_config(cfg)?),
        Command::DeepgpTrain(a) => run_train(a, load_config(cfg)?),
        Command::Eval(a) => run_eval(a, load_config(cfg)?),
        Command::Bench(a) => run_bench(a, load_config(cfg)?),
    }
}

fn error_json(err: &anyhow::Error) -> Value {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<rulerkit::Error>())
        .map(rulerkit::Error::kind)
        .unwrap_or("Other");
    let mut v = json!({"error": kind, "message": format!("{err:#}")});
    if let Some(rulerkit::Error::SchemaViolation { path, .. }) = err.chain().find_map(|e| e.downcast_ref::<rulerkit::Error>()) {
        v["path"] = json!(path);
    }
    v
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RULERKIT_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}

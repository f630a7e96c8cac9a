mod config;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use config::{overlay, read_file, resolve, ConfigError, LOCK_FILE};
use fwi_onet::datagen::{
    build_dataset, dataset_dir, generate_velocity, verify, Dataset, DatasetKind, DatasetRequest,
    FamilyKind, FamilySpec,
};
use fwi_onet::model::{load_with, ModelParams, Scale};
use fwi_onet::tensor::fwit;
use fwi_onet::train::{
    checkpoint_fingerprint, evaluate, evaluate_constant, evaluate_with, mean_velocity,
    paper_scenarios, predict_samples, probe_generalization, train, ProbeReport, Scenario,
    TrainConfig,
};
use fwi_onet::wavesim::VelocityModel;
use fwi_onet::Tensor;

#[derive(Parser)]
#[command(
    name = "fwi-onet",
    version,
    about = "Synthetic FWI datasets and Inversion-DeepONet training"
)]
struct Cli {
    /// Working directory; every relative path is resolved against it.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "FWI_ONET_JOBS")]
    jobs: Option<usize>,
    /// JSON settings file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `key=value` override, applied after --config; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset of velocity/gather pairs.
    Generate(GenerateArgs),
    /// Re-check a dataset directory against its manifest.
    Verify { data: PathBuf },
    /// Train a model preset on a dataset.
    Train(TrainArgs),
    /// Score a checkpoint, the ground truth or the mean-velocity baseline.
    Eval(EvalArgs),
    /// Write predicted velocity models.
    Infer(InferArgs),
    /// Compare predictions under different source-frequency scenarios.
    Probe(ProbeArgs),
    /// Render a 2-D tensor as a binary PGM.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    /// `desk` or `paper` grid.
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    verify: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateSettings {
    family: FamilyKind,
    kind: DatasetKind,
    count: usize,
    scale: Scale,
    seed: u64,
    verify: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Preset id, `arch/scale/kind`.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory name under --out.
    #[arg(long)]
    run: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSettings {
    data: PathBuf,
    run: String,
    resume: bool,
    train: TrainConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EvalMode {
    Model,
    Oracle,
    Baseline,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    /// Score the ground truth itself.
    #[arg(long, conflicts_with = "baseline")]
    oracle: bool,
    /// Score the training-split mean velocity.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSettings {
    data: PathBuf,
    checkpoint: Option<PathBuf>,
    split: String,
    mode: EvalMode,
    name: String,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    /// Sample indices; overrides --split.
    #[arg(long, value_delimiter = ',')]
    index: Option<Vec<usize>>,
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InferSettings {
    data: PathBuf,
    checkpoint: PathBuf,
    split: String,
    index: Option<Vec<usize>>,
    name: String,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// `paper` or a JSON file with a list of scenarios.
    #[arg(long)]
    scenarios: Option<String>,
    /// Probe the first `count` velocities of this split.
    #[arg(long, conflicts_with = "fresh")]
    split: Option<String>,
    /// Probe this many newly generated velocities instead.
    #[arg(long)]
    fresh: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeSettings {
    data: PathBuf,
    checkpoint: PathBuf,
    scenarios: String,
    split: String,
    fresh: Option<usize>,
    count: Option<usize>,
    seed: u64,
    name: String,
}

#[derive(Serialize)]
struct VelocityProbe {
    velocity: String,
    report: ProbeReport,
}

#[derive(Args)]
struct PlotArgs {
    /// Tensor file to draw.
    input: PathBuf,
    /// PGM file to write.
    output: PathBuf,
    /// Slice of a 3-D tensor (e.g. the source of a gather).
    #[arg(long)]
    slice: Option<usize>,
}

struct Ctx {
    out: PathBuf,
    seed: Option<u64>,
    jobs: usize,
    file: Option<Value>,
    overrides: Vec<String>,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    fn settings<S: for<'de> Deserialize<'de>>(
        &self,
        defaults: Value,
        flags: Value,
    ) -> Result<S, ConfigError> {
        resolve(
            defaults,
            overlay(self.file.clone(), &self.overrides, flags)?,
        )
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn lock(dir: &Path, settings: &impl Serialize) -> Result<()> {
    write_json(&dir.join(LOCK_FILE), settings)
}

fn generate(ctx: &Ctx, a: GenerateArgs) -> Result<()> {
    let defaults = json!({
        "family": "curve_vel", "kind": "F", "count": 10, "scale": "desk", "seed": 0, "verify": false,
    });
    let s: GenerateSettings = ctx.settings(
        defaults,
        flags! {
            "family" => a.family, "kind" => a.kind, "count" => a.count, "scale" => a.scale,
            "seed" => ctx.seed, "verify" => a.verify.then_some(true),
        },
    )?;
    let req = DatasetRequest {
        kind: s.kind,
        family: FamilySpec::preset(s.family),
        n_samples: s.count,
        seed: s.seed,
        grid: s.scale.grid(),
    };
    let manifest = build_dataset(&ctx.out, &req, ctx.jobs)?;
    let dir = dataset_dir(&ctx.out, s.family, s.kind);
    lock(&dir, &s)?;
    if s.verify {
        let r = verify(&dir)?;
        println!("verified {} samples, {} files", r.samples, r.files);
    }
    println!("{}", dir.join(fwi_onet::datagen::MANIFEST_FILE).display());
    log::info!(
        "{} samples, split {:?}",
        manifest.samples.len(),
        manifest.split
    );
    Ok(())
}

fn train_cmd(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let mut layers = overlay(
        ctx.file.clone(),
        &ctx.overrides,
        json!({
            "train": flags! {
                "preset" => a.preset, "epochs" => a.epochs, "batch_size" => a.batch_size, "seed" => ctx.seed,
            },
        }),
    )?;
    config::merge(
        &mut layers,
        flags! { "data" => a.data, "run" => a.run, "resume" => a.resume.then_some(true) },
    );
    let preset = layers
        .pointer("/train/preset")
        .and_then(Value::as_str)
        .ok_or_else(|| ConfigError("a preset is required (--preset or train.preset)".into()))?
        .parse()
        .map_err(|e: fwi_onet::Error| ConfigError(e.to_string()))?;
    let defaults = json!({
        "run": "train",
        "resume": false,
        "train": serde_json::to_value(TrainConfig::for_preset(preset))?,
    });
    let s: TrainSettings = resolve(defaults, layers)?;
    let run = ctx.path(Path::new(&s.run));
    lock(&run, &s)?;
    let summary = train(&s.train, ctx.path(&s.data), &run, s.resume)?;
    if let Some(last) = summary.curve.last() {
        println!(
            "epoch {}: train MAE {:.5}, best epoch {:?} ({:?})",
            last.epoch, last.train_mae, summary.best_epoch, summary.best_score
        );
    }
    Ok(())
}

fn eval_cmd(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let mode = if a.oracle {
        Some("oracle")
    } else if a.baseline {
        Some("baseline")
    } else {
        None
    };
    let flags = flags! {
        "data" => a.data, "checkpoint" => a.checkpoint, "split" => a.split.clone(), "mode" => mode, "name" => a.name,
    };
    let split = overlay(ctx.file.clone(), &ctx.overrides, flags.clone())?
        .get("split")
        .and_then(Value::as_str)
        .unwrap_or("test")
        .to_string();
    let defaults = json!({"split": "test", "mode": "model", "name": format!("eval-{split}"), "checkpoint": null});
    let s: EvalSettings = ctx.settings(defaults, flags)?;
    let ds = Dataset::open(ctx.path(&s.data))?;
    let report = match s.mode {
        EvalMode::Oracle => evaluate_with(&ds, &s.split, "oracle".into(), |xs| {
            Ok(xs.iter().map(|x| x.velocity.data().to_vec()).collect())
        })?,
        EvalMode::Baseline => {
            let v = mean_velocity(&ds)?;
            evaluate_constant(&ds, &s.split, v, format!("mean-velocity-baseline:{v}"))?
        }
        EvalMode::Model => {
            let ckpt = s.checkpoint.as_ref().ok_or_else(|| {
                ConfigError("--checkpoint is required to evaluate a model".into())
            })?;
            let (params, extra) = load_with(ctx.path(ckpt))?;
            evaluate(
                &params,
                &ds,
                &s.split,
                checkpoint_fingerprint(&extra).unwrap_or_default(),
            )?
        }
    };
    let dir = ctx.path(Path::new(&s.name));
    lock(&dir, &s)?;
    report.write(dir.join("report.json"))?;
    println!(
        "{} {}: MAE {:.5} RMSE {:.5} SSIM {:.4} RE {:.5} (n = {})",
        s.split, s.name, report.mae, report.rmse, report.ssim, report.re, report.n
    );
    Ok(())
}

fn load_model(ctx: &Ctx, ckpt: &Path, ds: &Dataset) -> Result<ModelParams> {
    let (params, _) = load_with(ctx.path(ckpt))?;
    params
        .preset()
        .check_data(ds.manifest.kind, &ds.manifest.grid)?;
    Ok(params)
}

fn infer_cmd(ctx: &Ctx, a: InferArgs) -> Result<()> {
    let defaults = json!({"split": "test", "index": null, "name": "infer"});
    let s: InferSettings = ctx.settings(
        defaults,
        flags! { "data" => a.data, "checkpoint" => a.checkpoint, "split" => a.split, "index" => a.index, "name" => a.name },
    )?;
    let ds = Dataset::open(ctx.path(&s.data))?;
    let params = load_model(ctx, &s.checkpoint, &ds)?;
    let indices: Vec<usize> = match &s.index {
        Some(ix) => ix.clone(),
        None => ds.manifest.split.range(&s.split)?.collect(),
    };
    let dir = ctx.path(Path::new(&s.name));
    lock(&dir, &s)?;
    let vb = ds.manifest.normalization.velocity()?;
    let (nz, nx) = params.preset().output_shape();
    for chunk in indices.chunks(16) {
        let samples = chunk
            .iter()
            .map(|&i| ds.load(i))
            .collect::<fwi_onet::Result<Vec<_>>>()?;
        let refs: Vec<_> = samples.iter().collect();
        for (sample, pred) in samples.iter().zip(predict_samples(&params, &refs)?) {
            let mps: Vec<f32> = pred
                .iter()
                .map(|&y| vb.denormalize(y as f64) as f32)
                .collect();
            let path = dir.join(format!("pred-{:05}.fwit", sample.index));
            fwit::save(&path, &Tensor::new(vec![nz, nx], mps)?)?;
        }
    }
    println!(
        "{} predictions of {nz}x{nx} in {}",
        indices.len(),
        dir.display()
    );
    Ok(())
}

fn probe_cmd(ctx: &Ctx, a: ProbeArgs) -> Result<()> {
    let defaults = json!({
        "scenarios": "paper", "split": "test", "fresh": null, "count": null, "seed": 0, "name": "probe",
    });
    let s: ProbeSettings = ctx.settings(
        defaults,
        flags! {
            "data" => a.data, "checkpoint" => a.checkpoint, "scenarios" => a.scenarios, "split" => a.split,
            "fresh" => a.fresh, "count" => a.count, "seed" => ctx.seed, "name" => a.name,
        },
    )?;
    let scenarios: Vec<Scenario> = if s.scenarios == "paper" {
        paper_scenarios()
    } else {
        let p = ctx.path(Path::new(&s.scenarios));
        let text =
            fs::read_to_string(&p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
    };
    let ds = Dataset::open(ctx.path(&s.data))?;
    let params = load_model(ctx, &s.checkpoint, &ds)?;
    let family = &ds.manifest.family;

    let mut velocities: Vec<(String, VelocityModel)> = Vec::new();
    if let Some(n) = s.fresh {
        let req = DatasetRequest {
            seed: s.seed,
            ..ds.manifest.request()
        };
        for k in 0..s.count.unwrap_or(n).min(n) {
            let seed = req.sample_seeds(k).0;
            velocities.push((format!("fresh-{seed}"), generate_velocity(family, seed)?));
        }
    } else {
        let range = ds.manifest.split.range(&s.split)?;
        let n = s.count.unwrap_or(range.len()).min(range.len());
        for i in range.take(n) {
            let v = ds.velocity_raw(i)?;
            let model = VelocityModel::new(
                family.nx,
                family.nz,
                v.into_data(),
                family.v_min,
                family.v_max,
            )?;
            velocities.push((format!("sample-{i}"), model));
        }
    }

    let dir = ctx.path(Path::new(&s.name));
    lock(&dir, &s)?;
    let mut out = Vec::with_capacity(velocities.len());
    for (label, model) in velocities {
        let report = probe_generalization(
            &params,
            &model,
            &scenarios,
            &ds.manifest.normalization,
            &ds.manifest.grid,
        )?;
        println!(
            "{label}: MAE spread {:.5}, max deviation {:.5}",
            report.mae_spread, report.max_pairwise_deviation
        );
        out.push(VelocityProbe {
            velocity: label,
            report,
        });
    }
    write_json(&dir.join("probe.json"), &out)
}

fn plot_cmd(ctx: &Ctx, a: PlotArgs) -> Result<()> {
    let t = fwit::load(ctx.path(&a.input))?;
    let (h, w, values) = plot::field(&t, a.slice)?;
    let path = ctx.path(&a.output);
    fs::write(&path, plot::pgm(h, w, &values))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("{w}x{h} image in {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .context("starting the worker pool")?;
    let file = match &cli.config {
        Some(p) => {
            let p = if p.is_absolute() {
                p.clone()
            } else {
                cli.out.join(p)
            };
            Some(read_file(&p)?)
        }
        None => None,
    };
    let ctx = Ctx {
        out: cli.out,
        seed: cli.seed,
        jobs,
        file,
        overrides: cli.overrides,
    };
    match cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::Verify { data } => {
            let r = verify(ctx.path(&data))?;
            println!("ok: {} samples, {} files", r.samples, r.files);
            Ok(())
        }
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Eval(a) => eval_cmd(&ctx, a),
        Command::Infer(a) => infer_cmd(&ctx, a),
        Command::Probe(a) => probe_cmd(&ctx, a),
        Command::Plot(a) => plot_cmd(&ctx, a),
    }
}

/// 2 for configuration problems, 3 for data problems, 4 for numeric
/// failures.
fn exit_code(e: &anyhow::Error) -> u8 {
    use fwi_onet::Error as E;
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<E>() {
        Some(E::InvalidArgument(_) | E::PresetMismatch { .. } | E::State(_) | E::Cfl { .. }) => 2,
        Some(E::NonFinite(_) | E::Graph(_)) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

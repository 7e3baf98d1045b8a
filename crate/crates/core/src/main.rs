use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use inemo::bench::{AzimuthMode, Dataset, DatasetConfig, OcclusionLevel, Split};
use inemo::experiment::{
    digest_hex, evaluate_self_render, Checkpoint, Experiment, ExperimentConfig,
};
use inemo::Error;

#[derive(Parser)]
#[command(name = "inemo", version, about = "Incremental neural mesh models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic cuboid dataset.
    GenData(GenData),
    /// Train over a class-incremental split, checkpointing after each task.
    Train(Train),
    /// Classification report for a checkpoint.
    Eval(Eval),
    /// Pose accuracy report for a checkpoint.
    PoseEval(PoseEval),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    classes: usize,
    /// Training renders per class.
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 20)]
    per_class_test: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    /// Occlusion level applied to every test sample: l1, l2 or l3.
    #[arg(long)]
    occlusion: Option<OcclusionLevel>,
    /// uniform or biased
    #[arg(long, default_value = "uniform")]
    azimuth: AzimuthMode,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value settings; applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Split such as B0+2 or 4,2,2.
    #[arg(long)]
    tasks: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_replay: bool,
    #[arg(long)]
    no_kd: bool,
    #[arg(long)]
    no_etf: bool,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma list of none, l1, l2, l3.
    #[arg(long)]
    occlusion: Option<String>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct PoseEval {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma list of radians; defaults to pi/6,pi/18.
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long)]
    templates: Option<usize>,
    /// Evaluate on noise-free renders of the stored meshes instead of images.
    #[arg(long)]
    self_render: bool,
    /// Random poses per class for --self-render.
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    cfg: ConfigArgs,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::NotFound(_) | Error::Format { .. } => 2,
        Error::TrainingDiverged(_) => 3,
        Error::CheckpointVersion { .. } | Error::CheckpointCorrupt(_) => 4,
        _ => 1,
    }
}

fn build_config(base: ExperimentConfig, args: &ConfigArgs) -> inemo::Result<ExperimentConfig> {
    let mut c = base;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        c.apply_text(&text)?;
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        c.set(k.trim(), v)?;
    }
    Ok(c)
}

fn write_file(path: &Path, bytes: &[u8]) -> inemo::Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn emit_report<T: serde::Serialize>(report: &T, out: Option<&Path>) -> inemo::Result<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| Error::Format {
        what: "report".into(),
        detail: e.to_string(),
    })?;
    text.push('\n');
    match out {
        Some(p) => {
            write_file(p, text.as_bytes())?;
            eprintln!("report written to {}", p.display());
        }
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
        }
    }
    Ok(())
}

fn gen_data(a: &GenData) -> inemo::Result<()> {
    let cfg = DatasetConfig {
        num_classes: a.classes,
        per_class_train: a.per_class,
        per_class_test: a.per_class_test,
        seed: a.seed,
        image_width: a.width,
        image_height: a.height,
        noise_level: a.noise,
        occlusion: a.occlusion,
        azimuth_mode: a.azimuth,
    };
    let (ds, samples) = Dataset::generate(&cfg)?;
    ds.write(&a.out, &samples)?;
    let train = ds.entries.iter().filter(|e| e.record.split == Split::Train).count();
    println!(
        "classes={} train={} test={} manifest_sha256={}",
        ds.classes.len(),
        train,
        ds.entries.len() - train,
        digest_hex(ds.manifest_text().as_bytes())
    );
    Ok(())
}

fn train(a: &Train) -> inemo::Result<()> {
    let mut config = build_config(ExperimentConfig::default(), &a.cfg)?;
    if let Some(d) = &a.data {
        config.data = Some(d.clone());
    }
    if let Some(t) = &a.tasks {
        config.split = t.clone();
    }
    if let Some(e) = a.epochs {
        config.train.epochs_per_task = e;
    }
    if let Some(s) = a.seed {
        config.train.seed = s;
    }
    config.train.replay &= !a.no_replay;
    if a.no_kd {
        config.train.lambda_kd = 0.0;
    }
    if a.no_etf {
        config.train.lambda_etf = 0.0;
    }
    for w in config.validate()? {
        eprintln!("warning: {w}");
    }
    let exp = Experiment::open(config)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    write_file(&a.out.join("config.txt"), exp.config.to_text().as_bytes())?;
    let mut ck = exp.new_checkpoint()?;
    let mut trace = String::new();
    for i in 0..exp.task_count() {
        let t = match exp.train_next(&mut ck) {
            Ok(t) => t,
            Err(e @ Error::TrainingDiverged(_)) => {
                let dump = a.out.join("diverged.ckpt");
                ck.save(&dump)?;
                eprintln!("state dumped to {}", dump.display());
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        for s in &t.steps {
            trace.push_str(&s.to_string());
            trace.push('\n');
        }
        for w in &t.warnings {
            eprintln!("warning: {w}");
        }
        write_file(&a.out.join("trace.txt"), trace.as_bytes())?;
        let path = a.out.join(format!("task_{i}.ckpt"));
        let digest = ck.save(&path)?;
        let rec = &ck.history[i];
        println!(
            "task={i} classes={:?} accuracy={:.4} checkpoint={} sha256={digest}",
            rec.classes,
            rec.accuracy,
            path.display()
        );
    }
    Ok(())
}

/// Checkpoint config with the dataset and config overrides applied.
fn load_for_eval(
    checkpoint: &Path,
    data: Option<&PathBuf>,
    cfg: &ConfigArgs,
) -> inemo::Result<(Checkpoint, ExperimentConfig)> {
    let ck = Checkpoint::load(checkpoint)?;
    let mut config = build_config(ck.config.clone(), cfg)?;
    if let Some(d) = data {
        config.data = Some(d.clone());
    }
    config.validate()?;
    Ok((ck, config))
}

fn eval(a: &Eval) -> inemo::Result<()> {
    let (ck, mut config) = load_for_eval(&a.checkpoint, a.data.as_ref(), &a.cfg)?;
    if let Some(o) = &a.occlusion {
        config.set("eval_occlusion", o)?;
    }
    let exp = Experiment::open(config)?;
    emit_report(&exp.evaluate(&ck)?, a.out.as_deref())
}

fn pose_eval(a: &PoseEval) -> inemo::Result<()> {
    let (mut ck, mut config) = load_for_eval(&a.checkpoint, a.data.as_ref(), &a.cfg)?;
    if let Some(t) = &a.thresholds {
        config.set("thresholds", t)?;
    }
    if let Some(n) = a.templates {
        config.template_count = n;
    }
    if let Some(n) = a.per_class {
        config.self_render_per_class = n;
    }
    config.validate()?;
    let report = if a.self_render {
        ck.config = config;
        evaluate_self_render(&ck, a.seed)?
    } else {
        Experiment::open(config)?.evaluate_pose(&ck)?
    };
    emit_report(&report, a.out.as_deref())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = std::env::var("INEMO_THREADS").ok().and_then(|v| v.parse().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::PoseEval(a) => pose_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

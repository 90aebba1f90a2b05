use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use goalgraph::experiment::{compare, CompareInputs};
use goalgraph::metrics::{default_ks, evaluate, MetricsReport};
use goalgraph::model::{write_prediction_dump, Model, ModelConfig, Variant};
use goalgraph::render::render_svg;
use goalgraph::scenegraph::Scene;
use goalgraph::synthgen::{gen_dataset, load_dataset, write_dataset, MapStyle, Timing};
use goalgraph::training::{
    train, write_atomic, TrainConfig, TrainOptions, EPOCH_CHECKPOINT, FINAL_CHECKPOINT, LOSS_CSV,
};
use goalgraph::Error;

const SEED_ENV: &str = "GOALGRAPH_SEED";
const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Parser)]
#[command(name = "goalgraph", version, about = "Goal-conditioned trajectory prediction on scene graphs")]
struct Cli {
    /// Worker threads for data generation and training.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Generate {
        #[arg(long)]
        style: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long)]
        train_config: Option<PathBuf>,
        /// Overrides the variant of the model config.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset directory.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use `1 - s^2` instead of `(1 - s)^2` in b-minFDE.
        #[arg(long)]
        brier_literal: bool,
    },
    /// Predict one scene: JSON lines plus an SVG.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        svg: PathBuf,
        /// JSON-lines output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train goal and baseline on style A, evaluate on A and B.
    Compare {
        #[arg(long)]
        data_a: PathBuf,
        #[arg(long)]
        data_b: PathBuf,
        /// Held-out style-A evaluation set; the training set when omitted.
        #[arg(long)]
        eval_a: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 1, 2])]
        seeds: Vec<u64>,
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long)]
        train_config: Option<PathBuf>,
    },
}

struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidConfig(_) => (2, "config"),
            Error::Numeric(_) => (4, "numeric"),
            Error::Io { .. } => (3, "io"),
            Error::Parse { .. } => (3, "parse"),
            _ => (3, "data"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    git_describe: String,
    outputs: Vec<String>,
    wall_time_s: f64,
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .stderr(std::process::Stdio::null())
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

fn write_manifest(
    path: &Path,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    outputs: &[PathBuf],
    start: Instant,
) -> CliResult<()> {
    let m = RunManifest {
        command: command.into(),
        config,
        seed,
        git_describe: git_describe(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
    Ok(write_atomic(path, text.as_bytes())?)
}

/// Seed from the environment, if set, replaces `seed`.
fn effective_seed(seed: u64) -> CliResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(seed),
    }
}

fn mkdir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

/// Config files are user input: unreadable or invalid ones are usage errors.
fn config_error(e: Error) -> CliError {
    CliError {
        code: 2,
        kind: "config",
        message: e.to_string(),
    }
}

fn load_model_config(path: Option<&Path>) -> CliResult<ModelConfig> {
    match path {
        Some(p) => ModelConfig::load(p).map_err(config_error),
        None => Ok(ModelConfig::default()),
    }
}

fn load_train_config(path: Option<&Path>) -> CliResult<TrainConfig> {
    match path {
        Some(p) => TrainConfig::load(p).map_err(config_error),
        None => Ok(TrainConfig::default()),
    }
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name()
        .map_or_else(|| "data".into(), |n| n.to_string_lossy().into_owned())
}

fn run(cli: Cli) -> CliResult<()> {
    let start = Instant::now();
    let workers = cli.workers;
    if workers == 0 {
        return Err(CliError::usage("--workers must be at least 1"));
    }
    match cli.command {
        Command::Generate {
            style,
            n,
            seed,
            out,
        } => {
            if n == 0 {
                return Err(CliError::usage("--n must be at least 1"));
            }
            let style = MapStyle::by_name(&style).map_err(|e| CliError::usage(e.to_string()))?;
            let seed = effective_seed(seed)?;
            let timing = Timing::default();
            let scenes = gen_dataset(&style, &timing, n, seed, workers)?;
            write_dataset(&out, &style, &timing, seed, &scenes)?;
            write_manifest(
                &out.join(RUN_MANIFEST),
                "generate",
                json!({ "style": style, "n": n, "timing": timing }),
                Some(seed),
                std::slice::from_ref(&out),
                start,
            )
        }
        Command::Train {
            data,
            model_config,
            train_config,
            variant,
            out,
        } => {
            let mut mc = load_model_config(model_config.as_deref())?;
            if let Some(v) = variant {
                mc.variant = v.parse::<Variant>().map_err(|e| CliError::usage(e.to_string()))?;
            }
            let mut tc = load_train_config(train_config.as_deref())?;
            tc.seed = effective_seed(tc.seed)?;
            let scenes = load_dataset(&data)?;
            mkdir(&out)?;
            let opts = TrainOptions {
                out_dir: Some(out.clone()),
                workers,
            };
            let mut stderr = std::io::stderr();
            train(&mc, &tc, &scenes, &opts, |_, log| {
                let _ = writeln!(
                    stderr,
                    "epoch {} loss {:.5} lr {:.3e}",
                    log.epoch, log.loss, log.lr
                );
                true
            })?;
            write_manifest(
                &out.join(RUN_MANIFEST),
                "train",
                json!({ "data": data, "model_config": mc, "train_config": tc }),
                Some(tc.seed),
                &[
                    out.join(LOSS_CSV),
                    out.join(EPOCH_CHECKPOINT),
                    out.join(FINAL_CHECKPOINT),
                ],
                start,
            )
        }
        Command::Evaluate {
            model,
            data,
            out,
            brier_literal,
        } => {
            let m = Model::load(&model, None)?;
            let scenes = load_dataset(&data)?;
            let ks = default_ks(m.cfg.k);
            let report = evaluate(&m, &scenes, &ks, brier_literal)?;
            mkdir(&out)?;
            let csv_path = out.join("metrics.csv");
            let json_path = out.join("metrics.json");
            let mut csv = String::from(MetricsReport::CSV_HEADER);
            csv.push('\n');
            csv.push_str(&report.csv_rows(&dataset_name(&data), m.cfg.variant.name()));
            write_atomic(&csv_path, csv.as_bytes())?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            write_atomic(&json_path, text.as_bytes())?;
            write_manifest(
                &out.join(RUN_MANIFEST),
                "evaluate",
                json!({ "model": model, "data": data, "ks": ks, "brier_literal": brier_literal }),
                None,
                &[csv_path, json_path],
                start,
            )
        }
        Command::Predict {
            model,
            scene,
            svg,
            out,
        } => {
            let m = Model::load(&model, None)?;
            let s = Scene::load(&scene)?;
            let preds = m.predict(&s)?;
            let mut buf = Vec::new();
            write_prediction_dump(&mut buf, &s.id, &preds).map_err(|e| Error::io("<predictions>", e))?;
            let mut outputs = vec![svg.clone()];
            match &out {
                Some(p) => {
                    write_atomic(p, &buf)?;
                    outputs.push(p.clone());
                }
                None => std::io::stdout()
                    .write_all(&buf)
                    .map_err(|e| Error::io("<stdout>", e))?,
            }
            write_atomic(&svg, render_svg(&s, &preds).as_bytes())?;
            let mut mpath = svg.as_os_str().to_owned();
            mpath.push(".manifest.json");
            write_manifest(
                Path::new(&mpath),
                "predict",
                json!({ "model": model, "scene": scene }),
                None,
                &outputs,
                start,
            )
        }
        Command::Compare {
            data_a,
            data_b,
            eval_a,
            out,
            seeds,
            model_config,
            train_config,
        } => {
            let mc = load_model_config(model_config.as_deref())?;
            let tc = load_train_config(train_config.as_deref())?;
            let a = load_dataset(&data_a)?;
            let b = load_dataset(&data_b)?;
            let ea = eval_a.as_deref().map(load_dataset).transpose()?;
            let mut stderr = std::io::stderr();
            let report = compare(
                &CompareInputs {
                    train: &a,
                    eval_a: ea.as_deref(),
                    eval_b: &b,
                    model: &mc,
                    train_cfg: &tc,
                    seeds: &seeds,
                    workers,
                },
                |line| {
                    let _ = writeln!(stderr, "{line}");
                },
            )?;
            mkdir(&out)?;
            let csv_path = out.join("compare.csv");
            let json_path = out.join("compare.json");
            write_atomic(&csv_path, report.to_csv().as_bytes())?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            write_atomic(&json_path, text.as_bytes())?;
            write_manifest(
                &out.join(RUN_MANIFEST),
                "compare",
                json!({
                    "data_a": data_a, "data_b": data_b, "eval_a": eval_a,
                    "seeds": seeds, "model_config": mc, "train_config": tc,
                }),
                None,
                &[csv_path, json_path],
                start,
            )
        }
    }
}

fn report(e: &CliError) {
    let line = json!({ "error": e.kind, "code": e.code, "message": e.message });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            report(&CliError::usage(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.code)
        }
    }
}

//! Command-line surface: `synth`, `train`, `eval`, `predict`, `gradcheck`.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data or
//! format error, 3 numeric failure (including a failed gradient check).

mod config;

pub use config::{parse_config, CliConfig, CHECKPOINT_FILE_NAME, CONFIG_KEYS};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{generate_synthetic, load_corpus, store_corpus, Corpus};
use crate::error::Result;
use crate::eval::{evaluate, write_prediction_csv, write_report, EvaluationReport};
use crate::model::{load_checkpoint, save_checkpoint, ModelParams};
use crate::numeric::{Precision, Scalar, Selection};
use crate::training::{model_gradcheck, write_history_csv, Trainer};

pub const HISTORY_FILE_NAME: &str = "history.csv";
pub const FINAL_CHECKPOINT_FILE_NAME: &str = "final.auck";
pub const SNAPSHOT_FILE_NAME: &str = "snapshot.auts";

#[derive(Debug, Parser)]
#[command(name = "audetect", about = "Facial action unit detection: synthesis, training and scoring")]
struct Cli {
    /// `key = value` configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labelled corpus.
    Synth(SynthArgs),
    /// Train a model; writes the best checkpoint and the history CSV.
    Train(TrainArgs),
    /// Score a checkpoint on a corpus, with and without smoothing.
    Eval(EvalArgs),
    /// Write per-video prediction CSVs.
    Predict(EvalArgs),
    /// Finite-difference check of the full model's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    videos: Option<String>,
    /// Frames per video.
    #[arg(long)]
    frames: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    stay_probability: Option<String>,
    #[arg(long)]
    label_flip_noise: Option<String>,
    #[arg(long)]
    landmark_jitter_sigma: Option<String>,
    #[arg(long)]
    pixel_noise_sigma: Option<String>,
    /// Output directory for the corpus (sets `corpus`).
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    corpus: Option<String>,
    /// Directory for checkpoints and history.
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Where to write the best checkpoint (default `<out>/best.auck`).
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// single or double.
    #[arg(long)]
    precision: Option<String>,
    /// on or off.
    #[arg(long)]
    class_weighting: Option<String>,
    #[arg(long)]
    val_fraction: Option<String>,
    #[arg(long)]
    grad_clip_global_norm: Option<String>,
    /// Write `<out>/snapshot.auts` after every epoch.
    #[arg(long)]
    snapshot: bool,
    /// Continue from a snapshot instead of starting fresh.
    #[arg(long, value_name = "FILE")]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    corpus: Option<String>,
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Odd majority-filter width.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    precision: Option<String>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    step: Option<String>,
    /// Components per parameter tensor; 0 checks every component.
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
}

/// `(flag, config key, value)` for every flag that was given.
type Overrides = Vec<(&'static str, &'static str, String)>;

fn collect(pairs: Vec<(&'static str, &'static str, &Option<String>)>) -> Overrides {
    pairs
        .into_iter()
        .filter_map(|(flag, key, v)| v.clone().map(|v| (flag, key, v)))
        .collect()
}

impl Command {
    fn overrides(&self) -> Overrides {
        match self {
            Command::Synth(a) => collect(vec![
                ("videos", "videos", &a.videos),
                ("frames", "frames_per_video", &a.frames),
                ("seed", "seed", &a.seed),
                ("stay-probability", "stay_probability", &a.stay_probability),
                ("label-flip-noise", "label_flip_noise", &a.label_flip_noise),
                ("landmark-jitter-sigma", "landmark_jitter_sigma", &a.landmark_jitter_sigma),
                ("pixel-noise-sigma", "pixel_noise_sigma", &a.pixel_noise_sigma),
                ("out", "corpus", &a.out),
            ]),
            Command::Train(a) => collect(vec![
                ("corpus", "corpus", &a.corpus),
                ("out", "out", &a.out),
                ("checkpoint", "checkpoint", &a.checkpoint),
                ("epochs", "epochs", &a.epochs),
                ("batch-size", "batch_size", &a.batch_size),
                ("learning-rate", "learning_rate", &a.learning_rate),
                ("seed", "seed", &a.seed),
                ("precision", "precision", &a.precision),
                ("class-weighting", "class_weighting", &a.class_weighting),
                ("val-fraction", "val_fraction", &a.val_fraction),
                ("grad-clip-global-norm", "grad_clip_global_norm", &a.grad_clip_global_norm),
            ]),
            Command::Eval(a) | Command::Predict(a) => collect(vec![
                ("corpus", "corpus", &a.corpus),
                ("checkpoint", "checkpoint", &a.checkpoint),
                ("out", "out", &a.out),
                ("window", "smoothing_window", &a.window),
                ("precision", "precision", &a.precision),
            ]),
            Command::Gradcheck(a) => collect(vec![
                ("seed", "seed", &a.seed),
                ("step", "gradcheck_step", &a.step),
                ("samples", "gradcheck_samples", &a.samples),
                ("tolerance", "gradcheck_tolerance", &a.tolerance),
            ]),
        }
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let config = parse_config(cli.config.as_deref(), &cli.command.overrides())?;
    log::info!("resolved configuration:\n{}", config.render());
    match cli.command {
        Command::Synth(_) => synth(&config),
        Command::Train(a) => match config.train.precision {
            Precision::Single => train::<f32>(&config, a.snapshot, a.resume.as_deref()),
            Precision::Double => train::<f64>(&config, a.snapshot, a.resume.as_deref()),
        },
        Command::Eval(_) => match config.train.precision {
            Precision::Single => eval::<f32>(&config),
            Precision::Double => eval::<f64>(&config),
        },
        Command::Predict(_) => match config.train.precision {
            Precision::Single => predict::<f32>(&config),
            Precision::Double => predict::<f64>(&config),
        },
        Command::Gradcheck(_) => gradcheck(&config),
    }
}

fn synth(config: &CliConfig) -> Result<i32> {
    let corpus = generate_synthetic(&config.synth)?;
    let path = store_corpus(&corpus, &config.corpus)?;
    println!(
        "wrote {} videos / {} frames to {}",
        corpus.videos.len(),
        corpus.frame_count(),
        path.display()
    );
    Ok(0)
}

fn train<T: Scalar>(config: &CliConfig, snapshot: bool, resume: Option<&Path>) -> Result<i32> {
    let corpus = load_corpus(&config.corpus)?;
    let mut trainer = match resume {
        Some(path) => Trainer::<T>::resume(&corpus, path, Some(config.train.epochs))?,
        None => Trainer::<T>::new(&corpus, config.train.clone())?,
    };
    let snapshot_path = config.out.join(SNAPSHOT_FILE_NAME);
    while !trainer.is_finished() {
        trainer.run_epoch()?;
        if snapshot {
            trainer.save_snapshot(&snapshot_path)?;
        }
    }
    let outcome = trainer.finish()?;
    let checkpoint = config.checkpoint_path();
    save_checkpoint(&outcome.best, &checkpoint)?;
    save_checkpoint(&outcome.final_params, config.out.join(FINAL_CHECKPOINT_FILE_NAME))?;
    let history = config.out.join(HISTORY_FILE_NAME);
    write_history_csv(&outcome.history, &history)?;
    println!(
        "best epoch {} with validation metric {:.6}; checkpoint {}, history {}",
        outcome.best_epoch,
        outcome.best_metric,
        checkpoint.display(),
        history.display()
    );
    Ok(0)
}

fn load_inputs<T: Scalar>(config: &CliConfig) -> Result<(ModelParams<T>, Corpus)> {
    let params = load_checkpoint::<T>(config.checkpoint_path())?;
    let corpus = load_corpus(&config.corpus)?;
    Ok((params, corpus))
}

fn eval<T: Scalar>(config: &CliConfig) -> Result<i32> {
    let (params, corpus) = load_inputs::<T>(config)?;
    let report: EvaluationReport = evaluate(&params, &corpus, config.smoothing_window)?;
    write_report(&report, &config.out)?;
    print!("{}", report.unsmoothed.to_key_values("unsmoothed."));
    print!("{}", report.smoothed.to_key_values("smoothed."));
    println!("smoothing_delta = {:.6}", report.smoothing_delta());
    Ok(0)
}

fn predict<T: Scalar>(config: &CliConfig) -> Result<i32> {
    let (params, corpus) = load_inputs::<T>(config)?;
    let report = evaluate(&params, &corpus, config.smoothing_window)?;
    let dir = config.out.join("predictions");
    let mut files = 0;
    for track in &report.tracks {
        files += write_prediction_csv(track, &dir)?.len();
    }
    println!("wrote {files} prediction files to {}", dir.display());
    Ok(0)
}

fn gradcheck(config: &CliConfig) -> Result<i32> {
    let selection = match config.gradcheck_samples {
        0 => Selection::All,
        n => Selection::Sample {
            per_tensor: n,
            seed: config.train.seed,
        },
    };
    let report = model_gradcheck(config.train.seed, config.gradcheck_step, &selection)?;
    println!("max_relative_error = {:.6e}", report.max_relative_error);
    println!("components_checked = {}", report.checked);
    println!("kink_crossings = {}", report.kink_crossings);
    println!(
        "max_relative_error_including_kinks = {:.6e}",
        report.max_relative_error_including_kinks
    );
    if let Some(w) = &report.worst {
        println!(
            "worst = {}[{}] analytic {:.9e} estimate {:.9e}",
            w.param, w.index, w.analytic, w.estimate
        );
    }
    let pass = report.max_relative_error <= config.gradcheck_tolerance;
    println!(
        "{} (tolerance {:e})",
        if pass { "PASS" } else { "FAIL" },
        config.gradcheck_tolerance
    );
    Ok(if pass { 0 } else { 3 })
}

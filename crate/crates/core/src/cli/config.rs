//! Flat `key = value` run configuration with `#` comments.
//!
//! Resolution order is defaults, then the file, then command-line flags.
//! `seed` drives both the generator and the trainer.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::SynthConfig;
use crate::error::{Error, Result};
use crate::eval::DEFAULT_SMOOTHING_WINDOW;
use crate::numeric::DEFAULT_STEP;
use crate::training::TrainConfig;

pub const CHECKPOINT_FILE_NAME: &str = "best.auck";

/// Every accepted key, in the order they are rendered.
pub const CONFIG_KEYS: [&str; 24] = [
    "videos",
    "frames_per_video",
    "seed",
    "stay_probability",
    "label_flip_noise",
    "landmark_jitter_sigma",
    "pixel_noise_sigma",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "batch_size",
    "epochs",
    "grad_clip_global_norm",
    "class_weighting",
    "precision",
    "val_fraction",
    "corpus",
    "checkpoint",
    "out",
    "smoothing_window",
    "gradcheck_step",
    "gradcheck_samples",
    "gradcheck_tolerance",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    /// Directory (or file) holding the corpus.
    pub corpus: PathBuf,
    /// Explicit checkpoint path; defaults to `<out>/best.auck`.
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub smoothing_window: usize,
    pub gradcheck_step: f64,
    /// Components checked per parameter tensor; 0 checks all of them.
    pub gradcheck_samples: usize,
    pub gradcheck_tolerance: f64,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            corpus: PathBuf::from("data"),
            checkpoint: None,
            out: PathBuf::from("out"),
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            gradcheck_step: DEFAULT_STEP,
            gradcheck_samples: 256,
            gradcheck_tolerance: 1e-4,
        }
    }
}

fn number<N: std::str::FromStr>(value: &str) -> Result<N, String> {
    value.parse().map_err(|_| format!("'{value}' is not a valid number"))
}

fn ranged(value: &str, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64, String> {
    let v: f64 = number(value)?;
    if v.is_finite() && ok(v) {
        Ok(v)
    } else {
        Err(format!("{v} is out of range (expected {range})"))
    }
}

fn at_least(value: &str, min: usize) -> Result<usize, String> {
    let v: usize = number(value)?;
    if v < min {
        return Err(format!("{v} is out of range (expected at least {min})"));
    }
    Ok(v)
}

fn boolean(value: &str) -> Result<bool, String> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        other => Err(format!("'{other}' is not a boolean (use on/off)")),
    }
}

impl CliConfig {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join(CHECKPOINT_FILE_NAME))
    }

    /// Applies one setting; the error text omits the location.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let positive = |v: f64| v > 0.0;
        let non_negative = |v: f64| v >= 0.0;
        match key {
            "videos" => self.synth.videos = at_least(value, 1)?,
            "frames_per_video" => self.synth.frames_per_video = at_least(value, 3)?,
            "seed" => {
                let seed: u64 = number(value)?;
                self.synth.seed = seed;
                self.train.seed = seed;
            }
            "stay_probability" => self.synth.stay_probability = ranged(value, prob, "[0, 1]")?,
            "label_flip_noise" => self.synth.label_flip_noise = ranged(value, prob, "[0, 1]")?,
            "landmark_jitter_sigma" => self.synth.landmark_jitter_sigma = ranged(value, non_negative, ">= 0")?,
            "pixel_noise_sigma" => self.synth.pixel_noise_sigma = ranged(value, non_negative, ">= 0")?,
            "learning_rate" => self.train.learning_rate = ranged(value, positive, "> 0")?,
            "adam_beta1" => self.train.adam_beta1 = ranged(value, |v| (0.0..1.0).contains(&v), "[0, 1)")?,
            "adam_beta2" => self.train.adam_beta2 = ranged(value, |v| (0.0..1.0).contains(&v), "[0, 1)")?,
            "adam_epsilon" => self.train.adam_epsilon = ranged(value, positive, "> 0")?,
            "batch_size" => self.train.batch_size = at_least(value, 1)?,
            "epochs" => self.train.epochs = at_least(value, 1)?,
            "grad_clip_global_norm" => self.train.grad_clip_global_norm = ranged(value, positive, "> 0")?,
            "class_weighting" => self.train.class_weighting = boolean(value)?,
            "precision" => self.train.precision = value.parse()?,
            "val_fraction" => self.train.val_fraction = ranged(value, open_unit, "(0, 1)")?,
            "corpus" => self.corpus = PathBuf::from(value),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "smoothing_window" => {
                let w = at_least(value, 1)?;
                if w % 2 == 0 {
                    return Err(format!("{w} is out of range (expected an odd window)"));
                }
                self.smoothing_window = w;
            }
            "gradcheck_step" => self.gradcheck_step = ranged(value, positive, "> 0")?,
            "gradcheck_samples" => self.gradcheck_samples = number(value)?,
            "gradcheck_tolerance" => self.gradcheck_tolerance = ranged(value, positive, "> 0")?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// The resolved configuration in the file syntax.
    pub fn render(&self) -> String {
        let s = &self.synth;
        let t = &self.train;
        let mut out = String::new();
        let mut line = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        line("videos", s.videos.to_string());
        line("frames_per_video", s.frames_per_video.to_string());
        line("seed", s.seed.to_string());
        line("stay_probability", s.stay_probability.to_string());
        line("label_flip_noise", s.label_flip_noise.to_string());
        line("landmark_jitter_sigma", s.landmark_jitter_sigma.to_string());
        line("pixel_noise_sigma", s.pixel_noise_sigma.to_string());
        line("learning_rate", t.learning_rate.to_string());
        line("adam_beta1", t.adam_beta1.to_string());
        line("adam_beta2", t.adam_beta2.to_string());
        line("adam_epsilon", t.adam_epsilon.to_string());
        line("batch_size", t.batch_size.to_string());
        line("epochs", t.epochs.to_string());
        line("grad_clip_global_norm", t.grad_clip_global_norm.to_string());
        line("class_weighting", if t.class_weighting { "on" } else { "off" }.to_string());
        line("precision", t.precision.as_str().to_string());
        line("val_fraction", t.val_fraction.to_string());
        line("corpus", self.corpus.display().to_string());
        line("checkpoint", self.checkpoint_path().display().to_string());
        line("out", self.out.display().to_string());
        line("smoothing_window", self.smoothing_window.to_string());
        line("gradcheck_step", self.gradcheck_step.to_string());
        line("gradcheck_samples", self.gradcheck_samples.to_string());
        line("gradcheck_tolerance", self.gradcheck_tolerance.to_string());
        out
    }

    /// Applies `key = value` lines from `text`; `origin` labels diagnostics.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{origin}:{}: malformed line '{}' (expected key = value)",
                    n + 1,
                    raw.trim()
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            self.set(key, value)
                .map_err(|e| Error::Config(format!("{origin}:{}: key '{key}': {e}", n + 1)))?;
        }
        Ok(())
    }
}

/// Resolves defaults, then `path` (if any), then `overrides` given as
/// `(flag name, key, value)`.
pub fn parse_config(path: Option<&Path>, overrides: &[(&str, &str, String)]) -> Result<CliConfig> {
    let mut config = CliConfig::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        config.apply_text(&text, &path.display().to_string())?;
    }
    for (flag, key, value) in overrides {
        config
            .set(key, value)
            .map_err(|e| Error::Config(format!("flag --{flag}: {e}")))?;
    }
    config.synth.validate()?;
    config.train.validate()?;
    Ok(config)
}

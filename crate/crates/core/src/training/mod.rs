//! Weighted cross-entropy, Adam, and a deterministic, resumable training
//! loop over video-wise train/validation splits.

mod adam;
mod snapshot;
mod trainer;

pub use adam::{adam_step, clip_global_norm, global_grad_norm, AdamConfig, OptimizerState};
pub use trainer::{train, TrainOutcome, Trainer};

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::write_file;
use crate::data::{Corpus, LabelVector, AU_COUNT, UNLABELED};
use crate::error::{Error, Result};
use crate::data::{generate_synthetic, landmark_diff, SynthConfig};
use crate::model::{ModelConfig, ModelParams};
use crate::numeric::{finite_difference_check_piecewise, GradCheckReport, Graph, Precision, Scalar, Selection, Var};

/// RNG stream used for the video split; epoch shuffles use
/// `SHUFFLE_STREAM_BASE + epoch`.
const SPLIT_STREAM: u64 = 1;
const SHUFFLE_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Frames per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub grad_clip_global_norm: f64,
    /// Drives the parameter init, the video split and the epoch shuffles.
    pub seed: u64,
    pub class_weighting: bool,
    pub precision: Precision,
    /// Fraction of videos held out for validation.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 16,
            epochs: 20,
            grad_clip_global_norm: 5.0,
            seed: 7,
            class_weighting: true,
            precision: Precision::Single,
            val_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_epsilon", self.adam_epsilon),
            ("grad_clip_global_norm", self.grad_clip_global_norm),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
        }
        for (key, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{key} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction must lie in (0, 1), got {}", self.val_fraction)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            clip_norm: self.grad_clip_global_norm,
        }
    }
}

/// `w_i = clamp(neg_i / pos_i, 1, 10)` from the labels of `videos`.
/// An AU with no positives gets the upper bound.
pub fn class_weights(corpus: &Corpus, videos: &[usize]) -> [f64; AU_COUNT] {
    let mut pos = [0u64; AU_COUNT];
    let mut neg = [0u64; AU_COUNT];
    for &v in videos {
        for f in corpus.videos[v].frames() {
            for (i, &l) in f.labels.iter().enumerate() {
                match l {
                    1 => pos[i] += 1,
                    0 => neg[i] += 1,
                    _ => {}
                }
            }
        }
    }
    std::array::from_fn(|i| match (pos[i], neg[i]) {
        (0, 0) => 1.0,
        (0, _) => 10.0,
        (p, n) => (n as f64 / p as f64).clamp(1.0, 10.0),
    })
}

/// Mean over labelled AUs of `w_i^[label = 1] * CE_i`; `None` if the frame
/// carries no labels.
pub fn frame_loss(p: &[f64; AU_COUNT], labels: &LabelVector, weights: &[f64; AU_COUNT]) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for i in 0..AU_COUNT {
        match labels[i] {
            1 => total += weights[i] * -p[i].ln(),
            0 => total += -(1.0 - p[i]).ln(),
            _ => continue,
        }
        n += 1;
    }
    (n > 0).then(|| total / n as f64)
}

/// Weighted loss of a single frame from its active-class probabilities.
pub fn loss(p: &[f64; AU_COUNT], labels: &LabelVector, weights: &[f64; AU_COUNT]) -> Result<f64> {
    frame_loss(p, labels, weights).ok_or_else(|| Error::NothingToLearn("every AU label is -1".into()))
}

/// Mean [`frame_loss`] over the labelled frames of a batch.
pub fn batch_loss(frames: &[([f64; AU_COUNT], LabelVector)], weights: &[f64; AU_COUNT]) -> Result<f64> {
    let losses: Vec<f64> = frames.iter().filter_map(|(p, l)| frame_loss(p, l, weights)).collect();
    if losses.is_empty() {
        return Err(Error::NothingToLearn(format!(
            "all {} frames in the batch are unlabelled",
            frames.len()
        )));
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Graph version of [`frame_loss`] over the decoder's logit pairs.
pub fn frame_loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    logits: &[Var],
    labels: &LabelVector,
    weights: &[f64; AU_COUNT],
) -> Result<Option<Var>> {
    let mut total: Option<Var> = None;
    let mut n = 0usize;
    for (i, &logit) in logits.iter().enumerate() {
        if labels[i] == UNLABELED {
            continue;
        }
        let mut term = g.softmax_cross_entropy(logit, labels[i] as usize)?;
        if labels[i] == 1 && weights[i] != 1.0 {
            term = g.scale(term, T::of(weights[i]));
        }
        total = Some(match total {
            Some(acc) => g.add(acc, term)?,
            None => term,
        });
        n += 1;
    }
    Ok(total.map(|t| g.scale(t, T::of(1.0 / n as f64))))
}

/// Indices into `corpus.videos` for each side of a video-wise split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded shuffle of the videos; the first `round(n * val_fraction)`
/// (at least one, at most `n - 1`) become the validation set.
pub fn split_videos(corpus: &Corpus, val_fraction: f64, seed: u64) -> Result<Split> {
    let n = corpus.videos.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "a train/validation split needs at least 2 videos, corpus has {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let mut validation = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, validation })
}

pub(crate) fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM_BASE + epoch as u64);
    rng
}

/// Finite-difference check of the full model's training loss, in double
/// precision, on the middle frame of a 3-frame synthetic video. Parameters
/// are Glorot-initialised from `seed`. Perturbations that flip any ReLU
/// are reported as kink crossings rather than scored.
pub fn model_gradcheck(seed: u64, step: f64, selection: &Selection) -> Result<GradCheckReport> {
    let corpus = generate_synthetic(&SynthConfig {
        videos: 1,
        frames_per_video: 3,
        seed,
        ..SynthConfig::default()
    })?;
    let video = &corpus.videos[0];
    let frame = &video.frames()[1];
    let diff = landmark_diff(video, 1)?;
    let weights = [1.0; AU_COUNT];
    let mut model = ModelParams::<f64>::glorot(ModelConfig::default(), seed)?;

    let build = |params: &ModelParams<f64>, g: &mut Graph<f64>| -> Result<Var> {
        let logits = params.bind(g)?.forward_frame(g, frame, &diff)?;
        frame_loss_graph(g, &logits, &frame.labels, &weights)?
            .ok_or_else(|| Error::NothingToLearn("gradcheck frame carries no labels".into()))
    };
    let mut g = Graph::new();
    let root = build(&model, &mut g)?;
    model.params_mut().zero_grad();
    g.backward(root, model.params_mut())?;

    let template = model.clone();
    let mut params = model.params().clone();
    finite_difference_check_piecewise(&mut params, step, selection, |p| {
        let mut probe = template.clone();
        *probe.params_mut() = p.clone();
        let mut g = Graph::new();
        let root = build(&probe, &mut g)?;
        Ok((g.value(root).data()[0], g.relu_pattern()))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean frame loss seen during the epoch's updates.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_f1: f64,
    pub val_metric: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,val_accuracy,val_f1,val_metric";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in history {
        writeln!(
            out,
            "{},{:.9},{:.9},{:.9},{:.9},{:.9}",
            r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.val_f1, r.val_metric
        )
        .unwrap();
    }
    out
}

pub fn write_history_csv(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), history_csv(history).as_bytes())
}

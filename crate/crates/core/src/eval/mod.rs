//! Binarization, temporal smoothing and the challenge score
//! `0.5 * accuracy + 0.5 * F1`.
//!
//! Accuracy is pooled over every labelled (frame, AU) decision; F1 is the
//! unweighted mean of the eight per-AU F1 scores.

mod output;

pub use output::{write_prediction_csv, write_report, PREDICTION_HEADER};

use crate::data::{landmark_diff, Corpus, LabelVector, AU_COUNT, AU_NAMES, UNLABELED};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numeric::Scalar;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 5;

/// Binary decision per AU for one frame.
pub type Decision = [u8; AU_COUNT];

/// `1` iff `p >= threshold`.
pub fn binarize(p: f64, threshold: f64) -> u8 {
    u8::from(p >= threshold)
}

pub fn binarize_frame(p: &[f64; AU_COUNT], threshold: f64) -> Decision {
    p.map(|v| binarize(v, threshold))
}

/// Sliding majority vote over an odd window with replicated edges.
pub fn smooth(seq: &[u8], window: usize) -> Result<Vec<u8>> {
    if window % 2 == 0 {
        return Err(Error::contract(
            "smooth",
            format!("window must be odd, got {window}"),
        ));
    }
    if seq.is_empty() {
        return Err(Error::contract("smooth", "sequence is empty"));
    }
    let half = window / 2;
    let last = seq.len() - 1;
    Ok((0..seq.len())
        .map(|t| {
            let ones: usize = (0..window)
                .map(|k| usize::from(seq[(t + k).saturating_sub(half).min(last)]))
                .sum();
            u8::from(ones > half)
        })
        .collect())
}

/// Applies [`smooth`] to every AU column of a per-frame decision track.
pub fn smooth_decisions(track: &[Decision], window: usize) -> Result<Vec<Decision>> {
    let mut out = track.to_vec();
    for au in 0..AU_COUNT {
        let column: Vec<u8> = track.iter().map(|d| d[au]).collect();
        for (row, v) in out.iter_mut().zip(smooth(&column, window)?) {
            row[au] = v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, predicted: u8, label: i8) {
        match (predicted, label) {
            (1, 1) => self.tp += 1,
            (1, 0) => self.fp += 1,
            (0, 1) => self.fn_ += 1,
            (0, 0) => self.tn += 1,
            _ => {}
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `2TP / (2TP + FP + FN)`; returns `(0, true)` when the denominator is 0.
pub fn f1_per_au(c: &ConfusionCounts) -> (f64, bool) {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        (0.0, true)
    } else {
        (2.0 * c.tp as f64 / denom as f64, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub counts: [ConfusionCounts; AU_COUNT],
    pub f1: [f64; AU_COUNT],
    /// AUs whose F1 was undefined (no positives predicted or labelled).
    pub degenerate: [bool; AU_COUNT],
    pub mean_f1: f64,
    pub accuracy: f64,
    pub challenge_metric: f64,
}

impl MetricsReport {
    pub fn from_counts(counts: [ConfusionCounts; AU_COUNT]) -> Self {
        let scored = counts.map(|c| f1_per_au(&c));
        let f1 = scored.map(|(f, _)| f);
        let degenerate = scored.map(|(_, d)| d);
        let mean_f1 = f1.iter().sum::<f64>() / AU_COUNT as f64;
        let correct: u64 = counts.iter().map(|c| c.tp + c.tn).sum();
        let total: u64 = counts.iter().map(ConfusionCounts::total).sum();
        let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        MetricsReport {
            counts,
            f1,
            degenerate,
            mean_f1,
            accuracy,
            challenge_metric: 0.5 * accuracy + 0.5 * mean_f1,
        }
    }

    pub fn decisions(&self) -> u64 {
        self.counts.iter().map(ConfusionCounts::total).sum()
    }

    /// `key = value` lines, one per metric and per-AU statistic.
    pub fn to_key_values(&self, prefix: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("{prefix}challenge_metric = {:.6}\n", self.challenge_metric));
        out.push_str(&format!("{prefix}accuracy = {:.6}\n", self.accuracy));
        out.push_str(&format!("{prefix}mean_f1 = {:.6}\n", self.mean_f1));
        for (i, name) in AU_NAMES.iter().enumerate() {
            let c = &self.counts[i];
            out.push_str(&format!(
                "{prefix}{name}.f1 = {:.6}\n{prefix}{name}.tp = {}\n{prefix}{name}.fp = {}\n{prefix}{name}.fn = {}\n{prefix}{name}.tn = {}\n",
                self.f1[i], c.tp, c.fp, c.fn_, c.tn
            ));
            if self.degenerate[i] {
                out.push_str(&format!("{prefix}{name}.f1_degenerate = true\n"));
            }
        }
        out
    }

    pub fn csv_header() -> String {
        let mut cols = vec!["challenge_metric".to_string(), "accuracy".into(), "mean_f1".into()];
        cols.extend(AU_NAMES.iter().map(|n| format!("{n}_f1")));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            format!("{:.6}", self.challenge_metric),
            format!("{:.6}", self.accuracy),
            format!("{:.6}", self.mean_f1),
        ];
        cols.extend(self.f1.iter().map(|f| format!("{f:.6}")));
        cols.join(",")
    }
}

/// Score of a predictor that never fires, given per-AU positive rates:
/// accuracy is `1 - mean rate` and every F1 is 0.
pub fn always_inactive_baseline(rates: &[f64; AU_COUNT]) -> f64 {
    0.5 * (1.0 - rates.iter().sum::<f64>() / AU_COUNT as f64)
}

/// Decisions and labels of one video, aligned frame by frame.
#[derive(Debug, Clone, Copy)]
pub struct ScoredVideo<'a> {
    pub video_id: &'a str,
    pub predictions: &'a [Decision],
    pub labels: &'a [LabelVector],
}

/// Pools confusion counts over all videos, skipping unlabelled decisions.
pub fn challenge_metric(videos: &[ScoredVideo<'_>]) -> Result<MetricsReport> {
    let mut counts = [ConfusionCounts::default(); AU_COUNT];
    for v in videos {
        if v.predictions.len() != v.labels.len() {
            return Err(Error::contract(
                "challenge_metric",
                format!(
                    "video '{}' has {} predictions but {} labels",
                    v.video_id,
                    v.predictions.len(),
                    v.labels.len()
                ),
            ));
        }
        for (pred, label) in v.predictions.iter().zip(v.labels) {
            for au in 0..AU_COUNT {
                if label[au] != UNLABELED {
                    counts[au].record(pred[au], label[au]);
                }
            }
        }
    }
    Ok(MetricsReport::from_counts(counts))
}

/// Per-frame outputs for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrack {
    pub video_id: String,
    pub probabilities: Vec<[f64; AU_COUNT]>,
    /// Thresholded and, when requested, smoothed decisions.
    pub binary: Option<Vec<Decision>>,
}

impl PredictionTrack {
    pub fn binarized(&self, threshold: f64) -> Vec<Decision> {
        self.probabilities.iter().map(|p| binarize_frame(p, threshold)).collect()
    }
}

/// Runs the model over every frame of every video.
pub fn predict_corpus<T: Scalar>(params: &ModelParams<T>, corpus: &Corpus) -> Result<Vec<PredictionTrack>> {
    corpus
        .videos
        .iter()
        .map(|video| {
            let probabilities = (0..video.len())
                .map(|t| {
                    let diff = landmark_diff(video, t)?;
                    let p = params.model_forward(&video.frames()[t], &diff)?;
                    Ok(p.map(Scalar::as_f64))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PredictionTrack {
                video_id: video.video_id().to_string(),
                probabilities,
                binary: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub window: usize,
    pub unsmoothed: MetricsReport,
    pub smoothed: MetricsReport,
    /// Tracks with `binary` holding the smoothed decisions.
    pub tracks: Vec<PredictionTrack>,
}

impl EvaluationReport {
    pub fn smoothing_delta(&self) -> f64 {
        self.smoothed.challenge_metric - self.unsmoothed.challenge_metric
    }
}

/// Scores probability tracks against the corpus labels, with and without
/// majority smoothing.
pub fn score_tracks(mut tracks: Vec<PredictionTrack>, corpus: &Corpus, window: usize) -> Result<EvaluationReport> {
    if tracks.len() != corpus.videos.len() {
        return Err(Error::contract(
            "evaluate",
            format!("{} prediction tracks for {} videos", tracks.len(), corpus.videos.len()),
        ));
    }
    let labels: Vec<Vec<LabelVector>> = corpus
        .videos
        .iter()
        .map(|v| v.frames().iter().map(|f| f.labels).collect())
        .collect();
    let raw: Vec<Vec<Decision>> = tracks.iter().map(|t| t.binarized(DEFAULT_THRESHOLD)).collect();
    let smoothed: Vec<Vec<Decision>> = raw
        .iter()
        .map(|d| smooth_decisions(d, window))
        .collect::<Result<_>>()?;
    let scored = |decisions: &[Vec<Decision>]| -> Result<MetricsReport> {
        let videos: Vec<ScoredVideo<'_>> = tracks
            .iter()
            .zip(decisions)
            .zip(&labels)
            .map(|((t, d), l)| ScoredVideo {
                video_id: &t.video_id,
                predictions: d,
                labels: l,
            })
            .collect();
        challenge_metric(&videos)
    };
    let unsmoothed = scored(&raw)?;
    let smoothed_report = scored(&smoothed)?;
    for (t, d) in tracks.iter_mut().zip(smoothed) {
        t.binary = Some(d);
    }
    Ok(EvaluationReport {
        window,
        unsmoothed,
        smoothed: smoothed_report,
        tracks,
    })
}

/// Model predictions on `corpus`, thresholded, smoothed per AU and video
/// with a `window`-wide majority filter, and scored.
pub fn evaluate<T: Scalar>(params: &ModelParams<T>, corpus: &Corpus, window: usize) -> Result<EvaluationReport> {
    if window % 2 == 0 {
        return Err(Error::contract("evaluate", format!("smoothing window must be odd, got {window}")));
    }
    score_tracks(predict_corpus(params, corpus)?, corpus, window)
}

use rand::seq::SliceRandom;

use super::{
    adam_step, class_weights, epoch_rng, frame_loss, frame_loss_graph, split_videos, EpochRecord, OptimizerState,
    Split, TrainConfig,
};
use crate::data::{landmark_diff, Corpus, AU_COUNT};
use crate::error::{Error, Result};
use crate::eval::{binarize_frame, challenge_metric, Decision, ScoredVideo, DEFAULT_THRESHOLD};
use crate::model::{ModelConfig, ModelParams};
use crate::numeric::{Graph, Scalar, Tensor};

/// One frame reference: `(video index, frame index)`.
type FrameRef = (usize, usize);

/// Best-so-far parameters by validation metric; ties keep the earlier epoch.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BestModel<T> {
    pub metric: f64,
    pub epoch: usize,
    pub params: ModelParams<T>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters of the epoch with the highest validation metric.
    pub best: ModelParams<T>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub final_params: ModelParams<T>,
    pub history: Vec<EpochRecord>,
    pub split: Split,
}

/// Epoch-at-a-time driver. All randomness derives from `config.seed`, so a
/// run is a pure function of corpus and config, and a snapshot taken at an
/// epoch boundary resumes to the same bits.
pub struct Trainer<'c, T> {
    pub(crate) corpus: &'c Corpus,
    pub(crate) config: TrainConfig,
    pub(crate) split: Split,
    pub(crate) weights: [f64; AU_COUNT],
    /// Landmark-difference input of every frame, per video.
    pub(crate) diffs: Vec<Vec<Tensor<f32>>>,
    pub(crate) train_frames: Vec<FrameRef>,
    pub(crate) params: ModelParams<T>,
    pub(crate) optimizer: OptimizerState<T>,
    pub(crate) history: Vec<EpochRecord>,
    pub(crate) best: Option<BestModel<T>>,
}

impl<'c, T: Scalar> Trainer<'c, T> {
    /// Default architecture, Glorot-initialised from `config.seed`.
    pub fn new(corpus: &'c Corpus, config: TrainConfig) -> Result<Self> {
        let params = ModelParams::glorot(ModelConfig::default(), config.seed)?;
        Self::with_model(corpus, config, params)
    }

    pub fn with_model(corpus: &'c Corpus, config: TrainConfig, params: ModelParams<T>) -> Result<Self> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::Config("cannot train on an empty corpus".into()));
        }
        let split = split_videos(corpus, config.val_fraction, config.seed)?;
        let weights = if config.class_weighting {
            class_weights(corpus, &split.train)
        } else {
            [1.0; AU_COUNT]
        };
        let diffs = corpus
            .videos
            .iter()
            .map(|v| (0..v.len()).map(|t| landmark_diff(v, t)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let train_frames: Vec<FrameRef> = split
            .train
            .iter()
            .flat_map(|&v| {
                corpus.videos[v]
                    .frames()
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| f.has_any_label())
                    .map(move |(t, _)| (v, t))
            })
            .collect();
        if train_frames.is_empty() {
            return Err(Error::NothingToLearn(format!(
                "none of the {} training videos carries a label",
                split.train.len()
            )));
        }
        let optimizer = OptimizerState::new(params.params());
        log::info!(
            "training on {} frames from {} videos, validating on {} videos; class weights {:?}",
            train_frames.len(),
            split.train.len(),
            split.validation.len(),
            weights
        );
        Ok(Trainer {
            corpus,
            config,
            split,
            weights,
            diffs,
            train_frames,
            params,
            optimizer,
            history: Vec::new(),
            best: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn class_weights(&self) -> &[f64; AU_COUNT] {
        &self.weights
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn epochs_completed(&self) -> usize {
        self.history.len()
    }

    pub fn is_finished(&self) -> bool {
        self.history.len() >= self.config.epochs
    }

    /// Weighted loss of one labelled frame; its gradient, times `scale`, is
    /// added into the parameter gradients.
    fn frame_step(&mut self, (v, t): FrameRef, scale: T) -> Result<f64> {
        let frame = &self.corpus.videos[v].frames()[t];
        let mut g = Graph::new();
        let model = self.params.bind(&mut g)?;
        let logits = model.forward_frame(&mut g, frame, &self.diffs[v][t])?;
        let loss = frame_loss_graph(&mut g, &logits, &frame.labels, &self.weights)?
            .expect("training frames carry labels");
        g.backward_scaled(loss, scale, self.params.params_mut())?;
        Ok(g.value(loss).data()[0].as_f64())
    }

    /// Shuffles, trains one pass over the training frames, then scores the
    /// validation videos.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.history.len() + 1;
        let mut order = self.train_frames.clone();
        order.shuffle(&mut epoch_rng(self.config.seed, epoch));

        let adam = self.config.adam();
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(self.config.batch_size).enumerate() {
            self.params.params_mut().zero_grad();
            let scale = T::of(1.0 / chunk.len() as f64);
            let mut batch_sum = 0.0;
            for &frame in chunk {
                batch_sum += self.frame_step(frame, scale)?;
            }
            if !batch_sum.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch + 1,
                    loss: batch_sum / chunk.len() as f64,
                });
            }
            loss_sum += batch_sum;
            adam_step(self.params.params_mut(), &mut self.optimizer, &adam).map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {}: {m}", batch + 1)),
                other => other,
            })?;
        }
        let train_loss = loss_sum / order.len() as f64;

        let (val_loss, report) = self.validate()?;
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy: report.accuracy,
            val_f1: report.mean_f1,
            val_metric: report.challenge_metric,
        };
        log::info!(
            "epoch {epoch}: train_loss {train_loss:.5} val_loss {val_loss:.5} val_metric {:.4} (acc {:.4}, f1 {:.4})",
            record.val_metric,
            record.val_accuracy,
            record.val_f1
        );
        if self.best.as_ref().is_none_or(|b| record.val_metric > b.metric) {
            self.best = Some(BestModel {
                metric: record.val_metric,
                epoch,
                params: self.params.clone(),
            });
        }
        self.history.push(record);
        Ok(record)
    }

    /// Mean validation loss over labelled frames and the unsmoothed metric.
    fn validate(&mut self) -> Result<(f64, crate::eval::MetricsReport)> {
        let mut loss_sum = 0.0;
        let mut labelled = 0usize;
        let mut decisions: Vec<Vec<Decision>> = Vec::with_capacity(self.split.validation.len());
        for vi in 0..self.split.validation.len() {
            let v = self.split.validation[vi];
            let mut track = Vec::with_capacity(self.corpus.videos[v].len());
            for t in 0..self.corpus.videos[v].len() {
                let frame = &self.corpus.videos[v].frames()[t];
                let p = self.params.model_forward(frame, &self.diffs[v][t])?.map(Scalar::as_f64);
                if let Some(l) = frame_loss(&p, &frame.labels, &self.weights) {
                    loss_sum += l;
                    labelled += 1;
                }
                track.push(binarize_frame(&p, DEFAULT_THRESHOLD));
            }
            decisions.push(track);
        }
        let labels: Vec<Vec<_>> = self
            .split
            .validation
            .iter()
            .map(|&v| self.corpus.videos[v].frames().iter().map(|f| f.labels).collect())
            .collect();
        let scored: Vec<ScoredVideo<'_>> = self
            .split
            .validation
            .iter()
            .zip(&decisions)
            .zip(&labels)
            .map(|((&v, d), l)| ScoredVideo {
                video_id: self.corpus.videos[v].video_id(),
                predictions: d,
                labels: l,
            })
            .collect();
        let report = challenge_metric(&scored)?;
        let val_loss = if labelled == 0 { 0.0 } else { loss_sum / labelled as f64 };
        Ok((val_loss, report))
    }

    /// Runs the remaining epochs.
    pub fn run(mut self) -> Result<TrainOutcome<T>> {
        while !self.is_finished() {
            self.run_epoch()?;
        }
        self.finish()
    }

    pub fn finish(self) -> Result<TrainOutcome<T>> {
        let best = self
            .best
            .ok_or_else(|| Error::Config("training finished without running an epoch (epochs = 0)".into()))?;
        Ok(TrainOutcome {
            best: best.params,
            best_epoch: best.epoch,
            best_metric: best.metric,
            final_params: self.params,
            history: self.history,
            split: self.split,
        })
    }
}

/// Trains the default architecture on `corpus`; the precision is `T`.
pub fn train<T: Scalar>(corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutcome<T>> {
    Trainer::new(corpus, config.clone())?.run()
}

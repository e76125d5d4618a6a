//! Training snapshot, little-endian, written at epoch boundaries:
//!
//! ```text
//! "AUTS" | version u16 | scalar width u8 (4 or 8)
//! train config: learning_rate, beta1, beta2, epsilon f64; batch_size u32;
//!   epochs u32; clip f64; seed u64; class_weighting u8; val_fraction f64
//! corpus shape: video count u32, frame count u64
//! model config (as in checkpoints)
//! parameters, first moments, second moments (named tensors, f64 payload)
//! optimizer step u64
//! best model: flag u8, then metric f64, epoch u32, parameters
//! history: count u32, per epoch: epoch u32, five f64
//! ```
//!
//! Payloads are stored as f64 so both precisions round-trip bit for bit.

use std::path::Path;

use super::trainer::BestModel;
use super::{EpochRecord, OptimizerState, TrainConfig, Trainer};
use crate::binio::{read_file, write_file, ByteReader, ByteWriter};
use crate::data::{Corpus, AU_NAMES};
use crate::error::{Error, Result};
use crate::model::checkpoint::{read_config, read_tensor_body, read_tensors, write_config, write_tensor_body, write_tensors};
use crate::model::ModelParams;
use crate::numeric::{Scalar, Tensor};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"AUTS";
pub const SNAPSHOT_VERSION: u16 = 1;

fn write_moments<T: Scalar>(out: &mut ByteWriter, names: &[String], moments: &[Tensor<T>]) -> Result<()> {
    out.u32(moments.len() as u32);
    for (name, m) in names.iter().zip(moments) {
        out.str(name)?;
        write_tensor_body(out, m, true);
    }
    Ok(())
}

fn read_moments<T: Scalar>(r: &mut ByteReader<'_>, params: &ModelParams<T>) -> Result<Vec<Tensor<T>>> {
    let count = r.u32("moment count")? as usize;
    if count != params.params().len() {
        return Err(r.format(format!("snapshot holds {count} moments, model has {}", params.params().len())));
    }
    params
        .params()
        .iter()
        .map(|p| {
            let name = r.str("moment name")?;
            if name != p.name {
                return Err(r.format(format!("moment '{name}' found where '{}' was expected", p.name)));
            }
            read_tensor_body(r, &name, p.value.shape(), true)
        })
        .collect()
}

impl<T: Scalar> Trainer<'_, T> {
    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = ByteWriter::new();
        out.bytes(SNAPSHOT_MAGIC);
        out.u16(SNAPSHOT_VERSION);
        out.u8(std::mem::size_of::<T>() as u8);
        let c = &self.config;
        for v in [c.learning_rate, c.adam_beta1, c.adam_beta2, c.adam_epsilon] {
            out.f64(v);
        }
        out.u32(c.batch_size as u32);
        out.u32(c.epochs as u32);
        out.f64(c.grad_clip_global_norm);
        out.u64(c.seed);
        out.u8(u8::from(c.class_weighting));
        out.f64(c.val_fraction);
        out.u32(self.corpus.videos.len() as u32);
        out.u64(self.corpus.frame_count() as u64);
        write_config(&mut out, self.params.config())?;
        write_tensors(&mut out, self.params.params(), "", true)?;
        let names: Vec<String> = self.params.params().iter().map(|p| p.name.clone()).collect();
        write_moments(&mut out, &names, &self.optimizer.first_moment)?;
        write_moments(&mut out, &names, &self.optimizer.second_moment)?;
        out.u64(self.optimizer.step);
        match &self.best {
            Some(b) => {
                out.u8(1);
                out.f64(b.metric);
                out.u32(b.epoch as u32);
                write_tensors(&mut out, b.params.params(), "", true)?;
            }
            None => out.u8(0),
        }
        out.u32(self.history.len() as u32);
        for h in &self.history {
            out.u32(h.epoch as u32);
            for v in [h.train_loss, h.val_loss, h.val_accuracy, h.val_f1, h.val_metric] {
                out.f64(v);
            }
        }
        write_file(path.as_ref(), &out.into_inner())
    }
}

impl<'c, T: Scalar> Trainer<'c, T> {
    /// Restores a trainer from a snapshot of a run on the same corpus. The
    /// stored config wins, except that `epochs` may be raised to continue.
    pub fn resume(corpus: &'c Corpus, path: impl AsRef<Path>, epochs: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        let mut r = ByteReader::new(&bytes, path);
        let magic = r.take(4, "magic").map_err(|_| r.format("file too short for snapshot magic"))?;
        if magic != SNAPSHOT_MAGIC {
            return Err(r.format(format!("bad magic {:?}, expected \"AUTS\"", String::from_utf8_lossy(magic))));
        }
        let version = r.u16("version")?;
        if version != SNAPSHOT_VERSION {
            return Err(r.format(format!(
                "snapshot version {version} is not supported (expected version {SNAPSHOT_VERSION})"
            )));
        }
        let width = r.u8("scalar width")? as usize;
        if width != std::mem::size_of::<T>() {
            return Err(r.format(format!(
                "snapshot was written with {width}-byte scalars, resuming with {}-byte scalars",
                std::mem::size_of::<T>()
            )));
        }
        let mut config = TrainConfig {
            learning_rate: r.f64("learning_rate")?,
            adam_beta1: r.f64("adam_beta1")?,
            adam_beta2: r.f64("adam_beta2")?,
            adam_epsilon: r.f64("adam_epsilon")?,
            batch_size: r.u32("batch_size")? as usize,
            epochs: r.u32("epochs")? as usize,
            grad_clip_global_norm: r.f64("grad_clip_global_norm")?,
            seed: r.u64("seed")?,
            class_weighting: r.u8("class_weighting")? != 0,
            precision: T::PRECISION,
            val_fraction: r.f64("val_fraction")?,
        };
        let videos = r.u32("video count")? as usize;
        let frames = r.u64("frame count")? as usize;
        if videos != corpus.videos.len() || frames != corpus.frame_count() {
            return Err(r.format(format!(
                "snapshot was taken on {videos} videos / {frames} frames, corpus has {} / {}",
                corpus.videos.len(),
                corpus.frame_count()
            )));
        }
        let mut model_config = read_config(&mut r)?;
        model_config.au_order = AU_NAMES.iter().map(|s| s.to_string()).collect();
        let mut params = ModelParams::<T>::zeros(model_config).map_err(|e| r.format(e.to_string()))?;
        read_tensors(&mut r, params.params_mut(), "", true)?;
        let first_moment = read_moments(&mut r, &params)?;
        let second_moment = read_moments(&mut r, &params)?;
        let step = r.u64("optimizer step")?;
        let best = match r.u8("best flag")? {
            0 => None,
            1 => {
                let metric = r.f64("best metric")?;
                let epoch = r.u32("best epoch")? as usize;
                let mut bp = params.clone();
                read_tensors(&mut r, bp.params_mut(), "", true)?;
                Some(BestModel { metric, epoch, params: bp })
            }
            other => {
                let at = r.position() - 1;
                return Err(r.corrupt(at, format!("best-model flag {other} is neither 0 nor 1")));
            }
        };
        let n = r.u32("history length")? as usize;
        let mut history = Vec::with_capacity(n);
        for _ in 0..n {
            history.push(EpochRecord {
                epoch: r.u32("epoch")? as usize,
                train_loss: r.f64("train_loss")?,
                val_loss: r.f64("val_loss")?,
                val_accuracy: r.f64("val_accuracy")?,
                val_f1: r.f64("val_f1")?,
                val_metric: r.f64("val_metric")?,
            });
        }
        r.finish()?;

        if let Some(e) = epochs {
            if e < history.len() {
                return Err(Error::Config(format!(
                    "epochs = {e} is below the {} epochs already completed",
                    history.len()
                )));
            }
            config.epochs = e;
        }
        let mut trainer = Trainer::with_model(corpus, config, params)?;
        trainer.optimizer = OptimizerState {
            first_moment,
            second_moment,
            step,
        };
        trainer.best = best;
        trainer.history = history;
        Ok(trainer)
    }
}

//! On-disk corpus format and ABAW-style label files.
//!
//! Corpus layout, little-endian:
//!
//! ```text
//! "AUC1" | version u16 | H u16 | W u16 | video count u32
//! per video: id length u16, UTF-8 id, frame count u32
//! per frame: gray H*W u8 | edge H*W u8 | 146 x f32 landmarks | 8 x i8 labels
//! ```

use std::path::{Path, PathBuf};

use crate::binio::{read_file, write_file, ByteReader, ByteWriter};
use crate::data::{
    Corpus, FrameSample, LabelVector, VideoSequence, AU_COUNT, AU_NAMES, DIFF_LEN, LANDMARK_COUNT,
};
use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub const CORPUS_MAGIC: &[u8; 4] = b"AUC1";
pub const CORPUS_VERSION: u16 = 1;
pub const CORPUS_FILE_NAME: &str = "corpus.auc";
const CORPUS_EXTENSION: &str = "auc";

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode(corpus: &Corpus) -> Result<Vec<u8>> {
    let (h, w) = corpus
        .videos
        .first()
        .map(|v| (v.frames()[0].height(), v.frames()[0].width()))
        .unwrap_or((0, 0));
    let dim = |n: usize| {
        u16::try_from(n).map_err(|_| Error::contract("store_corpus", format!("image extent {n} exceeds u16")))
    };
    let mut out = ByteWriter::new();
    out.bytes(CORPUS_MAGIC);
    out.u16(CORPUS_VERSION);
    out.u16(dim(h)?);
    out.u16(dim(w)?);
    out.u32(corpus.videos.len() as u32);
    for video in &corpus.videos {
        out.str(video.video_id())?;
        out.u32(video.len() as u32);
        for f in video.frames() {
            if f.height() != h || f.width() != w {
                return Err(Error::contract(
                    "store_corpus",
                    format!(
                        "video '{}' frame {} is {}x{}, corpus is {h}x{w}",
                        video.video_id(),
                        f.frame_index,
                        f.height(),
                        f.width()
                    ),
                ));
            }
            f.gray.data().iter().for_each(|&v| out.u8(to_byte(v)));
            f.edge.data().iter().for_each(|&v| out.u8(to_byte(v)));
            f.landmarks.data().iter().for_each(|&v| out.f32(v));
            f.labels.iter().for_each(|&l| out.i8(l));
        }
    }
    Ok(out.into_inner())
}

fn decode(bytes: &[u8], path: &Path) -> Result<Corpus> {
    let mut r = ByteReader::new(bytes, path);
    let magic = r.take(4, "magic").map_err(|_| r.format("file too short for corpus magic"))?;
    if magic != CORPUS_MAGIC {
        return Err(r.format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(CORPUS_MAGIC)
        )));
    }
    let version = r.u16("version")?;
    if version != CORPUS_VERSION {
        return Err(r.format(format!(
            "unsupported corpus version {version} (this build reads version {CORPUS_VERSION})"
        )));
    }
    let h = r.u16("image height")? as usize;
    let w = r.u16("image width")? as usize;
    let count = r.u32("video count")? as usize;
    if count > 0 && (h == 0 || w == 0) {
        return Err(r.format(format!("image extent {h}x{w} is empty")));
    }
    let mut videos = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id_offset = r.position();
        let video_id = r.str("video id")?;
        let frames_n = r.u32("frame count")? as usize;
        let mut frames = Vec::with_capacity(frames_n.min(1 << 16));
        for t in 0..frames_n {
            let gray = r.take(h * w, "gray image")?;
            let gray = Tensor::from_vec(&[1, h, w], gray.iter().map(|&b| f32::from(b) / 255.0).collect())?;
            let edge = r.take(h * w, "edge image")?;
            let edge = Tensor::from_vec(&[1, h, w], edge.iter().map(|&b| f32::from(b) / 255.0).collect())?;
            let mut lm = Vec::with_capacity(DIFF_LEN);
            for _ in 0..DIFF_LEN {
                lm.push(r.f32("landmarks")?);
            }
            let label_offset = r.position();
            let mut labels: LabelVector = [0; AU_COUNT];
            for l in labels.iter_mut() {
                *l = r.i8("labels")?;
            }
            if let Some(i) = labels.iter().position(|l| !matches!(l, -1..=1)) {
                return Err(r.corrupt(
                    label_offset + i,
                    format!("{} label value {} is not 1, 0 or -1", AU_NAMES[i], labels[i]),
                ));
            }
            frames.push(FrameSample {
                video_id: video_id.clone(),
                frame_index: t,
                gray,
                edge,
                landmarks: Tensor::from_vec(&[LANDMARK_COUNT, 2], lm)?,
                labels,
            });
        }
        let video = VideoSequence::new(video_id, frames).map_err(|e| r.corrupt(id_offset, e.to_string()))?;
        videos.push(video);
    }
    r.finish()?;
    Ok(Corpus::new(videos))
}

/// Writes the corpus to `dir/corpus.auc`, creating `dir` if needed.
pub fn store_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let path = dir.as_ref().join(CORPUS_FILE_NAME);
    let bytes = encode(corpus)?;
    write_file(&path, &bytes)?;
    Ok(path)
}

/// Reads a corpus file, or every `*.auc` file of a directory in name order.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == CORPUS_EXTENSION))
            .collect();
        if files.is_empty() {
            return Err(Error::EmptyCorpus(path.to_path_buf()));
        }
        files.sort();
        let mut videos = Vec::new();
        for f in files {
            videos.extend(decode(&read_file(&f)?, &f)?.videos);
        }
        Ok(Corpus::new(videos))
    } else {
        decode(&read_file(path)?, path)
    }
}

/// Reads one line of 8 comma-separated AU labels per frame.
///
/// A leading header line (any non-numeric first field) is skipped.
pub fn read_label_csv(path: impl AsRef<Path>) -> Result<Vec<LabelVector>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fmt = |line: usize, detail: String| Error::Format {
        path: path.to_path_buf(),
        detail: format!("line {line}: {detail}"),
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if n == 0 && fields[0].parse::<i32>().is_err() {
            continue;
        }
        if fields.len() != AU_COUNT {
            return Err(fmt(line_no, format!("expected {AU_COUNT} values, found {}", fields.len())));
        }
        let mut labels: LabelVector = [0; AU_COUNT];
        for (slot, field) in labels.iter_mut().zip(&fields) {
            *slot = match field.parse::<i8>() {
                Ok(v @ -1..=1) => v,
                _ => return Err(fmt(line_no, format!("'{field}' is not one of 1, 0, -1"))),
            };
        }
        out.push(labels);
    }
    Ok(out)
}

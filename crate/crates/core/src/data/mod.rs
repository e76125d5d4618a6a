//! Frames, videos and corpora, plus preprocessing and the synthetic
//! corpus generator.

mod edge;
mod io;
mod landmarks;
mod synth;

pub use edge::sobel_edge;
pub use io::{load_corpus, read_label_csv, store_corpus, CORPUS_FILE_NAME, CORPUS_MAGIC, CORPUS_VERSION};
pub use landmarks::{
    landmark_diff, landmark_template, normalize_landmarks, LandmarkGroup, DIFF_LEN, DIFF_SCALE,
    LANDMARK_COUNT, LANDMARK_GROUPS,
};
pub use synth::{
    displaced_landmarks, generate_synthetic, stationary_activation_rates, Expression, SynthConfig, AU_DISPLACEMENT,
};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Number of action units predicted per frame.
pub const AU_COUNT: usize = 8;

/// Fixed AU order used for labels, predictions and the decoder queries.
pub const AU_NAMES: [&str; AU_COUNT] = ["AU1", "AU2", "AU4", "AU6", "AU12", "AU15", "AU20", "AU25"];

/// Side length of the square face crops.
pub const IMAGE_SIZE: usize = 64;

/// Label value for an unannotated AU; excluded from loss and metrics.
pub const UNLABELED: i8 = -1;

/// Per-frame AU annotation in [`AU_NAMES`] order: 1, 0 or [`UNLABELED`].
pub type LabelVector = [i8; AU_COUNT];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionUnit {
    Au1,
    Au2,
    Au4,
    Au6,
    Au12,
    Au15,
    Au20,
    Au25,
}

impl ActionUnit {
    pub const ALL: [ActionUnit; AU_COUNT] = [
        ActionUnit::Au1,
        ActionUnit::Au2,
        ActionUnit::Au4,
        ActionUnit::Au6,
        ActionUnit::Au12,
        ActionUnit::Au15,
        ActionUnit::Au20,
        ActionUnit::Au25,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        AU_NAMES[self.index()]
    }
}

pub(crate) fn check_labels(labels: &LabelVector) -> Result<()> {
    match labels.iter().position(|l| !matches!(l, -1..=1)) {
        Some(i) => Err(Error::contract(
            "labels",
            format!("{} label {} is not one of 1, 0, -1", AU_NAMES[i], labels[i]),
        )),
        None => Ok(()),
    }
}

/// One preprocessed video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub video_id: String,
    pub frame_index: usize,
    /// `1 x H x W`, values in `[0, 1]`.
    pub gray: Tensor<f32>,
    /// `1 x H x W`, values in `[0, 1]`.
    pub edge: Tensor<f32>,
    /// `73 x 2`, `(x, y)` normalized by image width and height.
    pub landmarks: Tensor<f32>,
    pub labels: LabelVector,
}

impl FrameSample {
    /// Builds a frame from an 8-bit face crop and pixel-space landmarks.
    ///
    /// The gray image is scaled to `[0, 1]`, the edge channel is computed
    /// with [`sobel_edge`], and landmarks are normalized by the image
    /// extent.
    pub fn from_raw(
        video_id: impl Into<String>,
        frame_index: usize,
        pixels: &[u8],
        width: usize,
        height: usize,
        landmarks_px: &[[f64; 2]],
        labels: LabelVector,
    ) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::contract(
                "frame",
                format!("{} pixels for a {width}x{height} image", pixels.len()),
            ));
        }
        check_labels(&labels)?;
        let gray = Tensor::from_vec(
            &[1, height, width],
            pixels.iter().map(|&p| f32::from(p) / 255.0).collect(),
        )?;
        let edge = sobel_edge(&gray)?;
        let landmarks = normalize_landmarks(landmarks_px, width, height)?;
        Ok(FrameSample {
            video_id: video_id.into(),
            frame_index,
            gray,
            edge,
            landmarks,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.gray.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.gray.shape()[2]
    }

    /// Gray and edge stacked as the two channels of a `2 x H x W` tensor.
    pub fn image_input(&self) -> Tensor<f32> {
        let mut data = Vec::with_capacity(2 * self.gray.len());
        data.extend_from_slice(self.gray.data());
        data.extend_from_slice(self.edge.data());
        Tensor::from_vec(&[2, self.height(), self.width()], data).expect("gray and edge share a shape")
    }

    pub fn has_any_label(&self) -> bool {
        self.labels.iter().any(|&l| l != UNLABELED)
    }
}

/// An ordered run of frames from one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    video_id: String,
    frames: Vec<FrameSample>,
}

/// Minimum frames per video: the two-sided landmark difference needs a
/// predecessor and a successor for at least one frame.
pub const MIN_VIDEO_FRAMES: usize = 3;

impl VideoSequence {
    pub fn new(video_id: impl Into<String>, frames: Vec<FrameSample>) -> Result<Self> {
        const OP: &str = "video";
        let video_id = video_id.into();
        if frames.len() < MIN_VIDEO_FRAMES {
            return Err(Error::contract(
                OP,
                format!("video '{video_id}' has {} frames, need at least {MIN_VIDEO_FRAMES}", frames.len()),
            ));
        }
        let first = frames[0].frame_index;
        let shape = frames[0].gray.shape().to_vec();
        for (i, f) in frames.iter().enumerate() {
            if f.frame_index != first + i {
                return Err(Error::contract(
                    OP,
                    format!(
                        "video '{video_id}' frame {i} has index {}, expected {}",
                        f.frame_index,
                        first + i
                    ),
                ));
            }
            if f.video_id != video_id {
                return Err(Error::contract(
                    OP,
                    format!("frame {i} belongs to '{}', not '{video_id}'", f.video_id),
                ));
            }
            if f.gray.shape() != shape.as_slice() || f.edge.shape() != shape.as_slice() {
                return Err(Error::contract(OP, format!("frame {i} image shape differs from frame 0")));
            }
            if f.landmarks.shape() != [LANDMARK_COUNT, 2] {
                return Err(Error::contract(
                    OP,
                    format!("frame {i} has landmark shape {:?}, expected [73, 2]", f.landmarks.shape()),
                ));
            }
            check_labels(&f.labels)?;
        }
        Ok(VideoSequence { video_id, frames })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn frames(&self) -> &[FrameSample] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// The same video played backwards, frame indices renumbered.
    pub fn reversed(&self) -> VideoSequence {
        let first = self.frames[0].frame_index;
        let frames = self
            .frames
            .iter()
            .rev()
            .enumerate()
            .map(|(i, f)| FrameSample {
                frame_index: first + i,
                ..f.clone()
            })
            .collect();
        VideoSequence {
            video_id: self.video_id.clone(),
            frames,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub videos: Vec<VideoSequence>,
}

impl Corpus {
    pub fn new(videos: Vec<VideoSequence>) -> Self {
        Corpus { videos }
    }

    pub fn frame_count(&self) -> usize {
        self.videos.iter().map(VideoSequence::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    /// Fraction of labeled decisions that are positive, per AU.
    pub fn activation_rates(&self) -> [f64; AU_COUNT] {
        let mut pos = [0usize; AU_COUNT];
        let mut total = [0usize; AU_COUNT];
        for f in self.videos.iter().flat_map(|v| v.frames()) {
            for (i, &l) in f.labels.iter().enumerate() {
                if l != UNLABELED {
                    total[i] += 1;
                    pos[i] += usize::from(l == 1);
                }
            }
        }
        std::array::from_fn(|i| if total[i] == 0 { 0.0 } else { pos[i] as f64 / total[i] as f64 })
    }
}

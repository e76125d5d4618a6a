use std::f64::consts::PI;
use std::ops::Range;

use crate::data::VideoSequence;
use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub const LANDMARK_COUNT: usize = 73;

/// Length of a flattened landmark difference vector (`x, y` per point).
pub const DIFF_LEN: usize = 2 * LANDMARK_COUNT;

/// Gain applied to landmark differences so typical motion lands in the
/// responsive range of `tanh`.
pub const DIFF_SCALE: f32 = 10.0;

/// Named index ranges of the 73-point layout.
///
/// Brow points run outer to inner. Eye and outer-mouth points run around
/// the contour starting at the right-hand corner, lower half first (image
/// `y` grows downwards).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandmarkGroup {
    Jaw,
    LeftBrow,
    RightBrow,
    Nose,
    LeftEye,
    RightEye,
    MouthOuter,
    MouthInnerUpper,
    MouthInnerLower,
}

pub const LANDMARK_GROUPS: [LandmarkGroup; 9] = [
    LandmarkGroup::Jaw,
    LandmarkGroup::LeftBrow,
    LandmarkGroup::RightBrow,
    LandmarkGroup::Nose,
    LandmarkGroup::LeftEye,
    LandmarkGroup::RightEye,
    LandmarkGroup::MouthOuter,
    LandmarkGroup::MouthInnerUpper,
    LandmarkGroup::MouthInnerLower,
];

impl LandmarkGroup {
    pub fn range(self) -> Range<usize> {
        match self {
            LandmarkGroup::Jaw => 0..17,
            LandmarkGroup::LeftBrow => 17..23,
            LandmarkGroup::RightBrow => 23..29,
            LandmarkGroup::Nose => 29..38,
            LandmarkGroup::LeftEye => 38..46,
            LandmarkGroup::RightEye => 46..54,
            LandmarkGroup::MouthOuter => 54..66,
            LandmarkGroup::MouthInnerUpper => 66..70,
            LandmarkGroup::MouthInnerLower => 70..73,
        }
    }

    /// Whether the group is drawn as a closed loop when rendered.
    pub fn is_closed(self) -> bool {
        matches!(
            self,
            LandmarkGroup::LeftEye | LandmarkGroup::RightEye | LandmarkGroup::MouthOuter
        )
    }
}

pub(crate) const MOUTH_CENTER: (f64, f64) = (0.5, 0.75);

/// Neutral face layout in normalized image coordinates.
pub fn landmark_template() -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(LANDMARK_COUNT);

    // jaw: lower half ellipse from the left temple through the chin
    for k in 0..17 {
        let a = PI * (1.0 - k as f64 / 16.0);
        pts.push([0.5 + 0.38 * a.cos(), 0.40 + 0.52 * a.sin()]);
    }
    // brows, outer to inner, with a slight arch
    for (outer, inner) in [(0.20, 0.42), (0.80, 0.58)] {
        for s in 0..6 {
            let t = s as f64 / 5.0;
            pts.push([outer + (inner - outer) * t, 0.30 - 0.02 * (PI * t).sin()]);
        }
    }
    // nose: bridge then base
    for k in 0..4 {
        pts.push([0.5, 0.38 + 0.06 * k as f64]);
    }
    for k in 0..5 {
        pts.push([0.44 + 0.03 * k as f64, 0.60]);
    }
    // eyes
    for cx in [0.31, 0.69] {
        for k in 0..8 {
            let a = k as f64 * PI / 4.0;
            pts.push([cx + 0.07 * a.cos(), 0.40 + 0.03 * a.sin()]);
        }
    }
    // outer lip contour, lower lip slightly fuller
    let (mx, my) = MOUTH_CENTER;
    for k in 0..12 {
        let a = k as f64 * PI / 6.0;
        let ry = if a.sin() > 0.0 { 0.05 } else { 0.04 };
        pts.push([mx + 0.14 * a.cos(), my + ry * a.sin()]);
    }
    for dx in [-0.09, -0.03, 0.03, 0.09] {
        pts.push([mx + dx, my - 0.005]);
    }
    for dx in [-0.06, 0.0, 0.06] {
        pts.push([mx + dx, my + 0.005]);
    }
    debug_assert_eq!(pts.len(), LANDMARK_COUNT);
    pts
}

/// Converts pixel-space points to `[0, 1]` coordinates.
pub fn normalize_landmarks(points_px: &[[f64; 2]], width: usize, height: usize) -> Result<Tensor<f32>> {
    if points_px.len() != LANDMARK_COUNT {
        return Err(Error::contract(
            "normalize_landmarks",
            format!("expected {LANDMARK_COUNT} landmarks, got {}", points_px.len()),
        ));
    }
    if width == 0 || height == 0 {
        return Err(Error::contract("normalize_landmarks", "image extent must be positive"));
    }
    let data = points_px
        .iter()
        .flat_map(|&[x, y]| [(x / width as f64) as f32, (y / height as f64) as f32])
        .collect();
    Tensor::from_vec(&[LANDMARK_COUNT, 2], data)
}

/// Scaled landmark motion around frame `t`:
/// `DIFF_SCALE * (L[min(t+1, T-1)] - L[max(t-1, 0)])`, flattened row-major.
pub fn landmark_diff(video: &VideoSequence, t: usize) -> Result<Tensor<f32>> {
    let n = video.len();
    if t >= n {
        return Err(Error::contract(
            "landmark_diff",
            format!("frame {t} out of range for video '{}' with {n} frames", video.video_id()),
        ));
    }
    let next = video.frames()[(t + 1).min(n - 1)].landmarks.data();
    let prev = video.frames()[t.saturating_sub(1)].landmarks.data();
    Ok(Tensor::vector(
        next.iter().zip(prev).map(|(&a, &b)| DIFF_SCALE * (a - b)).collect(),
    ))
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::landmarks::{landmark_template, LandmarkGroup};
use crate::data::{
    sobel_edge, ActionUnit, Corpus, FrameSample, LabelVector, VideoSequence, AU_COUNT,
    IMAGE_SIZE, LANDMARK_COUNT, MIN_VIDEO_FRAMES,
};
use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Peak landmark displacement of a fully active AU, in normalized units.
pub const AU_DISPLACEMENT: f64 = 0.04;

/// Frames needed for an AU to ramp fully on or off.
const RAMP_FRAMES: f64 = 3.0;

const BACKGROUND: f64 = 0.2;
const FOREGROUND: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub videos: usize,
    pub frames_per_video: usize,
    pub seed: u64,
    pub stay_probability: f64,
    pub label_flip_noise: f64,
    pub landmark_jitter_sigma: f64,
    pub pixel_noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            videos: 50,
            frames_per_video: 60,
            seed: 7,
            stay_probability: 0.92,
            label_flip_noise: 0.0,
            landmark_jitter_sigma: 0.005,
            pixel_noise_sigma: 0.02,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::Config(detail));
        if self.frames_per_video < MIN_VIDEO_FRAMES {
            return bad(format!(
                "frames_per_video = {} is below the minimum of {MIN_VIDEO_FRAMES}",
                self.frames_per_video
            ));
        }
        for (key, p) in [
            ("stay_probability", self.stay_probability),
            ("label_flip_noise", self.label_flip_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{key} = {p} is outside [0, 1]"));
            }
        }
        for (key, s) in [
            ("landmark_jitter_sigma", self.landmark_jitter_sigma),
            ("pixel_noise_sigma", self.pixel_noise_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("{key} = {s} must be a finite value >= 0"));
            }
        }
        Ok(())
    }
}

/// Expression prototypes driving the synthetic label chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expression {
    Neutral,
    Surprise,
    Happy,
    Sad,
    Fear,
}

impl Expression {
    pub const ALL: [Expression; 5] = [
        Expression::Neutral,
        Expression::Surprise,
        Expression::Happy,
        Expression::Sad,
        Expression::Fear,
    ];

    pub fn active_units(self) -> &'static [ActionUnit] {
        use ActionUnit::*;
        match self {
            Expression::Neutral => &[],
            Expression::Surprise => &[Au1, Au2, Au25],
            Expression::Happy => &[Au6, Au12, Au25],
            Expression::Sad => &[Au1, Au4, Au15],
            Expression::Fear => &[Au1, Au2, Au4, Au20, Au25],
        }
    }

    pub fn labels(self) -> LabelVector {
        let mut out = [0; AU_COUNT];
        for au in self.active_units() {
            out[au.index()] = 1;
        }
        out
    }
}

/// Long-run per-AU activation rate of a noiseless generator. The chain is
/// symmetric, so every prototype is equally likely in the limit.
pub fn stationary_activation_rates() -> [f64; AU_COUNT] {
    let n = Expression::ALL.len() as f64;
    let mut rates = [0.0; AU_COUNT];
    for e in Expression::ALL {
        for au in e.active_units() {
            rates[au.index()] += 1.0 / n;
        }
    }
    rates
}

/// Template landmarks displaced by per-AU intensities in `[0, 1]`.
pub fn displaced_landmarks(intensity: &[f64; AU_COUNT]) -> Vec<[f64; 2]> {
    use ActionUnit::*;
    let d = AU_DISPLACEMENT;
    let at = |au: ActionUnit| intensity[au.index()];
    let mut pts = landmark_template();

    for (group, inward) in [(LandmarkGroup::LeftBrow, 1.0), (LandmarkGroup::RightBrow, -1.0)] {
        for (s, i) in group.range().enumerate() {
            let inner = s as f64 / 5.0;
            pts[i][1] += -d * inner * at(Au1) - d * (1.0 - inner) * at(Au2) + d * at(Au4);
            pts[i][0] += inward * 0.5 * d * at(Au4);
        }
    }

    for group in [LandmarkGroup::LeftEye, LandmarkGroup::RightEye] {
        let base = group.range().start;
        for (k, w) in [(1, 0.6), (2, 1.0), (3, 0.6)] {
            pts[base + k][1] -= d * w * at(Au6);
        }
    }

    // mouth corners (weight 1) and their contour neighbours (weight 0.5)
    let outer = LandmarkGroup::MouthOuter.range().start;
    for (k, w, side) in [
        (0, 1.0, 1.0),
        (1, 0.5, 1.0),
        (11, 0.5, 1.0),
        (6, 1.0, -1.0),
        (5, 0.5, -1.0),
        (7, 0.5, -1.0),
    ] {
        let p = &mut pts[outer + k];
        p[1] += -d * w * at(Au12) + d * w * at(Au15);
        p[0] += side * (0.5 * d * w * at(Au12) + d * w * at(Au20));
    }

    for i in LandmarkGroup::MouthInnerUpper.range() {
        pts[i][1] -= 0.5 * d * at(Au25);
    }
    for i in LandmarkGroup::MouthInnerLower.range() {
        pts[i][1] += 0.5 * d * at(Au25);
    }
    pts
}

fn quantize(v: f64) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() as f32 / 255.0
}

/// Draws the brow, eye and mouth contours with a soft one-pixel pen.
fn render(points: &[[f64; 2]], size: usize) -> Vec<f64> {
    let mut coverage = vec![0.0f64; size * size];
    let scale = size as f64;
    let groups = [
        LandmarkGroup::LeftBrow,
        LandmarkGroup::RightBrow,
        LandmarkGroup::LeftEye,
        LandmarkGroup::RightEye,
        LandmarkGroup::MouthOuter,
        LandmarkGroup::MouthInnerUpper,
        LandmarkGroup::MouthInnerLower,
    ];
    for group in groups {
        let r = group.range();
        let n = r.len();
        let seg_count = if group.is_closed() { n } else { n - 1 };
        for s in 0..seg_count {
            let a = points[r.start + s];
            let b = points[r.start + (s + 1) % n];
            let (ax, ay) = (a[0] * scale, a[1] * scale);
            let (bx, by) = (b[0] * scale, b[1] * scale);
            let lo_x = (ax.min(bx) - 2.0).floor().max(0.0) as usize;
            let hi_x = ((ax.max(bx) + 2.0).ceil() as usize).min(size - 1);
            let lo_y = (ay.min(by) - 2.0).floor().max(0.0) as usize;
            let hi_y = ((ay.max(by) + 2.0).ceil() as usize).min(size - 1);
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            for py in lo_y..=hi_y {
                for px in lo_x..=hi_x {
                    let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
                    let t = if len2 > 0.0 {
                        (((cx - ax) * dx + (cy - ay) * dy) / len2).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let dist = ((cx - ax - t * dx).powi(2) + (cy - ay - t * dy).powi(2)).sqrt();
                    let cov = (1.5 - dist).clamp(0.0, 1.0);
                    let slot = &mut coverage[py * size + px];
                    *slot = slot.max(cov);
                }
            }
        }
    }
    coverage
        .into_iter()
        .map(|c| BACKGROUND + (FOREGROUND - BACKGROUND) * c)
        .collect()
}

fn generate_video(config: &SynthConfig, video: usize) -> Result<VideoSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(video as u64);
    let jitter = Normal::new(0.0, config.landmark_jitter_sigma).expect("validated sigma");
    let pixel_noise = Normal::new(0.0, config.pixel_noise_sigma).expect("validated sigma");
    let video_id = format!("synth_{video:04}");

    let mut state = Expression::ALL[rng.random_range(0..Expression::ALL.len())];
    let mut intensity = state.labels().map(f64::from);
    let mut frames = Vec::with_capacity(config.frames_per_video);

    for t in 0..config.frames_per_video {
        if t > 0 && !rng.random_bool(config.stay_probability) {
            let current = Expression::ALL.iter().position(|&e| e == state).expect("known state");
            let mut next = rng.random_range(0..Expression::ALL.len() - 1);
            if next >= current {
                next += 1;
            }
            state = Expression::ALL[next];
        }
        let target = state.labels();
        for (level, &goal) in intensity.iter_mut().zip(&target) {
            let goal = f64::from(goal);
            let step = 1.0 / RAMP_FRAMES;
            *level = if goal > *level {
                (*level + step).min(goal)
            } else {
                (*level - step).max(goal)
            };
        }

        let mut labels = target;
        for l in labels.iter_mut() {
            if config.label_flip_noise > 0.0 && rng.random_bool(config.label_flip_noise) {
                *l = 1 - *l;
            }
        }

        let points = displaced_landmarks(&intensity);
        let landmarks: Vec<f32> = points
            .iter()
            .flat_map(|p| [p[0], p[1]])
            .map(|v| (v + jitter.sample(&mut rng)) as f32)
            .collect();

        let gray: Vec<f32> = render(&points_from(&landmarks), IMAGE_SIZE)
            .into_iter()
            .map(|v| quantize(v + pixel_noise.sample(&mut rng)))
            .collect();
        let gray = Tensor::from_vec(&[1, IMAGE_SIZE, IMAGE_SIZE], gray)?;
        let edge = sobel_edge(&gray)?.map(|v| quantize(f64::from(v)));

        frames.push(FrameSample {
            video_id: video_id.clone(),
            frame_index: t,
            gray,
            edge,
            landmarks: Tensor::from_vec(&[LANDMARK_COUNT, 2], landmarks)?,
            labels,
        });
    }
    VideoSequence::new(video_id, frames)
}

fn points_from(flat: &[f32]) -> Vec<[f64; 2]> {
    flat.chunks_exact(2)
        .map(|c| [f64::from(c[0]), f64::from(c[1])])
        .collect()
}

/// Generates a labelled corpus whose AU dynamics follow a Markov chain
/// over expression prototypes.
///
/// Every video draws from its own stream of a seeded ChaCha generator, so
/// the output depends only on the configuration. Pixel values are
/// quantized to 8-bit levels so the corpus survives the on-disk format
/// unchanged.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let videos = (0..config.videos)
        .map(|v| generate_video(config, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(videos))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            videos: 3,
            frames_per_video: 12,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(generate_synthetic(&small(3)).unwrap(), generate_synthetic(&small(3)).unwrap());
        assert_ne!(generate_synthetic(&small(3)).unwrap(), generate_synthetic(&small(4)).unwrap());
    }

    #[test]
    fn happy_prototype_labels() {
        let l = Expression::Happy.labels();
        let active: Vec<&str> = ActionUnit::ALL
            .iter()
            .filter(|au| l[au.index()] == 1)
            .map(|au| au.name())
            .collect();
        assert_eq!(active, ["AU6", "AU12", "AU25"]);
        assert_eq!(l.iter().filter(|&&v| v == 0).count(), 5);
    }

    #[test]
    fn noiseless_labels_match_a_prototype() {
        let corpus = generate_synthetic(&small(11)).unwrap();
        let patterns: Vec<LabelVector> = Expression::ALL.iter().map(|e| e.labels()).collect();
        for f in corpus.videos.iter().flat_map(|v| v.frames()) {
            assert!(patterns.contains(&f.labels), "{:?}", f.labels);
        }
    }

    #[test]
    fn images_are_quantized_and_in_range() {
        let corpus = generate_synthetic(&small(5)).unwrap();
        let f = &corpus.videos[0].frames()[0];
        for &v in f.gray.data().iter().chain(f.edge.data()) {
            assert!((0.0..=1.0).contains(&v));
            assert_eq!(quantize(f64::from(v)), v);
        }
        assert_eq!(f.edge.data().iter().cloned().fold(0.0, f32::max), 1.0);
    }

    #[test]
    fn rejects_out_of_range_config() {
        let mut c = small(1);
        c.stay_probability = 1.5;
        assert!(generate_synthetic(&c).is_err());
        let mut c = small(1);
        c.pixel_noise_sigma = -0.1;
        assert!(generate_synthetic(&c).is_err());
        let mut c = small(1);
        c.frames_per_video = 2;
        assert!(generate_synthetic(&c).is_err());
    }

    #[test]
    fn onset_ramp_takes_three_frames() {
        let mut c = small(2);
        c.landmark_jitter_sigma = 0.0;
        c.pixel_noise_sigma = 0.0;
        c.videos = 30;
        c.frames_per_video = 40;
        let corpus = generate_synthetic(&c).unwrap();
        let inner_brow = LandmarkGroup::LeftBrow.range().end - 1;
        let neutral = landmark_template()[inner_brow][1] as f32;
        // a switch into surprise after at least three brow-neutral frames
        let mut seen = false;
        for v in &corpus.videos {
            let f = v.frames();
            for t in 3..f.len().saturating_sub(3) {
                let brows_clear = |i: usize| f[i].labels[..3] == [0, 0, 0];
                let steady = |i: usize| f[i].labels == f[t].labels;
                if (t - 3..t).all(brows_clear)
                    && f[t].labels == Expression::Surprise.labels()
                    && (t + 1..=t + 3).all(steady)
                {
                    let y = |i: usize| f[i].landmarks.data()[2 * inner_brow + 1];
                    let step = (AU_DISPLACEMENT / 3.0) as f32;
                    assert!((y(t - 1) - neutral).abs() < 1e-6);
                    for k in 0..3 {
                        assert!((y(t + k) - (neutral - step * (k + 1) as f32)).abs() < 1e-5);
                    }
                    assert!((y(t + 3) - y(t + 2)).abs() < 1e-6);
                    seen = true;
                }
            }
        }
        assert!(seen, "no AU1 onset found in the sample");
    }
}

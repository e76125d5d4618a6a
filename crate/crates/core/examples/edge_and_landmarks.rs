//! Shows one synthetic frame: the gray image and its Sobel edge channel as
//! ASCII art, and the landmark motion fed to the dynamic branch.
//!
//!     cargo run --example edge_and_landmarks

use audetect::data::{generate_synthetic, landmark_diff, SynthConfig, AU_NAMES};
use audetect::numeric::Tensor;

fn ascii(image: &Tensor<f32>) {
    const RAMP: &[u8] = b" .:-=+*#%@";
    let (h, w) = (image.shape()[1], image.shape()[2]);
    for r in (0..h).step_by(2) {
        let line: String = (0..w)
            .map(|c| {
                let v = image.data()[r * w + c].clamp(0.0, 1.0);
                RAMP[((v * (RAMP.len() - 1) as f32).round()) as usize] as char
            })
            .collect();
        println!("{line}");
    }
}

fn main() -> audetect::Result<()> {
    let corpus = generate_synthetic(&SynthConfig {
        videos: 1,
        frames_per_video: 30,
        seed: 3,
        ..SynthConfig::default()
    })?;
    let video = &corpus.videos[0];
    // the frame whose landmarks move the most
    let (t, diff) = (0..video.len())
        .map(|t| (t, landmark_diff(video, t).expect("t in range")))
        .max_by(|a, b| {
            let n = |d: &Tensor<f32>| d.data().iter().map(|v| v * v).sum::<f32>();
            n(&a.1).total_cmp(&n(&b.1))
        })
        .expect("non-empty video");
    let frame = &video.frames()[t];
    let active: Vec<&str> = (0..AU_NAMES.len())
        .filter(|&i| frame.labels[i] == 1)
        .map(|i| AU_NAMES[i])
        .collect();
    println!("frame {t}, active AUs {active:?}");
    println!("-- gray --");
    ascii(&frame.gray);
    println!("-- edge --");
    ascii(&frame.edge);
    let moving = diff.data().chunks(2).filter(|p| p[0].abs() + p[1].abs() > 0.05).count();
    let max = diff.data().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    println!("landmark diff: {moving} of 73 points moving, largest component {max:.3}");
    Ok(())
}

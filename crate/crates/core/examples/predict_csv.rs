//! Writes per-video probability and decision CSVs for a freshly initialised
//! model, or for a checkpoint given as the first argument.
//!
//!     cargo run --example predict_csv -- [checkpoint.auck] [out_dir]

use std::path::PathBuf;

use audetect::data::{generate_synthetic, SynthConfig};
use audetect::eval::{evaluate, write_prediction_csv};
use audetect::model::{load_checkpoint, ModelConfig, ModelParams};

fn main() -> audetect::Result<()> {
    let mut args = std::env::args().skip(1);
    let params = match args.next() {
        Some(path) => load_checkpoint::<f32>(path)?,
        None => ModelParams::glorot(ModelConfig::default(), 7)?,
    };
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/example-predictions".into()));
    let corpus = generate_synthetic(&SynthConfig {
        videos: 2,
        frames_per_video: 20,
        ..SynthConfig::default()
    })?;
    let report = evaluate(&params, &corpus, 5)?;
    for track in &report.tracks {
        for file in write_prediction_csv(track, &out)? {
            println!("wrote {}", file.display());
        }
    }
    let first = std::fs::read_to_string(out.join(format!("{}.csv", report.tracks[0].video_id))).unwrap_or_default();
    for line in first.lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}

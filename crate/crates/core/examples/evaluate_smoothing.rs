//! Trains briefly, then scores the validation videos with majority filters
//! of several widths.
//!
//!     cargo run --release --example evaluate_smoothing

use audetect::data::{generate_synthetic, Corpus, SynthConfig};
use audetect::eval::{always_inactive_baseline, evaluate};
use audetect::training::{train, TrainConfig};

fn main() -> audetect::Result<()> {
    let corpus = generate_synthetic(&SynthConfig {
        videos: 12,
        frames_per_video: 40,
        ..SynthConfig::default()
    })?;
    let outcome = train::<f32>(&corpus, &TrainConfig { epochs: 4, learning_rate: 2e-3, ..TrainConfig::default() })?;
    let validation = Corpus::new(outcome.split.validation.iter().map(|&v| corpus.videos[v].clone()).collect());

    println!("always-inactive baseline {:.4}", always_inactive_baseline(&validation.activation_rates()));
    for window in [1, 3, 5, 7, 9] {
        let report = evaluate(&outcome.best, &validation, window)?;
        println!(
            "window {window}: unsmoothed {:.4}  smoothed {:.4}  (acc {:.4}, mean F1 {:.4})",
            report.unsmoothed.challenge_metric,
            report.smoothed.challenge_metric,
            report.smoothed.accuracy,
            report.smoothed.mean_f1
        );
    }
    Ok(())
}

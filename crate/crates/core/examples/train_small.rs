//! Trains on a small synthetic corpus epoch by epoch and prints the history.
//!
//!     cargo run --release --example train_small -- [epochs]

use audetect::data::{generate_synthetic, SynthConfig};
use audetect::training::{history_csv, TrainConfig, Trainer};

fn main() -> audetect::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let corpus = generate_synthetic(&SynthConfig {
        videos: 12,
        frames_per_video: 30,
        ..SynthConfig::default()
    })?;
    let config = TrainConfig {
        epochs,
        learning_rate: 2e-3,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::<f32>::new(&corpus, config)?;
    println!(
        "{} training / {} validation videos, class weights {:.2?}",
        trainer.split().train.len(),
        trainer.split().validation.len(),
        trainer.class_weights()
    );
    while !trainer.is_finished() {
        let r = trainer.run_epoch()?;
        println!("epoch {:>2}  train {:.4}  val {:.4}  metric {:.4}", r.epoch, r.train_loss, r.val_loss, r.val_metric);
    }
    let outcome = trainer.finish()?;
    println!("best epoch {} ({:.4})\n\n{}", outcome.best_epoch, outcome.best_metric, history_csv(&outcome.history));
    Ok(())
}

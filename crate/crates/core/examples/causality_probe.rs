//! Perturbs one row of the AU embedding table and shows which AU
//! probabilities move: only the queried AU and the ones after it.
//!
//!     cargo run --example causality_probe -- [row]

use audetect::data::AU_NAMES;
use audetect::model::{ModelConfig, ModelParams};
use audetect::numeric::Tensor;

fn main() -> audetect::Result<()> {
    let row: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3).min(7);
    let params = ModelParams::<f64>::glorot(ModelConfig::default(), 11)?;
    let h_fus = Tensor::vector((0..64).map(|i| ((i as f64) * 0.37).sin() * 0.8).collect());
    let before = params.classify_aus(&h_fus)?;

    let mut perturbed = params.clone();
    let dim = params.config().au_embedding_dim;
    for v in &mut perturbed.au_table_mut().data_mut()[row * dim..(row + 1) * dim] {
        *v += 0.3;
    }
    let after = perturbed.classify_aus(&h_fus)?;

    println!("perturbing the embedding of {}", AU_NAMES[row]);
    for i in 0..AU_NAMES.len() {
        let delta = after[i] - before[i];
        println!("{:<5} {:.6} -> {:.6}  {}", AU_NAMES[i], before[i], after[i], if delta == 0.0 { "unchanged".to_string() } else { format!("{delta:+.2e}") });
    }
    Ok(())
}

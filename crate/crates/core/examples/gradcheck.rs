//! Finite-difference check of the full model in double precision.
//!
//!     cargo run --release --example gradcheck -- [samples_per_tensor]
//!
//! `0` checks every component (several minutes).

use audetect::numeric::Selection;
use audetect::training::model_gradcheck;

fn main() -> audetect::Result<()> {
    let per_tensor: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(128);
    let selection = if per_tensor == 0 {
        Selection::All
    } else {
        Selection::Sample { per_tensor, seed: 7 }
    };
    let report = model_gradcheck(7, 1e-3, &selection)?;
    println!("components checked      {}", report.checked);
    println!("max relative error      {:.3e}", report.max_relative_error);
    println!("ReLU kink crossings     {}", report.kink_crossings);
    println!("max incl. kink crossings {:.3e}", report.max_relative_error_including_kinks);
    if let Some(w) = report.worst {
        println!("worst: {}[{}] analytic {:.6e} vs {:.6e}", w.param, w.index, w.analytic, w.estimate);
    }
    Ok(())
}

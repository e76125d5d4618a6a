//! Generates a synthetic corpus, writes it, reads it back and compares the
//! observed AU rates with the generator's long-run rates.
//!
//!     cargo run --example synth_corpus -- [out_dir]

use audetect::data::{generate_synthetic, load_corpus, stationary_activation_rates, store_corpus, SynthConfig, AU_NAMES};

fn main() -> audetect::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example-data".into());
    let config = SynthConfig {
        videos: 10,
        frames_per_video: 120,
        ..SynthConfig::default()
    };
    let corpus = generate_synthetic(&config)?;
    let path = store_corpus(&corpus, &out)?;
    let reloaded = load_corpus(&path)?;
    assert_eq!(reloaded, corpus);
    println!(
        "{} videos, {} frames -> {} ({} bytes)",
        corpus.videos.len(),
        corpus.frame_count(),
        path.display(),
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0)
    );

    let observed = corpus.activation_rates();
    let expected = stationary_activation_rates();
    println!("{:<6} {:>9} {:>9}", "AU", "observed", "long-run");
    for i in 0..AU_NAMES.len() {
        println!("{:<6} {:>9.3} {:>9.3}", AU_NAMES[i], observed[i], expected[i]);
    }
    Ok(())
}

//! One PASS/FAIL line per acceptance criterion, written straight to stdout
//! so it survives the test harness's output capture. Heavy tests share one
//! lock so runtimes are measured without contention.

mod common;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use audetect::cli::run;
use audetect::data::{
    generate_synthetic, landmark_diff, load_corpus, stationary_activation_rates, Corpus, SynthConfig, AU_COUNT,
};
use audetect::eval::{always_inactive_baseline, challenge_metric, evaluate, smooth, Decision, ScoredVideo};
use audetect::model::{load_checkpoint, ModelConfig, ModelParams};
use audetect::numeric::{conv2d, gru_cell, GruCellParams, Selection, Tensor};
use audetect::training::{loss, model_gradcheck, split_videos, TrainConfig};
use common::{check_primitive, naive_score, primitive_cases, random_tracks};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Validation metric of the first verified default run was 0.990; the
/// gate is frozen 0.02 below it.
const FROZEN_E2E_THRESHOLD: f64 = 0.97;
const E2E_THRESHOLD: f64 = 0.85;
const GRADCHECK_SAMPLES_PER_TENSOR: usize = 768;

static HEAVY: Mutex<()> = Mutex::new(());

fn heavy() -> MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(criterion: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "ACCEPTANCE {} {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn audetect(args: &[&str]) -> i32 {
    run(std::iter::once("audetect").chain(args.iter().copied()))
}

fn sha256(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

/// Default corpus and default training through the CLI, shared by the
/// end-to-end, smoothing and determinism checks.
struct DefaultRun {
    _dir: tempfile::TempDir,
    data: PathBuf,
    out: PathBuf,
    train_status: i32,
    train_time: Duration,
}

fn default_run() -> &'static DefaultRun {
    static RUN: OnceLock<DefaultRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let out = dir.path().join("run_a");
        assert_eq!(audetect(&["synth", "--out", data.to_str().unwrap()]), 0);
        let start = Instant::now();
        let train_status = audetect(&["train", "--corpus", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        DefaultRun {
            _dir: dir,
            data,
            out,
            train_status,
            train_time: start.elapsed(),
        }
    })
}

fn history_metrics(path: &Path) -> Vec<(usize, f64, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[5].parse().unwrap())
        })
        .collect()
}

fn validation_corpus(corpus: &Corpus) -> Corpus {
    let config = TrainConfig::default();
    let split = split_videos(corpus, config.val_fraction, config.seed).unwrap();
    Corpus::new(split.validation.iter().map(|&v| corpus.videos[v].clone()).collect())
}

#[test]
fn gradient_gate() {
    let _guard = heavy();
    let start = Instant::now();
    let mut worst_primitive = 0.0f64;
    let mut primitive_kinks = 0;
    let mut worst_name = "";
    for (i, (name, shapes, build)) in primitive_cases().into_iter().enumerate() {
        let (err, kinks) = check_primitive(100 + i as u64, &shapes, build);
        primitive_kinks += kinks;
        if err >= worst_primitive {
            worst_primitive = err;
            worst_name = name;
        }
    }
    let report = model_gradcheck(
        7,
        1e-3,
        &Selection::Sample {
            per_tensor: GRADCHECK_SAMPLES_PER_TENSOR,
            seed: 7,
        },
    )
    .unwrap();
    let elapsed = start.elapsed();
    let pass = report.max_relative_error <= 1e-4
        && worst_primitive <= 1e-5
        && primitive_kinks == 0
        && elapsed < Duration::from_secs(60);
    verdict(
        "gradient-gate",
        pass,
        &format!(
            "full model max rel err {:.3e} over {} components ({} ReLU kink crossings excluded, raw max incl. kinks {:.3e}); \
             worst primitive {worst_name} {worst_primitive:.3e}; {:.1} s",
            report.max_relative_error,
            report.checked,
            report.kink_crossings,
            report.max_relative_error_including_kinks,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn metric_oracle() {
    let start = Instant::now();
    let mut mismatches = 0;
    for seed in 0..100 {
        let tracks = random_tracks(seed);
        let scored: Vec<ScoredVideo<'_>> = tracks
            .iter()
            .map(|(p, l)| ScoredVideo {
                video_id: "v",
                predictions: p,
                labels: l,
            })
            .collect();
        let r = challenge_metric(&scored).unwrap();
        let n = naive_score(&tracks);
        let counts_equal = (0..AU_COUNT).all(|au| {
            let c = r.counts[au];
            (c.tp, c.fp, c.fn_, c.tn) == n.counts[au] && r.f1[au].to_bits() == n.f1[au].to_bits()
        });
        let equal = counts_equal
            && r.mean_f1.to_bits() == n.mean_f1.to_bits()
            && r.accuracy.to_bits() == n.accuracy.to_bits()
            && r.challenge_metric.to_bits() == n.metric.to_bits();
        mismatches += usize::from(!equal);
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && elapsed < Duration::from_secs(10);
    verdict(
        "metric-oracle",
        pass,
        &format!("{mismatches}/100 randomized track sets differ from the naive scorer; {:.3} s", elapsed.as_secs_f64()),
    );
    assert!(pass);
}

#[test]
fn hand_case_suite() {
    let mut failures = Vec::new();

    let x = Tensor::<f64>::from_f64(&[1, 3, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]).unwrap();
    let k = Tensor::from_f64(&[1, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap();
    let conv = conv2d(&x, &k, &Tensor::zeros(&[1]), 1).unwrap();
    if conv.data() != [6.0, 8.0, 12.0, 14.0] {
        failures.push(format!("conv2d gave {:?}", conv.data()));
    }

    let h = Tensor::vector(vec![0.6, -0.2, 1.0]);
    let gru = gru_cell(&Tensor::vector(vec![0.9, -1.3]), &h, &GruCellParams::<f64>::zeros(2, 3)).unwrap();
    if gru.data() != [0.3, -0.1, 0.5] {
        failures.push(format!("gru_cell gave {:?}", gru.data()));
    }

    let l = loss(&[0.5; AU_COUNT], &[1, 0, 1, 0, 1, 0, 1, 0], &[1.0; AU_COUNT]).unwrap();
    if (l - std::f64::consts::LN_2).abs() > 1e-12 {
        failures.push(format!("loss at p = 0.5 gave {l}"));
    }

    let labels: Vec<[i8; AU_COUNT]> = [1, 0, 1, 0]
        .iter()
        .map(|&v| std::array::from_fn(|au| if au == 0 { v } else { -1 }))
        .collect();
    let preds: Vec<Decision> = [1, 1, 1, 0]
        .iter()
        .map(|&v| std::array::from_fn(|au| if au == 0 { v } else { 0 }))
        .collect();
    let r = challenge_metric(&[ScoredVideo {
        video_id: "v",
        predictions: &preds,
        labels: &labels,
    }])
    .unwrap();
    let single_au_metric = 0.5 * r.accuracy + 0.5 * r.f1[0];
    if r.accuracy != 0.75 || r.f1[0] != 0.8 || (single_au_metric - 0.775).abs() > 1e-12 {
        failures.push(format!("metric case gave acc {} f1 {} metric {single_au_metric}", r.accuracy, r.f1[0]));
    }

    let smoothed = smooth(&[0, 1, 0, 0, 0], 3).unwrap();
    if smoothed != [0, 0, 0, 0, 0] {
        failures.push(format!("smoothing gave {smoothed:?}"));
    }

    let pass = failures.is_empty();
    verdict(
        "hand-case-suite",
        pass,
        &if pass {
            "conv2d [[6,8],[12,14]], gru half-state, loss ln 2, metric 0.775, spike removal all exact".to_string()
        } else {
            failures.join("; ")
        },
    );
    assert!(pass);
}

#[test]
fn end_to_end_learning() {
    let _guard = heavy();
    let run = default_run();
    let history = if run.train_status == 0 {
        history_metrics(&run.out.join("history.csv"))
    } else {
        Vec::new()
    };
    let (best_epoch, best) = history
        .iter()
        .map(|&(e, _, m)| (e, m))
        .fold((0, f64::NEG_INFINITY), |acc, (e, m)| if m > acc.1 { (e, m) } else { acc });
    let first_loss = history.first().map_or(f64::NAN, |r| r.1);
    let last_loss = history.last().map_or(f64::NAN, |r| r.1);
    let baseline = always_inactive_baseline(&stationary_activation_rates());
    let pass = run.train_status == 0
        && history.len() <= 20
        && best >= E2E_THRESHOLD
        && best >= FROZEN_E2E_THRESHOLD
        && best > baseline
        && last_loss < first_loss
        && run.train_time < Duration::from_secs(600);
    verdict(
        "end-to-end-learning",
        pass,
        &format!(
            "best validation metric {best:.4} at epoch {best_epoch}/{} (required >= {E2E_THRESHOLD}, frozen >= \
             {FROZEN_E2E_THRESHOLD}); always-inactive baseline {baseline:.4}; train loss {first_loss:.4} -> \
             {last_loss:.6}; {:.0} s",
            history.len(),
            run.train_time.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn determinism() {
    let _guard = heavy();
    let run = default_run();
    let second = run.out.with_file_name("run_b");
    let status = audetect(&[
        "train",
        "--corpus",
        run.data.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    let files = ["best.auck", "final.auck", "history.csv"];
    let identical: Vec<bool> = files
        .iter()
        .map(|f| {
            let (a, b) = (run.out.join(f), second.join(f));
            a.is_file() && b.is_file() && sha256(&a) == sha256(&b)
        })
        .collect();
    let pass = run.train_status == 0 && status == 0 && identical.iter().all(|&x| x);
    let detail: Vec<String> = files
        .iter()
        .zip(&identical)
        .map(|(f, same)| format!("{f} {}", if *same { "identical" } else { "DIFFERENT" }))
        .collect();
    verdict(
        "determinism",
        pass,
        &format!("two default `train` runs (sha256): {}", detail.join(", ")),
    );
    assert!(pass);
}

#[test]
fn causality() {
    let corpus = generate_synthetic(&SynthConfig {
        videos: 4,
        frames_per_video: 5,
        seed: 99,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = 0;
    let mut own_au_moved = 0;
    for trial in 0..100u64 {
        let params = ModelParams::<f64>::glorot(ModelConfig::default(), 500 + trial).unwrap();
        let video = &corpus.videos[rng.random_range(0..corpus.videos.len())];
        let t = rng.random_range(0..video.len());
        let diff = landmark_diff(video, t).unwrap();
        let before = params.model_forward(&video.frames()[t], &diff).unwrap();
        let j = rng.random_range(0..AU_COUNT);
        let mut perturbed = params.clone();
        let row = &mut perturbed.au_table_mut().data_mut()[j * 64..(j + 1) * 64];
        for v in row {
            *v += rng.random_range(-0.5..0.5);
        }
        let after = perturbed.model_forward(&video.frames()[t], &diff).unwrap();
        violations += usize::from((0..j).any(|i| before[i].to_bits() != after[i].to_bits()));
        own_au_moved += usize::from(before[j] != after[j]);
    }
    let pass = violations == 0;
    verdict(
        "causality",
        pass,
        &format!(
            "{violations}/100 trials changed an earlier AU after perturbing embedding row j \
             (row j changed its own AU in {own_au_moved}/100)"
        ),
    );
    assert!(pass);
}

#[test]
fn smoothing_effect() {
    let _guard = heavy();
    let run = default_run();
    let outcome = (|| -> audetect::Result<_> {
        let params = load_checkpoint::<f32>(run.out.join("best.auck"))?;
        let validation = validation_corpus(&load_corpus(&run.data)?);
        evaluate(&params, &validation, 5)
    })();
    let (pass, detail) = match outcome {
        Ok(r) => (
            r.smoothed.challenge_metric.is_finite()
                && r.unsmoothed.challenge_metric.is_finite()
                && r.smoothed.decisions() == r.unsmoothed.decisions(),
            format!(
                "validation metric unsmoothed {:.4}, smoothed (window 5) {:.4}, delta {:+.4}",
                r.unsmoothed.challenge_metric,
                r.smoothed.challenge_metric,
                r.smoothing_delta()
            ),
        ),
        Err(e) => (false, format!("evaluation failed: {e}")),
    };
    verdict("smoothing-effect", pass, &detail);
    assert!(pass);
}

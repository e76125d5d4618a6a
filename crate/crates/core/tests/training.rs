use audetect::data::{generate_synthetic, Corpus, FrameSample, SynthConfig, VideoSequence, AU_COUNT, LANDMARK_COUNT};
use audetect::model::save_checkpoint;
use audetect::numeric::{Graph, ParamSet, Precision, Tensor};
use audetect::training::{
    adam_step, batch_loss, class_weights, clip_global_norm, frame_loss_graph, global_grad_norm, history_csv, loss,
    split_videos, train, AdamConfig, OptimizerState, TrainConfig, Trainer,
};
use audetect::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_corpus() -> Corpus {
    generate_synthetic(&SynthConfig {
        videos: 4,
        frames_per_video: 6,
        seed: 21,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn tiny_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        val_fraction: 0.25,
        seed: 5,
        ..TrainConfig::default()
    }
}

/// Videos of three blank frames; only labels and landmarks matter.
fn cheap_corpus(videos: usize, labels: impl Fn(usize, usize) -> [i8; AU_COUNT], landmark: f32) -> Corpus {
    let videos = (0..videos)
        .map(|v| {
            let id = format!("video_{v}");
            let frames = (0..3)
                .map(|t| FrameSample {
                    video_id: id.clone(),
                    frame_index: t,
                    gray: Tensor::zeros(&[1, 64, 64]),
                    edge: Tensor::zeros(&[1, 64, 64]),
                    landmarks: Tensor::full(&[LANDMARK_COUNT, 2], landmark + t as f32 * 0.01),
                    labels: labels(v, t),
                })
                .collect();
            VideoSequence::new(id, frames).unwrap()
        })
        .collect();
    Corpus::new(videos)
}

/// Adam on a scalar, written out by hand.
fn scalar_adam(grad: impl Fn(f64) -> f64, w0: f64, lr: f64, steps: usize) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
    let mut path = Vec::with_capacity(steps);
    for t in 1..=steps {
        let g = grad(w);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t as i32));
        let v_hat = v / (1.0 - b2.powi(t as i32));
        w -= lr * m_hat / (v_hat.sqrt() + eps);
        path.push(w);
    }
    path
}

#[test]
fn adam_minimises_a_scalar_quadratic() {
    let config = AdamConfig {
        learning_rate: 1e-2,
        clip_norm: 1e9,
        ..AdamConfig::default()
    };
    let mut params = ParamSet::<f64>::new();
    let id = params.add("w", Tensor::vector(vec![0.0])).unwrap();
    let mut state = OptimizerState::new(&params);
    let oracle = scalar_adam(|w| 2.0 * (w - 3.0), 0.0, 1e-2, 2000);
    let mut reached = None;
    for (step, expected) in oracle.iter().enumerate() {
        let w = params.get(id).value.data()[0];
        params.get_mut(id).gradient = Tensor::vector(vec![2.0 * (w - 3.0)]);
        adam_step(&mut params, &mut state, &config).unwrap();
        let w = params.get(id).value.data()[0];
        assert!((w - expected).abs() < 1e-12, "step {step}: {w} vs {expected}");
        if reached.is_none() && (w - 3.0).abs() < 0.01 {
            reached = Some(step + 1);
        }
    }
    assert!(reached.is_some(), "|w - 3| stayed above 0.01 for 2000 steps");
    assert!((params.get(id).value.data()[0] - 3.0).abs() < 0.01);
}

#[test]
fn adam_zero_gradient_and_first_step() {
    let config = AdamConfig::default();
    let mut params = ParamSet::<f64>::new();
    let id = params.add("w", Tensor::vector(vec![0.5, -0.5, 2.0])).unwrap();
    let mut state = OptimizerState::new(&params);
    adam_step(&mut params, &mut state, &config).unwrap();
    assert_eq!(params.get(id).value.data(), [0.5, -0.5, 2.0]);

    let mut state = OptimizerState::new(&params);
    params.get_mut(id).gradient = Tensor::vector(vec![0.3, -2.0, 1e-3]);
    adam_step(&mut params, &mut state, &config).unwrap();
    let moved: Vec<f64> = params.get(id).value.data().iter().zip([0.5, -0.5, 2.0]).map(|(a, b)| a - b).collect();
    for (d, sign) in moved.iter().zip([-1.0, 1.0, -1.0]) {
        assert!((d - sign * 1e-3).abs() < 1e-6, "{d}");
    }
    assert_eq!(state.step, 1);
}

#[test]
fn adam_names_the_parameter_with_a_nan_gradient() {
    let mut params = ParamSet::<f32>::new();
    params.add("ok", Tensor::vector(vec![1.0])).unwrap();
    let bad = params.add("theta_F.weight", Tensor::vector(vec![1.0])).unwrap();
    params.get_mut(bad).gradient = Tensor::vector(vec![f32::NAN]);
    let mut state = OptimizerState::new(&params);
    let err = adam_step(&mut params, &mut state, &AdamConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)));
    assert!(err.to_string().contains("theta_F.weight"), "{err}");
}

#[test]
fn loss_hand_cases() {
    let w1 = [1.0; AU_COUNT];
    assert!((loss(&[0.5; AU_COUNT], &[0; AU_COUNT], &w1).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);

    let mut p = [0.5; AU_COUNT];
    p[0] = 0.8;
    p[1] = 0.6;
    let mut w = [1.0; AU_COUNT];
    w[0] = 2.0;
    let mut labels = [-1; AU_COUNT];
    labels[0] = 1;
    labels[1] = 0;
    let expected = (2.0 * -(0.8f64).ln() - (0.4f64).ln()) / 2.0;
    let got = loss(&p, &labels, &w).unwrap();
    assert!((got - expected).abs() < 1e-15);
    assert!((got - 0.68129).abs() < 5e-6);

    assert!(matches!(loss(&p, &[-1; AU_COUNT], &w), Err(Error::NothingToLearn(_))));
    assert!(matches!(
        batch_loss(&[(p, [-1; AU_COUNT]), (p, [-1; AU_COUNT])], &w),
        Err(Error::NothingToLearn(_))
    ));
}

#[test]
fn confident_correct_logits_give_vanishing_loss() {
    let mut g = Graph::<f64>::new();
    let labels: [i8; AU_COUNT] = [1, 0, 1, 0, 1, 0, 1, 0];
    let logits: Vec<_> = labels
        .iter()
        .map(|&l| g.constant(Tensor::vector(if l == 1 { vec![0.0, 20.0] } else { vec![20.0, 0.0] })))
        .collect();
    let root = frame_loss_graph(&mut g, &logits, &labels, &[10.0; AU_COUNT]).unwrap().unwrap();
    let value = g.value(root).data()[0];
    assert!((0.0..=1e-6).contains(&value), "{value}");
}

#[test]
fn class_weights_follow_label_counts() {
    let corpus = cheap_corpus(
        2,
        |v, t| {
            let mut l = [0i8; AU_COUNT];
            l[0] = i8::from(t == 0);
            l[1] = 1;
            l[2] = -1;
            l[4] = i8::from(v == 0 && t == 0);
            l
        },
        0.5,
    );
    let w = class_weights(&corpus, &[0, 1]);
    assert_eq!(w[0], 2.0); // 4 negatives / 2 positives
    assert_eq!(w[1], 1.0); // no negatives, clamped up
    assert_eq!(w[2], 1.0); // nothing labelled
    assert_eq!(w[3], 10.0); // no positives
    assert_eq!(w[4], 5.0);
}

#[test]
fn training_is_deterministic() {
    let corpus = tiny_corpus();
    let a = train::<f32>(&corpus, &tiny_config(2)).unwrap();
    let b = train::<f32>(&corpus, &tiny_config(2)).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.final_params, b.final_params);
    assert_eq!(a.best, b.best);
    assert_eq!(history_csv(&a.history), history_csv(&b.history));
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&a.final_params, dir.path().join("a.auck")).unwrap();
    save_checkpoint(&b.final_params, dir.path().join("b.auck")).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("a.auck")).unwrap(),
        std::fs::read(dir.path().join("b.auck")).unwrap()
    );
}

#[test]
fn resumed_run_equals_uninterrupted_run() {
    let corpus = tiny_corpus();
    for precision in [Precision::Single, Precision::Double] {
        let config = TrainConfig {
            precision,
            ..tiny_config(3)
        };
        let dir = tempfile::tempdir().unwrap();
        let snap = dir.path().join("snapshot.auts");
        match precision {
            Precision::Single => {
                let full = train::<f32>(&corpus, &config).unwrap();
                let mut first = Trainer::<f32>::new(&corpus, TrainConfig { epochs: 1, ..config.clone() }).unwrap();
                first.run_epoch().unwrap();
                first.save_snapshot(&snap).unwrap();
                let resumed = Trainer::<f32>::resume(&corpus, &snap, Some(3)).unwrap().run().unwrap();
                assert_eq!(resumed.history, full.history);
                assert_eq!(resumed.final_params, full.final_params);
                assert_eq!(resumed.best, full.best);
            }
            Precision::Double => {
                let full = train::<f64>(&corpus, &config).unwrap();
                let mut first = Trainer::<f64>::new(&corpus, TrainConfig { epochs: 1, ..config.clone() }).unwrap();
                first.run_epoch().unwrap();
                first.save_snapshot(&snap).unwrap();
                let resumed = Trainer::<f64>::resume(&corpus, &snap, Some(3)).unwrap().run().unwrap();
                assert_eq!(resumed.history, full.history);
                assert_eq!(resumed.final_params, full.final_params);
            }
        }
    }
}

#[test]
fn snapshot_from_another_corpus_is_rejected() {
    let corpus = tiny_corpus();
    let mut t = Trainer::<f32>::new(&corpus, tiny_config(1)).unwrap();
    t.run_epoch().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("s.auts");
    t.save_snapshot(&snap).unwrap();
    let other = generate_synthetic(&SynthConfig {
        videos: 5,
        frames_per_video: 6,
        ..SynthConfig::default()
    })
    .unwrap();
    assert!(Trainer::<f32>::resume(&other, &snap, None).is_err());
}

#[test]
fn training_lowers_the_loss_on_a_small_corpus() {
    let corpus = tiny_corpus();
    let outcome = train::<f32>(&corpus, &TrainConfig { learning_rate: 3e-3, ..tiny_config(6) }).unwrap();
    let first = outcome.history.first().unwrap().train_loss;
    let last = outcome.history.last().unwrap().train_loss;
    assert!(last < first, "train loss {first} -> {last}");
    assert!(outcome.history.iter().all(|r| r.train_loss >= 0.0 && r.val_loss >= 0.0));
}

#[test]
fn empty_corpus_is_an_error() {
    let err = train::<f32>(&Corpus::new(Vec::new()), &tiny_config(1)).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn unlabelled_training_split_is_an_error() {
    let corpus = cheap_corpus(3, |_, _| [-1; AU_COUNT], 0.5);
    let err = train::<f32>(&corpus, &tiny_config(1)).unwrap_err();
    assert!(matches!(err, Error::NothingToLearn(_)), "{err}");
}

#[test]
fn nan_input_aborts_with_epoch_and_batch() {
    let corpus = cheap_corpus(3, |_, _| [1, 0, 1, 0, 1, 0, 1, 0], f32::NAN);
    match train::<f32>(&corpus, &tiny_config(2)) {
        Err(Error::Divergence { epoch, batch, .. }) => assert_eq!((epoch, batch), (1, 1)),
        other => panic!("expected divergence, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clipped_norm_never_exceeds_threshold(seed in any::<u64>(), clip in 1e-3f64..10.0, scale in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::<f64>::new();
        for i in 0..rng.random_range(1..5) {
            let n = rng.random_range(1..20);
            let id = params.add(format!("p{i}"), Tensor::zeros(&[n])).unwrap();
            params.get_mut(id).gradient =
                Tensor::vector((0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect());
        }
        let before = global_grad_norm(&params);
        prop_assert_eq!(clip_global_norm(&mut params, clip), before);
        prop_assert!(global_grad_norm(&params) <= clip + 1e-6);
        if before <= clip {
            prop_assert_eq!(global_grad_norm(&params), before);
        }
    }

    #[test]
    fn loss_is_non_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: [f64; AU_COUNT] = std::array::from_fn(|_| rng.random_range(1e-9..1.0 - 1e-9));
        let mut labels: [i8; AU_COUNT] = std::array::from_fn(|_| rng.random_range(-1..2));
        labels[0] = rng.random_range(0..2);
        let w: [f64; AU_COUNT] = std::array::from_fn(|_| rng.random_range(1.0..10.0));
        prop_assert!(loss(&p, &labels, &w).unwrap() > 0.0);
    }

    #[test]
    fn split_is_video_wise_for_every_seed(seed in any::<u64>(), videos in 2usize..12, fraction in 0.05f64..0.95) {
        let corpus = cheap_corpus(videos, |_, _| [0; AU_COUNT], 0.5);
        let split = split_videos(&corpus, fraction, seed).unwrap();
        prop_assert!(!split.train.is_empty() && !split.validation.is_empty());
        prop_assert_eq!(split.train.len() + split.validation.len(), videos);
        let train_ids: std::collections::HashSet<&str> =
            split.train.iter().map(|&v| corpus.videos[v].video_id()).collect();
        for &v in &split.validation {
            prop_assert!(!train_ids.contains(corpus.videos[v].video_id()));
        }
        prop_assert_eq!(split_videos(&corpus, fraction, seed).unwrap(), split);
    }
}

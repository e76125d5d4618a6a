use audetect::data::{generate_synthetic, landmark_diff, SynthConfig, AU_COUNT, DIFF_LEN};
use audetect::model::{load_checkpoint, save_checkpoint, ModelConfig, ModelParams, CHECKPOINT_MAGIC};
use audetect::numeric::{Graph, Tensor};
use audetect::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn glorot(seed: u64) -> ModelParams<f64> {
    ModelParams::glorot(ModelConfig::default(), seed).unwrap()
}

#[test]
fn zero_parameters_give_neutral_outputs() {
    let p = ModelParams::<f64>::zeros(ModelConfig::default()).unwrap();
    let h_sta = p.static_forward(&Tensor::zeros(&[2, 64, 64])).unwrap();
    assert_eq!(h_sta.shape(), [64]);
    assert!(h_sta.data().iter().all(|&v| v == 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h_dyn = p.dynamic_forward(&uniform(&mut rng, &[DIFF_LEN], -2.0, 2.0)).unwrap();
    assert!(h_dyn.data().iter().all(|&v| v == 0.0));

    let zero = Tensor::zeros(&[64]);
    assert!(p.fuse(&zero, &zero).unwrap().data().iter().all(|&v| v == 0.0));
    let probs = p.classify_aus(&uniform(&mut rng, &[64], -1.0, 1.0)).unwrap();
    assert_eq!(probs, [0.5; AU_COUNT]);
}

#[test]
fn shape_contracts_are_enforced() {
    let p = glorot(1);
    assert!(matches!(p.static_forward(&Tensor::zeros(&[1, 64, 64])), Err(Error::Contract { .. })));
    assert!(matches!(p.dynamic_forward(&Tensor::zeros(&[145])), Err(Error::Contract { .. })));
    assert!(matches!(
        p.fuse(&Tensor::zeros(&[64]), &Tensor::zeros(&[63])),
        Err(Error::Contract { .. })
    ));
}

#[test]
fn swapping_branch_inputs_changes_fusion() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..5 {
        let p = glorot(seed);
        let a = uniform(&mut rng, &[64], -1.0, 1.0);
        let b = uniform(&mut rng, &[64], -1.0, 1.0);
        assert_ne!(p.fuse(&a, &b).unwrap(), p.fuse(&b, &a).unwrap());
    }
}

#[test]
fn au_table_rows_only_affect_later_aus() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut later_changed = 0;
    for trial in 0..100 {
        let p = glorot(1000 + trial);
        let h_fus = uniform(&mut rng, &[64], -1.0, 1.0);
        let before = p.classify_aus(&h_fus).unwrap();
        let j = rng.random_range(0..AU_COUNT);
        let mut q = p.clone();
        for v in &mut q.au_table_mut().data_mut()[j * 64..(j + 1) * 64] {
            *v += rng.random_range(-0.5..0.5);
        }
        let after = q.classify_aus(&h_fus).unwrap();
        for i in 0..j {
            assert_eq!(before[i].to_bits(), after[i].to_bits(), "trial {trial}: row {j} moved AU {i}");
        }
        later_changed += usize::from(before[j] != after[j]);
    }
    assert!(later_changed > 90, "perturbations reached their own AU only {later_changed} times");
}

#[test]
fn model_forward_is_the_composition_of_its_parts() {
    let corpus = generate_synthetic(&SynthConfig {
        videos: 1,
        frames_per_video: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let video = &corpus.videos[0];
    let p = glorot(4);
    for t in 0..video.len() {
        let frame = &video.frames()[t];
        let diff = landmark_diff(video, t).unwrap();
        let h_sta = p.static_forward(&frame.image_input().cast()).unwrap();
        let h_dyn = p.dynamic_forward(&diff.cast()).unwrap();
        let manual = p.classify_aus(&p.fuse(&h_sta, &h_dyn).unwrap()).unwrap();
        let whole = p.model_forward(frame, &diff).unwrap();
        assert_eq!(manual, whole);
        assert_eq!(p.model_forward(frame, &diff).unwrap(), whole);
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let corpus = generate_synthetic(&SynthConfig {
        videos: 1,
        frames_per_video: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let video = &corpus.videos[0];
    let diff = landmark_diff(video, 1).unwrap();
    let p = ModelParams::<f32>::glorot(ModelConfig::default(), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.auck");
    save_checkpoint(&p, &path).unwrap();
    assert_eq!(&std::fs::read(&path).unwrap()[..4], CHECKPOINT_MAGIC);
    let q = load_checkpoint::<f32>(&path).unwrap();
    assert_eq!(p, q);
    let a = p.model_forward(&video.frames()[1], &diff).unwrap();
    let b = q.model_forward(&video.frames()[1], &diff).unwrap();
    assert_eq!(a.map(f32::to_bits), b.map(f32::to_bits));
}

#[test]
fn dynamic_branch_input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut model = glorot(6);
    let input = model
        .params_mut()
        .add("input", uniform(&mut rng, &[DIFF_LEN], -1.0, 1.0))
        .unwrap();
    let h = 1e-3;
    let eval = |m: &ModelParams<f64>, k: usize| -> (f64, Vec<bool>, Graph<f64>, audetect::numeric::Var) {
        let mut g = Graph::new();
        let bound = m.bind(&mut g).unwrap();
        let x = g.param(m.params(), input);
        let out = bound.dynamic_forward(&mut g, x).unwrap();
        let comp = g.select(out, k).unwrap();
        let comp = g.sum(comp);
        (g.value(comp).data()[0], g.relu_pattern(), g, comp)
    };
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for k in [0, 17, 40, 63] {
        model.params_mut().zero_grad();
        let (_, pattern, g, root) = eval(&model, k);
        g.backward(root, model.params_mut()).unwrap();
        let analytic = model.params().get(input).gradient.clone();
        for i in 0..DIFF_LEN {
            let orig = model.params().get(input).value.data()[i];
            model.params_mut().get_mut(input).value.data_mut()[i] = orig + h;
            let (fp, pp, ..) = eval(&model, k);
            model.params_mut().get_mut(input).value.data_mut()[i] = orig - h;
            let (fm, pm, ..) = eval(&model, k);
            model.params_mut().get_mut(input).value.data_mut()[i] = orig;
            if pp != pattern || pm != pattern {
                skipped += 1;
                continue;
            }
            let estimate = (fp - fm) / (2.0 * h);
            let a = analytic.data()[i];
            let err = (a - estimate).abs() / a.abs().max(estimate.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    assert!(worst <= 1e-5, "max relative error {worst:e}");
    assert!(skipped < DIFF_LEN, "{skipped} components crossed a ReLU kink");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hidden_states_and_probabilities_are_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = glorot(seed);
        let image = uniform(&mut rng, &[2, 64, 64], 0.0, 1.0);
        let diff = uniform(&mut rng, &[DIFF_LEN], -3.0, 3.0);
        let h_sta = p.static_forward(&image).unwrap();
        let h_dyn = p.dynamic_forward(&diff).unwrap();
        let h_fus = p.fuse(&h_sta, &h_dyn).unwrap();
        for h in [&h_sta, &h_dyn, &h_fus] {
            prop_assert_eq!(h.shape(), &[64][..]);
            prop_assert!(h.data().iter().all(|v| v.abs() < 1.0));
        }
        let probs = p.classify_aus(&h_fus).unwrap();
        prop_assert!(probs.iter().all(|&q| q > 0.0 && q < 1.0));
    }
}

//! Helpers shared by several integration-test binaries.
#![allow(dead_code)]

use audetect::data::LabelVector;
use audetect::eval::Decision;
use audetect::numeric::{finite_difference_check_piecewise, Graph, GruVars, ParamSet, Selection, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const AUS: usize = 8;

/// Per-AU `(tp, fp, fn, tn)`, F1, accuracy and metric from plain loops.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveScore {
    pub counts: [(u64, u64, u64, u64); AUS],
    pub f1: [f64; AUS],
    pub mean_f1: f64,
    pub accuracy: f64,
    pub metric: f64,
}

/// Scores `(predictions, labels)` pairs one decision at a time.
pub fn naive_score(videos: &[(Vec<Decision>, Vec<LabelVector>)]) -> NaiveScore {
    let mut counts = [(0u64, 0u64, 0u64, 0u64); AUS];
    let mut correct = 0u64;
    let mut valid = 0u64;
    for (preds, labels) in videos {
        assert_eq!(preds.len(), labels.len());
        for frame in 0..preds.len() {
            for au in 0..AUS {
                let label = labels[frame][au];
                if label == -1 {
                    continue;
                }
                let pred = preds[frame][au];
                valid += 1;
                if i64::from(pred) == i64::from(label) {
                    correct += 1;
                }
                let c = &mut counts[au];
                match (pred, label) {
                    (1, 1) => c.0 += 1,
                    (1, 0) => c.1 += 1,
                    (0, 1) => c.2 += 1,
                    (0, 0) => c.3 += 1,
                    other => panic!("bad decision/label pair {other:?}"),
                }
            }
        }
    }
    let mut f1 = [0.0; AUS];
    for au in 0..AUS {
        let (tp, fp, fn_, _) = counts[au];
        let denom = 2 * tp + fp + fn_;
        f1[au] = if denom == 0 { 0.0 } else { (2 * tp) as f64 / denom as f64 };
    }
    let mut sum = 0.0;
    for v in f1 {
        sum += v;
    }
    let mean_f1 = sum / AUS as f64;
    let accuracy = if valid == 0 { 0.0 } else { correct as f64 / valid as f64 };
    NaiveScore {
        counts,
        f1,
        mean_f1,
        accuracy,
        metric: 0.5 * accuracy + 0.5 * mean_f1,
    }
}

/// A random multi-video prediction/label set with ignore labels and, for a
/// random subset of AUs, no positive labels at all.
pub fn random_tracks(seed: u64) -> Vec<(Vec<Decision>, Vec<LabelVector>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let no_positives: Vec<bool> = (0..AUS).map(|_| rng.random_bool(0.25)).collect();
    let ignore_rate = rng.random_range(0.0..0.4);
    (0..rng.random_range(1..5))
        .map(|_| {
            let len = rng.random_range(1..40);
            let mut preds = Vec::with_capacity(len);
            let mut labels = Vec::with_capacity(len);
            for _ in 0..len {
                let p: Decision = std::array::from_fn(|_| u8::from(rng.random_bool(0.4)));
                let l: LabelVector = std::array::from_fn(|au| {
                    if rng.random_bool(ignore_rate) {
                        -1
                    } else if no_positives[au] {
                        0
                    } else {
                        i8::from(rng.random_bool(0.35))
                    }
                });
                preds.push(p);
                labels.push(l);
            }
            (preds, labels)
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> audetect::Result<Var>>;

/// Every differentiable primitive with input shapes for an isolated check.
pub fn primitive_cases() -> Vec<(&'static str, Vec<&'static [usize]>, Build)> {
    vec![
        ("conv2d stride 1", vec![&[2, 6, 5], &[3, 2, 3, 3], &[3]], Box::new(|g, v| g.conv2d(v[0], v[1], v[2], 1))),
        ("conv2d stride 2", vec![&[2, 7, 7], &[2, 2, 3, 3], &[2]], Box::new(|g, v| g.conv2d(v[0], v[1], v[2], 2))),
        ("matvec", vec![&[4, 3], &[3]], Box::new(|g, v| g.matvec(v[0], v[1]))),
        ("matmul", vec![&[3, 4], &[4, 2]], Box::new(|g, v| g.matmul(v[0], v[1]))),
        ("transpose", vec![&[3, 4]], Box::new(|g, v| g.transpose(v[0]))),
        ("add", vec![&[5], &[5]], Box::new(|g, v| g.add(v[0], v[1]))),
        ("sub", vec![&[2, 3], &[2, 3]], Box::new(|g, v| g.sub(v[0], v[1]))),
        ("mul", vec![&[6], &[6]], Box::new(|g, v| g.mul(v[0], v[1]))),
        ("scale", vec![&[4]], Box::new(|g, v| Ok(g.scale(v[0], -1.7)))),
        ("relu", vec![&[12]], Box::new(|g, v| Ok(g.relu(v[0])))),
        ("tanh", vec![&[7]], Box::new(|g, v| Ok(g.tanh(v[0])))),
        ("sigmoid", vec![&[7]], Box::new(|g, v| Ok(g.sigmoid(v[0])))),
        ("linear", vec![&[3, 5], &[3], &[5]], Box::new(|g, v| g.linear(v[0], v[1], v[2]))),
        ("concat axis 0", vec![&[2, 3], &[1, 3]], Box::new(|g, v| g.concat(&[v[0], v[1]], 0))),
        ("concat axis 1", vec![&[2, 3], &[2, 2]], Box::new(|g, v| g.concat(&[v[0], v[1]], 1))),
        ("reshape", vec![&[2, 6]], Box::new(|g, v| g.reshape(v[0], &[3, 4]))),
        ("flatten", vec![&[2, 2, 3]], Box::new(|g, v| g.flatten(v[0]))),
        ("narrow", vec![&[5, 2]], Box::new(|g, v| g.narrow(v[0], 1, 3))),
        ("select", vec![&[4, 3]], Box::new(|g, v| g.select(v[0], 2))),
        ("sum", vec![&[3, 3]], Box::new(|g, v| Ok(g.sum(v[0])))),
        ("softmax_ce label 0", vec![&[2]], Box::new(|g, v| g.softmax_cross_entropy(v[0], 0))),
        ("softmax_ce label 1", vec![&[2]], Box::new(|g, v| g.softmax_cross_entropy(v[0], 1))),
        (
            "gru step",
            vec![&[12, 3], &[12, 4], &[12], &[3], &[4]],
            Box::new(|g, v| {
                let cell = GruVars::bind(g, v[0], v[1], v[2])?;
                cell.step(g, v[3], v[4])
            }),
        ),
    ]
}

/// Registers `inputs` as parameters, reduces the primitive's output with a
/// fixed random weighting, and finite-difference checks every component.
pub fn check_primitive(
    seed: u64,
    inputs: &[&[usize]],
    build: impl Fn(&mut Graph<f64>, &[Var]) -> audetect::Result<Var>,
) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::<f64>::new();
    let ids: Vec<_> = inputs
        .iter()
        .enumerate()
        .map(|(i, s)| params.add(format!("in{i}"), uniform(&mut rng, s)).unwrap())
        .collect();
    let probe_shape = {
        let mut g = Graph::new();
        let vars: Vec<Var> = ids.iter().map(|&id| g.param(&params, id)).collect();
        let out = build(&mut g, &vars).unwrap();
        g.value(out).shape().to_vec()
    };
    let weights = uniform(&mut rng, &probe_shape);
    let eval = |p: &ParamSet<f64>| -> audetect::Result<(Graph<f64>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ids.iter().map(|&id| g.param(p, id)).collect();
        let out = build(&mut g, &vars)?;
        let w = g.constant(weights.clone());
        let weighted = g.mul(out, w)?;
        let loss = g.sum(weighted);
        Ok((g, loss))
    };
    let (g, loss) = eval(&params).unwrap();
    g.backward(loss, &mut params).unwrap();
    let report = finite_difference_check_piecewise(&mut params, 1e-3, &Selection::All, |p| {
        let (g, loss) = eval(p)?;
        Ok((g.value(loss).data()[0], g.relu_pattern()))
    })
    .unwrap();
    (report.max_relative_error, report.kink_crossings)
}

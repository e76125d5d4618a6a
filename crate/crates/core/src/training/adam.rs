use crate::error::{Error, Result};
use crate::numeric::{ParamSet, Scalar, Tensor};

/// Adam hyper-parameters; mirrors the optimizer fields of `TrainConfig`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global L2 norm above which gradients are rescaled.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
        }
    }
}

/// First and second moments per parameter, in `ParamSet` order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub first_moment: Vec<Tensor<T>>,
    pub second_moment: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        OptimizerState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }
}

/// Global L2 norm of all gradients, accumulated in f64.
pub fn global_grad_norm<T: Scalar>(params: &ParamSet<T>) -> f64 {
    params
        .iter()
        .flat_map(|p| p.gradient.data())
        .map(|g| g.as_f64() * g.as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Scales every gradient by `min(1, clip / norm)`; returns the pre-clip norm.
pub fn clip_global_norm<T: Scalar>(params: &mut ParamSet<T>, clip: f64) -> f64 {
    let norm = global_grad_norm(params);
    if norm > clip {
        let s = T::of(clip / norm);
        for p in params.iter_mut() {
            p.gradient.data_mut().iter_mut().for_each(|g| *g = *g * s);
        }
    }
    norm
}

/// One clipped, bias-corrected Adam update from the stored gradients.
/// Returns the gradient norm before clipping.
pub fn adam_step<T: Scalar>(params: &mut ParamSet<T>, state: &mut OptimizerState<T>, config: &AdamConfig) -> Result<f64> {
    if state.first_moment.len() != params.len() {
        return Err(Error::contract(
            "adam_step",
            format!("optimizer state holds {} tensors, model has {}", state.first_moment.len(), params.len()),
        ));
    }
    for (p, m) in params.iter().zip(&state.first_moment) {
        if p.gradient.shape() != m.shape() {
            return Err(Error::contract(
                "adam_step",
                format!("moment shape {:?} differs from parameter '{}' {:?}", m.shape(), p.name, p.gradient.shape()),
            ));
        }
        if !p.gradient.all_finite() {
            return Err(Error::Numeric(format!("non-finite gradient in parameter '{}'", p.name)));
        }
    }
    let norm = clip_global_norm(params, config.clip_norm);
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(config.beta1), T::of(config.beta2));
    let (one, lr, eps) = (T::one(), T::of(config.learning_rate), T::of(config.epsilon));
    let c1 = T::of(1.0 - config.beta1.powi(t));
    let c2 = T::of(1.0 - config.beta2.powi(t));
    for ((p, m), v) in params
        .iter_mut()
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        let g = p.gradient.data();
        let w = p.value.data_mut();
        for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(norm)
}

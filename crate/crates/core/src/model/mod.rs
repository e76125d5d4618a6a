//! The three networks of the detector.
//!
//! * static branch: conv stack over the two-channel (gray, edge) image, then
//!   a GRU scanning the feature map positions in raster order; its final
//!   hidden state is `H_sta`;
//! * dynamic branch: two dense layers over the landmark motion vector,
//!   ending in `tanh`, giving `H_dyn`;
//! * AU decoder: `H_fus = tanh(W_F [H_dyn; H_sta] + b_F)` seeds a GRU that is
//!   queried once per AU with a row of the learnable AU table. Each updated
//!   state feeds a 2-way softmax classifier.

pub(crate) mod checkpoint;
mod config;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Activation, ConvLayerSpec, DenseLayerSpec, ModelConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{FrameSample, AU_COUNT, DIFF_LEN};
use crate::error::{Error, Result};
use crate::numeric::{softmax, Graph, GruVars, ParamId, ParamSet, Scalar, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct GruIds {
    input_weights: ParamId,
    hidden_weights: ParamId,
    biases: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Affine {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    conv: Vec<Affine>,
    static_gru: GruIds,
    dynamic: Vec<Affine>,
    fusion: Affine,
    au_table: ParamId,
    query_gru: GruIds,
    classifier: Affine,
}

/// How freshly built parameters are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zeros,
    /// Glorot-uniform weights and kernels, zero biases, AU table uniform in
    /// `[-0.1, 0.1]`.
    Glorot { seed: u64 },
}

/// All trainable tensors of the model.
///
/// Parameter names follow the network they belong to: `theta_c.*` (conv
/// stack), `theta_g.*` (static GRU), `theta_D.*` (dynamic branch),
/// `theta_F.*` (fusion), `au_table`, `theta_q.*` (query GRU) and `theta_p.*`
/// (AU classifier).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    params: ParamSet<T>,
    layout: Layout,
}

struct Builder<'a, T> {
    set: ParamSet<T>,
    init: Init,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<T: Scalar> Builder<'_, T> {
    fn uniform(&mut self, shape: &[usize], limit: f64) -> Tensor<T> {
        match (&mut self.rng, self.init) {
            (Some(rng), Init::Glorot { .. }) => {
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| T::of(rng.random_range(-limit..=limit))).collect();
                Tensor::from_vec(shape, data).expect("shape product matches")
            }
            _ => Tensor::zeros(shape),
        }
    }

    fn weight(&mut self, name: String, shape: &[usize], fan_in: usize, fan_out: usize) -> Result<ParamId> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = self.uniform(shape, limit);
        self.set.add(name, value)
    }

    fn zeros(&mut self, name: String, shape: &[usize]) -> Result<ParamId> {
        self.set.add(name, Tensor::zeros(shape))
    }

    fn gru(&mut self, prefix: &str, input: usize, hidden: usize) -> Result<GruIds> {
        // Glorot limits are computed per gate block.
        Ok(GruIds {
            input_weights: self.weight(format!("{prefix}.input_weights"), &[3 * hidden, input], input, hidden)?,
            hidden_weights: self.weight(format!("{prefix}.hidden_weights"), &[3 * hidden, hidden], hidden, hidden)?,
            biases: self.zeros(format!("{prefix}.biases"), &[3 * hidden])?,
        })
    }

    fn dense(&mut self, prefix: &str, inputs: usize, outputs: usize) -> Result<Affine> {
        Ok(Affine {
            weight: self.weight(format!("{prefix}.weight"), &[outputs, inputs], inputs, outputs)?,
            bias: self.zeros(format!("{prefix}.bias"), &[outputs])?,
        })
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(config: ModelConfig, init: Init) -> Result<Self> {
        config.validate()?;
        let mut rng = match init {
            Init::Glorot { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Init::Zeros => None,
        };
        let mut b = Builder {
            set: ParamSet::new(),
            init,
            rng: rng.as_mut(),
        };

        let mut conv = Vec::with_capacity(config.conv.len());
        for (i, c) in config.conv.iter().enumerate() {
            let area = c.kernel * c.kernel;
            conv.push(Affine {
                weight: b.weight(
                    format!("theta_c.conv{i}.kernels"),
                    &[c.out_channels, c.in_channels, c.kernel, c.kernel],
                    c.in_channels * area,
                    c.out_channels * area,
                )?,
                bias: b.zeros(format!("theta_c.conv{i}.bias"), &[c.out_channels])?,
            });
        }
        let static_gru = b.gru("theta_g", config.feature_map().0, config.static_gru_hidden)?;
        let mut dynamic = Vec::with_capacity(config.dynamic.len());
        for (i, l) in config.dynamic.iter().enumerate() {
            dynamic.push(b.dense(&format!("theta_D.fc{i}"), l.inputs, l.outputs)?);
        }
        let fusion = b.dense("theta_F", config.dynamic_out() + config.static_gru_hidden, config.fusion_out)?;
        let table = b.uniform(&[config.au_count, config.au_embedding_dim], 0.1);
        let au_table = b.set.add("au_table", table)?;
        let query_gru = b.gru("theta_q", config.au_embedding_dim, config.fusion_out)?;
        let classifier = b.dense("theta_p", config.fusion_out, 2)?;

        let layout = Layout {
            conv,
            static_gru,
            dynamic,
            fusion,
            au_table,
            query_gru,
            classifier,
        };
        let params = b.set;
        debug_assert_eq!(params.scalar_count(), config.parameter_count());
        Ok(ModelParams { config, params, layout })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        Self::new(config, Init::Zeros)
    }

    pub fn glorot(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::new(config, Init::Glorot { seed })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn au_table(&self) -> &Tensor<T> {
        &self.params.get(self.layout.au_table).value
    }

    pub fn au_table_mut(&mut self) -> &mut Tensor<T> {
        &mut self.params.get_mut(self.layout.au_table).value
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    /// Records every parameter on `g`.
    pub fn bind(&self, g: &mut Graph<T>) -> Result<BoundModel> {
        let l = &self.layout;
        let p = &self.params;
        let conv = l
            .conv
            .iter()
            .zip(&self.config.conv)
            .map(|(a, spec)| (g.param(p, a.weight), g.param(p, a.bias), spec.stride))
            .collect();
        let bind_gru = |g: &mut Graph<T>, ids: &GruIds| {
            let w = g.param(p, ids.input_weights);
            let u = g.param(p, ids.hidden_weights);
            let b = g.param(p, ids.biases);
            GruVars::bind(g, w, u, b)
        };
        let static_gru = bind_gru(g, &l.static_gru)?;
        let dynamic = l
            .dynamic
            .iter()
            .zip(&self.config.dynamic)
            .map(|(a, spec)| (g.param(p, a.weight), g.param(p, a.bias), spec.activation))
            .collect();
        let fusion = (g.param(p, l.fusion.weight), g.param(p, l.fusion.bias));
        let au_table = g.param(p, l.au_table);
        let query_gru = bind_gru(g, &l.query_gru)?;
        let classifier = (g.param(p, l.classifier.weight), g.param(p, l.classifier.bias));
        Ok(BoundModel {
            image_size: self.config.image_size,
            conv,
            static_gru,
            dynamic,
            fusion,
            au_table,
            au_count: self.config.au_count,
            query_gru,
            classifier,
        })
    }

    /// `H_sta` for a `2 x S x S` (gray, edge) input.
    pub fn static_forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let m = self.bind(&mut g)?;
        let x = g.constant(image.clone());
        let out = m.static_forward(&mut g, x)?;
        Ok(g.value(out).clone())
    }

    /// `H_dyn` for a landmark difference vector.
    pub fn dynamic_forward(&self, diff: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let m = self.bind(&mut g)?;
        let x = g.constant(diff.clone());
        let out = m.dynamic_forward(&mut g, x)?;
        Ok(g.value(out).clone())
    }

    pub fn fuse(&self, h_sta: &Tensor<T>, h_dyn: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let m = self.bind(&mut g)?;
        let s = g.constant(h_sta.clone());
        let d = g.constant(h_dyn.clone());
        let out = m.fuse(&mut g, s, d)?;
        Ok(g.value(out).clone())
    }

    /// Activation probability of each AU given the fused state.
    pub fn classify_aus(&self, h_fus: &Tensor<T>) -> Result<[T; AU_COUNT]> {
        let mut g = Graph::new();
        let m = self.bind(&mut g)?;
        let h = g.constant(h_fus.clone());
        let logits = m.classify_aus(&mut g, h)?;
        Ok(probabilities(&g, &logits))
    }

    /// Full pipeline for one frame.
    pub fn model_forward(&self, frame: &FrameSample, diff: &Tensor<f32>) -> Result<[T; AU_COUNT]> {
        let mut g = Graph::new();
        let m = self.bind(&mut g)?;
        let logits = m.forward_frame(&mut g, frame, diff)?;
        Ok(probabilities(&g, &logits))
    }
}

/// Probability of the "active" class from each AU's logit pair.
pub fn probabilities<T: Scalar>(g: &Graph<T>, logits: &[Var]) -> [T; AU_COUNT] {
    std::array::from_fn(|i| softmax(g.value(logits[i]).data())[1])
}

/// Model parameters recorded on a graph, ready for forward evaluation.
#[derive(Debug, Clone)]
pub struct BoundModel {
    image_size: usize,
    conv: Vec<(Var, Var, usize)>,
    static_gru: GruVars,
    dynamic: Vec<(Var, Var, Activation)>,
    fusion: (Var, Var),
    au_table: Var,
    au_count: usize,
    query_gru: GruVars,
    classifier: (Var, Var),
}

impl BoundModel {
    pub fn static_forward<T: Scalar>(&self, g: &mut Graph<T>, image: Var) -> Result<Var> {
        let s = self.image_size;
        if g.value(image).shape() != [2, s, s] {
            return Err(Error::contract(
                "static_forward",
                format!("input must be 2 x {s} x {s}, got {:?}", g.value(image).shape()),
            ));
        }
        let mut x = image;
        for &(k, b, stride) in &self.conv {
            let y = g.conv2d(x, k, b, stride)?;
            x = g.relu(y);
        }
        let (c, h, w) = match *g.value(x).shape() {
            [c, h, w] => (c, h, w),
            _ => unreachable!("conv2d returns rank-3 tensors"),
        };
        // raster-order sequence of per-position channel vectors
        let flat = g.reshape(x, &[c, h * w])?;
        let positions = g.transpose(flat)?;
        let mut state = g.constant(Tensor::zeros(&[self.static_gru.hidden()]));
        for p in 0..h * w {
            let v = g.select(positions, p)?;
            state = self.static_gru.step(g, v, state)?;
        }
        Ok(state)
    }

    pub fn dynamic_forward<T: Scalar>(&self, g: &mut Graph<T>, diff: Var) -> Result<Var> {
        if g.value(diff).shape() != [DIFF_LEN] {
            return Err(Error::contract(
                "dynamic_forward",
                format!("input must have {DIFF_LEN} entries, got {:?}", g.value(diff).shape()),
            ));
        }
        let mut x = diff;
        for &(w, b, act) in &self.dynamic {
            let y = g.linear(w, b, x)?;
            x = match act {
                Activation::Relu => g.relu(y),
                Activation::Tanh => g.tanh(y),
            };
        }
        Ok(x)
    }

    /// `tanh(W_F [h_dyn; h_sta] + b_F)`.
    pub fn fuse<T: Scalar>(&self, g: &mut Graph<T>, h_sta: Var, h_dyn: Var) -> Result<Var> {
        let joined = g.concat(&[h_dyn, h_sta], 0).map_err(|e| match e {
            Error::Contract { detail, .. } => Error::contract("fuse", detail),
            other => other,
        })?;
        let (w, b) = self.fusion;
        let y = g.linear(w, b, joined)?;
        Ok(g.tanh(y))
    }

    /// Queries the recurrent decoder once per AU in the fixed order and
    /// returns the 2-way logits of each step.
    pub fn classify_aus<T: Scalar>(&self, g: &mut Graph<T>, h_fus: Var) -> Result<Vec<Var>> {
        let (w, b) = self.classifier;
        let mut state = h_fus;
        let mut logits = Vec::with_capacity(self.au_count);
        for i in 0..self.au_count {
            let query = g.select(self.au_table, i)?;
            state = self.query_gru.step(g, query, state)?;
            logits.push(g.linear(w, b, state)?);
        }
        Ok(logits)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, image: Var, diff: Var) -> Result<Vec<Var>> {
        let h_sta = self.static_forward(g, image)?;
        let h_dyn = self.dynamic_forward(g, diff)?;
        let h_fus = self.fuse(g, h_sta, h_dyn)?;
        self.classify_aus(g, h_fus)
    }

    /// Forward pass from a preprocessed frame and its landmark difference.
    pub fn forward_frame<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        frame: &FrameSample,
        diff: &Tensor<f32>,
    ) -> Result<Vec<Var>> {
        let image = g.constant(frame.image_input().cast());
        let diff = g.constant(diff.cast());
        self.forward(g, image, diff)
    }
}

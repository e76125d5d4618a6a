use crate::data::{AU_COUNT, AU_NAMES, DIFF_LEN, IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::numeric::ops::conv_output_extent;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

/// Architecture of the static, dynamic and AU-decoding networks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub image_size: usize,
    /// Each layer is followed by a ReLU.
    pub conv: Vec<ConvLayerSpec>,
    pub static_gru_hidden: usize,
    pub dynamic: Vec<DenseLayerSpec>,
    pub fusion_out: usize,
    pub au_count: usize,
    pub au_embedding_dim: usize,
    pub au_order: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let conv = |in_channels, out_channels, kernel, stride| ConvLayerSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
        };
        ModelConfig {
            image_size: IMAGE_SIZE,
            conv: vec![conv(2, 16, 5, 2), conv(16, 32, 3, 2), conv(32, 32, 3, 2)],
            static_gru_hidden: 64,
            dynamic: vec![
                DenseLayerSpec {
                    inputs: DIFF_LEN,
                    outputs: 128,
                    activation: Activation::Relu,
                },
                DenseLayerSpec {
                    inputs: 128,
                    outputs: 64,
                    activation: Activation::Tanh,
                },
            ],
            fusion_out: 64,
            au_count: AU_COUNT,
            au_embedding_dim: 64,
            au_order: AU_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::contract("model_config", detail));
        if self.conv.is_empty() {
            return bad("at least one convolution layer is required".into());
        }
        if self.conv[0].in_channels != 2 {
            return bad(format!(
                "first convolution must take 2 channels (gray, edge), got {}",
                self.conv[0].in_channels
            ));
        }
        for (i, pair) in self.conv.windows(2).enumerate() {
            if pair[0].out_channels != pair[1].in_channels {
                return bad(format!(
                    "conv{} outputs {} channels but conv{} expects {}",
                    i,
                    pair[0].out_channels,
                    i + 1,
                    pair[1].in_channels
                ));
            }
        }
        let mut extent = self.image_size;
        for (i, c) in self.conv.iter().enumerate() {
            if c.kernel == 0 || c.stride == 0 || c.in_channels == 0 || c.out_channels == 0 {
                return bad(format!("conv{i} has a zero extent"));
            }
            if extent < c.kernel {
                return bad(format!("conv{i} kernel {} exceeds its input extent {extent}", c.kernel));
            }
            extent = conv_output_extent(extent, c.kernel, c.stride);
        }
        let Some(first) = self.dynamic.first() else {
            return bad("the dynamic network needs at least one layer".into());
        };
        if first.inputs != DIFF_LEN {
            return bad(format!("dynamic network must take {DIFF_LEN} inputs, got {}", first.inputs));
        }
        for (i, pair) in self.dynamic.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return bad(format!("dense layers {i} and {} do not chain", i + 1));
            }
        }
        if self.au_count != AU_COUNT || self.au_order.len() != AU_COUNT {
            return bad(format!(
                "au_count = {} with {} names; exactly {AU_COUNT} AUs are supported",
                self.au_count,
                self.au_order.len()
            ));
        }
        if self.au_order.iter().zip(AU_NAMES).any(|(a, b)| a != b) {
            return bad(format!("AU order {:?} differs from {:?}", self.au_order, AU_NAMES));
        }
        if self.fusion_out == 0 || self.static_gru_hidden == 0 || self.au_embedding_dim == 0 {
            return bad("hidden sizes must be positive".into());
        }
        Ok(())
    }

    /// `(channels, height, width)` of the last convolution's output.
    pub fn feature_map(&self) -> (usize, usize, usize) {
        let extent = self
            .conv
            .iter()
            .fold(self.image_size, |e, c| conv_output_extent(e, c.kernel, c.stride));
        let channels = self.conv.last().map_or(0, |c| c.out_channels);
        (channels, extent, extent)
    }

    pub fn dynamic_out(&self) -> usize {
        self.dynamic.last().map_or(0, |l| l.outputs)
    }

    /// Number of scalar parameters implied by the architecture.
    pub fn parameter_count(&self) -> usize {
        let gru = |d: usize, h: usize| 3 * h * d + 3 * h * h + 3 * h;
        let conv: usize = self
            .conv
            .iter()
            .map(|c| c.out_channels * c.in_channels * c.kernel * c.kernel + c.out_channels)
            .sum();
        let dense: usize = self.dynamic.iter().map(|l| l.inputs * l.outputs + l.outputs).sum();
        let fusion_in = self.dynamic_out() + self.static_gru_hidden;
        conv + gru(self.feature_map().0, self.static_gru_hidden)
            + dense
            + fusion_in * self.fusion_out
            + self.fusion_out
            + self.au_count * self.au_embedding_dim
            + gru(self.au_embedding_dim, self.fusion_out)
            + 2 * self.fusion_out
            + 2
    }
}

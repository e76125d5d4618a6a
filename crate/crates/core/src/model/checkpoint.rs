//! Checkpoint file layout, little-endian:
//!
//! ```text
//! "AUCK" | version u16 | model config | tensor count u32
//! per tensor: name length u16, UTF-8 name, rank u8, extents u32 each, f32 payload
//! AU order: count u8, then per AU name length u16 and UTF-8 name
//! ```
//!
//! The model config is encoded as: image size u16; conv layer count u8 and
//! per layer (in, out, kernel, stride) as u16; static GRU hidden u16; dense
//! layer count u8 and per layer (in u16, out u16, activation u8 where
//! 0 = relu, 1 = tanh); fusion width u16; AU count u16; AU embedding
//! width u16.

use std::path::Path;

use crate::binio::{read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::model::{Activation, ConvLayerSpec, DenseLayerSpec, ModelConfig, ModelParams};
use crate::numeric::{ParamSet, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AUCK";
pub const CHECKPOINT_VERSION: u16 = 1;

fn u16_of(n: usize, what: &str) -> Result<u16> {
    u16::try_from(n).map_err(|_| Error::contract("save_checkpoint", format!("{what} = {n} exceeds u16")))
}

pub(crate) fn write_config(out: &mut ByteWriter, c: &ModelConfig) -> Result<()> {
    out.u16(u16_of(c.image_size, "image_size")?);
    out.u8(c.conv.len() as u8);
    for l in &c.conv {
        for v in [l.in_channels, l.out_channels, l.kernel, l.stride] {
            out.u16(u16_of(v, "conv extent")?);
        }
    }
    out.u16(u16_of(c.static_gru_hidden, "static_gru_hidden")?);
    out.u8(c.dynamic.len() as u8);
    for l in &c.dynamic {
        out.u16(u16_of(l.inputs, "dense inputs")?);
        out.u16(u16_of(l.outputs, "dense outputs")?);
        out.u8(l.activation.code());
    }
    out.u16(u16_of(c.fusion_out, "fusion_out")?);
    out.u16(u16_of(c.au_count, "au_count")?);
    out.u16(u16_of(c.au_embedding_dim, "au_embedding_dim")?);
    Ok(())
}

/// Reads the config block; `au_order` is left empty for the caller to fill.
pub(crate) fn read_config(r: &mut ByteReader<'_>) -> Result<ModelConfig> {
    let image_size = r.u16("image size")? as usize;
    let n_conv = r.u8("conv layer count")?;
    let mut conv = Vec::with_capacity(n_conv as usize);
    for _ in 0..n_conv {
        conv.push(ConvLayerSpec {
            in_channels: r.u16("conv in")? as usize,
            out_channels: r.u16("conv out")? as usize,
            kernel: r.u16("conv kernel")? as usize,
            stride: r.u16("conv stride")? as usize,
        });
    }
    let static_gru_hidden = r.u16("static GRU hidden")? as usize;
    let n_dense = r.u8("dense layer count")?;
    let mut dynamic = Vec::with_capacity(n_dense as usize);
    for _ in 0..n_dense {
        let inputs = r.u16("dense inputs")? as usize;
        let outputs = r.u16("dense outputs")? as usize;
        let offset = r.position();
        let code = r.u8("activation")?;
        let activation = Activation::from_code(code)
            .ok_or_else(|| r.corrupt(offset, format!("unknown activation code {code}")))?;
        dynamic.push(DenseLayerSpec {
            inputs,
            outputs,
            activation,
        });
    }
    Ok(ModelConfig {
        image_size,
        conv,
        static_gru_hidden,
        dynamic,
        fusion_out: r.u16("fusion width")? as usize,
        au_count: r.u16("AU count")? as usize,
        au_embedding_dim: r.u16("AU embedding width")? as usize,
        au_order: Vec::new(),
    })
}

/// Writes every parameter value; `wide` stores f64 payloads so that
/// double-precision values survive bit for bit.
pub(crate) fn write_tensors<T: Scalar>(out: &mut ByteWriter, set: &ParamSet<T>, prefix: &str, wide: bool) -> Result<()> {
    out.u32(set.len() as u32);
    for p in set.iter() {
        out.str(&format!("{prefix}{}", p.name))?;
        write_tensor_body(out, &p.value, wide);
    }
    Ok(())
}

pub(crate) fn write_tensor_body<T: Scalar>(out: &mut ByteWriter, t: &Tensor<T>, wide: bool) {
    out.u8(t.rank() as u8);
    for &e in t.shape() {
        out.u32(e as u32);
    }
    if wide {
        t.data().iter().for_each(|v| out.f64(v.as_f64()));
    } else {
        t.data().iter().for_each(|v| out.f32(v.as_f64() as f32));
    }
}

/// Reads a tensor written by [`write_tensor_body`], requiring `expected` shape.
pub(crate) fn read_tensor_body<T: Scalar>(
    r: &mut ByteReader<'_>,
    name: &str,
    expected: &[usize],
    wide: bool,
) -> Result<Tensor<T>> {
    let rank = r.u8("tensor rank")? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32("tensor extent")? as usize);
    }
    if shape != expected {
        return Err(r.format(format!("tensor '{name}' has shape {shape:?}, model expects {expected:?}")));
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let v = if wide {
            r.f64("tensor payload")?
        } else {
            f64::from(r.f32("tensor payload")?)
        };
        data.push(T::of(v));
    }
    Tensor::from_vec(&shape, data)
}

/// Reads a block written by [`write_tensors`] into `set`, matching names
/// and shapes.
pub(crate) fn read_tensors<T: Scalar>(
    r: &mut ByteReader<'_>,
    set: &mut ParamSet<T>,
    prefix: &str,
    wide: bool,
) -> Result<()> {
    let count = r.u32("tensor count")? as usize;
    if count != set.len() {
        return Err(r.format(format!("file holds {count} tensors, model has {}", set.len())));
    }
    for _ in 0..count {
        let name_offset = r.position();
        let full = r.str("tensor name")?;
        let name = full
            .strip_prefix(prefix)
            .ok_or_else(|| r.corrupt(name_offset, format!("tensor '{full}' lacks prefix '{prefix}'")))?;
        let id = set
            .find(name)
            .ok_or_else(|| r.format(format!("unknown tensor '{name}'")))?;
        let expected = set.get(id).value.shape().to_vec();
        set.get_mut(id).value = read_tensor_body(r, name, &expected, wide)?;
    }
    Ok(())
}

pub(crate) fn encode_checkpoint<T: Scalar>(params: &ModelParams<T>) -> Result<Vec<u8>> {
    let mut out = ByteWriter::new();
    out.bytes(CHECKPOINT_MAGIC);
    out.u16(CHECKPOINT_VERSION);
    write_config(&mut out, params.config())?;
    write_tensors(&mut out, params.params(), "", false)?;
    let order = &params.config().au_order;
    out.u8(order.len() as u8);
    for name in order {
        out.str(name)?;
    }
    Ok(out.into_inner())
}

pub(crate) fn decode_checkpoint<T: Scalar>(r: &mut ByteReader<'_>) -> Result<ModelParams<T>> {
    let magic = r.take(4, "magic").map_err(|_| r.format("file too short for checkpoint magic"))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(r.format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(CHECKPOINT_MAGIC)
        )));
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(r.format(format!(
            "checkpoint version {version} is not supported (expected version {CHECKPOINT_VERSION})"
        )));
    }
    let mut config = read_config(r)?;
    config.au_order = crate::data::AU_NAMES.iter().map(|s| s.to_string()).collect();
    let mut params = ModelParams::<T>::zeros(config.clone()).map_err(|e| r.format(e.to_string()))?;
    read_tensors(r, params.params_mut(), "", false)?;
    let n = r.u8("AU order count")? as usize;
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        order.push(r.str("AU name")?);
    }
    if order != config.au_order {
        return Err(r.format(format!("AU order {order:?} differs from {:?}", config.au_order)));
    }
    Ok(params)
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_checkpoint(params)?)
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<T>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(&bytes, path);
    let params = decode_checkpoint(&mut r)?;
    r.finish()?;
    Ok(params)
}

//! Forward kernels and their adjoints.
//!
//! These work on plain tensors; [`crate::numeric::Graph`] records them on a
//! tape and calls the adjoints during reverse evaluation.

use crate::error::{Error, Result};
use crate::numeric::tensor::{Scalar, Tensor};

pub(crate) fn conv_output_extent(input: usize, kernel: usize, stride: usize) -> usize {
    (input - kernel) / stride + 1
}

fn check_conv_shapes<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<[usize; 6]> {
    const OP: &str = "conv2d";
    if stride == 0 {
        return Err(Error::contract(OP, "stride must be positive"));
    }
    let [c_in, h, w] = match *input.shape() {
        [c, h, w] => [c, h, w],
        ref s => return Err(Error::contract(OP, format!("input must be C_in x H x W, got {s:?}"))),
    };
    let [c_out, kc, kh, kw] = match *kernels.shape() {
        [o, c, a, b] => [o, c, a, b],
        ref s => {
            return Err(Error::contract(
                OP,
                format!("kernels must be C_out x C_in x k x k, got {s:?}"),
            ))
        }
    };
    if kc != c_in {
        return Err(Error::contract(
            OP,
            format!("kernel C_in is {kc} but input C_in is {c_in}"),
        ));
    }
    if kh != kw {
        return Err(Error::contract(
            OP,
            format!("kernel must be square, got k = {kh} x {kw}"),
        ));
    }
    if h < kh {
        return Err(Error::contract(OP, format!("input H = {h} smaller than k = {kh}")));
    }
    if w < kw {
        return Err(Error::contract(OP, format!("input W = {w} smaller than k = {kw}")));
    }
    if bias.shape() != [c_out] {
        return Err(Error::contract(
            OP,
            format!("bias must have C_out = {c_out} entries, got shape {:?}", bias.shape()),
        ));
    }
    Ok([c_in, h, w, c_out, kh, stride])
}

/// Unfolds every `k x k` receptive field into a column: row
/// `(c * k + u) * k + v` holds `input[c, i*s + u, j*s + v]` for all output
/// positions `(i, j)` in raster order.
fn im2col<T: Scalar>(x: &[T], [c_in, h, w]: [usize; 3], k: usize, s: usize, oh: usize, ow: usize) -> Vec<T> {
    let p = oh * ow;
    let mut cols = vec![T::zero(); c_in * k * k * p];
    for c in 0..c_in {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for u in 0..k {
            for v in 0..k {
                let r = (c * k + u) * k + v;
                let dst = &mut cols[r * p..(r + 1) * p];
                for i in 0..oh {
                    let src = &plane[(i * s + u) * w + v..];
                    for (j, d) in dst[i * ow..(i + 1) * ow].iter_mut().enumerate() {
                        *d = src[j * s];
                    }
                }
            }
        }
    }
    cols
}

/// Valid-padding 2-D cross-correlation with an explicit stride.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let [c_in, h, w, c_out, k, s] = check_conv_shapes(input, kernels, bias, stride)?;
    let oh = conv_output_extent(h, k, s);
    let ow = conv_output_extent(w, k, s);
    let p = oh * ow;
    let rows = c_in * k * k;
    let cols = im2col(input.data(), [c_in, h, w], k, s, oh, ow);
    let kd = kernels.data();
    let mut out = vec![T::zero(); c_out * p];
    for (o, plane) in out.chunks_exact_mut(p).enumerate() {
        plane.iter_mut().for_each(|v| *v = bias.data()[o]);
        for (r, col) in cols.chunks_exact(p).enumerate() {
            axpy(plane, kd[o * rows + r], col);
        }
    }
    Tensor::from_vec(&[c_out, oh, ow], out)
}

/// Accumulates the conv2d adjoints for upstream gradient `grad`.
pub(crate) fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
    grad: &Tensor<T>,
    d_input: Option<&mut Tensor<T>>,
    d_kernels: Option<&mut Tensor<T>>,
    d_bias: Option<&mut Tensor<T>>,
) {
    let [c_in, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2]];
    let k = kernels.shape()[2];
    let [oh, ow] = [grad.shape()[1], grad.shape()[2]];
    let s = stride;
    let p = oh * ow;
    let rows = c_in * k * k;
    let g = grad.data();

    if let Some(db) = d_bias {
        for (o, gplane) in g.chunks_exact(p).enumerate() {
            db.data_mut()[o] = db.data()[o] + sum(gplane);
        }
    }
    if let Some(dk) = d_kernels {
        let cols = im2col(input.data(), [c_in, h, w], k, s, oh, ow);
        let dkd = dk.data_mut();
        for (o, gplane) in g.chunks_exact(p).enumerate() {
            for (r, col) in cols.chunks_exact(p).enumerate() {
                dkd[o * rows + r] = dkd[o * rows + r] + dot(gplane, col);
            }
        }
    }
    if let Some(dx) = d_input {
        let kd = kernels.data();
        let mut dcols = vec![T::zero(); rows * p];
        for (r, dcol) in dcols.chunks_exact_mut(p).enumerate() {
            for (o, gplane) in g.chunks_exact(p).enumerate() {
                axpy(dcol, kd[o * rows + r], gplane);
            }
        }
        let dxd = dx.data_mut();
        for c in 0..c_in {
            let dplane = &mut dxd[c * h * w..(c + 1) * h * w];
            for u in 0..k {
                for v in 0..k {
                    let r = (c * k + u) * k + v;
                    let dcol = &dcols[r * p..(r + 1) * p];
                    for i in 0..oh {
                        let base = (i * s + u) * w + v;
                        for (j, &gv) in dcol[i * ow..(i + 1) * ow].iter().enumerate() {
                            let idx = base + j * s;
                            dplane[idx] = dplane[idx] + gv;
                        }
                    }
                }
            }
        }
    }
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + a * xv;
    }
}

const LANES: usize = 8;

/// Dot product with a fixed 8-lane summation order so the compiler can
/// vectorize it; results are deterministic for a given length.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + x * y;
    }
    reduce_lanes(acc) + tail
}

#[inline]
fn sum<T: Scalar>(a: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let mut chunks = a.chunks_exact(LANES);
    for x in &mut chunks {
        for l in 0..LANES {
            acc[l] = acc[l] + x[l];
        }
    }
    let tail = chunks.remainder().iter().fold(T::zero(), |s, &v| s + v);
    reduce_lanes(acc) + tail
}

#[inline]
fn reduce_lanes<T: Scalar>(acc: [T; LANES]) -> T {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// `W x` for `W: m x n`, `x: n`.
pub fn matvec<T: Scalar>(w: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = match *w.shape() {
        [m, n] => (m, n),
        ref s => return Err(Error::contract("matvec", format!("matrix must be rank 2, got {s:?}"))),
    };
    if x.shape() != [n] {
        return Err(Error::contract(
            "matvec",
            format!("vector length {:?} does not match matrix columns {n}", x.shape()),
        ));
    }
    let xd = x.data();
    let out = w
        .data()
        .chunks_exact(n)
        .map(|row| dot(row, xd))
        .collect::<Vec<_>>();
    debug_assert_eq!(out.len(), m);
    Ok(Tensor::vector(out))
}

/// `A B` for `A: m x k`, `B: k x n`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = match *a.shape() {
        [m, k] => (m, k),
        ref s => return Err(Error::contract("matmul", format!("left operand must be rank 2, got {s:?}"))),
    };
    let (k2, n) = match *b.shape() {
        [k, n] => (k, n),
        ref s => return Err(Error::contract("matmul", format!("right operand must be rank 2, got {s:?}"))),
    };
    if k != k2 {
        return Err(Error::contract(
            "matmul",
            format!("inner dimensions differ: {k} vs {k2}"),
        ));
    }
    let mut out = vec![T::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            for (o, &bv) in orow.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *o = *o + av * bv;
            }
        }
    }
    Tensor::from_vec(&[m, n], out)
}

pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = match *a.shape() {
        [m, n] => (m, n),
        ref s => return Err(Error::contract("transpose", format!("operand must be rank 2, got {s:?}"))),
    };
    let d = a.data();
    let mut out = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            out.push(d[i * n + j]);
        }
    }
    Tensor::from_vec(&[n, m], out)
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    // Branching keeps exp() from overflowing for large |v|.
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable two-or-more-way softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Binary softmax followed by cross-entropy against `label`.
///
/// Returns the two probabilities and `-ln p[label]`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<(Tensor<T>, T)> {
    if logits.shape() != [2] {
        return Err(Error::contract(
            "softmax_cross_entropy",
            format!("expected exactly 2 logits, got shape {:?}", logits.shape()),
        ));
    }
    if label > 1 {
        return Err(Error::contract(
            "softmax_cross_entropy",
            format!("label must be 0 or 1, got {label}"),
        ));
    }
    let l = logits.data();
    // log-sum-exp of two values: max + ln(1 + e^{-|l0 - l1|})
    let max = l[0].max(l[1]);
    let loss = (max - l[label]) + (-(l[0] - l[1]).abs()).exp().ln_1p();
    let probs = softmax(l);
    Ok((Tensor::vector(probs), loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn conv_scalar_kernel_scales_input() {
        let x = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let k = t(&[1, 1, 1, 1], &[2.0]);
        let y = conv2d(&x, &k, &t(&[1], &[0.0]), 1).unwrap();
        assert_eq!(y.shape(), [1, 2, 2]);
        assert_eq!(y.data(), [2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn conv_zero_kernel_gives_zero() {
        let x = t(&[2, 5, 5], &(0..50).map(|v| v as f64 * 0.3 - 4.0).collect::<Vec<_>>());
        let y = conv2d(&x, &Tensor::zeros(&[3, 2, 3, 3]), &Tensor::zeros(&[3]), 2).unwrap();
        assert_eq!(y.shape(), [3, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_shape_errors_name_the_dimension() {
        let x = Tensor::<f64>::zeros(&[2, 4, 4]);
        let err = conv2d(&x, &Tensor::zeros(&[1, 3, 3, 3]), &Tensor::zeros(&[1]), 1).unwrap_err();
        assert!(err.to_string().contains("C_in"), "{err}");
        let err = conv2d(&x, &Tensor::zeros(&[1, 2, 5, 5]), &Tensor::zeros(&[1]), 1).unwrap_err();
        assert!(err.to_string().contains("H = 4"), "{err}");
        let err = conv2d(&x, &Tensor::zeros(&[1, 2, 3, 3]), &Tensor::zeros(&[2]), 1).unwrap_err();
        assert!(err.to_string().contains("bias"), "{err}");
    }

    #[test]
    fn softmax_ce_equal_logits() {
        let (p, loss) = softmax_cross_entropy(&t(&[2], &[0.0, 0.0]), 0).unwrap();
        assert_eq!(p.data(), [0.5, 0.5]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn softmax_ce_confident_case() {
        // -ln(1 / (1 + e^-20)) = ln(1 + e^-20)
        let expected = (-20f64).exp().ln_1p();
        let (_, loss) = softmax_cross_entropy(&t(&[2], &[10.0, -10.0]), 0).unwrap();
        assert!((loss - expected).abs() < 1e-20, "{loss} vs {expected}");
        assert!((loss - 2.061e-9).abs() < 1e-12);
    }

    #[test]
    fn softmax_ce_rejects_wrong_arity() {
        assert!(softmax_cross_entropy(&t(&[3], &[0.0, 0.0, 0.0]), 0).is_err());
    }

    #[test]
    fn matmul_matches_manual_product() {
        let a = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(&[3, 2], &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), [58.0, 64.0, 139.0, 154.0]);
        assert!(matmul(&a, &a).is_err());
    }
}

use crate::error::{Error, Result};
use crate::numeric::ops;
use crate::numeric::param::{ParamId, ParamSet};
use crate::numeric::tensor::{Scalar, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv2d { input: Var, kernels: Var, bias: Var, stride: usize },
    MatVec { w: Var, x: Var },
    MatMul { a: Var, b: Var },
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Reshape(Var),
    /// Contiguous block of `len` leading-axis entries starting at `start`.
    Narrow { a: Var, start: usize, len: usize },
    SoftmaxCrossEntropy { logits: Var, label: usize, probs: Tensor<T> },
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    param: Option<ParamId>,
    requires_grad: bool,
}

/// Tape of tensor operations supporting reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so walking the tape backwards
/// visits every node after all of its consumers.
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Binds a parameter's current value; its gradient is accumulated into
    /// the parameter by [`Graph::backward`].
    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        let v = self.push(params.get(id).value.clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn conv2d(&mut self, input: Var, kernels: Var, bias: Var, stride: usize) -> Result<Var> {
        let out = ops::conv2d(self.value(input), self.value(kernels), self.value(bias), stride)?;
        let rg = self.rg(input) || self.rg(kernels) || self.rg(bias);
        Ok(self.push(out, Op::Conv2d { input, kernels, bias, stride }, rg))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let out = ops::matvec(self.value(w), self.value(x))?;
        let rg = self.rg(w) || self.rg(x);
        Ok(self.push(out, Op::MatVec { w, x }, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul { a, b }, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = ops::transpose(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::contract(
                name,
                format!("operand shapes differ: {:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::from_vec(self.shape(a), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let out = self.value(a).map(|v| v * factor);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, factor), rg)
    }

    /// `max(x, 0)`; NaN passes through rather than being clamped away.
    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v < T::zero() { T::zero() } else { v });
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(ops::sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    /// Affine map `W x + b`.
    pub fn linear(&mut self, w: Var, b: Var, x: Var) -> Result<Var> {
        let wx = self.matvec(w, x)?;
        self.add(wx, b)
    }

    /// Concatenates tensors of equal rank along `axis`; all other extents
    /// must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        const OP: &str = "concat";
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract(OP, "no operands"))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::contract(
                OP,
                format!("axis {axis} out of range for rank {}", base.len()),
            ));
        }
        let mut out_shape = base.clone();
        out_shape[axis] = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::contract(
                    OP,
                    format!("shape {s:?} incompatible with {base:?} along axis {axis}"),
                ));
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let chunk = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let out = Tensor::from_vec(&out_shape, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::Concat { parts: parts.to_vec(), axis }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        self.reshape(a, &[n])
    }

    /// Rows `start..start + len` along the leading axis.
    pub fn narrow(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let lead = *shape
            .first()
            .ok_or_else(|| Error::contract("narrow", "cannot narrow a rank-0 tensor"))?;
        if len == 0 || start + len > lead {
            return Err(Error::contract(
                "narrow",
                format!("range {start}..{} outside leading extent {lead}", start + len),
            ));
        }
        let inner: usize = shape[1..].iter().product();
        let data = self.value(a).data()[start * inner..(start + len) * inner].to_vec();
        let mut out_shape = shape;
        out_shape[0] = len;
        let out = Tensor::from_vec(&out_shape, data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Narrow { a, start, len }, rg))
    }

    /// Row `index` of the leading axis with that axis removed.
    pub fn select(&mut self, a: Var, index: usize) -> Result<Var> {
        let rest = self.shape(a).get(1..).map(<[usize]>::to_vec).unwrap_or_default();
        let row = self.narrow(a, index, 1)?;
        if rest.is_empty() {
            self.reshape(row, &[])
        } else {
            self.reshape(row, &rest)
        }
    }

    /// Scalar loss `-ln softmax(logits)[label]` for a 2-way decision.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let (probs, loss) = ops::softmax_cross_entropy(self.value(logits), label)?;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy { logits, label, probs },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().fold(T::zero(), |x, &y| x + y);
        let rg = self.rg(a);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    /// Sign (`input > 0`) of every ReLU input recorded so far, in node order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(self.value(a)),
                _ => None,
            })
            .flat_map(|t| t.data().iter().map(|&v| v > T::zero()))
            .collect()
    }

    /// Reverse-mode sweep from a scalar `root`, adding `d root / d value`
    /// into the gradient of every bound parameter.
    pub fn backward(&self, root: Var, params: &mut ParamSet<T>) -> Result<()> {
        self.backward_scaled(root, T::one(), params)
    }

    /// Like [`Graph::backward`] with the seed gradient set to `seed`.
    pub fn backward_scaled(&self, root: Var, seed: T, params: &mut ParamSet<T>) -> Result<()> {
        let root_value = self.value(root);
        if root_value.len() != 1 {
            return Err(Error::contract(
                "backward",
                format!("root must be a scalar, got shape {:?}", root_value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(root_value.shape(), seed));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Some(id) = node.param {
                params.get_mut(id).gradient.add_assign(&g);
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
        }
        Ok(())
    }

    fn accum<'a>(&self, grads: &'a mut [Option<Tensor<T>>], v: Var) -> Option<&'a mut Tensor<T>> {
        if !self.rg(v) {
            return None;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.shape(v)));
        }
        slot.as_mut()
    }

    fn take_slot(&self, grads: &mut [Option<Tensor<T>>], v: Var) -> Option<Tensor<T>> {
        self.rg(v)
            .then(|| grads[v.0].take().unwrap_or_else(|| Tensor::zeros(self.shape(v))))
    }

    fn propagate(&self, op: &Op<T>, out: &Tensor<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match op {
            Op::Leaf => {}
            &Op::Conv2d { input, kernels, bias, stride } => {
                let mut d_in = self.take_slot(grads, input);
                let mut d_k = self.take_slot(grads, kernels);
                let mut d_b = self.take_slot(grads, bias);
                ops::conv2d_backward(
                    self.value(input),
                    self.value(kernels),
                    stride,
                    g,
                    d_in.as_mut(),
                    d_k.as_mut(),
                    d_b.as_mut(),
                );
                for (v, t) in [(input, d_in), (kernels, d_k), (bias, d_b)] {
                    if let Some(t) = t {
                        match &mut grads[v.0] {
                            Some(existing) => existing.add_assign(&t),
                            slot => *slot = Some(t),
                        }
                    }
                }
            }
            &Op::MatVec { w, x } => {
                let wv = self.value(w);
                let n = wv.shape()[1];
                if let Some(dw) = self.accum(grads, w) {
                    let xd = self.value(x).data();
                    for (row, &gi) in dw.data_mut().chunks_exact_mut(n).zip(g.data()) {
                        ops::axpy(row, gi, xd);
                    }
                }
                if let Some(dx) = self.accum(grads, x) {
                    let dxd = dx.data_mut();
                    for (row, &gi) in wv.data().chunks_exact(n).zip(g.data()) {
                        ops::axpy(dxd, gi, row);
                    }
                }
            }
            &Op::MatMul { a, b } => {
                // dA = G B^T, dB = A^T G
                let (av, bv) = (self.value(a), self.value(b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                let gd = g.data();
                if let Some(da) = self.accum(grads, a) {
                    let dad = da.data_mut();
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &bv.data()[p * n..(p + 1) * n];
                            let grow = &gd[i * n..(i + 1) * n];
                            let s = grow.iter().zip(brow).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
                            dad[i * k + p] = dad[i * k + p] + s;
                        }
                    }
                }
                if let Some(db) = self.accum(grads, b) {
                    let dbd = db.data_mut();
                    for i in 0..m {
                        for p in 0..k {
                            let aval = av.data()[i * k + p];
                            for j in 0..n {
                                dbd[p * n + j] = dbd[p * n + j] + aval * gd[i * n + j];
                            }
                        }
                    }
                }
            }
            &Op::Transpose(a) => {
                if let Some(da) = self.accum(grads, a) {
                    let gt = ops::transpose(g).expect("transpose of rank-2 gradient");
                    da.add_assign(&gt);
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(d) = self.accum(grads, v) {
                        d.add_assign(g);
                    }
                }
            }
            &Op::Sub(a, b) => {
                if let Some(d) = self.accum(grads, a) {
                    d.add_assign(g);
                }
                if let Some(d) = self.accum(grads, b) {
                    for (x, &gv) in d.data_mut().iter_mut().zip(g.data()) {
                        *x = *x - gv;
                    }
                }
            }
            &Op::Mul(a, b) => {
                for (v, other) in [(a, b), (b, a)] {
                    let od = self.value(other).data();
                    if let Some(d) = self.accum(grads, v) {
                        for ((x, &gv), &o) in d.data_mut().iter_mut().zip(g.data()).zip(od) {
                            *x = *x + gv * o;
                        }
                    }
                }
            }
            &Op::Scale(a, factor) => {
                if let Some(d) = self.accum(grads, a) {
                    for (x, &gv) in d.data_mut().iter_mut().zip(g.data()) {
                        *x = *x + gv * factor;
                    }
                }
            }
            &Op::Relu(a) => {
                if let Some(d) = self.accum(grads, a) {
                    for ((x, &gv), &y) in d.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        if y > T::zero() {
                            *x = *x + gv;
                        }
                    }
                }
            }
            &Op::Tanh(a) => {
                if let Some(d) = self.accum(grads, a) {
                    for ((x, &gv), &y) in d.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *x = *x + gv * (T::one() - y * y);
                    }
                }
            }
            &Op::Sigmoid(a) => {
                if let Some(d) = self.accum(grads, a) {
                    for ((x, &gv), &y) in d.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *x = *x + gv * y * (T::one() - y);
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let base = out.shape();
                let outer: usize = base[..*axis].iter().product();
                let inner: usize = base[axis + 1..].iter().product();
                let row = base[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let chunk = self.shape(p)[*axis] * inner;
                    if let Some(d) = self.accum(grads, p) {
                        let dd = d.data_mut();
                        for o in 0..outer {
                            let src = &g.data()[o * row + offset..o * row + offset + chunk];
                            for (x, &gv) in dd[o * chunk..(o + 1) * chunk].iter_mut().zip(src) {
                                *x = *x + gv;
                            }
                        }
                    }
                    offset += chunk;
                }
            }
            &Op::Reshape(a) => {
                if let Some(d) = self.accum(grads, a) {
                    for (x, &gv) in d.data_mut().iter_mut().zip(g.data()) {
                        *x = *x + gv;
                    }
                }
            }
            &Op::Narrow { a, start, len } => {
                let inner: usize = self.shape(a)[1..].iter().product();
                if let Some(d) = self.accum(grads, a) {
                    let dst = &mut d.data_mut()[start * inner..(start + len) * inner];
                    for (x, &gv) in dst.iter_mut().zip(g.data()) {
                        *x = *x + gv;
                    }
                }
            }
            Op::SoftmaxCrossEntropy { logits, label, probs } => {
                let gv = g.data()[0];
                if let Some(d) = self.accum(grads, *logits) {
                    for (k, (x, &p)) in d.data_mut().iter_mut().zip(probs.data()).enumerate() {
                        let target = if k == *label { T::one() } else { T::zero() };
                        *x = *x + gv * (p - target);
                    }
                }
            }
            &Op::Sum(a) => {
                let gv = g.data()[0];
                if let Some(d) = self.accum(grads, a) {
                    for x in d.data_mut() {
                        *x = *x + gv;
                    }
                }
            }
        }
    }
}

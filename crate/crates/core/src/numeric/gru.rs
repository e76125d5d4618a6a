use crate::error::{Error, Result};
use crate::numeric::graph::{Graph, Var};
use crate::numeric::tensor::{Scalar, Tensor};

/// Weights of one GRU cell with hidden size `h` and input size `d`.
///
/// Rows are stacked per gate in the order update `z`, reset `r`,
/// candidate `ĥ`:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// ĥ  = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ ĥ
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCellParams<T> {
    /// `3h x d`
    pub input_weights: Tensor<T>,
    /// `3h x h`
    pub hidden_weights: Tensor<T>,
    /// `3h`
    pub biases: Tensor<T>,
}

impl<T: Scalar> GruCellParams<T> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        GruCellParams {
            input_weights: Tensor::zeros(&[3 * hidden, input_dim]),
            hidden_weights: Tensor::zeros(&[3 * hidden, hidden]),
            biases: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.biases.len() / 3
    }
}

/// A GRU cell whose weights are bound on a [`Graph`].
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    input_weights: Var,
    hidden_zr: Var,
    hidden_candidate: Var,
    biases: Var,
    input_dim: usize,
    hidden: usize,
}

impl GruVars {
    /// Validates shapes and splits the recurrent weights once so every
    /// step reuses the same nodes.
    pub fn bind<T: Scalar>(
        g: &mut Graph<T>,
        input_weights: Var,
        hidden_weights: Var,
        biases: Var,
    ) -> Result<Self> {
        const OP: &str = "gru_cell";
        let hidden = match *g.value(biases).shape() {
            [n] if n % 3 == 0 && n > 0 => n / 3,
            ref s => return Err(Error::contract(OP, format!("biases must have 3h entries, got {s:?}"))),
        };
        let input_dim = match *g.value(input_weights).shape() {
            [rows, d] if rows == 3 * hidden => d,
            ref s => {
                return Err(Error::contract(
                    OP,
                    format!("input weights must be {} x d, got {s:?}", 3 * hidden),
                ))
            }
        };
        if g.value(hidden_weights).shape() != [3 * hidden, hidden] {
            return Err(Error::contract(
                OP,
                format!(
                    "hidden weights must be {} x {hidden}, got {:?}",
                    3 * hidden,
                    g.value(hidden_weights).shape()
                ),
            ));
        }
        let hidden_zr = g.narrow(hidden_weights, 0, 2 * hidden)?;
        let hidden_candidate = g.narrow(hidden_weights, 2 * hidden, hidden)?;
        Ok(GruVars {
            input_weights,
            hidden_zr,
            hidden_candidate,
            biases,
            input_dim,
            hidden,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// One recurrence step; returns the updated hidden state.
    pub fn step<T: Scalar>(&self, g: &mut Graph<T>, x: Var, h: Var) -> Result<Var> {
        let n = self.hidden;
        if g.value(x).shape() != [self.input_dim] {
            return Err(Error::contract(
                "gru_cell",
                format!("input must have d = {} entries, got {:?}", self.input_dim, g.value(x).shape()),
            ));
        }
        if g.value(h).shape() != [n] {
            return Err(Error::contract(
                "gru_cell",
                format!("hidden state must have h = {n} entries, got {:?}", g.value(h).shape()),
            ));
        }
        let gx = g.linear(self.input_weights, self.biases, x)?;
        let zx = g.narrow(gx, 0, n)?;
        let rx = g.narrow(gx, n, n)?;
        let cx = g.narrow(gx, 2 * n, n)?;

        let uh = g.matvec(self.hidden_zr, h)?;
        let uz = g.narrow(uh, 0, n)?;
        let ur = g.narrow(uh, n, n)?;

        let z_pre = g.add(zx, uz)?;
        let z = g.sigmoid(z_pre);
        let r_pre = g.add(rx, ur)?;
        let r = g.sigmoid(r_pre);

        let rh = g.mul(r, h)?;
        let uc = g.matvec(self.hidden_candidate, rh)?;
        let c_pre = g.add(cx, uc)?;
        let candidate = g.tanh(c_pre);

        let delta = g.sub(candidate, h)?;
        let step = g.mul(z, delta)?;
        g.add(h, step)
    }
}

/// Evaluates one GRU step outside of any training graph.
pub fn gru_cell<T: Scalar>(x: &Tensor<T>, h: &Tensor<T>, params: &GruCellParams<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let w = g.constant(params.input_weights.clone());
    let u = g.constant(params.hidden_weights.clone());
    let b = g.constant(params.biases.clone());
    let cell = GruVars::bind(&mut g, w, u, b)?;
    let xv = g.constant(x.clone());
    let hv = g.constant(h.clone());
    let out = cell.step(&mut g, xv, hv)?;
    Ok(g.value(out).clone())
}

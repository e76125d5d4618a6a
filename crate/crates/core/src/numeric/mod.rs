//! Dense tensors, a reverse-mode differentiation tape and the recurrent
//! cell shared by the static and query networks.

mod gradcheck;
mod graph;
mod gru;
pub mod ops;
mod param;
mod tensor;

pub use gradcheck::{
    finite_difference_check, finite_difference_check_piecewise, relative_error, GradCheckReport, Selection, WorstComponent,
    DEFAULT_STEP,
};
pub use graph::{Graph, Var};
pub use gru::{gru_cell, GruCellParams, GruVars};
pub use ops::{conv2d, softmax, softmax_cross_entropy};
pub use param::{ParamId, ParamSet, Parameter};
pub use tensor::{Precision, Scalar, Tensor};

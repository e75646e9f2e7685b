//! Dense `f64` tensors with define-by-run reverse-mode differentiation.

pub mod gradcheck;
mod gru;
mod linalg;
mod params;
mod tape;
mod tensor;

pub use gru::{gru_cell, GruParams};
pub use params::{NamedTensor, ParamGroup, ParamId, ParamStore, Parameter};
pub use tape::{CustomOp, Gradients, Tape, Var};
pub use tensor::Tensor;

//! Minimal reverse-mode autodiff over dense row-major tensors.
//!
//! Provides exactly the operations the crackseq networks need: broadcasting
//! arithmetic, matrix products, gather-based data movement, normalization,
//! padded convolutions and pooling, and a stable logits cross-entropy. The
//! element type is generic so gradient checks can run in `f64`.

pub mod error;
pub mod float;
pub mod graph;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tensor;

pub use error::{Result, TensorError};
pub use float::Float;
pub use graph::{Gradients, Graph, Var};
pub use ops::shape::IndexMap;
pub use optim::Adam;
pub use params::{kaiming_uniform, trunc_normal, Param, ParamId, ParamStore};
pub use tensor::Tensor;

//! Dense tensors with a define-by-run reverse-mode differentiation tape.
//!
//! The engine covers exactly what the workflow-recognition model needs:
//! matrix products, pointwise maps with trailing-dimension broadcasting,
//! 1-D and 2-D convolutions, pooling, a fused LSTM cell, a fused
//! multi-head graph-attention kernel and classification losses.
//!
//! A [`Graph`] is built fresh for every forward pass. Leaves are created
//! from plain [`Tensor`]s or pulled from a [`ParamStore`]; every operation
//! appends a node, and [`Graph::backward`] walks the nodes in reverse,
//! returning a [`Gradients`] table keyed by leaf.
//!
//! ```
//! use grad_tensor::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.leaf(Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap(), true);
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, 4.0, 6.0]);
//! ```

mod error;
mod float;
mod graph;
mod linalg;
mod ops;
mod optim;
mod params;
mod rng;
mod tensor;

pub mod gradcheck;

pub use error::{Result, TensorError};
pub use float::Float;
pub use graph::{Gradients, Graph, Var};
pub use ops::attention::{gat_attention, GatKernelOutput};
pub use ops::elementwise::LEAKY_SLOPE;
pub use optim::{Adam, AdamConfig};
pub use params::ParamStore;
pub use rng::Rng;
pub use tensor::Tensor;

//! Minimal dense and graph-convolution kernels with hand-written gradients.

pub mod gcn;
pub mod gradcheck;
pub mod layers;
pub mod matrix;
pub mod params;

pub use gcn::{gcn_backward, gcn_forward, normalized_adjacency, GcnCache, GcnGrads};
pub use gradcheck::{check_slice, finite_diff_check, GradCheckReport};
pub use layers::*;
pub use matrix::Matrix;
pub use params::{adam_step, AdamConfig, ParamBundle};

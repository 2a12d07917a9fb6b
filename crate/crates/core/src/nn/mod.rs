//! Minimal dense network engine: matrices, MLPs with explicit backward
//! passes, optimizers, a seeded RNG, and a finite-difference oracle.

pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod rng;

pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use matrix::DenseMatrix;
pub use mlp::{sigmoid, Activation, Layer, LayerGrads, Mlp, MlpCache, ParamGrads};
pub use optim::{optimizer_step, OptimizerKind, OptimizerState};
pub use rng::{streams, SeededRng};

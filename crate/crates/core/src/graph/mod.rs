//! Model graph: embeddings, expert bank with softmax gates, split towers,
//! personalized gate and task aggregation.

pub mod checkpoint;
pub mod config;
pub mod embedding;
pub mod model;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use config::{FeatureSchema, Mode, ModelConfig};
pub use embedding::EmbeddingTable;
pub use model::{
    aggregate_task1, build_model, compute_loss, gating_factors, mixture, ppnet_gate, Features,
    ForwardCache, LossReport, Model, ModelGrads,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::OptimizerKind;

/// Model variant, from the plain backbone up to the full routed model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Two gates, one tower per task.
    Mmoe,
    /// Primary task split into a dedicated and a shared head, fixed 0.5/0.5 aggregation.
    SplitMmoe,
    /// Split heads plus gradient routing, fixed aggregation.
    SplitMmoeRouter,
    /// Routing plus the adaptive aggregation updater.
    DrgradNoPpnet,
    /// Routing, updater and the personalized gate on the shared vector.
    Drgrad,
    /// Backbone trained with PCGrad on the shared parameters.
    PcgradMmoe,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Mmoe,
        Mode::SplitMmoe,
        Mode::SplitMmoeRouter,
        Mode::DrgradNoPpnet,
        Mode::Drgrad,
        Mode::PcgradMmoe,
    ];

    pub fn is_split(self) -> bool {
        !matches!(self, Mode::Mmoe | Mode::PcgradMmoe)
    }

    pub fn uses_router(self) -> bool {
        matches!(self, Mode::SplitMmoeRouter | Mode::DrgradNoPpnet | Mode::Drgrad)
    }

    pub fn uses_updater(self) -> bool {
        matches!(self, Mode::DrgradNoPpnet | Mode::Drgrad)
    }

    pub fn uses_ppnet(self) -> bool {
        self == Mode::Drgrad
    }

    pub fn uses_pcgrad(self) -> bool {
        self == Mode::PcgradMmoe
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Mmoe => "mmoe",
            Mode::SplitMmoe => "split_mmoe",
            Mode::SplitMmoeRouter => "split_mmoe_router",
            Mode::DrgradNoPpnet => "drgrad_no_ppnet",
            Mode::Drgrad => "drgrad",
            Mode::PcgradMmoe => "pcgrad_mmoe",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
                Error::config(format!("unknown mode {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: Mode,
    pub num_experts: usize,
    /// Hidden and output widths of each expert; the last is the width of v1 and v_s.
    pub expert_dims: Vec<usize>,
    /// Tower widths including input (= last expert dim) and the single logit.
    pub tower_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub ppnet_embedding_dim: usize,
    pub gamma: f64,
    /// Updater decay; 1.0 accumulates without forgetting.
    pub rho: f64,
    /// Loss weight per task.
    pub alpha: Vec<f64>,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Keep the aggregation weights at 0.5/0.5 even in updater modes.
    pub freeze_updater: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mode: Mode::DrgradNoPpnet,
            num_experts: 4,
            expert_dims: vec![64, 32],
            tower_dims: vec![32, 16, 1],
            embedding_dim: 8,
            ppnet_embedding_dim: 8,
            gamma: 1.0,
            rho: 0.99,
            alpha: vec![1.0, 1.0],
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            freeze_updater: false,
        }
    }
}

impl ModelConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_experts == 0 {
            return Err(Error::config("num_experts must be at least 1"));
        }
        if self.expert_dims.is_empty() || self.expert_dims.contains(&0) {
            return Err(Error::config("expert_dims must be non-empty and positive"));
        }
        let shared_width = *self.expert_dims.last().unwrap();
        if self.tower_dims.len() < 2 || self.tower_dims.contains(&0) {
            return Err(Error::config("tower_dims needs an input and an output width"));
        }
        if self.tower_dims[0] != shared_width {
            return Err(Error::config(format!(
                "tower input width {} differs from expert output width {shared_width}",
                self.tower_dims[0]
            )));
        }
        if *self.tower_dims.last().unwrap() != 1 {
            return Err(Error::config("towers must end in a single logit"));
        }
        if self.embedding_dim == 0 || self.ppnet_embedding_dim == 0 {
            return Err(Error::config("embedding dims must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::config(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        if self.alpha.len() != 2 || self.alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::config("alpha needs two finite non-negative task weights"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Input columns the model is built for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub n_dense: usize,
    /// Bucket count of each sparse column's embedding table.
    pub sparse_vocab: Vec<usize>,
    /// Bucket count of the personalized id column, when present.
    pub user_vocab: Option<usize>,
}

impl FeatureSchema {
    pub fn input_width(&self, embedding_dim: usize) -> usize {
        self.n_dense + self.sparse_vocab.len() * embedding_dim
    }
}

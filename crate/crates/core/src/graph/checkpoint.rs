use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{FeatureSchema, ModelConfig};
use super::model::{build_model, Model};
use crate::engine::UpdaterState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Serialized model parameters plus the state needed to resume evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub schema: FeatureSchema,
    pub params: Vec<NamedTensor>,
    pub mu: (f64, f64),
    pub updater: Option<UpdaterState>,
    pub step: u64,
}

impl Checkpoint {
    pub fn capture(model: &Model, updater: Option<&UpdaterState>, step: u64) -> Self {
        let params = model
            .tensors()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                rows: t.rows(),
                cols: t.cols(),
                data: t.as_slice().to_vec(),
            })
            .collect();
        Self {
            model: model.config().clone(),
            schema: model.schema().clone(),
            params,
            mu: model.mu(),
            updater: updater.cloned(),
            step,
        }
    }

    /// Rebuilds the model and overwrites every parameter from the checkpoint.
    pub fn restore(&self) -> Result<Model> {
        let mut model = build_model(&self.model, &self.schema)?;
        {
            let mut targets = model.tensors_mut();
            if targets.len() != self.params.len() {
                return Err(Error::Schema(format!(
                    "checkpoint has {} tensors, model has {}",
                    self.params.len(),
                    targets.len()
                )));
            }
            for ((name, t), saved) in targets.iter_mut().zip(&self.params) {
                if *name != saved.name || t.shape() != (saved.rows, saved.cols) || saved.data.len() != t.len() {
                    return Err(Error::Schema(format!(
                        "checkpoint tensor {} ({}x{}) does not match model tensor {name} {:?}",
                        saved.name,
                        saved.rows,
                        saved.cols,
                        t.shape()
                    )));
                }
                t.as_mut_slice().copy_from_slice(&saved.data);
            }
        }
        model.set_mu(self.mu.0, self.mu.1)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path.to_path_buf()));
        }
        let bytes = fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

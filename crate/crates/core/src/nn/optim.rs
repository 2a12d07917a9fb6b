use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use super::mlp::{Mlp, ParamGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer state for one parameter group (one network or one table).
///
/// Moments are allocated on the first update and must keep the same layout
/// afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    /// Applies one descent step to `params` using `grads`, tensor by tensor.
    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "{} parameter tensors, {} gradient tensors",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::shape(format!(
                    "tensor {i}: {} parameters, {} gradients",
                    p.len(),
                    g.len()
                )));
            }
        }
        if self.kind == OptimizerKind::Adam {
            if self.first_moment.is_empty() {
                self.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
                self.second_moment = self.first_moment.clone();
            } else if self.first_moment.len() != params.len()
                || self
                    .first_moment
                    .iter()
                    .zip(&params)
                    .any(|(m, p)| m.len() != p.len())
            {
                return Err(Error::shape("parameter layout changed under adam state"));
            }
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (w, d) in p.iter_mut().zip(g) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
                let t = self.step as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for (((p, g), m), v) in params
                    .into_iter()
                    .zip(grads)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    for (((w, &d), mi), vi) in p.iter_mut().zip(g).zip(m).zip(v) {
                        *mi = b1 * *mi + (1.0 - b1) * d;
                        *vi = b2 * *vi + (1.0 - b2) * d * d;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }

    /// Moment buffers, for checkpointing.
    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.first_moment, &self.second_moment)
    }
}

/// Updates every parameter of `net` from `grads`.
pub fn optimizer_step(net: &mut Mlp, grads: &ParamGrads, state: &mut OptimizerState) -> Result<()> {
    grads.check_layout(net)?;
    let params = net.tensors_mut().map(DenseMatrix::as_mut_slice).collect();
    let grads = grads.tensors().map(DenseMatrix::as_slice).collect();
    state.update(params, grads)
}

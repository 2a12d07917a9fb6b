//! Gradient router.
//!
//! Given the flattened tower gradients of the dedicated primary head
//! (`g1p`), the shared primary head (`g1pp`) and the auxiliary head (`g2`),
//! the router measures direction (cosine) and relative scale between them and
//! emits two additive gradients:
//!
//! ```text
//! xi_a = cos(g1p, g1pp)          lambda_a = clip(|g1p| / |g1pp|, 0, 1)^gamma
//! xi_b = cos(g1p, g2)            lambda_b = clip(|g1p| / |g2|,   0, 1)^gamma
//!
//! gR1p  = (1 - [xi_a < 0] * xi_a) * lambda_a * g1pp + [xi_b >= 0] * lambda_b * g2
//! gR1pp = -[xi_a * xi_b < 0] * xi_a * xi_b * g1pp
//! ```
//!
//! `gR1p` is added to the dedicated head's update, `gR1pp` to the shared
//! primary head's update. The auxiliary head always descends on its own
//! gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::matrix::dot;

/// Flattened per-tower gradients for one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTriple {
    pub g1p: Vec<f64>,
    pub g1pp: Vec<f64>,
    pub g2: Vec<f64>,
    pub step: u64,
}

impl GradientTriple {
    pub fn new(g1p: Vec<f64>, g1pp: Vec<f64>, g2: Vec<f64>, step: u64) -> Result<Self> {
        let triple = Self {
            g1p,
            g1pp,
            g2,
            step,
        };
        triple.validate()?;
        Ok(triple)
    }

    pub fn len(&self) -> usize {
        self.g1p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g1p.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.g1pp.len() != self.g1p.len() || self.g2.len() != self.g1p.len() {
            return Err(Error::shape(format!(
                "tower gradients differ in length: {}, {}, {}",
                self.g1p.len(),
                self.g1pp.len(),
                self.g2.len()
            )));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&self.g1p) && finite(&self.g1pp) && finite(&self.g2)) {
            return Err(Error::numeric(format!(
                "non-finite tower gradient at step {}",
                self.step
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterOutput {
    pub g_r1p: Vec<f64>,
    pub g_r1pp: Vec<f64>,
    /// cos(g1p, g1pp)
    pub xi_a: f64,
    /// cos(g1p, g2)
    pub xi_b: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
}

impl RouterOutput {
    /// Output that leaves every tower on its plain gradient.
    pub fn zeros(len: usize) -> Self {
        Self {
            g_r1p: vec![0.0; len],
            g_r1pp: vec![0.0; len],
            xi_a: 0.0,
            xi_b: 0.0,
            lambda_a: 0.0,
            lambda_b: 0.0,
        }
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = l2_norm(u);
    let nv = l2_norm(v);
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// `clip(|u| / |v|, 0, 1)^gamma`; 0 when `v` is the zero vector.
pub fn scale_ratio(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    let nv = l2_norm(v);
    if nv == 0.0 {
        return 0.0;
    }
    (l2_norm(u) / nv).clamp(0.0, 1.0).powf(gamma)
}

pub fn route(triple: &GradientTriple, gamma: f64) -> Result<RouterOutput> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::config(format!("gamma must be positive, got {gamma}")));
    }
    triple.validate()?;
    let GradientTriple { g1p, g1pp, g2, .. } = triple;

    let xi_a = cosine(g1p, g1pp);
    let xi_b = cosine(g1p, g2);
    let lambda_a = scale_ratio(g1p, g1pp, gamma);
    let lambda_b = scale_ratio(g1p, g2, gamma);

    let conflict_a = if xi_a < 0.0 { xi_a } else { 0.0 };
    let coef_g1pp = (1.0 - conflict_a) * lambda_a;
    let coef_g2 = if xi_b >= 0.0 { lambda_b } else { 0.0 };
    let g_r1p = g1pp
        .iter()
        .zip(g2)
        .map(|(a, b)| coef_g1pp * a + coef_g2 * b)
        .collect();

    let product = xi_a * xi_b;
    let coef_shared = if product < 0.0 { -product } else { 0.0 };
    let g_r1pp = g1pp.iter().map(|a| coef_shared * a).collect();

    Ok(RouterOutput {
        g_r1p,
        g_r1pp,
        xi_a,
        xi_b,
        lambda_a,
        lambda_b,
    })
}

use serde::{Deserialize, Serialize};

use super::router::{l2_norm, GradientTriple, RouterOutput};
use crate::error::{Error, Result};

/// Accumulators and aggregation weights for the two primary-task heads.
///
/// `sigma_p`/`sigma_pp` accumulate the norm of each head's routed update with
/// decay `rho`; `mu_p`/`mu_pp` are their softmax and always sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdaterState {
    pub sigma_p: f64,
    pub sigma_pp: f64,
    pub mu_p: f64,
    pub mu_pp: f64,
    pub rho: f64,
}

impl UpdaterState {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::config(format!("updater decay must lie in (0, 1], got {rho}")));
        }
        Ok(Self {
            sigma_p: 0.0,
            sigma_pp: 0.0,
            mu_p: 0.5,
            mu_pp: 0.5,
            rho,
        })
    }

    pub fn weights(&self) -> (f64, f64) {
        (self.mu_p, self.mu_pp)
    }
}

/// Advances the accumulators with this step's routed updates and returns the
/// new `(mu_p, mu_pp)`.
pub fn updater_step(
    state: &mut UpdaterState,
    triple: &GradientTriple,
    routed: &RouterOutput,
) -> Result<(f64, f64)> {
    if routed.g_r1p.len() != triple.len() || routed.g_r1pp.len() != triple.len() {
        return Err(Error::shape("router output does not match the gradient triple"));
    }
    let norm_of_sum = |g: &[f64], r: &[f64]| {
        let s: Vec<f64> = g.iter().zip(r).map(|(a, b)| a + b).collect();
        l2_norm(&s)
    };
    state.sigma_p = state.rho * state.sigma_p + norm_of_sum(&triple.g1p, &routed.g_r1p);
    state.sigma_pp = state.rho * state.sigma_pp + norm_of_sum(&triple.g1pp, &routed.g_r1pp);
    let (mu_p, mu_pp) = softmax2(state.sigma_p, state.sigma_pp);
    state.mu_p = mu_p;
    state.mu_pp = mu_pp;
    Ok((mu_p, mu_pp))
}

/// Two-way softmax; `mu_pp` is computed as `1 - mu_p` so the pair sums to one.
fn softmax2(a: f64, b: f64) -> (f64, f64) {
    let mu_p = 1.0 / (1.0 + (b - a).exp());
    (mu_p, 1.0 - mu_p)
}

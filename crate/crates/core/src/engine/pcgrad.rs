//! PCGrad baseline: project each task gradient off the normal plane of every
//! task it conflicts with.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::matrix::dot;

/// Projects each gradient against the *original* gradients of the other
/// tasks, visiting the others in a shuffled order. Returns the projected
/// gradients, one per task; callers sum them for the shared update.
pub fn pcgrad_project<R: Rng + ?Sized>(grads: &[Vec<f64>], rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if grads.len() < 2 {
        return Err(Error::shape("PCGrad needs at least two task gradients"));
    }
    let len = grads[0].len();
    if grads.iter().any(|g| g.len() != len) {
        return Err(Error::shape("task gradients differ in length"));
    }
    let norms_sq: Vec<f64> = grads.iter().map(|g| dot(g, g)).collect();
    let mut projected = grads.to_vec();
    for (i, gi) in projected.iter_mut().enumerate() {
        let mut order: Vec<usize> = (0..grads.len()).filter(|&j| j != i).collect();
        order.shuffle(rng);
        for j in order {
            let gj = &grads[j];
            let d = dot(gi, gj);
            if d < 0.0 && norms_sq[j] > 0.0 {
                let c = d / norms_sq[j];
                gi.iter_mut().zip(gj).for_each(|(a, b)| *a -= c * b);
            }
        }
    }
    Ok(projected)
}

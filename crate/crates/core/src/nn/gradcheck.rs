//! Central finite differences, used as the oracle for every backward pass.

use super::matrix::DenseMatrix;
use super::mlp::{Mlp, ParamGrads};
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Numerical gradient of `loss(net.forward(input).output)` with respect to
/// each parameter of `net`.
pub fn finite_diff_grad<F>(net: &Mlp, input: &DenseMatrix, loss: F, h: f64) -> Result<ParamGrads>
where
    F: Fn(&DenseMatrix) -> f64,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::config(format!("finite-difference step must be positive, got {h}")));
    }
    let eval = |n: &Mlp| -> Result<f64> {
        let value = loss(n.forward(input)?.output());
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::numeric("loss is not finite"))
        }
    };
    let mut work = net.clone();
    let mut grads = ParamGrads::zeros_like(net);
    let n_tensors = net.tensors().count();
    for t in 0..n_tensors {
        let len = net.tensors().nth(t).unwrap().len();
        for i in 0..len {
            let original = net.tensors().nth(t).unwrap().as_slice()[i];
            set_param(&mut work, t, i, original + h);
            let plus = eval(&work)?;
            set_param(&mut work, t, i, original - h);
            let minus = eval(&work)?;
            set_param(&mut work, t, i, original);
            grads.tensors_mut().nth(t).unwrap().as_mut_slice()[i] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grads)
}

fn set_param(net: &mut Mlp, tensor: usize, index: usize, value: f64) {
    net.tensors_mut().nth(tensor).unwrap().as_mut_slice()[index] = value;
}

/// Largest elementwise relative error between two gradient vectors, with
/// magnitudes below `floor` treated as `floor`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

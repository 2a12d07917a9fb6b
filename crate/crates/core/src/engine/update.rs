use super::flatten::{unflatten, Layout};
use super::router::{GradientTriple, RouterOutput};
use crate::error::{Error, Result};
use crate::nn::{optimizer_step, Mlp, OptimizerState, ParamGrads};

/// The three identically shaped task towers: dedicated primary head,
/// shared primary head, auxiliary head.
pub struct Towers<'a> {
    pub t1p: &'a mut Mlp,
    pub t1pp: &'a mut Mlp,
    pub t2: &'a mut Mlp,
}

pub struct TowerOptimizers<'a> {
    pub t1p: &'a mut OptimizerState,
    pub t1pp: &'a mut OptimizerState,
    pub t2: &'a mut OptimizerState,
}

/// Descends the dedicated head on `g1p + gR1p`, the shared primary head on
/// `g1pp + gR1pp`, and the auxiliary head on `g2` alone.
pub fn apply_routed_update(
    towers: Towers<'_>,
    triple: &GradientTriple,
    routed: &RouterOutput,
    optimizers: TowerOptimizers<'_>,
) -> Result<()> {
    let n = triple.len();
    if routed.g_r1p.len() != n || routed.g_r1pp.len() != n {
        return Err(Error::shape("router output does not match the gradient triple"));
    }
    let sum = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
    let steps: [(&mut Mlp, Vec<f64>, &mut OptimizerState); 3] = [
        (towers.t1p, sum(&triple.g1p, &routed.g_r1p), optimizers.t1p),
        (towers.t1pp, sum(&triple.g1pp, &routed.g_r1pp), optimizers.t1pp),
        (towers.t2, triple.g2.clone(), optimizers.t2),
    ];
    for (net, flat, opt) in steps {
        let layout = Layout::of(&ParamGrads::zeros_like(net));
        if layout.len() != n {
            return Err(Error::shape(format!(
                "tower {} has {} parameters, gradients have {n}",
                net.name(),
                layout.len()
            )));
        }
        let grads = unflatten(&flat, &layout)?;
        optimizer_step(net, &grads, opt)?;
    }
    Ok(())
}

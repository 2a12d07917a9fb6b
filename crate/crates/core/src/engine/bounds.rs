//! Checks on router output: norm bounds and the four-regime upstream
//! gradient table.

use serde::Serialize;

use super::router::{cosine, l2_norm, route, GradientTriple, RouterOutput};
use crate::error::{Error, Result};

const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormBoundReport {
    pub routed_p_norm: f64,
    pub routed_p_bound: f64,
    pub routed_pp_norm: f64,
    pub routed_pp_bound: f64,
}

impl NormBoundReport {
    pub fn routed_p_slack(&self) -> f64 {
        self.routed_p_bound - self.routed_p_norm
    }

    pub fn routed_pp_slack(&self) -> f64 {
        self.routed_pp_bound - self.routed_pp_norm
    }

    pub fn holds(&self) -> bool {
        within(self.routed_p_norm, self.routed_p_bound)
            && within(self.routed_pp_norm, self.routed_pp_bound)
    }
}

fn within(value: f64, bound: f64) -> bool {
    value <= bound + REL_TOL * bound.max(value)
}

/// Verifies
/// `|gR1p| <= (1 - min(xi_a, 0)) * lambda_a * |g1pp| + lambda_b * |g2|` and
/// `|gR1pp| <= |g1pp|`. A violation is returned as [`Error::Invariant`].
pub fn norm_bound_check(triple: &GradientTriple, routed: &RouterOutput) -> Result<NormBoundReport> {
    let n1pp = l2_norm(&triple.g1pp);
    let n2 = l2_norm(&triple.g2);
    let report = NormBoundReport {
        routed_p_norm: l2_norm(&routed.g_r1p),
        routed_p_bound: (1.0 - routed.xi_a.min(0.0)) * routed.lambda_a * n1pp
            + routed.lambda_b * n2,
        routed_pp_norm: l2_norm(&routed.g_r1pp),
        routed_pp_bound: n1pp,
    };
    if report.holds() {
        Ok(report)
    } else {
        Err(Error::Invariant(format!(
            "router norm bound violated at step {}: {report:?}",
            triple.step
        )))
    }
}

/// Sign regime of `(xi_a, xi_b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SignRegime {
    /// xi_a >= 0, xi_b >= 0
    BothCooperate,
    /// xi_a >= 0, xi_b < 0
    AuxConflict,
    /// xi_a < 0, xi_b >= 0
    SharedConflict,
    /// xi_a < 0, xi_b < 0
    BothConflict,
}

impl SignRegime {
    pub fn of(xi_a: f64, xi_b: f64) -> Self {
        match (xi_a >= 0.0, xi_b >= 0.0) {
            (true, true) => SignRegime::BothCooperate,
            (true, false) => SignRegime::AuxConflict,
            (false, true) => SignRegime::SharedConflict,
            (false, false) => SignRegime::BothConflict,
        }
    }

    pub const ALL: [SignRegime; 4] = [
        SignRegime::BothCooperate,
        SignRegime::AuxConflict,
        SignRegime::SharedConflict,
        SignRegime::BothConflict,
    ];
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Report {
    pub regime: SignRegime,
    pub xi_a: f64,
    pub xi_b: f64,
    /// Whether the table's dedicated-head expression contains `g2`.
    pub aux_in_dedicated: bool,
    /// Whether `g1pp` enters the dedicated-head expression scaled by `(1 - xi_a)`.
    pub shared_amplified: bool,
    /// Coefficient on `g1pp` in the shared-vector expression.
    pub shared_vector_coef: f64,
    pub dedicated_table: Vec<f64>,
    pub dedicated_routed: Vec<f64>,
    pub shared_table: Vec<f64>,
    pub shared_routed: Vec<f64>,
    pub dedicated_max_diff: f64,
    pub shared_max_diff: f64,
}

/// Evaluates the per-regime upstream gradient formulas for the dedicated
/// vector (`g1p + gR1p`) and the shared vector (`g2 + g1pp + gR1pp`) and
/// compares them with what [`route`] produces.
///
/// `beta1`/`beta2` are the table's composite coefficients; agreement with the
/// router requires `beta1 = lambda_a` and `beta2 = lambda_b`.
pub fn table1_oracle(
    triple: &GradientTriple,
    gamma: f64,
    beta1: f64,
    beta2: f64,
) -> Result<Table1Report> {
    let routed = route(triple, gamma)?;
    let xi_a = cosine(&triple.g1p, &triple.g1pp);
    let xi_b = cosine(&triple.g1p, &triple.g2);
    let regime = SignRegime::of(xi_a, xi_b);

    let (aux_in_dedicated, shared_amplified, shared_vector_coef) = match regime {
        SignRegime::BothCooperate => (true, false, 1.0),
        SignRegime::AuxConflict => (false, false, 1.0 - xi_a * xi_b),
        SignRegime::SharedConflict => (true, true, 1.0 - xi_a * xi_b),
        SignRegime::BothConflict => (false, true, 1.0),
    };
    let g1pp_coef = if shared_amplified {
        beta1 * (1.0 - xi_a)
    } else {
        beta1
    };
    let g2_coef = if aux_in_dedicated { beta2 } else { 0.0 };

    let n = triple.len();
    let mut dedicated_table = Vec::with_capacity(n);
    let mut shared_table = Vec::with_capacity(n);
    for i in 0..n {
        dedicated_table.push(triple.g1p[i] + g1pp_coef * triple.g1pp[i] + g2_coef * triple.g2[i]);
        shared_table.push(triple.g2[i] + shared_vector_coef * triple.g1pp[i]);
    }
    let dedicated_routed: Vec<f64> = (0..n).map(|i| triple.g1p[i] + routed.g_r1p[i]).collect();
    let shared_routed: Vec<f64> = (0..n)
        .map(|i| triple.g2[i] + triple.g1pp[i] + routed.g_r1pp[i])
        .collect();

    let max_diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    Ok(Table1Report {
        regime,
        xi_a,
        xi_b,
        aux_in_dedicated,
        shared_amplified,
        shared_vector_coef,
        dedicated_max_diff: max_diff(&dedicated_table, &dedicated_routed),
        shared_max_diff: max_diff(&shared_table, &shared_routed),
        dedicated_table,
        dedicated_routed,
        shared_table,
        shared_routed,
    })
}

impl Table1Report {
    /// Fails with [`Error::Oracle`] unless the table and the router agree to
    /// `REL_TOL` relative to the inputs' magnitude.
    pub fn check(&self, triple: &GradientTriple) -> Result<()> {
        let scale = 1.0
            + l2_norm(&triple.g1p).max(l2_norm(&triple.g1pp)).max(l2_norm(&triple.g2)) * 4.0;
        let tol = REL_TOL * scale;
        if self.dedicated_max_diff <= tol && self.shared_max_diff <= tol {
            Ok(())
        } else {
            Err(Error::Oracle(format!(
                "regime {:?}: dedicated diff {:e}, shared diff {:e} (tol {:e})",
                self.regime, self.dedicated_max_diff, self.shared_max_diff, tol
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(a: &[f64], b: &[f64], c: &[f64]) -> GradientTriple {
        GradientTriple::new(a.to_vec(), b.to_vec(), c.to_vec(), 0).unwrap()
    }

    #[test]
    fn full_cooperation_bound_is_tight() {
        let t = triple(&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]);
        let r = route(&t, 1.0).unwrap();
        let rep = norm_bound_check(&t, &r).unwrap();
        assert_eq!(rep.routed_p_norm, 2.0);
        assert_eq!(rep.routed_p_bound, 2.0);
        assert_eq!(rep.routed_p_slack(), 0.0);
    }

    #[test]
    fn zero_inputs_give_zero_bounds() {
        let t = triple(&[1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0]);
        let r = route(&t, 1.0).unwrap();
        let rep = norm_bound_check(&t, &r).unwrap();
        assert_eq!(rep.routed_p_bound, 0.0);
        assert_eq!(rep.routed_p_norm, 0.0);
        assert_eq!(rep.routed_pp_bound, 0.0);
    }

    #[test]
    fn violation_is_reported() {
        let t = triple(&[1.0], &[1.0], &[1.0]);
        let mut r = route(&t, 1.0).unwrap();
        r.g_r1pp = vec![5.0];
        assert!(matches!(norm_bound_check(&t, &r), Err(Error::Invariant(_))));
    }

    #[test]
    fn cooperate_row_shared_vector_is_plain_sum() {
        let t = triple(&[1.0, 0.2], &[0.5, 0.1], &[2.0, 1.0]);
        let r = route(&t, 1.0).unwrap();
        let rep = table1_oracle(&t, 1.0, r.lambda_a, r.lambda_b).unwrap();
        assert_eq!(rep.regime, SignRegime::BothCooperate);
        assert_eq!(rep.shared_vector_coef, 1.0);
        rep.check(&t).unwrap();
    }

    #[test]
    fn aux_conflict_row_omits_g2() {
        let t = triple(&[1.0, 0.0], &[1.0, 1.0], &[-1.0, 0.5]);
        let r = route(&t, 1.0).unwrap();
        let rep = table1_oracle(&t, 1.0, r.lambda_a, r.lambda_b).unwrap();
        assert_eq!(rep.regime, SignRegime::AuxConflict);
        assert!(!rep.aux_in_dedicated);
        rep.check(&t).unwrap();
    }

    #[test]
    fn mixed_sign_shared_coefficient_is_two() {
        let t = triple(&[1.0, 0.0], &[-1.0, 0.0], &[1.0, 0.0]);
        let r = route(&t, 1.0).unwrap();
        let rep = table1_oracle(&t, 1.0, r.lambda_a, r.lambda_b).unwrap();
        assert_eq!(rep.regime, SignRegime::SharedConflict);
        assert_eq!(rep.shared_vector_coef, 2.0);
        rep.check(&t).unwrap();
    }

    #[test]
    fn wrong_betas_fail_the_check() {
        let t = triple(&[1.0, 0.0], &[1.0, 1.0], &[2.0, 0.5]);
        let rep = table1_oracle(&t, 1.0, 0.1, 0.1).unwrap();
        assert!(matches!(rep.check(&t), Err(Error::Oracle(_))));
    }
}

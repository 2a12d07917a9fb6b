use drgrad::engine::{cosine, l2_norm, norm_bound_check, route, GradientTriple};
use proptest::prelude::*;

fn vectors(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    let v = || prop::collection::vec(-10.0..10.0f64, len);
    (v(), v(), v())
}

fn triple_strategy() -> impl Strategy<Value = GradientTriple> {
    (1usize..40)
        .prop_flat_map(vectors)
        .prop_map(|(a, b, c)| GradientTriple::new(a, b, c, 0).unwrap())
}

fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
    let scale = l2_norm(a).max(l2_norm(b)).max(1e-300);
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= rel * scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn coefficients_stay_in_range(t in triple_strategy(), gamma in 0.1..4.0f64) {
        let r = route(&t, gamma).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r.xi_a) && (-1.0..=1.0).contains(&r.xi_b));
        prop_assert!((0.0..=1.0).contains(&r.lambda_a) && (0.0..=1.0).contains(&r.lambda_b));
    }

    #[test]
    fn positively_homogeneous(t in triple_strategy(), c in 1e-3..1e3f64) {
        let scaled = GradientTriple::new(
            t.g1p.iter().map(|v| v * c).collect(),
            t.g1pp.iter().map(|v| v * c).collect(),
            t.g2.iter().map(|v| v * c).collect(),
            0,
        ).unwrap();
        let r = route(&t, 1.0).unwrap();
        let s = route(&scaled, 1.0).unwrap();
        let expect: Vec<f64> = r.g_r1p.iter().map(|v| v * c).collect();
        prop_assert!(close(&s.g_r1p, &expect, 1e-10));
        let expect: Vec<f64> = r.g_r1pp.iter().map(|v| v * c).collect();
        prop_assert!(close(&s.g_r1pp, &expect, 1e-10));
    }

    #[test]
    fn gates_are_exact(t in triple_strategy()) {
        let r = route(&t, 1.0).unwrap();
        if r.xi_a * r.xi_b >= 0.0 {
            prop_assert!(r.g_r1pp.iter().all(|&v| v == 0.0));
        }
        if r.xi_b < 0.0 {
            // no auxiliary gradient reaches the dedicated head
            let coef = (1.0 - r.xi_a.min(0.0)) * r.lambda_a;
            let expect: Vec<f64> = t.g1pp.iter().map(|v| coef * v).collect();
            prop_assert_eq!(&r.g_r1p, &expect);
        }
    }

    #[test]
    fn zero_auxiliary_reduces_to_primary_pair(t in triple_strategy()) {
        let z = GradientTriple::new(t.g1p.clone(), t.g1pp.clone(), vec![0.0; t.len()], 0).unwrap();
        let r = route(&z, 1.0).unwrap();
        prop_assert_eq!(r.xi_b, 0.0);
        prop_assert_eq!(r.lambda_b, 0.0);
        prop_assert!(r.g_r1pp.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn norm_bounds_hold(t in triple_strategy(), gamma in 0.1..4.0f64) {
        let r = route(&t, gamma).unwrap();
        prop_assert!(norm_bound_check(&t, &r).unwrap().holds());
    }

    #[test]
    fn cosine_is_symmetric((a, b, _) in (1usize..30).prop_flat_map(vectors)) {
        prop_assert_eq!(cosine(&a, &b), cosine(&b, &a));
    }
}

#[test]
fn zero_vectors_route_to_zero() {
    let z = GradientTriple::new(vec![0.0; 5], vec![0.0; 5], vec![0.0; 5], 0).unwrap();
    let r = route(&z, 1.0).unwrap();
    assert!(r.g_r1p.iter().chain(&r.g_r1pp).all(|&v| v == 0.0));
    assert_eq!((r.xi_a, r.xi_b, r.lambda_a, r.lambda_b), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn rejects_mismatched_and_non_finite() {
    assert!(GradientTriple::new(vec![1.0], vec![1.0, 2.0], vec![1.0], 0).is_err());
    assert!(GradientTriple::new(vec![f64::NAN], vec![1.0], vec![1.0], 0).is_err());
    let t = GradientTriple::new(vec![1.0], vec![1.0], vec![1.0], 0).unwrap();
    assert!(route(&t, 0.0).is_err());
}

use gamma_glm::series::{power_normalizer, power_sums, SeriesTolerance};
use proptest::prelude::*;

#[test]
fn final_ratio_is_below_one_half_past_twice_the_mean() {
    let tol = SeriesTolerance::default();
    for mu in [0.05, 0.5, 1.0, 3.0, 12.0, 50.0, 300.0, 2500.0] {
        for gamma in [0.0, 0.1, 1.0] {
            let s = power_sums(mu, gamma, &tol).unwrap();
            let expected = (mu / (s.highest + 1) as f64).powf(1.0 + gamma);
            assert!((s.final_ratio - expected).abs() <= 1e-12 * expected.max(1e-300));
            if s.highest as f64 > 2.0 * mu {
                assert!(s.final_ratio < 0.5, "mu = {mu}, gamma = {gamma}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalizer_decreases_in_gamma(mu in 0.01f64..200.0, g1 in 0.01f64..2.0, g2 in 0.01f64..2.0) {
        prop_assume!((g1 - g2).abs() > 1e-3);
        let tol = SeriesTolerance::default();
        let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let a = power_normalizer(mu, lo, &tol).unwrap();
        let b = power_normalizer(mu, hi, &tol).unwrap();
        prop_assert!(b < a, "S({lo}) = {a}, S({hi}) = {b}");
    }

    #[test]
    fn normalizer_lies_in_the_unit_interval(mu in 1e-3f64..5000.0, gamma in 1e-3f64..3.0) {
        let s = power_normalizer(mu, gamma, &SeriesTolerance::default()).unwrap();
        prop_assert!(s > 0.0 && s <= 1.0);
    }

    #[test]
    fn doubling_the_term_budget_changes_nothing(mu in 1e-3f64..5000.0, gamma in 0.0f64..2.0) {
        let base = SeriesTolerance::new(1e-12, 5_000).unwrap();
        let more = SeriesTolerance::new(1e-12, 10_000).unwrap();
        let a = power_sums(mu, gamma, &base).unwrap();
        let b = power_sums(mu, gamma, &more).unwrap();
        prop_assert!((a.normalizer - b.normalizer).abs() <= 1e-12 * a.normalizer);
        prop_assert!((a.first_moment - b.first_moment).abs() <= 1e-12 * a.first_moment.abs().max(1e-300));
    }
}

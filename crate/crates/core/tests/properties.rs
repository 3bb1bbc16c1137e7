mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn laplacian_is_self_adjoint(case in domain_case(), seed in any::<u64>()) {
        prop_assert!(self_adjoint(&case, seed).is_ok(), "{:?}", self_adjoint(&case, seed));
    }

    #[test]
    fn solve_inverts_apply_laplacian(case in domain_case(), seed in any::<u64>()) {
        let r = solve_inverts_apply(&case, seed);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn poisson_solve_is_monotone(case in domain_case(), seed in any::<u64>()) {
        let r = monotone_solve(&case, seed);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn adams_ratio_and_lambda_scale(case in domain_case(), p in 2.0..40.0f64, c in 0.1..10.0f64) {
        let r = analysis_scaling(&case, p, c);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn fit_recovers_model(q in -50.0..50.0f64, a in -20.0..20.0f64, b in -20.0..20.0f64) {
        let r = fit_is_exact(q, a, b);
        prop_assert!(r.is_ok(), "{:?}", r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn solutions_are_positive_and_balanced(case in domain_case(), p in 1.6..6.0f64) {
        let r = solution_invariants(&case, p);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn green_split_is_consistent(case in domain_case(), offset in prop::collection::vec(-1.0..1.0f64, 4)) {
        let r = green_splitting(&case, &offset);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn adams_constant_identity(dim in 3usize..=10) {
        let r = constants_identity(dim);
        prop_assert!(r.is_ok(), "{:?}", r);
    }
}

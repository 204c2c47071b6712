mod common;

use common::*;
use dmesh::oracle::random_weighted_points;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn orthospheres_are_empty(seed in 0u64..10_000, n in 5usize..400, dim in 2usize..=3, var in prop::sample::select(vec![0.0, 1e-4, 1e-3, 1e-2])) {
        let pts = random_weighted_points(n, dim, var, seed);
        prop_assert!(check_empty_orthosphere(&pts, dim).is_ok(), "{:?}", check_empty_orthosphere(&pts, dim));
    }

    #[test]
    fn weight_shift_keeps_triangulation(seed in 0u64..10_000, n in 5usize..300, dim in 2usize..=3, shift in -2.0f64..2.0) {
        let pts = random_weighted_points(n, dim, 1e-3, seed);
        prop_assert!(check_weight_shift(&pts, dim, shift).is_ok());
    }

    #[test]
    fn diagram_is_dual_to_triangulation(seed in 0u64..10_000, n in 4usize..60, dim in 2usize..=3) {
        let pts = random_weighted_points(n, dim, 1e-3, seed);
        let r = check_duality(&pts, dim);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn clamps_hold_under_any_gradient(seed in 0u64..1000, scale in 1e-3f64..1e3, lr in 1e-4f64..0.5) {
        let r = check_clamps(seed, scale, lr);
        prop_assert!(r.is_ok(), "{:?}", r);
    }
}

#[test]
fn empty_orthosphere_at_one_thousand_points() {
    for dim in [2, 3] {
        let pts = random_weighted_points(1000, dim, 1e-3, 5);
        check_empty_orthosphere(&pts, dim).unwrap();
    }
}

#[test]
fn reruns_are_bit_identical() {
    check_determinism(4).unwrap();
}

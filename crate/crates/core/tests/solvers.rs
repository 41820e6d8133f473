mod common;
mod suites;

use peakunroll::solvers::{hq_penalty, hq_penalty_derivative, HqConfig};
use proptest::prelude::*;

#[test]
fn ista_descends_to_a_fixed_point() {
    suites::ista_suite().unwrap();
}

#[test]
fn pd_is_feasible_and_matches_socp_reference() {
    suites::pd_suite().unwrap();
}

#[test]
fn hq_reaches_stationarity_monotonically() {
    suites::hq_suite().unwrap();
}

proptest! {
    #[test]
    fn penalty_derivative_matches_finite_differences(
        t in prop_oneof![-8.0f64..-0.01, 0.01f64..8.0],
        l1 in 0.0f64..2.0, l2 in 0.0f64..2.0, d1 in 0.05f64..3.0, d2 in 0.05f64..3.0,
    ) {
        let cfg = HqConfig::penalty(l1, l2, d1, d2);
        let h = 1e-6 * t.abs().max(1e-2);
        let fd = (hq_penalty(t + h, &cfg) - hq_penalty(t - h, &cfg)) / (2.0 * h);
        let an = hq_penalty_derivative(t, &cfg);
        prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "fd {} an {}", fd, an);
    }
}

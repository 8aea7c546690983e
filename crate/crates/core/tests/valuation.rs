use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use cmra::valuation::{efficient_allocation, vcg_outcome, MarketEnv, ValuationError, ValuationModel};

fn lots() -> ValuationModel {
    ValuationModel::linear(120.0, 0.75).unwrap()
}

fn dec() -> [ValuationModel; 2] {
    [ValuationModel::quadratic(1.25, 1.0, 0.9).unwrap(), ValuationModel::quadratic(1.05, 1.0, 0.9).unwrap()]
}

fn pow(alpha: f64, theta: f64) -> ValuationModel {
    ValuationModel::power(alpha, 0.75, theta).unwrap()
}

#[test]
fn value_examples() {
    assert_abs_diff_eq!(lots().value(0.5).unwrap(), 60.0, epsilon = 1e-12);
    assert_eq!(dec()[0].value(0.0).unwrap(), 0.0);
    assert_abs_diff_eq!(pow(2.0, 1.0).value(0.75).unwrap(), 1.125, epsilon = 1e-12);
}

#[test]
fn value_rejects_quantities_outside_the_unit_interval() {
    assert!(matches!(lots().value(1.5), Err(ValuationError::Domain(_))));
    assert!(matches!(lots().value(-0.1), Err(ValuationError::Domain(_))));
}

#[test]
fn indirect_surplus_examples() {
    assert_abs_diff_eq!(lots().indirect_surplus(40.0), 60.0, epsilon = 1e-9);
    let m = pow(2.0, 0.7);
    assert_abs_diff_eq!(m.indirect_surplus(0.0), m.utility(0.75), epsilon = 1e-12);
    // u1(x) = p at x = 0.6, so V = U1(0.6) − 0.39 = 0.57 − 0.39.
    assert_abs_diff_eq!(dec()[0].indirect_surplus(0.65), 0.18, epsilon = 1e-12);
}

#[test]
fn truthful_demand_examples() {
    assert_abs_diff_eq!(dec()[0].truthful_demand(0.5), 0.75, epsilon = 1e-12);
    assert_eq!(pow(2.0, 1.0).truthful_demand(1.0), 0.75);
    assert_eq!(lots().truthful_demand(120.0), 0.75);
    assert_eq!(lots().truthful_demand(120.0 + 1e-9), 0.0);
}

#[test]
fn final_price_examples() {
    assert_abs_diff_eq!(pow(2.0, 0.6).final_price(), 0.8, epsilon = 1e-12);
    assert_abs_diff_eq!(lots().final_price(), 80.0, epsilon = 1e-12);
}

#[test]
fn efficient_allocation_examples() {
    let [a, b] = dec();
    let (x1, x2) = efficient_allocation(&MarketEnv::pair(a.clone(), b).unwrap()).unwrap();
    assert_abs_diff_eq!(x1, 0.6, epsilon = 1e-9);
    assert_abs_diff_eq!(x2, 0.4, epsilon = 1e-9);
    assert_eq!(efficient_allocation(&MarketEnv::pair(pow(2.0, 0.8), pow(2.0, 0.5)).unwrap()).unwrap(), (0.75, 0.25));
    assert_eq!(efficient_allocation(&MarketEnv::pair(pow(2.0, 0.5), pow(2.0, 0.8)).unwrap()).unwrap(), (0.25, 0.75));
    let (x1, x2) = efficient_allocation(&MarketEnv::pair(a.clone(), a).unwrap()).unwrap();
    assert_abs_diff_eq!(x1, 0.5, epsilon = 1e-9);
    assert_abs_diff_eq!(x2, 0.5, epsilon = 1e-9);
}

#[test]
fn vcg_examples() {
    let v = vcg_outcome(&MarketEnv::pair(pow(2.0, 0.8), pow(2.0, 0.5)).unwrap()).unwrap();
    assert_eq!(v.allocation, (0.75, 0.25));
    assert_abs_diff_eq!(v.payments.0, 0.5, epsilon = 1e-12);
    assert_eq!(v.payments.1, 0.0);

    let v = vcg_outcome(&MarketEnv::pair(pow(2.0, 0.6), pow(2.0, 0.6)).unwrap()).unwrap();
    let strong = if v.allocation.0 == 0.75 { v.payments.0 } else { v.payments.1 };
    assert_abs_diff_eq!(strong, 0.6, epsilon = 1e-12);

    // Three lots against one: the other bidder loses 90 − 30.
    let v = vcg_outcome(&MarketEnv::pair(lots(), lots()).unwrap()).unwrap();
    assert_abs_diff_eq!(v.payments.0 + v.payments.1, 60.0, epsilon = 1e-9);
}

#[test]
fn final_price_is_theta_over_cap_for_the_power_family() {
    for alpha in [1.0, 1.5, 2.0, 3.0] {
        for theta in [0.1, 0.4, 0.9] {
            assert_abs_diff_eq!(pow(alpha, theta).final_price(), theta / 0.75, epsilon = 1e-12);
            assert!(pow(alpha, theta).is_normalized());
        }
    }
}

proptest! {
    #[test]
    fn indirect_surplus_is_monotone_and_lipschitz(theta in 1.0f64..1.5, p in 0.0f64..2.0, dp in 0.0f64..1.0) {
        let m = ValuationModel::quadratic(theta, 1.0, 0.9).unwrap();
        let (v, w) = (m.indirect_surplus(p), m.indirect_surplus(p + dp));
        prop_assert!(w <= v + 1e-12);
        prop_assert!(v - w <= dp * 0.9 + 1e-12);
    }

    #[test]
    fn power_surplus_is_monotone_and_lipschitz(alpha in 1.0f64..3.0, theta in 0.1f64..1.0, p in 0.0f64..3.0, dp in 0.0f64..1.0) {
        let m = pow(alpha, theta);
        let (v, w) = (m.indirect_surplus(p), m.indirect_surplus(p + dp));
        prop_assert!(w <= v + 1e-12);
        prop_assert!(v - w <= dp * 0.75 + 1e-12);
        prop_assert!(v >= 0.0);
    }

    #[test]
    fn decreasing_demand_is_non_increasing(theta in 1.0f64..1.5, p in 0.0f64..2.0, dp in 0.0f64..1.0) {
        let m = ValuationModel::quadratic(theta, 1.0, 0.9).unwrap();
        prop_assert!(m.truthful_demand(p + dp) <= m.truthful_demand(p));
    }

    #[test]
    fn non_decreasing_demand_is_all_or_nothing(alpha in 1.0f64..3.0, theta in 0.1f64..1.0, p in 0.0f64..3.0) {
        let h = pow(alpha, theta).truthful_demand(p);
        prop_assert!(h == 0.0 || h == 0.75);
    }

    #[test]
    fn final_price_is_below_exit_price(alpha in 1.0f64..3.0, theta in 0.1f64..1.0) {
        let m = pow(alpha, theta);
        prop_assert!(m.final_price() < m.exit_price());
    }

    #[test]
    fn final_price_increases_with_type(alpha in 1.0f64..3.0, theta in 0.1f64..0.9, dt in 0.001f64..0.1) {
        prop_assert!(pow(alpha, theta + dt).final_price() > pow(alpha, theta).final_price());
    }

    #[test]
    fn decreasing_efficient_split_equates_marginals(t1 in 1.0f64..1.5, t2 in 1.0f64..1.5) {
        let env = MarketEnv::pair(
            ValuationModel::quadratic(t1, 1.0, 0.9).unwrap(),
            ValuationModel::quadratic(t2, 1.0, 0.9).unwrap(),
        ).unwrap();
        let (x1, x2) = efficient_allocation(&env).unwrap();
        prop_assert!((x1 + x2 - 1.0).abs() < 1e-9);
        prop_assert!((env.models[0].marginal(x1) - env.models[1].marginal(x2)).abs() < 1e-6);
    }
}

use proptest::prelude::*;

use cmra::bidbook::{BidBook, QuantityGrid};
use cmra::mechanism::{
    revenue_curve, run_clock, run_cmra, solve_closing, write_log, AuctionConfig, Engine, Termination, TieBreak,
};
use cmra::money::Money;
use cmra::strategies::{replay, ProxyStrategy, StrategyTag};
use cmra::valuation::ValuationModel;

fn lots_grid() -> QuantityGrid {
    QuantityGrid::new(4, 0.75).unwrap()
}

fn lots_truthful_books(per_lot: f64) -> (BidBook, BidBook) {
    let s = ProxyStrategy::cmra_truthful(ValuationModel::linear(120.0, 0.75).unwrap(), lots_grid());
    let prices: Vec<f64> = (0..).map(|k| 4.0 * k as f64).take_while(|&p| p <= 4.0 * per_lot).collect();
    (replay(&s, lots_grid(), &prices).unwrap(), replay(&s, lots_grid(), &prices).unwrap())
}

fn lots_config() -> AuctionConfig {
    AuctionConfig::new(lots_grid(), 4.0, 400.0)
}

fn pair(tag: StrategyTag, models: [ValuationModel; 2], cfg: &AuctionConfig) -> (ProxyStrategy, ProxyStrategy) {
    let [a, b] = models;
    (ProxyStrategy::new(tag, a, cfg.grid), ProxyStrategy::new(tag, b, cfg.grid))
}

#[test]
fn lots_no_close_at_clock_15() {
    let (a, b) = lots_truthful_books(15.0);
    let c = solve_closing(&a, &b, TieBreak::default());
    assert_eq!(c.r_star, Some(Money::from_f64(45.0)));
    assert!(c.best_pair.unwrap() < Money::from_f64(45.0));
    assert_eq!(c.allocation, None);
}

#[test]
fn lots_close_at_clock_20() {
    let (a, b) = lots_truthful_books(20.0);
    let c = solve_closing(&a, &b, TieBreak::default());
    assert_eq!(c.r_star, Some(Money::from_f64(60.0)));
    assert_eq!(c.allocation, Some((2, 2)));
}

#[test]
fn headlines_alone_do_not_close() {
    let mut a = BidBook::new(lots_grid());
    let mut b = BidBook::new(lots_grid());
    a.record_round(2.0, 3, &[]).unwrap();
    b.record_round(2.0, 3, &[]).unwrap();
    let c = solve_closing(&a, &b, TieBreak::default());
    assert_eq!(c.r_star, Some(Money::from_f64(1.5)));
    assert_eq!(c.allocation, None);
}

#[test]
fn lots_runs() {
    let cfg = lots_config();
    let m = || ValuationModel::linear(120.0, 0.75).unwrap();

    let (a, b) = pair(StrategyTag::ClockTruthful, [m(), m()], &cfg);
    let o = run_cmra(&a, &b, &cfg).unwrap();
    assert!((o.final_price - 120.0).abs() < 1e-6);
    assert_eq!(o.revenue, Money::from_f64(90.0));
    assert_eq!(o.allocations, [0.75, 0.0]);

    let (a, b) = pair(StrategyTag::CmraTruthful, [m(), m()], &cfg);
    let o = run_cmra(&a, &b, &cfg).unwrap();
    assert_eq!((o.revenue, o.allocations), (Money::from_f64(60.0), [0.5, 0.5]));
    assert_eq!(o.payments, [Money::from_f64(30.0); 2]);

    let (a, b) = pair(StrategyTag::Rdr, [m(), m()], &cfg);
    let o = run_cmra(&a, &b, &cfg).unwrap();
    assert_eq!((o.rounds, o.revenue, o.allocations), (1, Money::ZERO, [0.5, 0.5]));

    let (a, b) = pair(StrategyTag::ClockTruthful, [m(), m()], &cfg);
    let o = run_clock(&a, &b, &cfg).unwrap();
    assert_eq!((o.final_price, o.revenue, o.excess_supply), (120.0, Money::from_f64(90.0), 0.25));
}

fn dec() -> [ValuationModel; 2] {
    [ValuationModel::quadratic(1.25, 1.0, 0.9).unwrap(), ValuationModel::quadratic(1.05, 1.0, 0.9).unwrap()]
}

#[test]
fn decreasing_clock_clears_at_the_efficient_split() {
    let cfg = AuctionConfig::new(QuantityGrid::new(20, 0.9).unwrap(), 1e-3, 5.0);
    let (a, b) = pair(StrategyTag::ClockTruthful, dec(), &cfg);
    for o in [run_clock(&a, &b, &cfg).unwrap(), run_cmra(&a, &b, &cfg).unwrap()] {
        assert!((o.final_price - 0.65).abs() <= 2e-3);
        assert!((o.allocations[0] - 0.6).abs() < 1e-12 && (o.allocations[1] - 0.4).abs() < 1e-12);
    }
}

#[test]
fn decreasing_curve_balances_at_the_close() {
    let cfg = AuctionConfig::new(QuantityGrid::new(20, 0.9).unwrap(), 1e-3, 5.0);
    let (a, b) = pair(StrategyTag::CmraTruthful, dec(), &cfg);
    let o = run_cmra(&a, &b, &cfg).unwrap();
    let mut prices: Vec<f64> = (0..).map(|k| k as f64 * 1e-3).take_while(|&p| p < o.final_price).collect();
    prices.push(o.final_price);
    let b1 = replay(&a, cfg.grid, &prices).unwrap();
    let b2 = replay(&b, cfg.grid, &prices).unwrap();
    let curve = revenue_curve(&b1, &b2);
    let pair_max = curve.iter().filter_map(|p| p.pair).max().unwrap();
    let single = curve[0].single_max.unwrap();
    assert!((pair_max - single).0.abs() <= 1_000, "{pair_max} vs {single}");
}

#[test]
fn power_cmra_truthful_matches_vcg() {
    let cfg = AuctionConfig::new(lots_grid(), 1e-3, 10.0);
    let models = [ValuationModel::power(2.0, 0.75, 0.8).unwrap(), ValuationModel::power(2.0, 0.75, 0.5).unwrap()];
    let (a, b) = pair(StrategyTag::CmraTruthful, models.clone(), &cfg);
    let o = run_cmra(&a, &b, &cfg).unwrap();
    assert_eq!(o.allocations, [0.75, 0.25]);
    assert!((o.payments[0].to_f64() - 0.5).abs() <= 2e-3);
    assert!(o.payments[1].to_f64() <= 2e-3);

    let (a, b) = pair(StrategyTag::ClockTruthful, models, &cfg);
    let o = run_clock(&a, &b, &cfg).unwrap();
    assert!((o.final_price - 0.75).abs() <= 2e-3);
    assert_eq!(o.excess_supply, 0.25);
}

#[test]
fn lots_curve_at_clock_20() {
    let (a, b) = lots_truthful_books(20.0);
    let curve = revenue_curve(&a, &b);
    let peak = curve.iter().filter_map(|p| p.pair).max().unwrap();
    assert_eq!(peak, Money::from_f64(60.0));
    let at: Vec<f64> = curve.iter().filter(|p| p.pair == Some(peak)).map(|p| p.x1).collect();
    // The zero bid on one lot pairs with the other bidder's 60 on three.
    assert_eq!(at, vec![0.25, 0.5, 0.75]);
    let fresh = BidBook::new(lots_grid());
    assert!(revenue_curve(&fresh, &fresh).iter().all(|p| p.pair.is_none() && p.single_max.is_none()));
}

#[test]
fn safety_bound_stops_the_clock() {
    let cfg = AuctionConfig::new(lots_grid(), 0.01, 0.3);
    let models = [ValuationModel::power(2.0, 0.75, 0.8).unwrap(), ValuationModel::power(2.0, 0.75, 0.5).unwrap()];
    let (a, b) = pair(StrategyTag::CmraTruthful, models, &cfg);
    let o = run_cmra(&a, &b, &cfg).unwrap();
    assert_eq!(o.termination, Termination::MaxPriceHit);
    assert!(!o.closed());
}

#[test]
fn round_log_columns() {
    let cfg = lots_config();
    let m = || ValuationModel::linear(120.0, 0.75).unwrap();
    let (a, b) = pair(StrategyTag::CmraTruthful, [m(), m()], &cfg);
    let o = run_cmra(&a, &b, &cfg).unwrap();
    let mut out = Vec::new();
    write_log(&o.log, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "round,clock_price,bidder,kind,quantity,amount,closed_flag,R_star");
    assert!(text.lines().last().unwrap().contains(",true,"));
}

fn types() -> impl Strategy<Value = (bool, f64, f64, usize)> {
    (any::<bool>(), 0.1f64..1.0, 0.1f64..1.0, 0usize..3)
}

fn scenario(dec_regime: bool, t1: f64, t2: f64, alpha: usize) -> ([ValuationModel; 2], AuctionConfig) {
    if dec_regime {
        let models = [
            ValuationModel::quadratic(1.0 + 0.5 * t1, 1.0, 0.9).unwrap(),
            ValuationModel::quadratic(1.0 + 0.5 * t2, 1.0, 0.9).unwrap(),
        ];
        (models, AuctionConfig::new(QuantityGrid::new(10, 0.9).unwrap(), 0.01, 5.0))
    } else {
        let alpha = [1.0, 2.0, 3.0][alpha];
        let models =
            [ValuationModel::power(alpha, 0.75, t1).unwrap(), ValuationModel::power(alpha, 0.75, t2).unwrap()];
        (models, AuctionConfig::new(lots_grid(), 0.01, 10.0))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closing_outcomes_are_feasible_and_pay_as_bid((d, t1, t2, al) in types(), tag in 1usize..3) {
        let tag = [StrategyTag::ClockTruthful, StrategyTag::CmraTruthful, StrategyTag::Constant][tag];
        let (models, cfg) = scenario(d, t1, t2, al);
        let (a, b) = pair(tag, models, &cfg);
        let o = run_cmra(&a, &b, &cfg).unwrap();
        prop_assert!(o.closed());
        let lam = cfg.grid.lambda();
        prop_assert!(o.allocations[0] + o.allocations[1] <= 1.0 + 1e-12);
        prop_assert!(o.allocations.iter().all(|&x| x <= lam + 1e-12));
        for i in 0..2 {
            let limit = Money::from_f64(o.final_price * o.allocations[i]);
            prop_assert!(o.payments[i] <= limit + Money(2));
        }
        prop_assert_eq!(Some(o.revenue), o.r_star);
    }

    #[test]
    fn cmra_truthful_revenue_is_at_most_clock_revenue((d, t1, t2, al) in types()) {
        let (models, cfg) = scenario(d, t1, t2, al);
        let (a, b) = pair(StrategyTag::CmraTruthful, models.clone(), &cfg);
        let cmra = run_cmra(&a, &b, &cfg).unwrap();
        let (a, b) = pair(StrategyTag::ClockTruthful, models, &cfg);
        let clock = run_clock(&a, &b, &cfg).unwrap();
        prop_assert!(cmra.revenue.to_f64() <= clock.revenue.to_f64() + 2.0 * cfg.eps);
    }

    #[test]
    fn truthful_closing_persists_at_higher_prices((d, t1, t2, al) in types()) {
        let (models, mut cfg) = scenario(d, t1, t2, al);
        cfg.refine = false;
        let (a, b) = pair(StrategyTag::CmraTruthful, models, &cfg);
        let mut engine = Engine::new(&a, &b, &cfg);
        let mut state = engine.initial_state();
        let mut closed_at = None;
        for k in 0..2000 {
            let price = cfg.tick_price(k);
            if price > cfg.max_price {
                break;
            }
            let r = engine.step(&mut state, price).unwrap();
            match (closed_at, r.closing.allocation.is_some()) {
                (None, true) => closed_at = Some(k),
                (Some(_), closes) => prop_assert!(closes, "closed at tick {:?}, open at {}", closed_at, k),
                _ => {}
            }
            if closed_at.is_some_and(|c| k >= c + 20) {
                break;
            }
        }
        prop_assert!(closed_at.is_some());
    }
}

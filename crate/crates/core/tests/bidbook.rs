use proptest::prelude::*;

use cmra::bidbook::{BidBook, BidError, QuantityGrid};
use cmra::money::Money;
use cmra::strategies::{replay, ProxyStrategy};
use cmra::valuation::ValuationModel;

fn lots_grid() -> QuantityGrid {
    QuantityGrid::new(4, 0.75).unwrap()
}

fn m(v: f64) -> Money {
    Money::from_f64(v)
}

#[test]
fn lots_additional_bid_at_clock_12() {
    let mut b = BidBook::new(lots_grid());
    b.record_round(48.0, 3, &[(2, m(6.0))]).unwrap();
    assert_eq!(b.bid_at(2), Some(m(6.0)));
    assert_eq!(b.bid_at(3), Some(m(36.0)));
}

#[test]
fn zero_bid_on_the_empty_package() {
    let mut b = BidBook::new(lots_grid());
    b.record_round(10.0, 3, &[(0, Money::ZERO)]).unwrap();
    assert_eq!(b.bid_at(0), Some(Money::ZERO));
}

#[test]
fn over_linear_price_is_rejected_and_leaves_the_book() {
    let mut b = BidBook::new(lots_grid());
    b.record_round(36.0, 3, &[]).unwrap();
    let before = b.levels();
    let err = b.record_round(40.0, 3, &[(2, m(21.0))]).unwrap_err();
    assert!(matches!(err, BidError::OverLinearPrice { index: 2, .. }));
    assert_eq!(b.levels(), before);
    assert_eq!(b.rounds(), 1);
}

#[test]
fn cap_after_a_headline_drop() {
    let g = QuantityGrid::new(20, 0.75).unwrap();
    let mut b = BidBook::new(g);
    b.record_round(30.0, g.index_of(0.75).unwrap(), &[]).unwrap();
    b.record_round(40.0, g.index_of(0.5).unwrap(), &[]).unwrap();
    let k = g.index_of(0.6).unwrap();
    let base = b.bid_at(g.index_of(0.5).unwrap()).unwrap();
    assert_eq!(base, m(20.0));
    let cap = b.activity_cap(k).unwrap();
    assert!((cap - (base + m(4.0))).0.abs() <= 1);
    // Quantities outside the dropped segment stay unbounded.
    assert_eq!(b.activity_cap(g.index_of(0.4).unwrap()), None);
    assert_eq!(b.activity_cap(g.index_of(0.75).unwrap()), None);

    let err = b.record_round(41.0, g.index_of(0.5).unwrap(), &[(k, m(24.5))]).unwrap_err();
    assert!(matches!(err, BidError::ActivityCapViolation { .. }));
    b.record_round(41.0, g.index_of(0.5).unwrap(), &[(k, m(24.0))]).unwrap();
}

#[test]
fn constant_headline_leaves_every_quantity_unbounded() {
    let g = lots_grid();
    let mut b = BidBook::new(g);
    for p in [0.0, 1.0, 2.0] {
        b.record_round(p, 3, &[]).unwrap();
    }
    assert!((0..=g.n()).all(|k| b.activity_cap(k).is_none()));
}

#[test]
fn headline_bid_is_priced_linearly() {
    let mut b = BidBook::new(lots_grid());
    b.record_round(0.4, 3, &[]).unwrap();
    assert_eq!(b.bid_at(3), Some(m(0.3)));
}

#[test]
fn fresh_book_has_no_bids() {
    let b = BidBook::new(lots_grid());
    assert!((0..=4).all(|k| b.bid_at(k).is_none()));
}

#[test]
fn cmra_truthful_lots_book_at_clock_20() {
    let s = ProxyStrategy::cmra_truthful(ValuationModel::linear(120.0, 0.75).unwrap(), lots_grid());
    let prices: Vec<f64> = (0..=20).map(|k| 4.0 * k as f64).collect();
    let b = replay(&s, lots_grid(), &prices).unwrap();
    assert_eq!(b.bid_at(2), Some(m(30.0)));
    assert_eq!(b.bid_at(1), Some(Money::ZERO));
    assert_eq!(b.bid_at(3), Some(m(60.0)));
}

#[test]
fn rule_violations() {
    let mut b = BidBook::new(lots_grid());
    b.record_round(1.0, 2, &[]).unwrap();
    assert!(matches!(b.record_round(1.0, 2, &[]), Err(BidError::NonIncreasingPrice { .. })));
    assert!(matches!(b.record_round(2.0, 3, &[]), Err(BidError::NonMonotoneHeadline { .. })));
    assert!(matches!(b.record_round(2.0, 2, &[(4, Money::ZERO)]), Err(BidError::CapExceeded { .. })));
    assert!(matches!(b.record_round(2.0, 2, &[(1, Money(-1))]), Err(BidError::NegativeAmount { .. })));
    assert!(matches!(lots_grid().index_of(0.3), Err(BidError::OffGrid(_))));
    let mut fresh = BidBook::new(lots_grid());
    assert!(matches!(fresh.record_round(1.0, 4, &[]), Err(BidError::CapExceeded { .. })));
}

#[derive(Clone, Debug)]
struct Round {
    price_step: u32,
    drop: u32,
    bids: Vec<(usize, u32)>,
}

fn rounds() -> impl Strategy<Value = Vec<Round>> {
    prop::collection::vec(
        (1u32..400, 0u32..3, prop::collection::vec((0usize..=15, 0u32..=1000), 0..4))
            .prop_map(|(price_step, drop, bids)| Round { price_step, drop, bids }),
        1..10,
    )
}

/// Applies `rounds` to a fresh book on the λ = 0.75, N = 20 grid, scaling
/// each bid into its legal range; returns the book and the levels after each
/// round.
fn play(rounds: &[Round]) -> (BidBook, Vec<Vec<Option<Money>>>) {
    let g = QuantityGrid::new(20, 0.75).unwrap();
    let mut b = BidBook::new(g);
    let mut price = 0.0;
    let mut h = g.cap_index();
    let mut history = Vec::new();
    for r in rounds {
        price += r.price_step as f64 / 1000.0;
        h = h.saturating_sub(r.drop as usize);
        let mut bids = Vec::new();
        for &(k, frac) in &r.bids {
            let limit = b.round_cap(price, h, k).map_or(g.linear(price, k), |c| c.min(g.linear(price, k)));
            bids.push((k, Money((limit.0.max(0) as i128 * frac as i128 / 1000) as i64)));
        }
        b.record_round(price, h, &bids).unwrap();
        history.push(b.levels());
    }
    (b, history)
}

proptest! {
    #[test]
    fn bids_only_accumulate(rs in rounds()) {
        let (_, history) = play(&rs);
        for w in history.windows(2) {
            prop_assert!(w[1].iter().zip(&w[0]).all(|(a, b)| a >= b));
        }
    }

    #[test]
    fn replay_is_deterministic(rs in rounds()) {
        let (a, _) = play(&rs);
        let (b, _) = play(&rs);
        prop_assert_eq!(a.levels(), b.levels());
    }

    #[test]
    fn recorded_bids_respect_linear_prices(rs in rounds()) {
        let (b, _) = play(&rs);
        let g = *b.grid();
        for bid in b.additional_bids() {
            prop_assert!(bid.amount <= g.linear(bid.price, bid.index));
        }
    }

    #[test]
    fn headline_is_priced_at_the_clock(rs in rounds()) {
        let (b, _) = play(&rs);
        let g = *b.grid();
        let last = *b.headline_history().last().unwrap();
        let linear = g.linear(last.price, last.index);
        let at = b.bid_at(last.index).unwrap();
        prop_assert!(at >= linear);
        let earlier = b
            .headline_history()
            .iter()
            .filter(|r| r.round < last.round && r.index == last.index)
            .map(|r| g.linear(r.price, r.index))
            .chain(b.additional_bids().iter().filter(|a| a.index == last.index).map(|a| a.amount))
            .max();
        if earlier.map_or(true, |e| e <= linear) {
            prop_assert_eq!(at, linear);
        }
    }
}

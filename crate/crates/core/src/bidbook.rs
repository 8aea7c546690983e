//! Quantity grid and per-bidder bid functions.
//!
//! A [`BidBook`] holds `B(x; p)`, the running maximum over every headline
//! bid (priced linearly at the clock) and every additional bid a bidder has
//! made at quantity `x`. `None` plays the role of "no bid" (−∞).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BidError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("quantity {0} is not a grid point")]
    OffGrid(f64),
    #[error("clock price {price} does not exceed the previous round's {previous}")]
    NonIncreasingPrice { previous: f64, price: f64 },
    #[error("headline demand rose from index {previous} to {requested}")]
    NonMonotoneHeadline { previous: usize, requested: usize },
    #[error("quantity index {index} exceeds the cap index {cap}")]
    CapExceeded { index: usize, cap: usize },
    #[error("negative bid {amount} at index {index}")]
    NegativeAmount { index: usize, amount: Money },
    #[error("bid {amount} at index {index} exceeds the linear price {limit}")]
    OverLinearPrice { index: usize, amount: Money, limit: Money },
    #[error("bid {amount} at index {index} exceeds the activity cap {cap}")]
    ActivityCapViolation { index: usize, amount: Money, cap: Money },
}

/// Grid `x_k = k/N`, `k = 0..=N`, on which λ, `1−λ` and `1/2` are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantityGrid {
    n: usize,
    cap: usize,
}

/// Largest denominator tried when reading λ as a fraction.
const MAX_DENOMINATOR: usize = 1_000_000;

impl QuantityGrid {
    /// Smallest admissible resolution that is at least `requested` (and at
    /// least 4) and puts λ, `1−λ` and `1/2` on the grid.
    pub fn new(requested: usize, lambda: f64) -> Result<Self, BidError> {
        if !(lambda > 0.5 && lambda < 1.0) {
            return Err(BidError::Grid(format!("cap {lambda} outside (1/2, 1)")));
        }
        let d = (1..=MAX_DENOMINATOR)
            .find(|&d| {
                let k = (lambda * d as f64).round();
                (lambda - k / d as f64).abs() < 1e-12
            })
            .ok_or_else(|| BidError::Grid(format!("cap {lambda} is not a short fraction")))?;
        let base = if d % 2 == 0 { d } else { 2 * d };
        let want = requested.max(4);
        let n = base * want.div_ceil(base);
        let cap = (lambda * n as f64).round() as usize;
        Ok(QuantityGrid { n, cap })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cap_index(&self) -> usize {
        self.cap
    }

    pub fn half_index(&self) -> usize {
        self.n / 2
    }

    /// Index of `1 − x_k`.
    pub fn complement(&self, k: usize) -> usize {
        self.n - k
    }

    pub fn x(&self, k: usize) -> f64 {
        k as f64 / self.n as f64
    }

    pub fn lambda(&self) -> f64 {
        self.x(self.cap)
    }

    /// Exact grid index of `x`; off-grid quantities are rejected.
    pub fn index_of(&self, x: f64) -> Result<usize, BidError> {
        let k = (x * self.n as f64).round();
        if k < 0.0 || k > self.n as f64 || (x * self.n as f64 - k).abs() > 1e-9 {
            return Err(BidError::OffGrid(x));
        }
        Ok(k as usize)
    }

    /// Smallest grid index whose quantity is at least `x` (up to float noise).
    pub fn ceil_index(&self, x: f64) -> usize {
        let k = (x * self.n as f64 - 1e-7).ceil();
        k.max(0.0) as usize
    }

    /// Linear price `p·x_k` in money.
    pub fn linear(&self, price: f64, k: usize) -> Money {
        Money::from_f64(price * self.x(k))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BidKind {
    Headline,
    Additional,
}

impl BidKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BidKind::Headline => "headline",
            BidKind::Additional => "additional",
        }
    }
}

/// The bid currently realising `B(x)` at one grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BidEntry {
    pub amount: Money,
    pub kind: BidKind,
    pub price: f64,
    pub round: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AdditionalBid {
    pub index: usize,
    pub amount: Money,
    pub price: f64,
    pub round: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeadlineRecord {
    pub round: usize,
    pub price: f64,
    pub index: usize,
}

/// Headline drop from `high` to `low` at `price`: quantities strictly between
/// them are capped at `B(low) + price·(x − x_low)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropSegment {
    pub low: usize,
    pub high: usize,
    pub price: f64,
}

/// Rounding of linear amounts may disagree with the strategies' own rounding
/// by a unit; the activity check allows for it.
pub const CAP_SLACK: Money = Money(2);

#[derive(Clone, Debug)]
pub struct BidBook {
    grid: QuantityGrid,
    best: Vec<Option<BidEntry>>,
    drops: Vec<DropSegment>,
    current: Option<HeadlineRecord>,
    rounds: usize,
    keep_history: bool,
    headlines: Vec<HeadlineRecord>,
    additional: Vec<AdditionalBid>,
}

impl BidBook {
    pub fn new(grid: QuantityGrid) -> Self {
        Self::with_history(grid, true)
    }

    /// A book that keeps only what the rules need; the headline and
    /// additional-bid histories are not stored.
    pub fn with_history(grid: QuantityGrid, keep_history: bool) -> Self {
        BidBook {
            grid,
            best: vec![None; grid.n() + 1],
            drops: Vec::new(),
            current: None,
            rounds: 0,
            keep_history,
            headlines: Vec::new(),
            additional: Vec::new(),
        }
    }

    pub fn grid(&self) -> &QuantityGrid {
        &self.grid
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn last_price(&self) -> Option<f64> {
        self.current.map(|h| h.price)
    }

    pub fn headline(&self) -> Option<usize> {
        self.current.map(|h| h.index)
    }

    pub fn headline_history(&self) -> &[HeadlineRecord] {
        &self.headlines
    }

    pub fn additional_bids(&self) -> &[AdditionalBid] {
        &self.additional
    }

    pub fn drops(&self) -> &[DropSegment] {
        &self.drops
    }

    /// `B(x_k)`; `None` if never bid.
    pub fn bid_at(&self, k: usize) -> Option<Money> {
        self.best.get(k).copied().flatten().map(|e| e.amount)
    }

    pub fn entry(&self, k: usize) -> Option<&BidEntry> {
        self.best.get(k).and_then(|e| e.as_ref())
    }

    /// `B` over the whole grid.
    pub fn levels(&self) -> Vec<Option<Money>> {
        self.best.iter().map(|e| e.map(|e| e.amount)).collect()
    }

    pub fn fill_levels(&self, out: &mut [Option<Money>]) {
        for (o, e) in out.iter_mut().zip(&self.best) {
            *o = e.map(|e| e.amount);
        }
    }

    /// Relative cap on a bid at `x_k`, `None` when unbounded.
    pub fn activity_cap(&self, k: usize) -> Option<Money> {
        self.cap_with(k, None)
    }

    /// Cap a bid at `x_k` would face in a round at `price` whose headline
    /// demand is `headline`, before the round is applied.
    pub fn round_cap(&self, price: f64, headline: usize, k: usize) -> Option<Money> {
        let pending = match self.current {
            Some(prev) if headline < prev.index => Some((
                DropSegment { low: headline, high: prev.index, price },
                self.grid.linear(price, headline),
            )),
            _ => None,
        };
        self.cap_with(k, pending)
    }

    fn cap_with(&self, k: usize, pending: Option<(DropSegment, Money)>) -> Option<Money> {
        let seg = pending
            .map(|(s, _)| s)
            .into_iter()
            .chain(self.drops.iter().copied())
            .find(|s| s.low < k && k < s.high)?;
        let mut base = self.bid_at(seg.low);
        if let Some((s, bid)) = pending {
            if s.low == seg.low {
                base = base.max(Some(bid));
            }
        }
        let base = base.unwrap_or(Money::ZERO);
        Some(base + Money::from_f64(seg.price * (self.grid.x(k) - self.grid.x(seg.low))))
    }

    /// Validates and applies one round: a headline demand at grid index
    /// `headline` and additional bids `(index, amount)`. On error the book is
    /// left unchanged.
    pub fn record_round(
        &mut self,
        price: f64,
        headline: usize,
        bids: &[(usize, Money)],
    ) -> Result<(), BidError> {
        let g = self.grid;
        if let Some(prev) = self.current {
            if !(price > prev.price) {
                return Err(BidError::NonIncreasingPrice { previous: prev.price, price });
            }
            if headline > prev.index {
                return Err(BidError::NonMonotoneHeadline { previous: prev.index, requested: headline });
            }
        }
        if headline > g.cap_index() {
            return Err(BidError::CapExceeded { index: headline, cap: g.cap_index() });
        }
        let headline_bid = g.linear(price, headline);
        let pending = match self.current {
            Some(prev) if headline < prev.index => Some((
                DropSegment { low: headline, high: prev.index, price },
                headline_bid,
            )),
            _ => None,
        };
        for &(k, amount) in bids {
            if k > g.cap_index() {
                return Err(BidError::CapExceeded { index: k, cap: g.cap_index() });
            }
            if amount < Money::ZERO {
                return Err(BidError::NegativeAmount { index: k, amount });
            }
            let limit = g.linear(price, k);
            if amount > limit {
                return Err(BidError::OverLinearPrice { index: k, amount, limit });
            }
            if let Some(cap) = self.cap_with(k, pending) {
                if amount > cap + CAP_SLACK {
                    return Err(BidError::ActivityCapViolation { index: k, amount, cap });
                }
            }
        }

        let round = self.rounds;
        if let Some((seg, _)) = pending {
            self.drops.push(seg);
        }
        let record = HeadlineRecord { round, price, index: headline };
        self.current = Some(record);
        self.raise(headline, BidEntry { amount: headline_bid, kind: BidKind::Headline, price, round });
        for &(k, amount) in bids {
            self.raise(k, BidEntry { amount, kind: BidKind::Additional, price, round });
        }
        if self.keep_history {
            self.headlines.push(record);
            self.additional.extend(bids.iter().map(|&(index, amount)| AdditionalBid {
                index,
                amount,
                price,
                round,
            }));
        }
        self.rounds += 1;
        Ok(())
    }

    fn raise(&mut self, k: usize, entry: BidEntry) {
        let slot = &mut self.best[k];
        if slot.map_or(true, |e| entry.amount > e.amount) {
            *slot = Some(entry);
        }
    }

    /// Raises `B(x_k)` to `amount` without validation. Used to replay a bid
    /// that was validated against an earlier state of the same book.
    pub(crate) fn absorb(&mut self, k: usize, amount: Money, price: f64, round: usize) {
        self.raise(k, BidEntry { amount, kind: BidKind::Additional, price, round });
        if self.keep_history {
            self.additional.push(AdditionalBid { index: k, amount, price, round });
        }
    }

    /// Round-log rows for this book, in submission order.
    pub fn log_rows(&self, bidder: usize) -> Vec<BookRow> {
        let mut rows = Vec::with_capacity(self.headlines.len() + self.additional.len());
        let mut adds = self.additional.iter().peekable();
        for h in &self.headlines {
            rows.push(BookRow {
                round: h.round,
                clock_price: h.price,
                bidder,
                kind: BidKind::Headline.as_str(),
                quantity: self.grid.x(h.index),
                amount: self.grid.linear(h.price, h.index),
            });
            while let Some(a) = adds.next_if(|a| a.round == h.round) {
                rows.push(BookRow {
                    round: a.round,
                    clock_price: a.price,
                    bidder,
                    kind: BidKind::Additional.as_str(),
                    quantity: self.grid.x(a.index),
                    amount: a.amount,
                });
            }
        }
        rows
    }
}

/// One CSV row of a bid book's history.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BookRow {
    pub round: usize,
    pub clock_price: f64,
    pub bidder: usize,
    pub kind: &'static str,
    pub quantity: f64,
    pub amount: Money,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lots_grid() -> QuantityGrid {
        QuantityGrid::new(4, 0.75).unwrap()
    }

    #[test]
    fn grid_contains_cap_points() {
        let g = QuantityGrid::new(10, 0.9).unwrap();
        assert_eq!((g.n(), g.cap_index()), (10, 9));
        let g = QuantityGrid::new(5, 0.75).unwrap();
        assert_eq!((g.n(), g.cap_index(), g.half_index()), (8, 6, 4));
        let g = QuantityGrid::new(4, 0.57).unwrap();
        assert_eq!(g.n(), 100);
        assert_eq!(lots_grid().n(), 4);
        assert!(g.index_of(0.575).is_err());
        assert_eq!(g.index_of(0.43).unwrap(), 43);
        assert!(QuantityGrid::new(4, 0.4).is_err());
    }

    #[test]
    fn fresh_book_has_no_bids() {
        let b = BidBook::new(lots_grid());
        assert!((0..=4).all(|k| b.bid_at(k).is_none()));
    }

    #[test]
    fn lots_round_at_clock_12() {
        // Per-share price 48 is 12 per lot.
        let mut b = BidBook::new(lots_grid());
        b.record_round(48.0, 3, &[(2, Money::from_f64(6.0))]).unwrap();
        assert_eq!(b.bid_at(2), Some(Money::from_f64(6.0)));
        assert_eq!(b.bid_at(3), Some(Money::from_f64(36.0)));
        b.record_round(50.0, 3, &[(0, Money::ZERO)]).unwrap();
        assert_eq!(b.bid_at(0), Some(Money::ZERO));
    }

    #[test]
    fn over_linear_price_rejected() {
        let mut b = BidBook::new(lots_grid());
        let err = b.record_round(40.0, 3, &[(2, Money::from_f64(21.0))]).unwrap_err();
        assert!(matches!(err, BidError::OverLinearPrice { .. }));
        assert!(b.bid_at(3).is_none(), "failed round leaves the book unchanged");
    }

    #[test]
    fn headline_rules() {
        let mut b = BidBook::new(lots_grid());
        b.record_round(1.0, 2, &[]).unwrap();
        assert!(matches!(b.record_round(2.0, 3, &[]), Err(BidError::CapExceeded { .. }) | Err(BidError::NonMonotoneHeadline { .. })));
        assert!(matches!(b.record_round(1.0, 2, &[]), Err(BidError::NonIncreasingPrice { .. })));
        let mut b = BidBook::new(lots_grid());
        assert!(matches!(b.record_round(1.0, 4, &[]), Err(BidError::CapExceeded { .. })));
        let mut b = BidBook::new(QuantityGrid::new(8, 0.75).unwrap());
        b.record_round(1.0, 4, &[]).unwrap();
        assert!(matches!(b.record_round(2.0, 5, &[]), Err(BidError::NonMonotoneHeadline { .. })));
    }

    #[test]
    fn headline_bid_is_linear() {
        let mut b = BidBook::new(lots_grid());
        b.record_round(0.4, 3, &[]).unwrap();
        assert_eq!(b.bid_at(3), Some(Money::from_f64(0.3)));
    }

    #[test]
    fn activity_cap_after_drop() {
        let g = QuantityGrid::new(20, 0.75).unwrap();
        let mut b = BidBook::new(g);
        b.record_round(30.0, 15, &[]).unwrap();
        assert_eq!(b.activity_cap(12), None);
        b.record_round(40.0, 10, &[]).unwrap();
        let expected = b.bid_at(10).unwrap() + Money::from_f64(40.0 * 0.1);
        assert_eq!(b.activity_cap(12), Some(expected));
        assert_eq!(b.activity_cap(8), None);
        let too_high = expected + Money::from_f64(0.01);
        assert!(matches!(
            b.record_round(41.0, 10, &[(12, too_high)]),
            Err(BidError::ActivityCapViolation { .. })
        ));
        b.record_round(41.0, 10, &[(12, expected)]).unwrap();
    }

    #[test]
    fn log_rows_interleave() {
        let mut b = BidBook::new(lots_grid());
        b.record_round(48.0, 3, &[(2, Money::from_f64(6.0))]).unwrap();
        b.record_round(52.0, 3, &[]).unwrap();
        let rows = b.log_rows(1);
        let kinds: Vec<_> = rows.iter().map(|r| r.kind).collect();
        assert_eq!(kinds, ["headline", "additional", "headline"]);
    }
}

//! The four proxy strategies as price-indexed emitters of headline demand and
//! additional bids.
//!
//! Emissions are pure functions of the [`RoundContext`], so the mechanism can
//! re-query a proxy at bisection prices.

use serde::{Deserialize, Serialize};

use crate::bidbook::{BidBook, BidError, QuantityGrid};
use crate::money::Money;
use crate::valuation::{Regime, ValuationModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyTag {
    /// Truthful headline demand, no additional bids.
    ClockTruthful,
    /// Truthful headline demand plus `A(x; p) = U(x) − V(p)` on every
    /// quantity where that is non-negative.
    CmraTruthful,
    /// Headline λ until `U(λ)/λ`, one zero bid on `1−λ` at `p^f`.
    Constant,
    /// The constant strategy plus a zero bid on `1/2` in the first round.
    Rdr,
}

impl StrategyTag {
    pub const ALL: [StrategyTag; 4] =
        [StrategyTag::ClockTruthful, StrategyTag::CmraTruthful, StrategyTag::Constant, StrategyTag::Rdr];

    pub fn label(self) -> &'static str {
        match self {
            StrategyTag::ClockTruthful => "clock-truthful",
            StrategyTag::CmraTruthful => "cmra-truthful",
            StrategyTag::Constant => "constant",
            StrategyTag::Rdr => "rdr",
        }
    }
}

/// What a proxy sees when asked for its bids.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundContext {
    /// Zero-based index of the round being played.
    pub round: usize,
    pub price: f64,
    /// Clock price of the last committed round.
    pub prev_price: Option<f64>,
}

impl RoundContext {
    /// Whether this round is the first one at or above `threshold`.
    pub fn crosses(&self, threshold: f64) -> bool {
        self.price >= threshold && self.prev_price.map_or(true, |p| p < threshold)
    }
}

/// A committed bidding plan.
pub trait Proxy: Send + Sync {
    /// Headline demand as a grid index.
    fn headline(&self, ctx: &RoundContext) -> usize;
    /// Appends this round's additional bids to `out`.
    fn additional(&self, ctx: &RoundContext, out: &mut Vec<(usize, Money)>);
}

#[derive(Clone, Debug)]
pub struct ProxyStrategy {
    tag: StrategyTag,
    model: ValuationModel,
    grid: QuantityGrid,
    values: Vec<f64>,
    final_price: f64,
}

impl ProxyStrategy {
    pub fn new(tag: StrategyTag, model: ValuationModel, grid: QuantityGrid) -> Self {
        let values = (0..=grid.cap_index()).map(|k| model.utility(grid.x(k))).collect();
        let final_price = model.final_price();
        ProxyStrategy { tag, model, grid, values, final_price }
    }

    pub fn clock_truthful(model: ValuationModel, grid: QuantityGrid) -> Self {
        Self::new(StrategyTag::ClockTruthful, model, grid)
    }

    pub fn cmra_truthful(model: ValuationModel, grid: QuantityGrid) -> Self {
        Self::new(StrategyTag::CmraTruthful, model, grid)
    }

    pub fn constant(model: ValuationModel, grid: QuantityGrid) -> Self {
        Self::new(StrategyTag::Constant, model, grid)
    }

    pub fn rdr(model: ValuationModel, grid: QuantityGrid) -> Self {
        Self::new(StrategyTag::Rdr, model, grid)
    }

    pub fn tag(&self) -> StrategyTag {
        self.tag
    }

    pub fn model(&self) -> &ValuationModel {
        &self.model
    }

    pub fn grid(&self) -> &QuantityGrid {
        &self.grid
    }

    /// Truthful demand on the grid: the smallest grid quantity at or above
    /// the continuum demand. Every grid quantity above it has marginal value
    /// below the clock, which keeps Eq.-style additional bids within the
    /// activity cap, and the market clears exactly when the continuum split is
    /// on the grid.
    pub fn grid_demand(&self, price: f64) -> usize {
        let cap = self.grid.cap_index();
        match self.model.regime {
            Regime::NonDecreasing => {
                if self.stays_in(price) {
                    cap
                } else {
                    0
                }
            }
            Regime::Decreasing => self.grid.ceil_index(self.model.truthful_demand(price)).min(cap),
        }
    }

    fn stays_in(&self, price: f64) -> bool {
        self.values[self.grid.cap_index()] - price * self.grid.lambda() >= 0.0
    }
}

impl Proxy for ProxyStrategy {
    fn headline(&self, ctx: &RoundContext) -> usize {
        match self.tag {
            StrategyTag::ClockTruthful | StrategyTag::CmraTruthful => self.grid_demand(ctx.price),
            StrategyTag::Constant | StrategyTag::Rdr => {
                if self.stays_in(ctx.price) {
                    self.grid.cap_index()
                } else {
                    0
                }
            }
        }
    }

    fn additional(&self, ctx: &RoundContext, out: &mut Vec<(usize, Money)>) {
        let g = &self.grid;
        match self.tag {
            StrategyTag::ClockTruthful => {}
            StrategyTag::CmraTruthful => {
                let v = self.model.indirect_surplus(ctx.price);
                for (k, u) in self.values.iter().enumerate() {
                    let a = u - v;
                    if a >= -1e-12 {
                        out.push((k, Money::from_f64(a.max(0.0)).min(g.linear(ctx.price, k))));
                    }
                }
            }
            StrategyTag::Constant | StrategyTag::Rdr => {
                if self.tag == StrategyTag::Rdr && ctx.round == 0 {
                    out.push((g.half_index(), Money::ZERO));
                }
                if ctx.crosses(self.final_price) {
                    out.push((g.complement(g.cap_index()), Money::ZERO));
                }
            }
        }
    }
}

/// Plays `proxy` alone over `prices` and returns its book.
pub fn replay<P: Proxy + ?Sized>(
    proxy: &P,
    grid: QuantityGrid,
    prices: &[f64],
) -> Result<BidBook, BidError> {
    let mut book = BidBook::new(grid);
    let mut buf = Vec::new();
    let mut prev = None;
    for (round, &price) in prices.iter().enumerate() {
        let ctx = RoundContext { round, price, prev_price: prev };
        buf.clear();
        proxy.additional(&ctx, &mut buf);
        book.record_round(price, proxy.headline(&ctx), &buf)?;
        prev = Some(price);
    }
    Ok(book)
}

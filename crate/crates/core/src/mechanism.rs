//! The CMRA clock loop, its revenue-maximising closing rule, and the plain
//! clock auction used as a benchmark.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bidbook::{BidBook, BidError, BidKind, QuantityGrid};
use crate::money::Money;
use crate::par::{self, Exec};
use crate::strategies::{Proxy, RoundContext};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid auction config: {0}")]
    Config(String),
    #[error("bidder {bidder} submitted an illegal round: {source}")]
    Bid {
        bidder: usize,
        #[source]
        source: BidError,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// How to pick among several revenue-maximising pairs. Both rules first
/// maximise the smaller of the two quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Then prefer the larger quantity for bidder 1.
    #[default]
    MaxMinBidder1Descending,
    /// Then prefer the smaller quantity for bidder 1.
    MaxMinBidder1Ascending,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionConfig {
    /// Clock increment per unit share.
    pub eps: f64,
    #[serde(default)]
    pub start_price: f64,
    /// Safety bound on the clock.
    pub max_price: f64,
    pub grid: QuantityGrid,
    /// Bisect between the last non-closing and the first closing tick.
    #[serde(default = "default_true")]
    pub refine: bool,
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// Keep the per-submission round log.
    #[serde(default = "default_true")]
    pub record_log: bool,
    #[serde(default)]
    pub exec: Exec,
}

fn default_true() -> bool {
    true
}

fn default_refine_tol() -> f64 {
    1e-7
}

impl AuctionConfig {
    pub fn new(grid: QuantityGrid, eps: f64, max_price: f64) -> Self {
        AuctionConfig {
            eps,
            start_price: 0.0,
            max_price,
            grid,
            refine: true,
            refine_tol: default_refine_tol(),
            tie_break: TieBreak::default(),
            record_log: true,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(EngineError::Config(format!("increment {} must be positive", self.eps)));
        }
        if !(self.max_price > self.start_price) {
            return Err(EngineError::Config("max price must exceed the start price".into()));
        }
        if self.refine && !(self.refine_tol > 0.0) {
            return Err(EngineError::Config("refinement tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Clock price of tick `k`.
    pub fn tick_price(&self, k: usize) -> f64 {
        self.start_price + k as f64 * self.eps
    }

    fn beyond_max(&self, price: f64) -> bool {
        price > self.max_price * (1.0 + 1e-12)
    }
}

/// Result of the closing rule at one clock price.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Closing {
    /// Maximum revenue over feasible pairs and single acceptances.
    pub r_star: Option<Money>,
    pub best_pair: Option<Money>,
    pub best_single: Option<Money>,
    /// Grid indices `(k1, k2)` when a pair attains `R*`.
    pub allocation: Option<(usize, usize)>,
}

/// Rows of the pair scan above this size are split across workers.
const PAR_MIN_N: usize = 512;
const PAR_CHUNK: usize = 64;

/// Closing rule on two bid functions over a grid of resolution `n`.
pub fn solve_closing_levels(
    l1: &[Option<Money>],
    l2: &[Option<Money>],
    n: usize,
    tie: TieBreak,
    exec: Exec,
) -> Closing {
    let best_single = l1.iter().chain(l2).copied().max().flatten();
    let mut pref2 = Vec::with_capacity(n + 1);
    let mut run = None;
    for j in 0..=n {
        run = run.max(l2.get(j).copied().flatten());
        pref2.push(run);
    }
    let row = |i: usize| -> Option<Money> {
        match (l1.get(i).copied().flatten(), pref2[n - i]) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        }
    };
    let best_pair = if exec.is_parallel() && n >= PAR_MIN_N {
        let chunks = (n + 1).div_ceil(PAR_CHUNK);
        par::map_range(exec, chunks, |c| {
            (c * PAR_CHUNK..((c + 1) * PAR_CHUNK).min(n + 1)).map(row).max().flatten()
        })
        .into_iter()
        .max()
        .flatten()
    } else {
        (0..=n).map(row).max().flatten()
    };
    let r_star = best_pair.max(best_single);
    let allocation = match best_pair {
        Some(pair) if Some(pair) == r_star => {
            let mut chosen: Option<(usize, usize)> = None;
            for i in 0..=n {
                if row(i) != Some(pair) {
                    continue;
                }
                let need = pair - l1[i].expect("row has a bid");
                for j in 0..=(n - i) {
                    if l2.get(j).copied().flatten() == Some(need) {
                        let cand = (i, j);
                        if chosen.map_or(true, |c| prefer(cand, c, tie)) {
                            chosen = Some(cand);
                        }
                    }
                }
            }
            chosen
        }
        _ => None,
    };
    Closing { r_star, best_pair, best_single, allocation }
}

fn prefer(a: (usize, usize), b: (usize, usize), tie: TieBreak) -> bool {
    let (ma, mb) = (a.0.min(a.1), b.0.min(b.1));
    if ma != mb {
        return ma > mb;
    }
    match tie {
        TieBreak::MaxMinBidder1Descending => a.0 > b.0,
        TieBreak::MaxMinBidder1Ascending => a.0 < b.0,
    }
}

/// Closing rule on two books.
pub fn solve_closing(b1: &BidBook, b2: &BidBook, tie: TieBreak) -> Closing {
    solve_closing_levels(&b1.levels(), &b2.levels(), b1.grid().n(), tie, Exec::Sequential)
}

/// One point of a revenue curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x1: f64,
    /// `B1(x1) + B2(1 − x1)`, `None` if either side has no bid.
    pub pair: Option<Money>,
    pub single_max: Option<Money>,
}

pub fn revenue_curve(b1: &BidBook, b2: &BidBook) -> Vec<CurvePoint> {
    let g = *b1.grid();
    let single_max = (0..=g.n()).flat_map(|k| [b1.bid_at(k), b2.bid_at(k)]).max().flatten();
    (0..=g.n())
        .map(|k| CurvePoint {
            x1: g.x(k),
            pair: match (b1.bid_at(k), b2.bid_at(g.complement(k))) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            },
            single_max,
        })
        .collect()
}

/// One submission in the round log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub round: usize,
    pub clock_price: f64,
    pub bidder: usize,
    pub kind: &'static str,
    pub quantity: f64,
    pub amount: Money,
    pub closed_flag: bool,
    #[serde(rename = "R_star")]
    pub r_star: Option<Money>,
}

pub fn write_log<W: Write>(rows: &[LogRow], out: W) -> Result<(), EngineError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Closed,
    MaxPriceHit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuctionOutcome {
    pub final_price: f64,
    pub allocations: [f64; 2],
    pub payments: [Money; 2],
    pub kinds: [Option<BidKind>; 2],
    pub revenue: Money,
    pub termination: Termination,
    /// Unallocated share of the good.
    pub excess_supply: f64,
    /// Grid indices of the allocation.
    #[serde(skip)]
    pub indices: Option<(usize, usize)>,
    #[serde(skip)]
    pub r_star: Option<Money>,
    #[serde(skip)]
    pub rounds: usize,
    #[serde(skip)]
    pub log: Vec<LogRow>,
}

impl AuctionOutcome {
    fn unclosed(price: f64, rounds: usize, log: Vec<LogRow>) -> Self {
        AuctionOutcome {
            final_price: price,
            allocations: [0.0, 0.0],
            payments: [Money::ZERO; 2],
            kinds: [None, None],
            revenue: Money::ZERO,
            termination: Termination::MaxPriceHit,
            excess_supply: 1.0,
            indices: None,
            r_star: None,
            rounds,
            log,
        }
    }

    pub fn closed(&self) -> bool {
        self.termination == Termination::Closed
    }

    /// `U_i(x_i) − payment_i` for bidder `i ∈ {0, 1}`.
    pub fn surplus(&self, i: usize, model: &crate::valuation::ValuationModel) -> f64 {
        model.utility(self.allocations[i]) - self.payments[i].to_f64()
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("outcome serialises")
    }
}

/// Books and counters of a run in progress.
#[derive(Clone, Debug)]
pub struct EngineState {
    pub books: [BidBook; 2],
    pub round: usize,
    pub last_price: Option<f64>,
    /// Index of the next clock tick.
    pub next_tick: usize,
}

/// Runs rounds of the CMRA for a pair of proxies.
pub struct Engine<'a> {
    proxies: [&'a dyn Proxy; 2],
    cfg: &'a AuctionConfig,
    buf: Vec<(usize, Money)>,
}

pub struct RoundResult {
    pub closing: Closing,
    pub rows: Vec<LogRow>,
}

impl<'a> Engine<'a> {
    pub fn new(p1: &'a dyn Proxy, p2: &'a dyn Proxy, cfg: &'a AuctionConfig) -> Self {
        Engine { proxies: [p1, p2], cfg, buf: Vec::new() }
    }

    pub fn config(&self) -> &AuctionConfig {
        self.cfg
    }

    pub fn initial_state(&self) -> EngineState {
        let book = BidBook::with_history(self.cfg.grid, false);
        EngineState { books: [book.clone(), book], round: 0, last_price: None, next_tick: 0 }
    }

    /// Plays one round at `price` and commits it to `state`.
    pub fn step(&mut self, state: &mut EngineState, price: f64) -> Result<RoundResult, EngineError> {
        let ctx = RoundContext { round: state.round, price, prev_price: state.last_price };
        let g = self.cfg.grid;
        let mut rows = Vec::new();
        for b in 0..2 {
            self.buf.clear();
            self.proxies[b].additional(&ctx, &mut self.buf);
            let h = self.proxies[b].headline(&ctx);
            state.books[b]
                .record_round(price, h, &self.buf)
                .map_err(|source| EngineError::Bid { bidder: b + 1, source })?;
            if self.cfg.record_log {
                let row = |kind: BidKind, k: usize, amount: Money| LogRow {
                    round: ctx.round,
                    clock_price: price,
                    bidder: b + 1,
                    kind: kind.as_str(),
                    quantity: g.x(k),
                    amount,
                    closed_flag: false,
                    r_star: None,
                };
                rows.push(row(BidKind::Headline, h, g.linear(price, h)));
                rows.extend(self.buf.iter().map(|&(k, a)| row(BidKind::Additional, k, a)));
            }
        }
        let closing = solve_closing_levels(
            &state.books[0].levels(),
            &state.books[1].levels(),
            g.n(),
            self.cfg.tie_break,
            self.cfg.exec,
        );
        for r in &mut rows {
            r.closed_flag = closing.allocation.is_some();
            r.r_star = closing.r_star;
        }
        state.round += 1;
        state.last_price = Some(price);
        Ok(RoundResult { closing, rows })
    }

    /// Runs from `state` until the first close (refined if configured) or
    /// the safety bound.
    pub fn run_from(&mut self, mut state: EngineState) -> Result<AuctionOutcome, EngineError> {
        let mut log = Vec::new();
        loop {
            let price = self.cfg.tick_price(state.next_tick);
            if self.cfg.beyond_max(price) {
                return Ok(AuctionOutcome::unclosed(
                    state.last_price.unwrap_or(self.cfg.start_price),
                    state.round,
                    log,
                ));
            }
            let before = state.clone();
            let res = self.step(&mut state, price)?;
            state.next_tick += 1;
            if res.closing.allocation.is_none() {
                log.extend(res.rows);
                continue;
            }
            let (state, closing, price, rows) = match before.last_price {
                Some(lo) if self.cfg.refine => self.refine(before, lo, price, state, res)?,
                _ => (state, res.closing, price, res.rows),
            };
            log.extend(rows);
            return Ok(assemble(&state, closing, price, log));
        }
    }

    /// Bisection between a non-closing price `lo` (whose post-round state is
    /// `base`) and the closing tick `hi`. Non-closing midpoints are committed
    /// as rounds; the close is recomputed at the final `hi` from the latest
    /// committed state.
    fn refine(
        &mut self,
        mut base: EngineState,
        mut lo: f64,
        tick: f64,
        tick_state: EngineState,
        tick_res: RoundResult,
    ) -> Result<(EngineState, Closing, f64, Vec<LogRow>), EngineError> {
        let mut hi = tick;
        let mut rows = Vec::new();
        while hi - lo > self.cfg.refine_tol {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            let mut trial = base.clone();
            let res = self.step(&mut trial, mid)?;
            if res.closing.allocation.is_some() {
                hi = mid;
            } else {
                rows.extend(res.rows);
                base = trial;
                lo = mid;
            }
        }
        let next_tick = tick_state.next_tick;
        let mut fin = base;
        let res = self.step(&mut fin, hi)?;
        if res.closing.allocation.is_some() {
            fin.next_tick = next_tick;
            rows.extend(res.rows);
            return Ok((fin, res.closing, hi, rows));
        }
        Ok((tick_state, tick_res.closing, tick, tick_res.rows))
    }
}

fn assemble(state: &EngineState, closing: Closing, price: f64, log: Vec<LogRow>) -> AuctionOutcome {
    let (k1, k2) = closing.allocation.expect("closing allocation");
    let g = state.books[0].grid();
    let e1 = state.books[0].entry(k1).expect("accepted bid exists");
    let e2 = state.books[1].entry(k2).expect("accepted bid exists");
    let allocations = [g.x(k1), g.x(k2)];
    AuctionOutcome {
        final_price: price,
        allocations,
        payments: [e1.amount, e2.amount],
        kinds: [Some(e1.kind), Some(e2.kind)],
        revenue: e1.amount + e2.amount,
        termination: Termination::Closed,
        excess_supply: g.x(g.n() - k1 - k2),
        indices: Some((k1, k2)),
        r_star: closing.r_star,
        rounds: state.round,
        log,
    }
}

/// Runs the CMRA for two proxies from the start price.
pub fn run_cmra(p1: &dyn Proxy, p2: &dyn Proxy, cfg: &AuctionConfig) -> Result<AuctionOutcome, EngineError> {
    cfg.validate()?;
    let mut engine = Engine::new(p1, p2, cfg);
    let state = engine.initial_state();
    engine.run_from(state)
}

/// Plain clock auction on the proxies' headline demands: the clock rises
/// while total demand exceeds supply and the final demands are charged the
/// final clock price. Excess supply stays unallocated.
pub fn run_clock(p1: &dyn Proxy, p2: &dyn Proxy, cfg: &AuctionConfig) -> Result<AuctionOutcome, EngineError> {
    cfg.validate()?;
    let g = cfg.grid;
    let mut log = Vec::new();
    let mut round = 0usize;
    let mut demand = |price: f64, prev: Option<f64>, log: &mut Vec<LogRow>| -> [usize; 2] {
        let ctx = RoundContext { round, price, prev_price: prev };
        let d = [p1.headline(&ctx), p2.headline(&ctx)];
        if cfg.record_log {
            let closed = d[0] + d[1] <= g.n();
            for (b, &k) in d.iter().enumerate() {
                log.push(LogRow {
                    round,
                    clock_price: price,
                    bidder: b + 1,
                    kind: BidKind::Headline.as_str(),
                    quantity: g.x(k),
                    amount: g.linear(price, k),
                    closed_flag: closed,
                    r_star: None,
                });
            }
        }
        round += 1;
        d
    };
    let mut prev: Option<(f64, [usize; 2])> = None;
    let mut k = 0usize;
    loop {
        let price = cfg.tick_price(k);
        if cfg.beyond_max(price) {
            let last = prev.map_or(cfg.start_price, |p| p.0);
            return Ok(AuctionOutcome::unclosed(last, round, log));
        }
        let d = demand(price, prev.map(|p| p.0), &mut log);
        k += 1;
        if d[0] + d[1] > g.n() {
            prev = Some((price, d));
            continue;
        }
        let (mut lo, mut hi, mut d_lo, mut d_hi) = match prev {
            Some((p, dp)) => (p, price, dp, d),
            None => (price, price, d, d),
        };
        if cfg.refine && prev.is_some() {
            while hi - lo > cfg.refine_tol {
                let mid = 0.5 * (lo + hi);
                if !(mid > lo && mid < hi) {
                    break;
                }
                let dm = demand(mid, Some(lo), &mut log);
                if dm[0] + dm[1] <= g.n() {
                    hi = mid;
                    d_hi = dm;
                } else {
                    lo = mid;
                    d_lo = dm;
                }
            }
        }
        let (final_price, alloc) = if d_hi == [0, 0] && prev.is_some() {
            // Both dropped out at once: the larger pre-drop headline bid
            // stands, bidder 1 on ties.
            let r = [g.linear(lo, d_lo[0]), g.linear(lo, d_lo[1])];
            if r[0] >= r[1] {
                (lo, [d_lo[0], 0])
            } else {
                (lo, [0, d_lo[1]])
            }
        } else {
            (hi, d_hi)
        };
        let payments = [g.linear(final_price, alloc[0]), g.linear(final_price, alloc[1])];
        let kind = |k: usize| if k > 0 { Some(BidKind::Headline) } else { None };
        return Ok(AuctionOutcome {
            final_price,
            allocations: [g.x(alloc[0]), g.x(alloc[1])],
            payments,
            kinds: [kind(alloc[0]), kind(alloc[1])],
            revenue: payments[0] + payments[1],
            termination: Termination::Closed,
            excess_supply: g.x(g.n() - alloc[0] - alloc[1]),
            indices: Some((alloc[0], alloc[1])),
            r_star: None,
            rounds: round,
            log,
        });
    }
}

//! Numerical checks of the equilibrium claims: ex-post deviation searches,
//! VCG equivalence and the collusion threshold of riskless demand reduction.
//!
//! The deviation search replays each type pair's baseline once, keeping the
//! state after every clock tick. A single-package deviation leaves the
//! opponent's bids untouched and changes the deviator's bid function at one
//! quantity only, so the first tick at which it closes the auction can be
//! found from per-tick summaries of the baseline books. The engine is then
//! resumed from the tick before that close, which includes the bisection
//! refinement. Headline-drop deviations are always resumed through the
//! engine.

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bidbook::{QuantityGrid, CAP_SLACK};
use crate::mechanism::{run_cmra, AuctionConfig, AuctionOutcome, Engine, EngineError, EngineState};
use crate::money::Money;
use crate::par::{self, Exec};
use crate::strategies::{replay, Proxy, ProxyStrategy, RoundContext, StrategyTag};
use crate::valuation::{vcg_outcome, MarketEnv, ValuationError, ValuationModel};

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("baseline auction did not close for types {0:?}")]
    BaselineOpen([f64; 2]),
}

/// A deviation from a base proxy strategy, applied from clock tick `tick`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Deviation {
    /// From `price` on, demand at most grid index `y` and drop the base
    /// strategy's additional bids above `y`.
    HeadlineDrop { tick: usize, price: f64, y: usize },
    /// The base strategy plus one additional bid `amount` on grid index `x`,
    /// submitted in the first round at or above `price`.
    PackageBid { tick: usize, price: f64, x: usize, amount: Money },
}

impl Deviation {
    fn key(&self) -> (u8, usize, usize, i64) {
        match *self {
            Deviation::HeadlineDrop { tick, y, .. } => (0, tick, y, 0),
            Deviation::PackageBid { tick, x, amount, .. } => (1, tick, x, amount.units()),
        }
    }
}

impl Eq for Deviation {}

impl PartialOrd for Deviation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Deviation {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// A base strategy with one deviation applied.
pub struct DeviatingProxy<'a> {
    pub base: &'a ProxyStrategy,
    pub deviation: Deviation,
}

impl Proxy for DeviatingProxy<'_> {
    fn headline(&self, ctx: &RoundContext) -> usize {
        let h = self.base.headline(ctx);
        match self.deviation {
            Deviation::HeadlineDrop { price, y, .. } if ctx.price >= price => h.min(y),
            _ => h,
        }
    }

    fn additional(&self, ctx: &RoundContext, out: &mut Vec<(usize, Money)>) {
        let start = out.len();
        self.base.additional(ctx, out);
        match self.deviation {
            Deviation::HeadlineDrop { price, y, .. } if ctx.price >= price => {
                let mut k = start;
                while k < out.len() {
                    if out[k].0 > y {
                        out.remove(k);
                    } else {
                        k += 1;
                    }
                }
            }
            Deviation::PackageBid { price, x, amount, .. } if ctx.crosses(price) => out.push((x, amount)),
            _ => {}
        }
    }
}

/// The finite family searched for each deviator.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct DeviationFamily {
    /// Number of submission (and drop) prices, spread over the baseline's
    /// clock ticks up to its close.
    pub submission_prices: usize,
    /// Amount levels from 0 to the linear cap `q·x`.
    pub amount_levels: usize,
    pub headline_drops: bool,
    pub package_bids: bool,
}

impl Default for DeviationFamily {
    fn default() -> Self {
        DeviationFamily { submission_prices: 20, amount_levels: 50, headline_drops: true, package_bids: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationReport {
    pub types: [f64; 2],
    /// Deviating bidder, 1 or 2.
    pub deviator: usize,
    pub baseline_surplus: f64,
    pub best_deviation: Option<Deviation>,
    pub best_surplus: f64,
    pub gain: f64,
    pub evaluated: usize,
    /// Deviations rejected by the bid-book rules.
    pub illegal: usize,
}

/// Finite set of types shared by both bidders.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct TypeGrid {
    pub template: ValuationModel,
    pub thetas: Vec<f64>,
}

impl TypeGrid {
    /// `points` evenly spaced types over `[low, high]`.
    pub fn linspace(template: ValuationModel, low: f64, high: f64, points: usize) -> Self {
        let thetas = if points <= 1 {
            vec![low]
        } else {
            (0..points).map(|i| low + (high - low) * i as f64 / (points - 1) as f64).collect()
        };
        TypeGrid { template, thetas }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExPostReport {
    pub profile: StrategyTag,
    pub max_gain: f64,
    /// Index into `pairs` of the largest gain.
    pub worst: Option<usize>,
    pub pairs: Vec<DeviationReport>,
    pub evaluated: usize,
}

impl ExPostReport {
    pub fn verified(&self, tol: f64) -> bool {
        self.max_gain <= tol
    }

    pub fn worst_report(&self) -> Option<&DeviationReport> {
        self.worst.map(|i| &self.pairs[i])
    }
}

/// Runs the deviation search for `profile` over every ordered type pair of
/// `grid` and both deviators.
pub fn check_expost(
    profile: StrategyTag,
    grid: &TypeGrid,
    family: &DeviationFamily,
    cfg: &AuctionConfig,
) -> Result<ExPostReport, EquilibriumError> {
    cfg.validate()?;
    let mut tasks = Vec::new();
    for &t1 in &grid.thetas {
        for &t2 in &grid.thetas {
            for d in 0..2 {
                tasks.push(([t1, t2], d));
            }
        }
    }
    let results = par::map(cfg.exec, &tasks, |&(types, d)| -> Result<DeviationReport, EquilibriumError> {
        let models = [grid.template.with_theta(types[0])?, grid.template.with_theta(types[1])?];
        search_deviations(profile, &models, d, family, cfg)
    });
    let pairs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut worst: Option<usize> = None;
    for (i, r) in pairs.iter().enumerate() {
        if worst.map_or(true, |w| r.gain > pairs[w].gain) {
            worst = Some(i);
        }
    }
    Ok(ExPostReport {
        profile,
        max_gain: worst.map_or(f64::NEG_INFINITY, |w| pairs[w].gain),
        worst,
        evaluated: pairs.iter().map(|r| r.evaluated).sum(),
        pairs,
    })
}

/// Per-tick summary of the baseline books used to screen package bids.
struct TickSummary {
    width: usize,
    /// Deviator's bid at each quantity.
    own: Vec<Option<Money>>,
    /// Best opponent bid on quantities up to `1 − x`.
    opp: Vec<Option<Money>>,
    pair_pre: Vec<Option<Money>>,
    pair_suf: Vec<Option<Money>>,
    own_pre: Vec<Option<Money>>,
    own_suf: Vec<Option<Money>>,
    opp_max: Vec<Option<Money>>,
}

impl TickSummary {
    fn new(width: usize) -> Self {
        TickSummary {
            width,
            own: Vec::new(),
            opp: Vec::new(),
            pair_pre: Vec::new(),
            pair_suf: Vec::new(),
            own_pre: Vec::new(),
            own_suf: Vec::new(),
            opp_max: Vec::new(),
        }
    }

    fn push(&mut self, own: &[Option<Money>], opp: &[Option<Money>], n: usize) {
        let w = self.width;
        let mut pref = Vec::with_capacity(n + 1);
        let mut run = None;
        for o in opp.iter().take(n + 1) {
            run = run.max(*o);
            pref.push(run);
        }
        let best_opp: Vec<_> = (0..w).map(|i| pref[n - i]).collect();
        let pair: Vec<Option<Money>> = (0..w)
            .map(|i| match (own[i], best_opp[i]) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            })
            .collect();
        let base = self.own.len();
        self.own.extend_from_slice(&own[..w]);
        self.opp.extend_from_slice(&best_opp);
        let (pp, ps) = exclusive_max(&pair);
        self.pair_pre.extend(pp);
        self.pair_suf.extend(ps);
        let (op, os) = exclusive_max(&own[..w]);
        self.own_pre.extend(op);
        self.own_suf.extend(os);
        self.opp_max.push(opp.iter().copied().max().flatten());
        debug_assert_eq!(self.own.len(), base + w);
    }

    fn own(&self, t: usize, x: usize) -> Option<Money> {
        self.own[t * self.width + x]
    }

    /// Whether the deviator's bid function, raised to at least `a` at `x`,
    /// closes the auction at tick `t`.
    fn closes_with(&self, t: usize, x: usize, a: Money) -> bool {
        let i = t * self.width + x;
        let d = self.own[i].max(Some(a));
        let with_x = match (d, self.opp[i]) {
            (Some(d), Some(o)) => Some(d + o),
            _ => None,
        };
        let pair = self.pair_pre[i].max(self.pair_suf[i]).max(with_x);
        let single = self.opp_max[t].max(self.own_pre[i]).max(self.own_suf[i]).max(d);
        pair.is_some() && pair >= single
    }
}

/// Prefix and suffix maxima excluding the element itself.
fn exclusive_max(v: &[Option<Money>]) -> (Vec<Option<Money>>, Vec<Option<Money>>) {
    let n = v.len();
    let mut pre = vec![None; n];
    let mut suf = vec![None; n];
    for i in 1..n {
        pre[i] = pre[i - 1].max(v[i - 1]);
    }
    for i in (0..n.saturating_sub(1)).rev() {
        suf[i] = suf[i + 1].max(v[i + 1]);
    }
    (pre, suf)
}

/// Baseline replay of one type pair: post-tick states and screening data.
struct Baseline {
    states: Vec<EngineState>,
    initial: EngineState,
    summary: TickSummary,
    /// First closing tick.
    close_tick: usize,
    outcome: AuctionOutcome,
}

impl Baseline {
    fn before(&self, tick: usize) -> EngineState {
        if tick == 0 {
            self.initial.clone()
        } else {
            self.states[tick - 1].clone()
        }
    }

    fn horizon(&self) -> usize {
        self.states.len() - 1
    }
}

fn replay_baseline(
    proxies: [&ProxyStrategy; 2],
    deviator: usize,
    cfg: &AuctionConfig,
) -> Result<Option<Baseline>, EngineError> {
    let g = cfg.grid;
    let mut engine = Engine::new(proxies[0], proxies[1], cfg);
    let initial = engine.initial_state();
    let mut state = initial.clone();
    let mut states = Vec::new();
    let mut summary = TickSummary::new(g.cap_index() + 1);
    let mut close_tick = None;
    let exit = proxies.iter().map(|p| p.model().exit_price()).fold(0.0, f64::max);
    let (mut own, mut opp) = (vec![None; g.n() + 1], vec![None; g.n() + 1]);
    loop {
        let price = cfg.tick_price(state.next_tick);
        if price > cfg.max_price {
            break;
        }
        if let Some(t) = close_tick {
            let t_price = cfg.tick_price(t);
            if price > (2.0 * t_price).max(exit) + cfg.eps {
                break;
            }
        }
        let res = engine.step(&mut state, price)?;
        state.next_tick += 1;
        state.books[deviator].fill_levels(&mut own);
        state.books[1 - deviator].fill_levels(&mut opp);
        summary.push(&own, &opp, g.n());
        if close_tick.is_none() && res.closing.allocation.is_some() {
            close_tick = Some(states.len());
        }
        states.push(state.clone());
    }
    let Some(close_tick) = close_tick else {
        return Ok(None);
    };
    let start = if close_tick == 0 { initial.clone() } else { states[close_tick - 1].clone() };
    let outcome = engine.run_from(start)?;
    Ok(Some(Baseline { states, initial, summary, close_tick, outcome }))
}

/// Ticks at which deviations are submitted: `count` points spread over
/// `0..=close`.
fn submission_ticks(close: usize, count: usize) -> Vec<usize> {
    let mut ticks: Vec<usize> = if count <= 1 {
        vec![0]
    } else {
        (0..count).map(|i| ((i * close) as f64 / (count - 1) as f64).round() as usize).collect()
    };
    ticks.dedup();
    ticks
}

/// Best deviation for bidder `deviator` (0-based) at one type pair.
pub fn search_deviations(
    profile: StrategyTag,
    models: &[ValuationModel; 2],
    deviator: usize,
    family: &DeviationFamily,
    cfg: &AuctionConfig,
) -> Result<DeviationReport, EquilibriumError> {
    search(profile, models, deviator, family, cfg, true)
}

/// [`search_deviations`] with every deviation replayed from the start
/// through [`run_cmra`], without the screen. Slow; a reference for tests.
pub fn search_deviations_replay(
    profile: StrategyTag,
    models: &[ValuationModel; 2],
    deviator: usize,
    family: &DeviationFamily,
    cfg: &AuctionConfig,
) -> Result<DeviationReport, EquilibriumError> {
    search(profile, models, deviator, family, cfg, false)
}

/// Deviator's surplus when `deviation` is played against the base profile.
/// `None` if the deviation breaks the bid-book rules.
pub fn deviation_surplus(
    profile: StrategyTag,
    models: &[ValuationModel; 2],
    deviator: usize,
    deviation: Deviation,
    cfg: &AuctionConfig,
) -> Result<Option<f64>, EngineError> {
    cfg.validate()?;
    let base = [
        ProxyStrategy::new(profile, models[0].clone(), cfg.grid),
        ProxyStrategy::new(profile, models[1].clone(), cfg.grid),
    ];
    let dp = DeviatingProxy { base: &base[deviator], deviation };
    let (p1, p2): (&dyn Proxy, &dyn Proxy) = if deviator == 0 { (&dp, &base[1]) } else { (&base[0], &dp) };
    match run_cmra(p1, p2, cfg) {
        Ok(o) if o.closed() => Ok(Some(o.surplus(deviator, &models[deviator]))),
        Ok(_) => Ok(Some(0.0)),
        Err(EngineError::Bid { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn search(
    profile: StrategyTag,
    models: &[ValuationModel; 2],
    deviator: usize,
    family: &DeviationFamily,
    cfg: &AuctionConfig,
    screened: bool,
) -> Result<DeviationReport, EquilibriumError> {
    let mut cfg = cfg.clone();
    cfg.record_log = false;
    cfg.exec = Exec::Sequential;
    let cfg = &cfg;
    let g = cfg.grid;
    let base = [
        ProxyStrategy::new(profile, models[0].clone(), g),
        ProxyStrategy::new(profile, models[1].clone(), g),
    ];
    let types = [models[0].theta, models[1].theta];
    let bl = replay_baseline([&base[0], &base[1]], deviator, cfg)?
        .ok_or(EquilibriumError::BaselineOpen(types))?;
    let model = &models[deviator];
    let baseline_surplus = bl.outcome.surplus(deviator, model);

    let mut report = DeviationReport {
        types,
        deviator: deviator + 1,
        baseline_surplus,
        best_deviation: None,
        best_surplus: baseline_surplus,
        gain: 0.0,
        evaluated: 0,
        illegal: 0,
    };
    let consider = |report: &mut DeviationReport, dev: Deviation, surplus: Option<f64>| {
        report.evaluated += 1;
        let Some(s) = surplus else {
            report.illegal += 1;
            return;
        };
        let gain = s - baseline_surplus;
        let better = match report.best_deviation {
            None => true,
            Some(best) => gain > report.gain || (gain == report.gain && dev < best),
        };
        if better {
            report.best_deviation = Some(dev);
            report.best_surplus = s;
            report.gain = gain;
        }
    };
    let resume = |dev: Deviation, state: EngineState| -> Option<f64> {
        let dp = DeviatingProxy { base: &base[deviator], deviation: dev };
        let (p1, p2): (&dyn Proxy, &dyn Proxy) =
            if deviator == 0 { (&dp, &base[1]) } else { (&base[0], &dp) };
        let mut engine = Engine::new(p1, p2, cfg);
        match engine.run_from(state) {
            Ok(o) if o.closed() => Some(o.surplus(deviator, model)),
            Ok(_) => Some(0.0),
            Err(_) => None,
        }
    };

    let ticks = submission_ticks(bl.close_tick, family.submission_prices);
    if family.headline_drops {
        for &t0 in &ticks {
            for y in 0..g.cap_index() {
                let dev = Deviation::HeadlineDrop { tick: t0, price: cfg.tick_price(t0), y };
                let surplus = if screened {
                    resume(dev, bl.before(t0))
                } else {
                    deviation_surplus(profile, models, deviator, dev, cfg)?
                };
                consider(&mut report, dev, surplus);
            }
        }
    }
    if family.package_bids {
        let levels = family.amount_levels.max(1);
        for &t0 in &ticks {
            let q = cfg.tick_price(t0);
            let pre = bl.before(t0);
            let headline = bl.states[t0].books[deviator].headline().expect("played");
            for x in 0..=g.cap_index() {
                let top = g.linear(q, x);
                let cap = pre.books[deviator].round_cap(q, headline, x).map(|c| c + CAP_SLACK);
                let amounts: Vec<Money> = if x == 0 {
                    vec![Money::ZERO]
                } else if levels == 1 {
                    vec![top]
                } else {
                    (0..levels).map(|l| Money((top.units() as i128 * l as i128 / (levels - 1) as i128) as i64)).collect()
                };
                for a in amounts {
                    let dev = Deviation::PackageBid { tick: t0, price: q, x, amount: a };
                    if cap.is_some_and(|c| a > c) {
                        consider(&mut report, dev, None);
                        continue;
                    }
                    let surplus = if screened {
                        evaluate_package(&bl, deviator, (t0, x, a, q), baseline_surplus, |st| resume(dev, st))
                    } else {
                        deviation_surplus(profile, models, deviator, dev, cfg)?
                    };
                    consider(&mut report, dev, surplus);
                }
            }
        }
    }
    Ok(report)
}

/// Surplus of a package deviation, resuming the engine only where the
/// screen shows the deviation can change the outcome.
fn evaluate_package<F>(bl: &Baseline, deviator: usize, dev: (usize, usize, Money, f64), baseline: f64, resume: F) -> Option<f64>
where
    F: Fn(EngineState) -> Option<f64>,
{
    let (t0, x, a, q) = dev;
    let s = &bl.summary;
    if s.own(t0, x).is_some_and(|b| b >= a) {
        return Some(baseline);
    }
    let Some(tc) = (t0..=bl.horizon()).find(|&t| s.closes_with(t, x, a)) else {
        return resume(bl.before(t0));
    };
    if tc == t0 {
        return resume(bl.before(t0));
    }
    if tc == bl.close_tick && s.own(tc - 1, x).is_some_and(|b| b >= a) {
        return Some(baseline);
    }
    let mut state = bl.states[tc - 1].clone();
    let round = bl.before(t0).round;
    state.books[deviator].absorb(x, a, q, round);
    resume(state)
}

/// Smallest bid on `x` that makes a pair with the opponent's book
/// revenue-maximising at `clock_price`, against the opponent's own best
/// single acceptance. `None` if the opponent has no bid on any quantity that
/// fits beside `x`.
pub fn minimal_winning_bid(
    opponent: &ProxyStrategy,
    x: f64,
    clock_price: f64,
    eps: f64,
) -> Result<Option<Money>, crate::bidbook::BidError> {
    let g = *opponent.grid();
    let k = g.index_of(x)?;
    let mut prices: Vec<f64> = (0..).map(|i| i as f64 * eps).take_while(|p| *p < clock_price).collect();
    prices.push(clock_price);
    let book = replay(opponent, g, &prices)?;
    let best = (0..=g.n()).filter_map(|j| book.bid_at(j)).max();
    let fit = (0..=g.complement(k)).filter_map(|j| book.bid_at(j)).max();
    Ok(match (best, fit) {
        (Some(b), Some(f)) => Some((b - f).max(Money::ZERO)),
        _ => None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RdrThreshold {
    pub threshold: f64,
    pub mean_type: f64,
    pub holds: bool,
}

/// `U(λ; θ̄) − U(1/2; θ̄)`: riskless demand reduction is an equilibrium when
/// the expected type is at least this value.
pub fn rdr_threshold(env: &MarketEnv) -> Result<RdrThreshold, ValuationError> {
    let m = &env.models[0];
    if !m.is_normalized() {
        return Err(ValuationError::Assumption("family is not normalised to U(λ) − U(1−λ) = θ".into()));
    }
    let (_, high) = env.distribution.support();
    let top = at_type(m, high);
    let threshold = top.utility(env.cap) - top.utility(0.5);
    let mean_type = env.distribution.mean();
    Ok(RdrThreshold { threshold, mean_type, holds: mean_type >= threshold - 1e-12 })
}

/// The model at another type without re-validation (θ may be 0).
fn at_type(m: &ValuationModel, theta: f64) -> ValuationModel {
    ValuationModel { theta, ..m.clone() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IcPoint {
    pub theta: f64,
    pub collusion: f64,
    pub deviation: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloPoint {
    pub theta: f64,
    pub samples: usize,
    pub mean: f64,
    pub std_error: f64,
    pub quadrature: f64,
    /// `|mean − quadrature|` in standard errors.
    pub z: f64,
    pub agrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RdrReport {
    pub threshold: RdrThreshold,
    pub curve: Vec<IcPoint>,
    pub binding: IcPoint,
    pub ic_holds: bool,
    pub monte_carlo: Vec<MonteCarloPoint>,
}

/// Quadrature points on the type support used for the IC curve.
const IC_POINTS: usize = 101;

/// Incentive constraint of riskless demand reduction: for each type, the
/// collusive payoff `U(1/2)` against the payoff from dropping the first-round
/// bid, `F(θ)θ + U(1−λ) − ∫ t f(t) dt`. The deviation payoff is also
/// estimated by simulating the constant strategy against an RDR opponent
/// with sampled types at each type in `mc_types`.
pub fn check_rdr_bne(
    env: &MarketEnv,
    samples: usize,
    seed: u64,
    mc_types: &[f64],
    cfg: &AuctionConfig,
) -> Result<RdrReport, EquilibriumError> {
    let threshold = rdr_threshold(env)?;
    let m = &env.models[0];
    let dist = &env.distribution;
    let (low, high) = dist.support();
    let lam = env.cap;
    let point = |theta: f64| {
        let mt = at_type(m, theta);
        let collusion = mt.utility(0.5);
        let deviation = dist.cdf(theta) * theta + mt.utility(1.0 - lam) - dist.partial_mean(theta);
        IcPoint { theta, collusion, deviation, slack: collusion - deviation }
    };
    let curve: Vec<IcPoint> = (0..IC_POINTS)
        .map(|i| point(low + (high - low) * i as f64 / (IC_POINTS - 1) as f64))
        .collect();
    let mut binding = curve[0].clone();
    for p in &curve {
        if p.slack <= binding.slack + 1e-12 {
            binding = p.clone();
        }
    }
    let ic_holds = binding.slack >= -1e-9;

    let mut cfg = cfg.clone();
    cfg.record_log = false;
    let cfg = &cfg;
    let mut monte_carlo = Vec::new();
    for (slot, &theta) in mc_types.iter().enumerate() {
        let own = m.with_theta(theta)?;
        let chunk = 1000usize;
        let chunks = samples.div_ceil(chunk);
        let sums = par::map_range(cfg.exec, chunks, |c| -> Result<(f64, f64), EquilibriumError> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((slot * chunks + c) as u64);
            let me = ProxyStrategy::constant(own.clone(), cfg.grid);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in c * chunk..((c + 1) * chunk).min(samples) {
                let other = ProxyStrategy::rdr(m.with_theta(dist.sample(&mut rng))?, cfg.grid);
                let o = run_cmra(&me, &other, cfg)?;
                let v = if o.closed() { o.surplus(0, &own) } else { 0.0 };
                s += v;
                s2 += v * v;
            }
            Ok((s, s2))
        });
        let (mut s, mut s2) = (0.0, 0.0);
        for r in sums {
            let (a, b) = r?;
            s += a;
            s2 += b;
        }
        let n = samples.max(1) as f64;
        let mean = s / n;
        let var = ((s2 / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
        let std_error = (var / n).sqrt();
        let quadrature = point(theta).deviation;
        let z = if std_error > 0.0 { (mean - quadrature).abs() / std_error } else { f64::INFINITY };
        let agrees = (mean - quadrature).abs() <= 3.0 * std_error + 1e-9;
        monte_carlo.push(MonteCarloPoint { theta, samples, mean, std_error, quadrature, z, agrees });
    }
    Ok(RdrReport { threshold, curve, binding, ic_holds, monte_carlo })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VcgCheck {
    pub profile: StrategyTag,
    pub allocation_equal: bool,
    pub payment_gap: f64,
    pub allocations: [f64; 2],
    pub payments: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VcgReport {
    pub vcg_allocation: (f64, f64),
    pub vcg_payments: (f64, f64),
    pub checks: Vec<VcgCheck>,
    pub tolerance: f64,
    pub equivalent: bool,
}

/// Compares CMRA-truthful and constant-profile outcomes with VCG.
pub fn vcg_equivalence_check(
    env: &MarketEnv,
    cfg: &AuctionConfig,
    tolerance: f64,
) -> Result<VcgReport, EquilibriumError> {
    let vcg = vcg_outcome(env)?;
    let mut checks = Vec::new();
    for profile in [StrategyTag::CmraTruthful, StrategyTag::Constant] {
        let o = run_profile(profile, env, cfg)?;
        let allocation_equal = o.closed()
            && (o.allocations[0] - vcg.allocation.0).abs() < 1e-12
            && (o.allocations[1] - vcg.allocation.1).abs() < 1e-12;
        let payment_gap = (o.payments[0].to_f64() - vcg.payments.0)
            .abs()
            .max((o.payments[1].to_f64() - vcg.payments.1).abs());
        checks.push(VcgCheck {
            profile,
            allocation_equal,
            payment_gap,
            allocations: o.allocations,
            payments: [o.payments[0].to_f64(), o.payments[1].to_f64()],
        });
    }
    let equivalent = checks.iter().all(|c| c.allocation_equal && c.payment_gap <= tolerance);
    Ok(VcgReport { vcg_allocation: vcg.allocation, vcg_payments: vcg.payments, checks, tolerance, equivalent })
}

/// Both bidders play `profile`.
pub fn run_profile(profile: StrategyTag, env: &MarketEnv, cfg: &AuctionConfig) -> Result<AuctionOutcome, EngineError> {
    let p1 = ProxyStrategy::new(profile, env.models[0].clone(), cfg.grid);
    let p2 = ProxyStrategy::new(profile, env.models[1].clone(), cfg.grid);
    run_cmra(&p1, &p2, cfg)
}

/// Largest welfare over feasible grid splits.
pub fn grid_optimal_welfare(env: &MarketEnv, grid: &QuantityGrid) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..=grid.cap_index() {
        for j in 0..=grid.cap_index().min(grid.n() - i) {
            best = best.max(env.welfare(grid.x(i), grid.x(j)));
        }
    }
    best
}

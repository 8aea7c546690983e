//! Simulation and verification engine for the combinatorial multi-round
//! ascending auction (CMRA) with two bidders and one divisible good.
//!
//! The crate is organised bottom-up:
//!
//! * [`valuation`]: utility families, indirect surplus, truthful demand and
//!   the VCG oracle.
//! * [`bidbook`]: the quantity grid and each bidder's cumulative bid function
//!   with the legality and activity rules.
//! * [`mechanism`]: the closing solver, the CMRA clock loop and the plain
//!   clock auction benchmark.
//! * [`strategies`]: the four proxy strategies.
//! * [`equilibrium`]: deviation searches, VCG equivalence and the collusion
//!   threshold check.
//! * [`scenario`], [`verify`], [`audit`], [`report`]: scenario files, the
//!   named verification checks, payment audits of published auction results,
//!   and the classification table.
//!
//! With the default `parallel` feature, sweeps and deviation searches fan out
//! over rayon; without it every path runs sequentially.

pub mod audit;
pub mod bidbook;
pub mod equilibrium;
pub mod mechanism;
pub mod money;
pub mod par;
pub mod report;
pub mod scenario;
pub mod strategies;
pub mod valuation;
pub mod verify;

pub use bidbook::{BidBook, BidKind, QuantityGrid};
pub use mechanism::{run_clock, run_cmra, solve_closing, AuctionConfig, AuctionOutcome};
pub use money::Money;
pub use strategies::{ProxyStrategy, StrategyTag};
pub use valuation::{Family, MarketEnv, Regime, TypeDistribution, ValuationModel};

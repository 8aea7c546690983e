//! Scenario files: parsing, validation, batch execution and figure-data
//! export.
//!
//! A scenario is a JSON document. Modes:
//!
//! * `single`: each entry of `runs` is played once at `environment.thetas`.
//! * `sweep`: each run is played over every pair of the `sweep` type axes.
//! * `verify`: the named checks from [`crate::verify`].
//! * `audit`: a bundled record id or a path to an audit record.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{audit_linear_prices, AuditError, AuditRecord};
use crate::bidbook::{BidError, QuantityGrid};
use crate::equilibrium::grid_optimal_welfare;
use crate::mechanism::{revenue_curve, run_clock, run_cmra, write_log, AuctionConfig, AuctionOutcome, EngineError, TieBreak};
use crate::money::Money;
use crate::par::{self, Exec};
use crate::strategies::{replay, ProxyStrategy, StrategyTag};
use crate::valuation::{Family, MarketEnv, Regime, TypeDistribution, ValuationError, ValuationModel};
use crate::verify::{run_check, VerifyError, VerifyOptions};

/// Environment variable naming the output directory.
pub const OUT_DIR_VAR: &str = "CMRA_OUT_DIR";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Grid(#[from] BidError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("unknown bundled scenario {0:?}")]
    Unknown(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Single,
    Sweep,
    Verify,
    Audit,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    #[default]
    Cmra,
    Clock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub cap: f64,
    pub family: Family,
    pub thetas: [f64; 2],
    /// Inferred from the family when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<TypeDistribution>,
}

impl EnvSpec {
    pub fn model(&self, theta: f64) -> Result<ValuationModel, ValuationError> {
        let regime = self.regime.unwrap_or(match self.family {
            Family::QuadraticDecreasing { .. } => Regime::Decreasing,
            Family::Power { alpha } if alpha < 1.0 => Regime::Decreasing,
            Family::Power { .. } => Regime::NonDecreasing,
            Family::CustomPolynomial { c2, c3 } if c2 >= 0.0 && c3 >= 0.0 => Regime::NonDecreasing,
            Family::CustomPolynomial { .. } => Regime::Decreasing,
        });
        ValuationModel::new(self.family, theta, self.cap, regime, (theta, theta))
    }

    pub fn models(&self, thetas: [f64; 2]) -> Result<[ValuationModel; 2], ValuationError> {
        Ok([self.model(thetas[0])?, self.model(thetas[1])?])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionSpec {
    pub eps: f64,
    /// Requested grid resolution; rounded up so λ and 1/2 lie on the grid.
    pub grid: usize,
    /// Defaults to twice the larger exit price plus ten increments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_price: Option<f64>,
    #[serde(default)]
    pub start_price: f64,
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default)]
    pub tie_break: TieBreak,
}

fn yes() -> bool {
    true
}

impl AuctionSpec {
    pub fn config(&self, models: &[ValuationModel; 2]) -> Result<AuctionConfig, ScenarioError> {
        let grid = QuantityGrid::new(self.grid, models[0].cap)?;
        let exit = models.iter().map(|m| m.exit_price()).fold(0.0, f64::max);
        let max_price = self.max_price.unwrap_or(2.0 * exit + 10.0 * self.eps);
        let mut cfg = AuctionConfig::new(grid, self.eps, max_price);
        cfg.start_price = self.start_price;
        cfg.refine = self.refine;
        cfg.tie_break = self.tie_break;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Checked against a single run's outcome.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revenue: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocations: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default)]
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub label: String,
    #[serde(default)]
    pub mechanism: MechanismKind,
    /// One strategy per bidder.
    pub strategies: Vec<StrategyTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub low: f64,
    pub high: f64,
    pub points: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.low];
        }
        (0..self.points).map(|i| self.low + (self.high - self.low) * i as f64 / (self.points - 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub theta1: Axis,
    pub theta2: Axis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auction: Option<AuctionSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verify: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<String>,
}

const BUNDLED: [(&str, &str); 2] = [
    ("lots-example", include_str!("../scenarios/lots-example.json")),
    ("fig1-matrix", include_str!("../scenarios/fig1-matrix.json")),
];

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn bundled_names() -> impl Iterator<Item = &'static str> {
        BUNDLED.iter().map(|(n, _)| *n)
    }

    pub fn bundled(name: &str) -> Result<Self, ScenarioError> {
        let (_, text) =
            BUNDLED.iter().find(|(n, _)| *n == name).ok_or_else(|| ScenarioError::Unknown(name.to_string()))?;
        Self::from_json(text)
    }

    /// A bundled scenario name or a path to a scenario file.
    pub fn load(name_or_path: &str) -> Result<Self, ScenarioError> {
        if BUNDLED.iter().any(|(n, _)| *n == name_or_path) {
            return Self::bundled(name_or_path);
        }
        Self::from_json(&fs::read_to_string(name_or_path)?)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if self.name.trim().is_empty() {
            return invalid("scenario name is empty".into());
        }
        match self.mode {
            Mode::Single | Mode::Sweep => {
                let Some(env) = &self.environment else {
                    return invalid("environment is required".into());
                };
                let Some(auction) = &self.auction else {
                    return invalid("auction settings are required".into());
                };
                if self.runs.is_empty() {
                    return invalid("no runs".into());
                }
                for r in &self.runs {
                    if r.strategies.len() != 2 {
                        return invalid(format!(
                            "run {:?} lists {} strategies; one per bidder is required",
                            r.label,
                            r.strategies.len()
                        ));
                    }
                }
                let models = env.models(env.thetas)?;
                auction.config(&models)?;
                if self.mode == Mode::Sweep {
                    let Some(sweep) = &self.sweep else {
                        return invalid("sweep axes are required".into());
                    };
                    for a in [&sweep.theta1, &sweep.theta2] {
                        if a.points == 0 || !(a.low <= a.high) {
                            return invalid("empty sweep axis".into());
                        }
                    }
                }
            }
            Mode::Verify => {
                if self.verify.is_empty() {
                    return invalid("no checks to verify".into());
                }
                for id in &self.verify {
                    if !crate::verify::CHECKS.contains(&id.as_str()) {
                        return Err(VerifyError::Unknown(id.clone()).into());
                    }
                }
            }
            Mode::Audit => {
                if self.audit.is_none() {
                    return invalid("no audit record".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub mode: Mode,
    pub ok: bool,
    pub files: Vec<PathBuf>,
    /// Human-readable summary lines.
    pub lines: Vec<String>,
}

/// Output directory from [`OUT_DIR_VAR`], or `cmra-out` in the working
/// directory.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("cmra-out"))
}

/// Executes `scenario` and writes its artifacts under `out/<name>/`.
pub fn run_scenario(scenario: &Scenario, out: &Path, opts: &VerifyOptions) -> Result<ScenarioReport, ScenarioError> {
    scenario.validate()?;
    let dir = out.join(&scenario.name);
    fs::create_dir_all(&dir)?;
    let mut report =
        ScenarioReport { name: scenario.name.clone(), mode: scenario.mode, ok: true, files: Vec::new(), lines: Vec::new() };
    match scenario.mode {
        Mode::Single => run_single(scenario, &dir, opts.exec, &mut report)?,
        Mode::Sweep => run_sweep(scenario, &dir, opts.exec, &mut report)?,
        Mode::Verify => {
            let mut all = Vec::new();
            for id in &scenario.verify {
                let r = run_check(id, opts)?;
                report.ok &= r.passed();
                report.lines.extend(r.render().lines().map(String::from));
                if let Some(t) = r.data.get("table").and_then(|t| t.as_str()) {
                    let path = dir.join(format!("{id}.txt"));
                    fs::write(&path, t)?;
                    report.files.push(path);
                    report.lines.extend(t.lines().map(String::from));
                }
                all.push(r);
            }
            let path = dir.join("verify.json");
            fs::write(&path, serde_json::to_string_pretty(&all)?)?;
            report.files.push(path);
        }
        Mode::Audit => {
            let id = scenario.audit.as_deref().expect("validated");
            let record = if AuditRecord::bundled_ids().any(|b| b == id) {
                AuditRecord::bundled(id)?
            } else {
                AuditRecord::from_json(&fs::read_to_string(id)?)?
            };
            let r = audit_linear_prices(&record)?;
            report.lines.extend(r.render().lines().map(String::from));
            let path = dir.join("audit.json");
            fs::write(&path, serde_json::to_string_pretty(&r)?)?;
            report.files.push(path);
        }
    }
    Ok(report)
}

fn play_run(run: &RunSpec, models: &[ValuationModel; 2], cfg: &AuctionConfig) -> Result<AuctionOutcome, EngineError> {
    let p1 = ProxyStrategy::new(run.strategies[0], models[0].clone(), cfg.grid);
    let p2 = ProxyStrategy::new(run.strategies[1], models[1].clone(), cfg.grid);
    match run.mechanism {
        MechanismKind::Cmra => run_cmra(&p1, &p2, cfg),
        MechanismKind::Clock => run_clock(&p1, &p2, cfg),
    }
}

fn file_stem(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn run_single(s: &Scenario, dir: &Path, exec: Exec, report: &mut ScenarioReport) -> Result<(), ScenarioError> {
    let env = s.environment.as_ref().expect("validated");
    let models = env.models(env.thetas)?;
    let mut cfg = s.auction.as_ref().expect("validated").config(&models)?;
    cfg.exec = exec;
    for run in &s.runs {
        let o = play_run(run, &models, &cfg)?;
        let stem = file_stem(&run.label);
        let log_path = dir.join(format!("{stem}.rounds.csv"));
        write_log(&o.log, fs::File::create(&log_path)?)?;
        let out_path = dir.join(format!("{stem}.outcome.json"));
        fs::write(&out_path, serde_json::to_string_pretty(&o.summary_json())?)?;
        report.files.extend([log_path, out_path]);
        let mut line = format!(
            "{}: {:?} at price {} allocation ({}, {}) payments ({}, {}) revenue {} after {} rounds",
            run.label,
            o.termination,
            o.final_price,
            o.allocations[0],
            o.allocations[1],
            o.payments[0],
            o.payments[1],
            o.revenue,
            o.rounds
        );
        if let Some(e) = &run.expect {
            let misses = expectation_misses(e, &o);
            if misses.is_empty() {
                line.push_str(" [as expected]");
            } else {
                report.ok = false;
                line.push_str(&format!(" [MISMATCH: {}]", misses.join("; ")));
            }
        }
        report.lines.push(line);
    }
    Ok(())
}

fn expectation_misses(e: &Expectation, o: &AuctionOutcome) -> Vec<String> {
    let mut misses = Vec::new();
    let near = |a: f64, b: f64| (a - b).abs() <= e.tolerance;
    if let Some(r) = e.revenue {
        let ok = if e.tolerance == 0.0 { o.revenue == Money::from_f64(r) } else { near(o.revenue.to_f64(), r) };
        if !ok {
            misses.push(format!("revenue {} != {r}", o.revenue));
        }
    }
    if let Some(p) = e.final_price {
        if !near(o.final_price, p) {
            misses.push(format!("final price {} != {p}", o.final_price));
        }
    }
    if let Some(a) = e.allocations {
        if !(near(o.allocations[0], a[0]) && near(o.allocations[1], a[1])) {
            misses.push(format!("allocations {:?} != {a:?}", o.allocations));
        }
    }
    if let Some(r) = e.rounds {
        if o.rounds != r {
            misses.push(format!("rounds {} != {r}", o.rounds));
        }
    }
    misses
}

/// One row of a sweep summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub run: String,
    pub theta1: f64,
    pub theta2: f64,
    pub termination: String,
    pub final_price: f64,
    pub x1: f64,
    pub x2: f64,
    pub payment1: Money,
    pub payment2: Money,
    pub revenue: Money,
    pub welfare: f64,
    pub grid_optimal_welfare: f64,
    pub efficient: bool,
}

/// Plays every run over the sweep's type pairs.
pub fn sweep_rows(s: &Scenario, exec: Exec) -> Result<Vec<SweepRow>, ScenarioError> {
    let env = s.environment.as_ref().expect("validated");
    let sweep = s.sweep.as_ref().ok_or_else(|| ScenarioError::Invalid("sweep axes are required".into()))?;
    let spec = s.auction.as_ref().expect("validated");
    let mut tasks = Vec::new();
    for (ri, _) in s.runs.iter().enumerate() {
        for &a in &sweep.theta1.values() {
            for &b in &sweep.theta2.values() {
                tasks.push((ri, [a, b]));
            }
        }
    }
    let rows = par::map(exec, &tasks, |&(ri, t)| -> Result<SweepRow, ScenarioError> {
        let run = &s.runs[ri];
        let models = env.models(t)?;
        let mut cfg = spec.config(&models)?;
        cfg.record_log = false;
        cfg.exec = Exec::Sequential;
        let o = play_run(run, &models, &cfg)?;
        let market = MarketEnv::pair(models[0].clone(), models[1].clone())?;
        let welfare = if o.closed() { market.welfare(o.allocations[0], o.allocations[1]) } else { 0.0 };
        let best = grid_optimal_welfare(&market, &cfg.grid);
        Ok(SweepRow {
            run: run.label.clone(),
            theta1: t[0],
            theta2: t[1],
            termination: format!("{:?}", o.termination),
            final_price: o.final_price,
            x1: o.allocations[0],
            x2: o.allocations[1],
            payment1: o.payments[0],
            payment2: o.payments[1],
            revenue: o.revenue,
            welfare,
            grid_optimal_welfare: best,
            efficient: o.closed() && welfare >= best - 1e-9,
        })
    });
    rows.into_iter().collect()
}

fn run_sweep(s: &Scenario, dir: &Path, exec: Exec, report: &mut ScenarioReport) -> Result<(), ScenarioError> {
    let rows = sweep_rows(s, exec)?;
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    report.files.push(path);
    for run in &s.runs {
        let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.run == run.label).collect();
        let efficient = mine.iter().filter(|r| r.efficient).count();
        let revenue: f64 = mine.iter().map(|r| r.revenue.to_f64()).sum::<f64>() / mine.len().max(1) as f64;
        report.lines.push(format!(
            "{}: {} type pairs, {efficient} efficient, mean revenue {revenue:.6}",
            run.label,
            mine.len()
        ));
    }
    Ok(())
}

/// One value of an exported figure layer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FigureRow {
    pub price: f64,
    /// `bid1`, `bid2`, `pair_revenue` or `single_max`.
    pub series: &'static str,
    pub quantity: f64,
    pub value: Option<Money>,
}

/// Bid functions and revenue curves of the first run at each requested
/// clock price. The books at price `p` are those after the clock ticks below
/// `p` plus a round at `p`.
pub fn export_figure_data(s: &Scenario, prices: &[f64]) -> Result<Vec<FigureRow>, ScenarioError> {
    if s.mode != Mode::Single {
        return Err(ScenarioError::Invalid("figure export needs a single-run scenario".into()));
    }
    let env = s.environment.as_ref().expect("validated");
    let models = env.models(env.thetas)?;
    let cfg = s.auction.as_ref().expect("validated").config(&models)?;
    let run = &s.runs[0];
    let proxies = [
        ProxyStrategy::new(run.strategies[0], models[0].clone(), cfg.grid),
        ProxyStrategy::new(run.strategies[1], models[1].clone(), cfg.grid),
    ];
    let outcome = play_run(run, &models, &cfg)?;
    let g = cfg.grid;
    let mut rows = Vec::new();
    for &p in prices {
        if !(p >= cfg.start_price && p <= outcome.final_price + 1e-12) {
            return Err(ScenarioError::Invalid(format!(
                "price {p} outside [{}, {}]",
                cfg.start_price, outcome.final_price
            )));
        }
        let mut path: Vec<f64> = (0..).map(|k| cfg.tick_price(k)).take_while(|&q| q < p).collect();
        path.push(p);
        let books = [replay(&proxies[0], g, &path)?, replay(&proxies[1], g, &path)?];
        for (b, series) in [(0, "bid1"), (1, "bid2")] {
            for k in 0..=g.cap_index() {
                rows.push(FigureRow { price: p, series, quantity: g.x(k), value: books[b].bid_at(k) });
            }
        }
        for pt in revenue_curve(&books[0], &books[1]) {
            rows.push(FigureRow { price: p, series: "pair_revenue", quantity: pt.x1, value: pt.pair });
            rows.push(FigureRow { price: p, series: "single_max", quantity: pt.x1, value: pt.single_max });
        }
    }
    Ok(rows)
}

pub fn write_figure_csv<W: std::io::Write>(rows: &[FigureRow], out: W) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

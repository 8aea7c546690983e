//! The strategy × regime classification table: efficiency and equilibrium
//! verdicts per cell, as JSON and as a plain-text table.

use serde::Serialize;

use crate::strategies::StrategyTag;
use crate::valuation::Regime;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verdict {
    NotEquilibrium,
    ExPost,
    /// Bayes-Nash equilibrium when the mean type clears the collusion
    /// threshold; `more_likely` when that threshold is the lower of the two
    /// regimes.
    BayesNash { more_likely: bool },
    /// The search found a gain between the verify and refute tolerances.
    Inconclusive,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::NotEquilibrium => "Not eqm",
            Verdict::ExPost => "Ex-post eqm",
            Verdict::BayesNash { more_likely: true } => "BNE (more likely)",
            Verdict::BayesNash { more_likely: false } => "BNE (less likely)",
            Verdict::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub regime: Regime,
    pub strategy: StrategyTag,
    pub efficient: bool,
    pub verdict: Verdict,
    pub evidence: String,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("{} / {}", if self.efficient { "Efficient" } else { "Inefficient" }, self.verdict.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationMatrix {
    pub cells: Vec<Cell>,
}

impl ClassificationMatrix {
    /// The classification the theory predicts.
    pub fn expected() -> Self {
        use StrategyTag::*;
        use Verdict::*;
        let rows = [
            (Regime::Decreasing, [(ClockTruthful, true, NotEquilibrium), (CmraTruthful, true, NotEquilibrium), (Constant, false, ExPost), (Rdr, false, BayesNash { more_likely: true })]),
            (Regime::NonDecreasing, [(ClockTruthful, false, NotEquilibrium), (CmraTruthful, true, ExPost), (Constant, true, ExPost), (Rdr, false, BayesNash { more_likely: false })]),
        ];
        let cells = rows
            .into_iter()
            .flat_map(|(regime, row)| {
                row.into_iter().map(move |(strategy, efficient, verdict)| Cell {
                    regime,
                    strategy,
                    efficient,
                    verdict,
                    evidence: String::new(),
                })
            })
            .collect();
        ClassificationMatrix { cells }
    }

    pub fn cell(&self, regime: Regime, strategy: StrategyTag) -> Option<&Cell> {
        self.cells.iter().find(|c| c.regime == regime && c.strategy == strategy)
    }

    pub fn render(&self) -> String {
        let width = 32;
        let mut s = format!("{:<16}", "marg. values");
        for t in StrategyTag::ALL {
            s.push_str(&format!("| {:<width$}", t.label()));
        }
        s.push('\n');
        s.push_str(&"-".repeat(16 + 4 * (width + 2)));
        s.push('\n');
        for regime in [Regime::Decreasing, Regime::NonDecreasing] {
            let name = match regime {
                Regime::Decreasing => "decreasing",
                Regime::NonDecreasing => "non-decreasing",
            };
            let mut eff = format!("{name:<16}");
            let mut eq = format!("{:<16}", "");
            for t in StrategyTag::ALL {
                let (e, v) = match self.cell(regime, t) {
                    Some(c) => (if c.efficient { "Efficient" } else { "Inefficient" }, c.verdict.label()),
                    None => ("?", "?"),
                };
                eff.push_str(&format!("| {e:<width$}"));
                eq.push_str(&format!("| {v:<width$}"));
            }
            s.push_str(&eff);
            s.push('\n');
            s.push_str(&eq);
            s.push('\n');
        }
        s
    }
}

//! Valuation families, surplus functions, truthful demand, efficient
//! allocations and the VCG oracle.
//!
//! A bidder of type θ values a share `x` of the good at `U(x; θ)`. Every
//! family here is linear in θ. Quantities live on `[0, 1]` and a bidder may
//! win at most the cap λ.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValuationError {
    #[error("quantity {0} outside [0, 1]")]
    Domain(f64),
    #[error("cap {0} must lie in (1/2, 1)")]
    Cap(f64),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("regime check failed: {0}")]
    Regime(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
}

/// Parametric shape of `U(x; θ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `θx − (k/2)x²`.
    QuadraticDecreasing { k: f64 },
    /// `θx^α / (λ^α − (1−λ)^α)`; normalised so that `U(λ) − U(1−λ) = θ`.
    Power { alpha: f64 },
    /// `θx + c2·x² + c3·x³`.
    CustomPolynomial { c2: f64, c3: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Decreasing,
    NonDecreasing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValuationModel {
    pub family: Family,
    pub theta: f64,
    pub cap: f64,
    pub regime: Regime,
    /// Type support `[θ_low, θ_high]`.
    pub support: (f64, f64),
}

const CHECK_STEP: f64 = 1e-3;
const ROOT_TOL: f64 = 1e-10;

impl ValuationModel {
    /// Builds a model and validates the regime invariants on a `1e-3` grid
    /// over `(0, λ]`.
    pub fn new(
        family: Family,
        theta: f64,
        cap: f64,
        regime: Regime,
        support: (f64, f64),
    ) -> Result<Self, ValuationError> {
        let m = ValuationModel { family, theta, cap, regime, support };
        m.validate()?;
        Ok(m)
    }

    /// Power family with the regime implied by α.
    pub fn power(alpha: f64, cap: f64, theta: f64) -> Result<Self, ValuationError> {
        let regime = if alpha < 1.0 { Regime::Decreasing } else { Regime::NonDecreasing };
        Self::new(Family::Power { alpha }, theta, cap, regime, (theta, theta))
    }

    /// `θx − (k/2)x²`, decreasing marginals.
    pub fn quadratic(theta: f64, k: f64, cap: f64) -> Result<Self, ValuationError> {
        Self::new(Family::QuadraticDecreasing { k }, theta, cap, Regime::Decreasing, (theta, theta))
    }

    /// Constant marginal value θ.
    pub fn linear(theta: f64, cap: f64) -> Result<Self, ValuationError> {
        Self::new(
            Family::CustomPolynomial { c2: 0.0, c3: 0.0 },
            theta,
            cap,
            Regime::NonDecreasing,
            (theta, theta),
        )
    }

    pub fn with_support(mut self, low: f64, high: f64) -> Self {
        self.support = (low, high);
        self
    }

    /// Same family and cap at a different type.
    pub fn with_theta(&self, theta: f64) -> Result<Self, ValuationError> {
        Self::new(self.family, theta, self.cap, self.regime, self.support)
    }

    fn validate(&self) -> Result<(), ValuationError> {
        if !(self.cap > 0.5 && self.cap < 1.0) {
            return Err(ValuationError::Cap(self.cap));
        }
        if !self.theta.is_finite() || self.theta <= 0.0 {
            return Err(ValuationError::Parameter(format!("type {} must be positive", self.theta)));
        }
        match self.family {
            Family::Power { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                return Err(ValuationError::Parameter(format!("alpha {alpha} must be positive")));
            }
            Family::QuadraticDecreasing { k } if !(k > 0.0 && k.is_finite()) => {
                return Err(ValuationError::Parameter(format!("curvature {k} must be positive")));
            }
            _ => {}
        }
        // x = 0 is skipped: the power family with α > 1 has u(0) = 0.
        let steps = (self.cap / CHECK_STEP).floor() as usize;
        for i in 1..=steps + 1 {
            let x = if i > steps { self.cap } else { i as f64 * CHECK_STEP };
            let u = self.marginal(x);
            if !(u > 0.0) {
                return Err(ValuationError::Regime(format!("marginal value {u} at x = {x} is not positive")));
            }
            let du = self.marginal_slope(x);
            match self.regime {
                Regime::Decreasing if !(du < 0.0) => {
                    return Err(ValuationError::Regime(format!("u'({x}) = {du} is not negative")));
                }
                Regime::NonDecreasing if du < -1e-12 => {
                    return Err(ValuationError::Regime(format!("u'({x}) = {du} is negative")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn power_norm(&self, alpha: f64) -> f64 {
        self.cap.powf(alpha) - (1.0 - self.cap).powf(alpha)
    }

    /// `U(x; θ)` with a domain check.
    pub fn value(&self, x: f64) -> Result<f64, ValuationError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(ValuationError::Domain(x));
        }
        Ok(self.utility(x))
    }

    /// `U(x; θ)` without a domain check.
    pub fn utility(&self, x: f64) -> f64 {
        let t = self.theta;
        match self.family {
            Family::QuadraticDecreasing { k } => t * x - 0.5 * k * x * x,
            Family::Power { alpha } => t * x.powf(alpha) / self.power_norm(alpha),
            Family::CustomPolynomial { c2, c3 } => t * x + c2 * x * x + c3 * x * x * x,
        }
    }

    /// `u(x) = dU/dx`.
    pub fn marginal(&self, x: f64) -> f64 {
        let t = self.theta;
        match self.family {
            Family::QuadraticDecreasing { k } => t - k * x,
            Family::Power { alpha } => t * alpha * x.powf(alpha - 1.0) / self.power_norm(alpha),
            Family::CustomPolynomial { c2, c3 } => t + 2.0 * c2 * x + 3.0 * c3 * x * x,
        }
    }

    /// `u'(x)`.
    pub fn marginal_slope(&self, x: f64) -> f64 {
        let t = self.theta;
        match self.family {
            Family::QuadraticDecreasing { k } => -k,
            Family::Power { alpha } => {
                t * alpha * (alpha - 1.0) * x.powf(alpha - 2.0) / self.power_norm(alpha)
            }
            Family::CustomPolynomial { c2, c3 } => 2.0 * c2 + 6.0 * c3 * x,
        }
    }

    /// `V(p) = max_{x ∈ [0, λ]} U(x) − px`.
    pub fn indirect_surplus(&self, p: f64) -> f64 {
        match self.regime {
            Regime::Decreasing => {
                let h = self.truthful_demand(p);
                self.utility(h) - p * h
            }
            Regime::NonDecreasing => (self.utility(self.cap) - p * self.cap).max(0.0),
        }
    }

    /// A surplus-maximising quantity at price `p`. In the non-decreasing
    /// regime the tie `U(λ) = pλ` resolves to λ.
    pub fn truthful_demand(&self, p: f64) -> f64 {
        let lam = self.cap;
        match self.regime {
            Regime::NonDecreasing => {
                if self.utility(lam) - p * lam >= 0.0 {
                    lam
                } else {
                    0.0
                }
            }
            Regime::Decreasing => {
                if self.marginal(lam) >= p {
                    return lam;
                }
                let x = match self.family {
                    Family::QuadraticDecreasing { k } => (self.theta - p) / k,
                    Family::Power { alpha } => {
                        if p <= 0.0 {
                            lam
                        } else {
                            (p * self.power_norm(alpha) / (self.theta * alpha)).powf(1.0 / (alpha - 1.0))
                        }
                    }
                    Family::CustomPolynomial { .. } => {
                        if self.marginal(0.0) <= p {
                            0.0
                        } else {
                            bisect(|x| self.marginal(x) - p, 0.0, lam)
                        }
                    }
                };
                x.clamp(0.0, lam)
            }
        }
    }

    /// `p^f = (U(λ) − U(1−λ))/λ`, the price at which winning λ at the clock
    /// price and winning `1−λ` for free give the same surplus.
    pub fn final_price(&self) -> f64 {
        (self.utility(self.cap) - self.utility(1.0 - self.cap)) / self.cap
    }

    /// `U(λ)/λ`, the price above which a non-decreasing bidder drops out.
    pub fn exit_price(&self) -> f64 {
        self.utility(self.cap) / self.cap
    }

    /// Whether `U(λ; θ) − U(1−λ; θ) = θ` holds for this family and cap.
    pub fn is_normalized(&self) -> bool {
        let probe = |t: f64| -> Option<f64> {
            let m = ValuationModel { theta: t, ..self.clone() };
            Some(m.utility(m.cap) - m.utility(1.0 - m.cap) - t)
        };
        [0.5, 1.0, 2.0]
            .iter()
            .all(|&t| probe(t).map(|r| r.abs() < 1e-9).unwrap_or(false))
    }
}

/// Root of a decreasing function on `[lo, hi]` by bisection.
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Distribution of each bidder's type (i.i.d.).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TypeDistribution {
    Uniform { low: f64, high: f64 },
    Discrete { points: Vec<f64>, weights: Vec<f64> },
}

impl TypeDistribution {
    pub fn validate(&self) -> Result<(), ValuationError> {
        match self {
            TypeDistribution::Uniform { low, high } if !(low < high) => {
                Err(ValuationError::Parameter(format!("empty support [{low}, {high}]")))
            }
            TypeDistribution::Discrete { points, weights }
                if points.is_empty()
                    || points.len() != weights.len()
                    || weights.iter().any(|w| *w < 0.0)
                    || weights.iter().sum::<f64>() <= 0.0 =>
            {
                Err(ValuationError::Parameter("malformed discrete distribution".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            TypeDistribution::Uniform { low, high } => (*low, *high),
            TypeDistribution::Discrete { points, .. } => (
                points.iter().cloned().fold(f64::INFINITY, f64::min),
                points.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ),
        }
    }

    fn normalized_weights(points: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
        let total: f64 = weights.iter().sum();
        points.iter().zip(weights).map(|(p, w)| (*p, w / total)).collect()
    }

    pub fn mean(&self) -> f64 {
        match self {
            TypeDistribution::Uniform { low, high } => 0.5 * (low + high),
            TypeDistribution::Discrete { points, weights } => Self::normalized_weights(points, weights)
                .iter()
                .map(|(p, w)| p * w)
                .sum(),
        }
    }

    /// `F(θ) = P(type ≤ θ)`.
    pub fn cdf(&self, theta: f64) -> f64 {
        match self {
            TypeDistribution::Uniform { low, high } => ((theta - low) / (high - low)).clamp(0.0, 1.0),
            TypeDistribution::Discrete { points, weights } => Self::normalized_weights(points, weights)
                .iter()
                .filter(|(p, _)| *p <= theta)
                .map(|(_, w)| w)
                .sum(),
        }
    }

    /// `∫_{θ_low}^{θ} t f(t) dt`, by composite Simpson quadrature for the
    /// uniform density and by summation for discrete support.
    pub fn partial_mean(&self, theta: f64) -> f64 {
        match self {
            TypeDistribution::Uniform { low, high } => {
                let b = theta.clamp(*low, *high);
                let density = 1.0 / (high - low);
                simpson(|t| t * density, *low, b, 200)
            }
            TypeDistribution::Discrete { points, weights } => Self::normalized_weights(points, weights)
                .iter()
                .filter(|(p, _)| *p <= theta)
                .map(|(p, w)| p * w)
                .sum(),
        }
    }

    /// Draws one type. Uniform draws land in `(low, high]` so a zero lower
    /// bound never yields a degenerate zero type.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TypeDistribution::Uniform { low, high } => {
                let u: f64 = rng.gen();
                low + (high - low) * (1.0 - u)
            }
            TypeDistribution::Discrete { points, weights } => {
                let total: f64 = weights.iter().sum();
                let mut r = rng.gen::<f64>() * total;
                for (p, w) in points.iter().zip(weights) {
                    if r < *w {
                        return *p;
                    }
                    r -= w;
                }
                *points.last().expect("validated non-empty")
            }
        }
    }
}

pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = panels.max(1) * 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Two bidders, unit supply, common cap λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketEnv {
    pub cap: f64,
    pub models: [ValuationModel; 2],
    pub distribution: TypeDistribution,
}

impl MarketEnv {
    pub fn new(
        models: [ValuationModel; 2],
        distribution: TypeDistribution,
    ) -> Result<Self, ValuationError> {
        let cap = models[0].cap;
        if !(cap > 0.5 && cap < 1.0) {
            return Err(ValuationError::Cap(cap));
        }
        if (models[1].cap - cap).abs() > 1e-12 {
            return Err(ValuationError::Parameter("bidders must share the cap".into()));
        }
        distribution.validate()?;
        Ok(MarketEnv { cap, models, distribution })
    }

    /// Environment with a point-mass distribution at the two given models.
    pub fn pair(m1: ValuationModel, m2: ValuationModel) -> Result<Self, ValuationError> {
        let dist = TypeDistribution::Discrete { points: vec![m1.theta, m2.theta], weights: vec![1.0, 1.0] };
        Self::new([m1, m2], dist)
    }

    pub fn regime(&self) -> Result<Regime, ValuationError> {
        if self.models[0].regime != self.models[1].regime {
            return Err(ValuationError::Assumption("bidders have different regimes".into()));
        }
        Ok(self.models[0].regime)
    }

    /// Pairwise strict-concavity condition `u_i(λ) < u_j(1−λ)`.
    pub fn check_decreasing_pair(&self) -> Result<(), ValuationError> {
        let lam = self.cap;
        for (i, j) in [(0, 1), (1, 0)] {
            let (ui, uj) = (self.models[i].marginal(lam), self.models[j].marginal(1.0 - lam));
            if !(ui < uj) {
                return Err(ValuationError::Assumption(format!(
                    "u_{}(λ) = {ui} is not below u_{}(1−λ) = {uj}",
                    i + 1,
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn welfare(&self, x1: f64, x2: f64) -> f64 {
        self.models[0].utility(x1) + self.models[1].utility(x2)
    }
}

/// Welfare-maximising split of the good.
pub fn efficient_allocation(env: &MarketEnv) -> Result<(f64, f64), ValuationError> {
    let lam = env.cap;
    match env.regime()? {
        Regime::NonDecreasing => {
            if env.welfare(lam, 1.0 - lam) >= env.welfare(1.0 - lam, lam) {
                Ok((lam, 1.0 - lam))
            } else {
                Ok((1.0 - lam, lam))
            }
        }
        Regime::Decreasing => {
            let [m1, m2] = &env.models;
            let g = |x: f64| m1.marginal(x) - m2.marginal(1.0 - x);
            if !(g(1.0 - lam) > 0.0 && g(lam) < 0.0) {
                return Err(ValuationError::Assumption(
                    "efficient split is not interior to (1−λ, λ)".into(),
                ));
            }
            let x = bisect(g, 1.0 - lam, lam);
            Ok((x, 1.0 - x))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VcgOutcome {
    pub allocation: (f64, f64),
    pub payments: (f64, f64),
}

/// VCG outcome: each bidder pays the welfare loss it imposes on the other.
/// In the non-decreasing regime the strong bidder pays `U_w(λ) − U_w(1−λ)`.
pub fn vcg_outcome(env: &MarketEnv) -> Result<VcgOutcome, ValuationError> {
    let lam = env.cap;
    let (x1, x2) = efficient_allocation(env)?;
    let [m1, m2] = &env.models;
    // Alone, the other bidder would take the cap.
    let pay1 = m2.utility(lam) - m2.utility(x2);
    let pay2 = m1.utility(lam) - m1.utility(x1);
    Ok(VcgOutcome { allocation: (x1, x2), payments: (pay1.max(0.0), pay2.max(0.0)) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dec() -> (ValuationModel, ValuationModel) {
        (
            ValuationModel::quadratic(1.25, 1.0, 0.9).unwrap(),
            ValuationModel::quadratic(1.05, 1.0, 0.9).unwrap(),
        )
    }

    #[test]
    fn lots_values() {
        let m = ValuationModel::linear(120.0, 0.75).unwrap();
        assert_eq!(m.value(0.5).unwrap(), 60.0);
        assert_eq!(m.value(0.0).unwrap(), 0.0);
        assert_eq!(m.indirect_surplus(40.0), 60.0);
        assert_eq!(m.final_price(), 80.0);
        assert!(m.value(1.5).is_err());
    }

    #[test]
    fn power_family() {
        let m = ValuationModel::power(2.0, 0.75, 1.0).unwrap();
        assert_abs_diff_eq!(m.value(0.75).unwrap(), 1.125, epsilon = 1e-12);
        let m = ValuationModel::power(1.5, 0.75, 0.6).unwrap();
        assert_abs_diff_eq!(m.final_price(), 0.8, epsilon = 1e-12);
        assert!(m.is_normalized());
        assert_eq!(m.truthful_demand(0.1), 0.75);
    }

    #[test]
    fn dec_demand_and_surplus() {
        let (m1, m2) = dec();
        assert_abs_diff_eq!(m1.truthful_demand(0.5), 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(m2.truthful_demand(0.95), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(m1.indirect_surplus(0.65), 0.18, epsilon = 1e-12);
        assert_eq!(m1.indirect_surplus(0.0), m1.utility(0.9));
        assert!(!m1.is_normalized());
    }

    #[test]
    fn efficient_and_vcg() {
        let (m1, m2) = dec();
        let env = MarketEnv::pair(m1, m2).unwrap();
        let (x1, x2) = efficient_allocation(&env).unwrap();
        assert_abs_diff_eq!(x1, 0.6, epsilon = 1e-9);
        assert_abs_diff_eq!(x1 + x2, 1.0, epsilon = 1e-12);

        let env = MarketEnv::pair(
            ValuationModel::power(2.0, 0.75, 0.8).unwrap(),
            ValuationModel::power(2.0, 0.75, 0.5).unwrap(),
        )
        .unwrap();
        let v = vcg_outcome(&env).unwrap();
        assert_eq!(v.allocation, (0.75, 0.25));
        assert_abs_diff_eq!(v.payments.0, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v.payments.1, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_decreasing_splits_evenly() {
        let m = ValuationModel::quadratic(1.1, 1.0, 0.8).unwrap();
        let env = MarketEnv::pair(m.clone(), m).unwrap();
        let (x1, _) = efficient_allocation(&env).unwrap();
        assert_abs_diff_eq!(x1, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn non_interior_split_is_an_assumption_error() {
        let env = MarketEnv::pair(
            ValuationModel::quadratic(3.0, 1.0, 0.9).unwrap(),
            ValuationModel::quadratic(1.0, 1.0, 0.9).unwrap(),
        )
        .unwrap();
        assert!(matches!(efficient_allocation(&env), Err(ValuationError::Assumption(_))));
        assert!(env.check_decreasing_pair().is_err());
    }

    #[test]
    fn regime_validation() {
        // U-shaped marginals on [0, λ] fail the non-decreasing check.
        let cubic = ValuationModel::new(
            Family::CustomPolynomial { c2: -1.5, c3: 1.0 },
            1.0,
            0.75,
            Regime::NonDecreasing,
            (1.0, 1.0),
        );
        assert!(matches!(cubic, Err(ValuationError::Regime(_))));
        assert!(ValuationModel::power(0.5, 0.75, 1.0).unwrap().regime == Regime::Decreasing);
        assert!(ValuationModel::linear(1.0, 0.4).is_err());
    }

    #[test]
    fn uniform_partial_mean() {
        let d = TypeDistribution::Uniform { low: 0.0, high: 1.0 };
        assert_abs_diff_eq!(d.partial_mean(1.0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.partial_mean(0.4), 0.08, epsilon = 1e-12);
        assert_eq!(d.cdf(0.25), 0.25);
    }
}

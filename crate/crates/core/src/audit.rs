//! Linear-price audits of published CMRA outcomes.
//!
//! Only lot counts and total payments are public. If every winner paid for
//! its headline demand, payments are linear in uniform per-category prices
//! at or above reserve. The audit solves that system exactly in micro-DKK
//! and reports either the price set or which bidder equations cannot hold
//! together.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

type Q = BigRational;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("cannot parse audit record: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid amount {0:?}")]
    Amount(String),
    #[error("inconsistent record: {0}")]
    Inconsistent(String),
    #[error("unknown bundled record {0:?}")]
    Unknown(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "DKK")]
    Dkk,
    #[serde(rename = "million DKK")]
    MillionDkk,
}

impl Unit {
    /// Micro-DKK per unit.
    fn micro(self) -> BigInt {
        match self {
            Unit::Dkk => BigInt::from(1_000_000u64),
            Unit::MillionDkk => BigInt::from(1_000_000_000_000u64),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Unit::Dkk => "DKK",
            Unit::MillionDkk => "million DKK",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub supply: u32,
    /// Decimal string in the record's unit.
    pub reserve: String,
    /// Non-competitive lots are charged at reserve outside the CMRA.
    #[serde(default = "yes")]
    pub competitive: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidderRecord {
    pub name: String,
    pub lots: BTreeMap<String, u32>,
    pub payment: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub source: String,
    pub unit: Unit,
    /// Maximum competitive lots per bidder, if published as a lot count.
    #[serde(default)]
    pub cmra_cap: Option<u32>,
    pub categories: Vec<Category>,
    pub bidders: Vec<BidderRecord>,
    #[serde(default)]
    pub notes: Vec<String>,
}

const BUNDLED: [(&str, &str); 3] = [
    ("denmark-2016", include_str!("../data/denmark-2016.json")),
    ("denmark-2019", include_str!("../data/denmark-2019.json")),
    ("denmark-2021", include_str!("../data/denmark-2021.json")),
];

impl AuditRecord {
    pub fn from_json(text: &str) -> Result<Self, AuditError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn bundled_ids() -> impl Iterator<Item = &'static str> {
        BUNDLED.iter().map(|(id, _)| *id)
    }

    pub fn bundled(id: &str) -> Result<Self, AuditError> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(k, _)| *k == id)
            .ok_or_else(|| AuditError::Unknown(id.to_string()))?;
        Self::from_json(text)
    }
}

/// Parses a non-negative decimal string in `unit` into exact micro-DKK.
pub fn parse_amount(s: &str, unit: Unit) -> Result<BigInt, AuditError> {
    let bad = || AuditError::Amount(s.to_string());
    let t = s.trim().replace(['_', ','], "");
    let (int, frac) = t.split_once('.').unwrap_or((&t, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits: BigInt = format!("{int}{frac}0").parse().map_err(|_| bad())?;
    let scale = BigInt::from(10u32).pow(frac.len() as u32 + 1);
    let micro = digits * unit.micro();
    if !(&micro % &scale).is_zero() {
        return Err(bad());
    }
    Ok(micro / scale)
}

/// Renders micro-DKK in `unit`, exact when the decimal terminates.
pub fn format_amount(q: &Q, unit: Unit) -> String {
    let v = q / Q::from_integer(unit.micro());
    let neg = v.is_negative();
    let v = v.abs();
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    let int = v.to_integer();
    write!(out, "{int}").unwrap();
    let mut frac = v - Q::from_integer(int);
    if frac.is_zero() {
        return out;
    }
    out.push('.');
    let ten = Q::from_integer(BigInt::from(10));
    for _ in 0..12 {
        frac *= &ten;
        let d = frac.to_integer();
        write!(out, "{d}").unwrap();
        frac -= Q::from_integer(d);
        if frac.is_zero() {
            return out;
        }
    }
    let approx = q.to_f64().unwrap_or(f64::NAN) / unit.micro().to_f64().unwrap_or(1.0);
    format!("~{approx:.6}")
}

/// Row-reduced `[A | e]` with the row combinations that produced each row.
struct Reduced {
    rows: Vec<Vec<Q>>,
    rhs: Vec<Q>,
    combos: Vec<Vec<Q>>,
    pivots: Vec<usize>,
}

fn reduce(a: &[Vec<Q>], e: &[Q]) -> Reduced {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    let mut rows = a.to_vec();
    let mut rhs = e.to_vec();
    let mut combos: Vec<Vec<Q>> =
        (0..m).map(|i| (0..m).map(|j| if i == j { Q::one() } else { Q::zero() }).collect()).collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..n {
        let Some(p) = (r..m).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        rhs.swap(r, p);
        combos.swap(r, p);
        let inv = rows[r][c].recip();
        for v in rows[r].iter_mut() {
            *v *= &inv;
        }
        rhs[r] *= &inv;
        for v in combos[r].iter_mut() {
            *v *= &inv;
        }
        for i in 0..m {
            if i == r || rows[i][c].is_zero() {
                continue;
            }
            let f = rows[i][c].clone();
            for j in 0..n {
                let d = &f * &rows[r][j];
                rows[i][j] -= d;
            }
            let d = &f * &rhs[r];
            rhs[i] -= d;
            for j in 0..m {
                let d = &f * &combos[r][j];
                combos[i][j] -= d;
            }
        }
        pivots.push(c);
        r += 1;
        if r == m {
            break;
        }
    }
    Reduced { rows, rhs, combos, pivots }
}

fn solve_square(a: &[Vec<Q>], b: &[Q]) -> Option<Vec<Q>> {
    let red = reduce(a, b);
    (red.pivots.len() == a.len()).then(|| red.rhs[..a.len()].to_vec())
}

/// Vertices of `{s ≥ 0 : A s = b}` for `A` with independent rows.
fn basic_feasible(a: &[Vec<Q>], b: &[Q], n: usize) -> Vec<Vec<Q>> {
    let r = a.len();
    if r == 0 {
        return vec![vec![Q::zero(); n]];
    }
    let mut out = Vec::new();
    let mut cols: Vec<usize> = (0..r).collect();
    loop {
        let sub: Vec<Vec<Q>> = a.iter().map(|row| cols.iter().map(|&c| row[c].clone()).collect()).collect();
        if let Some(x) = solve_square(&sub, b) {
            if x.iter().all(|v| !v.is_negative()) {
                let mut s = vec![Q::zero(); n];
                for (k, &c) in cols.iter().enumerate() {
                    s[c] = x[k].clone();
                }
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        // Next combination of r columns out of n.
        let mut i = r;
        while i > 0 && cols[i - 1] == n - r + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cols[i - 1] += 1;
        for j in i..r {
            cols[j] = cols[j - 1] + 1;
        }
    }
}

/// Linear equations `Σ_c n_{b,c} p_c = e_b` over the categories with winners.
struct PriceSystem {
    names: Vec<String>,
    reserves: Vec<Q>,
    bidders: Vec<String>,
    a: Vec<Vec<Q>>,
    e: Vec<Q>,
    payments: Vec<Q>,
    counts: Vec<Vec<u32>>,
}

impl PriceSystem {
    fn build(record: &AuditRecord) -> Result<Self, AuditError> {
        let unit = record.unit;
        let mut index = BTreeMap::new();
        for (i, c) in record.categories.iter().enumerate() {
            if index.insert(c.name.as_str(), i).is_some() {
                return Err(AuditError::Inconsistent(format!("duplicate category {}", c.name)));
            }
        }
        if record.bidders.is_empty() {
            return Err(AuditError::Inconsistent("no bidders".into()));
        }
        let reserves_all = record
            .categories
            .iter()
            .map(|c| parse_amount(&c.reserve, unit).map(Q::from_integer))
            .collect::<Result<Vec<_>, _>>()?;
        let mut won = vec![0u32; record.categories.len()];
        let mut rows = Vec::new();
        for b in &record.bidders {
            let mut row = vec![0u32; record.categories.len()];
            for (name, &n) in &b.lots {
                let &i = index.get(name.as_str()).ok_or_else(|| {
                    AuditError::Inconsistent(format!("bidder {} holds unknown category {name}", b.name))
                })?;
                row[i] = n;
                won[i] += n;
            }
            if let Some(cap) = record.cmra_cap {
                let competitive: u32 =
                    record.categories.iter().zip(&row).filter(|(c, _)| c.competitive).map(|(_, n)| n).sum();
                if competitive > cap {
                    return Err(AuditError::Inconsistent(format!(
                        "bidder {} holds {competitive} lots above the cap of {cap}",
                        b.name
                    )));
                }
            }
            rows.push(row);
        }
        for (c, &w) in record.categories.iter().zip(&won) {
            if w > c.supply {
                return Err(AuditError::Inconsistent(format!("{w} lots of {} sold, supply {}", c.name, c.supply)));
            }
        }
        let priced: Vec<usize> =
            (0..record.categories.len()).filter(|&i| record.categories[i].competitive && won[i] > 0).collect();
        let mut a = Vec::new();
        let mut e = Vec::new();
        let mut payments = Vec::new();
        for (b, row) in record.bidders.iter().zip(&rows) {
            let pay = Q::from_integer(parse_amount(&b.payment, unit)?);
            let mut reserve_total = Q::zero();
            let mut fixed = Q::zero();
            for (i, &n) in row.iter().enumerate() {
                let v = &reserves_all[i] * Q::from_integer(BigInt::from(n));
                if !record.categories[i].competitive {
                    fixed += &v;
                }
                reserve_total += v;
            }
            if pay < reserve_total {
                return Err(AuditError::Inconsistent(format!(
                    "bidder {} paid {} below the reserve value {} of its lots",
                    b.name,
                    format_amount(&pay, unit),
                    format_amount(&reserve_total, unit)
                )));
            }
            a.push(priced.iter().map(|&i| Q::from_integer(BigInt::from(row[i]))).collect());
            e.push(&pay - fixed);
            payments.push(pay);
        }
        Ok(PriceSystem {
            names: priced.iter().map(|&i| record.categories[i].name.clone()).collect(),
            reserves: priced.iter().map(|&i| reserves_all[i].clone()).collect(),
            bidders: record.bidders.iter().map(|b| b.name.clone()).collect(),
            counts: rows.iter().map(|r| priced.iter().map(|&i| r[i]).collect()).collect(),
            a,
            e,
            payments,
        })
    }

    fn subset(&self, keep: &[usize]) -> (Vec<Vec<Q>>, Vec<Q>) {
        (keep.iter().map(|&i| self.a[i].clone()).collect(), keep.iter().map(|&i| self.e[i].clone()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    /// Integer weights on bidder equations whose combination reads `0 = residual`.
    pub weights: Vec<(String, String)>,
    pub residual: String,
    pub bidders: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SolutionSet {
    /// The equations contradict each other.
    Inconsistent { certificate: Certificate },
    /// Consistent, but every solution puts some price below reserve.
    BelowReserve,
    Unique { prices: BTreeMap<String, String> },
    /// `base + t · direction` for `t` in `[t_low, t_high]`, parametrised by
    /// the price of `free`.
    Line {
        free: String,
        base: BTreeMap<String, String>,
        direction: BTreeMap<String, String>,
        t_low: Option<String>,
        t_high: Option<String>,
        /// Points on the segment where two categories with equal reserves
        /// have equal prices.
        equal_price_points: Vec<EqualPricePoint>,
    },
    Polytope { dimension: usize, vertices: Vec<BTreeMap<String, String>> },
}

impl SolutionSet {
    pub fn feasible(&self) -> bool {
        !matches!(self, SolutionSet::Inconsistent { .. } | SolutionSet::BelowReserve)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EqualPricePoint {
    pub categories: (String, String),
    pub prices: BTreeMap<String, String>,
}

fn solution_set(sys: &PriceSystem, keep: &[usize], unit: Unit) -> SolutionSet {
    let (a, e) = sys.subset(keep);
    let n = sys.names.len();
    let red = reduce(&a, &e);
    let rank = red.pivots.len();
    if let Some(k) = (rank..a.len()).find(|&k| !red.rhs[k].is_zero()) {
        return SolutionSet::Inconsistent { certificate: certificate(sys, keep, &red.combos[k], &red.rhs[k], unit) };
    }
    let show = |v: &[Q]| -> BTreeMap<String, String> {
        sys.names.iter().cloned().zip(v.iter().map(|q| format_amount(q, unit))).collect()
    };
    // Shift to s = p − R ≥ 0 and test for a basic feasible solution.
    let rows: Vec<Vec<Q>> = red.rows[..rank].to_vec();
    let shifted: Vec<Q> = (0..rank)
        .map(|k| {
            let ar: Q = rows[k].iter().zip(&sys.reserves).map(|(x, r)| x * r).sum();
            &red.rhs[k] - ar
        })
        .collect();
    let vertices = basic_feasible(&rows, &shifted, n);
    if vertices.is_empty() {
        return SolutionSet::BelowReserve;
    }
    let lift = |s: &[Q]| -> Vec<Q> { s.iter().zip(&sys.reserves).map(|(x, r)| x + r).collect() };
    match n - rank {
        0 => SolutionSet::Unique { prices: show(&lift(&vertices[0])) },
        1 => {
            let f = (0..n).find(|c| !red.pivots.contains(c)).expect("one free column");
            let mut base = vec![Q::zero(); n];
            let mut dir = vec![Q::zero(); n];
            dir[f] = Q::one();
            for (k, &c) in red.pivots.iter().enumerate() {
                base[c] = red.rhs[k].clone();
                dir[c] = -red.rows[k][f].clone();
            }
            let (mut lo, mut hi): (Option<Q>, Option<Q>) = (None, None);
            for c in 0..n {
                if dir[c].is_zero() {
                    continue;
                }
                let t = (&sys.reserves[c] - &base[c]) / &dir[c];
                if dir[c].is_positive() {
                    lo = Some(lo.map_or(t.clone(), |l| l.max(t)));
                } else {
                    hi = Some(hi.map_or(t.clone(), |h| h.min(t)));
                }
            }
            let mut equal_price_points = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if sys.reserves[i] != sys.reserves[j] || dir[i] == dir[j] {
                        continue;
                    }
                    let t = (&base[j] - &base[i]) / (&dir[i] - &dir[j]);
                    if lo.as_ref().is_some_and(|l| &t < l) || hi.as_ref().is_some_and(|h| &t > h) {
                        continue;
                    }
                    let p: Vec<Q> = (0..n).map(|c| &base[c] + &t * &dir[c]).collect();
                    equal_price_points.push(EqualPricePoint {
                        categories: (sys.names[i].clone(), sys.names[j].clone()),
                        prices: show(&p),
                    });
                }
            }
            SolutionSet::Line {
                free: sys.names[f].clone(),
                base: show(&base),
                direction: sys.names.iter().cloned().zip(dir.iter().map(|d| d.to_string())).collect(),
                t_low: lo.map(|t| format_amount(&t, unit)),
                t_high: hi.map(|t| format_amount(&t, unit)),
                equal_price_points,
            }
        }
        d => SolutionSet::Polytope { dimension: d, vertices: vertices.iter().map(|v| show(&lift(v))).collect() },
    }
}

fn certificate(sys: &PriceSystem, keep: &[usize], combo: &[Q], residual: &Q, unit: Unit) -> Certificate {
    let denom = combo.iter().fold(BigInt::one(), |acc, q| num_integer::lcm(acc, q.denom().clone()));
    let ints: Vec<BigInt> = combo.iter().map(|q| (q * Q::from_integer(denom.clone())).to_integer()).collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, v| num_integer::gcd(acc, v.clone()));
    let g = if g.is_zero() { BigInt::one() } else { g };
    let mut weights = Vec::new();
    let mut bidders = Vec::new();
    for (k, w) in ints.iter().enumerate() {
        if !w.is_zero() {
            let w = w / &g;
            weights.push((sys.bidders[keep[k]].clone(), w.to_string()));
            bidders.push(sys.bidders[keep[k]].clone());
        }
    }
    let scaled = residual * Q::from_integer(denom) / Q::from_integer(g);
    Certificate { weights, residual: format_amount(&scaled, unit), bidders }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Equation {
    pub bidder: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeaveOneOut {
    pub dropped: String,
    pub solution: SolutionSet,
}

/// What a richer bidder's extra lots would have cost at linear prices.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Difference {
    pub higher: String,
    pub lower: String,
    pub gap: String,
    /// `gap = Σ d_c p_c` with `d` the lot-count difference.
    pub identity: String,
    /// The higher payer holds at least as many lots in every category.
    pub dominates: bool,
    /// Reserve value of the categories where the higher payer has more lots.
    pub extra_reserve: String,
    pub excess_over_reserve: String,
    /// The gap is below the reserve value of the extra lots.
    pub below_reserve: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerLot {
    pub bidder: String,
    pub category: String,
    pub lots: u32,
    pub per_lot: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Asymmetry {
    pub category: String,
    pub high: String,
    pub low: String,
    pub per_lot_ratio: f64,
    pub payment_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub id: String,
    pub title: String,
    pub unit: Unit,
    pub categories: Vec<String>,
    pub equations: Vec<Equation>,
    pub solution: SolutionSet,
    /// Payment minus linear-price charge per bidder, when prices are unique.
    pub residuals: Option<BTreeMap<String, String>>,
    pub leave_one_out: Vec<LeaveOneOut>,
    pub differences: Vec<Difference>,
    pub single_category: Vec<PerLot>,
    pub asymmetries: Vec<Asymmetry>,
    pub flags: Vec<String>,
}

impl AuditReport {
    pub fn linear_prices_fit(&self) -> bool {
        self.solution.feasible()
    }
}

/// Audits `record` for consistency with linear per-category prices.
pub fn audit_linear_prices(record: &AuditRecord) -> Result<AuditReport, AuditError> {
    let unit = record.unit;
    let sys = PriceSystem::build(record)?;
    let n = sys.names.len();
    let m = sys.bidders.len();
    let fmt = |q: &Q| format_amount(q, unit);
    let linear_text = |coeffs: &[Q]| -> String {
        let terms: Vec<String> = coeffs
            .iter()
            .zip(&sys.names)
            .filter(|(c, _)| !c.is_zero())
            .map(|(c, name)| if c.is_one() { format!("p_{name}") } else { format!("{c} p_{name}") })
            .collect();
        if terms.is_empty() { "0".into() } else { terms.join(" + ") }
    };
    let equations = (0..m)
        .map(|b| Equation { bidder: sys.bidders[b].clone(), text: format!("{} = {}", fmt(&sys.e[b]), linear_text(&sys.a[b])) })
        .collect();
    let all: Vec<usize> = (0..m).collect();
    let solution = solution_set(&sys, &all, unit);
    let mut flags = Vec::new();

    let residuals = match &solution {
        SolutionSet::Unique { .. } => {
            let (rows, rhs) = sys.subset(&all);
            let red = reduce(&rows, &rhs);
            let mut p = vec![Q::zero(); n];
            for (k, &c) in red.pivots.iter().enumerate() {
                p[c] = red.rhs[k].clone();
            }
            Some(
                (0..m)
                    .map(|b| {
                        let charge: Q = sys.a[b].iter().zip(&p).map(|(x, y)| x * y).sum();
                        (sys.bidders[b].clone(), fmt(&(&sys.e[b] - charge)))
                    })
                    .collect(),
            )
        }
        _ => None,
    };

    let mut leave_one_out = Vec::new();
    if m > 1 {
        for d in 0..m {
            let keep: Vec<usize> = (0..m).filter(|&b| b != d).collect();
            leave_one_out.push(LeaveOneOut { dropped: sys.bidders[d].clone(), solution: solution_set(&sys, &keep, unit) });
        }
    }
    match &solution {
        SolutionSet::Inconsistent { certificate } => {
            flags.push(format!(
                "no linear prices: the equations of bidders {} combine to 0 = {}",
                certificate.bidders.join(", "),
                certificate.residual
            ));
            for l in &leave_one_out {
                if l.solution.feasible() {
                    flags.push(format!("dropping bidder {}'s equation restores linear prices", l.dropped));
                }
            }
        }
        SolutionSet::BelowReserve => flags.push("linear prices would fall below reserve".into()),
        _ => {}
    }

    let mut differences = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let (hi, lo) = if sys.payments[i] >= sys.payments[j] { (i, j) } else { (j, i) };
            let d: Vec<Q> = (0..n).map(|c| &sys.a[hi][c] - &sys.a[lo][c]).collect();
            if d.iter().all(Zero::is_zero) {
                continue;
            }
            let gap = &sys.e[hi] - &sys.e[lo];
            let extra: Q = d.iter().zip(&sys.reserves).filter(|(x, _)| x.is_positive()).map(|(x, r)| x * r).sum();
            let below = gap < extra;
            let dominates = d.iter().all(|x| !x.is_negative());
            let identity = format!("{} = {}", fmt(&gap), signed_text(&d, &sys.names));
            if below {
                flags.push(format!(
                    "bidder {} paid {} more than bidder {} for extra lots with reserve value {}",
                    sys.bidders[hi],
                    fmt(&gap),
                    sys.bidders[lo],
                    fmt(&extra)
                ));
            }
            differences.push(Difference {
                higher: sys.bidders[hi].clone(),
                lower: sys.bidders[lo].clone(),
                gap: fmt(&gap),
                identity,
                dominates,
                extra_reserve: fmt(&extra),
                excess_over_reserve: fmt(&(&gap - &extra)),
                below_reserve: below,
            });
        }
    }

    let mut single_category = Vec::new();
    for b in 0..m {
        let held: Vec<usize> = (0..n).filter(|&c| sys.counts[b][c] > 0).collect();
        if let [c] = held[..] {
            let lots = sys.counts[b][c];
            single_category.push(PerLot {
                bidder: sys.bidders[b].clone(),
                category: sys.names[c].clone(),
                lots,
                per_lot: fmt(&(&sys.e[b] / Q::from_integer(BigInt::from(lots)))),
            });
        }
    }
    let mut asymmetries = Vec::new();
    for (x, px) in single_category.iter().enumerate() {
        for py in &single_category[x + 1..] {
            if px.category != py.category {
                continue;
            }
            let bx = sys.bidders.iter().position(|b| *b == px.bidder).expect("bidder");
            let by = sys.bidders.iter().position(|b| *b == py.bidder).expect("bidder");
            let ux = &sys.e[bx] / Q::from_integer(BigInt::from(px.lots));
            let uy = &sys.e[by] / Q::from_integer(BigInt::from(py.lots));
            if ux == uy {
                continue;
            }
            let (h, l, uh, ul) = if ux > uy { (bx, by, ux, uy) } else { (by, bx, uy, ux) };
            let ratio = |a: &Q, b: &Q| (a / b).to_f64().unwrap_or(f64::INFINITY);
            let a = Asymmetry {
                category: px.category.clone(),
                high: sys.bidders[h].clone(),
                low: sys.bidders[l].clone(),
                per_lot_ratio: ratio(&uh, &ul),
                payment_ratio: ratio(&sys.e[h], &sys.e[l]),
            };
            flags.push(format!(
                "bidder {} paid {} per {} lot, bidder {} paid {}; total payments differ by a factor {:.2}",
                a.high,
                fmt(&uh),
                a.category,
                a.low,
                fmt(&ul),
                a.payment_ratio
            ));
            asymmetries.push(a);
        }
    }

    Ok(AuditReport {
        id: record.id.clone(),
        title: record.title.clone(),
        unit,
        categories: sys.names.clone(),
        equations,
        solution,
        residuals,
        leave_one_out,
        differences,
        single_category,
        asymmetries,
        flags,
    })
}

fn signed_text(d: &[Q], names: &[String]) -> String {
    let mut out = String::new();
    for (c, name) in d.iter().zip(names) {
        if c.is_zero() {
            continue;
        }
        let mag = c.abs();
        let term = if mag.is_one() { format!("p_{name}") } else { format!("{mag} p_{name}") };
        if out.is_empty() {
            if c.is_negative() {
                out.push('-');
            }
        } else {
            out.push_str(if c.is_negative() { " - " } else { " + " });
        }
        out.push_str(&term);
    }
    out
}

impl AuditReport {
    /// Plain-text summary for the CLI.
    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} ({})", self.title, self.unit.label()).unwrap();
        for e in &self.equations {
            writeln!(s, "  bidder {}: {}", e.bidder, e.text).unwrap();
        }
        match &self.solution {
            SolutionSet::Unique { prices } => {
                let p: Vec<String> = prices.iter().map(|(k, v)| format!("p_{k} = {v}")).collect();
                writeln!(s, "  linear prices: {}", p.join(", ")).unwrap();
            }
            SolutionSet::Line { free, t_low, t_high, .. } => {
                writeln!(
                    s,
                    "  one-parameter family in p_{free} over [{}, {}]",
                    t_low.as_deref().unwrap_or("-inf"),
                    t_high.as_deref().unwrap_or("inf")
                )
                .unwrap();
            }
            SolutionSet::Polytope { dimension, vertices } => {
                writeln!(s, "  linear prices form a {dimension}-dimensional set with {} vertices", vertices.len())
                    .unwrap();
            }
            SolutionSet::Inconsistent { .. } => writeln!(s, "  no linear prices fit").unwrap(),
            SolutionSet::BelowReserve => writeln!(s, "  no linear prices at or above reserve").unwrap(),
        }
        if let Some(r) = &self.residuals {
            let r: Vec<String> = r.iter().map(|(k, v)| format!("{k}: {v}")).collect();
            writeln!(s, "  residuals: {}", r.join(", ")).unwrap();
        }
        for d in &self.differences {
            writeln!(s, "  {} - {}: {}", d.higher, d.lower, d.identity).unwrap();
        }
        for f in &self.flags {
            writeln!(s, "  flag: {f}").unwrap();
        }
        s
    }
}

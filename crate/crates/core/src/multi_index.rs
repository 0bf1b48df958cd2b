//! Multi-indices over N^k and joint moments of the batch vector.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{binomial, factorial};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("multi-index needs k >= 1 entries"));
        }
        Ok(Self(entries))
    }

    pub fn zero(k: usize) -> Self {
        Self(vec![0; k])
    }

    /// Kronecker unit vector `n(i)`, zero-based `i`.
    pub fn unit(k: usize, i: usize) -> Self {
        let mut v = vec![0; k];
        v[i] = 1;
        Self(v)
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// Total order `eta_n = sum n_i`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|x| *x == 0)
    }

    /// `Some(i)` if this is the unit vector `n(i)`.
    pub fn unit_position(&self) -> Option<usize> {
        if self.order() == 1 {
            self.0.iter().position(|x| *x == 1)
        } else {
            None
        }
    }

    /// Componentwise `self <= other`.
    pub fn below_or_equal(&self, other: &MultiIndex) -> bool {
        self.k() == other.k() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Partial order: componentwise `<=` and not equal.
    pub fn strictly_below(&self, other: &MultiIndex) -> bool {
        self.below_or_equal(other) && self.order() < other.order()
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !other.below_or_equal(self) {
            return None;
        }
        Some(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// All `l < self` in lexicographic order.
    pub fn iterate_below(&self) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; self.k()];
        loop {
            if cur != self.0 {
                out.push(MultiIndex(cur.clone()));
            }
            // odometer, last coordinate fastest
            let mut pos = self.k();
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                if cur[pos] < self.0[pos] {
                    cur[pos] += 1;
                    for c in cur.iter_mut().skip(pos + 1) {
                        *c = 0;
                    }
                    break;
                }
            }
        }
    }

    /// Coordinates `j` (zero-based) with `l_j < n_j`.
    pub fn support_set(l: &MultiIndex, n: &MultiIndex) -> Result<BTreeSet<usize>> {
        if !l.strictly_below(n) {
            return Err(Error::Order {
                l: l.to_string(),
                n: n.to_string(),
            });
        }
        Ok(l.0
            .iter()
            .zip(&n.0)
            .enumerate()
            .filter(|(_, (a, b))| a < b)
            .map(|(j, _)| j)
            .collect())
    }

    /// All indices of dimension `k` with total order in `1..=max_order`,
    /// sorted by order then lexicographically.
    pub fn all_up_to(k: usize, max_order: u32) -> Vec<MultiIndex> {
        let top = MultiIndex(vec![max_order; k]);
        let mut all: Vec<MultiIndex> = top
            .iterate_below()
            .into_iter()
            .chain(std::iter::once(top))
            .filter(|m| m.order() >= 1 && m.order() <= max_order)
            .collect();
        all.sort_by(|a, b| a.order().cmp(&b.order()).then_with(|| a.cmp(b)));
        all
    }

    /// All indices with total order exactly `order`.
    pub fn with_order(k: usize, order: u32) -> Vec<MultiIndex> {
        Self::all_up_to(k, order)
            .into_iter()
            .filter(|m| m.order() == order)
            .collect()
    }
}

/// `prod_j C(n_j, l_j)`, exact.
pub fn binom_product(l: &MultiIndex, n: &MultiIndex) -> u128 {
    l.0.iter()
        .zip(&n.0)
        .map(|(a, b)| binomial(*b as u64, *a as u64))
        .product()
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    /// Parses `2,1` or `(2,1)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('(').trim_end_matches(')');
        let entries = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u32>()
                    .map_err(|e| Error::Config(format!("bad multi-index entry {p:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        MultiIndex::new(entries)
    }
}

/// Joint moment provider for `(X_1, ..., X_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BatchJson", into = "BatchJson")]
pub enum BatchMomentProvider {
    /// Moments by table lookup; zero index is implicitly 1.
    ExplicitTable { k: usize, entries: HashMap<MultiIndex, f64> },
    /// `moments[j][r] = E[X_j^r]`, independent coordinates.
    IndependentMarginals(Vec<Vec<f64>>),
    /// `M` items spread over `k` classes with probabilities `p`.
    Multinomial { m: u32, p: Vec<f64> },
    /// Degenerate batch vector.
    Constant(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum BatchJson {
    Multinomial {
        #[serde(rename = "M")]
        m: u32,
        p: Vec<f64>,
    },
    Independent {
        moments: Vec<Vec<f64>>,
    },
    Table {
        entries: Vec<TableEntry>,
    },
    Constant {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableEntry {
    m: Vec<u32>,
    value: f64,
}

impl TryFrom<BatchJson> for BatchMomentProvider {
    type Error = Error;

    fn try_from(j: BatchJson) -> Result<Self> {
        let p = match j {
            BatchJson::Multinomial { m, p } => BatchMomentProvider::Multinomial { m, p },
            BatchJson::Independent { moments } => BatchMomentProvider::IndependentMarginals(moments),
            BatchJson::Constant { values } => BatchMomentProvider::Constant(values),
            BatchJson::Table { entries } => {
                let k = entries
                    .first()
                    .map(|e| e.m.len())
                    .ok_or_else(|| invalid("moment table is empty"))?;
                let mut map = HashMap::new();
                for e in entries {
                    if e.m.len() != k {
                        return Err(invalid("moment table entries disagree on k"));
                    }
                    map.insert(MultiIndex::new(e.m)?, e.value);
                }
                BatchMomentProvider::ExplicitTable { k, entries: map }
            }
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<BatchMomentProvider> for BatchJson {
    fn from(p: BatchMomentProvider) -> Self {
        match p {
            BatchMomentProvider::Multinomial { m, p } => BatchJson::Multinomial { m, p },
            BatchMomentProvider::IndependentMarginals(moments) => BatchJson::Independent { moments },
            BatchMomentProvider::Constant(values) => BatchJson::Constant { values },
            BatchMomentProvider::ExplicitTable { entries, .. } => {
                let mut list: Vec<TableEntry> = entries
                    .into_iter()
                    .map(|(m, value)| TableEntry { m: m.0, value })
                    .collect();
                list.sort_by(|a, b| a.m.cmp(&b.m));
                BatchJson::Table { entries: list }
            }
        }
    }
}

impl BatchMomentProvider {
    pub fn unit(k: usize) -> Self {
        BatchMomentProvider::Constant(vec![1.0; k])
    }

    pub fn k(&self) -> usize {
        match self {
            BatchMomentProvider::ExplicitTable { k, .. } => *k,
            BatchMomentProvider::IndependentMarginals(m) => m.len(),
            BatchMomentProvider::Multinomial { p, .. } => p.len(),
            BatchMomentProvider::Constant(v) => v.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k() == 0 {
            return Err(invalid("batch dimension must be >= 1"));
        }
        match self {
            BatchMomentProvider::ExplicitTable { entries, .. } => {
                for (m, v) in entries {
                    if !v.is_finite() || *v < 0.0 {
                        return Err(invalid(format!("table moment at {m} must be finite, >= 0")));
                    }
                    if m.is_zero() && *v != 1.0 {
                        return Err(invalid("table moment at 0 must equal 1"));
                    }
                }
            }
            BatchMomentProvider::IndependentMarginals(ms) => {
                for (j, list) in ms.iter().enumerate() {
                    if list.first().copied() != Some(1.0) {
                        return Err(invalid(format!("marginal {j}: zeroth moment must be 1")));
                    }
                    if list.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(invalid(format!("marginal {j}: moments must be finite, >= 0")));
                    }
                }
            }
            BatchMomentProvider::Multinomial { m, p } => {
                if *m > 20 || p.len() > 6 {
                    return Err(invalid("multinomial enumeration supports M <= 20 and k <= 6"));
                }
                if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    return Err(invalid("multinomial probabilities must lie in [0, 1]"));
                }
                let s: f64 = p.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("multinomial probabilities sum to {s}")));
                }
            }
            BatchMomentProvider::Constant(v) => {
                if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(invalid("constant batch values must be finite, >= 0"));
                }
            }
        }
        Ok(())
    }

    /// `E[prod_j X_j^{m_j}]`.
    pub fn moment(&self, m: &MultiIndex) -> Result<f64> {
        if m.k() != self.k() {
            return Err(Error::Dimension(format!(
                "index {m} has k = {}, batch has k = {}",
                m.k(),
                self.k()
            )));
        }
        if m.is_zero() {
            return Ok(1.0);
        }
        match self {
            BatchMomentProvider::ExplicitTable { entries, .. } => entries
                .get(m)
                .copied()
                .ok_or_else(|| Error::Range(m.to_string())),
            BatchMomentProvider::IndependentMarginals(ms) => {
                let mut acc = 1.0;
                for (list, r) in ms.iter().zip(m.entries()) {
                    acc *= list
                        .get(*r as usize)
                        .copied()
                        .ok_or_else(|| Error::Range(m.to_string()))?;
                }
                Ok(acc)
            }
            BatchMomentProvider::Multinomial { m: total, p } => {
                Ok(multinomial_moment(*total, p, m.entries()))
            }
            BatchMomentProvider::Constant(v) => Ok(v
                .iter()
                .zip(m.entries())
                .map(|(x, r)| x.powi(*r as i32))
                .product()),
        }
    }

    /// True when the batch is almost surely the scalar 1 (k = 1, Var X = 0, E X = 1).
    pub fn is_unit_scalar(&self) -> bool {
        if self.k() != 1 {
            return false;
        }
        let m1 = self.moment(&MultiIndex(vec![1]));
        let m2 = self.moment(&MultiIndex(vec![2]));
        matches!((m1, m2), (Ok(a), Ok(b)) if a == 1.0 && b == 1.0)
    }

    pub fn is_samplable(&self) -> bool {
        matches!(
            self,
            BatchMomentProvider::Multinomial { .. } | BatchMomentProvider::Constant(_)
        )
    }

    /// One batch vector; `Scope` error for moment-only providers.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        match self {
            BatchMomentProvider::Constant(v) => {
                out.copy_from_slice(v);
                Ok(())
            }
            BatchMomentProvider::Multinomial { m, p } => {
                out.iter_mut().for_each(|x| *x = 0.0);
                for _ in 0..*m {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut class = p.len() - 1;
                    for (j, pj) in p.iter().enumerate() {
                        acc += pj;
                        if u < acc {
                            class = j;
                            break;
                        }
                    }
                    out[class] += 1.0;
                }
                Ok(())
            }
            _ => Err(Error::Scope(
                "batch law given by moments only cannot be simulated".into(),
            )),
        }
    }
}

/// Exact enumeration over all compositions of `total` into `p.len()` parts.
fn multinomial_moment(total: u32, p: &[f64], m: &[u32]) -> f64 {
    let k = p.len();
    let mut parts = vec![0u32; k];
    let mut acc = 0.0;
    let ln_fact_total = factorial(total).ln();
    fn rec(
        j: usize,
        left: u32,
        parts: &mut [u32],
        p: &[f64],
        m: &[u32],
        ln_fact_total: f64,
        acc: &mut f64,
    ) {
        let k = parts.len();
        if j == k - 1 {
            parts[j] = left;
            let mut pmf_ln = ln_fact_total;
            let mut value = 1.0;
            for i in 0..k {
                let x = parts[i];
                if x > 0 {
                    if p[i] == 0.0 {
                        return;
                    }
                    pmf_ln += x as f64 * p[i].ln();
                }
                pmf_ln -= factorial(x).ln();
                value *= (x as f64).powi(m[i] as i32);
            }
            *acc += pmf_ln.exp() * value;
            return;
        }
        for x in 0..=left {
            parts[j] = x;
            rec(j + 1, left - x, parts, p, m, ln_fact_total, acc);
        }
    }
    rec(0, total, &mut parts, p, m, ln_fact_total, &mut acc);
    acc
}

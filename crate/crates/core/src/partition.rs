//! Probability boundaries and the partition of `[0, 1]` they induce.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::loss::theoretical_loss;

/// Minimum gap between adjacent boundaries. Hinge locations divide by slope
/// differences that scale with these gaps.
pub const MIN_BOUNDARY_GAP: f64 = 1e-12;

/// Ordered probability boundaries `0 < π_1 < … < π_K < 1`, `K ≥ 1`.
///
/// Implicitly `π_0 = 0` and `π_{K+1} = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Boundaries {
    values: Vec<f64>,
}

impl Boundaries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("at least one boundary is required".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 || v >= 1.0 {
                return Err(Error::Config(format!(
                    "boundary {} = {v} is not in the open interval (0, 1)",
                    i + 1
                )));
            }
        }
        for (i, pair) in values.windows(2).enumerate() {
            if pair[1] - pair[0] <= MIN_BOUNDARY_GAP {
                return Err(Error::Config(format!(
                    "boundaries must be strictly increasing with gap > {MIN_BOUNDARY_GAP}: \
                     π_{} = {} and π_{} = {}",
                    i + 1,
                    pair[0],
                    i + 2,
                    pair[1]
                )));
            }
        }
        Ok(Self { values })
    }

    /// `K` equally spaced boundaries `k / (K + 1)`.
    pub fn equally_spaced(k: usize) -> Result<Self> {
        let denom = (k + 1) as f64;
        Self::new((1..=k).map(|i| i as f64 / denom).collect())
    }

    /// `K` boundaries `(k − ½) / K`, the midpoints of `K` equal cells of `[0, 1]`.
    ///
    /// Their spacing is exactly `1/K`, so the `2/K` average in the theoretical loss is a
    /// midpoint Riemann sum and converges to the squared-error limit at rate `O(1/K)`.
    pub fn midpoints(k: usize) -> Result<Self> {
        let k_f = k as f64;
        Self::new((1..=k).map(|i| (i as f64 - 0.5) / k_f).collect())
    }

    /// Boundaries `{π, 1 − π}` of the reject-option problem with rejection cost `π < 0.5`.
    pub fn rejection(cost: f64) -> Result<Self> {
        if !(cost > 0.0 && cost < 0.5) {
            return Err(Error::Config(format!(
                "rejection cost must lie in (0, 0.5), got {cost}"
            )));
        }
        Self::new(vec![cost, 1.0 - cost])
    }

    /// Parses a comma separated list such as `0.25,0.5,0.75` or `1/3,2/3`.
    pub fn parse_list(text: &str) -> Result<Self> {
        let values = text
            .split(',')
            .map(|tok| parse_fraction(tok.trim()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }

    /// Number of boundaries `K`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `π_k` for `k ∈ 0..=K+1` using the conventions `π_0 = 0`, `π_{K+1} = 1`.
    pub fn extended(&self, k: usize) -> f64 {
        match k {
            0 => 0.0,
            k if k <= self.values.len() => self.values[k - 1],
            _ => 1.0,
        }
    }

    /// Endpoints `(lo, hi)` of `ω_k`.
    pub fn interval_bounds(&self, k: IntervalIndex) -> (f64, f64) {
        (self.extended(k.get()), self.extended(k.get() + 1))
    }
}

impl TryFrom<Vec<f64>> for Boundaries {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<Boundaries> for Vec<f64> {
    fn from(b: Boundaries) -> Self {
        b.values
    }
}

impl fmt::Display for Boundaries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("}")
    }
}

fn parse_fraction(tok: &str) -> Result<f64> {
    let bad = || Error::Config(format!("cannot parse boundary value `{tok}`"));
    match tok.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            Ok(num / den)
        }
        None => tok.parse().map_err(|_| bad()),
    }
}

/// Index `k` of the interval `ω_k`: `ω_0 = [0, π_1]`, `ω_k = (π_k, π_{k+1}]` for `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalIndex(usize);

impl IntervalIndex {
    /// Checked constructor; `k` must not exceed `K`.
    pub fn new(k: usize, boundaries: &Boundaries) -> Result<Self> {
        if k > boundaries.len() {
            return Err(Error::Domain(format!(
                "interval index {k} out of range for K = {}",
                boundaries.len()
            )));
        }
        Ok(Self(k))
    }

    pub(crate) fn new_unchecked(k: usize) -> Self {
        Self(k)
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for IntervalIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ω_{}", self.0)
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} is not in [0, 1]")));
    }
    Ok(())
}

/// The interval containing `p`; this is the Bayes rule for the averaged weighted 0–1 loss.
///
/// A value equal to `π_k` falls in `ω_{k−1}`.
pub fn interval_index(p: f64, boundaries: &Boundaries) -> Result<IntervalIndex> {
    check_probability(p)?;
    // number of boundaries strictly below p
    let k = boundaries.values().partition_point(|&pi| pi < p);
    Ok(IntervalIndex(k))
}

/// Conditional expected theoretical loss `p·ℓ⁺(ω_k) + (1 − p)·ℓ⁻(ω_k)`.
pub fn conditional_risk(p: f64, k: IntervalIndex, boundaries: &Boundaries) -> f64 {
    p * theoretical_loss(Label::Pos, k, boundaries) + (1.0 - p) * theoretical_loss(Label::Neg, k, boundaries)
}

/// Minimises the conditional expected loss by enumerating every interval.
///
/// Ties go to the smallest index.
pub fn brute_force_bayes(p: f64, boundaries: &Boundaries) -> Result<IntervalIndex> {
    check_probability(p)?;
    let mut best = IntervalIndex(0);
    let mut best_risk = conditional_risk(p, best, boundaries);
    for k in 1..=boundaries.len() {
        let idx = IntervalIndex(k);
        let risk = conditional_risk(p, idx, boundaries);
        if risk < best_risk {
            best = idx;
            best_risk = risk;
        }
    }
    Ok(best)
}

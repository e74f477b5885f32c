//! The averaged weighted 0–1 loss over probability intervals, in interval and margin form.

use crate::data::Label;
use crate::error::{Error, Result};
use crate::partition::{Boundaries, IntervalIndex};

/// `(2/K) Σ_k ℓ_{π_k}(ω_j)` where `ℓ⁺_{π_k}` charges `1 − π_k` when `ω_j` lies at or below
/// `π_k` and `ℓ⁻_{π_k}` charges `π_k` when `ω_j` lies above `π_k`. Always in `[0, 2]`.
pub fn theoretical_loss(y: Label, k: IntervalIndex, boundaries: &Boundaries) -> f64 {
    let j = k.get();
    debug_assert!(j <= boundaries.len());
    let pis = boundaries.values();
    let sum: f64 = match y {
        // ω_j ≤ π_k iff π_{j+1} ≤ π_k iff j < k (1-based k)
        Label::Pos => pis[j.min(pis.len())..].iter().map(|&pi| 1.0 - pi).sum(),
        // ω_j > π_k iff π_j ≥ π_k iff k ≤ j
        Label::Neg => pis[..j.min(pis.len())].iter().sum(),
    };
    2.0 * sum / pis.len() as f64
}

/// Checks that `deltas` has one strictly increasing finite threshold per boundary.
pub fn validate_thresholds(deltas: &[f64], boundaries: &Boundaries) -> Result<()> {
    if deltas.len() != boundaries.len() {
        return Err(Error::Config(format!(
            "{} thresholds for {} boundaries",
            deltas.len(),
            boundaries.len()
        )));
    }
    if deltas.iter().any(|d| !d.is_finite()) {
        return Err(Error::Config("thresholds must be finite".into()));
    }
    if deltas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!(
            "thresholds must be strictly increasing, got {deltas:?}"
        )));
    }
    Ok(())
}

/// Interval selected by margin `f` under thresholds `δ`: `ω_k` when `f ∈ (δ_k, δ_{k+1}]`
/// with `δ_0 = −∞` and `δ_{K+1} = ∞`.
///
/// A margin equal to `δ_k` goes to `ω_{k−1}`, the same right-closed convention as
/// [`crate::interval_index`].
pub fn interval_from_margin(f: f64, deltas: &[f64]) -> IntervalIndex {
    IntervalIndex::new_unchecked(deltas.partition_point(|&d| d < f))
}

/// The theoretical loss written over the functional margin `y·f`.
///
/// For `y = +1` this is `(2/K) Σ (1 − π_k)·I{f ≤ δ_k}`; for `y = −1` it is
/// `(2/K) Σ π_k·I{−f < −δ_k}`.
pub fn margin_theoretical_loss(y: Label, f: f64, boundaries: &Boundaries, deltas: &[f64]) -> Result<f64> {
    validate_thresholds(deltas, boundaries)?;
    if f.is_nan() {
        return Err(Error::Domain("margin is NaN".into()));
    }
    let z = y.sign() * f;
    let sum: f64 = match y {
        Label::Pos => boundaries
            .values()
            .iter()
            .zip(deltas)
            .filter(|&(_, &d)| z <= d)
            .map(|(&pi, _)| 1.0 - pi)
            .sum(),
        Label::Neg => boundaries
            .values()
            .iter()
            .zip(deltas)
            .filter(|&(_, &d)| z < -d)
            .map(|(&pi, _)| pi)
            .sum(),
    };
    Ok(2.0 * sum / boundaries.len() as f64)
}

/// `(I{y = +1} − g)²`, the limit of the theoretical loss as the boundaries become dense.
pub fn soft_limit_loss(y: Label, g: f64) -> Result<f64> {
    if !g.is_finite() || !(0.0..=1.0).contains(&g) {
        return Err(Error::Domain(format!("probability estimate {g} is not in [0, 1]")));
    }
    let target = if y.is_pos() { 1.0 } else { 0.0 };
    Ok((target - g) * (target - g))
}

/// Reject-option loss: 1 for a wrong committed label, `cost` for abstaining.
pub fn rejection_loss(y: Label, prediction: Option<Label>, cost: f64) -> f64 {
    match prediction {
        None => cost,
        Some(p) if p == y => 0.0,
        Some(_) => 1.0,
    }
}

/// Weighted misclassification loss: `1 − w` for a missed positive, `w` for a missed negative.
pub fn weighted_loss(y: Label, prediction: Label, weight: f64) -> f64 {
    match (y, prediction) {
        (Label::Pos, Label::Neg) => 1.0 - weight,
        (Label::Neg, Label::Pos) => weight,
        _ => 0.0,
    }
}

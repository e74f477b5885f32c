//! Piecewise linear surrogate losses.
//!
//! For each class the loss is the upper envelope of zero and `K` affine segments,
//! `φ^Y(z) = max{0, A^Y(π_1) + B^Y(π_1)·z, …, A^Y(π_K) + B^Y(π_K)·z}`, where segment `k`
//! encodes boundary `π_k` through its slope pair: `B⁻(π_k) / (B⁻(π_k) + B⁺(π_k)) = π_k`.
//!
//! Hinge points are reported on the margin axis `f` (so that the negative-class loss is
//! read at `z = −f`):
//!
//! * `H_0 = A⁻(π_1) / B⁻(π_1)`, where `φ⁻(−f)` reaches zero;
//! * `H_j = H⁺(π_j, π_{j+1})` for `0 < j < K`, the kinks of `φ⁺`;
//! * `H_K = −A⁺(π_K) / B⁺(π_K)`, where `φ⁺(f)` reaches zero.
//!
//! The conditional surrogate risk `p·φ⁺(f) + (1 − p)·φ⁻(−f)` is minimised at `H_k` for
//! `p ∈ (π_k, π_{k+1})`, so each threshold `δ_k` must sit strictly inside `(H_{k−1}, H_k)`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::partition::Boundaries;

/// Absolute tolerance on slope-ratio and derivative-ratio residuals.
pub const CONSISTENCY_TOL: f64 = 1e-9;

/// Intercept and slope of the `π_k`-consistent segments for both classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub a_pos: f64,
    pub b_pos: f64,
    pub a_neg: f64,
    pub b_neg: f64,
}

/// Tangent lines of `log(1 + e^{−z})` at `±log(π / (1 − π))`:
/// `A⁺(π) = A⁻(1 − π) = −π log π − (1 − π) log(1 − π)` and `B⁺(π) = B⁻(1 − π) = −(1 − π)`.
pub fn logistic_params(pi: f64) -> Result<SegmentParams> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::Domain(format!(
            "logistic tangent parameters need π in (0, 1), got {pi}"
        )));
    }
    let entropy = binary_entropy(pi);
    Ok(SegmentParams {
        a_pos: entropy,
        b_pos: -(1.0 - pi),
        a_neg: entropy,
        b_neg: -pi,
    })
}

// symmetric in (π, 1 − π) bit for bit whenever 1 − (1 − π) == π
fn binary_entropy(pi: f64) -> f64 {
    let q = 1.0 - pi;
    -(pi * pi.ln()) - q * q.ln()
}

/// Numerically stable `log(1 + e^{−z})`.
pub fn logistic_loss(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// How the consistency thresholds `δ` are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `δ_k = log(π_k / (1 − π_k))`, the tangent points of the logistic loss.
    LogisticTangent,
    /// Midpoint of `(H_{k−1}, H_k)`, which maximises the smallest hinge distance.
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    intercept: f64,
    slope: f64,
}

impl Segment {
    fn at(self, z: f64) -> f64 {
        self.intercept + self.slope * z
    }
}

/// A piecewise linear surrogate pair `(φ⁺, φ⁻)` with its thresholds and hinge points.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSpec {
    boundaries: Boundaries,
    pos: Vec<Segment>,
    neg: Vec<Segment>,
    deltas: Vec<f64>,
    hinges: Vec<f64>,
}

impl SurrogateSpec {
    /// The logistic-derived surrogate with tangent-point thresholds.
    pub fn logistic(boundaries: &Boundaries) -> Result<Self> {
        let params = boundaries
            .values()
            .iter()
            .map(|&pi| logistic_params(pi))
            .collect::<Result<Vec<_>>>()?;
        build_surrogate(boundaries, &params, ThresholdRule::LogisticTangent)
    }

    /// Assembles a spec without validating it. Hinges are computed from the segments;
    /// `deltas` are taken as given. Use [`check_consistency`] to inspect the result.
    pub fn from_parts_unchecked(boundaries: &Boundaries, params: &[SegmentParams], deltas: Vec<f64>) -> Result<Self> {
        let k = boundaries.len();
        if params.len() != k || deltas.len() != k {
            return Err(Error::Config(format!(
                "expected {k} parameter tuples and thresholds, got {} and {}",
                params.len(),
                deltas.len()
            )));
        }
        let pos: Vec<Segment> = params
            .iter()
            .map(|p| Segment {
                intercept: p.a_pos,
                slope: p.b_pos,
            })
            .collect();
        let neg: Vec<Segment> = params
            .iter()
            .map(|p| Segment {
                intercept: p.a_neg,
                slope: p.b_neg,
            })
            .collect();
        let hinges = margin_hinges(&pos, &neg);
        Ok(Self {
            boundaries: boundaries.clone(),
            pos,
            neg,
            deltas,
            hinges,
        })
    }

    pub fn boundaries(&self) -> &Boundaries {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// `H_0 < H_1 < … < H_K` on the margin axis.
    pub fn hinges(&self) -> &[f64] {
        &self.hinges
    }

    pub fn params(&self) -> Vec<SegmentParams> {
        self.pos
            .iter()
            .zip(&self.neg)
            .map(|(p, n)| SegmentParams {
                a_pos: p.intercept,
                b_pos: p.slope,
                a_neg: n.intercept,
                b_neg: n.slope,
            })
            .collect()
    }

    fn segments(&self, y: Label) -> &[Segment] {
        match y {
            Label::Pos => &self.pos,
            Label::Neg => &self.neg,
        }
    }

    /// `φ^y(z)`.
    pub fn eval(&self, y: Label, z: f64) -> f64 {
        self.segments(y).iter().fold(0.0f64, |acc, s| acc.max(s.at(z)))
    }

    /// Slope of the active piece of `φ^y` at `z`, `0` on the flat branch.
    ///
    /// Where pieces tie, the flattest (largest) slope wins; the zero branch counts as
    /// slope `0`. For `φ⁺` this is the tied segment with the larger boundary index.
    pub fn subgradient(&self, y: Label, z: f64) -> f64 {
        let mut best_val = 0.0f64;
        let mut best_slope = 0.0f64;
        for s in self.segments(y) {
            let v = s.at(z);
            if v > best_val || (v == best_val && s.slope > best_slope) {
                best_val = v;
                best_slope = s.slope;
            }
        }
        best_slope
    }

    /// Left and right derivatives of `φ^y` at `z`.
    pub fn one_sided_slopes(&self, y: Label, z: f64) -> (f64, f64) {
        let value = self.eval(y, z);
        let tol = 1e-12 * (1.0 + value.abs());
        let mut left = f64::INFINITY;
        let mut right = f64::NEG_INFINITY;
        let pieces = self
            .segments(y)
            .iter()
            .map(|s| (s.at(z), s.slope))
            .chain(std::iter::once((0.0, 0.0)));
        for (v, slope) in pieces {
            if (value - v).abs() <= tol {
                left = left.min(slope);
                right = right.max(slope);
            }
        }
        (left, right)
    }

    /// Derivative of `φ^y` at `z`, or `None` at a kink.
    pub fn derivative(&self, y: Label, z: f64) -> Option<f64> {
        let (l, r) = self.one_sided_slopes(y, z);
        (l == r).then_some(l)
    }

    /// Conditional surrogate risk `p·φ⁺(f) + (1 − p)·φ⁻(−f)`.
    pub fn conditional_risk(&self, p: f64, f: f64) -> f64 {
        p * self.eval(Label::Pos, f) + (1.0 - p) * self.eval(Label::Neg, -f)
    }

    pub fn to_document(&self) -> SurrogateDocument {
        SurrogateDocument {
            pi: self.boundaries.values().to_vec(),
            a_pos: self.pos.iter().map(|s| s.intercept).collect(),
            b_pos: self.pos.iter().map(|s| s.slope).collect(),
            a_neg: self.neg.iter().map(|s| s.intercept).collect(),
            b_neg: self.neg.iter().map(|s| s.slope).collect(),
            delta: self.deltas.clone(),
            hinges: self.hinges.clone(),
        }
    }

    /// Rebuilds and validates a spec from its JSON form. Hinges are recomputed.
    pub fn from_document(doc: &SurrogateDocument) -> Result<Self> {
        let spec = Self::from_document_unchecked(doc)?;
        let report = check_consistency(&spec);
        if !report.is_consistent() {
            return Err(Error::Inconsistent(Box::new(report)));
        }
        Ok(spec)
    }

    /// Like [`SurrogateSpec::from_document`] but skips the consistency check.
    pub fn from_document_unchecked(doc: &SurrogateDocument) -> Result<Self> {
        let boundaries = Boundaries::new(doc.pi.clone())?;
        let k = boundaries.len();
        if [doc.a_pos.len(), doc.b_pos.len(), doc.a_neg.len(), doc.b_neg.len()]
            .iter()
            .any(|&l| l != k)
        {
            return Err(Error::Data(format!(
                "surrogate document must carry {k} values per segment field"
            )));
        }
        let params: Vec<SegmentParams> = (0..k)
            .map(|i| SegmentParams {
                a_pos: doc.a_pos[i],
                b_pos: doc.b_pos[i],
                a_neg: doc.a_neg[i],
                b_neg: doc.b_neg[i],
            })
            .collect();
        Self::from_parts_unchecked(&boundaries, &params, doc.delta.clone())
    }
}

/// JSON form of a [`SurrogateSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDocument {
    pub pi: Vec<f64>,
    #[serde(rename = "A_pos")]
    pub a_pos: Vec<f64>,
    #[serde(rename = "B_pos")]
    pub b_pos: Vec<f64>,
    #[serde(rename = "A_neg")]
    pub a_neg: Vec<f64>,
    #[serde(rename = "B_neg")]
    pub b_neg: Vec<f64>,
    pub delta: Vec<f64>,
    /// Derived from the segments; ignored when reading.
    #[serde(default)]
    pub hinges: Vec<f64>,
}

/// `H^Y(π, π′) = (A^Y(π) − A^Y(π′)) / (B^Y(π′) − B^Y(π))`.
fn hinge(lo: Segment, hi: Segment) -> f64 {
    (lo.intercept - hi.intercept) / (hi.slope - lo.slope)
}

fn margin_hinges(pos: &[Segment], neg: &[Segment]) -> Vec<f64> {
    let k = pos.len();
    let mut hinges = Vec::with_capacity(k + 1);
    hinges.push(neg[0].intercept / neg[0].slope);
    hinges.extend(pos.windows(2).map(|w| hinge(w[0], w[1])));
    hinges.push(-pos[k - 1].intercept / pos[k - 1].slope);
    hinges
}

/// Assembles a surrogate from per-boundary parameters and validates it.
pub fn build_surrogate(
    boundaries: &Boundaries,
    params: &[SegmentParams],
    rule: ThresholdRule,
) -> Result<SurrogateSpec> {
    if params.len() != boundaries.len() {
        return Err(Error::Config(format!(
            "expected {} parameter tuples, got {}",
            boundaries.len(),
            params.len()
        )));
    }
    if let Some(i) = params.iter().position(|p| !(p.b_pos < 0.0 && p.b_neg < 0.0)) {
        return Err(Error::Config(format!(
            "segment slopes for π_{} must be strictly negative",
            i + 1
        )));
    }
    let mut spec = SurrogateSpec::from_parts_unchecked(boundaries, params, vec![0.0; boundaries.len()])?;
    spec.deltas = match rule {
        ThresholdRule::LogisticTangent => boundaries.values().iter().map(|&pi| (pi / (1.0 - pi)).ln()).collect(),
        ThresholdRule::Midpoint => spec.hinges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
    };
    let report = check_consistency(&spec);
    if !report.is_consistent() {
        return Err(Error::Inconsistent(Box::new(report)));
    }
    Ok(spec)
}

/// Outcome of checking the minimal-consistency conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Slopes negative, `B⁺` non-decreasing and `B⁻` non-increasing in `k`.
    pub c1_ok: bool,
    /// Hinges aligned across classes, strictly ordered, each `δ_k` inside `(H_{k−1}, H_k)`.
    pub c2_ok: bool,
    /// Slope ratios equal `π_k` and the derivative-ratio residuals vanish at `δ_k`.
    pub c3_ok: bool,
    /// `φ⁻′(−δ_k) / (φ⁻′(−δ_k) + φ⁺′(δ_k)) − π_k`; NaN where a derivative does not exist.
    pub threshold_residuals: Vec<f64>,
    /// 1-based boundary indices involved in a violation.
    pub violating_indices: Vec<usize>,
    pub messages: Vec<String>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.c1_ok && self.c2_ok && self.c3_ok
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "C1 {}, C2 {}, C3 {}",
            flag(self.c1_ok),
            flag(self.c2_ok),
            flag(self.c3_ok)
        );
        for m in &self.messages {
            let _ = write!(s, "; {m}");
        }
        s
    }
}

fn flag(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "violated"
    }
}

/// Verifies the slope-ordering, hinge-alignment and slope-ratio conditions, and evaluates
/// the derivative ratio directly at every threshold.
pub fn check_consistency(spec: &SurrogateSpec) -> ConsistencyReport {
    let k = spec.len();
    let pis = spec.boundaries.values();
    let mut bad = BTreeSet::new();
    let mut messages = Vec::new();

    // C1
    let mut c1 = true;
    for i in 0..k {
        if !(spec.pos[i].slope < 0.0 && spec.neg[i].slope < 0.0) {
            c1 = false;
            bad.insert(i + 1);
            messages.push(format!("segment {} has a non-negative slope", i + 1));
        }
    }
    for i in 1..k {
        if spec.pos[i].slope < spec.pos[i - 1].slope {
            c1 = false;
            bad.extend([i, i + 1]);
            messages.push(format!("B⁺ decreases between π_{} and π_{}", i, i + 1));
        }
        if spec.neg[i].slope > spec.neg[i - 1].slope {
            c1 = false;
            bad.extend([i, i + 1]);
            messages.push(format!("B⁻ increases between π_{} and π_{}", i, i + 1));
        }
    }

    // C2
    let mut c2 = true;
    for i in 1..k {
        let hp = hinge(spec.pos[i - 1], spec.pos[i]);
        let hn = hinge(spec.neg[i - 1], spec.neg[i]);
        if !((hp + hn).abs() <= CONSISTENCY_TOL) {
            c2 = false;
            bad.extend([i, i + 1]);
            messages.push(format!(
                "hinges between π_{} and π_{} are misaligned: H⁺ = {hp}, −H⁻ = {}",
                i,
                i + 1,
                -hn
            ));
        }
    }
    let h = &spec.hinges;
    for j in 0..k {
        if !(h[j].is_finite() && h[j + 1].is_finite() && h[j] < h[j + 1]) {
            c2 = false;
            bad.insert((j + 1).min(k));
            messages.push(format!(
                "hinges H_{j} = {} and H_{} = {} are not strictly ordered",
                h[j],
                j + 1,
                h[j + 1]
            ));
        }
    }
    for (i, &d) in spec.deltas.iter().enumerate() {
        if !(d > h[i] && d < h[i + 1]) {
            c2 = false;
            bad.insert(i + 1);
            messages.push(format!("δ_{} = {d} lies outside ({}, {})", i + 1, h[i], h[i + 1]));
        }
    }

    // C3 and the derivative ratio at δ
    let mut c3 = true;
    let mut residuals = Vec::with_capacity(k);
    for (i, &pi) in pis.iter().enumerate() {
        let ratio = spec.neg[i].slope / (spec.neg[i].slope + spec.pos[i].slope);
        if !((ratio - pi).abs() <= CONSISTENCY_TOL) {
            c3 = false;
            bad.insert(i + 1);
            messages.push(format!("slope ratio for π_{} is {ratio}, expected {pi}", i + 1));
        }
        let d = spec.deltas[i];
        let residual = match (spec.derivative(Label::Neg, -d), spec.derivative(Label::Pos, d)) {
            (Some(dn), Some(dp)) if dn < 0.0 && dp < 0.0 => dn / (dn + dp) - pi,
            _ => f64::NAN,
        };
        if !(residual.abs() <= CONSISTENCY_TOL) {
            c3 = false;
            bad.insert(i + 1);
            messages.push(format!(
                "derivative ratio at δ_{} misses π_{} (residual {residual})",
                i + 1,
                i + 1
            ));
        }
        residuals.push(residual);
    }

    ConsistencyReport {
        c1_ok: c1,
        c2_ok: c2,
        c3_ok: c3,
        threshold_residuals: residuals,
        violating_indices: bad.into_iter().collect(),
        messages,
    }
}

/// Constant `C = max_{k,j} −π_k / (B⁻(π_k)·|δ_k − H_j|)` of the linear excess-risk bound.
pub fn risk_constant(spec: &SurrogateSpec) -> Result<f64> {
    let mut c = 0.0f64;
    for (i, (&pi, &d)) in spec.boundaries.values().iter().zip(&spec.deltas).enumerate() {
        let b_neg = spec.neg[i].slope;
        for (j, &h) in spec.hinges.iter().enumerate() {
            let dist = (d - h).abs();
            if dist == 0.0 {
                return Err(Error::Degenerate(format!("δ_{} coincides with hinge H_{j}", i + 1)));
            }
            c = c.max(-pi / (b_neg * dist));
        }
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Degenerate(format!("risk constant evaluates to {c}")));
    }
    Ok(c)
}

//! Simulation settings with piecewise-constant `p(x)` and their Bayes risks.
//!
//! Family 1 samples uniformly from `[−8, 8] × [−1, 1]^{p−1}`, family 2 from
//! `[−4, 4] × [−1, 1]^{p−1}`. The conditional probability depends only on the first
//! coordinate before rotation; one random rotation is then applied to every feature
//! vector of the dataset.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_rational::Ratio;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Label, LabeledSample};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::loss::theoretical_loss;
use crate::partition::{brute_force_bayes, conditional_risk, Boundaries, IntervalIndex};
use crate::rng::{Purpose, SeedStream};

type Q = Ratio<i64>;

/// One of the six settings `1.1`–`1.3`, `2.1`–`2.3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SettingId {
    family: u8,
    variant: u8,
}

impl SettingId {
    pub const ALL: [SettingId; 6] = [
        SettingId { family: 1, variant: 1 },
        SettingId { family: 1, variant: 2 },
        SettingId { family: 1, variant: 3 },
        SettingId { family: 2, variant: 1 },
        SettingId { family: 2, variant: 2 },
        SettingId { family: 2, variant: 3 },
    ];

    pub fn new(family: u8, variant: u8) -> Result<Self> {
        if !(1..=2).contains(&family) || !(1..=3).contains(&variant) {
            return Err(Error::Config(format!("unknown simulation setting {family}.{variant}")));
        }
        Ok(Self { family, variant })
    }

    pub fn family(self) -> u8 {
        self.family
    }

    pub fn variant(self) -> u8 {
        self.variant
    }

    /// Half-length of the first coordinate's support.
    pub fn half_width(self) -> i64 {
        if self.family == 1 {
            8
        } else {
            4
        }
    }

    /// Piecewise-constant `p(x₁)` as bands `[lo, hi)`; the last band is closed.
    pub fn bands(self) -> Vec<Band> {
        let q = |n: i64, d: i64| Q::new(n, d);
        let table: Vec<(Q, Q)> = match (self.family, self.variant) {
            (1, 1) => vec![(q(-8, 1), q(1, 4)), (q(0, 1), q(3, 4))],
            (1, 2) => vec![(q(-8, 1), q(1, 6)), (q(-8, 3), q(3, 6)), (q(8, 3), q(5, 6))],
            (1, 3) => vec![
                (q(-8, 1), q(1, 8)),
                (q(-4, 1), q(3, 8)),
                (q(0, 1), q(5, 8)),
                (q(4, 1), q(7, 8)),
            ],
            (2, 1) => vec![(q(-4, 1), q(1, 6)), (q(-3, 5), q(3, 6)), (q(3, 5), q(5, 6))],
            (2, 2) => vec![(q(-4, 1), q(1, 6)), (q(-2, 1), q(3, 6)), (q(0, 1), q(5, 6))],
            (2, 3) => vec![
                (q(-4, 1), q(1, 8)),
                (q(-4, 5), q(3, 8)),
                (q(0, 1), q(5, 8)),
                (q(4, 5), q(7, 8)),
            ],
            _ => unreachable!("validated at construction"),
        };
        let end = Q::from_integer(self.half_width());
        (0..table.len())
            .map(|i| Band {
                lo: table[i].0,
                hi: table.get(i + 1).map_or(end, |next| next.0),
                prob: table[i].1,
            })
            .collect()
    }

    /// Boundaries the piecewise linear classifier targets in this setting.
    pub fn designated_boundaries(self) -> Boundaries {
        let values = match (self.family, self.variant) {
            (1, 1) => vec![0.5],
            (1, 2) | (2, 1) | (2, 2) => vec![1.0 / 3.0, 2.0 / 3.0],
            _ => vec![0.25, 0.5, 0.75],
        };
        Boundaries::new(values).expect("static boundaries are valid")
    }

    /// `p(x)` evaluated on the unrotated first coordinate.
    pub fn true_prob(self, x1: f64) -> f64 {
        let bands = self.bands();
        let last = bands.len() - 1;
        for (i, band) in bands.iter().enumerate() {
            if x1 < to_f64(band.hi) || i == last {
                return to_f64(band.prob);
            }
        }
        unreachable!()
    }
}

impl fmt::Display for SettingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.family, self.variant)
    }
}

impl FromStr for SettingId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown simulation setting `{s}`"));
        let (a, b) = s.trim().split_once('.').ok_or_else(bad)?;
        Self::new(a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?)
    }
}

impl TryFrom<String> for SettingId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SettingId> for String {
    fn from(s: SettingId) -> String {
        s.to_string()
    }
}

/// `p(x) = prob` for `x₁ ∈ [lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Band {
    pub lo: Ratio<i64>,
    pub hi: Ratio<i64>,
    pub prob: Ratio<i64>,
}

impl Band {
    /// Probability mass of the band under the uniform design.
    pub fn mass(&self, half_width: i64) -> Ratio<i64> {
        (self.hi - self.lo) / Q::from_integer(2 * half_width)
    }
}

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// A `p × p` orthogonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    matrix: DMatrix<f64>,
}

impl Rotation {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `Q x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        (0..dim)
            .map(|i| (0..dim).map(|j| self.matrix[(i, j)] * x[j]).sum())
            .collect()
    }
}

/// Orthogonal factor of a Gaussian matrix, with column signs chosen so the triangular
/// factor has a positive diagonal.
pub fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Rotation> {
    if dim == 0 {
        return Err(Error::Domain("rotation dimension must be at least 1".into()));
    }
    let draws: Vec<f64> = (0..dim * dim).map(|_| rng.sample(StandardNormal)).collect();
    let qr = DMatrix::from_row_slice(dim, dim, &draws).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(Rotation { matrix: q })
}

/// Draws labelled observations from one setting under a fixed rotation.
#[derive(Debug, Clone)]
pub struct Simulator {
    setting: SettingId,
    rotation: Rotation,
}

impl Simulator {
    pub fn new(setting: SettingId, rotation: Rotation) -> Self {
        Self { setting, rotation }
    }

    /// Draws the rotation from `stream`'s rotation generator.
    pub fn from_stream(setting: SettingId, dim: usize, stream: SeedStream) -> Result<Self> {
        Ok(Self::new(
            setting,
            random_rotation(dim, &mut stream.rng(Purpose::Rotation))?,
        ))
    }

    pub fn unrotated(setting: SettingId, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        Ok(Self::new(setting, Rotation::identity(dim)))
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LabeledSample> {
        if n == 0 {
            return Err(Error::Config("sample size must be at least 1".into()));
        }
        let dim = self.rotation.dim();
        let half = self.setting.half_width() as f64;
        let mut features = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        let mut probs = Vec::with_capacity(n);
        let mut raw = vec![0.0; dim];
        for _ in 0..n {
            raw[0] = half * (2.0 * rng.random::<f64>() - 1.0);
            for v in raw.iter_mut().skip(1) {
                *v = 2.0 * rng.random::<f64>() - 1.0;
            }
            let p = self.setting.true_prob(raw[0]);
            let y = if rng.random::<f64>() < p {
                Label::Pos
            } else {
                Label::Neg
            };
            features.extend(self.rotation.apply(&raw));
            labels.push(y);
            probs.push(p);
        }
        LabeledSample::new(features, dim, labels)?.with_true_probs(probs)
    }
}

/// `n` rotated observations from `setting`; rotation and sample draws come from
/// separate generators of `stream`.
pub fn generate_setting(setting: SettingId, n: usize, dim: usize, stream: SeedStream) -> Result<LabeledSample> {
    Simulator::from_stream(setting, dim, stream)?.sample(n, &mut stream.rng(Purpose::Sample))
}

/// Exact Bayes risk `E[min_k E(ℓ | x)]`, summed band by band.
pub fn bayes_risk(setting: SettingId, boundaries: &Boundaries) -> f64 {
    let half = setting.half_width();
    setting
        .bands()
        .iter()
        .map(|band| {
            let p = to_f64(band.prob);
            let best = (0..=boundaries.len())
                .map(|k| conditional_risk(p, IntervalIndex::new_unchecked(k), boundaries))
                .fold(f64::INFINITY, f64::min);
            to_f64(band.mass(half)) * best
        })
        .sum()
}

const MC_CHUNK: usize = 1 << 16;

/// Monte-Carlo estimate of the Bayes risk: the mean theoretical loss of the brute-force
/// Bayes decision over `n_mc` simulated `(x₁, y)` draws.
///
/// Draws are split into fixed chunks with their own substreams, so the estimate does not
/// depend on the execution mode.
pub fn monte_carlo_bayes_risk(
    setting: SettingId,
    boundaries: &Boundaries,
    n_mc: usize,
    stream: SeedStream,
    exec: Execution,
) -> Result<f64> {
    if n_mc == 0 {
        return Err(Error::Config("Monte-Carlo sample size must be at least 1".into()));
    }
    let half = setting.half_width() as f64;
    let chunks = n_mc.div_ceil(MC_CHUNK);
    let partial: Vec<Result<f64>> = exec.map_range(chunks, |c| {
        let mut rng = stream.substream(c as u64).rng(Purpose::MonteCarlo);
        let count = MC_CHUNK.min(n_mc - c * MC_CHUNK);
        let mut sum = 0.0;
        for _ in 0..count {
            let x1 = half * (2.0 * rng.random::<f64>() - 1.0);
            let p = setting.true_prob(x1);
            let y = if rng.random::<f64>() < p {
                Label::Pos
            } else {
                Label::Neg
            };
            sum += theoretical_loss(y, brute_force_bayes(p, boundaries)?, boundaries);
        }
        Ok(sum)
    });
    let total = partial.into_iter().sum::<Result<f64>>()?;
    Ok(total / n_mc as f64)
}

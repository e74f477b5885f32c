use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class label, stored as `−1` / `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }

    pub fn is_pos(self) -> bool {
        self == Label::Pos
    }
}

impl TryFrom<i8> for Label {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Label::Pos),
            -1 => Ok(Label::Neg),
            other => Err(Error::Domain(format!("label must be -1 or +1, got {other}"))),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        l.as_i8()
    }
}

/// `n` labelled observations with `p` features each, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<Label>,
    true_probs: Option<Vec<f64>>,
}

impl LabeledSample {
    /// Builds a sample from row-major features. `dim` must be at least 1.
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<Label>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("feature dimension must be at least 1".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::Config(format!(
                "feature buffer of length {} does not match {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite feature at row {}, column {}",
                pos / dim + 1,
                pos % dim + 1
            )));
        }
        Ok(Self {
            features,
            dim,
            labels,
            true_probs: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<Label>) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Config("rows have differing lengths".into()));
        }
        Self::new(rows.concat(), dim, labels)
    }

    /// Attaches known conditional probabilities `p(x_i)`.
    pub fn with_true_probs(mut self, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != self.labels.len() {
            return Err(Error::Config(format!(
                "{} true probabilities for {} rows",
                probs.len(),
                self.labels.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(format!("true probability {p} is not in [0, 1]")));
        }
        self.true_probs = Some(probs);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.dim)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn true_probs(&self) -> Option<&[f64]> {
        self.true_probs.as_deref()
    }
}

//! Projected sub-gradient descent for the penalized linear objective
//! `(1/n) Σ φ^{y_i}(y_i(⟨w, x_i⟩ + b)) + (λ/2)‖w‖²`.
//!
//! Iteration `m` uses the step `η_m = 1/(λm)`:
//!
//! ```text
//! w ← w − η_m (λw + (1/n) Σ B_i y_i x_i)
//! b ← b − η_m (1/n) Σ B_i y_i
//! [w, b] ← min{1, λ^{−1/2} / ‖[w, b]‖} · [w, b]
//! ```
//!
//! where `B_i` is a subgradient of the loss at the current functional margin. Updates are
//! full-batch and deterministic. The intercept is unpenalized but projected jointly with `w`.

use serde::{Deserialize, Serialize};

use crate::data::{Label, LabeledSample};
use crate::error::{Error, Result};
use crate::loss::interval_from_margin;
use crate::partition::IntervalIndex;
use crate::surrogate::{logistic_loss, SurrogateSpec};

/// Margin function `f(x) = ⟨w, x⟩ + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: vec![0.0; dim],
            b: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// `‖[w, b]‖₂`.
    pub fn norm(&self) -> f64 {
        (self.w.iter().map(|v| v * v).sum::<f64>() + self.b * self.b).sqrt()
    }

    #[inline]
    fn margin_unchecked(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b
    }
}

/// `⟨w, x⟩ + b`.
pub fn predict_margin(model: &LinearModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::Config(format!(
            "feature vector has dimension {}, model expects {}",
            x.len(),
            model.dim()
        )));
    }
    Ok(model.margin_unchecked(x))
}

/// Interval predicted from a margin value through the surrogate's thresholds.
pub fn predict_interval(f: f64, spec: &SurrogateSpec) -> IntervalIndex {
    interval_from_margin(f, spec.deltas())
}

/// `1 / (1 + e^{−f})`.
pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// Stopping rule and output options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once the relative objective change between two checks drops below this.
    pub rel_tolerance: f64,
    /// Iterations between objective evaluations.
    pub check_interval: usize,
    /// Report the running average of the iterates instead of the last one.
    pub averaging: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            rel_tolerance: 1e-8,
            check_interval: 100,
            averaging: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.rel_tolerance > 0.0) {
            return Err(Error::Config("rel_tolerance must be positive".into()));
        }
        if self.check_interval == 0 {
            return Err(Error::Config("check_interval must be at least 1".into()));
        }
        Ok(())
    }
}

/// Loss driving a fit.
#[derive(Debug, Clone, Copy)]
pub enum MarginLoss<'a> {
    Piecewise(&'a SurrogateSpec),
    /// `log(1 + e^{−z})`.
    Logistic,
}

impl MarginLoss<'_> {
    #[inline]
    pub fn value(&self, y: Label, z: f64) -> f64 {
        match self {
            MarginLoss::Piecewise(spec) => spec.eval(y, z),
            MarginLoss::Logistic => logistic_loss(z),
        }
    }

    #[inline]
    pub fn slope(&self, y: Label, z: f64) -> f64 {
        match self {
            MarginLoss::Piecewise(spec) => spec.subgradient(y, z),
            MarginLoss::Logistic => -sigmoid(-z),
        }
    }
}

/// Result of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub model: LinearModel,
    /// Objective at `model`.
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out before the stopping rule fired.
    pub converged: bool,
}

fn check_inputs(data: &LabeledSample, model_dim: usize, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "penalty λ must be positive and finite, got {lambda}"
        )));
    }
    if data.dim() != model_dim {
        return Err(Error::Config(format!(
            "data has dimension {}, model has {}",
            data.dim(),
            model_dim
        )));
    }
    Ok(())
}

/// Penalized empirical risk under an arbitrary margin loss.
pub fn loss_objective(data: &LabeledSample, model: &LinearModel, loss: MarginLoss<'_>, lambda: f64) -> Result<f64> {
    check_inputs(data, model.dim(), lambda)?;
    if data.is_empty() {
        return Err(Error::Config("objective needs at least one observation".into()));
    }
    Ok(objective_unchecked(data, model, loss, lambda))
}

fn objective_unchecked(data: &LabeledSample, model: &LinearModel, loss: MarginLoss<'_>, lambda: f64) -> f64 {
    let risk: f64 = data
        .rows()
        .zip(data.labels())
        .map(|(x, &y)| loss.value(y, y.sign() * model.margin_unchecked(x)))
        .sum::<f64>()
        / data.len() as f64;
    let penalty = 0.5 * lambda * model.w.iter().map(|v| v * v).sum::<f64>();
    risk + penalty
}

/// Penalized empirical surrogate risk; the intercept is not penalized.
pub fn objective(data: &LabeledSample, model: &LinearModel, spec: &SurrogateSpec, lambda: f64) -> Result<f64> {
    loss_objective(data, model, MarginLoss::Piecewise(spec), lambda)
}

/// Penalized mean logistic loss.
pub fn logistic_objective(data: &LabeledSample, model: &LinearModel, lambda: f64) -> Result<f64> {
    loss_objective(data, model, MarginLoss::Logistic, lambda)
}

/// Fits the piecewise linear surrogate objective.
pub fn fit_piecewise(data: &LabeledSample, spec: &SurrogateSpec, lambda: f64, config: &SolverConfig) -> Result<Fit> {
    fit_observed(data, MarginLoss::Piecewise(spec), lambda, config, |_, _| {})
}

/// Fits the logistic baseline with the same iteration, projection and stopping rule.
pub fn fit_logistic(data: &LabeledSample, lambda: f64, config: &SolverConfig) -> Result<Fit> {
    fit_observed(data, MarginLoss::Logistic, lambda, config, |_, _| {})
}

/// Runs the solver, calling `observer(m, iterate)` with the raw (projected, unaveraged)
/// iterate after every iteration.
pub fn fit_observed<F>(
    data: &LabeledSample,
    loss: MarginLoss<'_>,
    lambda: f64,
    config: &SolverConfig,
    mut observer: F,
) -> Result<Fit>
where
    F: FnMut(usize, &LinearModel),
{
    check_inputs(data, data.dim(), lambda)?;
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Config("cannot fit an empty sample".into()));
    }
    let n = data.len() as f64;
    let dim = data.dim();
    let radius = lambda.sqrt().recip();

    let mut current = LinearModel::zeros(dim);
    let mut average = LinearModel::zeros(dim);
    let mut grad_w = vec![0.0; dim];
    let mut previous: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;

    for m in 1..=config.max_iterations {
        iterations = m;
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (x, &y) in data.rows().zip(data.labels()) {
            let ys = y.sign();
            let slope = loss.slope(y, ys * current.margin_unchecked(x));
            if slope != 0.0 {
                let coef = slope * ys;
                grad_w.iter_mut().zip(x).for_each(|(g, xi)| *g += coef * xi);
                grad_b += coef;
            }
        }

        let eta = 1.0 / (lambda * m as f64);
        for (w, g) in current.w.iter_mut().zip(&grad_w) {
            *w -= eta * (lambda * *w + g / n);
        }
        current.b -= eta * grad_b / n;

        let norm = current.norm();
        if norm > radius {
            let scale = radius / norm;
            current.w.iter_mut().for_each(|w| *w *= scale);
            current.b *= scale;
        }

        if config.averaging {
            let t = 1.0 / m as f64;
            for (a, c) in average.w.iter_mut().zip(&current.w) {
                *a += (c - *a) * t;
            }
            average.b += (current.b - average.b) * t;
        }
        observer(m, &current);

        if m % config.check_interval == 0 {
            let reported = if config.averaging { &average } else { &current };
            let value = objective_unchecked(data, reported, loss, lambda);
            if let Some(prev) = previous {
                let scale = prev.abs().max(f64::MIN_POSITIVE);
                if (prev - value).abs() / scale < config.rel_tolerance {
                    converged = true;
                    break;
                }
            }
            previous = Some(value);
        }
    }

    let model = if config.averaging { average } else { current };
    let objective = objective_unchecked(data, &model, loss, lambda);
    Ok(Fit {
        model,
        objective,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::Boundaries;
    use approx::assert_abs_diff_eq;

    fn half_spec() -> SurrogateSpec {
        SurrogateSpec::logistic(&Boundaries::new(vec![0.5]).unwrap()).unwrap()
    }

    fn sample(rows: &[(f64, i8)]) -> LabeledSample {
        LabeledSample::new(
            rows.iter().map(|r| r.0).collect(),
            1,
            rows.iter().map(|r| Label::try_from(r.1).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn objective_examples() {
        let spec = half_spec();
        let data = sample(&[(1.0, 1), (-2.0, -1), (0.5, 1)]);
        let zero = LinearModel::zeros(1);
        assert_abs_diff_eq!(
            objective(&data, &zero, &spec, 0.1).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(
            objective(&data, &zero, &spec, 1e6).unwrap(),
            objective(&data, &zero, &spec, 0.1).unwrap()
        );
        let one = sample(&[(1.0, 1)]);
        let model = LinearModel { w: vec![3.0], b: 0.0 };
        assert_abs_diff_eq!(objective(&one, &model, &spec, 1.0).unwrap(), 4.5, epsilon = 1e-15);
    }

    #[test]
    fn objective_rejects_dimension_mismatch() {
        let data = sample(&[(1.0, 1)]);
        let model = LinearModel::zeros(2);
        assert!(matches!(
            objective(&data, &model, &half_spec(), 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn predict_margin_examples() {
        let model = LinearModel {
            w: vec![1.0, 2.0],
            b: -1.0,
        };
        assert_eq!(predict_margin(&model, &[3.0, 0.5]).unwrap(), 3.0);
        assert_eq!(predict_margin(&LinearModel::zeros(2), &[5.0, -7.0]).unwrap(), 0.0);
        assert!(predict_margin(&model, &[1.0]).is_err());
        let (x, x2) = ([0.3, -1.2], [2.5, 0.7]);
        let sum = [x[0] + x2[0], x[1] + x2[1]];
        assert_abs_diff_eq!(
            predict_margin(&model, &x).unwrap() + predict_margin(&model, &x2).unwrap() - model.b,
            predict_margin(&model, &sum).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn predict_interval_examples() {
        let spec = SurrogateSpec::logistic(&Boundaries::new(vec![0.2, 0.4, 0.6]).unwrap()).unwrap();
        assert_eq!(predict_interval(0.0, &spec).get(), 2);
        assert_eq!(predict_interval(-10.0, &spec).get(), 0);
        assert_eq!(predict_interval(spec.deltas()[0], &spec).get(), 0);
    }

    #[test]
    fn rejects_non_positive_lambda() {
        let data = sample(&[(1.0, 1)]);
        assert!(matches!(
            fit_piecewise(&data, &half_spec(), 0.0, &SolverConfig::default()),
            Err(Error::Config(_))
        ));
        assert!(fit_logistic(&data, -1.0, &SolverConfig::default()).is_err());
        let bad = SolverConfig {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(fit_logistic(&data, 1.0, &bad).is_err());
    }

    #[test]
    fn separable_points_get_margins_past_the_hinge() {
        let data = sample(&[(-1.0, -1), (1.0, 1)]);
        let fit = fit_piecewise(&data, &half_spec(), 0.01, &SolverConfig::default()).unwrap();
        let hinge = 4f64.ln();
        for (x, y) in data.rows().zip(data.labels()) {
            let margin = y.sign() * predict_margin(&fit.model, x).unwrap();
            assert!(margin >= hinge - 1e-2, "margin {margin}");
        }
    }

    #[test]
    fn one_class_data_gets_positive_intercept() {
        let data = sample(&[(-1.0, 1), (0.5, 1), (2.0, 1)]);
        let fit = fit_piecewise(&data, &half_spec(), 0.1, &SolverConfig::default()).unwrap();
        assert!(fit.model.b > 0.0);
        for x in data.rows() {
            assert!(predict_margin(&fit.model, x).unwrap() > 0.0);
        }
    }

    #[test]
    fn fit_never_worse_than_the_origin() {
        let spec = half_spec();
        let data = sample(&[(-1.0, -1), (0.3, -1), (0.2, 1), (2.0, 1), (-0.5, 1)]);
        for lambda in [1e-3, 0.1, 10.0] {
            let fit = fit_piecewise(&data, &spec, lambda, &SolverConfig::default()).unwrap();
            let start = objective(&data, &LinearModel::zeros(1), &spec, lambda).unwrap();
            assert!(fit.objective <= start + 1e-6);
        }
    }

    #[test]
    fn symmetric_logistic_fit_has_small_intercept() {
        let data = sample(&[(-2.0, -1), (-1.0, -1), (-0.5, 1), (0.5, -1), (1.0, 1), (2.0, 1)]);
        let fit = fit_logistic(&data, 0.1, &SolverConfig::default()).unwrap();
        assert!(fit.model.b.abs() < 0.05, "b = {}", fit.model.b);
        for x in [-10.0, 0.0, 10.0] {
            let p = sigmoid(predict_margin(&fit.model, &[x]).unwrap());
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn projection_holds_every_iteration() {
        let data = sample(&[(-3.0, 1), (1.0, -1), (4.0, 1)]);
        let spec = half_spec();
        for lambda in [1e-4f64, 0.5, 50.0] {
            let radius = lambda.sqrt().recip();
            let cfg = SolverConfig {
                max_iterations: 2_000,
                ..Default::default()
            };
            fit_observed(&data, MarginLoss::Piecewise(&spec), lambda, &cfg, |_, m| {
                assert!(m.norm() <= radius + 1e-12);
            })
            .unwrap();
        }
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let data = sample(&[(-3.0, 1), (1.0, -1), (4.0, 1), (0.1, -1)]);
        let spec = half_spec();
        let a = fit_piecewise(&data, &spec, 0.05, &SolverConfig::default()).unwrap();
        let b = fit_piecewise(&data, &spec, 0.05, &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}

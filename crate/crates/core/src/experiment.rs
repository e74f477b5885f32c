//! λ tuning, test-set evaluation and the seeded replication harness.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize};

use crate::data::LabeledSample;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::loss::theoretical_loss;
use crate::partition::{interval_index, Boundaries};
use crate::rng::{Purpose, SeedStream};
use crate::simulate::{bayes_risk, SettingId, Simulator};
use crate::solver::{fit_observed, predict_interval, sigmoid, Fit, LinearModel, MarginLoss, SolverConfig};
use crate::surrogate::{logistic_loss, SurrogateSpec};

/// Which classifier is being fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// The piecewise linear surrogate; intervals come from the thresholds `δ`.
    Piecewise,
    /// Logistic regression; intervals come from `σ(f)`.
    Logistic,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Piecewise, Method::Logistic];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Piecewise => "piecewise",
            Method::Logistic => "logistic",
        }
    }

    fn loss(self, spec: &SurrogateSpec) -> MarginLoss<'_> {
        match self {
            Method::Piecewise => MarginLoss::Piecewise(spec),
            Method::Logistic => MarginLoss::Logistic,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "piecewise" => Ok(Method::Piecewise),
            "logistic" => Ok(Method::Logistic),
            other => Err(Error::Config(format!(
                "unknown loss `{other}`, expected piecewise or logistic"
            ))),
        }
    }
}

/// Expands `2^a..2^b` into `2^a, 2^{a+1}, …, 2^b`, or parses a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    let grid = if let Some((lo, hi)) = text.split_once("..") {
        let exponent = |s: &str| -> Result<i32> {
            s.trim()
                .strip_prefix("2^")
                .and_then(|e| e.parse().ok())
                .ok_or_else(|| Error::Config(format!("grid bound `{s}` is not of the form 2^n")))
        };
        let (a, b) = (exponent(lo)?, exponent(hi)?);
        if a > b {
            return Err(Error::Config(format!("grid `{text}` is empty")));
        }
        (a..=b).map(|e| 2f64.powi(e)).collect()
    } else {
        text.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("grid value `{}` is not a number", s.trim())))
            })
            .collect::<Result<Vec<_>>>()?
    };
    validate_grid(&grid)?;
    Ok(grid)
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("λ grid is empty".into()));
    }
    if let Some(l) = grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::Config(format!("λ grid value {l} is not positive and finite")));
    }
    Ok(())
}

/// Mean theoretical loss of `model`'s predicted intervals over `data`.
pub fn evaluate_model(model: &LinearModel, data: &LabeledSample, spec: &SurrogateSpec, method: Method) -> Result<f64> {
    check_dims(model, data)?;
    if data.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let pi = spec.boundaries();
    let mut total = 0.0;
    for (x, &y) in data.rows().zip(data.labels()) {
        let f = margin(model, x);
        let k = match method {
            Method::Piecewise => predict_interval(f, spec),
            Method::Logistic => interval_index(sigmoid(f), pi)?,
        };
        total += theoretical_loss(y, k, pi);
    }
    Ok(total / data.len() as f64)
}

/// Mean negative log-likelihood `log(1 + e^{−y f})` over `data`.
pub fn mean_log_loss(model: &LinearModel, data: &LabeledSample) -> Result<f64> {
    check_dims(model, data)?;
    if data.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let total: f64 = data
        .rows()
        .zip(data.labels())
        .map(|(x, &y)| logistic_loss(y.sign() * margin(model, x)))
        .sum();
    Ok(total / data.len() as f64)
}

fn check_dims(model: &LinearModel, data: &LabeledSample) -> Result<()> {
    if model.dim() != data.dim() {
        return Err(Error::Config(format!(
            "data has dimension {}, model has {}",
            data.dim(),
            model.dim()
        )));
    }
    Ok(())
}

fn margin(model: &LinearModel, x: &[f64]) -> f64 {
    model.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + model.b
}

/// Tuning-set criterion: theoretical loss for the piecewise method, log-loss for logistic.
pub fn tuning_score(model: &LinearModel, tune: &LabeledSample, spec: &SurrogateSpec, method: Method) -> Result<f64> {
    match method {
        Method::Piecewise => evaluate_model(model, tune, spec, method),
        Method::Logistic => mean_log_loss(model, tune),
    }
}

/// Outcome of a λ search.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuned {
    pub lambda: f64,
    pub fit: Fit,
    pub score: f64,
    /// `(λ, score)` for every candidate, in ascending λ.
    pub scores: Vec<(f64, f64)>,
    /// Candidates whose solver run hit the iteration budget.
    pub nonconverged: usize,
}

fn fit_method(
    data: &LabeledSample,
    spec: &SurrogateSpec,
    method: Method,
    lambda: f64,
    config: &SolverConfig,
) -> Result<Fit> {
    fit_observed(data, method.loss(spec), lambda, config, |_, _| {})
}

fn sorted_grid(grid: &[f64]) -> Result<Vec<f64>> {
    validate_grid(grid)?;
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

/// Picks the first strict minimum over ascending λ, so ties go to the smallest λ.
fn best_index(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

/// Fits one model per grid value on `train` and keeps the one scoring best on `tune`.
///
/// Candidates that exhaust the iteration budget are scored with their last reported
/// iterate and counted in [`Tuned::nonconverged`].
pub fn tune_lambda(
    train: &LabeledSample,
    tune: &LabeledSample,
    spec: &SurrogateSpec,
    grid: &[f64],
    method: Method,
    config: &SolverConfig,
    exec: Execution,
) -> Result<Tuned> {
    let grid = sorted_grid(grid)?;
    if train.dim() != tune.dim() {
        return Err(Error::Config(format!(
            "training data has dimension {}, tuning data {}",
            train.dim(),
            tune.dim()
        )));
    }
    let fits = exec
        .map(&grid, |&lambda| -> Result<(Fit, f64)> {
            let fit = fit_method(train, spec, method, lambda, config)?;
            let score = tuning_score(&fit.model, tune, spec, method)?;
            Ok((fit, score))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = fits.iter().map(|f| f.1).collect();
    let nonconverged = fits.iter().filter(|f| !f.0.converged).count();
    let best = best_index(&scores);
    let (fit, score) = fits.into_iter().nth(best).expect("grid is nonempty");
    Ok(Tuned {
        lambda: grid[best],
        fit,
        score,
        scores: grid.iter().copied().zip(scores).collect(),
        nonconverged,
    })
}

/// `folds`-fold cross-validation over the grid followed by a refit on all of `data`.
///
/// Fold membership is a seeded shuffle of the row indices; fold sizes differ by at most one.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate_lambda(
    data: &LabeledSample,
    spec: &SurrogateSpec,
    grid: &[f64],
    method: Method,
    config: &SolverConfig,
    folds: usize,
    stream: SeedStream,
    exec: Execution,
) -> Result<Tuned> {
    let grid = sorted_grid(grid)?;
    if folds < 2 || folds > data.len() {
        return Err(Error::Config(format!(
            "need 2 ≤ folds ≤ {} observations, got {folds}",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut stream.rng(Purpose::Folds));
    let splits: Vec<(LabeledSample, LabeledSample)> = (0..folds)
        .map(|fold| {
            let (held, kept): (Vec<usize>, Vec<usize>) = (0..order.len()).partition(|i| i % folds == fold);
            Ok((
                subset(data, kept.iter().map(|&i| order[i]))?,
                subset(data, held.iter().map(|&i| order[i]))?,
            ))
        })
        .collect::<Result<_>>()?;

    let scores = exec
        .map(&grid, |&lambda| -> Result<f64> {
            let mut total = 0.0;
            for (train, held) in &splits {
                let fit = fit_method(train, spec, method, lambda, config)?;
                total += tuning_score(&fit.model, held, spec, method)?;
            }
            Ok(total / folds as f64)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let best = best_index(&scores);
    let fit = fit_method(data, spec, method, grid[best], config)?;
    Ok(Tuned {
        lambda: grid[best],
        nonconverged: usize::from(!fit.converged),
        fit,
        score: scores[best],
        scores: grid.iter().copied().zip(scores).collect(),
    })
}

fn subset(data: &LabeledSample, rows: impl Iterator<Item = usize>) -> Result<LabeledSample> {
    let (mut features, mut labels) = (Vec::new(), Vec::new());
    for i in rows {
        features.extend_from_slice(data.row(i));
        labels.push(data.labels()[i]);
    }
    LabeledSample::new(features, data.dim(), labels)
}

/// How λ is selected within a replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tuning {
    /// Fit on the training set, score on the separate tuning set.
    #[default]
    Holdout,
    /// Cross-validate on the pooled training and tuning sets.
    KFold { folds: usize },
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn deserialize_grid<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Grid {
        List(Vec<f64>),
        Text(String),
    }
    match Grid::deserialize(de)? {
        Grid::List(v) => Ok(v),
        Grid::Text(s) => parse_grid(&s).map_err(serde::de::Error::custom),
    }
}

/// One simulation study: a setting, a set of dimensions and a replication count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setting: SettingId,
    pub dims: Vec<usize>,
    pub n_train: usize,
    pub n_tune: usize,
    pub n_test: usize,
    pub replications: usize,
    /// A list of values or a `2^a..2^b` string.
    #[serde(deserialize_with = "deserialize_grid")]
    pub lambda_grid: Vec<f64>,
    /// Defaults to the setting's designated boundaries.
    #[serde(default)]
    pub boundaries: Option<Boundaries>,
    pub master_seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub tuning: Tuning,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
}

impl ExperimentConfig {
    /// The study design with 100 replications, `n = 100` training and tuning points,
    /// `10⁴` test points and the grid `2^−15 … 2^10`.
    pub fn standard(setting: SettingId, dims: Vec<usize>, master_seed: u64) -> Self {
        Self {
            setting,
            dims,
            n_train: 100,
            n_tune: 100,
            n_test: 10_000,
            replications: 100,
            lambda_grid: (-15..=10).map(|e| 2f64.powi(e)).collect(),
            boundaries: None,
            master_seed,
            solver: SolverConfig::default(),
            tuning: Tuning::Holdout,
            methods: default_methods(),
        }
    }

    /// Checks every field and reports all offending ones at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.dims.is_empty() || self.dims.contains(&0) {
            bad.push("dims: must be a nonempty list of positive dimensions".to_string());
        }
        for (name, v) in [
            ("n_train", self.n_train),
            ("n_tune", self.n_tune),
            ("n_test", self.n_test),
            ("replications", self.replications),
        ] {
            if v == 0 {
                bad.push(format!("{name}: must be at least 1"));
            }
        }
        if let Err(e) = validate_grid(&self.lambda_grid) {
            bad.push(format!("lambda_grid: {e}"));
        }
        if let Err(e) = self.solver.validate() {
            bad.push(format!("solver: {e}"));
        }
        if let Tuning::KFold { folds } = self.tuning {
            if folds < 2 || folds > self.n_train + self.n_tune {
                bad.push(format!(
                    "tuning.folds: {folds} is outside 2..={}",
                    self.n_train + self.n_tune
                ));
            }
        }
        if self.methods.is_empty() {
            bad.push("methods: must name at least one method".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid experiment configuration: {}",
                bad.join("; ")
            )))
        }
    }

    pub fn effective_boundaries(&self) -> Boundaries {
        self.boundaries
            .clone()
            .unwrap_or_else(|| self.setting.designated_boundaries())
    }
}

/// Training, tuning and test sets of one replication, sharing one rotation.
#[derive(Debug, Clone)]
pub struct ReplicationData {
    pub train: LabeledSample,
    pub tune: Option<LabeledSample>,
    pub test: Option<LabeledSample>,
}

/// Seed stream of replication `r` at dimension `p`.
pub fn replication_stream(master_seed: u64, replication: usize, dim: usize) -> SeedStream {
    SeedStream::new(master_seed)
        .substream(replication as u64)
        .substream(dim as u64)
}

/// Draws the three datasets of one replication. The rotation comes from the rotation
/// generator; train, tune and test are drawn in that order from the sample generator, so
/// the training set does not depend on the other sizes. Zero sizes are skipped.
pub fn replication_datasets(
    setting: SettingId,
    dim: usize,
    n_train: usize,
    n_tune: usize,
    n_test: usize,
    stream: SeedStream,
) -> Result<ReplicationData> {
    let sim = Simulator::from_stream(setting, dim, stream)?;
    let mut rng = stream.rng(Purpose::Sample);
    let train = sim.sample(n_train, &mut rng)?;
    let tune = (n_tune > 0).then(|| sim.sample(n_tune, &mut rng)).transpose()?;
    let test = (n_test > 0).then(|| sim.sample(n_test, &mut rng)).transpose()?;
    Ok(ReplicationData { train, tune, test })
}

/// One fitted and evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub setting: SettingId,
    pub p: usize,
    pub replication: usize,
    pub method: Method,
    pub lambda: f64,
    pub test_loss: f64,
    /// Whether the selected fit met the stopping rule.
    pub converged: bool,
}

/// A replication that could not be completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub p: usize,
    pub replication: usize,
    pub method: Option<Method>,
    pub seed: u64,
    pub message: String,
}

/// Dispersion summary of the test losses for one `(method, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub p: usize,
    pub count: usize,
    pub median: f64,
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
    /// Records whose selected fit hit the iteration budget.
    pub nonconverged: usize,
}

impl Summary {
    /// Summarizes `losses`; quantiles interpolate linearly between order statistics.
    pub fn from_losses(method: Method, p: usize, losses: &[f64], nonconverged: usize) -> Option<Self> {
        if losses.is_empty() {
            return None;
        }
        let mut v = losses.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        let (q1, q3) = (quantile(&v, 0.25), quantile(&v, 0.75));
        Some(Self {
            method,
            p,
            count: n,
            median: quantile(&v, 0.5),
            mean,
            se,
            q1,
            q3,
            iqr: q3 - q1,
            min: v[0],
            max: v[n - 1],
            nonconverged,
        })
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Everything produced by [`run_replications`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub setting: SettingId,
    pub boundaries: Boundaries,
    /// Ordered by `p`, then replication, then method.
    pub records: Vec<Record>,
    pub summaries: Vec<Summary>,
    /// Bayes risk of the setting at `boundaries`.
    pub bayes_floor: f64,
    pub failures: Vec<Failure>,
}

impl ExperimentResult {
    pub fn summary(&self, method: Method, p: usize) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.method == method && s.p == p)
    }
}

/// Runs one replication at one dimension for every configured method.
pub fn run_single(
    config: &ExperimentConfig,
    replication: usize,
    dim: usize,
    exec: Execution,
) -> (Vec<Record>, Vec<Failure>) {
    let stream = replication_stream(config.master_seed, replication, dim);
    let fail = |method, e: Error| Failure {
        p: dim,
        replication,
        method,
        seed: stream.seed(),
        message: e.to_string(),
    };
    let boundaries = config.effective_boundaries();
    let prepared = SurrogateSpec::logistic(&boundaries).and_then(|spec| {
        let data = replication_datasets(
            config.setting,
            dim,
            config.n_train,
            config.n_tune,
            config.n_test,
            stream,
        )?;
        Ok((spec, data))
    });
    let (spec, data) = match prepared {
        Ok(v) => v,
        Err(e) => return (Vec::new(), vec![fail(None, e)]),
    };
    let tune = data.tune.as_ref().expect("n_tune ≥ 1");
    let test = data.test.as_ref().expect("n_test ≥ 1");

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &method in &config.methods {
        let outcome = match config.tuning {
            Tuning::Holdout => tune_lambda(
                &data.train,
                tune,
                &spec,
                &config.lambda_grid,
                method,
                &config.solver,
                exec,
            ),
            Tuning::KFold { folds } => concat(&data.train, tune).and_then(|pooled| {
                cross_validate_lambda(
                    &pooled,
                    &spec,
                    &config.lambda_grid,
                    method,
                    &config.solver,
                    folds,
                    stream,
                    exec,
                )
            }),
        }
        .and_then(|tuned| {
            let loss = evaluate_model(&tuned.fit.model, test, &spec, method)?;
            Ok(Record {
                setting: config.setting,
                p: dim,
                replication,
                method,
                lambda: tuned.lambda,
                test_loss: loss,
                converged: tuned.fit.converged,
            })
        });
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push(fail(Some(method), e)),
        }
    }
    (records, failures)
}

fn concat(a: &LabeledSample, b: &LabeledSample) -> Result<LabeledSample> {
    let mut features = a.features().to_vec();
    features.extend_from_slice(b.features());
    let mut labels = a.labels().to_vec();
    labels.extend_from_slice(b.labels());
    LabeledSample::new(features, a.dim(), labels)
}

/// Runs every `(p, replication)` pair, in parallel under [`Execution::Parallel`].
///
/// Each pair owns its seed substream, so the result is identical in every execution mode.
pub fn run_replications(config: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    config.validate()?;
    let boundaries = config.effective_boundaries();
    let jobs: Vec<(usize, usize)> = config
        .dims
        .iter()
        .flat_map(|&p| (0..config.replications).map(move |r| (p, r)))
        .collect();
    let outputs = exec.map(&jobs, |&(p, r)| run_single(config, r, p, Execution::Sequential));

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (recs, fails) in outputs {
        records.extend(recs);
        failures.extend(fails);
    }
    let mut dims = config.dims.clone();
    dims.sort_unstable();
    dims.dedup();
    let mut summaries = Vec::new();
    for &p in &dims {
        for &method in &config.methods {
            let chosen: Vec<&Record> = records.iter().filter(|r| r.p == p && r.method == method).collect();
            let losses: Vec<f64> = chosen.iter().map(|r| r.test_loss).collect();
            let nonconverged = chosen.iter().filter(|r| !r.converged).count();
            summaries.extend(Summary::from_losses(method, p, &losses, nonconverged));
        }
    }
    Ok(ExperimentResult {
        setting: config.setting,
        bayes_floor: bayes_risk(config.setting, &boundaries),
        boundaries,
        records,
        summaries,
        failures,
    })
}

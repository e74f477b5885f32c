//! Probability-band classification.
//!
//! A problem is defined by `K` ordered probability boundaries `0 < π_1 < … < π_K < 1`,
//! which split `[0, 1]` into `K + 1` intervals. A rule assigns each covariate vector to
//! the interval containing its conditional class probability `p(x) = P(Y = +1 | x)`.
//! `K = 1` with `π = {0.5}` is ordinary hard classification, `π = {π, 1 − π}` is
//! classification with a reject option, and dense boundaries approach probability
//! estimation.
//!
//! The crate provides:
//!
//! * [`partition`] and [`loss`]: boundaries, the averaged weighted 0–1 loss and its Bayes rule;
//! * [`surrogate`]: minimally consistent piecewise linear surrogates built from
//!   tangent lines of the logistic loss;
//! * [`solver`]: projected sub-gradient descent for the linear penalized objective;
//! * [`simulate`]: the piecewise-constant simulation settings and their Bayes risks;
//! * [`experiment`]: λ tuning and a seeded replication harness;
//! * [`io`]: CSV datasets, model files and experiment outputs.

// Negated comparisons are how NaN gets rejected alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod io;
pub mod loss;
pub mod partition;
pub mod rng;
pub mod simulate;
pub mod solver;
pub mod surrogate;

pub use data::{Label, LabeledSample};
pub use error::{Error, Result};
pub use exec::Execution;
pub use loss::{margin_theoretical_loss, soft_limit_loss, theoretical_loss};
pub use partition::{brute_force_bayes, interval_index, Boundaries, IntervalIndex};
pub use rng::SeedStream;
pub use solver::{LinearModel, SolverConfig};
pub use surrogate::{ConsistencyReport, SurrogateSpec};

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use marginstrat::experiment::{
    cross_validate_lambda, evaluate_model, parse_grid, replication_datasets, replication_stream, run_replications,
    tune_lambda, ExperimentConfig, Method,
};
use marginstrat::io::{self, format_f64, ModelDocument};
use marginstrat::simulate::SettingId;
use marginstrat::solver::{fit_logistic, fit_piecewise};
use marginstrat::surrogate::{check_consistency, risk_constant, SurrogateDocument};
use marginstrat::{Boundaries, Execution, SeedStream, SolverConfig, SurrogateSpec};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] marginstrat::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use marginstrat::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(E::Config(_) | E::Domain(_)) => 1,
            CliError::Lib(E::Data(_) | E::Io(_)) => 2,
            CliError::Lib(E::Inconsistent(_) | E::Degenerate(_)) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Probability-band classification with piecewise linear surrogate losses.
#[derive(Debug, Parser)]
#[command(name = "marginstrat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw train/tune/test sets of one replication of a simulation setting.
    Simulate(SimulateArgs),
    /// Fit a linear classifier at one λ or tune λ over a grid.
    Train(TrainArgs),
    /// Write margins and predicted probability intervals for a dataset.
    Predict(PredictArgs),
    /// Mean theoretical loss of a model on a labelled dataset.
    Evaluate(EvaluateArgs),
    /// Run a replicated simulation study.
    Experiment(ExperimentArgs),
    /// Check a surrogate for minimal consistency.
    CheckSurrogate(CheckArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Setting id such as 1.1 or 2.3.
    #[arg(long)]
    setting: String,
    /// Feature dimension.
    #[arg(long)]
    p: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    replication: usize,
    #[arg(long)]
    n_train: usize,
    #[arg(long, default_value_t = 0)]
    n_tune: usize,
    #[arg(long, default_value_t = 0)]
    n_test: usize,
    /// Receives train.csv and, when requested, tune.csv and test.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    rel_tolerance: Option<f64>,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig> {
        let mut c = SolverConfig::default();
        if let Some(m) = self.max_iterations {
            c.max_iterations = m;
        }
        if let Some(t) = self.rel_tolerance {
            c.rel_tolerance = t;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated boundaries, e.g. `0.25,0.5,0.75` or `1/3,2/3`.
    #[arg(long)]
    pi: String,
    #[arg(long, default_value = "piecewise")]
    loss: String,
    #[arg(
        long,
        conflicts_with = "grid",
        required_unless_present = "grid",
        allow_negative_numbers = true
    )]
    lambda: Option<f64>,
    /// `2^a..2^b` or a comma-separated list.
    #[arg(long)]
    grid: Option<String>,
    /// Tuning set for grid search.
    #[arg(long, requires = "grid", conflicts_with = "folds")]
    tune: Option<PathBuf>,
    /// Cross-validation folds for grid search on `--data`.
    #[arg(long, requires = "grid")]
    folds: Option<usize>,
    /// Seed for the fold assignment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Run replications on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Boundaries of the logistic-derived surrogate.
    #[arg(long, required_unless_present = "spec", conflicts_with = "spec")]
    pi: Option<String>,
    /// Surrogate JSON with fields pi, A_pos, B_pos, A_neg, B_neg, delta.
    #[arg(long)]
    spec: Option<PathBuf>,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let setting: SettingId = args.setting.parse()?;
    let stream = replication_stream(args.seed, args.replication, args.p);
    let data = replication_datasets(setting, args.p, args.n_train, args.n_tune, args.n_test, stream)?;
    std::fs::create_dir_all(&args.out_dir).map_err(marginstrat::Error::from)?;
    io::write_dataset_file(&args.out_dir.join("train.csv"), &data.train)?;
    if let Some(tune) = &data.tune {
        io::write_dataset_file(&args.out_dir.join("tune.csv"), tune)?;
    }
    if let Some(test) = &data.test {
        io::write_dataset_file(&args.out_dir.join("test.csv"), test)?;
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let method: Method = args.loss.parse()?;
    let pi = Boundaries::parse_list(&args.pi)?;
    let config = args.solver.config()?;
    let grid = args.grid.as_deref().map(parse_grid).transpose()?;
    if let Some(l) = args.lambda {
        if !(l > 0.0 && l.is_finite()) {
            return Err(CliError::Usage(format!("--lambda must be positive, got {l}")));
        }
    }
    if grid.is_some() && args.tune.is_none() && args.folds.is_none() {
        return Err(CliError::Usage("--grid needs --tune or --folds".into()));
    }
    let spec = SurrogateSpec::logistic(&pi)?;
    let data = io::read_dataset(&args.data)?;
    if data.is_empty() {
        return Err(marginstrat::Error::Data(format!("{}: no observations", args.data.display())).into());
    }

    let (lambda, fit) = match (args.lambda, grid) {
        (Some(lambda), _) => {
            let fit = match method {
                Method::Piecewise => fit_piecewise(&data, &spec, lambda, &config)?,
                Method::Logistic => fit_logistic(&data, lambda, &config)?,
            };
            (lambda, fit)
        }
        (None, Some(grid)) => {
            let tuned = if let Some(path) = &args.tune {
                let tune = io::read_dataset(path)?;
                if tune.dim() != data.dim() {
                    return Err(marginstrat::Error::Data(format!(
                        "tuning data has {} features, training data {}",
                        tune.dim(),
                        data.dim()
                    ))
                    .into());
                }
                tune_lambda(&data, &tune, &spec, &grid, method, &config, Execution::Sequential)?
            } else {
                let folds = args.folds.expect("checked above");
                let stream = SeedStream::new(args.seed);
                cross_validate_lambda(
                    &data,
                    &spec,
                    &grid,
                    method,
                    &config,
                    folds,
                    stream,
                    Execution::Sequential,
                )?
            };
            println!("chosen lambda: {}", tuned.lambda);
            (tuned.lambda, tuned.fit)
        }
        (None, None) => unreachable!("clap requires --lambda or --grid"),
    };
    if !fit.converged {
        eprintln!(
            "warning: solver stopped at the iteration limit ({} iterations)",
            fit.iterations
        );
    }
    println!("objective: {}", fit.objective);
    io::write_model(&args.out, &ModelDocument::new(&fit.model, &spec, method, lambda))?;
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let doc = io::read_model(&args.model)?;
    let blank = std::fs::read_to_string(&args.data)
        .map(|s| s.trim().is_empty())
        .unwrap_or(false);
    let predictions = if blank {
        Vec::new()
    } else {
        io::predict_table(&doc, &io::read_table_file(&args.data)?)?
    };
    let out = File::create(&args.out).map_err(marginstrat::Error::from)?;
    io::write_predictions(out, &predictions)?;
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let doc = io::read_model(&args.model)?;
    let data = io::read_dataset(&args.data)?;
    if data.dim() != doc.w.len() {
        return Err(marginstrat::Error::Data(format!(
            "data has {} feature columns, model expects {}",
            data.dim(),
            doc.w.len()
        ))
        .into());
    }
    if data.is_empty() {
        return Err(marginstrat::Error::Data(format!("{}: no observations", args.data.display())).into());
    }
    let loss = evaluate_model(&doc.model(), &data, &doc.spec()?, doc.loss)?;
    println!("{}", format_f64(loss));
    Ok(())
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| marginstrat::Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid experiment configuration: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let config = read_config(&args.config)?;
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = run_replications(&config, exec)?;
    io::write_experiment(&args.out_dir, &result)?;
    println!(
        "{:<8} {:>4} {:<10} {:>10} {:>10}",
        "setting", "p", "method", "median", "se"
    );
    for s in &result.summaries {
        println!(
            "{:<8} {:>4} {:<10} {:>10.6} {:>10.6}",
            result.setting, s.p, s.method, s.median, s.se
        );
    }
    println!("bayes floor: {:.6}", result.bayes_floor);
    for f in &result.failures {
        eprintln!(
            "warning: replication {} (p = {}, seed {}) failed: {}",
            f.replication, f.p, f.seed, f.message
        );
    }
    Ok(())
}

fn check_surrogate(args: CheckArgs) -> Result<()> {
    let spec = match (&args.pi, &args.spec) {
        (Some(pi), _) => SurrogateSpec::logistic(&Boundaries::parse_list(pi)?)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| marginstrat::Error::Data(format!("cannot open {}: {e}", path.display())))?;
            let doc: SurrogateDocument = serde_json::from_str(&text)
                .map_err(|e| marginstrat::Error::Data(format!("{}: {e}", path.display())))?;
            SurrogateSpec::from_document_unchecked(&doc)?
        }
        (None, None) => unreachable!("clap requires --pi or --spec"),
    };
    let report = check_consistency(&spec);
    println!("C1 (negative slopes): {}", verdict(report.c1_ok));
    println!("C2 (hinge alignment): {}", verdict(report.c2_ok));
    println!("C3 (threshold ratios): {}", verdict(report.c3_ok));
    println!("hinges: {:?}", spec.hinges());
    println!("deltas: {:?}", spec.deltas());
    for m in &report.messages {
        println!("  {m}");
    }
    if !report.is_consistent() {
        return Err(marginstrat::Error::Inconsistent(Box::new(report)).into());
    }
    println!("risk constant: {}", risk_constant(&spec)?);
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "violated"
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MS_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("MS_THREADS must be a positive integer, got `{v}`")))?;
        marginstrat::exec::configure_threads(n);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Experiment(a) => experiment(a),
        Command::CheckSurrogate(a) => check_surrogate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

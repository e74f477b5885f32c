//! File formats survive a write/read cycle bit for bit.

use marginstrat::experiment::{run_replications, ExperimentConfig, Method};
use marginstrat::io::{
    predict_table, read_dataset, read_model, read_table_file, write_dataset_file, write_experiment, write_model,
    ModelDocument, SummaryDocument,
};
use marginstrat::simulate::{generate_setting, SettingId};
use marginstrat::solver::{fit_piecewise, predict_interval, predict_margin, SolverConfig};
use marginstrat::surrogate::SurrogateSpec;
use marginstrat::{Execution, SeedStream};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn datasets_round_trip(seed in any::<u64>(), n in 1usize..50, dim in 1usize..6) {
        let data = generate_setting("2.3".parse().unwrap(), n, dim, SeedStream::new(seed)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_dataset_file(&path, &data).unwrap();
        let back = read_dataset(&path).unwrap();
        prop_assert_eq!(back.features(), data.features());
        prop_assert_eq!(back.labels(), data.labels());
    }
}

#[test]
fn saved_models_predict_like_the_fitted_one() {
    let setting: SettingId = "1.3".parse().unwrap();
    let data = generate_setting(setting, 60, 3, SeedStream::new(4)).unwrap();
    let spec = SurrogateSpec::logistic(&setting.designated_boundaries()).unwrap();
    let config = SolverConfig {
        max_iterations: 5000,
        ..SolverConfig::default()
    };
    let fit = fit_piecewise(&data, &spec, 0.25, &config).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    let data_path = dir.path().join("data.csv");
    write_model(
        &model_path,
        &ModelDocument::new(&fit.model, &spec, Method::Piecewise, 0.25),
    )
    .unwrap();
    write_dataset_file(&data_path, &data).unwrap();

    let doc = read_model(&model_path).unwrap();
    assert_eq!(doc.model(), fit.model);
    assert_eq!(doc.spec().unwrap(), spec);
    let predictions = predict_table(&doc, &read_table_file(&data_path).unwrap()).unwrap();
    for (x, p) in data.rows().zip(&predictions) {
        let f = predict_margin(&fit.model, x).unwrap();
        assert_eq!(p.f.to_bits(), f.to_bits());
        assert_eq!(p.interval, predict_interval(f, &spec));
        assert!(p.lo < p.hi);
    }
}

#[test]
fn experiment_outputs_are_readable() {
    let mut config = ExperimentConfig::standard("2.1".parse().unwrap(), vec![2], 17);
    config.replications = 2;
    config.n_test = 200;
    config.lambda_grid = vec![0.125, 1.0];
    config.solver.max_iterations = 500;
    let result = run_replications(&config, Execution::Sequential).unwrap();

    let dir = tempfile::tempdir().unwrap();
    write_experiment(dir.path(), &result).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("setting,p,replication,method,lambda,test_loss"));
    assert_eq!(lines.count(), result.records.len());
    let summary: SummaryDocument =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, SummaryDocument::from(&result));
}

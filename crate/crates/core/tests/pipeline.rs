mod common;

use std::path::Path;

use albench::bench::config::{JointToml, ModelConfig, OneOrMany};
use albench::bench::Experiment;
use albench::data::load_csv;
use albench::metrics::Metric;
use albench::model::LossWeighting;
use albench::posterior::JointMode;
use albench::query::QueryMethod;

#[test]
fn digits_csv_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/digits.csv");
    let (ds, mapping) = load_csv(&path, "digit", None).unwrap();
    assert_eq!(ds.len(), 1797);
    assert_eq!(ds.dim(), 64);
    assert_eq!(ds.class_count(), 10);
    assert_eq!(mapping.values, (0..10).map(|d| d.to_string()).collect::<Vec<_>>());
    let hist = ds.class_histogram(&(0..ds.len()).collect::<Vec<_>>());
    assert_eq!(hist.iter().sum::<usize>(), 1797);
    assert!(hist.iter().all(|&n| (174..=183).contains(&n)), "{hist:?}");
    assert!(load_csv(&path, "digit", Some(9)).is_err());
    assert!(load_csv(&path, "label", None).is_err());
}

#[test]
fn acquisition_improves_a_separable_mixture() {
    let mut cfg = common::tiny_config((0..20).collect());
    cfg.qm.name = OneOrMany::Many(QueryMethod::ALL.to_vec());
    // separable means hidden among many distractor dims: the starting
    // budget overfits, the final budget does not
    cfg.dataset.classes = Some(5);
    cfg.dataset.separation = 6.0;
    cfg.dataset.distractors = 24;
    cfg.regime.overrides.steps = None;
    cfg.qm.joint = JointToml {
        mode: JointMode::Exact,
        max_exact: 625,
        m: 512,
    };
    let exp = Experiment::from_config(cfg).unwrap();
    let records = exp.execute().unwrap().records().unwrap();
    assert_eq!(records.len(), 20 * 5);
    for qm in QueryMethod::ALL {
        let runs: Vec<_> = records.iter().filter(|r| r.qm == qm.name()).collect();
        let improved = runs.iter().filter(|r| r.final_test() >= r.rows[0].test).count();
        assert!(improved >= 18, "{qm}: only {improved}/20 seeds end at or above step 0");
    }
}

#[test]
fn mean_recall_equals_accuracy_on_balanced_splits() {
    let mut cfg = common::tiny_config(vec![3]);
    cfg.dataset.per_class = 100;
    cfg.qm.name = OneOrMany::One(QueryMethod::Random);
    let hp = cfg.hp_grid(LossWeighting::Uniform)[0].clone();
    let mut results = Vec::new();
    for metric in [Metric::Accuracy, Metric::MeanRecall] {
        cfg.metric = Some(metric);
        let exp = Experiment::from_config(cfg.clone()).unwrap();
        let setup = exp.setup(3).unwrap();
        let hist = exp.dataset.class_histogram(&setup.splits.test_indices);
        assert!(hist.iter().all(|&n| n == hist[0]), "{hist:?}");
        results.push(exp.run_al_loop(&setup, &hp, QueryMethod::Random, None).unwrap());
    }
    for (a, b) in results[0].rows.iter().zip(&results[1].rows) {
        assert!((a.test - b.test).abs() < 1e-12, "{} vs {}", a.test, b.test);
    }
}

#[test]
fn sweep_picks_the_dominant_cell() {
    let mut cfg = common::tiny_config(vec![0]);
    cfg.model.lr = OneOrMany::Many(vec![1e3, 0.05, 2e3]);
    let exp = Experiment::from_config(cfg).unwrap();
    let setup = exp.setup(0).unwrap();
    let report = exp.hp_sweep(&setup, LossWeighting::Uniform).unwrap();
    assert_eq!(report.cells.len(), 3);
    assert_eq!(report.chosen.learning_rate, 0.05);
    let good = report.cells[0].val_metric.unwrap();
    assert!(report.cells[1..].iter().all(|c| c.val_metric.is_none_or(|v| v < good)));
}

#[test]
fn default_grid_reports_eight_cells() {
    let mut cfg = common::tiny_config(vec![1]);
    let tiny = cfg.model.clone();
    cfg.model = ModelConfig {
        hidden: tiny.hidden,
        epochs: tiny.epochs,
        upsample: tiny.upsample,
        ..ModelConfig::default()
    };
    let exp = Experiment::from_config(cfg).unwrap();
    let sweeps = exp.execute_sweeps().unwrap();
    assert_eq!(sweeps.len(), 1);
    let cells = &sweeps[0].cells;
    assert_eq!(cells.len(), 8);
    let keys: Vec<(f64, f64, f64)> = cells
        .iter()
        .map(|c| (c.learning_rate, c.weight_decay, c.feature_noise_sigma))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(keys, sorted);
    assert!(cells.iter().all(|c| c.val_metric.is_some()));
    let best = cells.iter().filter_map(|c| c.val_metric).fold(f64::MIN, f64::max);
    let chosen = cells
        .iter()
        .find(|c| c.val_metric == Some(best))
        .unwrap();
    assert_eq!(sweeps[0].chosen.learning_rate, chosen.learning_rate);
    assert_eq!(sweeps[0].chosen.weight_decay, chosen.weight_decay);
}

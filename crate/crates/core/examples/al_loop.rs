//! One seed of the acquisition loop: setup, sweep, then BALD queries.

use albench::bench::config::{DatasetConfig, ExperimentConfig, ModelConfig};
use albench::bench::Experiment;
use albench::model::LossWeighting;
use albench::query::QueryMethod;

fn main() -> albench::Result<()> {
    let cfg = ExperimentConfig {
        dataset: DatasetConfig {
            classes: Some(4),
            per_class: 200,
            ..DatasetConfig::default()
        },
        model: ModelConfig {
            hidden: vec![32],
            epochs: 15,
            ..ModelConfig::default()
        },
        timing: false,
        ..ExperimentConfig::default()
    };
    let exp = Experiment::from_config(cfg)?;
    let setup = exp.setup(0)?;
    println!(
        "pool {}, val subset {}, test {}, starting labels {}",
        setup.splits.pool_indices.len(),
        setup.val_subset.len(),
        setup.splits.test_indices.len(),
        setup.initial.len()
    );

    let sweep = exp.hp_sweep(&setup, LossWeighting::Uniform)?;
    for c in &sweep.cells {
        println!(
            "lr {:<5} wd {:<6} noise {:<4} val {:?}",
            c.learning_rate, c.weight_decay, c.feature_noise_sigma, c.val_metric
        );
    }
    let hp = &sweep.chosen;
    println!("chosen lr {} wd {} noise {}", hp.learning_rate, hp.weight_decay, hp.feature_noise_sigma);

    let record = exp.run_al_loop(&setup, &sweep.chosen, QueryMethod::Bald, None)?;
    for row in &record.rows {
        println!("step {} labeled {:>3}: val {:.3} test {:.3}", row.step, row.n_labeled, row.val, row.test);
    }
    Ok(())
}

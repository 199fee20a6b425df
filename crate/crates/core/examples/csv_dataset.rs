//! Load a labelled CSV, write it back with its label mapping and run a short
//! experiment on it.
//!
//! `cargo run --release -p albench --example csv_dataset -- [path.csv] [label-column]`

use std::path::PathBuf;

use albench::bench::config::{DatasetConfig, DatasetKind, ExperimentConfig, ModelConfig, OneOrMany};
use albench::bench::{aggregate_all, Experiment};
use albench::data::{load_csv, save_csv};
use albench::query::QueryMethod;

fn main() -> albench::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/digits.csv"));
    let label = args.next().unwrap_or_else(|| "digit".into());

    let (ds, mapping) = load_csv(&path, &label, None)?;
    println!("{}: {} rows, {} features, {} classes", path.display(), ds.len(), ds.dim(), ds.class_count());

    let copy = std::env::temp_dir().join("albench-copy.csv");
    save_csv(&ds, &copy, Some(&mapping))?;
    mapping.save(&copy.with_extension("labels.json"))?;

    let cfg = ExperimentConfig {
        seeds: vec![0, 1],
        timing: false,
        dataset: DatasetConfig {
            kind: DatasetKind::Csv,
            path: Some(path),
            label_column: label,
            ..DatasetConfig::default()
        },
        qm: albench::bench::config::QmConfig {
            name: OneOrMany::Many(vec![QueryMethod::Random, QueryMethod::Entropy]),
            ..Default::default()
        },
        model: ModelConfig {
            lr: OneOrMany::One(0.05),
            wd: OneOrMany::One(5e-4),
            noise: OneOrMany::One(0.0),
            hidden: vec![32],
            epochs: 15,
            ..ModelConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let out = Experiment::from_config(cfg)?.execute()?;
    for c in aggregate_all(&out.records()?)? {
        let f = c.final_point();
        println!("{:<8} final accuracy {:.3} +- {:.3} with {} labels", c.series, f.mean, f.sd, f.n_labeled);
    }
    Ok(())
}

//! Ready-made experiment configurations.

use super::config::*;
use crate::domain::RegimeName;
use crate::metrics::Metric;
use crate::model::{LossWeighting, TrainingStrategy};
use crate::posterior::JointMode;
use crate::query::QueryMethod;

pub const PRESETS: [&str; 3] = ["study", "cold-start", "loss-weighting"];

pub fn by_name(name: &str, seeds: Vec<u64>) -> Option<ExperimentConfig> {
    match name {
        "study" => Some(directional_study(seeds)),
        "cold-start" => Some(cold_start_ablation(seeds, None, None)),
        "loss-weighting" => Some(loss_weighting_ablation(seeds)),
        _ => None,
    }
}

/// Five-class mixture whose pool follows a ρ = 50 long tail (about 480
/// samples), low regime, fixed small network.
pub fn longtail_mixture(seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        seeds,
        metric: Some(Metric::MeanRecall),
        timing: false,
        dataset: DatasetConfig {
            kind: DatasetKind::Mixture,
            name: Some("mixture-lt50".into()),
            classes: Some(5),
            per_class: 500,
            separation: 2.5,
            distractors: 3,
            seed: 2024,
            longtail: Some(50.0),
            ..DatasetConfig::default()
        },
        regime: RegimeConfig {
            name: RegimeName::Low,
            overrides: RegimeOverride::default(),
        },
        qm: QmConfig {
            name: OneOrMany::Many(vec![QueryMethod::Random]),
            joint: JointToml {
                mode: JointMode::Exact,
                max_exact: 3125,
                m: 2048,
            },
        },
        model: ModelConfig {
            lr: OneOrMany::One(0.05),
            wd: OneOrMany::One(5e-4),
            noise: OneOrMany::One(0.0),
            hidden: vec![32, 16],
            epochs: 20,
            batch: 64,
            upsample: 500,
            ..ModelConfig::default()
        },
        mc: McConfig::default(),
        ..ExperimentConfig::default()
    }
}

/// Random, BALD, BatchBALD and Core-Set on the long-tail mixture.
pub fn directional_study(seeds: Vec<u64>) -> ExperimentConfig {
    let mut cfg = longtail_mixture(seeds);
    cfg.qm.name = OneOrMany::Many(vec![
        QueryMethod::Random,
        QueryMethod::Bald,
        QueryMethod::BatchBald,
        QueryMethod::CoreSet,
    ]);
    cfg
}

/// Pre-trained-representation analog in the low regime with every query
/// method; optionally a reduced query size and a subsampled candidate pool.
pub fn cold_start_ablation(seeds: Vec<u64>, query_size: Option<usize>, pool_subsample: Option<usize>) -> ExperimentConfig {
    let mut cfg = longtail_mixture(seeds);
    cfg.dataset.name = Some("mixture-cold-start".into());
    cfg.dataset.longtail = None;
    cfg.dataset.per_class = 200;
    cfg.metric = Some(Metric::Accuracy);
    cfg.strategy = StrategyConfig {
        kind: TrainingStrategy::OracleRepresentation,
        noise: 0.5,
    };
    cfg.model.hidden = vec![16];
    cfg.regime.overrides.query = query_size;
    cfg.pool.subsample = pool_subsample;
    cfg.qm.name = OneOrMany::Many(vec![
        QueryMethod::Random,
        QueryMethod::Bald,
        QueryMethod::BatchBald,
        QueryMethod::CoreSet,
        QueryMethod::Entropy,
    ]);
    cfg
}

/// Weighted versus plain cross-entropy on the long-tail mixture, each arm
/// with its own sweep on the starting budget.
pub fn loss_weighting_ablation(seeds: Vec<u64>) -> ExperimentConfig {
    let mut cfg = longtail_mixture(seeds);
    cfg.model.loss_weighting = Some(OneOrMany::Many(vec![LossWeighting::Uniform, LossWeighting::Balanced]));
    cfg.model.lr = OneOrMany::Many(vec![0.1, 0.01]);
    cfg.qm.name = OneOrMany::Many(vec![QueryMethod::Random, QueryMethod::Bald]);
    cfg
}

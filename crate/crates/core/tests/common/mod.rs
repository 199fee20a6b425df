#![allow(dead_code)]

use albench::bench::config::*;
use albench::domain::RegimeName;
use albench::metrics::Metric;
use albench::posterior::PosteriorSamples;
use albench::query::QueryMethod;
use ndarray::Array3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random posterior whose slices range from flat to sharply peaked.
pub fn random_posterior<R: Rng>(rng: &mut R, k: usize, n: usize, c: usize) -> PosteriorSamples {
    let mut probs = Array3::<f64>::zeros((k, n, c));
    for ni in 0..n {
        let temp = 0.2 + 3.0 * rng.random::<f64>();
        let centre: Vec<f64> = (0..c).map(|_| StandardNormal.sample(rng)).collect();
        for ki in 0..k {
            let logits: Vec<f64> = centre
                .iter()
                .map(|&m| temp * (m + Distribution::<f64>::sample(&StandardNormal, rng)))
                .collect();
            let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
            for y in 0..c {
                probs[[ki, ni, y]] = (logits[y] - mx).exp() / z;
            }
        }
    }
    PosteriorSamples::new(probs, (0..n).collect()).unwrap()
}

/// Three well separated classes, low regime, a tiny network and a 2-cell
/// sweep. Runs a full pipeline in a couple of seconds.
pub fn tiny_config(seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        seeds,
        metric: Some(Metric::Accuracy),
        timing: false,
        dataset: DatasetConfig {
            kind: DatasetKind::Mixture,
            name: Some("tiny".into()),
            classes: Some(3),
            per_class: 150,
            separation: 4.0,
            distractors: 2,
            seed: 7,
            ..DatasetConfig::default()
        },
        regime: RegimeConfig {
            name: RegimeName::Low,
            overrides: RegimeOverride {
                steps: Some(3),
                ..RegimeOverride::default()
            },
        },
        qm: QmConfig {
            name: OneOrMany::Many(vec![QueryMethod::Random, QueryMethod::Bald, QueryMethod::CoreSet]),
            ..QmConfig::default()
        },
        model: ModelConfig {
            lr: OneOrMany::Many(vec![0.05, 0.01]),
            wd: OneOrMany::One(5e-4),
            noise: OneOrMany::One(0.0),
            hidden: vec![16],
            epochs: 8,
            batch: 32,
            upsample: 120,
            ..ModelConfig::default()
        },
        mc: McConfig { samples: 10 },
        ..ExperimentConfig::default()
    }
}

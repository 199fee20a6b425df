//! TOML experiment configuration.
//!
//! ```toml
//! seeds = [0, 1, 2]
//! metric = "mean_recall"
//!
//! [dataset]
//! kind = "mixture"
//! classes = 5
//! longtail = 50.0
//!
//! [regime]
//! name = "low"
//!
//! [qm]
//! name = ["random", "bald"]
//!
//! [model]
//! lr = [0.1, 0.01]
//! loss_weighting = ["uniform", "balanced"]
//! ```
//!
//! Grid-valued keys (`model.lr`, `model.wd`, `model.noise`) take a number or
//! a list; `qm.name` and `model.loss_weighting` take a string or a list.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{LabelStrategy, RegimeTable};
use crate::domain::{LabelRegime, RegimeName};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::model::{Hyperparams, LossWeighting, TrainingStrategy};
use crate::posterior::{JointConfig, JointMode};
use crate::query::QueryMethod;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Mixture,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub kind: DatasetKind,
    #[serde(default)]
    pub name: Option<String>,
    /// CSV file, relative paths resolve against the config file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default)]
    pub classes: Option<usize>,
    /// Mixture samples per class before splitting.
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    /// Pairwise distance between mixture class means.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Pure-noise feature dimensions added to the mixture.
    #[serde(default)]
    pub distractors: usize,
    /// Seed of the generated dataset (fixed across runs).
    #[serde(default)]
    pub seed: u64,
    /// Imbalance factor ρ of the long-tail pool; absent means balanced.
    #[serde(default)]
    pub longtail: Option<f64>,
    #[serde(default = "default_test_frac")]
    pub test_frac: f64,
    #[serde(default = "default_val_frac")]
    pub val_frac: f64,
    /// Z-score every feature column. Defaults to on for CSV data and off for
    /// the generated mixture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardize: Option<bool>,
}

impl DatasetConfig {
    pub fn standardize(&self) -> bool {
        self.standardize.unwrap_or(self.kind == DatasetKind::Csv)
    }
}

fn default_label_column() -> String {
    "label".into()
}
fn default_per_class() -> usize {
    400
}
fn default_separation() -> f64 {
    3.0
}
fn default_test_frac() -> f64 {
    0.25
}
fn default_val_frac() -> f64 {
    0.15
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Mixture,
            name: None,
            path: None,
            label_column: default_label_column(),
            classes: None,
            per_class: default_per_class(),
            separation: default_separation(),
            distractors: 0,
            seed: 0,
            longtail: None,
            test_frac: default_test_frac(),
            val_frac: default_val_frac(),
            standardize: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeOverride {
    pub start: Option<usize>,
    pub query: Option<usize>,
    pub steps: Option<usize>,
    pub val: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    #[serde(default = "default_regime")]
    pub name: RegimeName,
    #[serde(default, rename = "override")]
    pub overrides: RegimeOverride,
}

fn default_regime() -> RegimeName {
    RegimeName::Low
}

impl Default for RegimeConfig {
    fn default() -> Self {
        RegimeConfig {
            name: RegimeName::Low,
            overrides: RegimeOverride::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointToml {
    #[serde(default = "default_joint_mode")]
    pub mode: JointMode,
    #[serde(default = "default_max_exact")]
    pub max_exact: usize,
    #[serde(default = "default_m")]
    pub m: usize,
}

fn default_joint_mode() -> JointMode {
    JointConfig::default().mode
}
fn default_max_exact() -> usize {
    JointConfig::default().max_exact_configs
}
fn default_m() -> usize {
    JointConfig::default().sampled_config_count
}

impl Default for JointToml {
    fn default() -> Self {
        JointToml {
            mode: default_joint_mode(),
            max_exact: default_max_exact(),
            m: default_m(),
        }
    }
}

impl From<JointToml> for JointConfig {
    fn from(j: JointToml) -> Self {
        JointConfig {
            mode: j.mode,
            max_exact_configs: j.max_exact,
            sampled_config_count: j.m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QmConfig {
    #[serde(default = "default_qm")]
    pub name: OneOrMany<QueryMethod>,
    #[serde(default)]
    pub joint: JointToml,
}

fn default_qm() -> OneOrMany<QueryMethod> {
    OneOrMany::One(QueryMethod::Random)
}

impl Default for QmConfig {
    fn default() -> Self {
        QmConfig {
            name: default_qm(),
            joint: JointToml::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_lr")]
    pub lr: OneOrMany<f64>,
    #[serde(default = "default_wd")]
    pub wd: OneOrMany<f64>,
    #[serde(default = "default_noise")]
    pub noise: OneOrMany<f64>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Absent: balanced for long-tail pools, uniform otherwise.
    #[serde(default)]
    pub loss_weighting: Option<OneOrMany<LossWeighting>>,
    #[serde(default = "default_upsample")]
    pub upsample: usize,
}

fn default_lr() -> OneOrMany<f64> {
    OneOrMany::Many(vec![0.1, 0.01])
}
fn default_wd() -> OneOrMany<f64> {
    OneOrMany::Many(vec![5e-3, 5e-4])
}
fn default_noise() -> OneOrMany<f64> {
    OneOrMany::Many(vec![0.0, 0.1])
}
fn default_hidden() -> Vec<usize> {
    Hyperparams::default().hidden_sizes
}
fn default_dropout() -> f64 {
    Hyperparams::default().dropout_p
}
fn default_epochs() -> usize {
    Hyperparams::default().epochs
}
fn default_batch() -> usize {
    Hyperparams::default().batch_size
}
fn default_momentum() -> f64 {
    Hyperparams::default().momentum
}
fn default_upsample() -> usize {
    Hyperparams::default().upsample_target
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lr: default_lr(),
            wd: default_wd(),
            noise: default_noise(),
            hidden: default_hidden(),
            dropout: default_dropout(),
            epochs: default_epochs(),
            batch: default_batch(),
            momentum: default_momentum(),
            loss_weighting: None,
            upsample: default_upsample(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    #[serde(default)]
    pub kind: TrainingStrategy,
    /// Noise added to the latent coordinates by the oracle representation.
    #[serde(default = "default_repr_noise")]
    pub noise: f64,
}

fn default_repr_noise() -> f64 {
    0.1
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: TrainingStrategy::FromScratch,
            noise: default_repr_noise(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    50
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { samples: 50 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsConfig {
    /// Absent: pool_random for long-tail pools, balanced otherwise.
    #[serde(default)]
    pub strategy: Option<LabelStrategy>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    /// Candidate pool size drawn from the unlabeled set at each query step.
    #[serde(default)]
    pub subsample: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub metric: Option<Metric>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Record wall-clock seconds per step; off makes outputs byte-stable.
    #[serde(default = "default_timing")]
    pub timing: bool,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub regime: RegimeConfig,
    #[serde(default)]
    pub qm: QmConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub labels: LabelsConfig,
    #[serde(default)]
    pub pool: PoolConfig,
}

fn default_timing() -> bool {
    true
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: vec![0],
            metric: None,
            out: None,
            timing: true,
            dataset: DatasetConfig::default(),
            regime: RegimeConfig::default(),
            qm: QmConfig::default(),
            model: ModelConfig::default(),
            strategy: StrategyConfig::default(),
            mc: McConfig::default(),
            labels: LabelsConfig::default(),
            pool: PoolConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; a relative `dataset.path` is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(p), Some(dir)) = (cfg.dataset.path.as_ref(), path.parent()) {
            if p.is_relative() {
                cfg.dataset.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn is_longtail(&self) -> bool {
        self.dataset.longtail.is_some()
    }

    pub fn metric(&self) -> Metric {
        self.metric.unwrap_or(if self.is_longtail() {
            Metric::MeanRecall
        } else {
            Metric::Accuracy
        })
    }

    pub fn loss_weightings(&self) -> Vec<LossWeighting> {
        match &self.model.loss_weighting {
            Some(v) => v.to_vec(),
            None if self.is_longtail() => vec![LossWeighting::Balanced],
            None => vec![LossWeighting::Uniform],
        }
    }

    /// Ablation arms are tagged when more than one weighting runs.
    pub fn variant_tag(&self, weighting: LossWeighting) -> Option<String> {
        (self.loss_weightings().len() > 1).then(|| weighting.name().to_string())
    }

    pub fn label_strategy(&self) -> LabelStrategy {
        self.labels.strategy.unwrap_or(if self.is_longtail() {
            LabelStrategy::PoolRandom
        } else {
            LabelStrategy::Balanced
        })
    }

    pub fn query_methods(&self) -> Vec<QueryMethod> {
        self.qm.name.to_vec()
    }

    pub fn joint(&self) -> JointConfig {
        self.qm.joint.into()
    }

    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.dataset.name {
            return n.clone();
        }
        match self.dataset.kind {
            DatasetKind::Mixture if self.is_longtail() => "mixture-lt".into(),
            DatasetKind::Mixture => "mixture".into(),
            DatasetKind::Csv => self
                .dataset
                .path
                .as_ref()
                .and_then(|p| p.file_stem())
                .map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned()),
        }
    }

    /// Sweep grid in ascending `(lr, wd, noise)` order.
    pub fn hp_grid(&self, weighting: LossWeighting) -> Vec<Hyperparams> {
        let sorted = |v: &OneOrMany<f64>| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let mut grid = Vec::new();
        for &lr in &sorted(&self.model.lr) {
            for &wd in &sorted(&self.model.wd) {
                for &noise in &sorted(&self.model.noise) {
                    grid.push(Hyperparams {
                        learning_rate: lr,
                        weight_decay: wd,
                        feature_noise_sigma: noise,
                        hidden_sizes: self.model.hidden.clone(),
                        dropout_p: self.model.dropout,
                        epochs: self.model.epochs,
                        batch_size: self.model.batch,
                        momentum: self.model.momentum,
                        loss_weighting: weighting,
                        upsample_target: self.model.upsample,
                    });
                }
            }
        }
        grid
    }

    /// Regime for `class_count` classes with `val_available` validation
    /// samples, after applying any `regime.override` entries.
    pub fn regime(&self, class_count: usize, val_available: usize) -> Result<LabelRegime> {
        let mut r = crate::data::regime_for(class_count, self.regime.name, &RegimeTable::paper(), Some(val_available))?;
        let o = self.regime.overrides;
        if let Some(v) = o.start {
            r.starting_budget = v;
        }
        if let Some(v) = o.query {
            r.query_size = v;
        }
        if let Some(v) = o.steps {
            r.query_steps = v;
        }
        if let Some(v) = o.val {
            r.val_size = v.min(val_available);
        }
        LabelRegime::new(r.name, r.starting_budget, r.query_size, r.query_steps, r.val_size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        let qms = self.query_methods();
        if qms.is_empty() {
            return bad("qm.name must list at least one method".into());
        }
        for (i, q) in qms.iter().enumerate() {
            if qms[..i].contains(q) {
                return bad(format!("query method `{}` listed twice", q.name()));
            }
        }
        let weightings = self.loss_weightings();
        if weightings.is_empty() || (weightings.len() == 2 && weightings[0] == weightings[1]) || weightings.len() > 2 {
            return bad("model.loss_weighting must list distinct values".into());
        }
        if self.model.loss_weighting.is_none() && self.is_longtail() && self.metric() != Metric::MeanRecall {
            return bad("long-tail pools weight the loss by default and need metric = \"mean_recall\"".into());
        }
        for (key, v) in [("model.lr", &self.model.lr), ("model.wd", &self.model.wd), ("model.noise", &self.model.noise)] {
            if v.to_vec().is_empty() {
                return bad(format!("{key} grid must not be empty"));
            }
        }
        for hp in self.hp_grid(weightings[0]) {
            hp.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.mc.samples == 0 {
            return bad("mc.samples must be >= 1".into());
        }
        let d = &self.dataset;
        for (key, f) in [("dataset.test_frac", d.test_frac), ("dataset.val_frac", d.val_frac)] {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("{key} must lie in (0, 1)"));
            }
        }
        if d.test_frac + d.val_frac >= 1.0 {
            return bad("dataset.test_frac + dataset.val_frac must stay below 1".into());
        }
        if let Some(rho) = d.longtail {
            if !(rho > 1.0) {
                return bad(format!("dataset.longtail must exceed 1, got {rho}"));
            }
        }
        match d.kind {
            DatasetKind::Csv if d.path.is_none() => return bad("dataset.path is required for csv".into()),
            DatasetKind::Csv if self.strategy.kind == TrainingStrategy::OracleRepresentation => {
                return bad("oracle_representation needs a generated dataset".into())
            }
            DatasetKind::Mixture if d.classes.is_some_and(|c| c < 2) => {
                return bad("dataset.classes must be >= 2".into())
            }
            _ => {}
        }
        if self.strategy.noise < 0.0 {
            return bad("strategy.noise must be >= 0".into());
        }
        if self.pool.subsample == Some(0) {
            return bad("pool.subsample must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_keys_parse() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
seeds = [1, 2]
metric = "mean_recall"
out = "runs"

[dataset]
kind = "mixture"
classes = 4
longtail = 20.0

[regime]
name = "medium"
override = { start = 30, steps = 3 }

[qm]
name = ["random", "batchbald", "coreset"]
joint = { mode = "sampled", max_exact = 500, m = 128 }

[model]
lr = 0.05
wd = [5e-4]
noise = [0.0, 0.1]
hidden = [16]
dropout = 0.25
epochs = 5
batch = 32
momentum = 0.9
loss_weighting = ["uniform", "balanced"]
upsample = 300

[strategy]
kind = "oracle_representation"

[mc]
samples = 20

[labels]
strategy = "balanced"

[pool]
subsample = 200
"#,
        )
        .unwrap();
        assert_eq!(cfg.query_methods(), vec![QueryMethod::Random, QueryMethod::BatchBald, QueryMethod::CoreSet]);
        assert_eq!(cfg.joint().mode, JointMode::Sampled);
        assert_eq!(cfg.hp_grid(LossWeighting::Uniform).len(), 2);
        assert_eq!(cfg.variant_tag(LossWeighting::Balanced).as_deref(), Some("balanced"));
        let r = cfg.regime(4, 10_000).unwrap();
        assert_eq!((r.starting_budget, r.query_size, r.query_steps, r.val_size), (30, 100, 3, 500));
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::from_toml_str("seeds = [0]").unwrap();
        assert_eq!(cfg.mc.samples, 50);
        assert_eq!(cfg.hp_grid(LossWeighting::Uniform).len(), 8);
        assert_eq!(cfg.metric(), Metric::Accuracy);
        assert_eq!(cfg.label_strategy(), LabelStrategy::Balanced);
        assert_eq!(cfg.variant_tag(LossWeighting::Uniform), None);

        let lt = ExperimentConfig::from_toml_str("seeds = [0]\n[dataset]\nlongtail = 50.0").unwrap();
        assert_eq!(lt.loss_weightings(), vec![LossWeighting::Balanced]);
        assert_eq!(lt.metric(), Metric::MeanRecall);
        assert_eq!(lt.label_strategy(), LabelStrategy::PoolRandom);
    }

    #[test]
    fn grid_is_sorted_lexicographically() {
        let cfg = ExperimentConfig::from_toml_str("seeds = [0]\n[model]\nlr = [0.1, 0.01]\nwd = [5e-3, 5e-4]\nnoise = [0.1, 0.0]").unwrap();
        let keys: Vec<(f64, f64, f64)> = cfg
            .hp_grid(LossWeighting::Uniform)
            .iter()
            .map(|h| (h.learning_rate, h.weight_decay, h.feature_noise_sigma))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(keys, sorted);
        assert_eq!(keys[0], (0.01, 5e-4, 0.0));
    }

    #[test]
    fn rejects_invalid_configs() {
        for text in [
            "seeds = []",
            "seeds = [1, 1]",
            "seeds = [0]\nmetric = \"accuracy\"\n[dataset]\nlongtail = 50.0",
            "seeds = [0]\n[qm]\nname = \"vaal\"",
            "seeds = [0]\n[qm]\nname = [\"bald\", \"bald\"]",
            "seeds = [0]\n[dataset]\nkind = \"csv\"",
            "seeds = [0]\n[model]\ndropout = 1.0",
            "seeds = [0]\n[model]\nlr = []",
            "seeds = [0]\nbogus = 1",
            "seeds = [0]\n[dataset]\ntest_frac = 0.6\nval_frac = 0.5",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "accepted: {text}");
        }
        // explicit uniform weighting on a long tail may use accuracy
        assert!(ExperimentConfig::from_toml_str(
            "seeds = [0]\nmetric = \"accuracy\"\n[dataset]\nlongtail = 50.0\n[model]\nloss_weighting = \"uniform\""
        )
        .is_ok());
    }
}

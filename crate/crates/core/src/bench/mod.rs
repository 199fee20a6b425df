//! Experiment orchestration: per-seed setup, the hyperparameter sweep on the
//! starting budget, the acquisition loop, aggregation over seeds and the
//! comparison against random queries.
//!
//! Every random choice is drawn from a stream derived from the run seed, the
//! step index and a purpose tag, so results do not depend on scheduling and
//! comparisons between query methods share splits and starting labels.

pub mod cli;
pub mod config;
pub mod presets;
pub mod report;

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, LongTailSpec, MixtureSpec};
use crate::domain::{DataSplits, Dataset, LabelRegime, LabelState, RunRecord, StepRow};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::model::{self, Hyperparams, LabeledSet, LossWeighting, TrainedModel, TrainingStrategy};
use crate::query::{Embeddings, QueryContext, QueryMethod};
use crate::seed::{self, Purpose};

pub use crate::metrics::{accuracy, mean_recall};
pub use config::ExperimentConfig;

// =============================================================================
// Setup
// =============================================================================

/// Builds the configured dataset: a generated mixture or a CSV file.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let d = &cfg.dataset;
    match d.kind {
        config::DatasetKind::Mixture => {
            let classes = d.classes.unwrap_or(5);
            let spec = MixtureSpec::simplex(classes, d.per_class, d.separation, d.distractors, d.seed);
            data::generate_mixture(&spec)
        }
        config::DatasetKind::Csv => {
            let path = d.path.as_ref().ok_or_else(|| Error::Config("dataset.path missing".into()))?;
            Ok(data::load_csv(path, &d.label_column, d.classes)?.0)
        }
    }
}

/// A dataset bound to a config, with the training features already chosen
/// by the training strategy.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    pub features: Array2<f64>,
}

/// Everything about one seed that every query method shares.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSetup {
    pub seed: u64,
    pub splits: DataSplits,
    pub val_subset: Vec<usize>,
    pub initial: Vec<usize>,
    pub regime: LabelRegime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub feature_noise_sigma: f64,
    pub val_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub loss_weighting: LossWeighting,
    pub cells: Vec<SweepCell>,
    pub chosen: Hyperparams,
}

/// One persisted run: the config echo, the frozen hyperparameters and the
/// per-step trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDocument {
    pub config: ExperimentConfig,
    pub hp: Hyperparams,
    pub qm: String,
    pub dataset: String,
    pub regime: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub rows: Vec<StepRow>,
}

impl RunDocument {
    pub fn new(config: ExperimentConfig, hp: Hyperparams, record: RunRecord) -> Self {
        RunDocument {
            config,
            hp,
            qm: record.qm,
            dataset: record.dataset,
            regime: record.regime,
            seed: record.seed,
            variant: record.variant,
            rows: record.rows,
        }
    }

    pub fn record(&self) -> Result<RunRecord> {
        let r = RunRecord {
            qm: self.qm.clone(),
            dataset: self.dataset.clone(),
            regime: self.regime.clone(),
            seed: self.seed,
            variant: self.variant.clone(),
            rows: self.rows.clone(),
        };
        r.validate()?;
        Ok(r)
    }
}

impl Experiment {
    pub fn new(config: ExperimentConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        let features = match config.strategy.kind {
            TrainingStrategy::FromScratch if config.dataset.standardize() => data::standardize(dataset.features()),
            TrainingStrategy::FromScratch => dataset.features().clone(),
            TrainingStrategy::OracleRepresentation => {
                data::oracle_representation(&dataset, config.strategy.noise, config.dataset.seed)?
            }
        };
        Ok(Experiment {
            config,
            dataset,
            features,
        })
    }

    pub fn from_config(config: ExperimentConfig) -> Result<Self> {
        let ds = load_dataset(&config)?;
        Self::new(config, ds)
    }

    pub fn class_count(&self) -> usize {
        self.dataset.class_count()
    }

    fn labeled_set(&self, indices: &[usize]) -> Result<LabeledSet> {
        LabeledSet::new(
            self.features.select(ndarray::Axis(0), indices),
            self.dataset.labels_at(indices),
            self.class_count(),
        )
    }

    /// Splits, long-tail pool, validation subset, regime and starting labels.
    pub fn setup(&self, run_seed: u64) -> Result<SeedSetup> {
        let cfg = &self.config;
        let ds = &self.dataset;
        let mut splits = data::make_splits(
            ds,
            cfg.dataset.test_frac,
            cfg.dataset.val_frac,
            &mut seed::stream(run_seed, 0, Purpose::Split),
        )?;
        if let Some(rho) = cfg.dataset.longtail {
            let hist = ds.class_histogram(&splits.pool_indices);
            let n_max = *hist.iter().min().expect("classes");
            let counts = data::longtail_counts(&LongTailSpec {
                n_max,
                imbalance_factor: rho,
                class_count: ds.class_count(),
            })?;
            splits.pool_indices = data::apply_longtail(
                ds,
                &splits.pool_indices,
                &counts,
                &mut seed::stream(run_seed, 0, Purpose::LongTail),
            )?;
        }
        let regime = cfg.regime(ds.class_count(), splits.val_indices.len())?;
        if regime.final_budget() > splits.pool_indices.len() {
            return Err(Error::Config(format!(
                "final budget {} exceeds the pool of {}",
                regime.final_budget(),
                splits.pool_indices.len()
            )));
        }
        let val_subset = data::stratified_subset(
            ds,
            &splits.val_indices,
            regime.val_size,
            &mut seed::stream(run_seed, 0, Purpose::ValSubset),
        );
        let initial = data::initial_label_strategy(
            ds,
            &splits.pool_indices,
            regime.starting_budget,
            cfg.label_strategy(),
            &mut seed::stream(run_seed, 0, Purpose::InitialLabels),
        )?;
        Ok(SeedSetup {
            seed: run_seed,
            splits,
            val_subset,
            initial,
            regime,
        })
    }

    fn fit(&self, labeled: &[usize], val: &LabeledSet, hp: &Hyperparams, model_seed: u64) -> Result<TrainedModel> {
        model::fit(
            &self.labeled_set(labeled)?,
            val,
            hp,
            self.config.strategy.kind,
            self.config.metric(),
            model_seed,
        )
    }

    /// Trains every grid cell on the starting budget and keeps the best on
    /// the validation subset. Ties go to the lexicographically smallest
    /// `(lr, wd, noise)` because the grid is sorted that way.
    pub fn hp_sweep(&self, setup: &SeedSetup, weighting: LossWeighting) -> Result<SweepReport> {
        let grid = self.config.hp_grid(weighting);
        hp_sweep_grid(&grid, |cell, hp| {
            let val = self.labeled_set(&setup.val_subset)?;
            let m = self.fit(&setup.initial, &val, hp, seed::derive(setup.seed, cell as u64, Purpose::Sweep))?;
            Ok(m.best_val_metric)
        })
        .map(|(cells, chosen)| SweepReport {
            seed: setup.seed,
            loss_weighting: weighting,
            cells,
            chosen,
        })
    }

    /// Runs the acquisition loop for one query method with frozen `hp`.
    pub fn run_al_loop(&self, setup: &SeedSetup, hp: &Hyperparams, qm: QueryMethod, variant: Option<String>) -> Result<RunRecord> {
        let cfg = &self.config;
        let regime = setup.regime;
        let val = self.labeled_set(&setup.val_subset)?;
        let test = self.labeled_set(&setup.splits.test_indices)?;
        let metric: Metric = cfg.metric();
        let joint = cfg.joint();
        let s = setup.seed;

        let mut state = LabelState::new(&setup.splits.pool_indices, &setup.initial)?;
        let mut rows = Vec::with_capacity(regime.query_steps + 1);
        let mut current: Option<TrainedModel> = None;
        for step in 0..=regime.query_steps {
            let started = Instant::now();
            if let Some(model) = &current {
                let candidates = match cfg.pool.subsample {
                    Some(t) if t < state.unlabeled().len() => {
                        data::subsample_pool(&state, t, &mut seed::stream(s, step as u64, Purpose::PoolSubsample))?
                    }
                    _ => state.clone(),
                };
                let ids = candidates.unlabeled_vec();
                let posterior = if qm.needs_posterior() {
                    let x = self.features.select(ndarray::Axis(0), &ids);
                    Some(model.predict_mc(&x, ids.clone(), cfg.mc.samples, seed::derive(s, step as u64, Purpose::McDropout))?)
                } else {
                    None
                };
                let embeddings = if qm.needs_embeddings() {
                    let mut all: Vec<usize> = candidates.labeled().to_vec();
                    all.extend(&ids);
                    let x = self.features.select(ndarray::Axis(0), &all);
                    Some(Embeddings::new(model.embed(&x), all)?)
                } else {
                    None
                };
                let mut ctx = QueryContext::new(&candidates, regime.query_size, seed::derive(s, step as u64, Purpose::Query));
                if let Some(p) = &posterior {
                    ctx = ctx.with_posterior(p);
                }
                if let Some(e) = &embeddings {
                    ctx = ctx.with_embeddings(e);
                }
                let sel = qm.select(&ctx, &joint)?;
                state = state.with_labeled(&sel.chosen)?;
            }
            let model = self.fit(state.labeled(), &val, hp, seed::derive(s, step as u64, Purpose::ModelInit))?;
            let test_metric = model.evaluate(&test, metric)?;
            rows.push(StepRow {
                step,
                n_labeled: state.labeled().len(),
                val: model.best_val_metric,
                test: test_metric,
                wall_seconds: if cfg.timing { started.elapsed().as_secs_f64() } else { 0.0 },
            });
            current = Some(model);
        }
        let record = RunRecord {
            qm: qm.name().to_string(),
            dataset: cfg.dataset_name(),
            regime: regime.name.to_string(),
            seed: s,
            variant,
            rows,
        };
        record.validate_against(&regime)?;
        Ok(record)
    }

    /// Sweeps once per (seed, loss weighting) and runs every query method
    /// with the chosen hyperparameters. Work items run on the current rayon
    /// pool; results come back in config order.
    pub fn execute(&self) -> Result<ExperimentOutput> {
        let cfg = &self.config;
        let setups: Vec<SeedSetup> = cfg
            .seeds
            .par_iter()
            .map(|&s| self.setup(s))
            .collect::<Result<_>>()?;
        let arms: Vec<(usize, LossWeighting)> = (0..setups.len())
            .flat_map(|i| cfg.loss_weightings().into_iter().map(move |w| (i, w)))
            .collect();
        let sweeps: Vec<SweepReport> = arms
            .par_iter()
            .map(|&(i, w)| self.hp_sweep(&setups[i], w))
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, QueryMethod)> = (0..arms.len())
            .flat_map(|a| cfg.query_methods().into_iter().map(move |q| (a, q)))
            .collect();
        let runs: Vec<RunDocument> = jobs
            .par_iter()
            .map(|&(a, qm)| {
                let (i, w) = arms[a];
                let hp = &sweeps[a].chosen;
                let rec = self.run_al_loop(&setups[i], hp, qm, cfg.variant_tag(w))?;
                Ok(RunDocument::new(cfg.clone(), hp.clone(), rec))
            })
            .collect::<Result<_>>()?;
        Ok(ExperimentOutput { sweeps, runs })
    }

    /// Sweep reports only.
    pub fn execute_sweeps(&self) -> Result<Vec<SweepReport>> {
        let cfg = &self.config;
        let arms: Vec<(u64, LossWeighting)> = cfg
            .seeds
            .iter()
            .flat_map(|&s| cfg.loss_weightings().into_iter().map(move |w| (s, w)))
            .collect();
        arms.par_iter()
            .map(|&(s, w)| self.hp_sweep(&self.setup(s)?, w))
            .collect()
    }
}

/// Trains every cell through `train` and returns the report cells and the
/// argmax. The first maximal cell wins, so sorted grids resolve ties to the
/// smallest key. Fails only when every cell fails.
pub fn hp_sweep_grid<F>(grid: &[Hyperparams], train: F) -> Result<(Vec<SweepCell>, Hyperparams)>
where
    F: Fn(usize, &Hyperparams) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    let outcomes: Vec<Result<f64>> = grid.par_iter().enumerate().map(|(i, hp)| train(i, hp)).collect();
    let mut best: Option<(f64, usize)> = None;
    let mut cells = Vec::with_capacity(grid.len());
    let mut errors = Vec::new();
    for (i, (hp, out)) in grid.iter().zip(outcomes).enumerate() {
        let (val_metric, error) = match out {
            Ok(v) if v.is_finite() => (Some(v), None),
            Ok(v) => (None, Some(format!("non-finite metric {v}"))),
            Err(e) => (None, Some(e.to_string())),
        };
        if let Some(v) = val_metric {
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, i));
            }
        }
        if let Some(e) = &error {
            errors.push(e.clone());
        }
        cells.push(SweepCell {
            learning_rate: hp.learning_rate,
            weight_decay: hp.weight_decay,
            feature_noise_sigma: hp.feature_noise_sigma,
            val_metric,
            error,
        });
    }
    match best {
        Some((_, i)) => Ok((cells, grid[i].clone())),
        None => Err(Error::Training(format!("every sweep cell failed: {}", errors.join("; ")))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub sweeps: Vec<SweepReport>,
    pub runs: Vec<RunDocument>,
}

impl ExperimentOutput {
    pub fn records(&self) -> Result<Vec<RunRecord>> {
        self.runs.iter().map(RunDocument::record).collect()
    }
}

/// Runs `f` on a dedicated pool of `jobs` threads (`None`: rayon default).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

// =============================================================================
// Aggregation and comparison
// =============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub n_labeled: usize,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub sd: f64,
    pub values: Vec<f64>,
}

/// Test-metric learning curve of one series over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub series: String,
    pub seeds: Vec<u64>,
    pub points: Vec<CurvePoint>,
}

impl AggregateCurve {
    pub fn final_point(&self) -> &CurvePoint {
        self.points.last().expect("non-empty curve")
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-step mean and population SD over the records of one series.
pub fn aggregate(records: &[RunRecord]) -> Result<AggregateCurve> {
    let first = records.first().ok_or_else(|| Error::Empty("no run records to aggregate".into()))?;
    let grid: Vec<(usize, usize)> = first.rows.iter().map(|r| (r.step, r.n_labeled)).collect();
    for r in records {
        if r.series() != first.series() {
            return Err(Error::Invariant(format!("mixed series {} and {}", first.series(), r.series())));
        }
        let g: Vec<(usize, usize)> = r.rows.iter().map(|r| (r.step, r.n_labeled)).collect();
        if g != grid {
            return Err(Error::Invariant(format!("seed {} has a different step grid", r.seed)));
        }
    }
    let points = grid
        .iter()
        .enumerate()
        .map(|(i, &(step, n_labeled))| {
            let values: Vec<f64> = records.iter().map(|r| r.rows[i].test).collect();
            let (mean, sd) = mean_sd(&values);
            CurvePoint {
                step,
                n_labeled,
                mean,
                sd,
                values,
            }
        })
        .collect();
    Ok(AggregateCurve {
        series: first.series(),
        seeds: records.iter().map(|r| r.seed).collect(),
        points,
    })
}

/// Groups records by series (sorted by series, then seed) and aggregates.
pub fn aggregate_all(records: &[RunRecord]) -> Result<Vec<AggregateCurve>> {
    let mut groups: std::collections::BTreeMap<String, Vec<RunRecord>> = Default::default();
    for r in records {
        groups.entry(r.series()).or_default().push(r.clone());
    }
    groups
        .into_values()
        .map(|mut g| {
            g.sort_by_key(|r| r.seed);
            aggregate(&g)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub series: String,
    pub baseline: String,
    /// `qm mean − baseline mean` per step.
    pub step_delta: Vec<f64>,
    /// `(seed, qm final − baseline final)`
    pub paired_final_delta: Vec<(u64, f64)>,
    /// Trapezoid area between the mean curves over `n_labeled`.
    pub area_delta: f64,
    /// Steps where the qm mean strictly exceeds the baseline mean.
    pub steps_above: usize,
    pub steps_below: usize,
}

impl ComparisonReport {
    pub fn mean_final_delta(&self) -> f64 {
        let n = self.paired_final_delta.len() as f64;
        self.paired_final_delta.iter().map(|(_, d)| d).sum::<f64>() / n
    }
}

pub fn compare_to_random(qm: &AggregateCurve, random: &AggregateCurve) -> Result<ComparisonReport> {
    let grid = |c: &AggregateCurve| c.points.iter().map(|p| (p.step, p.n_labeled)).collect::<Vec<_>>();
    if grid(qm) != grid(random) {
        return Err(Error::Invariant(format!(
            "{} and {} have different step grids",
            qm.series, random.series
        )));
    }
    if qm.seeds != random.seeds {
        return Err(Error::Invariant(format!(
            "{} and {} were run on different seeds",
            qm.series, random.series
        )));
    }
    let step_delta: Vec<f64> = qm.points.iter().zip(&random.points).map(|(a, b)| a.mean - b.mean).collect();
    let area_delta = qm
        .points
        .windows(2)
        .zip(step_delta.windows(2))
        .map(|(p, d)| (p[1].n_labeled - p[0].n_labeled) as f64 * (d[0] + d[1]) / 2.0)
        .sum();
    let (fq, fr) = (qm.final_point(), random.final_point());
    let paired_final_delta = qm
        .seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, fq.values[i] - fr.values[i]))
        .collect();
    Ok(ComparisonReport {
        series: qm.series.clone(),
        baseline: random.series.clone(),
        steps_above: step_delta.iter().filter(|&&d| d > 0.0).count(),
        steps_below: step_delta.iter().filter(|&&d| d < 0.0).count(),
        step_delta,
        paired_final_delta,
        area_delta,
    })
}

//! Core data types shared by every module.
//!
//! All types validate their invariants on construction and on
//! deserialization; none of them carry behavior beyond that.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// =============================================================================
// Dataset
// =============================================================================

/// A labeled feature matrix with dense class ids `0..class_count`.
///
/// Synthetic datasets additionally keep the latent coordinates they were
/// generated from, which the oracle-representation training strategy uses as
/// a stand-in for a pre-trained feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr", into = "DatasetRepr")]
pub struct Dataset {
    name: String,
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
    latent: Option<Array2<f64>>,
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    name: String,
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    latent: Option<Array2<f64>>,
}

impl TryFrom<DatasetRepr> for Dataset {
    type Error = Error;

    fn try_from(r: DatasetRepr) -> Result<Self> {
        let ds = Dataset::new(r.name, r.features, r.labels, r.class_count)?;
        match r.latent {
            Some(latent) => ds.with_latent(latent),
            None => Ok(ds),
        }
    }
}

impl From<Dataset> for DatasetRepr {
    fn from(d: Dataset) -> Self {
        DatasetRepr {
            name: d.name,
            features: d.features,
            labels: d.labels,
            class_count: d.class_count,
            latent: d.latent,
        }
    }
}

fn check_finite(m: &ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Array2<f64>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if features.nrows() == 0 || labels.is_empty() {
            return Err(Error::Empty("dataset has no samples".into()));
        }
        if features.ncols() == 0 {
            return Err(Error::Empty("dataset has no feature columns".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if class_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "class_count must be at least 2, got {class_count}"
            )));
        }
        check_finite(&features.view())?;
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count)
        {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                class_count,
            });
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            class_count,
            latent: None,
        })
    }

    /// Attaches latent coordinates (one row per sample).
    pub fn with_latent(mut self, latent: Array2<f64>) -> Result<Self> {
        if latent.nrows() != self.len() || latent.ncols() == 0 {
            return Err(Error::Shape(format!(
                "latent matrix {:?} does not match {} samples",
                latent.dim(),
                self.len()
            )));
        }
        check_finite(&latent.view())?;
        self.latent = Some(latent);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn latent(&self) -> Option<&Array2<f64>> {
        self.latent.as_ref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Copies the selected rows into a fresh matrix.
    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), indices)
    }

    pub fn labels_at(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Per-class sample counts over the given indices.
    pub fn class_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &i in indices {
            h[self.labels[i]] += 1;
        }
        h
    }

    /// Same dataset with the feature matrix replaced (e.g. by a representation).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        let ds = Dataset::new(
            self.name.clone(),
            features,
            self.labels.clone(),
            self.class_count,
        )?;
        match &self.latent {
            Some(l) => ds.with_latent(l.clone()),
            None => Ok(ds),
        }
    }
}

/// Builds a [`Dataset`] from raw row vectors.
pub fn validate_dataset(
    name: &str,
    rows: &[Vec<f64>],
    labels: &[usize],
    class_count: usize,
) -> Result<Dataset> {
    if rows.is_empty() {
        return Err(Error::Empty("dataset has no samples".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let dim = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
        return Err(Error::Shape(format!(
            "row {i} has {} columns, expected {dim}",
            r.len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let features = Array2::from_shape_vec((rows.len(), dim), flat)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Dataset::new(name, features, labels.to_vec(), class_count)
}

// =============================================================================
// Splits and label state
// =============================================================================

/// Disjoint pool / validation / test index lists into one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplits {
    pub pool_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl DataSplits {
    pub fn new(
        pool_indices: Vec<usize>,
        val_indices: Vec<usize>,
        test_indices: Vec<usize>,
        dataset_len: usize,
    ) -> Result<Self> {
        let s = DataSplits {
            pool_indices,
            val_indices,
            test_indices,
        };
        s.validate(dataset_len)?;
        Ok(s)
    }

    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        let mut seen = vec![false; dataset_len];
        for (name, list) in [
            ("pool", &self.pool_indices),
            ("val", &self.val_indices),
            ("test", &self.test_indices),
        ] {
            for &i in list {
                if i >= dataset_len {
                    return Err(Error::Invariant(format!(
                        "{name} index {i} out of range for {dataset_len} samples"
                    )));
                }
                if seen[i] {
                    return Err(Error::Invariant(format!(
                        "index {i} appears twice across splits ({name})"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}

/// Partition of the pool into labeled and unlabeled dataset indices.
///
/// `labeled` keeps acquisition order. Updates produce a new value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabelStateRepr")]
pub struct LabelState {
    labeled: Vec<usize>,
    unlabeled: BTreeSet<usize>,
}

#[derive(Deserialize)]
struct LabelStateRepr {
    labeled: Vec<usize>,
    unlabeled: BTreeSet<usize>,
}

impl TryFrom<LabelStateRepr> for LabelState {
    type Error = Error;

    fn try_from(r: LabelStateRepr) -> Result<Self> {
        LabelState::from_parts(r.labeled, r.unlabeled)
    }
}

impl LabelState {
    /// Starts a state over `pool` with `initial` already labeled.
    pub fn new(pool: &[usize], initial: &[usize]) -> Result<Self> {
        let mut unlabeled: BTreeSet<usize> = BTreeSet::new();
        for &i in pool {
            if !unlabeled.insert(i) {
                return Err(Error::Invariant(format!("duplicate pool index {i}")));
            }
        }
        for &i in initial {
            if !unlabeled.remove(&i) {
                return Err(Error::Invariant(format!(
                    "initial index {i} is not an unlabeled pool member"
                )));
            }
        }
        Ok(LabelState {
            labeled: initial.to_vec(),
            unlabeled,
        })
    }

    pub fn from_parts(labeled: Vec<usize>, unlabeled: BTreeSet<usize>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &i in &labeled {
            if !seen.insert(i) {
                return Err(Error::Invariant(format!("duplicate labeled index {i}")));
            }
            if unlabeled.contains(&i) {
                return Err(Error::Invariant(format!(
                    "index {i} is both labeled and unlabeled"
                )));
            }
        }
        Ok(LabelState { labeled, unlabeled })
    }

    /// Moves `batch` from the unlabeled set to the end of the labeled list.
    pub fn with_labeled(&self, batch: &[usize]) -> Result<Self> {
        let mut next = self.clone();
        for &i in batch {
            if !next.unlabeled.remove(&i) {
                return Err(Error::Invariant(format!(
                    "queried index {i} is not unlabeled"
                )));
            }
            next.labeled.push(i);
        }
        Ok(next)
    }

    /// Same labeled list, unlabeled set replaced by a subset of itself.
    pub fn with_unlabeled_subset(&self, keep: BTreeSet<usize>) -> Result<Self> {
        if let Some(i) = keep.iter().find(|i| !self.unlabeled.contains(i)) {
            return Err(Error::Invariant(format!(
                "index {i} is not in the unlabeled set"
            )));
        }
        Ok(LabelState {
            labeled: self.labeled.clone(),
            unlabeled: keep,
        })
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<usize> {
        &self.unlabeled
    }

    /// Unlabeled indices in ascending order.
    pub fn unlabeled_vec(&self) -> Vec<usize> {
        self.unlabeled.iter().copied().collect()
    }

    pub fn pool_size(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }
}

// =============================================================================
// Label regimes
// =============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeName {
    Low,
    Medium,
    High,
}

impl RegimeName {
    pub const ALL: [RegimeName; 3] = [RegimeName::Low, RegimeName::Medium, RegimeName::High];

    pub fn as_str(self) -> &'static str {
        match self {
            RegimeName::Low => "low",
            RegimeName::Medium => "medium",
            RegimeName::High => "high",
        }
    }
}

impl fmt::Display for RegimeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegimeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(RegimeName::Low),
            "medium" | "mid" => Ok(RegimeName::Medium),
            "high" => Ok(RegimeName::High),
            other => Err(Error::InvalidArgument(format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabelRegimeRepr")]
pub struct LabelRegime {
    pub name: RegimeName,
    pub starting_budget: usize,
    pub query_size: usize,
    pub query_steps: usize,
    pub val_size: usize,
}

#[derive(Deserialize)]
struct LabelRegimeRepr {
    name: RegimeName,
    starting_budget: usize,
    query_size: usize,
    query_steps: usize,
    val_size: usize,
}

impl TryFrom<LabelRegimeRepr> for LabelRegime {
    type Error = Error;

    fn try_from(r: LabelRegimeRepr) -> Result<Self> {
        LabelRegime::new(
            r.name,
            r.starting_budget,
            r.query_size,
            r.query_steps,
            r.val_size,
        )
    }
}

impl LabelRegime {
    pub fn new(
        name: RegimeName,
        starting_budget: usize,
        query_size: usize,
        query_steps: usize,
        val_size: usize,
    ) -> Result<Self> {
        if starting_budget == 0 || query_size == 0 || query_steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "regime needs positive budget/query/steps, got {starting_budget}/{query_size}/{query_steps}"
            )));
        }
        Ok(LabelRegime {
            name,
            starting_budget,
            query_size,
            query_steps,
            val_size,
        })
    }

    pub fn final_budget(&self) -> usize {
        self.starting_budget + self.query_steps * self.query_size
    }

    /// Labeled-set size after `step` acquisitions.
    pub fn n_labeled_at(&self, step: usize) -> usize {
        self.starting_budget + step * self.query_size
    }
}

// =============================================================================
// Confusion matrix
// =============================================================================

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u64>>", into = "Vec<Vec<u64>>")]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl TryFrom<Vec<Vec<u64>>> for ConfusionMatrix {
    type Error = Error;

    fn try_from(counts: Vec<Vec<u64>>) -> Result<Self> {
        ConfusionMatrix::new(counts)
    }
}

impl From<ConfusionMatrix> for Vec<Vec<u64>> {
    fn from(cm: ConfusionMatrix) -> Self {
        cm.counts
    }
}

impl ConfusionMatrix {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if c == 0 {
            return Err(Error::Empty("confusion matrix has no classes".into()));
        }
        if counts.iter().any(|r| r.len() != c) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], class_count: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut counts = vec![vec![0u64; class_count]; class_count];
        for (i, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
            if t >= class_count || p >= class_count {
                return Err(Error::LabelOutOfRange {
                    index: i,
                    label: t.max(p),
                    class_count,
                });
            }
            counts[t][p] += 1;
        }
        ConfusionMatrix::new(counts)
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|c| self.counts[c][c]).sum()
    }

    /// Row sums: number of samples per true class.
    pub fn support(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

// =============================================================================
// Run record
// =============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub n_labeled: usize,
    pub val: f64,
    pub test: f64,
    pub wall_seconds: f64,
}

/// Per-step metric trajectory of one (dataset, regime, QM, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RunRecordRepr")]
pub struct RunRecord {
    pub qm: String,
    pub dataset: String,
    pub regime: String,
    pub seed: u64,
    /// Distinguishes arms of an ablation that share a query method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub rows: Vec<StepRow>,
}

#[derive(Deserialize)]
struct RunRecordRepr {
    qm: String,
    dataset: String,
    regime: String,
    seed: u64,
    #[serde(default)]
    variant: Option<String>,
    rows: Vec<StepRow>,
}

impl TryFrom<RunRecordRepr> for RunRecord {
    type Error = Error;

    fn try_from(r: RunRecordRepr) -> Result<Self> {
        let rec = RunRecord {
            qm: r.qm,
            dataset: r.dataset,
            regime: r.regime,
            seed: r.seed,
            variant: r.variant,
            rows: r.rows,
        };
        rec.validate()?;
        Ok(rec)
    }
}

impl RunRecord {
    /// Checks step numbering and the constant labeled-set increment.
    pub fn validate(&self) -> Result<()> {
        if self.rows.len() < 2 {
            return Err(Error::Invariant(
                "run record needs the initial row plus at least one query step".into(),
            ));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.step != i {
                return Err(Error::Invariant(format!(
                    "row {i} carries step {}",
                    row.step
                )));
            }
        }
        let inc = self.rows[1].n_labeled.checked_sub(self.rows[0].n_labeled);
        match inc {
            Some(d) if d > 0 => {
                for w in self.rows.windows(2) {
                    if w[1].n_labeled != w[0].n_labeled + d {
                        return Err(Error::Invariant(format!(
                            "n_labeled {} -> {} breaks the constant increment {d}",
                            w[0].n_labeled, w[1].n_labeled
                        )));
                    }
                }
                Ok(())
            }
            _ => Err(Error::Invariant("n_labeled must strictly increase".into())),
        }
    }

    /// Checks the record against the regime it was produced under.
    pub fn validate_against(&self, regime: &LabelRegime) -> Result<()> {
        self.validate()?;
        if self.rows.len() != regime.query_steps + 1 {
            return Err(Error::Invariant(format!(
                "{} rows for {} query steps",
                self.rows.len(),
                regime.query_steps
            )));
        }
        for row in &self.rows {
            if row.n_labeled != regime.n_labeled_at(row.step) {
                return Err(Error::Invariant(format!(
                    "step {} has n_labeled {}, expected {}",
                    row.step,
                    row.n_labeled,
                    regime.n_labeled_at(row.step)
                )));
            }
        }
        Ok(())
    }

    /// Series name used for grouping: the QM, suffixed by the variant if any.
    pub fn series(&self) -> String {
        match &self.variant {
            Some(v) => format!("{}:{v}", self.qm),
            None => self.qm.clone(),
        }
    }

    pub fn final_test(&self) -> f64 {
        self.rows.last().map(|r| r.test).unwrap_or(f64::NAN)
    }
}

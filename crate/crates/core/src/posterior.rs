//! Information-theoretic quantities over Monte-Carlo posterior samples.
//!
//! All entropies are in nats. A [`PosteriorSamples`] tensor holds `K` sampled
//! predictive distributions for each of `N` candidates over `C` classes; each
//! slice `probs[k, n, ..]` is one draw `p(y | x_n, θ_k)`.

use std::collections::HashMap;

use ndarray::{s, Array2, Array3, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to marginal probabilities before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;
const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PosteriorRepr", into = "PosteriorRepr")]
pub struct PosteriorSamples {
    probs: Array3<f64>,
    sample_ids: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PosteriorRepr {
    probs: Array3<f64>,
    sample_ids: Vec<usize>,
}

impl TryFrom<PosteriorRepr> for PosteriorSamples {
    type Error = Error;

    fn try_from(r: PosteriorRepr) -> Result<Self> {
        PosteriorSamples::new(r.probs, r.sample_ids)
    }
}

impl From<PosteriorSamples> for PosteriorRepr {
    fn from(p: PosteriorSamples) -> Self {
        PosteriorRepr {
            probs: p.probs,
            sample_ids: p.sample_ids,
        }
    }
}

impl PosteriorSamples {
    /// `probs` has shape `K × N × C`; `sample_ids` names the pool index of
    /// each candidate along axis 1.
    pub fn new(probs: Array3<f64>, sample_ids: Vec<usize>) -> Result<Self> {
        let (k, n, c) = probs.dim();
        if k == 0 {
            return Err(Error::InvalidArgument("posterior needs K >= 1 samples".into()));
        }
        if c == 0 {
            return Err(Error::InvalidArgument("posterior needs at least one class".into()));
        }
        if sample_ids.len() != n {
            return Err(Error::Shape(format!(
                "{} sample ids for {n} candidates",
                sample_ids.len()
            )));
        }
        for ki in 0..k {
            for ni in 0..n {
                let row = probs.slice(s![ki, ni, ..]);
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::Invariant(format!(
                        "probability outside [0, 1] at sample {ki}, candidate {ni}"
                    )));
                }
                let sum: f64 = row.sum();
                if (sum - 1.0).abs() > SUM_TOLERANCE {
                    return Err(Error::Invariant(format!(
                        "probabilities at sample {ki}, candidate {ni} sum to {sum}"
                    )));
                }
            }
        }
        Ok(PosteriorSamples { probs, sample_ids })
    }

    pub fn probs(&self) -> &Array3<f64> {
        &self.probs
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }

    pub fn mc_samples(&self) -> usize {
        self.probs.dim().0
    }

    pub fn candidates(&self) -> usize {
        self.probs.dim().1
    }

    pub fn classes(&self) -> usize {
        self.probs.dim().2
    }
}

/// Estimator policy for joint entropies of label batches.
///
/// `Exact` enumerates all `C^B` label configurations while that count stays
/// within `max_exact_configs` and falls back to sampling above it. `Sampled`
/// always uses the sampling estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointConfig {
    pub mode: JointMode,
    pub max_exact_configs: usize,
    pub sampled_config_count: usize,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            mode: JointMode::Exact,
            max_exact_configs: 100_000,
            sampled_config_count: 8192,
        }
    }
}

impl JointConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.max_exact_configs < classes {
            return Err(Error::InvalidArgument(format!(
                "max_exact_configs {} is below the class count {classes}",
                self.max_exact_configs
            )));
        }
        if self.sampled_config_count == 0 {
            return Err(Error::InvalidArgument(
                "sampled_config_count must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Whether a batch of `batch_len` labels over `classes` is enumerated.
    pub fn is_exact_for(&self, classes: usize, batch_len: usize) -> bool {
        self.mode == JointMode::Exact
            && u32::try_from(batch_len)
                .ok()
                .and_then(|b| classes.checked_pow(b))
                .is_some_and(|n| n <= self.max_exact_configs)
    }
}

// =============================================================================
// Marginal quantities
// =============================================================================

#[inline]
fn plogp(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * p.max(LOG_FLOOR).ln()
    }
}

pub(crate) fn entropy_of(p: ArrayView1<'_, f64>) -> f64 {
    // 0.0 - s keeps a certain distribution at +0.0 rather than -0.0
    0.0 - p.iter().map(|&x| plogp(x)).sum::<f64>()
}

/// Shannon entropy `−Σ p ln p` of a probability vector.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::Empty("probability vector".into()));
    }
    if let Some((i, &v)) = p.iter().enumerate().find(|(_, &v)| v < -1e-9 || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "invalid probability {v} at position {i}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(0.0 - p.iter().map(|&x| plogp(x.max(0.0))).sum::<f64>())
}

/// Mean over the MC axis: `p(y | x, L) = E_θ[p(y | x, θ)]`, shape `N × C`.
pub fn mean_predictive(post: &PosteriorSamples) -> Array2<f64> {
    post.probs
        .mean_axis(Axis(0))
        .expect("posterior has at least one MC sample")
}

/// Entropy of the mean predictive distribution per candidate.
pub fn predictive_entropy(post: &PosteriorSamples) -> Vec<f64> {
    mean_predictive(post)
        .axis_iter(Axis(0))
        .map(entropy_of)
        .collect()
}

/// `E_θ[H(Y | x, θ)]` per candidate.
pub fn expected_entropy(post: &PosteriorSamples) -> Vec<f64> {
    let (k, n, _) = post.probs.dim();
    let mut out = vec![0.0; n];
    for ki in 0..k {
        for (ni, o) in out.iter_mut().enumerate() {
            *o += entropy_of(post.probs.slice(s![ki, ni, ..]));
        }
    }
    for o in &mut out {
        *o /= k as f64;
    }
    out
}

/// BALD mutual information `H(mean) − mean(H)`, clamped at zero.
pub fn bald_scores(post: &PosteriorSamples) -> Vec<f64> {
    predictive_entropy(post)
        .into_iter()
        .zip(expected_entropy(post))
        .map(|(h, e)| (h - e).max(0.0))
        .collect()
}

// =============================================================================
// Joint entropy
// =============================================================================

/// Label configurations of a batch together with their per-θ likelihoods.
///
/// Row `u` of `per_theta` holds `Π_i p(y_i^u | θ_k)` for every MC sample `k`,
/// so the joint probability of configuration `u` is the row mean. Exact
/// tables enumerate every configuration. Sampled tables hold the distinct
/// configurations of `m` draws from the joint, each weighted by
/// `count_u / (m · P_u)`, so that weighted sums over the table are the Monte
/// Carlo average `(1/m) Σ_draws f(ŷ) / P(ŷ)` of the enumerated sum.
pub(crate) struct ConfigTable {
    per_theta: Array2<f64>,
    weights: Option<Vec<f64>>,
}

impl ConfigTable {
    /// The single empty configuration.
    #[cfg(test)]
    pub(crate) fn unit(k: usize) -> Self {
        ConfigTable {
            per_theta: Array2::ones((1, k)),
            weights: None,
        }
    }

    pub(crate) fn exact(post: &PosteriorSamples, batch: &[usize]) -> Self {
        let (k, _, c) = post.probs.dim();
        let mut table = Array2::<f64>::ones((1, k));
        for &i in batch {
            let rows = table.nrows();
            let mut next = Array2::<f64>::zeros((rows * c, k));
            for u in 0..rows {
                for y in 0..c {
                    let mut dst = next.row_mut(u * c + y);
                    for ki in 0..k {
                        dst[ki] = table[[u, ki]] * post.probs[[ki, i, y]];
                    }
                }
            }
            table = next;
        }
        ConfigTable {
            per_theta: table,
            weights: None,
        }
    }

    /// Draws `m` configurations by ancestral sampling from the MC mixture
    /// (pick `θ_k` uniformly, then every `y_i ~ p(· | θ_k)`) and scores each
    /// distinct one under every `θ`.
    pub(crate) fn sampled<R: Rng + ?Sized>(
        post: &PosteriorSamples,
        batch: &[usize],
        m: usize,
        rng: &mut R,
    ) -> Self {
        let (k, _, c) = post.probs.dim();
        let mut index: HashMap<Vec<u16>, usize> = HashMap::new();
        let mut configs: Vec<Vec<u16>> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for _ in 0..m {
            let ki = rng.random_range(0..k);
            let cfg: Vec<u16> = batch
                .iter()
                .map(|&i| draw_class(post.probs.slice(s![ki, i, ..]), c, rng) as u16)
                .collect();
            match index.get(&cfg) {
                Some(&u) => counts[u] += 1,
                None => {
                    index.insert(cfg.clone(), configs.len());
                    configs.push(cfg);
                    counts.push(1);
                }
            }
        }
        let mut per_theta = Array2::<f64>::ones((configs.len(), k));
        for (u, cfg) in configs.iter().enumerate() {
            for ki in 0..k {
                let mut p = 1.0;
                for (&i, &y) in batch.iter().zip(cfg) {
                    p *= post.probs[[ki, i, y as usize]];
                }
                per_theta[[u, ki]] = p;
            }
        }
        let weights = per_theta
            .rows()
            .into_iter()
            .zip(&counts)
            .map(|(row, &n)| {
                let p = row.sum() / k as f64;
                if p > 0.0 {
                    n as f64 / (m as f64 * p)
                } else {
                    0.0
                }
            })
            .collect();
        ConfigTable {
            per_theta,
            weights: Some(weights),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.per_theta.nrows()
    }

    fn weight(&self, u: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[u])
    }

    pub(crate) fn entropy(&self) -> f64 {
        let k = self.per_theta.ncols() as f64;
        let mut s = 0.0;
        for (u, row) in self.per_theta.rows().into_iter().enumerate() {
            let p = row.sum() / k;
            if p > 0.0 {
                s += self.weight(u) * p * p.ln();
            }
        }
        0.0 - s
    }

    /// Joint entropy of `batch ∪ {c}` for every candidate `c`, where `batch`
    /// is the set this table was built from. The new label is enumerated
    /// exhaustively for each configuration in the table.
    pub(crate) fn extended_entropies(&self, post: &PosteriorSamples, candidates: &[usize]) -> Vec<f64> {
        let (k, _, c) = post.probs.dim();
        let rows = self.len().max(1);
        // keep the U × (chunk·C) product around 4M entries
        let chunk = (4_000_000 / (rows * c)).clamp(1, candidates.len().max(1));
        let mut out = Vec::with_capacity(candidates.len());
        for group in candidates.chunks(chunk) {
            let mut q = Array2::<f64>::zeros((k, group.len() * c));
            for (j, &cand) in group.iter().enumerate() {
                for ki in 0..k {
                    for y in 0..c {
                        q[[ki, j * c + y]] = post.probs[[ki, cand, y]];
                    }
                }
            }
            let joint = self.per_theta.dot(&q) / k as f64;
            let mut s = vec![0.0; group.len()];
            for (u, row) in joint.rows().into_iter().enumerate() {
                let w = self.weight(u);
                for (col, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        s[col / c] += w * p * p.ln();
                    }
                }
            }
            out.extend(s.iter().map(|&s| 0.0 - s));
        }
        out
    }
}

fn draw_class<R: Rng + ?Sized>(p: ArrayView1<'_, f64>, c: usize, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (y, &py) in p.iter().enumerate() {
        acc += py;
        if u < acc {
            return y;
        }
    }
    // rounding left a sliver above the cumulative sum; take the last
    // class with non-zero mass
    (0..c).rev().find(|&y| p[y] > 0.0).unwrap_or(c - 1)
}

fn check_batch(post: &PosteriorSamples, batch: &[usize]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("joint entropy batch".into()));
    }
    let n = post.candidates();
    let mut seen = vec![false; n];
    for &i in batch {
        if i >= n {
            return Err(Error::InvalidArgument(format!(
                "batch index {i} out of range for {n} candidates"
            )));
        }
        if seen[i] {
            return Err(Error::InvalidArgument(format!("duplicate batch index {i}")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Entropy of the joint label distribution of `batch` (indices along the
/// candidate axis) under the MC mixture
/// `P(y_1..y_B) = (1/K) Σ_k Π_i p(y_i | θ_k)`.
pub fn joint_entropy<R: Rng + ?Sized>(
    post: &PosteriorSamples,
    batch: &[usize],
    cfg: &JointConfig,
    rng: &mut R,
) -> Result<f64> {
    check_batch(post, batch)?;
    cfg.validate(post.classes())?;
    if cfg.is_exact_for(post.classes(), batch.len()) {
        return Ok(ConfigTable::exact(post, batch).entropy());
    }
    // sample all but the last label and enumerate that one exactly
    let (&last, head) = batch.split_last().expect("checked non-empty");
    let table = ConfigTable::sampled(post, head, cfg.sampled_config_count, rng);
    Ok(table.extended_entropies(post, &[last])[0])
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
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
}

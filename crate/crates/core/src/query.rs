//! Query methods.
//!
//! Every method selects `query_size` distinct unlabeled pool indices from a
//! [`QueryContext`]. Candidates are always visited in ascending pool-index
//! order and ties resolve to the smaller index, so selections are
//! bit-reproducible.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::domain::LabelState;
use crate::error::{Error, Result};
use crate::posterior::{self, ConfigTable, JointConfig, PosteriorSamples};
use crate::seed::{self, Purpose};

/// Representation-space coordinates for a set of pool indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    matrix: Array2<f64>,
    ids: Vec<usize>,
    row_of: HashMap<usize, usize>,
}

impl Embeddings {
    pub fn new(matrix: Array2<f64>, ids: Vec<usize>) -> Result<Self> {
        if matrix.nrows() != ids.len() {
            return Err(Error::Shape(format!(
                "{} embedding rows for {} ids",
                matrix.nrows(),
                ids.len()
            )));
        }
        let mut row_of = HashMap::with_capacity(ids.len());
        for (r, &id) in ids.iter().enumerate() {
            if row_of.insert(id, r).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate embedding id {id}")));
            }
        }
        Ok(Embeddings {
            matrix,
            ids,
            row_of,
        })
    }

    pub fn row(&self, id: usize) -> Option<ArrayView1<'_, f64>> {
        self.row_of.get(&id).map(|&r| self.matrix.row(r))
    }

    pub fn contains(&self, id: usize) -> bool {
        self.row_of.contains_key(&id)
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

/// Inputs to one selection round.
#[derive(Debug, Clone, Copy)]
pub struct QueryContext<'a> {
    pub label_state: &'a LabelState,
    pub query_size: usize,
    /// Posterior over exactly the unlabeled candidates, in ascending order.
    pub posterior: Option<&'a PosteriorSamples>,
    /// Embeddings covering labeled and unlabeled samples.
    pub embeddings: Option<&'a Embeddings>,
    /// Seed of the deterministic stream this round may draw from.
    pub rng_seed: u64,
}

impl<'a> QueryContext<'a> {
    pub fn new(label_state: &'a LabelState, query_size: usize, rng_seed: u64) -> Self {
        QueryContext {
            label_state,
            query_size,
            posterior: None,
            embeddings: None,
            rng_seed,
        }
    }

    pub fn with_posterior(mut self, posterior: &'a PosteriorSamples) -> Self {
        self.posterior = Some(posterior);
        self
    }

    pub fn with_embeddings(mut self, embeddings: &'a Embeddings) -> Self {
        self.embeddings = Some(embeddings);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let u = self.label_state.unlabeled().len();
        if self.query_size == 0 {
            return Err(Error::InvalidArgument("query_size must be positive".into()));
        }
        if self.query_size > u {
            return Err(Error::InvalidArgument(format!(
                "query_size {} exceeds {u} unlabeled candidates",
                self.query_size
            )));
        }
        if let Some(p) = self.posterior {
            if p.sample_ids().len() != u
                || !p
                    .sample_ids()
                    .iter()
                    .zip(self.label_state.unlabeled())
                    .all(|(a, b)| a == b)
            {
                return Err(Error::Shape(
                    "posterior must cover exactly the unlabeled set in ascending order".into(),
                ));
            }
        }
        if let Some(e) = self.embeddings {
            let missing = self
                .label_state
                .labeled()
                .iter()
                .chain(self.label_state.unlabeled())
                .find(|&&i| !e.contains(i));
            if let Some(i) = missing {
                return Err(Error::Shape(format!("no embedding for pool index {i}")));
            }
        }
        Ok(())
    }

    fn require_posterior(&self) -> Result<&'a PosteriorSamples> {
        self.posterior.ok_or(Error::MissingInput("posterior samples"))
    }
}

/// Chosen pool indices in selection order.
///
/// `scores`, when present, is aligned with `chosen`: the value each index had
/// when it was picked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySelection {
    pub chosen: Vec<usize>,
    pub scores: Option<Vec<f64>>,
    pub qm: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMethod {
    Random,
    Entropy,
    Bald,
    BatchBald,
    CoreSet,
}

impl QueryMethod {
    pub const ALL: [QueryMethod; 5] = [
        QueryMethod::Random,
        QueryMethod::Entropy,
        QueryMethod::Bald,
        QueryMethod::BatchBald,
        QueryMethod::CoreSet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QueryMethod::Random => "random",
            QueryMethod::Entropy => "entropy",
            QueryMethod::Bald => "bald",
            QueryMethod::BatchBald => "batchbald",
            QueryMethod::CoreSet => "coreset",
        }
    }

    pub fn needs_posterior(self) -> bool {
        matches!(
            self,
            QueryMethod::Entropy | QueryMethod::Bald | QueryMethod::BatchBald
        )
    }

    pub fn needs_embeddings(self) -> bool {
        self == QueryMethod::CoreSet
    }

    pub fn select(self, ctx: &QueryContext<'_>, joint: &JointConfig) -> Result<QuerySelection> {
        match self {
            QueryMethod::Random => random_select(ctx),
            QueryMethod::Entropy => entropy_select(ctx),
            QueryMethod::Bald => bald_select(ctx),
            QueryMethod::BatchBald => batchbald_select(ctx, joint),
            QueryMethod::CoreSet => coreset_select(ctx),
        }
    }
}

impl fmt::Display for QueryMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QueryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(QueryMethod::Random),
            "entropy" => Ok(QueryMethod::Entropy),
            "bald" => Ok(QueryMethod::Bald),
            "batchbald" => Ok(QueryMethod::BatchBald),
            "coreset" | "core-set" | "kcentergreedy" => Ok(QueryMethod::CoreSet),
            other => Err(Error::InvalidArgument(format!("unknown query method `{other}`"))),
        }
    }
}

/// Uniform draw without replacement from the unlabeled set.
pub fn random_select(ctx: &QueryContext<'_>) -> Result<QuerySelection> {
    ctx.validate()?;
    let candidates = ctx.label_state.unlabeled_vec();
    let mut rng = seed::rng(ctx.rng_seed);
    let chosen = rand::seq::index::sample(&mut rng, candidates.len(), ctx.query_size)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    Ok(QuerySelection {
        chosen,
        scores: None,
        qm: QueryMethod::Random.name().into(),
    })
}

/// The `query_size` highest scores; `scores` is aligned with the unlabeled
/// candidates in ascending pool order.
pub fn topk_select(scores: &[f64], ctx: &QueryContext<'_>) -> Result<QuerySelection> {
    ctx.validate()?;
    let candidates = ctx.label_state.unlabeled_vec();
    if scores.len() != candidates.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} unlabeled candidates",
            scores.len(),
            candidates.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite score at candidate {i}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps ascending pool order among equal scores
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(ctx.query_size);
    Ok(QuerySelection {
        chosen: order.iter().map(|&i| candidates[i]).collect(),
        scores: Some(order.iter().map(|&i| scores[i]).collect()),
        qm: "topk".into(),
    })
}

pub fn entropy_select(ctx: &QueryContext<'_>) -> Result<QuerySelection> {
    let post = ctx.require_posterior()?;
    let mut sel = topk_select(&posterior::predictive_entropy(post), ctx)?;
    sel.qm = QueryMethod::Entropy.name().into();
    Ok(sel)
}

pub fn bald_select(ctx: &QueryContext<'_>) -> Result<QuerySelection> {
    let post = ctx.require_posterior()?;
    let mut sel = topk_select(&posterior::bald_scores(post), ctx)?;
    sel.qm = QueryMethod::Bald.name().into();
    Ok(sel)
}

/// Greedy BatchBALD: each round adds the candidate that maximizes the joint
/// mutual information `H(Y_batch, Y_c) − Σ E_θ[H(Y_i | θ)]` of the grown
/// batch.
pub fn batchbald_select(ctx: &QueryContext<'_>, cfg: &JointConfig) -> Result<QuerySelection> {
    ctx.validate()?;
    let post = ctx.require_posterior()?;
    let classes = post.classes();
    cfg.validate(classes)?;
    let expected = posterior::expected_entropy(post);
    let ids = post.sample_ids();

    let mut available = vec![true; post.candidates()];
    let mut batch: Vec<usize> = Vec::with_capacity(ctx.query_size);
    let mut picked_scores = Vec::with_capacity(ctx.query_size);
    let mut conditional_sum = 0.0;

    for round in 0..ctx.query_size {
        let candidates: Vec<usize> = (0..available.len()).filter(|&i| available[i]).collect();
        let gains: Vec<f64> = if batch.is_empty() {
            let bald = posterior::bald_scores(post);
            candidates.iter().map(|&i| bald[i]).collect()
        } else {
            let table = if cfg.is_exact_for(classes, batch.len() + 1) {
                ConfigTable::exact(post, &batch)
            } else {
                let mut rng = seed::stream(ctx.rng_seed, round as u64, Purpose::JointRound);
                ConfigTable::sampled(post, &batch, cfg.sampled_config_count, &mut rng)
            };
            table
                .extended_entropies(post, &candidates)
                .into_iter()
                .zip(&candidates)
                .map(|(h, &i)| h - conditional_sum - expected[i])
                .collect()
        };
        let mut best = 0;
        for j in 1..gains.len() {
            if gains[j] > gains[best] {
                best = j;
            }
        }
        let pick = candidates[best];
        available[pick] = false;
        conditional_sum += expected[pick];
        batch.push(pick);
        picked_scores.push(gains[best]);
    }
    Ok(QuerySelection {
        chosen: batch.iter().map(|&i| ids[i]).collect(),
        scores: Some(picked_scores),
        qm: QueryMethod::BatchBald.name().into(),
    })
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// K-Center greedy: repeatedly pick the unlabeled candidate farthest
/// (Euclidean) from its nearest labeled-or-chosen point.
pub fn coreset_select(ctx: &QueryContext<'_>) -> Result<QuerySelection> {
    let emb = ctx.embeddings.ok_or(Error::MissingInput("embeddings"))?;
    if ctx.label_state.labeled().is_empty() {
        return Err(Error::MissingInput("non-empty labeled set"));
    }
    ctx.validate()?;
    let candidates = ctx.label_state.unlabeled_vec();
    let rows: Vec<ArrayView1<'_, f64>> = candidates
        .iter()
        .map(|&i| emb.row(i).expect("validated"))
        .collect();
    let mut min_d: Vec<f64> = rows
        .iter()
        .map(|r| {
            ctx.label_state
                .labeled()
                .iter()
                .map(|&l| sq_dist(*r, emb.row(l).expect("validated")))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut taken = vec![false; candidates.len()];
    let mut chosen = Vec::with_capacity(ctx.query_size);
    let mut scores = Vec::with_capacity(ctx.query_size);
    for _ in 0..ctx.query_size {
        let mut best: Option<usize> = None;
        for j in 0..candidates.len() {
            if taken[j] {
                continue;
            }
            match best {
                Some(b) if min_d[j] <= min_d[b] => {}
                _ => best = Some(j),
            }
        }
        let b = best.expect("query_size <= unlabeled");
        taken[b] = true;
        chosen.push(candidates[b]);
        scores.push(min_d[b].sqrt());
        let centre = rows[b];
        for j in 0..candidates.len() {
            if !taken[j] {
                let d = sq_dist(rows[j], centre);
                if d < min_d[j] {
                    min_d[j] = d;
                }
            }
        }
    }
    Ok(QuerySelection {
        chosen,
        scores: Some(scores),
        qm: QueryMethod::CoreSet.name().into(),
    })
}

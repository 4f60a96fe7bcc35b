//! Self-correcting debiasing: every document's co-occurrences are reweighted
//! by its differential bias and the affected WEAT word vectors are moved to
//! match, without retraining.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biasmetrics::{evaluate, PValueConfig, ResolvedWeat, WeatResult, WeatSpec};
use crate::cooccurrence::{RowSource, ShardSource};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::glove::{EmbeddingModel, Weighting};
use crate::influence::{weat_systems, DiffBiasVector, HessianAt, InfluenceConfig, Prefactor, WordSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaNormalization {
    #[default]
    None,
    /// Divide by `max_k |β_k|`.
    MaxAbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateOrder {
    /// Documents in `doc_id` order, each update seeing the previous ones.
    #[default]
    Sequential,
    /// One aggregated perturbation and one update per word.
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScConfig {
    pub gamma: f64,
    pub beta_normalization: BetaNormalization,
    pub update_order: UpdateOrder,
    pub prefactor: Prefactor,
    pub ridge: Option<f64>,
    pub hessian_at: HessianAt,
}

impl Default for ScConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            beta_normalization: BetaNormalization::None,
            update_order: UpdateOrder::Sequential,
            prefactor: Prefactor::One,
            ridge: None,
            hessian_at: HessianAt::Perturbed,
        }
    }
}

impl ScConfig {
    pub fn influence(&self) -> InfluenceConfig {
        InfluenceConfig {
            prefactor: self.prefactor,
            ridge: self.ridge,
            hessian_at: self.hessian_at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoocAction {
    Unchanged,
    DecreaseCooc,
    IncreaseCooc,
}

/// What reweighting does to a document's co-occurrences given its β.
pub fn three_way_action(beta: f64) -> CoocAction {
    if beta > 0.0 {
        CoocAction::DecreaseCooc
    } else if beta < 0.0 {
        CoocAction::IncreaseCooc
    } else {
        CoocAction::Unchanged
    }
}

pub fn normalized_betas(beta: &[f64], mode: BetaNormalization) -> Vec<f64> {
    match mode {
        BetaNormalization::None => beta.to_vec(),
        BetaNormalization::MaxAbs => {
            let m = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
            if m == 0.0 {
                vec![0.0; beta.len()]
            } else {
                beta.iter().map(|b| b / m).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordDisplacement {
    pub word: String,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScStats {
    pub docs_applied: usize,
    pub word_updates: usize,
    pub shards_streamed: usize,
    pub max_reads_per_shard: u32,
    pub action_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct ScOutcome {
    pub model: EmbeddingModel,
    pub stats: ScStats,
}

/// Applies `X'_i = X_i − γ β̂_k X^(k)_i` for every WEAT word `i` of every
/// document `k` with `β_k ≠ 0`, updating only the affected rows of `W`.
#[allow(clippy::too_many_arguments)]
pub fn sc_debias(
    model: &EmbeddingModel,
    vocab: &Vocabulary,
    rows: &impl RowSource,
    shards: &impl ShardSource,
    spec: &WeatSpec,
    beta: &DiffBiasVector,
    weighting: Weighting,
    config: &ScConfig,
) -> Result<ScOutcome> {
    let num_docs = shards.num_docs();
    if beta.len() > num_docs {
        return Err(Error::UnknownDocument(num_docs));
    }
    if beta.len() < num_docs {
        return Err(Error::Config(format!(
            "beta covers {} documents but the corpus has {num_docs}; document {} is missing",
            beta.len(),
            beta.len()
        )));
    }
    if !config.gamma.is_finite() {
        return Err(Error::Config(format!("gamma must be finite, got {}", config.gamma)));
    }
    let weat = ResolvedWeat::resolve(spec, vocab);
    let influence = config.influence();
    let systems = weat_systems(model, rows, &weat, weighting, &influence)?;
    let weat_ids: BTreeSet<u32> = systems.keys().copied().collect();
    let betas = normalized_betas(&beta.beta, config.beta_normalization);

    let mut action_counts = BTreeMap::new();
    for b in &betas {
        let name = serde_json::to_value(three_way_action(config.gamma * b))?;
        *action_counts.entry(name.as_str().unwrap_or_default().to_owned()).or_insert(0) += 1;
    }
    let mut stats = ScStats {
        docs_applied: 0,
        word_updates: 0,
        shards_streamed: 0,
        max_reads_per_shard: 0,
        action_counts,
    };

    let mut out = model.clone();
    if config.gamma == 0.0 {
        return Ok(ScOutcome { model: out, stats });
    }
    let active: Vec<usize> = (0..num_docs).filter(|&k| betas[k] != 0.0).collect();
    let before = shards.read_counts();

    match config.update_order {
        UpdateOrder::Sequential => {
            for &k in &active {
                let shard = shards.read_shard(k)?;
                let scale = betas[k];
                let words: Vec<u32> = shard.row_ids().filter(|i| weat_ids.contains(i)).collect();
                if words.is_empty() {
                    continue;
                }
                let updates: Vec<(u32, Vec<f64>)> = words
                    .par_iter()
                    .map(|&i| {
                        let sys = &systems[&i];
                        let deltas = shard.row(i).iter().map(|e| (e.j, config.gamma * (scale * e.value)));
                        let changes = sys.changes_from_deltas(deltas).map_err(|j| missing_entry(k, i, j))?;
                        Ok((i, sys.context(&out, weighting, &influence).approximate_with_changes(&changes)?))
                    })
                    .collect::<Result<_>>()?;
                stats.docs_applied += 1;
                stats.word_updates += updates.len();
                for (i, v) in updates {
                    out.set_word(i as usize, &v);
                }
            }
        }
        UpdateOrder::Batch => {
            let mut deltas: HashMap<u32, BTreeMap<u32, f64>> = HashMap::new();
            for &k in &active {
                let shard = shards.read_shard(k)?;
                let mut touched = false;
                for i in shard.row_ids().filter(|i| weat_ids.contains(i)) {
                    touched = true;
                    let acc = deltas.entry(i).or_default();
                    for e in shard.row(i) {
                        *acc.entry(e.j).or_insert(0.0) += config.gamma * (betas[k] * e.value);
                    }
                }
                stats.docs_applied += touched as usize;
            }
            let mut words: Vec<(&u32, &BTreeMap<u32, f64>)> = deltas.iter().collect();
            words.sort_unstable_by_key(|(i, _)| **i);
            let updates: Vec<(u32, Vec<f64>)> = words
                .par_iter()
                .map(|&(&i, d)| {
                    let sys: &WordSystem = &systems[&i];
                    let changes = sys
                        .changes_from_deltas(d.iter().map(|(&j, &v)| (j, v)))
                        .map_err(|j| missing_entry(usize::MAX, i, j))?;
                    Ok((i, sys.context(model, weighting, &influence).approximate_with_changes(&changes)?))
                })
                .collect::<Result<_>>()?;
            stats.word_updates = updates.len();
            for (i, v) in updates {
                out.set_word(i as usize, &v);
            }
        }
    }

    let after = shards.read_counts();
    stats.shards_streamed = after.iter().zip(&before).filter(|(a, b)| a > b).count();
    stats.max_reads_per_shard = after.iter().zip(&before).map(|(a, b)| a - b).max().unwrap_or(0);
    Ok(ScOutcome { model: out, stats })
}

fn missing_entry(doc: usize, i: u32, j: u32) -> Error {
    Error::format(format!("shard {doc}"), format!("entry ({i}, {j}) missing from the global matrix"))
}

/// WEAT results for every spec on `model`.
pub fn rerun_weat(model: &EmbeddingModel, vocab: &Vocabulary, specs: &[WeatSpec], pvalue: &PValueConfig) -> Result<Vec<WeatResult>> {
    specs.iter().map(|s| evaluate(model, vocab, s, pvalue)).collect()
}

/// L2 distance moved by every word vector that changed, largest first.
pub fn displacements(before: &EmbeddingModel, after: &EmbeddingModel, vocab: &Vocabulary) -> Vec<WordDisplacement> {
    let mut out: Vec<WordDisplacement> = (0..before.vocab_size())
        .filter_map(|i| {
            let norm = before
                .word(i)
                .iter()
                .zip(after.word(i))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            (norm != 0.0).then(|| WordDisplacement {
                word: vocab.token(i as u32).to_owned(),
                norm,
            })
        })
        .collect();
    out.sort_by(|x, y| y.norm.total_cmp(&x.norm).then_with(|| x.word.cmp(&y.word)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScReport {
    pub config: ScConfig,
    pub debiased_spec: String,
    pub baseline: Vec<WeatResult>,
    pub debiased: Vec<WeatResult>,
    pub displacements: Vec<WordDisplacement>,
    pub stats: ScStats,
}

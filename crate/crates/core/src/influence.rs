//! Influence approximation of how a word vector moves when its co-occurrence
//! row is perturbed, and per-document differential bias built on it.
//!
//! For word `i` with `U`, `b`, `c` frozen the pointwise loss
//!
//! ```text
//! L(X_i, w) = Σ_j f(X_ij) (w·u_j + b_i + c_j − log X_ij)²
//! ```
//!
//! is a convex quadratic in `w`. A perturbation `X_i → X̃_i` is mapped to
//!
//! ```text
//! w̃ = w* − κ · H⁻¹ [∇L(X̃_i, w*) − ∇L(X_i, w*)]
//! ```
//!
//! where `κ` is the prefactor and `H` the pointwise Hessian plus a ridge.
//! Only entries that actually change are visited, so the cost of one update
//! is proportional to the perturbation, not to the row.

use std::borrow::Cow;
use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biasmetrics::{effect_size_resolved, Overlay, ResolvedWeat};
use crate::cooccurrence::{DocCoocShard, RowSource, ShardSource, SparseRow};
use crate::error::{Error, Result};
use crate::glove::{EmbeddingModel, Weighting};
use crate::linalg::{solve_spd, DenseMatrix};

/// Relative floor under which a perturbed entry counts as removed.
const DROP_RELATIVE: f64 = 1e-9;

/// Leading constant of the update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "PrefactorRepr", into = "PrefactorRepr")]
pub enum Prefactor {
    /// Full Newton step of the fixed-context problem.
    #[default]
    One,
    /// `1/V`.
    InverseVocab,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PrefactorRepr {
    Name(String),
    Value(f64),
}

impl TryFrom<PrefactorRepr> for Prefactor {
    type Error = String;
    fn try_from(r: PrefactorRepr) -> std::result::Result<Self, String> {
        match r {
            PrefactorRepr::Value(v) => Ok(Prefactor::Value(v)),
            PrefactorRepr::Name(s) => s.parse(),
        }
    }
}

impl From<Prefactor> for PrefactorRepr {
    fn from(p: Prefactor) -> Self {
        match p {
            Prefactor::One => PrefactorRepr::Name("one".into()),
            Prefactor::InverseVocab => PrefactorRepr::Name("inverse-vocab".into()),
            Prefactor::Value(v) => PrefactorRepr::Value(v),
        }
    }
}

impl std::str::FromStr for Prefactor {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "one" | "1" => Ok(Prefactor::One),
            "inverse-vocab" | "paper" | "1/v" | "1/V" => Ok(Prefactor::InverseVocab),
            other => other
                .parse::<f64>()
                .map(Prefactor::Value)
                .map_err(|_| format!("unknown prefactor {other:?} (expected one, inverse-vocab or a number)")),
        }
    }
}

impl Prefactor {
    pub fn value(self, vocab_size: usize) -> f64 {
        match self {
            Prefactor::One => 1.0,
            Prefactor::InverseVocab => 1.0 / vocab_size.max(1) as f64,
            Prefactor::Value(v) => v,
        }
    }
}

/// Which row the Hessian of the update is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HessianAt {
    /// The perturbed row `X̃_i`: the update is an exact Newton step of the
    /// perturbed fixed-context problem.
    #[default]
    Perturbed,
    /// The unperturbed row `X_i`.
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfluenceConfig {
    pub prefactor: Prefactor,
    /// Fixed ridge; `None` selects `1e-6 · trace(H) / D` per word.
    pub ridge: Option<f64>,
    pub hessian_at: HessianAt,
}

impl Default for InfluenceConfig {
    fn default() -> Self {
        Self {
            prefactor: Prefactor::One,
            ridge: None,
            hessian_at: HessianAt::Perturbed,
        }
    }
}

/// One entry of a row perturbation. A non-positive `new` means the entry is
/// absent after the perturbation; `old == 0` means it was absent before.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowChange {
    pub j: u32,
    pub old: f64,
    pub new: f64,
}

fn check_row(word: u32, row: &[(u32, f64)]) -> Result<()> {
    match row.iter().find(|(_, x)| !(*x > 0.0)) {
        Some(&(j, value)) => Err(Error::NonPositiveEntry { i: word, j, value }),
        None => Ok(()),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_j 2 f(X_ij) u_j u_jᵀ`, no ridge.
pub fn row_hessian(model: &EmbeddingModel, row: &[(u32, f64)], weighting: Weighting) -> DenseMatrix {
    let mut h = DenseMatrix::zeros(model.dim());
    for &(j, x) in row {
        h.add_outer(model.context(j as usize), 2.0 * weighting.f(x));
    }
    h
}

/// `∇_w L(row, w) = Σ_j 2 f(X_ij) (w·u_j + b_i + c_j − log X_ij) u_j`.
pub fn row_gradient(model: &EmbeddingModel, word: u32, row: &[(u32, f64)], w: &[f64], weighting: Weighting) -> Vec<f64> {
    let mut g = vec![0.0; model.dim()];
    let bi = model.b[word as usize];
    for &(j, x) in row {
        let u = model.context(j as usize);
        let r = dot(w, u) + bi + model.c[j as usize] - x.ln();
        let s = 2.0 * weighting.f(x) * r;
        for (gk, uk) in g.iter_mut().zip(u) {
            *gk += s * uk;
        }
    }
    g
}

pub fn row_loss(model: &EmbeddingModel, word: u32, row: &[(u32, f64)], w: &[f64], weighting: Weighting) -> f64 {
    let bi = model.b[word as usize];
    row.iter()
        .map(|&(j, x)| {
            let r = dot(w, model.context(j as usize)) + bi + model.c[j as usize] - x.ln();
            weighting.f(x) * r * r
        })
        .sum()
}

/// Precomputed pieces of one word's pointwise problem that do not depend on
/// `w_i`: its row and the unregularized Hessian.
#[derive(Debug, Clone)]
pub struct WordSystem {
    pub word: u32,
    pub row: SparseRow,
    pub hessian: DenseMatrix,
    pub ridge: f64,
}

impl WordSystem {
    pub fn new(model: &EmbeddingModel, word: u32, row: SparseRow, weighting: Weighting, config: &InfluenceConfig) -> Result<Self> {
        check_row(word, &row)?;
        let hessian = row_hessian(model, &row, weighting);
        let ridge = match config.ridge {
            Some(r) if r < 0.0 => return Err(Error::Config(format!("ridge must be non-negative, got {r}"))),
            Some(r) => r,
            None => 1e-6 * hessian.trace() / model.dim() as f64,
        };
        Ok(Self { word, row, hessian, ridge })
    }

    pub fn context<'a>(&'a self, model: &'a EmbeddingModel, weighting: Weighting, config: &InfluenceConfig) -> PointwiseContext<'a> {
        PointwiseContext {
            model,
            word: self.word,
            row: Cow::Borrowed(&self.row),
            base_hessian: Cow::Borrowed(&self.hessian),
            weighting,
            ridge: self.ridge,
            prefactor: config.prefactor.value(model.vocab_size()),
            hessian_at: config.hessian_at,
        }
    }

    /// Row changes for `X_i − scale · shard_i`.
    pub fn shard_changes(&self, shard: &DocCoocShard, scale: f64) -> Result<Vec<RowChange>> {
        self.changes_from_deltas(shard.row(self.word).iter().map(|e| (e.j, scale * e.value)))
            .map_err(|j| {
                Error::format(
                    format!("shard {}", shard.doc_id),
                    format!("entry ({}, {j}) missing from the global matrix", self.word),
                )
            })
    }

    /// Row changes for `X_ij − delta_j`. Deltas must refer to entries present
    /// in the row; the offending column is returned otherwise.
    pub fn changes_from_deltas(&self, deltas: impl IntoIterator<Item = (u32, f64)>) -> std::result::Result<Vec<RowChange>, u32> {
        deltas
            .into_iter()
            .map(|(j, delta)| {
                let k = self.row.binary_search_by_key(&j, |&(j, _)| j).map_err(|_| j)?;
                let old = self.row[k].1;
                let mut new = old - delta;
                if new <= DROP_RELATIVE * old {
                    new = 0.0;
                }
                Ok(RowChange { j, old, new })
            })
            .collect()
    }
}

/// Everything needed to evaluate and perturb the pointwise problem of one
/// word against a model snapshot.
#[derive(Debug, Clone)]
pub struct PointwiseContext<'a> {
    pub model: &'a EmbeddingModel,
    pub word: u32,
    pub row: Cow<'a, SparseRow>,
    base_hessian: Cow<'a, DenseMatrix>,
    pub weighting: Weighting,
    pub ridge: f64,
    pub prefactor: f64,
    pub hessian_at: HessianAt,
}

impl<'a> PointwiseContext<'a> {
    pub fn new(model: &'a EmbeddingModel, word: u32, row: SparseRow, weighting: Weighting, config: &InfluenceConfig) -> Result<Self> {
        let sys = WordSystem::new(model, word, row, weighting, config)?;
        Ok(PointwiseContext {
            model,
            word,
            row: Cow::Owned(sys.row),
            base_hessian: Cow::Owned(sys.hessian),
            weighting,
            ridge: sys.ridge,
            prefactor: config.prefactor.value(model.vocab_size()),
            hessian_at: config.hessian_at,
        })
    }

    pub fn current_vector(&self) -> &[f64] {
        self.model.word(self.word as usize)
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        row_loss(self.model, self.word, &self.row, w, self.weighting)
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        row_gradient(self.model, self.word, &self.row, w, self.weighting)
    }

    /// Hessian of the unperturbed row plus the ridge.
    pub fn hessian(&self) -> DenseMatrix {
        let mut h = self.base_hessian.clone().into_owned();
        h.add_diagonal(self.ridge);
        h
    }

    /// Entry-wise differences between the context row and `perturbed`.
    pub fn changes_to(&self, perturbed: &[(u32, f64)]) -> Result<Vec<RowChange>> {
        check_row(self.word, perturbed)?;
        let (a, b) = (&self.row[..], perturbed);
        let (mut p, mut q) = (0, 0);
        let mut out = Vec::new();
        while p < a.len() || q < b.len() {
            let ja = a.get(p).map_or(u32::MAX, |e| e.0);
            let jb = b.get(q).map_or(u32::MAX, |e| e.0);
            let (j, old, new) = match ja.cmp(&jb) {
                std::cmp::Ordering::Less => {
                    p += 1;
                    (ja, a[p - 1].1, 0.0)
                }
                std::cmp::Ordering::Greater => {
                    q += 1;
                    (jb, 0.0, b[q - 1].1)
                }
                std::cmp::Ordering::Equal => {
                    p += 1;
                    q += 1;
                    (ja, a[p - 1].1, b[q - 1].1)
                }
            };
            if old != new {
                out.push(RowChange { j, old, new });
            }
        }
        Ok(out)
    }

    /// Applies the update for an explicit list of changed entries.
    pub fn approximate_with_changes(&self, changes: &[RowChange]) -> Result<Vec<f64>> {
        let w = self.current_vector();
        if self.prefactor == 0.0 || changes.is_empty() {
            return Ok(w.to_vec());
        }
        let bi = self.model.b[self.word as usize];
        let mut h = self.base_hessian.clone().into_owned();
        let mut dg = vec![0.0; w.len()];
        for ch in changes {
            let u = self.model.context(ch.j as usize);
            let base = dot(w, u) + bi + self.model.c[ch.j as usize];
            let mut coef = 0.0;
            if ch.old > 0.0 {
                let f = self.weighting.f(ch.old);
                coef -= 2.0 * f * (base - ch.old.ln());
                if self.hessian_at == HessianAt::Perturbed {
                    h.add_outer(u, -2.0 * f);
                }
            }
            if ch.new > 0.0 {
                let f = self.weighting.f(ch.new);
                coef += 2.0 * f * (base - ch.new.ln());
                if self.hessian_at == HessianAt::Perturbed {
                    h.add_outer(u, 2.0 * f);
                }
            }
            for (g, uk) in dg.iter_mut().zip(u) {
                *g += coef * uk;
            }
        }
        h.add_diagonal(self.ridge);
        let step = solve_spd(&h, &dg)?;
        Ok(w.iter().zip(&step).map(|(wk, sk)| wk - self.prefactor * sk).collect())
    }
}

/// Gradient of the pointwise loss at the context row with respect to `w_i`.
pub fn pointwise_gradient(ctx: &PointwiseContext<'_>, w: &[f64]) -> Vec<f64> {
    ctx.gradient(w)
}

/// `Σ_j 2 f(X_ij) u_j u_jᵀ + λI` at the context row.
pub fn pointwise_hessian(ctx: &PointwiseContext<'_>) -> DenseMatrix {
    ctx.hessian()
}

/// Approximate word vector after replacing the context row by `perturbed_row`.
/// Returns the current vector unchanged when the rows are equal.
pub fn approximate_vector(ctx: &PointwiseContext<'_>, perturbed_row: &[(u32, f64)]) -> Result<Vec<f64>> {
    if ctx.row.as_slice() == perturbed_row {
        return Ok(ctx.current_vector().to_vec());
    }
    let changes = ctx.changes_to(perturbed_row)?;
    ctx.approximate_with_changes(&changes)
}

/// `X_i − scale · shard_i`, dropping entries driven to (near) zero or below.
pub fn perturb_row(row: &[(u32, f64)], shard: &DocCoocShard, word: u32, scale: f64) -> SparseRow {
    let shard_row = shard.row(word);
    let mut out = Vec::with_capacity(row.len());
    let mut q = 0;
    for &(j, x) in row {
        while q < shard_row.len() && shard_row[q].j < j {
            q += 1;
        }
        let mut v = x;
        if q < shard_row.len() && shard_row[q].j == j {
            v = x - scale * shard_row[q].value;
        }
        if v > DROP_RELATIVE * x {
            out.push((j, v));
        }
    }
    out
}

/// Per-document differential bias of one WEAT spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffBiasVector {
    pub spec_name: String,
    /// Indexed by `doc_id`.
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc_id: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffBiasSummary {
    pub spec: String,
    pub num_docs: usize,
    pub num_nonzero: usize,
    pub most_biasing: Vec<RankedDoc>,
    pub most_debiasing: Vec<RankedDoc>,
}

impl DiffBiasVector {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn summary(&self, top: usize) -> DiffBiasSummary {
        let mut ranked: Vec<RankedDoc> = self
            .beta
            .iter()
            .enumerate()
            .map(|(doc_id, &beta)| RankedDoc { doc_id, beta })
            .collect();
        ranked.sort_by(|x, y| y.beta.total_cmp(&x.beta).then(x.doc_id.cmp(&y.doc_id)));
        let most_biasing = ranked.iter().filter(|d| d.beta > 0.0).take(top).copied().collect();
        let most_debiasing = ranked.iter().rev().filter(|d| d.beta < 0.0).take(top).copied().collect();
        DiffBiasSummary {
            spec: self.spec_name.clone(),
            num_docs: self.beta.len(),
            num_nonzero: self.beta.iter().filter(|b| **b != 0.0).count(),
            most_biasing,
            most_debiasing,
        }
    }

    /// `doc_id<TAB>beta` lines plus a JSON summary next to them.
    pub fn save(&self, tsv_path: &Path, summary_path: &Path) -> Result<()> {
        let file = File::create(tsv_path).map_err(|e| Error::io(tsv_path, e))?;
        let mut out = BufWriter::new(file);
        for (doc_id, beta) in self.beta.iter().enumerate() {
            writeln!(out, "{doc_id}\t{beta:e}").map_err(|e| Error::io(tsv_path, e))?;
        }
        out.flush().map_err(|e| Error::io(tsv_path, e))?;
        let json = serde_json::to_string_pretty(&self.summary(20))?;
        fs::write(summary_path, json + "\n").map_err(|e| Error::io(summary_path, e))
    }

    pub fn load(tsv_path: &Path, spec_name: &str) -> Result<Self> {
        let text = fs::read_to_string(tsv_path).map_err(|e| Error::io(tsv_path, e))?;
        let ctx = || tsv_path.display().to_string();
        let mut beta = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let (id, value) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(ctx(), format!("line {}: expected `doc_id<TAB>beta`", lineno + 1)))?;
            let id: usize = id.parse().map_err(|_| Error::format(ctx(), format!("line {}: bad doc id", lineno + 1)))?;
            if id != beta.len() {
                return Err(Error::format(ctx(), format!("line {}: doc ids must be dense and ordered", lineno + 1)));
            }
            beta.push(value.parse().map_err(|_| Error::format(ctx(), format!("line {}: bad beta", lineno + 1)))?);
        }
        Ok(Self {
            spec_name: spec_name.to_owned(),
            beta,
        })
    }
}

/// Access counters for one differential-bias pass.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DiffBiasStats {
    pub vocab_size: usize,
    pub dim: usize,
    pub num_docs: usize,
    pub shards_streamed: usize,
    pub min_reads_per_shard: u32,
    pub max_reads_per_shard: u32,
    pub docs_touching_weat: usize,
    pub weat_words: usize,
    pub weat_row_nnz: usize,
    pub max_shard_entries: usize,
    /// Largest number of `f64`/entry slots held at once by one worker,
    /// resident WEAT rows included.
    pub peak_elements: usize,
}

impl DiffBiasStats {
    pub fn single_pass(&self) -> bool {
        self.min_reads_per_shard == 1 && self.max_reads_per_shard == 1
    }

    /// No structure of quadratic size in the vocabulary was held.
    pub fn sub_quadratic(&self) -> bool {
        self.peak_elements < self.vocab_size * self.vocab_size
    }
}

#[derive(Debug, Clone)]
pub struct DiffBiasOutput {
    pub beta: DiffBiasVector,
    pub stats: DiffBiasStats,
}

/// Builds the per-word systems of every in-vocabulary WEAT word.
pub fn weat_systems(
    model: &EmbeddingModel,
    rows: &impl RowSource,
    weat: &ResolvedWeat,
    weighting: Weighting,
    config: &InfluenceConfig,
) -> Result<HashMap<u32, WordSystem>> {
    weat.word_ids()
        .into_iter()
        .map(|i| Ok((i, WordSystem::new(model, i, rows.row_of(i), weighting, config)?)))
        .collect()
}

/// For every document `k`, the drop in effect size when `k` is removed:
/// `β_k = d(model) − d(model with WEAT vectors of k's rows re-estimated on
/// X − X^(k))`. Each shard is read exactly once.
pub fn differential_bias(
    model: &EmbeddingModel,
    rows: &impl RowSource,
    shards: &impl ShardSource,
    weat: &ResolvedWeat,
    weighting: Weighting,
    config: &InfluenceConfig,
) -> Result<DiffBiasOutput> {
    let baseline = effect_size_resolved(model, weat)?;
    let systems = weat_systems(model, rows, weat, weighting, config)?;
    let weat_ids: BTreeSet<u32> = systems.keys().copied().collect();
    let weat_row_nnz: usize = systems.values().map(|s| s.row.len()).sum();
    let dim = model.dim();

    let per_doc: Vec<Result<(f64, usize, bool)>> = (0..shards.num_docs())
        .into_par_iter()
        .map(|k| {
            let shard = shards.read_shard(k)?;
            let words: Vec<u32> = shard.row_ids().filter(|i| weat_ids.contains(i)).collect();
            let held = shard.len() + words.len() * dim + dim * dim;
            if words.is_empty() {
                return Ok((0.0, held, false));
            }
            let mut replaced = HashMap::with_capacity(words.len());
            for &i in &words {
                let sys = &systems[&i];
                let ctx = sys.context(model, weighting, config);
                let changes = sys.shard_changes(&shard, 1.0)?;
                replaced.insert(i, ctx.approximate_with_changes(&changes)?);
            }
            let overlay = Overlay { base: model, replaced: &replaced };
            let beta = match effect_size_resolved(&overlay, weat) {
                Ok(d) => baseline - d,
                Err(e) => {
                    log::warn!("document {k}: effect size undefined after removal ({e}); beta set to 0");
                    0.0
                }
            };
            Ok((beta, held, true))
        })
        .collect();

    let mut beta = Vec::with_capacity(per_doc.len());
    let mut stats = DiffBiasStats {
        vocab_size: model.vocab_size(),
        dim,
        num_docs: shards.num_docs(),
        weat_words: systems.len(),
        weat_row_nnz,
        ..Default::default()
    };
    let mut peak_worker = 0;
    for r in per_doc {
        let (b, held, touched) = r?;
        beta.push(b);
        stats.docs_touching_weat += touched as usize;
        peak_worker = peak_worker.max(held);
    }
    let counts = shards.read_counts();
    stats.shards_streamed = counts.iter().filter(|&&c| c > 0).count();
    stats.min_reads_per_shard = counts.iter().copied().min().unwrap_or(0);
    stats.max_reads_per_shard = counts.iter().copied().max().unwrap_or(0);
    stats.max_shard_entries = peak_worker.saturating_sub(dim * dim);
    stats.peak_elements = weat_row_nnz + peak_worker;
    Ok(DiffBiasOutput {
        beta: DiffBiasVector {
            spec_name: weat.name.clone(),
            beta,
        },
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccurrence::CoocEntry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model_2d() -> EmbeddingModel {
        // word 0 plus two context words with u_1 = (1, 0), u_2 = (0, 1)
        let mut m = EmbeddingModel::zeros(3, 2);
        m.u[2] = 1.0;
        m.u[5] = 1.0;
        m
    }

    #[test]
    fn gradient_hand_example() {
        let mut m = model_2d();
        m.w[0] = 2.0; // w_0 = (2, 0): residual on X_01 = 1 is 2
        let ctx = PointwiseContext::new(&m, 0, vec![(1, 1.0)], Weighting::default(), &InfluenceConfig::default()).unwrap();
        let g = pointwise_gradient(&ctx, m.word(0));
        assert!((g[0] - 0.126_491_106_406_735_2).abs() < 1e-9);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn exact_fit_has_zero_gradient() {
        let mut m = model_2d();
        m.w[0] = 3.0f64.ln();
        m.w[1] = 5.0f64.ln();
        let ctx = PointwiseContext::new(&m, 0, vec![(1, 3.0), (2, 5.0)], Weighting::default(), &InfluenceConfig::default()).unwrap();
        let g = ctx.gradient(m.word(0));
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn hessian_hand_example() {
        let m = model_2d();
        let x = 100.0 * 0.5f64.powf(1.0 / 0.75); // f(x) = 0.5
        let cfg = InfluenceConfig {
            ridge: Some(0.0),
            ..Default::default()
        };
        let ctx = PointwiseContext::new(&m, 0, vec![(1, x)], Weighting::default(), &cfg).unwrap();
        let h = pointwise_hessian(&ctx);
        assert!((h[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!([h[(0, 1)], h[(1, 0)], h[(1, 1)]], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_positive_row_is_rejected() {
        let m = model_2d();
        let r = PointwiseContext::new(&m, 0, vec![(1, 0.0)], Weighting::default(), &InfluenceConfig::default());
        assert!(matches!(r, Err(Error::NonPositiveEntry { .. })));
    }

    fn random_ctx_model(seed: u64) -> (EmbeddingModel, SparseRow) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, d) = (12, 4);
        let mut m = EmbeddingModel::random(v, d, &mut rng);
        for x in m.u.iter_mut() {
            *x *= 10.0;
        }
        let row: SparseRow = (1..v as u32).map(|j| (j, rng.gen_range(0.5..150.0))).collect();
        (m, row)
    }

    #[test]
    fn identity_perturbation_is_exact() {
        let (m, row) = random_ctx_model(1);
        let ctx = PointwiseContext::new(&m, 0, row.clone(), Weighting::default(), &InfluenceConfig::default()).unwrap();
        assert_eq!(approximate_vector(&ctx, &row).unwrap(), m.word(0));
        let mut perturbed = row.clone();
        perturbed[0].1 *= 0.5;
        let zero = InfluenceConfig {
            prefactor: Prefactor::Value(0.0),
            ..Default::default()
        };
        let ctx0 = PointwiseContext::new(&m, 0, row, Weighting::default(), &zero).unwrap();
        assert_eq!(approximate_vector(&ctx0, &perturbed).unwrap(), m.word(0));
    }

    #[test]
    fn singular_system_without_ridge_is_an_error() {
        let m = model_2d(); // only u_1 and u_2; a row on u_1 alone is rank one
        let cfg = InfluenceConfig {
            ridge: Some(0.0),
            ..Default::default()
        };
        let ctx = PointwiseContext::new(&m, 0, vec![(1, 4.0)], Weighting::default(), &cfg).unwrap();
        assert!(matches!(approximate_vector(&ctx, &[(1, 2.0)]), Err(Error::Singular { .. })));
        let ridged = PointwiseContext::new(&m, 0, vec![(1, 4.0)], Weighting::default(), &InfluenceConfig::default()).unwrap();
        assert!(approximate_vector(&ridged, &[(1, 2.0)]).is_ok());
    }

    #[test]
    fn changes_match_row_difference() {
        let (m, row) = random_ctx_model(4);
        let ctx = PointwiseContext::new(&m, 0, row.clone(), Weighting::default(), &InfluenceConfig::default()).unwrap();
        let mut perturbed: SparseRow = row.iter().filter(|(j, _)| j % 3 != 0).copied().collect();
        perturbed[1].1 += 1.0;
        let changes = ctx.changes_to(&perturbed).unwrap();
        let dropped = row.iter().filter(|(j, _)| j % 3 == 0).count();
        assert_eq!(changes.len(), dropped + 1);
        assert!(changes.iter().filter(|c| c.new == 0.0).count() == dropped);
    }

    #[test]
    fn perturb_row_drops_exhausted_entries() {
        let shard = DocCoocShard {
            doc_id: 0,
            entries: vec![CoocEntry::new(0, 1, 2.0), CoocEntry::new(0, 3, 0.5), CoocEntry::new(1, 0, 2.0)],
        };
        let row = vec![(1, 2.0), (2, 4.0), (3, 1.5)];
        assert_eq!(perturb_row(&row, &shard, 0, 1.0), [(2, 4.0), (3, 1.0)]);
        assert_eq!(perturb_row(&row, &shard, 0, -1.0), [(1, 4.0), (2, 4.0), (3, 2.0)]);
    }

    #[test]
    fn prefactor_parsing() {
        assert_eq!("one".parse::<Prefactor>().unwrap(), Prefactor::One);
        assert_eq!("paper".parse::<Prefactor>().unwrap(), Prefactor::InverseVocab);
        assert_eq!("0.25".parse::<Prefactor>().unwrap(), Prefactor::Value(0.25));
        assert!("bogus".parse::<Prefactor>().is_err());
        assert_eq!(Prefactor::InverseVocab.value(50), 0.02);
        let cfg: InfluenceConfig = serde_json::from_str(r#"{"prefactor": "inverse-vocab", "ridge": 0.001}"#).unwrap();
        assert_eq!(cfg.prefactor, Prefactor::InverseVocab);
        assert_eq!(cfg.ridge, Some(0.001));
        let back: InfluenceConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn summary_ranks_documents() {
        let v = DiffBiasVector {
            spec_name: "x".into(),
            beta: vec![0.0, 0.3, -0.2, 0.1, -0.5],
        };
        let s = v.summary(2);
        assert_eq!(s.most_biasing.iter().map(|d| d.doc_id).collect::<Vec<_>>(), [1, 3]);
        assert_eq!(s.most_debiasing.iter().map(|d| d.doc_id).collect::<Vec<_>>(), [4, 2]);
        assert_eq!(s.num_nonzero, 4);

        let dir = tempfile::tempdir().unwrap();
        let (t, j) = (dir.path().join("b.tsv"), dir.path().join("b.json"));
        v.save(&t, &j).unwrap();
        assert_eq!(DiffBiasVector::load(&t, "x").unwrap(), v);
    }
}

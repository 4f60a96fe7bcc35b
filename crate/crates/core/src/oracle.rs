//! Reference computations used to validate the influence approximation and
//! the WEAT code: exact pointwise re-solves, warm-start leave-one-out
//! retraining, and a loop-only WEAT.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biasmetrics::{ResolvedWeat, WeatSpec};
use crate::cooccurrence::{CoocEntry, CooccurrenceMatrix, ShardSource};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::glove::{EmbeddingModel, TrainConfig, TrainState, WorkerMode};
use crate::influence::PointwiseContext;

/// Exact minimizer of the pointwise loss over `w_i` alone on
/// `perturbed_row`, with `u`, `b`, `c` frozen and the context's ridge added.
/// Solved by Gaussian elimination with partial pivoting.
pub fn closed_form_resolve(ctx: &PointwiseContext<'_>, perturbed_row: &[(u32, f64)]) -> Result<Vec<f64>> {
    let model = ctx.model;
    let d = model.dim();
    let bi = model.b[ctx.word as usize];
    let mut a = vec![vec![0.0; d + 1]; d];
    for &(j, x) in perturbed_row {
        if !(x > 0.0) {
            return Err(Error::NonPositiveEntry { i: ctx.word, j, value: x });
        }
        let u = model.context(j as usize);
        let f2 = 2.0 * ctx.weighting.f(x);
        let target = x.ln() - bi - model.c[j as usize];
        for r in 0..d {
            for c in 0..d {
                a[r][c] += f2 * u[r] * u[c];
            }
            a[r][d] += f2 * target * u[r];
        }
    }
    for (r, row) in a.iter_mut().enumerate() {
        row[r] += ctx.ridge;
    }
    gauss_solve(a)
}

fn gauss_solve(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let n = a.len();
    let scale = a.iter().flat_map(|r| r[..n].iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap_or(col);
        if !(a[p][col].abs() > 1e-14 * scale) {
            return Err(Error::Singular { column: col, pivot: a[p][col] });
        }
        a.swap(col, p);
        for r in col + 1..n {
            let m = a[r][col] / a[col][col];
            if m != 0.0 {
                for c in col..=n {
                    a[r][c] -= m * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = a[r][n];
        for c in r + 1..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Ok(x)
}

/// Effect size computed with plain loops and nothing shared with the
/// metrics module.
pub fn independent_weat(model: &EmbeddingModel, vocab: &Vocabulary, spec: &WeatSpec) -> Result<f64> {
    let ids = |words: &[String]| -> Vec<usize> {
        let mut out = Vec::new();
        for w in words {
            if let Some(id) = vocab.id(w) {
                out.push(id as usize);
            }
        }
        out
    };
    let (s, t, a, b) = (ids(&spec.s), ids(&spec.t), ids(&spec.a), ids(&spec.b));
    if s.is_empty() || t.is_empty() || a.is_empty() || b.is_empty() {
        return Err(Error::Undefined(format!("{}: a word set is empty after dropping unknown words", spec.name)));
    }
    let cos = |x: usize, y: usize| -> Result<f64> {
        let (vx, vy) = (model.word(x), model.word(y));
        let mut dxy = 0.0;
        let mut nx = 0.0;
        let mut ny = 0.0;
        for k in 0..vx.len() {
            dxy += vx[k] * vy[k];
            nx += vx[k] * vx[k];
            ny += vy[k] * vy[k];
        }
        if nx == 0.0 || ny == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(dxy / (nx.sqrt() * ny.sqrt()))
    };
    let assoc = |w: usize| -> Result<f64> {
        let mut sa = 0.0;
        for &x in &a {
            sa += cos(w, x)?;
        }
        let mut sb = 0.0;
        for &y in &b {
            sb += cos(w, y)?;
        }
        Ok(sa / a.len() as f64 - sb / b.len() as f64)
    };
    let mut all = Vec::new();
    let mut sum_s = 0.0;
    for &w in &s {
        let v = assoc(w)?;
        sum_s += v;
        all.push(v);
    }
    let mut sum_t = 0.0;
    for &w in &t {
        let v = assoc(w)?;
        sum_t += v;
        all.push(v);
    }
    let mut mean = 0.0;
    for v in &all {
        mean += v;
    }
    mean /= all.len() as f64;
    let mut var = 0.0;
    for v in &all {
        var += (v - mean) * (v - mean);
    }
    let sd = (var / all.len() as f64).sqrt();
    if sd <= 1e-15 {
        return Err(Error::Undefined(format!("{}: associations have zero spread", spec.name)));
    }
    Ok((sum_s / s.len() as f64 - sum_t / t.len() as f64) / sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BruteForceConfig {
    /// Extra epochs run from the converged parameters.
    pub epochs: usize,
    /// Compare against a control run continued on the unperturbed matrix
    /// with the same budget and visiting order, instead of against the
    /// converged model itself. Cancels drift that is not caused by the
    /// removal.
    pub paired_control: bool,
}

impl Default for BruteForceConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            paired_control: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BruteForceBeta {
    pub doc_id: usize,
    pub beta: f64,
}

/// Entries of `x` with shard `k` subtracted; entries driven to (near) zero
/// keep their slot with value 0 so the training order is unchanged.
pub fn leave_one_out_entries(x: &CooccurrenceMatrix, shard: &crate::cooccurrence::DocCoocShard) -> Vec<CoocEntry> {
    let mut entries: Vec<CoocEntry> = x.entries().collect();
    for e in &shard.entries {
        // entries are sorted by (i, j)
        if let Ok(pos) = entries.binary_search_by(|p| (p.i, p.j).cmp(&(e.i, e.j))) {
            let old = entries[pos].value;
            let new = old - e.value;
            entries[pos].value = if new <= 1e-9 * old { 0.0 } else { new };
        }
    }
    entries
}

/// Warm-start leave-one-out ground truth for the selected documents.
pub fn brute_force_diffbias(
    state: &TrainState,
    x: &CooccurrenceMatrix,
    shards: &impl ShardSource,
    weat: &ResolvedWeat,
    train: &TrainConfig,
    config: &BruteForceConfig,
    docs: &[usize],
) -> Result<Vec<BruteForceBeta>> {
    let mut cfg = *train;
    cfg.worker_mode = WorkerMode::Deterministic;
    let effect = |m: &EmbeddingModel| crate::biasmetrics::effect_size_resolved(m, weat);
    let reference = if config.paired_control && config.epochs > 0 {
        let entries: Vec<CoocEntry> = x.entries().collect();
        let mut control = state.clone();
        control.run_epochs(&entries, &cfg, config.epochs)?;
        effect(&control.model)?
    } else {
        effect(&state.model)?
    };
    docs.par_iter()
        .map(|&k| {
            let shard = shards.read_shard(k)?;
            let entries = leave_one_out_entries(x, &shard);
            let mut run = state.clone();
            run.run_epochs(&entries, &cfg, config.epochs)?;
            Ok(BruteForceBeta {
                doc_id: k,
                beta: reference - effect(&run.model)?,
            })
        })
        .collect()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && xs[idx[e + 1]] == xs[idx[k]] {
            e += 1;
        }
        let avg = (k + e) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=e] {
            r[i] = avg;
        }
        k = e + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Fraction of documents with `|truth|` strictly above the median `|truth|`
/// whose approximated β has the same sign. `None` when no document qualifies.
pub fn sign_agreement_above_median(approx: &[f64], truth: &[f64]) -> Option<f64> {
    assert_eq!(approx.len(), truth.len());
    let mut mags: Vec<f64> = truth.iter().map(|t| t.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let n = mags.len();
    if n == 0 {
        return None;
    }
    let median = if n % 2 == 1 { mags[n / 2] } else { 0.5 * (mags[n / 2 - 1] + mags[n / 2]) };
    let (mut hit, mut total) = (0usize, 0usize);
    for (a, t) in approx.iter().zip(truth) {
        if t.abs() > median {
            total += 1;
            hit += (a.signum() == t.signum() && *a != 0.0) as usize;
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorError {
    pub doc_id: usize,
    pub word: String,
    pub relative_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocComparison {
    pub doc_id: usize,
    pub beta_approx: f64,
    pub beta_true: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OracleReport {
    pub spec: String,
    pub vector_errors: Vec<VectorError>,
    pub max_relative_l2: f64,
    pub mean_relative_l2: f64,
    pub docs: Vec<DocComparison>,
    pub sign_agreement: Option<f64>,
    pub rank_correlation: f64,
}

impl OracleReport {
    pub fn new(spec: &str, vector_errors: Vec<VectorError>, docs: Vec<DocComparison>) -> Self {
        let max_relative_l2 = vector_errors.iter().map(|e| e.relative_l2).fold(0.0, f64::max);
        let mean_relative_l2 = if vector_errors.is_empty() {
            0.0
        } else {
            vector_errors.iter().map(|e| e.relative_l2).sum::<f64>() / vector_errors.len() as f64
        };
        let approx: Vec<f64> = docs.iter().map(|d| d.beta_approx).collect();
        let truth: Vec<f64> = docs.iter().map(|d| d.beta_true).collect();
        Self {
            spec: spec.to_owned(),
            max_relative_l2,
            mean_relative_l2,
            sign_agreement: sign_agreement_above_median(&approx, &truth),
            rank_correlation: if docs.len() > 1 { spearman(&approx, &truth) } else { 0.0 },
            vector_errors,
            docs,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "spec                 {}", self.spec);
        let _ = writeln!(s, "vectors compared     {}", self.vector_errors.len());
        let _ = writeln!(s, "max relative L2      {:.3e}", self.max_relative_l2);
        let _ = writeln!(s, "mean relative L2     {:.3e}", self.mean_relative_l2);
        let _ = writeln!(s, "documents compared   {}", self.docs.len());
        match self.sign_agreement {
            Some(a) => {
                let _ = writeln!(s, "sign agreement       {:.3}", a);
            }
            None => {
                let _ = writeln!(s, "sign agreement       n/a");
            }
        }
        let _ = writeln!(s, "rank correlation     {:.3}", self.rank_correlation);
        if !self.docs.is_empty() {
            let _ = writeln!(s, "\n{:>8}  {:>12}  {:>12}", "doc", "beta_approx", "beta_true");
            for d in &self.docs {
                let _ = writeln!(s, "{:>8}  {:>12.4e}  {:>12.4e}", d.doc_id, d.beta_approx, d.beta_true);
            }
        }
        s
    }
}

pub fn relative_l2(approx: &[f64], exact: &[f64]) -> f64 {
    let diff: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = exact.iter().map(|b| b * b).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glove::Weighting;
    use crate::influence::InfluenceConfig;

    #[test]
    fn one_dimensional_hand_solve() {
        // f = 1 (x ≥ x_max), u = 2, b + c = 0, log x = 4: 8w = 16
        let mut m = EmbeddingModel::zeros(2, 1);
        m.u[1] = 2.0;
        let x = 4.0f64.exp();
        let w = Weighting { x_max: 10.0, alpha: 0.75 };
        let cfg = InfluenceConfig {
            ridge: Some(0.0),
            ..Default::default()
        };
        let ctx = PointwiseContext::new(&m, 0, vec![(1, x)], w, &cfg).unwrap();
        let sol = closed_form_resolve(&ctx, &[(1, x)]).unwrap();
        assert!((sol[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_resolve_is_an_error() {
        let mut m = EmbeddingModel::zeros(2, 2);
        m.u[2] = 1.0;
        let cfg = InfluenceConfig {
            ridge: Some(0.0),
            ..Default::default()
        };
        let ctx = PointwiseContext::new(&m, 0, vec![(1, 3.0)], Weighting::default(), &cfg).unwrap();
        assert!(matches!(closed_form_resolve(&ctx, &[(1, 3.0)]), Err(Error::Singular { .. })));
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
        // ties get average ranks: x ranks (1.5, 1.5, 3), y ranks (1, 2, 3)
        let r = spearman(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]);
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12);
    }

    #[test]
    fn sign_agreement_counts_only_large_truths() {
        let truth = [0.1, -0.2, 0.3, -0.4, 0.0];
        let approx = [-1.0, 1.0, 0.5, -0.5, 9.0];
        // median |truth| = 0.2; qualifying docs 2 and 3, both agree
        assert_eq!(sign_agreement_above_median(&approx, &truth), Some(1.0));
        assert_eq!(sign_agreement_above_median(&[1.0, 1.0], &[0.5, 0.5]), None);
    }

    #[test]
    fn gauss_matches_known_solution() {
        let x = gauss_solve(vec![vec![0.0, 2.0, 4.0], vec![3.0, 1.0, 5.0]]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }
}

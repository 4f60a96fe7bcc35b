//! WEAT association scores, effect sizes and permutation p-values, plus the
//! TOP-1 analogy evaluator.
//!
//! All metrics read word vectors (`W`) only.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::glove::EmbeddingModel;

/// Anything that can hand out a word vector by id.
pub trait VectorLookup {
    fn vector(&self, id: u32) -> &[f64];
}

impl VectorLookup for EmbeddingModel {
    fn vector(&self, id: u32) -> &[f64] {
        self.word(id as usize)
    }
}

/// A model with a few word vectors replaced, without copying `W`.
pub struct Overlay<'a> {
    pub base: &'a EmbeddingModel,
    pub replaced: &'a HashMap<u32, Vec<f64>>,
}

impl VectorLookup for Overlay<'_> {
    fn vector(&self, id: u32) -> &[f64] {
        match self.replaced.get(&id) {
            Some(v) => v,
            None => self.base.word(id as usize),
        }
    }
}

/// The four word sets of one association test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeatSpec {
    pub name: String,
    #[serde(rename = "S")]
    pub s: Vec<String>,
    #[serde(rename = "T")]
    pub t: Vec<String>,
    #[serde(rename = "A")]
    pub a: Vec<String>,
    #[serde(rename = "B")]
    pub b: Vec<String>,
}

impl WeatSpec {
    /// Science/arts targets against male/female attributes.
    pub fn weat1() -> Self {
        serde_json::from_str(include_str!("../data/weat1.json")).expect("bundled weat1.json")
    }

    /// Instruments/weapons targets against pleasant/unpleasant attributes.
    pub fn weat2() -> Self {
        serde_json::from_str(include_str!("../data/weat2.json")).expect("bundled weat2.json")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "weat1" => Some(Self::weat1()),
            "weat2" => Some(Self::weat2()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("WEAT spec {}: {msg}", self.name)));
        for (label, set) in [("S", &self.s), ("T", &self.t), ("A", &self.a), ("B", &self.b)] {
            if set.is_empty() {
                return bad(format!("{label} is empty"));
            }
        }
        let disjoint = |x: &[String], y: &[String]| {
            let xs: HashSet<&String> = x.iter().collect();
            y.iter().all(|w| !xs.contains(w))
        };
        if !disjoint(&self.s, &self.t) {
            return bad("S and T overlap".into());
        }
        if !disjoint(&self.a, &self.b) {
            return bad("A and B overlap".into());
        }
        if self.a.len() != self.b.len() {
            return bad(format!("|A| = {} but |B| = {}", self.a.len(), self.b.len()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: WeatSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// All words of the four sets.
    pub fn all_words(&self) -> impl Iterator<Item = &String> {
        self.s.iter().chain(&self.t).chain(&self.a).chain(&self.b)
    }

    pub fn swap_targets(&self) -> Self {
        Self {
            s: self.t.clone(),
            t: self.s.clone(),
            ..self.clone()
        }
    }

    pub fn swap_attributes(&self) -> Self {
        Self {
            a: self.b.clone(),
            b: self.a.clone(),
            ..self.clone()
        }
    }
}

/// A spec mapped onto vocabulary ids, with out-of-vocabulary words dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedWeat {
    pub name: String,
    pub s: Vec<u32>,
    pub t: Vec<u32>,
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub missing: Vec<String>,
}

impl ResolvedWeat {
    pub fn resolve(spec: &WeatSpec, vocab: &Vocabulary) -> Self {
        let mut missing = Vec::new();
        let mut map = |set: &[String]| {
            set.iter()
                .filter_map(|w| {
                    let id = vocab.id(w);
                    if id.is_none() {
                        missing.push(w.clone());
                    }
                    id
                })
                .collect::<Vec<_>>()
        };
        let s = map(&spec.s);
        let t = map(&spec.t);
        let a = map(&spec.a);
        let b = map(&spec.b);
        Self {
            name: spec.name.clone(),
            s,
            t,
            a,
            b,
            missing,
        }
    }

    /// Sorted distinct ids of every in-vocabulary word of the spec.
    pub fn word_ids(&self) -> Vec<u32> {
        self.s.iter().chain(&self.t).chain(&self.a).chain(&self.b).copied().sorted().dedup().collect()
    }

    pub fn n_missing(&self) -> usize {
        self.missing.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatResult {
    pub spec: String,
    pub effect_size: f64,
    pub p_value: f64,
    pub n_missing: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(v1: &[f64], v2: &[f64]) -> Result<f64> {
    if v1.len() != v2.len() {
        return Err(Error::DimensionMismatch {
            expected: v1.len(),
            found: v2.len(),
        });
    }
    let (n1, n2) = (norm(v1), norm(v2));
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(v1, v2) / (n1 * n2)).clamp(-1.0, 1.0))
}

/// `s(w, A, B)`: mean cosine to `A` minus mean cosine to `B`.
pub fn association(w: &[f64], a: &[&[f64]], b: &[&[f64]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Undefined("association needs non-empty attribute sets".into()));
    }
    let mean = |set: &[&[f64]]| -> Result<f64> {
        let mut total = 0.0;
        for x in set {
            total += cosine(w, x)?;
        }
        Ok(total / set.len() as f64)
    };
    Ok(mean(a)? - mean(b)?)
}

/// Associations of every `S` word followed by every `T` word.
pub fn target_associations(lookup: &impl VectorLookup, weat: &ResolvedWeat) -> Result<Vec<f64>> {
    if weat.s.is_empty() || weat.t.is_empty() || weat.a.is_empty() || weat.b.is_empty() {
        return Err(Error::Undefined(format!(
            "WEAT {}: a word set is empty after dropping {} out-of-vocabulary words",
            weat.name,
            weat.n_missing()
        )));
    }
    let a: Vec<&[f64]> = weat.a.iter().map(|&i| lookup.vector(i)).collect();
    let b: Vec<&[f64]> = weat.b.iter().map(|&i| lookup.vector(i)).collect();
    weat.s.iter().chain(&weat.t).map(|&w| association(lookup.vector(w), &a, &b)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Effect size `d` for already-resolved ids.
pub fn effect_size_resolved(lookup: &impl VectorLookup, weat: &ResolvedWeat) -> Result<f64> {
    let assoc = target_associations(lookup, weat)?;
    let (s, t) = assoc.split_at(weat.s.len());
    let std = population_std(&assoc);
    if !(std > 1e-15) {
        return Err(Error::Undefined(format!("WEAT {}: associations have zero spread", weat.name)));
    }
    let d = (mean(s) - mean(t)) / std;
    if s.len() == t.len() {
        debug_assert!(d.abs() <= 2.0 + 1e-9, "effect size {d} out of range");
    }
    Ok(d)
}

/// Effect size of `spec` under the model's word vectors.
pub fn effect_size(model: &EmbeddingModel, vocab: &Vocabulary, spec: &WeatSpec) -> Result<f64> {
    effect_size_resolved(model, &ResolvedWeat::resolve(spec, vocab))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PValueConfig {
    /// Enumerate all equal splits when their number is at most this,
    /// otherwise draw this many random splits.
    pub max_partitions: u64,
    pub seed: u64,
}

impl Default for PValueConfig {
    fn default() -> Self {
        Self {
            max_partitions: 100_000,
            seed: 0,
        }
    }
}

fn binomial(n: usize, k: usize) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// One-sided permutation p-value of `Σ_S s − Σ_T s`: the share of equal
/// splits of `S ∪ T` whose statistic reaches the observed one.
pub fn p_value_resolved(lookup: &impl VectorLookup, weat: &ResolvedWeat, config: &PValueConfig) -> Result<f64> {
    if weat.s.len() != weat.t.len() {
        return Err(Error::Config(format!(
            "WEAT {}: permutation test needs |S| == |T|, got {} and {}",
            weat.name,
            weat.s.len(),
            weat.t.len()
        )));
    }
    let assoc = target_associations(lookup, weat)?;
    let k = weat.s.len();
    let total: f64 = assoc.iter().sum();
    // statistic of a split with `x` on the S side: 2 Σ_x s − total
    let stat = |sum_x: f64| 2.0 * sum_x - total;
    let observed = stat(assoc[..k].iter().sum());
    let tol = 1e-12 * (assoc.iter().map(|x| x.abs()).sum::<f64>() + 1.0);
    let reaches = |s: f64| s >= observed - tol;

    match binomial(assoc.len(), k) {
        Some(n) if n <= config.max_partitions => {
            let hits = (0..assoc.len())
                .combinations(k)
                .filter(|idx| reaches(stat(idx.iter().map(|&i| assoc[i]).sum())))
                .count();
            Ok(hits as f64 / n as f64)
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut idx: Vec<usize> = (0..assoc.len()).collect();
            let mut hits = 0u64;
            for _ in 0..config.max_partitions {
                idx.shuffle(&mut rng);
                if reaches(stat(idx[..k].iter().map(|&i| assoc[i]).sum())) {
                    hits += 1;
                }
            }
            Ok((hits + 1) as f64 / (config.max_partitions + 1) as f64)
        }
    }
}

pub fn p_value(model: &EmbeddingModel, vocab: &Vocabulary, spec: &WeatSpec, config: &PValueConfig) -> Result<f64> {
    p_value_resolved(model, &ResolvedWeat::resolve(spec, vocab), config)
}

/// Effect size and p-value together.
pub fn evaluate(lookup: &impl VectorLookup, vocab: &Vocabulary, spec: &WeatSpec, config: &PValueConfig) -> Result<WeatResult> {
    let weat = ResolvedWeat::resolve(spec, vocab);
    if weat.n_missing() > 0 {
        log::warn!("WEAT {}: {} words missing from vocabulary: {:?}", spec.name, weat.n_missing(), weat.missing);
    }
    Ok(WeatResult {
        spec: spec.name.clone(),
        effect_size: effect_size_resolved(lookup, &weat)?,
        p_value: p_value_resolved(lookup, &weat, config)?,
        n_missing: weat.n_missing(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyQuestion {
    pub a: String,
    pub b: String,
    pub c: String,
    pub expected: String,
}

/// Parses `a b c expected` lines; `:` section headers and blank lines are
/// ignored. Tokens are lowercased.
pub fn parse_analogies(text: &str) -> Result<Vec<AnalogyQuestion>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(':') {
            continue;
        }
        let toks: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
        let [a, b, c, expected]: [String; 4] = toks
            .try_into()
            .map_err(|_| Error::format("analogy questions", format!("line {}: expected 4 tokens", lineno + 1)))?;
        out.push(AnalogyQuestion { a, b, c, expected });
    }
    Ok(out)
}

pub fn load_analogies(path: &Path) -> Result<Vec<AnalogyQuestion>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_analogies(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalogyResult {
    pub hits: usize,
    pub attempted: usize,
    pub skipped: usize,
    pub accuracy: f64,
}

/// TOP-1 accuracy of `b − a + c` nearest-neighbour prediction over
/// row-normalized word vectors, excluding the three query words.
pub fn analogy_top1(model: &EmbeddingModel, vocab: &Vocabulary, questions: &[AnalogyQuestion]) -> Result<AnalogyResult> {
    let dim = model.dim();
    let v = model.vocab_size();
    let normalized: Vec<f64> = (0..v)
        .flat_map(|i| {
            let w = model.word(i);
            let n = norm(w);
            w.iter().map(move |x| if n > 0.0 { x / n } else { 0.0 })
        })
        .collect();
    let row = |i: usize| &normalized[i * dim..(i + 1) * dim];

    let resolved: Vec<[usize; 4]> = questions
        .iter()
        .filter_map(|q| {
            let ids = [&q.a, &q.b, &q.c, &q.expected].map(|t| vocab.id(t).map(|x| x as usize));
            match ids {
                [Some(a), Some(b), Some(c), Some(d)] => Some([a, b, c, d]),
                _ => None,
            }
        })
        .collect();
    let attempted = resolved.len();
    let skipped = questions.len() - attempted;
    if attempted == 0 {
        return Err(Error::Undefined("no analogy question has all four words in vocabulary".into()));
    }
    let hits = resolved
        .par_iter()
        .filter(|&&[a, b, c, expected]| {
            let target: Vec<f64> = (0..dim).map(|k| row(b)[k] - row(a)[k] + row(c)[k]).collect();
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for cand in 0..v {
                if cand == a || cand == b || cand == c {
                    continue;
                }
                let score = dot(row(cand), &target);
                if score > best.0 {
                    best = (score, cand);
                }
            }
            best.1 == expected
        })
        .count();
    Ok(AnalogyResult {
        hits,
        attempted,
        skipped,
        accuracy: hits as f64 / attempted as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn model_from_rows(rows: &[&[f64]]) -> EmbeddingModel {
        let dim = rows[0].len();
        let w: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let v = rows.len();
        EmbeddingModel::from_parts(v, dim, w, vec![0.0; v * dim], vec![0.0; v], vec![0.0; v]).unwrap()
    }

    fn spec(s: &[&str], t: &[&str], a: &[&str], b: &[&str]) -> WeatSpec {
        let own = |x: &[&str]| x.iter().map(|w| w.to_string()).collect();
        WeatSpec {
            name: "test".into(),
            s: own(s),
            t: own(t),
            a: own(a),
            b: own(b),
        }
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3, -2.0, 5.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.707_106_781_186_547_5).abs() < 1e-12);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn association_examples() {
        let (x, y) = ([1.0, 0.0], [0.0, 1.0]);
        assert_eq!(association(&x, &[&x], &[&y]).unwrap(), 1.0);
        assert_eq!(association(&x, &[&y], &[&x]).unwrap(), -1.0);
        let w = [0.4, 0.9];
        assert_eq!(association(&w, &[&x, &y], &[&x, &y]).unwrap(), 0.0);
    }

    #[test]
    fn hand_example_effect_size_and_p_value() {
        let m = model_from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let vocab = Vocabulary::from_tokens(["s", "t", "a", "b"]);
        let sp = spec(&["s"], &["t"], &["a"], &["b"]);
        assert_eq!(effect_size(&m, &vocab, &sp).unwrap(), 2.0);
        assert_eq!(p_value(&m, &vocab, &sp, &PValueConfig::default()).unwrap(), 0.5);
    }

    #[test]
    fn identical_target_associations_give_zero() {
        // S and T hold the same two vectors in different order
        let x = [1.0, 0.2];
        let y = [0.3, 0.9];
        let m = model_from_rows(&[&x, &y, &y, &x, &[1.0, 0.0], &[0.0, 1.0]]);
        let vocab = Vocabulary::from_tokens(["s1", "s2", "t1", "t2", "a", "b"]);
        let d = effect_size(&m, &vocab, &spec(&["s1", "s2"], &["t1", "t2"], &["a"], &["b"])).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn zero_spread_is_undefined() {
        let m = model_from_rows(&[&[1.0, 0.5], &[1.0, 0.5], &[1.0, 0.0], &[0.0, 1.0]]);
        let vocab = Vocabulary::from_tokens(["s", "t", "a", "b"]);
        let r = effect_size(&m, &vocab, &spec(&["s"], &["t"], &["a"], &["b"]));
        assert!(matches!(r, Err(Error::Undefined(_))));
    }

    #[test]
    fn oov_words_are_dropped_and_counted() {
        let m = model_from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let vocab = Vocabulary::from_tokens(["s", "t", "a", "b"]);
        let sp = spec(&["s", "zz"], &["t"], &["a"], &["b", "qq"]);
        let weat = ResolvedWeat::resolve(&sp, &vocab);
        assert_eq!(weat.missing, ["zz", "qq"]);
        assert_eq!(effect_size_resolved(&m, &weat).unwrap(), 2.0);
        let all_missing = spec(&["zz"], &["t"], &["a"], &["b"]);
        assert!(effect_size(&m, &vocab, &all_missing).is_err());
    }

    #[test]
    fn p_value_requires_equal_targets() {
        let m = model_from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.1], &[1.0, 0.0], &[0.0, 1.0]]);
        let vocab = Vocabulary::from_tokens(["s", "t", "t2", "a", "b"]);
        let sp = spec(&["s"], &["t", "t2"], &["a"], &["b"]);
        assert!(p_value(&m, &vocab, &sp, &PValueConfig::default()).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(spec(&["x"], &["x"], &["a"], &["b"]).validate().is_err());
        assert!(spec(&["x"], &["y"], &["a"], &["a"]).validate().is_err());
        assert!(spec(&["x"], &["y"], &["a", "c"], &["b"]).validate().is_err());
        assert!(spec(&[], &["y"], &["a"], &["b"]).validate().is_err());
        WeatSpec::weat1().validate().unwrap();
        WeatSpec::weat2().validate().unwrap();
        assert_eq!(WeatSpec::weat1().s.len(), 8);
        assert_eq!(WeatSpec::weat2().b.len(), 25);
    }

    fn random_model(seed: u64, v: usize, dim: usize) -> EmbeddingModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..v * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        EmbeddingModel::from_parts(v, dim, w, vec![0.0; v * dim], vec![0.0; v], vec![0.0; v]).unwrap()
    }

    fn random_setup(seed: u64) -> (EmbeddingModel, Vocabulary, WeatSpec) {
        let names: Vec<String> = (0..16).map(|i| format!("w{i}")).collect();
        let vocab = Vocabulary::from_tokens(names.clone());
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let sp = spec(&refs[0..4], &refs[4..8], &refs[8..12], &refs[12..16]);
        (random_model(seed, 16, 5), vocab, sp)
    }

    proptest! {
        #[test]
        fn effect_size_antisymmetry_bounds_and_scale(seed in 0u64..10_000, scale in 0.01f64..100.0) {
            let (m, vocab, sp) = random_setup(seed);
            let d = effect_size(&m, &vocab, &sp).unwrap();
            prop_assert!(d.abs() <= 2.0);
            let d_t = effect_size(&m, &vocab, &sp.swap_targets()).unwrap();
            let d_a = effect_size(&m, &vocab, &sp.swap_attributes()).unwrap();
            prop_assert!((d + d_t).abs() < 1e-12);
            prop_assert!((d + d_a).abs() < 1e-12);
            let mut scaled = m.clone();
            scaled.w.iter_mut().for_each(|x| *x *= scale);
            let d_s = effect_size(&scaled, &vocab, &sp).unwrap();
            prop_assert!((d - d_s).abs() < 1e-10);
        }

        #[test]
        fn p_value_in_unit_interval_and_relabel_invariant(seed in 0u64..10_000) {
            let (m, vocab, sp) = random_setup(seed);
            let cfg = PValueConfig::default();
            let p = p_value(&m, &vocab, &sp, &cfg).unwrap();
            prop_assert!(p > 0.0 && p <= 1.0);
            let mut shuffled = sp.clone();
            shuffled.s.reverse();
            prop_assert_eq!(p, p_value(&m, &vocab, &shuffled, &cfg).unwrap());
        }
    }

    #[test]
    fn sampled_p_value_is_close_to_exact() {
        let (m, vocab, sp) = random_setup(42);
        let exact = p_value(&m, &vocab, &sp, &PValueConfig::default()).unwrap();
        let sampled = p_value(&m, &vocab, &sp, &PValueConfig { max_partitions: 20, seed: 1 }).unwrap();
        assert!(sampled >= 1.0 / 21.0);
        let sampled_big = p_value(
            &m,
            &vocab,
            &sp,
            &PValueConfig {
                max_partitions: 69, // C(8,4) = 70 forces sampling
                seed: 3,
            },
        )
        .unwrap();
        assert!((sampled_big - exact).abs() < 0.25, "{sampled_big} vs {exact}");
    }

    #[test]
    fn constructed_analogy_is_hit() {
        // king - man + woman = queen exactly; distractors near-orthogonal
        let king = [1.0, 1.0, 0.0, 0.0, 0.0];
        let man = [1.0, 0.0, 0.0, 0.0, 0.0];
        let woman = [0.0, 0.0, 1.0, 0.0, 0.0];
        let queen = [0.0, 1.0, 1.0, 0.0, 0.0];
        let d1 = [0.0, 0.0, 0.0, 1.0, 0.05];
        let d2 = [0.05, 0.0, 0.0, 0.0, 1.0];
        let m = model_from_rows(&[&king, &man, &woman, &queen, &d1, &d2]);
        let vocab = Vocabulary::from_tokens(["king", "man", "woman", "queen", "d1", "d2"]);
        let qs = parse_analogies(": family\nman king woman queen\nMAN king woman nothere\n").unwrap();
        let r = analogy_top1(&m, &vocab, &qs).unwrap();
        assert_eq!((r.hits, r.attempted, r.skipped), (1, 1, 1));
        assert_eq!(r.accuracy, 1.0);
        let none = parse_analogies("x y z w").unwrap();
        assert!(analogy_top1(&m, &vocab, &none).is_err());
        assert!(parse_analogies("a b c").is_err());
    }
}

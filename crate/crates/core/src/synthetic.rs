//! Seeded generator of a small corpus with planted structure: science and
//! arts target words co-occur in excess with male and female attribute
//! words respectively, and two families of word pairs support analogy
//! questions.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::biasmetrics::{AnalogyQuestion, WeatSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub num_docs: usize,
    /// Share of documents dominated by stereotypical sentences.
    pub stereo_fraction: f64,
    /// Share of documents dominated by counter-stereotypical sentences.
    pub anti_fraction: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub filler_words: usize,
    pub families: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 20_190_601,
            num_docs: 200,
            stereo_fraction: 0.35,
            anti_fraction: 0.25,
            min_tokens: 180,
            max_tokens: 320,
            filler_words: 370,
            families: 10,
        }
    }
}

const SCIENCE_CONTEXT: [&str; 12] = [
    "lab", "data", "theory", "measure", "atom", "orbit", "equation", "sample", "telescope", "energy", "formula", "rocket",
];
const ARTS_CONTEXT: [&str; 12] = [
    "stage", "verse", "paint", "melody", "canvas", "chorus", "ballet", "author", "theater", "rhyme", "gallery", "opera",
];
const MALE_MARKERS: [&str; 3] = ["king", "prince", "uncle"];
const FEMALE_MARKERS: [&str; 3] = ["queen", "princess", "aunt"];
const TOWN_MARKERS: [&str; 3] = ["street", "market", "harbor"];
const REALM_MARKERS: [&str; 3] = ["border", "province", "crown"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DocKind {
    Stereo,
    Anti,
    General,
}

#[derive(Debug, Clone, Copy)]
enum Sentence {
    Stereo,
    Anti,
    Topic,
    Kin,
    Family,
    Filler,
}

struct Lexicon {
    weat: WeatSpec,
    towns: Vec<String>,
    realms: Vec<String>,
    family_context: Vec<[String; 2]>,
    kin_context: Vec<[String; 2]>,
    filler: Vec<String>,
    filler_cdf: Vec<f64>,
}

fn pseudo_words(n: usize, taken: &HashSet<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    let consonants = ['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
    let vowels = ['a', 'e', 'i', 'o', 'u'];
    let syllables: Vec<String> = consonants.iter().flat_map(|c| vowels.iter().map(move |v| format!("{c}{v}"))).collect();
    let mut words: Vec<String> = syllables
        .iter()
        .flat_map(|a| syllables.iter().map(move |b| format!("{a}{b}")))
        .filter(|w| !taken.contains(w))
        .collect();
    words.shuffle(rng);
    words.truncate(n);
    words
}

impl Lexicon {
    fn new(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Self {
        let weat = WeatSpec::weat1();
        let towns: Vec<String> = (0..config.families).map(|k| format!("town{k}")).collect();
        let realms: Vec<String> = (0..config.families).map(|k| format!("realm{k}")).collect();
        let mut taken: HashSet<String> = weat.all_words().cloned().collect();
        for w in SCIENCE_CONTEXT.iter().chain(&ARTS_CONTEXT).chain(&MALE_MARKERS).chain(&FEMALE_MARKERS) {
            taken.insert((*w).to_owned());
        }
        let tags = pseudo_words(config.families * 2 + weat.a.len() * 2, &taken, rng);
        taken.extend(tags.iter().cloned());
        let family_context = (0..config.families).map(|k| [tags[2 * k].clone(), tags[2 * k + 1].clone()]).collect();
        let off = config.families * 2;
        let kin_context = (0..weat.a.len()).map(|p| [tags[off + 2 * p].clone(), tags[off + 2 * p + 1].clone()]).collect();
        let filler = pseudo_words(config.filler_words, &taken, rng);
        let mut acc = 0.0;
        let weights: Vec<f64> = (1..=filler.len()).map(|r| 1.0 / (r as f64).powf(0.9)).collect();
        let total: f64 = weights.iter().sum();
        let filler_cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Self {
            weat,
            towns,
            realms,
            family_context,
            kin_context,
            filler,
            filler_cdf,
        }
    }

    fn filler_word(&self, rng: &mut ChaCha8Rng) -> String {
        let x: f64 = rng.gen();
        let k = self.filler_cdf.partition_point(|&c| c < x).min(self.filler.len() - 1);
        self.filler[k].clone()
    }

    fn sentence(&self, kind: Sentence, rng: &mut ChaCha8Rng) -> Vec<String> {
        let pick = |pool: &[String], rng: &mut ChaCha8Rng| pool.choose(rng).expect("non-empty pool").clone();
        let pick_str = |pool: &[&str], rng: &mut ChaCha8Rng| (*pool.choose(rng).expect("non-empty pool")).to_owned();
        let science: bool = rng.gen();
        let mut content = Vec::new();
        match kind {
            Sentence::Stereo | Sentence::Anti => {
                let (targets, ctx) = if science { (&self.weat.s, &SCIENCE_CONTEXT) } else { (&self.weat.t, &ARTS_CONTEXT) };
                let male = science == matches!(kind, Sentence::Stereo);
                let attrs = if male { &self.weat.a } else { &self.weat.b };
                for _ in 0..2 {
                    content.push(pick(targets, rng));
                    content.push(pick(attrs, rng));
                }
                content.push(pick_str(ctx, rng));
                content.push(pick_str(ctx, rng));
            }
            Sentence::Topic => {
                let (targets, ctx) = if science { (&self.weat.s, &SCIENCE_CONTEXT) } else { (&self.weat.t, &ARTS_CONTEXT) };
                content.push(pick(targets, rng));
                content.push(pick(targets, rng));
                for _ in 0..3 {
                    content.push(pick_str(ctx, rng));
                }
            }
            Sentence::Kin => {
                let p = rng.gen_range(0..self.kin_context.len());
                let male: bool = rng.gen();
                let (word, markers) = if male { (&self.weat.a[p], &MALE_MARKERS) } else { (&self.weat.b[p], &FEMALE_MARKERS) };
                content.push(word.clone());
                content.extend(self.kin_context[p].iter().cloned());
                content.push(pick_str(markers, rng));
                content.push(pick_str(markers, rng));
            }
            Sentence::Family => {
                let k = rng.gen_range(0..self.towns.len());
                let town: bool = rng.gen();
                let (word, markers) = if town { (&self.towns[k], &TOWN_MARKERS) } else { (&self.realms[k], &REALM_MARKERS) };
                content.push(word.clone());
                content.extend(self.family_context[k].iter().cloned());
                content.push(pick_str(markers, rng));
                content.push(pick_str(markers, rng));
            }
            Sentence::Filler => {}
        }
        let len = rng.gen_range(10..=15).max(content.len() + 2);
        let mut out: Vec<String> = (0..len - content.len()).map(|_| self.filler_word(rng)).collect();
        for w in content {
            let at = rng.gen_range(0..=out.len());
            out.insert(at, w);
        }
        out
    }

    fn document(&self, kind: DocKind, len: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        use Sentence::*;
        let table: [(Sentence, f64); 6] = match kind {
            DocKind::Stereo => [(Stereo, 0.35), (Anti, 0.04), (Topic, 0.15), (Kin, 0.16), (Family, 0.15), (Filler, 0.15)],
            DocKind::Anti => [(Stereo, 0.04), (Anti, 0.35), (Topic, 0.15), (Kin, 0.16), (Family, 0.15), (Filler, 0.15)],
            DocKind::General => [(Stereo, 0.03), (Anti, 0.03), (Topic, 0.15), (Kin, 0.2), (Family, 0.3), (Filler, 0.29)],
        };
        let mut tokens = Vec::with_capacity(len + 16);
        while tokens.len() < len {
            let mut x: f64 = rng.gen();
            let mut chosen = Filler;
            for &(s, p) in &table {
                if x < p {
                    chosen = s;
                    break;
                }
                x -= p;
            }
            tokens.extend(self.sentence(chosen, rng));
        }
        tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    /// One whitespace-joined document per entry.
    pub documents: Vec<String>,
    pub analogies: Vec<AnalogyQuestion>,
}

impl SyntheticCorpus {
    /// One document per line.
    pub fn corpus_text(&self) -> String {
        let mut s = self.documents.join("\n");
        s.push('\n');
        s
    }

    /// Analogy questions with section headers.
    pub fn analogy_text(&self) -> String {
        let mut s = String::new();
        let mut section = "";
        for q in &self.analogies {
            let this = if q.a.starts_with("town") { "capital-realm" } else { "family" };
            if this != section {
                s.push_str(&format!(": {this}\n"));
                section = this;
            }
            s.push_str(&format!("{} {} {} {}\n", q.a, q.b, q.c, q.expected));
        }
        s
    }
}

pub fn generate(config: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lex = Lexicon::new(config, &mut rng);
    let n_stereo = (config.num_docs as f64 * config.stereo_fraction).round() as usize;
    let n_anti = (config.num_docs as f64 * config.anti_fraction).round() as usize;
    let mut kinds: Vec<DocKind> = (0..config.num_docs)
        .map(|k| {
            if k < n_stereo {
                DocKind::Stereo
            } else if k < n_stereo + n_anti {
                DocKind::Anti
            } else {
                DocKind::General
            }
        })
        .collect();
    kinds.shuffle(&mut rng);
    let documents = kinds
        .iter()
        .map(|&kind| {
            let len = rng.gen_range(config.min_tokens..=config.max_tokens);
            lex.document(kind, len, &mut rng).join(" ")
        })
        .collect();

    let mut analogies = Vec::new();
    let q = |a: &str, b: &str, c: &str, d: &str| AnalogyQuestion {
        a: a.to_owned(),
        b: b.to_owned(),
        c: c.to_owned(),
        expected: d.to_owned(),
    };
    for p in 0..lex.towns.len() {
        for r in 0..lex.towns.len() {
            if p != r {
                analogies.push(q(&lex.towns[p], &lex.realms[p], &lex.towns[r], &lex.realms[r]));
            }
        }
    }
    let (a, b) = (&lex.weat.a, &lex.weat.b);
    for p in 0..a.len() {
        for r in 0..a.len() {
            if p != r {
                analogies.push(q(&a[p], &b[p], &a[r], &b[r]));
            }
        }
    }
    SyntheticCorpus { documents, analogies }
}

//! Text ingestion: tokenization, document length filtering and vocabulary
//! construction.
//!
//! A corpus is either a single UTF-8 file holding one document per line or a
//! directory of `.txt` files (one document per file, visited in filename
//! order). Co-occurrence windows never cross document boundaries.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases, strips everything outside `[a-z0-9'-]` and splits on
/// whitespace.
pub fn tokenize(raw_text: &str) -> Vec<String> {
    let cleaned: String = raw_text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_whitespace() || matches!(c, 'a'..='z' | '0'..='9' | '\'' | '-'))
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: usize,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(doc_id: usize, tokens: Vec<String>) -> Self {
        Self { doc_id, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub min_doc_length: usize,
    pub max_doc_length: usize,
    pub min_count: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            min_doc_length: 200,
            max_doc_length: 10_000,
            min_count: 20,
        }
    }
}

/// Keeps documents whose token count lies in `[min_len, max_len]` and
/// renumbers them densely in their original order.
pub fn filter_documents(docs: Vec<Document>, min_len: usize, max_len: usize) -> Result<Vec<Document>> {
    if min_len > max_len {
        return Err(Error::Config(format!(
            "min_doc_length {min_len} exceeds max_doc_length {max_len}"
        )));
    }
    Ok(docs
        .into_iter()
        .filter(|d| (min_len..=max_len).contains(&d.len()))
        .enumerate()
        .map(|(doc_id, d)| Document::new(doc_id, d.tokens))
        .collect())
}

/// Tokenizes raw documents in parallel, preserving order.
pub fn tokenize_documents(raw: &[String]) -> Vec<Document> {
    raw.par_iter()
        .enumerate()
        .map(|(doc_id, text)| Document::new(doc_id, tokenize(text)))
        .collect()
}

/// Reads raw document texts from a one-document-per-line file or a
/// directory of `.txt` files.
pub fn read_raw_corpus(path: &Path) -> Result<Vec<String>> {
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "txt"))
            .collect();
        files.sort();
        files
            .iter()
            .map(|p| fs::read_to_string(p).map_err(|e| Error::io(p, e)))
            .collect()
    } else {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        BufReader::new(file)
            .lines()
            .map(|line| line.map_err(|e| Error::io(path, e)))
            .collect()
    }
}

/// Reads, tokenizes and length-filters every input path, in argument order.
pub fn load_corpus(paths: &[impl AsRef<Path>], config: &CorpusConfig) -> Result<Vec<Document>> {
    let mut raw = Vec::new();
    for p in paths {
        raw.extend(read_raw_corpus(p.as_ref())?);
    }
    filter_documents(tokenize_documents(&raw), config.min_doc_length, config.max_doc_length)
}

/// Writes already-tokenized documents, one per line, tokens joined by a space.
pub fn save_documents(docs: &[Document], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in docs {
        writeln!(out, "{}", doc.tokens.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`save_documents`]. No filtering is applied.
pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(doc_id, line)| Document::new(doc_id, line.split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect()))
        .collect())
}

#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    counts: Vec<u64>,
    min_count: u64,
}

// The threshold is not part of the file format, so equality covers the
// retained tokens and their counts only.
impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.id_to_token == other.id_to_token && self.counts == other.counts
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    /// Counts tokens over all documents and keeps those seen at least
    /// `min_count` times, ordered by descending count with ties broken by
    /// first occurrence.
    pub fn build(docs: &[Document], min_count: u64) -> Self {
        // token -> (count, first occurrence as (doc, position))
        let stats = docs
            .par_iter()
            .fold(HashMap::<&str, (u64, (usize, usize))>::new, |mut acc, doc| {
                for (pos, tok) in doc.tokens.iter().enumerate() {
                    let e = acc.entry(tok.as_str()).or_insert((0, (doc.doc_id, pos)));
                    e.0 += 1;
                    e.1 = e.1.min((doc.doc_id, pos));
                }
                acc
            })
            .reduce(HashMap::new, |mut a, b| {
                for (tok, (n, first)) in b {
                    let e = a.entry(tok).or_insert((0, first));
                    e.0 += n;
                    e.1 = e.1.min(first);
                }
                a
            });

        let mut kept: Vec<(&str, u64, (usize, usize))> = stats
            .into_iter()
            .filter(|(_, (n, _))| *n >= min_count)
            .map(|(tok, (n, first))| (tok, n, first))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));

        let mut vocab = Vocabulary {
            min_count,
            ..Default::default()
        };
        for (tok, n, _) in kept {
            vocab.push(tok.to_owned(), n);
        }
        vocab
    }

    fn push(&mut self, token: String, count: u64) {
        self.token_to_id.insert(token.clone(), self.id_to_token.len() as u32);
        self.id_to_token.push(token);
        self.counts.push(count);
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Builds a vocabulary from an explicit token list, ids in list order.
    /// Counts are set to zero.
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let mut vocab = Vocabulary::default();
        for t in tokens {
            vocab.push(t.into(), 0);
        }
        vocab
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (tok, n) in self.id_to_token.iter().zip(&self.counts) {
            writeln!(out, "{tok} {n}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Loads a `token count` file. The threshold is recovered as the
    /// smallest retained count.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut vocab = Vocabulary::default();
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split(' ');
            let (Some(tok), Some(n), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::format(
                    path.display().to_string(),
                    format!("line {}: expected `token count`", lineno + 1),
                ));
            };
            let n: u64 = n.parse().map_err(|_| {
                Error::format(path.display().to_string(), format!("line {}: bad count {n:?}", lineno + 1))
            })?;
            if vocab.token_to_id.contains_key(tok) {
                return Err(Error::format(
                    path.display().to_string(),
                    format!("line {}: duplicate token {tok:?}", lineno + 1),
                ));
            }
            vocab.push(tok.to_owned(), n);
        }
        vocab.min_count = vocab.counts.iter().copied().min().unwrap_or(0);
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: usize, text: &str) -> Document {
        Document::new(id, tokenize(text))
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The cat, the CAT."), ["the", "cat", "the", "cat"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("don't stop-me"), ["don't", "stop-me"]);
        assert_eq!(tokenize("  tabs\tand\nnewlines  "), ["tabs", "and", "newlines"]);
        assert_eq!(tokenize("... !!! ,,,"), Vec::<String>::new());
    }

    #[test]
    fn filter_bounds_are_inclusive() {
        let lens = [10, 200, 5000, 10_000, 10_001, 199];
        let docs: Vec<_> = lens
            .iter()
            .enumerate()
            .map(|(i, &n)| Document::new(i, vec!["x".to_owned(); n]))
            .collect();
        let kept = filter_documents(docs, 200, 10_000).unwrap();
        let kept_lens: Vec<_> = kept.iter().map(Document::len).collect();
        assert_eq!(kept_lens, [200, 5000, 10_000]);
        let ids: Vec<_> = kept.iter().map(|d| d.doc_id).collect();
        assert_eq!(ids, [0, 1, 2]);
    }

    #[test]
    fn filter_rejects_inverted_bounds() {
        assert!(filter_documents(vec![], 10, 5).is_err());
    }

    #[test]
    fn vocabulary_threshold_and_order() {
        let docs = vec![doc(0, "a a a b")];
        let v = Vocabulary::build(&docs, 2);
        assert_eq!(v.tokens(), ["a"]);
        let v = Vocabulary::build(&docs, 1);
        assert_eq!(v.tokens(), ["a", "b"]);

        let text = format!("{}{}", "a ".repeat(20), "b ".repeat(19));
        let v = Vocabulary::build(&[doc(0, &text)], 20);
        assert_eq!(v.tokens(), ["a"]);
        assert_eq!(v.count(0), 20);
    }

    #[test]
    fn vocabulary_ties_follow_first_occurrence() {
        let docs = vec![doc(0, "z y"), doc(1, "x y z x")];
        let v = Vocabulary::build(&docs, 1);
        // all counts equal 2; first seen order z (0,0), y (0,1), x (1,0)
        assert_eq!(v.tokens(), ["z", "y", "x"]);
        for (id, tok) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(tok), Some(id as u32));
        }
    }

    #[test]
    fn empty_corpus_gives_empty_vocabulary() {
        let v = Vocabulary::build(&[], 1);
        assert!(v.is_empty());
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::build(&[doc(0, "a b a c a b"), doc(1, "d d")], 1);
        v.save(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a 3\nb 2\nd 2\nc 1\n");
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn directory_corpus_is_read_in_filename_order() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "second doc").unwrap();
        fs::write(dir.path().join("a.txt"), "first doc").unwrap();
        fs::write(dir.path().join("c.md"), "ignored").unwrap();
        let raw = read_raw_corpus(dir.path()).unwrap();
        assert_eq!(raw, ["first doc", "second doc"]);
    }
}

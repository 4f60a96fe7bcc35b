//! Sparse symmetric co-occurrence counts: per-document shards and the global
//! matrix they sum to.
//!
//! Binary layout for both shards and the global matrix is a flat run of
//! 16-byte little-endian records `(u32 i, u32 j, f64 value)`. A shard file is
//! accompanied by an index listing `doc_id offset count` per line so a single
//! shard can be streamed without touching the others.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Vocabulary};
use crate::error::{Error, Result};

pub const RECORD_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoocEntry {
    pub i: u32,
    pub j: u32,
    pub value: f64,
}

impl CoocEntry {
    pub fn new(i: u32, j: u32, value: f64) -> Self {
        Self { i, j, value }
    }

    fn to_bytes(self) -> [u8; RECORD_BYTES] {
        let mut buf = [0u8; RECORD_BYTES];
        buf[0..4].copy_from_slice(&self.i.to_le_bytes());
        buf[4..8].copy_from_slice(&self.j.to_le_bytes());
        buf[8..16].copy_from_slice(&self.value.to_le_bytes());
        buf
    }

    fn from_bytes(buf: &[u8; RECORD_BYTES]) -> Self {
        let i = u32::from_le_bytes(buf[0..4].try_into().unwrap());
        let j = u32::from_le_bytes(buf[4..8].try_into().unwrap());
        let value = f64::from_le_bytes(buf[8..16].try_into().unwrap());
        Self { i, j, value }
    }
}

/// A sparse row `X_i`: `(j, X_ij)` pairs in ascending `j`.
pub type SparseRow = Vec<(u32, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceWeighting {
    /// `1/d` for a pair at distance `d`.
    #[default]
    Harmonic,
    Flat,
}

impl DistanceWeighting {
    fn weight(self, distance: usize) -> f64 {
        match self {
            DistanceWeighting::Harmonic => 1.0 / distance as f64,
            DistanceWeighting::Flat => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoocConfig {
    pub window: usize,
    pub weighting: DistanceWeighting,
    /// Out-of-vocabulary tokens keep their position in the window when true;
    /// when false they are deleted before windowing.
    pub oov_occupies_positions: bool,
}

impl Default for CoocConfig {
    fn default() -> Self {
        Self {
            window: 8,
            weighting: DistanceWeighting::Harmonic,
            oov_occupies_positions: true,
        }
    }
}

/// The co-occurrence contribution of a single document, entries sorted by
/// `(i, j)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DocCoocShard {
    pub doc_id: usize,
    pub entries: Vec<CoocEntry>,
}

impl DocCoocShard {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Entries of row `i`, ascending `j`.
    pub fn row(&self, i: u32) -> &[CoocEntry] {
        let start = self.entries.partition_point(|e| e.i < i);
        let end = self.entries.partition_point(|e| e.i <= i);
        &self.entries[start..end]
    }

    /// Distinct row ids present in this shard.
    pub fn row_ids(&self) -> impl Iterator<Item = u32> + '_ {
        let mut last = None;
        self.entries.iter().filter_map(move |e| {
            if last == Some(e.i) {
                None
            } else {
                last = Some(e.i);
                Some(e.i)
            }
        })
    }
}

pub fn build_doc_shard(doc: &Document, vocab: &Vocabulary, config: &CoocConfig) -> Result<DocCoocShard> {
    if config.window == 0 {
        return Err(Error::Config("window must be at least 1".into()));
    }
    let ids: Vec<Option<u32>> = doc
        .tokens
        .iter()
        .map(|t| vocab.id(t))
        .filter(|id| config.oov_occupies_positions || id.is_some())
        .collect();

    let mut acc: HashMap<(u32, u32), f64> = HashMap::new();
    for p in 0..ids.len() {
        let Some(i) = ids[p] else { continue };
        for (q, id_q) in ids.iter().enumerate().skip(p + 1).take(config.window) {
            let Some(j) = *id_q else { continue };
            let w = config.weighting.weight(q - p);
            *acc.entry((i, j)).or_insert(0.0) += w;
            *acc.entry((j, i)).or_insert(0.0) += w;
        }
    }
    let mut entries: Vec<CoocEntry> = acc.into_iter().map(|((i, j), v)| CoocEntry::new(i, j, v)).collect();
    entries.sort_unstable_by_key(|e| (e.i, e.j));
    Ok(DocCoocShard {
        doc_id: doc.doc_id,
        entries,
    })
}

/// Builds every document shard in parallel, returned in `doc_id` order.
pub fn build_shards(docs: &[Document], vocab: &Vocabulary, config: &CoocConfig) -> Result<Vec<DocCoocShard>> {
    docs.par_iter().map(|d| build_doc_shard(d, vocab, config)).collect()
}

/// Global co-occurrence matrix in compressed sparse row form. Both `(i, j)`
/// and `(j, i)` are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    vocab_size: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CooccurrenceMatrix {
    pub fn empty(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            row_ptr: vec![0; vocab_size + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Builds from entries that are unique per `(i, j)`; order is arbitrary.
    pub fn from_entries(vocab_size: usize, mut entries: Vec<CoocEntry>) -> Result<Self> {
        for e in &entries {
            for id in [e.i, e.j] {
                if id as usize >= vocab_size {
                    return Err(Error::IdOutOfRange { id, vocab_size });
                }
            }
        }
        entries.sort_unstable_by_key(|e| (e.i, e.j));
        if let Some(w) = entries.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::format(
                "co-occurrence matrix",
                format!("duplicate entry ({}, {})", w[0].i, w[0].j),
            ));
        }
        let mut row_ptr = vec![0usize; vocab_size + 1];
        for e in &entries {
            row_ptr[e.i as usize + 1] += 1;
        }
        for r in 0..vocab_size {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            vocab_size,
            row_ptr,
            cols: entries.iter().map(|e| e.j).collect(),
            vals: entries.iter().map(|e| e.value).collect(),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Nonzero entries of row `i` in ascending `j`.
    pub fn row(&self, i: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let r = self.row_ptr[i as usize]..self.row_ptr[i as usize + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn row_vec(&self, i: u32) -> SparseRow {
        self.row(i).collect()
    }

    pub fn get(&self, i: u32, j: u32) -> Option<f64> {
        let r = self.row_ptr[i as usize]..self.row_ptr[i as usize + 1];
        let cols = &self.cols[r.clone()];
        cols.binary_search(&j).ok().map(|k| self.vals[r.start + k])
    }

    /// All entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = CoocEntry> + '_ {
        (0..self.vocab_size).flat_map(move |i| self.row(i as u32).map(move |(j, v)| CoocEntry::new(i as u32, j, v)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries().all(|e| self.get(e.j, e.i) == Some(e.value))
    }

    pub fn total_mass(&self) -> f64 {
        self.vals.iter().sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for e in self.entries() {
            out.write_all(&e.to_bytes()).map_err(|err| Error::io(path, err))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, vocab_size: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for_each_record(path, |e| {
            entries.push(e);
            Ok(())
        })?;
        Self::from_entries(vocab_size, entries)
    }
}

/// Streams a record file, calling `f` for each record.
pub fn for_each_record(path: &Path, mut f: impl FnMut(CoocEntry) -> Result<()>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if len % RECORD_BYTES as u64 != 0 {
        return Err(Error::format(
            path.display().to_string(),
            format!("length {len} is not a multiple of {RECORD_BYTES}"),
        ));
    }
    let mut reader = BufReader::new(file);
    let mut buf = [0u8; RECORD_BYTES];
    for _ in 0..len / RECORD_BYTES as u64 {
        reader.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        f(CoocEntry::from_bytes(&buf))?;
    }
    Ok(())
}

/// Sums shards element-wise. Shards are accumulated in `doc_id` order, so
/// the result is bit-identical whatever order they are passed in.
pub fn merge_shards<'a>(
    shards: impl IntoIterator<Item = &'a DocCoocShard>,
    vocab_size: usize,
) -> Result<CooccurrenceMatrix> {
    let mut ordered: Vec<&DocCoocShard> = shards.into_iter().collect();
    ordered.sort_by_key(|s| s.doc_id);
    let mut acc: HashMap<(u32, u32), f64> = HashMap::new();
    for shard in ordered {
        for e in &shard.entries {
            for id in [e.i, e.j] {
                if id as usize >= vocab_size {
                    return Err(Error::IdOutOfRange { id, vocab_size });
                }
            }
            *acc.entry((e.i, e.j)).or_insert(0.0) += e.value;
        }
    }
    CooccurrenceMatrix::from_entries(
        vocab_size,
        acc.into_iter().map(|((i, j), v)| CoocEntry::new(i, j, v)).collect(),
    )
}

/// Read access to rows of the global matrix.
pub trait RowSource: Sync {
    fn row_of(&self, i: u32) -> SparseRow;
}

impl RowSource for CooccurrenceMatrix {
    fn row_of(&self, i: u32) -> SparseRow {
        self.row_vec(i)
    }
}

/// A handful of rows pulled out of a global matrix file without loading the
/// rest of it.
#[derive(Debug, Clone, Default)]
pub struct RowSubset {
    rows: HashMap<u32, SparseRow>,
}

impl RowSubset {
    pub fn from_matrix(matrix: &CooccurrenceMatrix, wanted: &BTreeSet<u32>) -> Self {
        Self {
            rows: wanted.iter().map(|&i| (i, matrix.row_vec(i))).collect(),
        }
    }

    /// Streams the global record file once, keeping only the wanted rows.
    pub fn load(path: &Path, wanted: &BTreeSet<u32>) -> Result<Self> {
        let mut rows: HashMap<u32, SparseRow> = wanted.iter().map(|&i| (i, Vec::new())).collect();
        for_each_record(path, |e| {
            if let Some(r) = rows.get_mut(&e.i) {
                r.push((e.j, e.value));
            }
            Ok(())
        })?;
        for r in rows.values_mut() {
            r.sort_unstable_by_key(|&(j, _)| j);
        }
        Ok(Self { rows })
    }

    pub fn nnz(&self) -> usize {
        self.rows.values().map(Vec::len).sum()
    }
}

impl RowSource for RowSubset {
    fn row_of(&self, i: u32) -> SparseRow {
        self.rows.get(&i).cloned().unwrap_or_default()
    }
}

/// Random access to document shards. Implementations count reads so callers
/// can verify single-pass access.
pub trait ShardSource: Sync {
    fn num_docs(&self) -> usize;
    fn read_shard(&self, doc_id: usize) -> Result<DocCoocShard>;
    /// Number of times each shard has been read since construction.
    fn read_counts(&self) -> Vec<u32>;
}

/// Shards held in memory, indexed by `doc_id`.
#[derive(Debug)]
pub struct InMemoryShards {
    shards: Vec<DocCoocShard>,
    reads: Vec<AtomicU32>,
}

impl InMemoryShards {
    pub fn new(mut shards: Vec<DocCoocShard>) -> Result<Self> {
        shards.sort_by_key(|s| s.doc_id);
        if let Some((k, s)) = shards.iter().enumerate().find(|(k, s)| s.doc_id != *k) {
            return Err(Error::format(
                "shards",
                format!("doc ids are not dense: position {k} holds doc {}", s.doc_id),
            ));
        }
        let reads = shards.iter().map(|_| AtomicU32::new(0)).collect();
        Ok(Self { shards, reads })
    }

    pub fn shards(&self) -> &[DocCoocShard] {
        &self.shards
    }
}

impl ShardSource for InMemoryShards {
    fn num_docs(&self) -> usize {
        self.shards.len()
    }

    fn read_shard(&self, doc_id: usize) -> Result<DocCoocShard> {
        let shard = self.shards.get(doc_id).ok_or(Error::UnknownDocument(doc_id))?;
        self.reads[doc_id].fetch_add(1, Ordering::Relaxed);
        Ok(shard.clone())
    }

    fn read_counts(&self) -> Vec<u32> {
        self.reads.iter().map(|r| r.load(Ordering::Relaxed)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardIndexEntry {
    pub offset: u64,
    pub count: u64,
}

/// Writes all shards to `data_path` and their index to `index_path`.
pub fn save_shards(shards: &[DocCoocShard], data_path: &Path, index_path: &Path) -> Result<()> {
    let data = File::create(data_path).map_err(|e| Error::io(data_path, e))?;
    let mut data = BufWriter::new(data);
    let index = File::create(index_path).map_err(|e| Error::io(index_path, e))?;
    let mut index = BufWriter::new(index);
    let mut ordered: Vec<&DocCoocShard> = shards.iter().collect();
    ordered.sort_by_key(|s| s.doc_id);
    let mut offset = 0u64;
    for shard in ordered {
        writeln!(index, "{}\t{}\t{}", shard.doc_id, offset, shard.entries.len()).map_err(|e| Error::io(index_path, e))?;
        for e in &shard.entries {
            data.write_all(&e.to_bytes()).map_err(|err| Error::io(data_path, err))?;
        }
        offset += (shard.entries.len() * RECORD_BYTES) as u64;
    }
    data.flush().map_err(|e| Error::io(data_path, e))?;
    index.flush().map_err(|e| Error::io(index_path, e))
}

/// File-backed shards: each read seeks to the shard's offset and streams
/// only its records.
#[derive(Debug)]
pub struct ShardStore {
    data_path: PathBuf,
    index: Vec<ShardIndexEntry>,
    reads: Vec<AtomicU32>,
}

impl ShardStore {
    pub fn open(data_path: &Path, index_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(index_path).map_err(|e| Error::io(index_path, e))?;
        let ctx = index_path.display().to_string();
        let mut index = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let parsed: Option<(usize, u64, u64)> = match fields.as_slice() {
                [d, o, c] => d.parse().ok().zip(o.parse().ok()).zip(c.parse().ok()).map(|((d, o), c)| (d, o, c)),
                _ => None,
            };
            let Some((doc_id, offset, count)) = parsed else {
                return Err(Error::format(ctx, format!("line {}: expected `doc_id offset count`", lineno + 1)));
            };
            if doc_id != index.len() {
                return Err(Error::format(ctx, format!("line {}: doc ids must be dense and ordered", lineno + 1)));
            }
            index.push(ShardIndexEntry { offset, count });
        }
        let reads = index.iter().map(|_| AtomicU32::new(0)).collect();
        Ok(Self {
            data_path: data_path.to_owned(),
            index,
            reads,
        })
    }

    pub fn index(&self) -> &[ShardIndexEntry] {
        &self.index
    }
}

impl ShardSource for ShardStore {
    fn num_docs(&self) -> usize {
        self.index.len()
    }

    fn read_shard(&self, doc_id: usize) -> Result<DocCoocShard> {
        let entry = *self.index.get(doc_id).ok_or(Error::UnknownDocument(doc_id))?;
        let path = &self.data_path;
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        file.seek(SeekFrom::Start(entry.offset)).map_err(|e| Error::io(path, e))?;
        let mut bytes = vec![0u8; entry.count as usize * RECORD_BYTES];
        file.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
        let entries = bytes
            .chunks_exact(RECORD_BYTES)
            .map(|c| CoocEntry::from_bytes(c.try_into().unwrap()))
            .collect();
        self.reads[doc_id].fetch_add(1, Ordering::Relaxed);
        Ok(DocCoocShard { doc_id, entries })
    }

    fn read_counts(&self) -> Vec<u32> {
        self.reads.iter().map(|r| r.load(Ordering::Relaxed)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn vocab(tokens: &[&str]) -> Vocabulary {
        Vocabulary::from_tokens(tokens.iter().copied())
    }

    fn doc(id: usize, text: &str) -> Document {
        Document::new(id, tokenize(text))
    }

    fn cfg(window: usize) -> CoocConfig {
        CoocConfig {
            window,
            ..Default::default()
        }
    }

    fn dense(shard_entries: &[CoocEntry], v: usize) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; v]; v];
        for e in shard_entries {
            m[e.i as usize][e.j as usize] += e.value;
        }
        m
    }

    #[test]
    fn three_token_doc() {
        let v = vocab(&["a", "b"]);
        let shard = build_doc_shard(&doc(0, "a b a"), &v, &cfg(8)).unwrap();
        let m = dense(&shard.entries, 2);
        assert_eq!(m[0][1], 2.0);
        assert_eq!(m[1][0], 2.0);
        assert_eq!(m[0][0], 1.0);
        assert_eq!(m[1][1], 0.0);
    }

    #[test]
    fn single_token_and_adjacent_pair() {
        let v = vocab(&["a", "b"]);
        assert!(build_doc_shard(&doc(0, "a"), &v, &cfg(8)).unwrap().is_empty());
        let shard = build_doc_shard(&doc(0, "a b"), &v, &cfg(1)).unwrap();
        assert_eq!(shard.entries, [CoocEntry::new(0, 1, 1.0), CoocEntry::new(1, 0, 1.0)]);
    }

    #[test]
    fn zero_window_is_rejected() {
        assert!(build_doc_shard(&doc(0, "a b"), &vocab(&["a"]), &cfg(0)).is_err());
    }

    #[test]
    fn oov_positions_are_configurable() {
        let v = vocab(&["a", "b"]);
        let keep = build_doc_shard(&doc(0, "a zz b"), &v, &cfg(8)).unwrap();
        assert_eq!(keep.row(0), [CoocEntry::new(0, 1, 0.5)]);
        let skip = CoocConfig {
            oov_occupies_positions: false,
            ..cfg(8)
        };
        let dropped = build_doc_shard(&doc(0, "a zz b"), &v, &skip).unwrap();
        assert_eq!(dropped.row(0), [CoocEntry::new(0, 1, 1.0)]);
        // window 1 with the gap kept: no pair at all
        assert!(build_doc_shard(&doc(0, "a zz b"), &v, &cfg(1)).unwrap().is_empty());
    }

    #[test]
    fn flat_weighting() {
        let v = vocab(&["a", "b"]);
        let flat = CoocConfig {
            weighting: DistanceWeighting::Flat,
            ..cfg(8)
        };
        let shard = build_doc_shard(&doc(0, "a c c b"), &v, &flat).unwrap();
        assert_eq!(shard.row(0), [CoocEntry::new(0, 1, 1.0)]);
    }

    #[test]
    fn merge_examples() {
        let m = merge_shards(&[], 3).unwrap();
        assert!(m.is_empty());

        let s0 = DocCoocShard {
            doc_id: 0,
            entries: vec![CoocEntry::new(1, 2, 1.0), CoocEntry::new(2, 1, 1.0)],
        };
        let single = merge_shards([&s0], 3).unwrap();
        assert_eq!(single.entries().collect::<Vec<_>>(), s0.entries);

        let s1 = DocCoocShard { doc_id: 1, ..s0.clone() };
        let both = merge_shards([&s0, &s1], 3).unwrap();
        assert_eq!(both.get(1, 2), Some(2.0));
        assert_eq!(both.nnz(), 2);
    }

    #[test]
    fn merge_rejects_out_of_range_ids() {
        let s = DocCoocShard {
            doc_id: 0,
            entries: vec![CoocEntry::new(0, 5, 1.0)],
        };
        assert!(matches!(merge_shards([&s], 3), Err(Error::IdOutOfRange { id: 5, .. })));
    }

    #[test]
    fn merge_is_order_independent_bitwise() {
        let v = vocab(&["a", "b", "c"]);
        let docs = [doc(0, "a b c a b"), doc(1, "c c a b a c"), doc(2, "b a c b a c a")];
        let shards: Vec<_> = docs.iter().map(|d| build_doc_shard(d, &v, &cfg(3)).unwrap()).collect();
        let fwd = merge_shards(&shards, 3).unwrap();
        let rev = merge_shards(shards.iter().rev(), 3).unwrap();
        assert_eq!(fwd, rev);
        assert!(fwd.is_symmetric());
    }

    #[test]
    fn row_access() {
        let m = CooccurrenceMatrix::empty(3);
        assert_eq!(m.row(1).count(), 0);
        let m = CooccurrenceMatrix::from_entries(3, vec![CoocEntry::new(1, 2, 3.0)]).unwrap();
        assert_eq!(m.row_vec(1), [(2, 3.0)]);
        assert!(CooccurrenceMatrix::from_entries(3, vec![CoocEntry::new(1, 2, 3.0), CoocEntry::new(1, 2, 1.0)]).is_err());
    }

    #[test]
    fn files_round_trip_and_stream_single_shard() {
        let v = vocab(&["a", "b", "c"]);
        let docs = [doc(0, "a b c"), doc(1, "c a"), doc(2, "b")];
        let shards: Vec<_> = docs.iter().map(|d| build_doc_shard(d, &v, &cfg(2)).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        let (data, idx) = (dir.path().join("s.bin"), dir.path().join("s.idx"));
        save_shards(&shards, &data, &idx).unwrap();
        let store = ShardStore::open(&data, &idx).unwrap();
        assert_eq!(store.num_docs(), 3);
        assert_eq!(store.read_shard(1).unwrap(), shards[1]);
        assert_eq!(store.read_shard(2).unwrap(), shards[2]);
        assert_eq!(store.read_counts(), [0, 1, 1]);
        assert!(store.read_shard(3).is_err());

        let global = merge_shards(&shards, 3).unwrap();
        let gpath = dir.path().join("x.bin");
        global.save(&gpath).unwrap();
        assert_eq!(CooccurrenceMatrix::load(&gpath, 3).unwrap(), global);
        let wanted: BTreeSet<u32> = [0].into();
        let sub = RowSubset::load(&gpath, &wanted).unwrap();
        assert_eq!(sub.row_of(0), global.row_vec(0));
        assert!(sub.row_of(1).is_empty());
    }
}

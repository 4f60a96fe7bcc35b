//! GloVe: weighted least-squares fit of `w_i·u_j + b_i + c_j` to `log X_ij`
//! over the nonzero co-occurrence entries, trained with AdaGrad.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cooccurrence::{CoocEntry, CooccurrenceMatrix};
use crate::error::{Error, Result};

const MODEL_MAGIC: &[u8; 8] = b"SCGLOVE1";

/// The `f(x)` weighting of the loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weighting {
    pub x_max: f64,
    pub alpha: f64,
}

impl Default for Weighting {
    fn default() -> Self {
        Self { x_max: 100.0, alpha: 0.75 }
    }
}

impl Weighting {
    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        f_weight(x, self.x_max, self.alpha)
    }
}

/// `(x/x_max)^alpha` below `x_max`, 1 at and above it.
#[inline]
pub fn f_weight(x: f64, x_max: f64, alpha: f64) -> f64 {
    if x < x_max {
        (x / x_max).powf(alpha)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkerMode {
    /// One worker, bit-reproducible from the seed.
    #[default]
    Deterministic,
    /// Several workers update shared parameters without coordination.
    Lockfree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub worker_mode: WorkerMode,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 75,
            window: 8,
            x_max: 100.0,
            alpha: 0.75,
            epochs: 300,
            learning_rate: 0.05,
            seed: 0,
            worker_mode: WorkerMode::Deterministic,
            threads: 4,
        }
    }
}

impl TrainConfig {
    pub fn weighting(&self) -> Weighting {
        Weighting {
            x_max: self.x_max,
            alpha: self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > 0.0) {
            return Err(Error::Config(format!("x_max must be positive, got {}", self.x_max)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Word vectors `W`, context vectors `U` and their biases, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    vocab_size: usize,
    dim: usize,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl EmbeddingModel {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            vocab_size,
            dim,
            w: vec![0.0; vocab_size * dim],
            u: vec![0.0; vocab_size * dim],
            b: vec![0.0; vocab_size],
            c: vec![0.0; vocab_size],
        }
    }

    /// Every parameter drawn uniformly from `(-0.5/D, 0.5/D)`.
    pub fn random(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let half = 0.5 / dim as f64;
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-half..half)).collect::<Vec<_>>();
        let w = draw(vocab_size * dim);
        let u = draw(vocab_size * dim);
        let b = draw(vocab_size);
        let c = draw(vocab_size);
        Self {
            vocab_size,
            dim,
            w,
            u,
            b,
            c,
        }
    }

    pub fn from_parts(vocab_size: usize, dim: usize, w: Vec<f64>, u: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        for (len, expected) in [
            (w.len(), vocab_size * dim),
            (u.len(), vocab_size * dim),
            (b.len(), vocab_size),
            (c.len(), vocab_size),
        ] {
            if len != expected {
                return Err(Error::DimensionMismatch { expected, found: len });
            }
        }
        Ok(Self {
            vocab_size,
            dim,
            w,
            u,
            b,
            c,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn word(&self, i: usize) -> &[f64] {
        &self.w[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn context(&self, j: usize) -> &[f64] {
        &self.u[j * self.dim..(j + 1) * self.dim]
    }

    pub fn set_word(&mut self, i: usize, v: &[f64]) {
        assert_eq!(v.len(), self.dim);
        self.w[i * self.dim..(i + 1) * self.dim].copy_from_slice(v);
    }

    pub fn is_finite(&self) -> bool {
        [&self.w, &self.u, &self.b, &self.c].iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Model with `W <-> U` and `b <-> c` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            vocab_size: self.vocab_size,
            dim: self.dim,
            w: self.u.clone(),
            u: self.w.clone(),
            b: self.c.clone(),
            c: self.b.clone(),
        }
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| Error::io(path, e));
        write(MODEL_MAGIC)?;
        write(&(self.vocab_size as u64).to_le_bytes())?;
        write(&(self.dim as u64).to_le_bytes())?;
        for block in [&self.w, &self.u, &self.b, &self.c] {
            for x in block.iter() {
                write(&x.to_le_bytes())?;
            }
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ctx = || path.display().to_string();
        if bytes.len() < 24 || &bytes[..8] != MODEL_MAGIC {
            return Err(Error::format(ctx(), "missing model header"));
        }
        let vocab_size = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let dim = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let n = 2 * vocab_size * dim + 2 * vocab_size;
        if bytes.len() != 24 + 8 * n {
            return Err(Error::format(
                ctx(),
                format!("expected {} bytes for V={vocab_size} D={dim}, found {}", 24 + 8 * n, bytes.len()),
            ));
        }
        let mut values = bytes[24..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |k: usize| values.by_ref().take(k).collect::<Vec<_>>();
        let w = take(vocab_size * dim);
        let u = take(vocab_size * dim);
        let b = take(vocab_size);
        let c = take(vocab_size);
        Self::from_parts(vocab_size, dim, w, u, b, c)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `J = Σ f(X_ij)(w_i·u_j + b_i + c_j − log X_ij)²` over the stored entries.
pub fn loss(model: &EmbeddingModel, x: &CooccurrenceMatrix, weighting: Weighting) -> Result<f64> {
    let mut total = 0.0;
    for e in x.entries() {
        if !(e.value > 0.0) {
            return Err(Error::NonPositiveEntry {
                i: e.i,
                j: e.j,
                value: e.value,
            });
        }
        let (i, j) = (e.i as usize, e.j as usize);
        let r = dot(model.word(i), model.context(j)) + model.b[i] + model.c[j] - e.value.ln();
        total += weighting.f(e.value) * r * r;
    }
    Ok(total)
}

/// Gradient of [`loss`] with respect to every parameter, laid out like the
/// model. Uses the same per-entry terms as the trainer.
pub fn loss_gradient(model: &EmbeddingModel, x: &CooccurrenceMatrix, weighting: Weighting) -> Result<EmbeddingModel> {
    let dim = model.dim;
    let mut g = EmbeddingModel::zeros(model.vocab_size, dim);
    for e in x.entries() {
        if !(e.value > 0.0) {
            return Err(Error::NonPositiveEntry {
                i: e.i,
                j: e.j,
                value: e.value,
            });
        }
        let (i, j) = (e.i as usize, e.j as usize);
        let r = dot(model.word(i), model.context(j)) + model.b[i] + model.c[j] - e.value.ln();
        let scale = 2.0 * weighting.f(e.value) * r;
        for d in 0..dim {
            g.w[i * dim + d] += scale * model.u[j * dim + d];
            g.u[j * dim + d] += scale * model.w[i * dim + d];
        }
        g.b[i] += scale;
        g.c[j] += scale;
    }
    Ok(g)
}

/// Parameters plus AdaGrad accumulators, so training can be resumed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: EmbeddingModel,
    /// Squared-gradient sums, same shape as the model.
    pub grad_sq: EmbeddingModel,
    /// Mean per-entry cost observed during each completed epoch.
    pub history: Vec<f64>,
}

impl TrainState {
    pub fn new(vocab_size: usize, config: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = EmbeddingModel::random(vocab_size, config.dim, &mut rng);
        let mut grad_sq = EmbeddingModel::zeros(vocab_size, config.dim);
        for block in [&mut grad_sq.w, &mut grad_sq.u, &mut grad_sq.b, &mut grad_sq.c] {
            block.fill(1.0);
        }
        Self {
            model,
            grad_sq,
            history: Vec::new(),
        }
    }

    /// Runs `epochs` AdaGrad passes over `entries` in a seeded shuffled
    /// order. Entries with a non-positive value are skipped but still occupy
    /// their slot in the permutation, so two entry lists of equal length see
    /// the same visiting order.
    pub fn run_epochs(&mut self, entries: &[CoocEntry], config: &TrainConfig, epochs: usize) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut order: Vec<usize> = (0..entries.len()).collect();
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            let cost = match config.worker_mode {
                WorkerMode::Deterministic => self.epoch_sequential(entries, &order, config, epoch)?,
                WorkerMode::Lockfree => self.epoch_lockfree(entries, &order, config, epoch)?,
            };
            if !self.model.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    learning_rate: config.learning_rate,
                });
            }
            let active = entries.iter().filter(|e| e.value > 0.0).count().max(1);
            self.history.push(cost / active as f64);
            log::debug!("epoch {epoch}: cost {:.6}", cost / active as f64);
        }
        Ok(())
    }

    fn epoch_sequential(&mut self, entries: &[CoocEntry], order: &[usize], config: &TrainConfig, epoch: usize) -> Result<f64> {
        let dim = self.model.dim;
        let lr = config.learning_rate;
        let weighting = config.weighting();
        let (m, g) = (&mut self.model, &mut self.grad_sq);
        let mut cost = 0.0;
        for &k in order {
            let e = entries[k];
            if !(e.value > 0.0) {
                continue;
            }
            let (i, j) = (e.i as usize, e.j as usize);
            let (wi, uj) = (i * dim..(i + 1) * dim, j * dim..(j + 1) * dim);
            let r = dot(&m.w[wi.clone()], &m.u[uj.clone()]) + m.b[i] + m.c[j] - e.value.ln();
            let fw = weighting.f(e.value);
            cost += fw * r * r;
            let scale = 2.0 * fw * r;
            if !scale.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    learning_rate: lr,
                });
            }
            for d in 0..dim {
                let (a, bidx) = (wi.start + d, uj.start + d);
                let gw = scale * m.u[bidx];
                let gu = scale * m.w[a];
                m.w[a] -= lr * gw / g.w[a].sqrt();
                m.u[bidx] -= lr * gu / g.u[bidx].sqrt();
                g.w[a] += gw * gw;
                g.u[bidx] += gu * gu;
            }
            m.b[i] -= lr * scale / g.b[i].sqrt();
            m.c[j] -= lr * scale / g.c[j].sqrt();
            g.b[i] += scale * scale;
            g.c[j] += scale * scale;
        }
        Ok(cost)
    }

    fn epoch_lockfree(&mut self, entries: &[CoocEntry], order: &[usize], config: &TrainConfig, epoch: usize) -> Result<f64> {
        let shared = SharedState::from_state(self);
        let threads = config.threads.max(1);
        let chunk = order.len().div_ceil(threads).max(1);
        let dim = self.model.dim;
        let lr = config.learning_rate;
        let weighting = config.weighting();
        let costs: Vec<Result<f64>> = std::thread::scope(|scope| {
            let handles: Vec<_> = order
                .chunks(chunk)
                .map(|part| {
                    let shared = &shared;
                    scope.spawn(move || {
                        let mut cost = 0.0;
                        for &k in part {
                            let e = entries[k];
                            if !(e.value > 0.0) {
                                continue;
                            }
                            let (i, j) = (e.i as usize, e.j as usize);
                            let mut r = shared.b.get(i) + shared.c.get(j) - e.value.ln();
                            for d in 0..dim {
                                r += shared.w.get(i * dim + d) * shared.u.get(j * dim + d);
                            }
                            let fw = weighting.f(e.value);
                            cost += fw * r * r;
                            let scale = 2.0 * fw * r;
                            if !scale.is_finite() {
                                return Err(Error::Diverged {
                                    epoch,
                                    learning_rate: lr,
                                });
                            }
                            for d in 0..dim {
                                let (a, bidx) = (i * dim + d, j * dim + d);
                                let gw = scale * shared.u.get(bidx);
                                let gu = scale * shared.w.get(a);
                                shared.w.sub(a, lr * gw / shared.gw.get(a).sqrt());
                                shared.u.sub(bidx, lr * gu / shared.gu.get(bidx).sqrt());
                                shared.gw.sub(a, -gw * gw);
                                shared.gu.sub(bidx, -gu * gu);
                            }
                            shared.b.sub(i, lr * scale / shared.gb.get(i).sqrt());
                            shared.c.sub(j, lr * scale / shared.gc.get(j).sqrt());
                            shared.gb.sub(i, -scale * scale);
                            shared.gc.sub(j, -scale * scale);
                        }
                        Ok(cost)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
        });
        shared.write_back(self);
        costs.into_iter().sum()
    }
}

/// f64 storage shared between lock-free workers. Loads and stores are
/// individually atomic; read-modify-write sequences may interleave.
struct AtomicVec(Vec<AtomicU64>);

impl AtomicVec {
    fn new(v: &[f64]) -> Self {
        Self(v.iter().map(|x| AtomicU64::new(x.to_bits())).collect())
    }

    #[inline]
    fn get(&self, k: usize) -> f64 {
        f64::from_bits(self.0[k].load(Ordering::Relaxed))
    }

    #[inline]
    fn sub(&self, k: usize, delta: f64) {
        let v = self.get(k) - delta;
        self.0[k].store(v.to_bits(), Ordering::Relaxed);
    }

    fn write_to(&self, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(&self.0) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }
}

struct SharedState {
    w: AtomicVec,
    u: AtomicVec,
    b: AtomicVec,
    c: AtomicVec,
    gw: AtomicVec,
    gu: AtomicVec,
    gb: AtomicVec,
    gc: AtomicVec,
}

impl SharedState {
    fn from_state(s: &TrainState) -> Self {
        Self {
            w: AtomicVec::new(&s.model.w),
            u: AtomicVec::new(&s.model.u),
            b: AtomicVec::new(&s.model.b),
            c: AtomicVec::new(&s.model.c),
            gw: AtomicVec::new(&s.grad_sq.w),
            gu: AtomicVec::new(&s.grad_sq.u),
            gb: AtomicVec::new(&s.grad_sq.b),
            gc: AtomicVec::new(&s.grad_sq.c),
        }
    }

    fn write_back(&self, s: &mut TrainState) {
        self.w.write_to(&mut s.model.w);
        self.u.write_to(&mut s.model.u);
        self.b.write_to(&mut s.model.b);
        self.c.write_to(&mut s.model.c);
        self.gw.write_to(&mut s.grad_sq.w);
        self.gu.write_to(&mut s.grad_sq.u);
        self.gb.write_to(&mut s.grad_sq.b);
        self.gc.write_to(&mut s.grad_sq.c);
    }
}

/// Trains from a fresh seeded initialization, keeping optimizer state.
pub fn train_state(x: &CooccurrenceMatrix, config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    if x.is_empty() {
        return Err(Error::Config("cannot train on an empty co-occurrence matrix".into()));
    }
    if let Some(e) = x.entries().find(|e| !(e.value > 0.0)) {
        return Err(Error::NonPositiveEntry {
            i: e.i,
            j: e.j,
            value: e.value,
        });
    }
    let entries: Vec<CoocEntry> = x.entries().collect();
    let mut state = TrainState::new(x.vocab_size(), config);
    state.run_epochs(&entries, config, config.epochs)?;
    Ok(state)
}

pub fn train(x: &CooccurrenceMatrix, config: &TrainConfig) -> Result<EmbeddingModel> {
    train_state(x, config).map(|s| s.model)
}

/// Path of the binary sidecar written next to a text vector file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".bin");
    PathBuf::from(s)
}

/// Writes `token v1 … vD` per word in vocabulary order, plus an exact binary
/// sidecar holding the full parameter set.
pub fn save_vectors(model: &EmbeddingModel, tokens: &[String], path: &Path) -> Result<()> {
    if tokens.len() != model.vocab_size() {
        return Err(Error::DimensionMismatch {
            expected: model.vocab_size(),
            found: tokens.len(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (i, tok) in tokens.iter().enumerate() {
        let mut line = tok.clone();
        for x in model.word(i) {
            line.push_str(&format!(" {x:.8}"));
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    model.save_binary(&sidecar_path(path))
}

/// Reads a text vector file. `W` comes from the text; `U`, `b` and `c` come
/// from the sidecar when present and are zero otherwise.
pub fn load_vectors(path: &Path) -> Result<(Vec<String>, EmbeddingModel)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ctx = || path.display().to_string();
    let mut tokens = Vec::new();
    let mut w = Vec::new();
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split(' ');
        let tok = parts.next().filter(|t| !t.is_empty()).ok_or_else(|| Error::format(ctx(), format!("line {}: empty", lineno + 1)))?;
        let values = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(ctx(), format!("line {}: {e}", lineno + 1)))?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: values.len(),
                })
            }
            _ => {}
        }
        tokens.push(tok.to_owned());
        w.extend(values);
    }
    let dim = dim.unwrap_or(0);
    if dim == 0 && !tokens.is_empty() {
        return Err(Error::format(ctx(), "vectors have no components"));
    }
    let v = tokens.len();
    let sidecar = sidecar_path(path);
    let model = if sidecar.exists() {
        let full = EmbeddingModel::load_binary(&sidecar)?;
        if full.vocab_size() != v {
            return Err(Error::DimensionMismatch {
                expected: v,
                found: full.vocab_size(),
            });
        }
        if full.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: full.dim(),
            });
        }
        EmbeddingModel::from_parts(v, dim, w, full.u, full.b, full.c)?
    } else {
        EmbeddingModel::from_parts(v, dim, w, vec![0.0; v * dim], vec![0.0; v], vec![0.0; v])?
    };
    Ok((tokens, model))
}

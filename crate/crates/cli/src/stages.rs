//! One function per pipeline stage. Each reads upstream artifacts by path,
//! checks their manifests, and writes its own artifacts plus a manifest.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use scglove::biasmetrics::{analogy_top1, load_analogies, AnalogyResult, PValueConfig, ResolvedWeat, WeatResult, WeatSpec};
use scglove::cooccurrence::{build_shards, merge_shards, save_shards, CoocConfig, CooccurrenceMatrix, RowSubset, ShardStore};
use scglove::corpus::{load_corpus, load_documents, save_documents, CorpusConfig, Vocabulary};
use scglove::glove::{load_vectors, save_vectors, sidecar_path, train_state, EmbeddingModel, TrainConfig, TrainState, Weighting};
use scglove::influence::{differential_bias, perturb_row, DiffBiasVector, InfluenceConfig, PointwiseContext};
use scglove::oracle::{brute_force_diffbias, closed_form_resolve, relative_l2, BruteForceConfig, DocComparison, OracleReport, VectorError};
use scglove::scglove::{displacements, rerun_weat, sc_debias, ScConfig, ScReport};

use crate::config::{load_spec, PipelineConfig};
use crate::manifest::{upstream, verify_produced_file, StageManifest};
use crate::report::{build_report, write_report, DebiasReport};
use crate::{io_error, require, CliError, CliResult};

pub const DOCUMENTS: &str = "documents.txt";
pub const VOCAB: &str = "vocab.txt";
pub const COOC: &str = "cooc.bin";
pub const SHARDS: &str = "shards.bin";
pub const SHARD_INDEX: &str = "shards.idx";
pub const VECTORS: &str = "vectors.txt";
pub const OPTIMIZER: &str = "optimizer.bin";
pub const LOSS_HISTORY: &str = "loss_history.json";
pub const BETA: &str = "beta.tsv";
pub const BETA_SUMMARY: &str = "beta.summary.json";
pub const SC_REPORT: &str = "sc_report.json";
pub const ORACLE_JSON: &str = "oracle_report.json";
pub const ORACLE_TEXT: &str = "oracle_report.txt";

fn vectors_sidecar_name() -> String {
    sidecar_path(Path::new(VECTORS)).display().to_string()
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn add_input_path(m: &mut StageManifest, path: &Path) -> CliResult<()> {
    require(path)?;
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| io_error(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        for f in files {
            m.add_input(&f)?;
        }
        Ok(())
    } else {
        m.add_input(path)
    }
}

/// Tokenizes, length-filters and counts the raw corpus.
pub fn corpus_stage(inputs: &[PathBuf], config: &CorpusConfig, out: &Path) -> CliResult<StageManifest> {
    if inputs.is_empty() {
        return Err(CliError::Usage("no corpus input given".into()));
    }
    let start = Instant::now();
    let mut m = StageManifest::new("corpus", config)?;
    for p in inputs {
        add_input_path(&mut m, p)?;
    }
    let docs = load_corpus(inputs, config)?;
    if docs.is_empty() {
        return Err(CliError::Data(format!(
            "no document has between {} and {} tokens",
            config.min_doc_length, config.max_doc_length
        )));
    }
    let vocab = Vocabulary::build(&docs, config.min_count);
    if vocab.is_empty() {
        return Err(CliError::Data(format!("no token occurs at least {} times", config.min_count)));
    }
    ensure_dir(out)?;
    save_documents(&docs, &out.join(DOCUMENTS))?;
    vocab.save(&out.join(VOCAB))?;
    m.add_output(out, DOCUMENTS)?;
    m.add_output(out, VOCAB)?;
    m.counters = serde_json::json!({
        "documents": docs.len(),
        "tokens": docs.iter().map(|d| d.len()).sum::<usize>(),
        "vocab_size": vocab.len(),
    });
    m.time("total", start);
    m.write(out)?;
    Ok(m)
}

/// Builds per-document shards and the merged global matrix.
pub fn cooc_stage(corpus_dir: &Path, config: &CoocConfig, out: &Path) -> CliResult<StageManifest> {
    let start = Instant::now();
    upstream(corpus_dir, "corpus")?;
    let mut m = StageManifest::new("cooc", config)?;
    let (docs_path, vocab_path) = (corpus_dir.join(DOCUMENTS), corpus_dir.join(VOCAB));
    m.add_input(&docs_path)?;
    m.add_input(&vocab_path)?;
    let docs = load_documents(&docs_path)?;
    let vocab = Vocabulary::load(&vocab_path)?;
    let shards = build_shards(&docs, &vocab, config)?;
    let x = merge_shards(&shards, vocab.len())?;
    ensure_dir(out)?;
    x.save(&out.join(COOC))?;
    save_shards(&shards, &out.join(SHARDS), &out.join(SHARD_INDEX))?;
    vocab.save(&out.join(VOCAB))?;
    for name in [COOC, SHARDS, SHARD_INDEX, VOCAB] {
        m.add_output(out, name)?;
    }
    m.counters = serde_json::json!({
        "documents": shards.len(),
        "vocab_size": vocab.len(),
        "nnz": x.nnz(),
        "total_mass": x.total_mass(),
        "symmetric": x.is_symmetric(),
    });
    m.time("total", start);
    m.write(out)?;
    Ok(m)
}

/// Trains GloVe on the global matrix; writes vectors, the exact parameter
/// sidecar and the AdaGrad state.
pub fn train_stage(cooc_dir: &Path, config: &TrainConfig, out: &Path) -> CliResult<StageManifest> {
    let start = Instant::now();
    config.validate()?;
    upstream(cooc_dir, "cooc")?;
    let mut m = StageManifest::new("train", config)?;
    let (vocab_path, cooc_path) = (cooc_dir.join(VOCAB), cooc_dir.join(COOC));
    m.add_input(&vocab_path)?;
    m.add_input(&cooc_path)?;
    let vocab = Vocabulary::load(&vocab_path)?;
    let x = CooccurrenceMatrix::load(&cooc_path, vocab.len())?;
    let state = train_state(&x, config)?;
    m.time("training", start);
    ensure_dir(out)?;
    save_vectors(&state.model, vocab.tokens(), &out.join(VECTORS))?;
    state.grad_sq.save_binary(&out.join(OPTIMIZER))?;
    write_json(&out.join(LOSS_HISTORY), &state.history)?;
    for name in [VECTORS, &vectors_sidecar_name(), OPTIMIZER, LOSS_HISTORY] {
        m.add_output(out, name)?;
    }
    m.counters = serde_json::json!({
        "vocab_size": vocab.len(),
        "nnz": x.nnz(),
        "final_cost": state.history.last(),
    });
    m.time("total", start);
    m.write(out)?;
    Ok(m)
}

/// Loads a vector file, checking its manifest when it was produced by a
/// stage. With `full`, the parameter sidecar must be present.
pub fn load_model(path: &Path, full: bool) -> CliResult<(Vocabulary, EmbeddingModel)> {
    verify_produced_file(path)?;
    if full {
        require(&sidecar_path(path))?;
    }
    let (tokens, model) = load_vectors(path)?;
    Ok((Vocabulary::from_tokens(tokens), model))
}

/// The weighting the model was trained with, read from the training
/// manifest next to it when there is one.
pub fn model_weighting(model_path: &Path, fallback: Weighting) -> Weighting {
    let dir = model_path.parent().unwrap_or(Path::new("."));
    for stage in ["train", "debias"] {
        if let Ok(m) = StageManifest::load(dir, stage) {
            let cfg = if stage == "train" { m.config.clone() } else { m.config["train_weighting"].clone() };
            let x_max = cfg.get("x_max").and_then(|v| v.as_f64());
            let alpha = cfg.get("alpha").and_then(|v| v.as_f64());
            if let (Some(x_max), Some(alpha)) = (x_max, alpha) {
                return Weighting { x_max, alpha };
            }
        }
    }
    fallback
}

fn check_vocab_matches(model_vocab: &Vocabulary, cooc_dir: &Path) -> CliResult<()> {
    let vocab = Vocabulary::load(&cooc_dir.join(VOCAB))?;
    if vocab.tokens() != model_vocab.tokens() {
        return Err(CliError::Data(format!(
            "model vocabulary ({} words) does not match {} ({} words)",
            model_vocab.len(),
            cooc_dir.join(VOCAB).display(),
            vocab.len()
        )));
    }
    Ok(())
}

pub fn weat_command(model_path: &Path, specs: &[WeatSpec], pvalue: &PValueConfig) -> CliResult<Vec<WeatResult>> {
    let (vocab, model) = load_model(model_path, false)?;
    Ok(rerun_weat(&model, &vocab, specs, pvalue)?)
}

pub fn analogy_command(model_path: &Path, questions: &Path) -> CliResult<AnalogyResult> {
    require(questions)?;
    let (vocab, model) = load_model(model_path, false)?;
    let qs = load_analogies(questions)?;
    Ok(analogy_top1(&model, &vocab, &qs)?)
}

#[derive(Debug, Clone, Serialize)]
struct DiffBiasStageConfig<'a> {
    spec: &'a WeatSpec,
    influence: &'a InfluenceConfig,
    weighting: Weighting,
}

/// Per-document differential bias, streaming each shard once.
pub fn diffbias_stage(
    model_path: &Path,
    cooc_dir: &Path,
    spec: &WeatSpec,
    influence: &InfluenceConfig,
    weighting: Weighting,
    out: &Path,
) -> CliResult<StageManifest> {
    let start = Instant::now();
    let (vocab, model) = load_model(model_path, true)?;
    upstream(cooc_dir, "cooc")?;
    check_vocab_matches(&vocab, cooc_dir)?;
    let mut m = StageManifest::new(
        "diffbias",
        &DiffBiasStageConfig {
            spec,
            influence,
            weighting,
        },
    )?;
    m.add_input(model_path)?;
    m.add_input(&sidecar_path(model_path))?;
    for name in [COOC, SHARDS, SHARD_INDEX] {
        m.add_input(&cooc_dir.join(name))?;
    }
    let weat = ResolvedWeat::resolve(spec, &vocab);
    let wanted: BTreeSet<u32> = weat.word_ids().into_iter().collect();
    let rows = RowSubset::load(&cooc_dir.join(COOC), &wanted)?;
    let store = ShardStore::open(&cooc_dir.join(SHARDS), &cooc_dir.join(SHARD_INDEX))?;
    m.time("load", start);
    let result = differential_bias(&model, &rows, &store, &weat, weighting, influence)?;
    m.time("differential_bias", start);
    ensure_dir(out)?;
    result.beta.save(&out.join(BETA), &out.join(BETA_SUMMARY))?;
    m.add_output(out, BETA)?;
    m.add_output(out, BETA_SUMMARY)?;
    let mut counters = serde_json::to_value(&result.stats)?;
    counters["single_pass"] = result.stats.single_pass().into();
    counters["sub_quadratic"] = result.stats.sub_quadratic().into();
    counters["resident_row_entries"] = rows.nnz().into();
    counters["missing_words"] = weat.missing.clone().into();
    m.counters = counters;
    m.time("total", start);
    m.write(out)?;
    Ok(m)
}

#[derive(Debug, Clone, Serialize)]
struct DebiasStageConfig<'a> {
    spec: &'a WeatSpec,
    sc: &'a ScConfig,
    train_weighting: Weighting,
    eval_specs: Vec<&'a str>,
    pvalue: &'a PValueConfig,
}

/// Reweights the corpus by β and moves the spec's word vectors.
#[allow(clippy::too_many_arguments)]
pub fn debias_stage(
    model_path: &Path,
    cooc_dir: &Path,
    spec: &WeatSpec,
    beta_path: &Path,
    sc: &ScConfig,
    eval_specs: &[WeatSpec],
    analogies: Option<&Path>,
    pvalue: &PValueConfig,
    weighting: Weighting,
    out: &Path,
) -> CliResult<(StageManifest, DebiasReport)> {
    let start = Instant::now();
    let (vocab, model) = load_model(model_path, true)?;
    upstream(cooc_dir, "cooc")?;
    check_vocab_matches(&vocab, cooc_dir)?;
    verify_produced_file(beta_path)?;
    let mut m = StageManifest::new(
        "debias",
        &DebiasStageConfig {
            spec,
            sc,
            train_weighting: weighting,
            eval_specs: eval_specs.iter().map(|s| s.name.as_str()).collect(),
            pvalue,
        },
    )?;
    m.add_input(model_path)?;
    m.add_input(&sidecar_path(model_path))?;
    m.add_input(beta_path)?;
    for name in [COOC, SHARDS, SHARD_INDEX] {
        m.add_input(&cooc_dir.join(name))?;
    }
    let beta = DiffBiasVector::load(beta_path, &spec.name)?;
    let weat = ResolvedWeat::resolve(spec, &vocab);
    let wanted: BTreeSet<u32> = weat.word_ids().into_iter().collect();
    let rows = RowSubset::load(&cooc_dir.join(COOC), &wanted)?;
    let store = ShardStore::open(&cooc_dir.join(SHARDS), &cooc_dir.join(SHARD_INDEX))?;
    let outcome = sc_debias(&model, &vocab, &rows, &store, spec, &beta, weighting, sc)?;
    m.time("sc_debias", start);

    let baseline = rerun_weat(&model, &vocab, eval_specs, pvalue)?;
    let debiased = rerun_weat(&outcome.model, &vocab, eval_specs, pvalue)?;
    m.time("weat", start);
    let analogy = match analogies {
        Some(path) => {
            require(path)?;
            m.add_input(path)?;
            let qs = load_analogies(path)?;
            Some([analogy_top1(&model, &vocab, &qs)?, analogy_top1(&outcome.model, &vocab, &qs)?])
        }
        None => None,
    };
    let report = DebiasReport {
        sc: ScReport {
            config: *sc,
            debiased_spec: spec.name.clone(),
            baseline,
            debiased,
            displacements: displacements(&model, &outcome.model, &vocab),
            stats: outcome.stats.clone(),
        },
        analogy_baseline: analogy.map(|a| a[0]),
        analogy_debiased: analogy.map(|a| a[1]),
    };
    ensure_dir(out)?;
    save_vectors(&outcome.model, vocab.tokens(), &out.join(VECTORS))?;
    write_json(&out.join(SC_REPORT), &report)?;
    for name in [VECTORS, &vectors_sidecar_name(), SC_REPORT] {
        m.add_output(out, name)?;
    }
    m.counters = serde_json::to_value(&outcome.stats)?;
    m.time("total", start);
    m.write(out)?;
    Ok((m, report))
}

#[derive(Debug, Clone, Serialize)]
struct OracleStageConfig<'a> {
    spec: &'a WeatSpec,
    influence: &'a InfluenceConfig,
    brute_force: &'a BruteForceConfig,
    max_docs: Option<usize>,
}

/// Compares the influence approximation against exact pointwise re-solves
/// and warm-start leave-one-out retraining.
pub fn oracle_stage(
    train_dir: &Path,
    cooc_dir: &Path,
    spec: &WeatSpec,
    influence: &InfluenceConfig,
    brute_force: &BruteForceConfig,
    max_docs: Option<usize>,
    out: &Path,
) -> CliResult<(StageManifest, OracleReport)> {
    let start = Instant::now();
    let train_manifest = upstream(train_dir, "train")?;
    upstream(cooc_dir, "cooc")?;
    let train: TrainConfig = serde_json::from_value(train_manifest.config.clone())
        .map_err(|e| CliError::Data(format!("{}: {e}", train_dir.join("train.manifest.json").display())))?;
    let model_path = train_dir.join(VECTORS);
    let (vocab, model) = load_model(&model_path, true)?;
    check_vocab_matches(&vocab, cooc_dir)?;
    let grad_sq = EmbeddingModel::load_binary(&train_dir.join(OPTIMIZER))?;
    let state = TrainState {
        model,
        grad_sq,
        history: Vec::new(),
    };
    let mut m = StageManifest::new(
        "oracle",
        &OracleStageConfig {
            spec,
            influence,
            brute_force,
            max_docs,
        },
    )?;
    for p in [model_path.clone(), sidecar_path(&model_path), train_dir.join(OPTIMIZER), cooc_dir.join(COOC), cooc_dir.join(SHARDS)] {
        m.add_input(&p)?;
    }
    let x = CooccurrenceMatrix::load(&cooc_dir.join(COOC), vocab.len())?;
    let store = ShardStore::open(&cooc_dir.join(SHARDS), &cooc_dir.join(SHARD_INDEX))?;
    let weat = ResolvedWeat::resolve(spec, &vocab);
    let weighting = train.weighting();
    let approx = differential_bias(&state.model, &x, &store, &weat, weighting, influence)?;
    let n_docs = approx.beta.len();
    let docs: Vec<usize> = (0..max_docs.unwrap_or(n_docs).min(n_docs)).collect();

    let word_ids = weat.word_ids();
    let vector_errors: Vec<VectorError> = docs
        .par_iter()
        .map(|&k| -> CliResult<Vec<VectorError>> {
            let shard = scglove::cooccurrence::ShardSource::read_shard(&store, k)?;
            let mut errs = Vec::new();
            for &i in &word_ids {
                if shard.row(i).is_empty() {
                    continue;
                }
                let row = x.row_vec(i);
                let ctx = PointwiseContext::new(&state.model, i, row.clone(), weighting, influence)?;
                let perturbed = perturb_row(&row, &shard, i, 1.0);
                let a = scglove::influence::approximate_vector(&ctx, &perturbed)?;
                let e = closed_form_resolve(&ctx, &perturbed)?;
                errs.push(VectorError {
                    doc_id: k,
                    word: vocab.token(i).to_owned(),
                    relative_l2: relative_l2(&a, &e),
                });
            }
            Ok(errs)
        })
        .collect::<CliResult<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    m.time("closed_form", start);
    let truth = brute_force_diffbias(&state, &x, &store, &weat, &train, brute_force, &docs)?;
    m.time("brute_force", start);
    let comparisons = truth
        .iter()
        .map(|t| DocComparison {
            doc_id: t.doc_id,
            beta_approx: approx.beta.beta[t.doc_id],
            beta_true: t.beta,
        })
        .collect();
    let report = OracleReport::new(&spec.name, vector_errors, comparisons);
    ensure_dir(out)?;
    write_json(&out.join(ORACLE_JSON), &report)?;
    std::fs::write(out.join(ORACLE_TEXT), report.to_text()).map_err(|e| io_error(&out.join(ORACLE_TEXT), e))?;
    m.add_output(out, ORACLE_JSON)?;
    m.add_output(out, ORACLE_TEXT)?;
    m.counters = serde_json::json!({
        "documents_tested": docs.len(),
        "vectors_compared": report.vector_errors.len(),
        "max_relative_l2": report.max_relative_l2,
        "sign_agreement": report.sign_agreement,
        "rank_correlation": report.rank_correlation,
    });
    m.time("total", start);
    m.write(out)?;
    Ok((m, report))
}

pub fn trial_dir(root: &Path, trial: usize) -> PathBuf {
    root.join(format!("trial_{trial:02}"))
}

/// Runs every stage for one trial.
pub fn run_trial(config: &PipelineConfig, specs: &[WeatSpec], trial: usize, seed: u64) -> CliResult<Vec<DebiasReport>> {
    let dir = trial_dir(&config.output_dir, trial);
    let (corpus_dir, cooc_dir, train_dir) = (dir.join("corpus"), dir.join("cooc"), dir.join("train"));
    corpus_stage(&config.corpus, &config.corpus_filter, &corpus_dir)?;
    cooc_stage(&corpus_dir, &config.cooc_config(), &cooc_dir)?;
    let train = TrainConfig { seed, ..config.train };
    train_stage(&cooc_dir, &train, &train_dir)?;
    let model = train_dir.join(VECTORS);
    let mut reports = Vec::new();
    for spec in specs {
        let diff_dir = dir.join(format!("diffbias_{}", spec.name));
        let debias_dir = dir.join(format!("debias_{}", spec.name));
        diffbias_stage(&model, &cooc_dir, spec, &config.sc.influence(), train.weighting(), &diff_dir)?;
        let (_, report) = debias_stage(
            &model,
            &cooc_dir,
            spec,
            &diff_dir.join(BETA),
            &config.sc,
            specs,
            config.analogies.as_deref(),
            &config.pvalue,
            train.weighting(),
            &debias_dir,
        )?;
        reports.push(report);
    }
    log::info!("trial {trial} (seed {seed}) done");
    Ok(reports)
}

/// All trials in parallel, then the aggregated report.
pub fn pipeline(config: &PipelineConfig) -> CliResult<StageManifest> {
    let start = Instant::now();
    config.validate()?;
    for p in &config.corpus {
        require(p)?;
    }
    if let Some(a) = &config.analogies {
        require(a)?;
    }
    let specs: Vec<WeatSpec> = config.specs.iter().map(|s| load_spec(s)).collect::<CliResult<_>>()?;
    let seeds = config.seeds()?;
    ensure_dir(&config.output_dir)?;
    seeds
        .par_iter()
        .enumerate()
        .map(|(t, &seed)| run_trial(config, &specs, t, seed).map(|_| ()))
        .collect::<CliResult<Vec<()>>>()?;
    let report = report_stage(&config.output_dir)?;
    let mut m = StageManifest::new("pipeline", config)?;
    m.add_output(&config.output_dir, crate::report::REPORT_JSON)?;
    m.add_output(&config.output_dir, crate::report::REPORT_TEXT)?;
    m.counters = serde_json::json!({ "trials": report.trials, "specs": report.specs });
    m.time("total", start);
    m.write(&config.output_dir)?;
    Ok(m)
}

/// Collects every trial's debiasing report under `run_dir`.
pub fn collect_debias_reports(run_dir: &Path) -> CliResult<Vec<(usize, DebiasReport)>> {
    require(run_dir)?;
    let mut trials: Vec<PathBuf> = std::fs::read_dir(run_dir)
        .map_err(|e| io_error(run_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("trial_")))
        .collect();
    trials.sort();
    if trials.is_empty() {
        return Err(CliError::Data(format!(
            "missing artifact: expected trial directories such as {}",
            trial_dir(run_dir, 0).display()
        )));
    }
    let mut out = Vec::new();
    for (t, dir) in trials.iter().enumerate() {
        let mut debias_dirs: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| io_error(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("debias_")))
            .collect();
        debias_dirs.sort();
        for d in debias_dirs {
            upstream(&d, "debias")?;
            let path = d.join(SC_REPORT);
            let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
            let report: DebiasReport = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            out.push((t, report));
        }
    }
    Ok(out)
}

pub fn report_stage(run_dir: &Path) -> CliResult<crate::report::RunReport> {
    let reports = collect_debias_reports(run_dir)?;
    let report = build_report(&reports)?;
    write_report(&report, run_dir)?;
    Ok(report)
}

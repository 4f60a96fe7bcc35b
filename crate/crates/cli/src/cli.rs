//! Argument parsing and subcommand dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use scglove::biasmetrics::PValueConfig;
use scglove::cooccurrence::DistanceWeighting;
use scglove::glove::{TrainConfig, WorkerMode};
use scglove::influence::{HessianAt, InfluenceConfig, Prefactor};
use scglove::scglove::{BetaNormalization, ScConfig, UpdateOrder};

use crate::config::{load_spec, PipelineConfig};
use crate::stages::{self, model_weighting};
use crate::CliResult;

/// Parses an enum by its configuration-file spelling.
fn config_value<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "scglove", version, about = "GloVe training, WEAT bias measurement and source-critical debiasing")]
pub struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize and length-filter raw documents, build the vocabulary.
    Corpus(CorpusCmd),
    /// Count per-document and global co-occurrences.
    Cooc(CoocCmd),
    /// Train GloVe vectors.
    Train(TrainCmd),
    /// WEAT effect size and p-value of a model.
    Weat(WeatCmd),
    /// TOP-1 analogy accuracy of a model.
    Analogy(AnalogyCmd),
    /// Per-document differential bias.
    Diffbias(DiffbiasCmd),
    /// Reweight by differential bias and update the WEAT word vectors.
    Debias(DebiasCmd),
    /// Validate the approximation against exact re-solves and retraining.
    Oracle(OracleCmd),
    /// Run every stage for every trial and write the report.
    Pipeline(PipelineCmd),
    /// Aggregate the trials of a pipeline run.
    Report(ReportCmd),
}

#[derive(Debug, Args, Default)]
pub struct CorpusArgs {
    #[arg(long)]
    pub min_doc_length: Option<usize>,
    #[arg(long)]
    pub max_doc_length: Option<usize>,
    #[arg(long)]
    pub min_count: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct CoocArgs {
    #[arg(long, value_parser = config_value::<DistanceWeighting>)]
    pub weighting: Option<DistanceWeighting>,
    #[arg(long)]
    pub oov_occupies_positions: Option<bool>,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub x_max: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = config_value::<WorkerMode>)]
    pub worker_mode: Option<WorkerMode>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct InfluenceArgs {
    /// `one`, `inverse-vocab` (1/V) or a number.
    #[arg(long)]
    pub prefactor: Option<Prefactor>,
    /// Fixed ridge added to the Hessian; scale-aware by default.
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long, value_parser = config_value::<HessianAt>)]
    pub hessian_at: Option<HessianAt>,
}

#[derive(Debug, Args, Default)]
pub struct ScArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_parser = config_value::<BetaNormalization>)]
    pub beta_normalization: Option<BetaNormalization>,
    #[arg(long, value_parser = config_value::<UpdateOrder>)]
    pub update_order: Option<UpdateOrder>,
}

#[derive(Debug, Args, Default)]
pub struct PValueArgs {
    #[arg(long)]
    pub max_partitions: Option<u64>,
    #[arg(long)]
    pub pvalue_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CorpusCmd {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Files with one document per line, or directories of `.txt` files.
    #[arg(long = "input", num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
}

#[derive(Debug, Args)]
pub struct CoocCmd {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub window: Option<usize>,
    #[command(flatten)]
    pub cooc: CoocArgs,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub cooc_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct WeatCmd {
    #[arg(long)]
    pub model: PathBuf,
    /// Built-in name (`weat1`, `weat2`) or spec file; repeatable.
    #[arg(long = "spec", required = true)]
    pub specs: Vec<String>,
    #[command(flatten)]
    pub pvalue: PValueArgs,
    /// Also write the results as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalogyCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub questions: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiffbiasCmd {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cooc_dir: PathBuf,
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub influence: InfluenceArgs,
}

#[derive(Debug, Args)]
pub struct DebiasCmd {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cooc_dir: PathBuf,
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub beta: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Specs to evaluate before and after; defaults to the config's list
    /// plus the debiased spec.
    #[arg(long = "eval-spec")]
    pub eval_specs: Vec<String>,
    #[arg(long)]
    pub analogies: Option<PathBuf>,
    #[command(flatten)]
    pub sc: ScArgs,
    #[command(flatten)]
    pub influence: InfluenceArgs,
    #[command(flatten)]
    pub pvalue: PValueArgs,
}

#[derive(Debug, Args)]
pub struct OracleCmd {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train_dir: PathBuf,
    #[arg(long)]
    pub cooc_dir: PathBuf,
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Test only the first N documents.
    #[arg(long)]
    pub docs: Option<usize>,
    /// Warm-start epoch budget of the retraining reference.
    #[arg(long)]
    pub warm_epochs: Option<usize>,
    #[arg(long)]
    pub paired_control: Option<bool>,
    #[command(flatten)]
    pub influence: InfluenceArgs,
}

#[derive(Debug, Args)]
pub struct PipelineCmd {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "corpus")]
    pub corpus: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long = "spec")]
    pub specs: Vec<String>,
    #[arg(long)]
    pub analogies: Option<PathBuf>,
    #[command(flatten)]
    pub corpus_args: CorpusArgs,
    #[command(flatten)]
    pub cooc: CoocArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub sc: ScArgs,
    #[command(flatten)]
    pub influence: InfluenceArgs,
    #[command(flatten)]
    pub pvalue: PValueArgs,
}

#[derive(Debug, Args)]
pub struct ReportCmd {
    #[arg(long)]
    pub run_dir: PathBuf,
}

fn set<T: Copy>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

impl CorpusArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        set(&mut c.corpus_filter.min_doc_length, self.min_doc_length);
        set(&mut c.corpus_filter.max_doc_length, self.max_doc_length);
        set(&mut c.corpus_filter.min_count, self.min_count);
    }
}

impl CoocArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        set(&mut c.cooc.weighting, self.weighting);
        set(&mut c.cooc.oov_occupies_positions, self.oov_occupies_positions);
    }
}

impl TrainArgs {
    fn apply(&self, t: &mut TrainConfig) {
        set(&mut t.dim, self.dim);
        set(&mut t.window, self.window);
        set(&mut t.x_max, self.x_max);
        set(&mut t.alpha, self.alpha);
        set(&mut t.epochs, self.epochs);
        set(&mut t.learning_rate, self.learning_rate);
        set(&mut t.seed, self.seed);
        set(&mut t.worker_mode, self.worker_mode);
        set(&mut t.threads, self.threads);
    }
}

impl InfluenceArgs {
    fn apply(&self, sc: &mut ScConfig) {
        set(&mut sc.prefactor, self.prefactor);
        if self.ridge.is_some() {
            sc.ridge = self.ridge;
        }
        set(&mut sc.hessian_at, self.hessian_at);
    }
}

impl ScArgs {
    fn apply(&self, sc: &mut ScConfig) {
        set(&mut sc.gamma, self.gamma);
        set(&mut sc.beta_normalization, self.beta_normalization);
        set(&mut sc.update_order, self.update_order);
    }
}

impl PValueArgs {
    fn apply(&self, p: &mut PValueConfig) {
        set(&mut p.max_partitions, self.max_partitions);
        set(&mut p.seed, self.pvalue_seed);
    }
}

fn print_json(value: &impl serde::Serialize) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json_opt(path: Option<&Path>, value: &impl serde::Serialize) -> CliResult<()> {
    if let Some(p) = path {
        std::fs::write(p, serde_json::to_string_pretty(value)? + "\n").map_err(|e| crate::io_error(p, e))?;
    }
    Ok(())
}

fn influence_of(sc: &ScConfig) -> InfluenceConfig {
    sc.influence()
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Corpus(a) => {
            let mut c = PipelineConfig::load_or_default(a.config.as_deref())?;
            a.corpus.apply(&mut c);
            let inputs = if a.inputs.is_empty() { c.corpus.clone() } else { a.inputs };
            let m = stages::corpus_stage(&inputs, &c.corpus_filter, &a.out)?;
            print_json(&m.counters)
        }
        Command::Cooc(a) => {
            let mut c = PipelineConfig::load_or_default(a.config.as_deref())?;
            set(&mut c.train.window, a.window);
            a.cooc.apply(&mut c);
            let m = stages::cooc_stage(&a.corpus_dir, &c.cooc_config(), &a.out)?;
            print_json(&m.counters)
        }
        Command::Train(a) => {
            let mut c = PipelineConfig::load_or_default(a.config.as_deref())?;
            a.train.apply(&mut c.train);
            let m = stages::train_stage(&a.cooc_dir, &c.train, &a.out)?;
            print_json(&m.counters)
        }
        Command::Weat(a) => {
            let mut p = PValueConfig::default();
            a.pvalue.apply(&mut p);
            let specs = a.specs.iter().map(|s| load_spec(s)).collect::<CliResult<Vec<_>>>()?;
            let results = stages::weat_command(&a.model, &specs, &p)?;
            for r in &results {
                println!("{}\teffect_size {:.6}\tp_value {:.6}\tmissing {}", r.spec, r.effect_size, r.p_value, r.n_missing);
            }
            write_json_opt(a.out.as_deref(), &results)
        }
        Command::Analogy(a) => {
            let r = stages::analogy_command(&a.model, &a.questions)?;
            println!("top1 {:.6}\thits {}\tattempted {}\tskipped {}", r.accuracy, r.hits, r.attempted, r.skipped);
            write_json_opt(a.out.as_deref(), &r)
        }
        Command::Diffbias(a) => {
            let mut c = PipelineConfig::load_or_default(a.config.as_deref())?;
            a.influence.apply(&mut c.sc);
            let spec = load_spec(&a.spec)?;
            let weighting = model_weighting(&a.model, c.train.weighting());
            let m = stages::diffbias_stage(&a.model, &a.cooc_dir, &spec, &influence_of(&c.sc), weighting, &a.out)?;
            print_json(&m.counters)
        }
        Command::Debias(a) => {
            let mut c = PipelineConfig::load_or_default(a.config.as_deref())?;
            a.sc.apply(&mut c.sc);
            a.influence.apply(&mut c.sc);
            a.pvalue.apply(&mut c.pvalue);
            let spec = load_spec(&a.spec)?;
            let mut eval_names = if a.eval_specs.is_empty() { c.specs.clone() } else { a.eval_specs.clone() };
            if !eval_names.contains(&a.spec) && !eval_names.contains(&spec.name) {
                eval_names.insert(0, a.spec.clone());
            }
            let eval = eval_names.iter().map(|s| load_spec(s)).collect::<CliResult<Vec<_>>>()?;
            let analogies = a.analogies.or(c.analogies.clone());
            let weighting = model_weighting(&a.model, c.train.weighting());
            let (_, report) = stages::debias_stage(
                &a.model,
                &a.cooc_dir,
                &spec,
                &a.beta,
                &c.sc,
                &eval,
                analogies.as_deref(),
                &c.pvalue,
                weighting,
                &a.out,
            )?;
            for (b, d) in report.sc.baseline.iter().zip(&report.sc.debiased) {
                println!("{}\tbaseline {:.6}\tdebiased {:.6}", b.spec, b.effect_size, d.effect_size);
            }
            Ok(())
        }
        Command::Oracle(a) => {
            let mut c = PipelineConfig::load_or_default(a.config.as_deref())?;
            a.influence.apply(&mut c.sc);
            set(&mut c.oracle.epochs, a.warm_epochs);
            set(&mut c.oracle.paired_control, a.paired_control);
            let spec = load_spec(&a.spec)?;
            let (_, report) = stages::oracle_stage(&a.train_dir, &a.cooc_dir, &spec, &influence_of(&c.sc), &c.oracle, a.docs, &a.out)?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::Pipeline(a) => {
            let mut c = PipelineConfig::load(&a.config)?;
            if !a.corpus.is_empty() {
                c.corpus = a.corpus.clone();
            }
            if let Some(o) = a.out {
                c.output_dir = o;
            }
            set(&mut c.trials, a.trials);
            if !a.specs.is_empty() {
                c.specs = a.specs.clone();
            }
            if a.analogies.is_some() {
                c.analogies = a.analogies.clone();
            }
            a.corpus_args.apply(&mut c);
            a.cooc.apply(&mut c);
            a.train.apply(&mut c.train);
            a.sc.apply(&mut c.sc);
            a.influence.apply(&mut c.sc);
            a.pvalue.apply(&mut c.pvalue);
            if a.train.seed.is_some() {
                c.seeds = None;
            }
            stages::pipeline(&c)?;
            let text = std::fs::read_to_string(c.output_dir.join(crate::report::REPORT_TEXT)).unwrap_or_default();
            print!("{text}");
            Ok(())
        }
        Command::Report(a) => {
            let report = stages::report_stage(&a.run_dir)?;
            print!("{}", crate::report::render_table(&report));
            Ok(())
        }
    }
}

/// Parses `argv` and runs it, returning the process exit code.
pub fn run_subcommand<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("scglove: {e}");
            e.exit_code()
        }
    }
}

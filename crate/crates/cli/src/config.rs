//! The single JSON configuration file shared by all subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scglove::biasmetrics::{PValueConfig, WeatSpec};
use scglove::cooccurrence::{CoocConfig, DistanceWeighting};
use scglove::corpus::CorpusConfig;
use scglove::glove::TrainConfig;
use scglove::oracle::BruteForceConfig;
use scglove::scglove::ScConfig;

use crate::{io_error, require, CliError, CliResult};

/// Co-occurrence options; the window comes from `train.window`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoocOptions {
    pub weighting: DistanceWeighting,
    pub oov_occupies_positions: bool,
}

impl Default for CoocOptions {
    fn default() -> Self {
        let c = CoocConfig::default();
        Self {
            weighting: c.weighting,
            oov_occupies_positions: c.oov_occupies_positions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub corpus_filter: CorpusConfig,
    pub cooc: CoocOptions,
    pub train: TrainConfig,
    /// Built-in spec names (`weat1`, `weat2`) or paths to spec JSON files.
    pub specs: Vec<String>,
    pub sc: ScConfig,
    pub trials: usize,
    /// One training seed per trial; defaults to `train.seed + t`.
    pub seeds: Option<Vec<u64>>,
    pub analogies: Option<PathBuf>,
    pub pvalue: PValueConfig,
    pub oracle: BruteForceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus: Vec::new(),
            output_dir: PathBuf::from("scglove_run"),
            corpus_filter: CorpusConfig::default(),
            cooc: CoocOptions::default(),
            train: TrainConfig::default(),
            specs: vec!["weat1".into(), "weat2".into()],
            sc: ScConfig::default(),
            trials: 10,
            seeds: None,
            analogies: None,
            pvalue: PValueConfig::default(),
            oracle: BruteForceConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        require(path)?;
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn cooc_config(&self) -> CoocConfig {
        CoocConfig {
            window: self.train.window,
            weighting: self.cooc.weighting,
            oov_occupies_positions: self.cooc.oov_occupies_positions,
        }
    }

    pub fn seeds(&self) -> CliResult<Vec<u64>> {
        match &self.seeds {
            Some(s) if s.len() != self.trials => Err(CliError::Usage(format!(
                "{} seeds given for {} trials",
                s.len(),
                self.trials
            ))),
            Some(s) => Ok(s.clone()),
            None => Ok((0..self.trials as u64).map(|t| self.train.seed.wrapping_add(t)).collect()),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.trials == 0 {
            return Err(CliError::Usage("trials must be at least 1".into()));
        }
        if self.specs.is_empty() {
            return Err(CliError::Usage("at least one WEAT spec is required".into()));
        }
        self.train.validate()?;
        self.seeds()?;
        Ok(())
    }
}

/// A built-in spec name or a path to a spec file.
pub fn load_spec(name_or_path: &str) -> CliResult<WeatSpec> {
    if let Some(spec) = WeatSpec::builtin(name_or_path) {
        return Ok(spec);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(CliError::Data(format!(
            "missing artifact: expected a WEAT spec file at {} (built-in specs: weat1, weat2)",
            path.display()
        )));
    }
    Ok(WeatSpec::load(path)?)
}

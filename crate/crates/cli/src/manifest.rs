//! Stage manifests: hashes of inputs and outputs, a config echo, timings
//! and counters, written next to every stage's artifacts.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{io_error, require, CliError, CliResult};

pub fn sha256_file(path: &Path) -> CliResult<String> {
    require(path)?;
    let mut file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| io_error(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub tool_version: String,
    /// Input path → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name, relative to the stage directory → sha256.
    pub outputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
    pub timings_ms: BTreeMap<String, f64>,
    pub counters: serde_json::Value,
}

pub fn manifest_path(dir: &Path, stage: &str) -> PathBuf {
    dir.join(format!("{stage}.manifest.json"))
}

impl StageManifest {
    pub fn new(stage: &str, config: &impl Serialize) -> CliResult<Self> {
        Ok(Self {
            stage: stage.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            config: serde_json::to_value(config)?,
            timings_ms: BTreeMap::new(),
            counters: serde_json::Value::Null,
        })
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn add_output(&mut self, dir: &Path, name: &str) -> CliResult<()> {
        let hash = sha256_file(&dir.join(name))?;
        self.outputs.insert(name.to_owned(), hash);
        Ok(())
    }

    pub fn time(&mut self, label: &str, since: std::time::Instant) {
        self.timings_ms.insert(label.to_owned(), since.elapsed().as_secs_f64() * 1e3);
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = manifest_path(dir, &self.stage);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    pub fn load(dir: &Path, stage: &str) -> CliResult<Self> {
        let path = manifest_path(dir, stage);
        require(&path)?;
        let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    /// Checks that every recorded output still has its recorded hash.
    pub fn verify(&self, dir: &Path) -> CliResult<()> {
        for (name, expected) in &self.outputs {
            let path = dir.join(name);
            let actual = sha256_file(&path)?;
            if &actual != expected {
                return Err(CliError::Data(format!(
                    "stale artifact: {} changed since the {} stage wrote it; re-run that stage",
                    path.display(),
                    self.stage
                )));
            }
        }
        Ok(())
    }
}

/// Loads and verifies the manifest of an upstream stage directory.
pub fn upstream(dir: &Path, stage: &str) -> CliResult<StageManifest> {
    let m = StageManifest::load(dir, stage)?;
    m.verify(dir)?;
    Ok(m)
}

/// Verifies `file` against whichever manifest in its directory lists it.
/// Files not produced by a stage are accepted as they are.
pub fn verify_produced_file(file: &Path) -> CliResult<()> {
    require(file)?;
    let dir = file.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = match file.file_name().and_then(|n| n.to_str()) {
        Some(n) => n,
        None => return Ok(()),
    };
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(_) => return Ok(()),
    };
    for entry in entries.flatten() {
        let fname = entry.file_name();
        let fname = fname.to_string_lossy();
        if let Some(stage) = fname.strip_suffix(".manifest.json") {
            let m = StageManifest::load(dir, stage)?;
            if m.outputs.contains_key(name) {
                return m.verify(dir);
            }
        }
    }
    Ok(())
}

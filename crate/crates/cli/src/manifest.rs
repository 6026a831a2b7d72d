use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use stableaml::synth::sha256_hex;

use crate::error::{data, CliResult};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, serde_json::Value>,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub duration_seconds: f64,
}

/// Collects inputs and outputs while a command runs.
pub struct Run {
    command: String,
    config: BTreeMap<String, serde_json::Value>,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    seed: Option<u64>,
    started_unix: u64,
    clock: Instant,
    out_dir: PathBuf,
}

impl Run {
    pub fn start(command: &str, config: &impl Serialize, out_dir: &Path) -> CliResult<Self> {
        let value = serde_json::to_value(config).map_err(|e| data(format!("config: {e}")))?;
        let config = match value {
            serde_json::Value::Object(m) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        };
        std::fs::create_dir_all(out_dir)
            .map_err(|e| data(format!("cannot create {}: {e}", out_dir.display())))?;
        Ok(Run {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            clock: Instant::now(),
            out_dir: out_dir.to_path_buf(),
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Reads an input file, recording its digest.
    pub fn read_input(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| data(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    /// Writes `bytes` to `name` inside the output directory.
    pub fn write_output(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| data(format!("cannot write {}: {e}", path.display())))?;
        self.note_output(name);
        Ok(path)
    }

    pub fn note_output(&mut self, name: &str) {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
    }

    pub fn finish(mut self) -> CliResult<RunManifest> {
        self.outputs.sort();
        let manifest = RunManifest {
            command: self.command,
            config: self.config,
            inputs: self.inputs,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.outputs,
            started_unix: self.started_unix,
            duration_seconds: self.clock.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_vec_pretty(&manifest).map_err(|e| data(e.to_string()))?;
        text.push(b'\n');
        let path = self.out_dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| data(format!("cannot write {}: {e}", path.display())))?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> CliResult<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read(&path).map_err(|e| data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

//! Run bookkeeping: atomic artifact writes and the per-command manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    pub fn of(path: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            path: path.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Everything needed to reproduce and audit one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub versions: BTreeMap<String, String>,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub jobs: usize,
    pub inputs: Vec<Artifact>,
    /// Every artifact written, relative to the output directory.
    pub outputs: Vec<Artifact>,
    pub timings: Vec<Timing>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames it into place, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

/// Collects the provenance of one command while it runs.
pub struct Run {
    out: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn new(out: &Path, command: &str, config: &PipelineConfig, jobs: usize) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| CliError::data(out.display(), e))?;
        let versions = BTreeMap::from([
            ("gaitasym".to_string(), gaitasym::VERSION.to_string()),
            ("gaitasym-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]);
        Ok(Self {
            out: out.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                versions,
                config_hash: config.hash(),
                seeds: BTreeMap::new(),
                jobs,
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings: Vec::new(),
                summary: BTreeMap::new(),
            },
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.manifest.inputs.push(Artifact::of(path.display().to_string(), bytes));
    }

    pub fn timed(&mut self, stage: &str, since: Instant) {
        self.manifest.timings.push(Timing {
            stage: stage.to_string(),
            seconds: since.elapsed().as_secs_f64(),
        });
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("summary values serialize");
        self.manifest.summary.insert(key.to_string(), value);
    }

    /// Atomically writes `relative` under the output directory.
    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<()> {
        let artifact = write_artifact(&self.out, relative, bytes)?;
        self.manifest.outputs.push(artifact);
        Ok(())
    }

    /// Records artifacts written elsewhere (e.g. by worker threads).
    pub fn written(&mut self, artifacts: impl IntoIterator<Item = Artifact>) {
        self.manifest.outputs.extend(artifacts);
    }

    /// Writes the manifest, which always comes last.
    pub fn finish(self) -> Result<RunManifest> {
        let name = RunManifest::file_name(&self.manifest.command);
        let mut json = serde_json::to_vec_pretty(&self.manifest).map_err(|e| CliError::data(&name, e))?;
        json.push(b'\n');
        write_atomic(&self.out.join(&name), &json).map_err(|e| CliError::data(&name, e))?;
        Ok(self.manifest)
    }
}

pub fn write_artifact(out: &Path, relative: &str, bytes: &[u8]) -> Result<Artifact> {
    write_atomic(&out.join(relative), bytes).map_err(|e| CliError::data(relative, e))?;
    Ok(Artifact::of(relative, bytes))
}

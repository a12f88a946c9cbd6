use dyn4d_core::Error;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const RUN_MANIFEST_FORMAT: &str = "dyn4d-run-1";
pub const RUN_MANIFEST_NAME: &str = "run_manifest.json";

/// Record of one run, written once its outputs exist.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub toolkit_version: String,
    pub started_unix_s: f64,
    pub wall_clock_s: f64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
}

/// Collects manifest fields while a command runs.
pub struct RunRecorder {
    command: String,
    started: Instant,
    started_unix_s: f64,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl RunRecorder {
    pub fn start(command: &str) -> Self {
        let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Self {
            command: command.to_string(),
            started: Instant::now(),
            started_unix_s,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, p: impl AsRef<Path>) {
        self.inputs.push(p.as_ref().display().to_string());
    }

    pub fn output(&mut self, p: impl AsRef<Path>) {
        self.outputs.push(p.as_ref().display().to_string());
    }

    /// Writes the manifest to `path` and returns it.
    pub fn finish<C: Serialize>(self, config: &C, seed: u64, path: &Path) -> Result<RunManifest, Error> {
        let m = RunManifest {
            format: RUN_MANIFEST_FORMAT.to_string(),
            command: self.command,
            args: std::env::args().skip(1).collect(),
            config_hash: crate::config::hash(config)?,
            seed,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_s: self.started_unix_s,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            inputs: self.inputs,
            outputs: self.outputs,
            config: serde_json::to_value(config)?,
        };
        write_json_atomic(path, &m)?;
        Ok(m)
    }
}

/// Writes pretty JSON through a sibling temp file and a rename.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let tmp = temp_sibling(path);
    std::fs::write(&tmp, serde_json::to_string_pretty(value)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Manifest location for a command whose output is a single file.
pub fn manifest_beside(file: &Path) -> PathBuf {
    let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    file.with_file_name(format!("{stem}.manifest.json"))
}

pub fn load(path: &Path) -> Result<RunManifest, Error> {
    let m: RunManifest = serde_json::from_slice(&std::fs::read(path)?)?;
    if m.format != RUN_MANIFEST_FORMAT {
        return Err(Error::Format(format!("unsupported run manifest format {}", m.format)));
    }
    Ok(m)
}

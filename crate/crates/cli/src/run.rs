//! One run owns one output directory: it holds a lockfile while working,
//! writes every artifact atomically, and either finishes with a manifest or
//! removes what it wrote.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;

pub const LOCK_NAME: &str = ".fredo.lock";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub seed: u64,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    /// File names relative to the output directory, in write order.
    pub outputs: Vec<String>,
    /// Resolved choices and timings that are not part of the metrics.
    pub details: Map<String, Value>,
}

pub struct Run {
    out: PathBuf,
    command: String,
    started_at: String,
    written: Vec<String>,
    details: Map<String, Value>,
    locked: bool,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn output_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Write-then-rename so readers never see a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(output_err(path, e));
    }
    Ok(())
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("json serialization");
    v.push(b'\n');
    v
}

impl Run {
    pub fn start(out: &Path, command: &str) -> Result<Self, CliError> {
        fs::create_dir_all(out).map_err(|e| output_err(out, e))?;
        let lock = out.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CliError::Locked(out.to_path_buf()));
            }
            Err(e) => return Err(output_err(&lock, e)),
        }
        Ok(Self {
            out: out.to_path_buf(),
            command: command.to_string(),
            started_at: now(),
            written: Vec::new(),
            details: Map::new(),
            locked: true,
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        // Recorded first so a failed rename still gets cleaned up.
        self.written.push(name.to_string());
        write_atomic(&self.path(name), bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, &json_bytes(value))
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details.insert(
            key.to_string(),
            serde_json::to_value(value).expect("json value"),
        );
    }

    pub fn finish(mut self, config: &RunConfig) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            command: self.command.clone(),
            config: config.clone(),
            seed: config.seed,
            version: format!("fredo {}", env!("CARGO_PKG_VERSION")),
            started_at: self.started_at.clone(),
            finished_at: now(),
            outputs: self.written.clone(),
            details: std::mem::take(&mut self.details),
        };
        if let Err(e) = write_atomic(&self.path(MANIFEST_NAME), &json_bytes(&manifest)) {
            self.abort();
            return Err(e);
        }
        self.release();
        Ok(manifest)
    }

    /// Removes every artifact this run wrote, then the lock.
    pub fn abort(&mut self) {
        for name in self.written.drain(..) {
            let _ = fs::remove_file(self.out.join(&name));
        }
        self.release();
    }

    fn release(&mut self) {
        if self.locked {
            let _ = fs::remove_file(self.out.join(LOCK_NAME));
            self.locked = false;
        }
    }
}

impl Drop for Run {
    fn drop(&mut self) {
        // Dropped without finish(): treat as failure.
        if self.locked {
            self.abort();
        }
    }
}

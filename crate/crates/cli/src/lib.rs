//! Experiment runner behind the `sabrlab` binary.
//!
//! Exit codes: 1 for an invalid configuration (or unusable output
//! directory), 2 for a numerical domain failure, 3 when `--check` was asked
//! for and the experiment's acceptance check failed.

pub mod config;
pub mod experiments;

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{ConfigOverrides, Experiment, OutputFormat, RunConfig};
pub use experiments::{execute, Artifact, CheckOutcome, ExperimentOutput};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical domain error: {0}")]
    Domain(String),
    #[error("output error: {0}")]
    Io(String),
    #[error("acceptance check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Domain(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

impl From<sabrlab_core::Error> for CliError {
    fn from(e: sabrlab_core::Error) -> Self {
        match e {
            sabrlab_core::Error::Config(m) => CliError::Config(m),
            other => CliError::Domain(other.to_string()),
        }
    }
}

pub const THREADS_ENV: &str = "SABRLAB_THREADS";

/// Runs `f` on a pool capped by `SABRLAB_THREADS` when it is set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub artifacts: Vec<ManifestEntry>,
    pub check: Option<CheckOutcome>,
    pub timestamp_unix: u64,
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub manifest: Manifest,
    pub check: CheckOutcome,
}

/// Runs the experiment, writes its artifacts and `manifest.json` into
/// `cfg.out`, and fails with [`CliError::CheckFailed`] after writing when
/// `cfg.check` is set and the check did not pass.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", cfg.out.display())))?;
    let output = with_thread_cap(|| execute(cfg))??;
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for a in &output.artifacts {
        let path = cfg.out.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        entries.push(ManifestEntry {
            file: a.name.clone(),
            bytes: a.bytes.len(),
            sha256: format!("{:x}", Sha256::digest(&a.bytes)),
        });
        files.push(path);
    }
    let manifest = Manifest {
        experiment: cfg.experiment.name().to_string(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        artifacts: entries,
        check: cfg.check.then(|| output.check.clone()),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    let path = cfg.out.join(MANIFEST);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    files.push(path);
    if cfg.check && !output.check.passed {
        return Err(CliError::CheckFailed(output.check.detail));
    }
    Ok(RunOutcome {
        files,
        manifest,
        check: output.check,
    })
}

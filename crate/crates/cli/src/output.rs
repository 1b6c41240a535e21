//! Artifacts on disk: CSV tables, NDJSON dumps, the run manifest and the
//! error record.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::experiments::{self, Artifacts, Table};

pub const MANIFEST: &str = "manifest.json";
pub const ERROR_RECORD: &str = "error.json";

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    config_sha256: String,
    seed: u64,
    crate_version: &'static str,
    threads: usize,
    started_unix: u64,
    wall_time_s: f64,
    files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ErrorRecord<'a> {
    experiment: &'a str,
    kind: String,
    message: String,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// RFC 4180 table followed by the manifest reference line.
pub fn write_table(dir: &Path, table: &Table) -> anyhow::Result<PathBuf> {
    let path = dir.join(&table.file);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    let mut bytes = w.into_inner()?;
    writeln!(bytes, "# manifest={MANIFEST}")?;
    fs::write(&path, bytes)?;
    Ok(path)
}

/// Result of [`run_experiment`].
#[derive(Debug)]
pub struct RunOutcome {
    pub artifacts: Artifacts,
    pub files: Vec<PathBuf>,
}

/// Runs one experiment and writes everything under `dir`. On a module
/// error an error record is written and the error returned.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> anyhow::Result<RunOutcome> {
    fs::create_dir_all(dir)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let artifacts = match experiments::run(cfg) {
        Ok(a) => a,
        Err(e) => {
            let kind = format!("{e:?}");
            let rec = ErrorRecord {
                experiment: cfg.experiment.name(),
                kind: kind.split(['(', ' ', '{']).next().unwrap_or("Error").to_string(),
                message: e.to_string(),
            };
            fs::write(dir.join(ERROR_RECORD), serde_json::to_vec_pretty(&rec)?)?;
            return Err(e.into());
        }
    };
    let mut files = Vec::new();
    for t in &artifacts.tables {
        files.push(write_table(dir, t)?);
    }
    for (name, bytes) in &artifacts.dumps {
        let p = dir.join(name);
        fs::write(&p, bytes)?;
        files.push(p);
    }
    let manifest = Manifest {
        experiment: cfg.experiment.name(),
        config_sha256: config_hash(cfg),
        seed: cfg.seed,
        crate_version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        started_unix: started,
        wall_time_s: clock.elapsed().as_secs_f64(),
        files: files.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect(),
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    // the resolved config next to the outputs
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(RunOutcome { artifacts, files })
}

//! Run output: one long-format CSV per learner plus a JSON manifest.
//!
//! CSV columns are `seed,iteration,metric,value`. Values use the shortest
//! representation that parses back to the same `f64`, so a read-back is exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, LearnerKind};
use super::run::{Metric, MetricTrace, RunOutput, SeedFailure, Timing};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "seed,iteration,metric,value";
pub const MANIFEST_SCHEMA: &str = "ital-run/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    /// A single JSON array of traces per learner.
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub git_hash: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    pub total_seconds: f64,
    pub files: BTreeMap<String, String>,
    pub timings: Vec<Timing>,
    pub failures: Vec<SeedFailure>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.schema != MANIFEST_SCHEMA {
            return Err(Error::config(format!("unknown manifest schema `{}`", self.schema)));
        }
        self.config.validate()?;
        for learner in &self.config.learners {
            if !self.files.contains_key(&learner.name()) {
                return Err(Error::config(format!("manifest lacks an output file for {learner}")));
            }
        }
        if chrono::DateTime::parse_from_rfc3339(&self.started_at).is_err()
            || chrono::DateTime::parse_from_rfc3339(&self.finished_at).is_err()
        {
            return Err(Error::config("manifest timestamps must be RFC 3339"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let m: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        m.validate()?;
        Ok(m)
    }
}

pub fn write_csv<W: Write>(out: W, traces: &[&MetricTrace]) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{CSV_HEADER}")?;
    let mut sorted: Vec<&&MetricTrace> = traces.iter().collect();
    sorted.sort_by_key(|t| t.seed);
    for t in sorted {
        for i in 0..t.len() {
            for (metric, series) in &t.series {
                writeln!(out, "{},{},{},{}", t.seed, i, metric, series[i])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Parses a CSV written by [`write_csv`]; `learner` labels the result.
pub fn read_csv<R: BufRead>(reader: R, learner: LearnerKind) -> Result<Vec<MetricTrace>> {
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == CSV_HEADER => {}
        Some(Err(e)) => return Err(e.into()),
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{CSV_HEADER}`"),
            })
        }
    }
    let mut by_seed: BTreeMap<u64, BTreeMap<Metric, Vec<f64>>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let seed: u64 = fields[0].parse().map_err(|_| bad("bad seed".into()))?;
        let iteration: usize = fields[1].parse().map_err(|_| bad("bad iteration".into()))?;
        let metric: Metric = fields[2].parse().map_err(|e: Error| bad(e.to_string()))?;
        let value: f64 = fields[3].parse().map_err(|_| bad("bad value".into()))?;
        let series = by_seed.entry(seed).or_default().entry(metric).or_default();
        if series.len() != iteration {
            return Err(bad(format!("iteration {iteration} out of order")));
        }
        series.push(value);
    }
    Ok(by_seed
        .into_iter()
        .map(|(seed, series)| MetricTrace { learner, seed, series })
        .collect())
}

/// Reads a learner CSV, taking the learner from the file stem.
pub fn load_csv(path: &Path) -> Result<Vec<MetricTrace>> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::config(format!("cannot name learner from {}", path.display())))?;
    let learner: LearnerKind = stem.parse()?;
    read_csv(BufReader::new(fs::File::open(path)?), learner)
}

pub fn git_hash() -> Option<String> {
    let out = Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

/// Writes every learner's traces into `dir` and a manifest beside them.
pub fn emit(
    output: &RunOutput,
    config: &ExperimentConfig,
    dir: &Path,
    format: OutputFormat,
    started: chrono::DateTime<chrono::Utc>,
) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    for learner in &config.learners {
        let traces = output.for_learner(*learner);
        let (name, path): (String, PathBuf) = match format {
            OutputFormat::Csv => {
                let p = dir.join(format!("{learner}.csv"));
                write_csv(fs::File::create(&p)?, &traces)?;
                (learner.name(), p)
            }
            OutputFormat::Json => {
                let p = dir.join(format!("{learner}.json"));
                let w = BufWriter::new(fs::File::create(&p)?);
                serde_json::to_writer(w, &traces)?;
                (learner.name(), p)
            }
        };
        let file = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        files.insert(name, file);
    }
    let finished = chrono::Utc::now();
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        git_hash: git_hash(),
        started_at: started.to_rfc3339(),
        finished_at: finished.to_rfc3339(),
        total_seconds: (finished - started).num_milliseconds() as f64 / 1000.0,
        files,
        timings: output.timings.clone(),
        failures: output.failures.clone(),
    };
    let w = BufWriter::new(fs::File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(w, &manifest)?;
    Ok(manifest)
}

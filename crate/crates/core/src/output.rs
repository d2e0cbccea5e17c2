//! CSV artifacts of an experiment run and their readers.
//!
//! Files per condition: `series_<name>.csv` (population means per step) and
//! `agents_<name>.csv` (one row per agent). `manifest.csv` lists every
//! condition with its status. Floats are written with 17 significant digits,
//! so reading a file back reproduces the written values bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PAYOFF_COLUMNS;
use crate::population::{ConditionAggregate, Measure};

pub const SERIES_HEADER: [&str; 5] = ["step", "mean_joy", "mean_distress", "mean_fear", "mean_reward"];
pub const AGENTS_HEADER: [&str; 8] =
    ["agent_id", "picks_A", "picks_B", "picks_C", "total_reward", "gamma", "beta", "init_offset"];
pub const MANIFEST_HEADER: [&str; 10] = [
    "condition",
    "status",
    "series_file",
    "agents_file",
    "config_hash",
    "master_seed",
    "engine_version",
    "n_agents",
    "horizon",
    "failed_trials",
];
pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: unexpected header {found:?}")]
    Header { path: PathBuf, found: Vec<String> },
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv { path: path.to_path_buf(), source }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

pub fn series_path(dir: &Path, condition: &str) -> PathBuf {
    dir.join(format!("series_{condition}.csv"))
}

pub fn agents_path(dir: &Path, condition: &str) -> PathBuf {
    dir.join(format!("agents_{condition}.csv"))
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), OutputError> {
    let tmp = path.with_extension("csv.tmp");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn to_bytes<F>(path: &Path, header: &[&str], rows: F) -> Result<Vec<u8>, OutputError>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err(path))?;
    rows(&mut w).map_err(csv_err(path))?;
    w.into_inner().map_err(|e| OutputError::Io { path: path.to_path_buf(), source: e.into_error() })
}

/// Writes every `stride`-th step of the population mean series.
pub fn write_series(path: &Path, agg: &ConditionAggregate, stride: usize) -> Result<(), OutputError> {
    let means: Vec<Vec<f64>> = Measure::ALL.iter().map(|&m| agg.mean_series(m)).collect();
    let bytes = to_bytes(path, &SERIES_HEADER, |w| {
        for step in (0..agg.horizon).step_by(stride.max(1)) {
            let mut row = vec![step.to_string()];
            row.extend(means.iter().map(|series| fmt_f64(series[step])));
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}

pub fn write_agents(path: &Path, agg: &ConditionAggregate) -> Result<(), OutputError> {
    let columns: Vec<Option<usize>> =
        PAYOFF_COLUMNS.iter().map(|name| agg.payoff_names.iter().position(|n| n == name)).collect();
    let bytes = to_bytes(path, &AGENTS_HEADER, |w| {
        for a in &agg.agents {
            let mut row = vec![a.agent_id.to_string()];
            row.extend(columns.iter().map(|c| c.map_or(0, |i| a.picks[i]).to_string()));
            row.extend([a.total_reward, a.params.gamma, a.params.beta, a.params.init_offset].map(fmt_f64));
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub step: usize,
    pub mean_joy: f64,
    pub mean_distress: f64,
    pub mean_fear: f64,
    pub mean_reward: f64,
}

impl SeriesRow {
    pub fn get(&self, measure: Measure) -> f64 {
        match measure {
            Measure::Joy => self.mean_joy,
            Measure::Distress => self.mean_distress,
            Measure::Fear => self.mean_fear,
            Measure::Reward => self.mean_reward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRow {
    pub agent_id: u64,
    #[serde(rename = "picks_A")]
    pub picks_a: u64,
    #[serde(rename = "picks_B")]
    pub picks_b: u64,
    #[serde(rename = "picks_C")]
    pub picks_c: u64,
    pub total_reward: f64,
    pub gamma: f64,
    pub beta: f64,
    pub init_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Incomplete,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub condition: String,
    pub status: Status,
    pub series_file: String,
    pub agents_file: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub engine_version: String,
    pub n_agents: usize,
    pub horizon: usize,
    pub failed_trials: usize,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let found: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    if found != header {
        return Err(OutputError::Header { path: path.to_path_buf(), found });
    }
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesRow>, OutputError> {
    read_rows(path, &SERIES_HEADER)
}

pub fn read_agents(path: &Path) -> Result<Vec<AgentRow>, OutputError> {
    read_rows(path, &AGENTS_HEADER)
}

/// Rows of `manifest.csv`, one per condition, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    /// Reads `dir/manifest.csv`, or starts empty if it does not exist.
    pub fn load(dir: &Path) -> Result<Self, OutputError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        Ok(Self { rows: read_rows(&path, &MANIFEST_HEADER)? })
    }

    pub fn get(&self, condition: &str) -> Option<&ManifestRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }

    /// Replaces the row of `row.condition` or appends it.
    pub fn upsert(&mut self, row: ManifestRow) {
        match self.rows.iter_mut().find(|r| r.condition == row.condition) {
            Some(slot) => *slot = row,
            None => self.rows.push(row),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), OutputError> {
        let path = dir.join(MANIFEST_FILE);
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(csv_err(&path))?;
        }
        if self.rows.is_empty() {
            w.write_record(MANIFEST_HEADER).map_err(csv_err(&path))?;
        }
        let bytes = w.into_inner().map_err(|e| OutputError::Io { path: path.clone(), source: e.into_error() })?;
        write_atomic(&path, &bytes)
    }
}

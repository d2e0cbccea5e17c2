//! Runs the conditions of an experiment config and writes their CSVs.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{agents_path, series_path, write_agents, write_series, Manifest, ManifestRow, OutputError, Status};
use crate::population::{run_condition, PopulationError};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error("cannot create output directory {path}: {source}")]
    OutDir { path: String, source: std::io::Error },
}

impl RunError {
    /// 1 for problems with the config, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub name: String,
    pub n_agents: usize,
    pub failed_trials: usize,
}

/// Runs every condition of `cfg`, or only `only`, writing into `out`.
///
/// A condition is listed as `incomplete` in the manifest before its files are
/// written and flipped to `complete` once both are in place.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, only: Option<&str>) -> Result<Vec<ConditionReport>, RunError> {
    cfg.validate()?;
    let conditions: Vec<_> = match only {
        Some(name) => vec![cfg.condition(name).ok_or_else(|| ConfigError::Invalid {
            field: "condition".into(),
            reason: format!("no condition named `{name}` in `{}`", cfg.name),
        })?],
        None => cfg.conditions.iter().collect(),
    };
    let pops = conditions
        .iter()
        .map(|c| cfg.population_config(c))
        .collect::<Result<Vec<_>, _>>()?;

    fs::create_dir_all(out).map_err(|e| RunError::OutDir { path: out.display().to_string(), source: e })?;
    let mut manifest = Manifest::load(out)?;
    let hash = cfg.hash();
    let mut reports = Vec::with_capacity(conditions.len());
    for (cond, pop) in conditions.iter().zip(&pops) {
        let file_name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let series = series_path(out, &cond.name);
        let agents = agents_path(out, &cond.name);
        let mut row = ManifestRow {
            condition: cond.name.clone(),
            status: Status::Incomplete,
            series_file: file_name(&series),
            agents_file: file_name(&agents),
            config_hash: hash.clone(),
            master_seed: cfg.master_seed,
            engine_version: ENGINE_VERSION.to_string(),
            n_agents: pop.n_agents,
            horizon: pop.horizon,
            failed_trials: 0,
        };
        manifest.upsert(row.clone());
        manifest.save(out)?;

        let agg = run_condition(pop)?;
        write_series(&series, &agg, cfg.series_stride)?;
        write_agents(&agents, &agg)?;

        row.status = Status::Complete;
        row.failed_trials = agg.failures.len();
        manifest.upsert(row);
        manifest.save(out)?;
        reports.push(ConditionReport { name: cond.name.clone(), n_agents: agg.n_agents(), failed_trials: agg.failures.len() });
    }
    Ok(reports)
}

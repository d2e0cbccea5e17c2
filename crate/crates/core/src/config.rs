//! Experiment configuration files (TOML) and the built-in presets.
//!
//! A config names a batch of conditions. Each condition pairs a task (built-in
//! id or a `[[tasks]]` entry) with a bias mode; population and agent settings
//! are shared by every condition of the file.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::behavior::{AgentOptions, FearMode};
use crate::gridworld::{build_task, TaskId, TaskOverrides, TaskSpec};
use crate::population::PopulationConfig;
use crate::valuation::{BiasMode, SignedWeighting};

/// Payoff names that have a column in the agents CSV.
pub const PAYOFF_COLUMNS: [&str; 3] = ["A", "B", "C"];

pub const PRESETS: [(&str, &str); 4] = [
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("desk", include_str!("../presets/desk.toml")),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

/// Whether agents select actions on bias-consistent or plain expected Q values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasQ {
    #[default]
    Biased,
    Unbiased,
}

impl FromStr for BiasQ {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "biased" => Ok(BiasQ::Biased),
            "unbiased" => Ok(BiasQ::Unbiased),
            other => Err(format!("unknown Q mode `{other}` (expected biased|unbiased)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationSection {
    pub agents: usize,
    pub steps: usize,
    pub gamma_mean: f64,
    pub gamma_std: f64,
    pub beta_mean: f64,
    pub beta_std: f64,
    pub init_value_mean: f64,
    pub init_value_std: f64,
    /// Draw an independent initial value per state instead of one per agent.
    pub per_state_init: bool,
    pub exp_temperature: f64,
}

impl Default for PopulationSection {
    fn default() -> Self {
        Self {
            agents: 5000,
            steps: 5000,
            gamma_mean: 0.9,
            gamma_std: 0.01,
            beta_mean: 10.0,
            beta_std: 1.0,
            init_value_mean: 0.0,
            init_value_std: 0.1,
            per_state_init: false,
            exp_temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub fear_mode: FearMode,
    pub bias_q: BiasQ,
    pub signed_weighting: SignedWeighting,
}

impl AgentSection {
    pub fn options(&self) -> AgentOptions {
        AgentOptions {
            fear_mode: self.fear_mode,
            biased_q: self.bias_q == BiasQ::Biased,
            signed_weighting: self.signed_weighting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    pub name: String,
    /// A built-in task id or the name of a `[[tasks]]` entry.
    pub task: String,
    pub bias: BiasMode,
    #[serde(default)]
    pub overrides: TaskOverrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub master_seed: u64,
    /// Write every `series_stride`-th step to the series CSV.
    #[serde(default = "default_stride")]
    pub series_stride: usize,
    #[serde(default)]
    pub population: PopulationSection,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
    pub conditions: Vec<ConditionSpec>,
}

fn default_stride() -> usize {
    1
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| ConfigError::Parse { origin: origin.to_string(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Option<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, text)| Self::from_toml(text, n).expect("built-in presets are valid"))
    }

    /// Loads `source` as a file path, falling back to a preset name.
    pub fn load(source: &str) -> Result<Self, ConfigError> {
        let path = Path::new(source);
        if path.exists() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::Io { path: source.to_string(), source: e })?;
            return Self::from_toml(&text, source);
        }
        Self::preset(source).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            invalid("config", format!("`{source}` is neither a file nor a preset ({})", names.join(", ")))
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.series_stride == 0 {
            return Err(invalid("series_stride", "must be at least 1"));
        }
        let mut task_names = HashSet::new();
        for (i, task) in self.tasks.iter().enumerate() {
            let field = format!("tasks[{i}]");
            if !task_names.insert(task.name.as_str()) {
                return Err(invalid(field, format!("duplicate task name `{}`", task.name)));
            }
            if TaskId::from_str(&task.name).is_ok() {
                return Err(invalid(field, format!("`{}` shadows a built-in task", task.name)));
            }
            task.validate().map_err(|e| invalid(&field, e.to_string()))?;
            check_payoff_names(task).map_err(|reason| invalid(field, reason))?;
        }
        if self.conditions.is_empty() {
            return Err(invalid("conditions", "at least one condition is required"));
        }
        let mut names = HashSet::new();
        for (i, cond) in self.conditions.iter().enumerate() {
            let field = format!("conditions[{i}]");
            if !valid_name(&cond.name) {
                return Err(invalid(format!("{field}.name"), "use letters, digits, `_` or `-` only"));
            }
            if !names.insert(cond.name.as_str()) {
                return Err(invalid(format!("{field}.name"), format!("duplicate condition name `{}`", cond.name)));
            }
            self.population_config(cond)
                .map_err(|e| match e {
                    ConfigError::Invalid { field: f, reason } => invalid(format!("{field}.{f}"), reason),
                    other => other,
                })?
                .validate()
                .map_err(|e| invalid("population", e.to_string()))?;
        }
        Ok(())
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionSpec> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// The fully resolved task of a condition.
    pub fn resolve_task(&self, cond: &ConditionSpec) -> Result<TaskSpec, ConfigError> {
        let mut task = match self.tasks.iter().find(|t| t.name == cond.task) {
            Some(custom) => custom.clone(),
            None => {
                let id = TaskId::from_str(&cond.task).map_err(|e| invalid("task", e.to_string()))?;
                build_task(id, &TaskOverrides::default()).map_err(|e| invalid("task", e.to_string()))?
            }
        };
        task.apply(&cond.overrides).map_err(|e| invalid("overrides", e.to_string()))?;
        check_payoff_names(&task).map_err(|reason| invalid("overrides", reason))?;
        Ok(task)
    }

    pub fn population_config(&self, cond: &ConditionSpec) -> Result<PopulationConfig, ConfigError> {
        let task = Arc::new(self.resolve_task(cond)?);
        let p = &self.population;
        let mut cfg = PopulationConfig::new(task, cond.bias, p.agents, p.steps, self.master_seed);
        cfg.gamma_mean = p.gamma_mean;
        cfg.gamma_std = p.gamma_std;
        cfg.beta_mean = p.beta_mean;
        cfg.beta_std = p.beta_std;
        cfg.init_value_mean = p.init_value_mean;
        cfg.init_value_std = p.init_value_std;
        cfg.per_state_init = p.per_state_init;
        cfg.exp_temperature = p.exp_temperature;
        cfg.options = self.agent.options();
        Ok(cfg)
    }

    /// SHA-256 of the canonical TOML form of the effective config.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check_payoff_names(task: &TaskSpec) -> Result<(), String> {
    match task.payoffs.iter().find(|p| !PAYOFF_COLUMNS.contains(&p.name.as_str())) {
        Some(p) => Err(format!("payoff `{}` has no output column (use A, B or C)", p.name)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        name = "t"
        master_seed = 3
        [[conditions]]
        name = "g"
        task = "gambling"
        bias = "realistic"
    "#;

    #[test]
    fn presets_parse() {
        let fig2 = ExperimentConfig::preset("fig2").unwrap();
        assert_eq!(fig2.conditions.len(), 12);
        assert_eq!(fig2.population.agents, 5000);
        assert_eq!(ExperimentConfig::preset("desk").unwrap().population.agents, 500);
        assert!(ExperimentConfig::preset("fig3").is_some());
        assert!(ExperimentConfig::preset("fig4").is_some());
        assert!(ExperimentConfig::preset("nope").is_none());
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, "t").unwrap();
        assert_eq!(cfg.series_stride, 1);
        assert_eq!(cfg.population, PopulationSection::default());
        assert_eq!(cfg.agent.options(), AgentOptions::default());
    }

    #[test]
    fn duplicate_condition_names_rejected() {
        let text = format!("{MINIMAL}\n[[conditions]]\nname = \"g\"\ntask = \"trade_off\"\nbias = \"realistic\"\n");
        let err = ExperimentConfig::from_toml(&text, "t").unwrap_err();
        assert!(err.to_string().contains("duplicate condition name"), "{err}");
    }

    #[test]
    fn unknown_fields_and_tasks_rejected() {
        let err = ExperimentConfig::from_toml(&format!("bogus = 1\n{MINIMAL}"), "t").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }), "{err}");
        let err = ExperimentConfig::from_toml(&MINIMAL.replace("gambling", "roulette"), "t").unwrap_err();
        assert!(err.to_string().contains("roulette"), "{err}");
    }

    #[test]
    fn zero_agents_rejected() {
        let text = MINIMAL.replace("master_seed = 3", "master_seed = 3\n[population]\nagents = 0");
        let err = ExperimentConfig::from_toml(&text, "t").unwrap_err();
        assert!(err.to_string().contains("n_agents"), "{err}");
    }

    #[test]
    fn payoff_override_applies() {
        let text = format!(
            "{MINIMAL}\n[conditions.overrides.payoffs.B]\noutcomes = [{{ label = \"B\", probability = 1.0, reward = 0.5 }}]\n"
        );
        let cfg = ExperimentConfig::from_toml(&text, "t").unwrap();
        let task = cfg.resolve_task(&cfg.conditions[0]).unwrap();
        assert_eq!(task.payoffs[1].spec.expected_reward(), 0.5);
        let bad = text.replace("probability = 1.0", "probability = 0.5");
        assert!(ExperimentConfig::from_toml(&bad, "t").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_toml(MINIMAL, "t").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.master_seed = 4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}

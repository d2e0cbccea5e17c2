//! Tabular model-based TD learners with optimistic risk perception,
//! simulated in populations on small T-maze tasks.

pub mod behavior;
pub mod config;
pub mod experiment;
pub mod gridworld;
pub mod model;
pub mod oracle;
pub mod output;
pub mod population;
pub mod valuation;

pub use config::ExperimentConfig;
pub use experiment::run_experiment;
pub use behavior::{boltzmann_select, Agent, AgentOptions, FearMode, StepLog};
pub use gridworld::{build_task, Action, Cell, TaskId, TaskOverrides, TaskSpec};
pub use population::{run_condition, ConditionAggregate, Measure, PopulationConfig};
pub use valuation::{AgentParams, Backup, BiasMode, SignedWeighting, ValueTable};

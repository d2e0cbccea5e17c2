//! Population sampling, parallel trials and per-condition aggregation.
//!
//! Each agent draws from its own ChaCha streams keyed by
//! (master seed, agent index, purpose), so a condition gives the same result
//! whatever the thread count. Aggregates add per-step series in 64.64 fixed
//! point, which makes `merge` exactly associative and commutative.

use std::ops::{Add, AddAssign};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{Agent, AgentOptions, StepLog};
use crate::gridworld::{TaskSpec, WorldState};
use crate::valuation::{AgentParams, BiasMode, ValueTable};

pub const GAMMA_RANGE: (f64, f64) = (0.5, 0.999);

#[derive(Debug, Error, PartialEq)]
pub enum PopulationError {
    #[error("invalid population config: {0}")]
    InvalidConfig(String),
    #[error("cannot merge aggregates with different {0}")]
    Mismatch(&'static str),
}

/// Independent random streams of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    Params = 1,
    InitValues = 2,
    Policy = 3,
    World = 4,
}

pub fn agent_stream(master_seed: u64, agent_index: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&agent_index.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(purpose as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationConfig {
    pub n_agents: usize,
    pub horizon: usize,
    pub gamma_mean: f64,
    pub gamma_std: f64,
    pub beta_mean: f64,
    pub beta_std: f64,
    pub init_value_mean: f64,
    pub init_value_std: f64,
    /// Draw an independent initial value per state instead of one per agent.
    pub per_state_init: bool,
    pub bias: BiasMode,
    pub exp_temperature: f64,
    pub options: AgentOptions,
    pub task: Arc<TaskSpec>,
    pub master_seed: u64,
}

impl PopulationConfig {
    /// Population defaults: γ ~ N(0.9, 0.01), β ~ N(10, 1), V₀ ~ N(0, 0.1).
    pub fn new(task: Arc<TaskSpec>, bias: BiasMode, n_agents: usize, horizon: usize, master_seed: u64) -> Self {
        Self {
            n_agents,
            horizon,
            gamma_mean: 0.9,
            gamma_std: 0.01,
            beta_mean: 10.0,
            beta_std: 1.0,
            init_value_mean: 0.0,
            init_value_std: 0.1,
            per_state_init: false,
            bias,
            exp_temperature: 1.0,
            options: AgentOptions::default(),
            task,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        let bad = |m: String| Err(PopulationError::InvalidConfig(m));
        if self.n_agents < 1 {
            return bad("n_agents must be at least 1".into());
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        for (name, v) in [("gamma_std", self.gamma_std), ("beta_std", self.beta_std), ("init_value_std", self.init_value_std)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite value >= 0"));
            }
        }
        if !(self.gamma_mean > 0.0 && self.gamma_mean < 1.0) {
            return bad("gamma_mean must lie in (0,1)".into());
        }
        if !(self.beta_mean >= 0.0 && self.beta_mean.is_finite()) {
            return bad("beta_mean must be >= 0".into());
        }
        if !(self.exp_temperature > 0.0 && self.exp_temperature.is_finite()) {
            return bad("exp_temperature must be > 0".into());
        }
        Ok(())
    }
}

fn normal<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> f64 {
    if std == 0.0 {
        return mean;
    }
    Normal::new(mean, std).expect("validated std").sample(rng)
}

/// Draws one agent's parameters from its own parameter stream.
pub fn sample_agent(cfg: &PopulationConfig, agent_index: u64) -> AgentParams {
    let mut rng = agent_stream(cfg.master_seed, agent_index, StreamPurpose::Params);
    let gamma = normal(cfg.gamma_mean, cfg.gamma_std, &mut rng).clamp(GAMMA_RANGE.0, GAMMA_RANGE.1);
    let beta = normal(cfg.beta_mean, cfg.beta_std, &mut rng).max(0.0);
    let init_offset = normal(cfg.init_value_mean, cfg.init_value_std, &mut rng);
    AgentParams {
        gamma,
        // random, enforced actions: selection is uniform
        beta: if cfg.task.forced_random_actions { 0.0 } else { beta },
        init_offset,
        bias: cfg.bias,
        exp_temperature: cfg.exp_temperature,
    }
}

/// One agent's lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub steps: Vec<StepLog>,
    /// Consumption count per payoff, indexed like `TaskSpec::payoffs`.
    pub picks: Vec<u64>,
    pub total_reward: f64,
}

/// Random streams driving one trial.
pub struct TrialStreams<P, W> {
    pub policy: P,
    pub world: W,
}

/// Runs one trial of `horizon` steps on a fresh agent.
pub fn run_trial<P: Rng, W: Rng>(
    agent: Agent,
    task: &TaskSpec,
    horizon: usize,
    mut streams: TrialStreams<P, W>,
) -> TrialRecord {
    let mut agent = agent;
    let mut picks = vec![0u64; task.payoffs.len()];
    let mut total_reward = 0.0;
    let mut steps = Vec::with_capacity(horizon);
    if horizon == 0 {
        return TrialRecord { steps, picks, total_reward };
    }
    let mut world = WorldState::new(task, &mut streams.world);
    for _ in 0..horizon {
        let log = agent.step(task, &mut world, &mut streams.policy, &mut streams.world);
        total_reward += log.reward;
        if let Some(p) = log.consumed {
            picks[p] += 1;
        }
        steps.push(log);
    }
    TrialRecord { steps, picks, total_reward }
}

/// Builds agent `agent_index` of a condition and runs its trial.
pub fn run_agent(cfg: &PopulationConfig, agent_index: u64) -> (AgentParams, TrialRecord) {
    let params = sample_agent(cfg, agent_index);
    let task = cfg.task.as_ref();
    let agent = if cfg.per_state_init {
        let mut rng = agent_stream(cfg.master_seed, agent_index, StreamPurpose::InitValues);
        let probe = Agent::new(task, params, cfg.options);
        let states = probe.states();
        let initial = (0..states.len())
            .map(|s| if states.is_terminal(s) { 0.0 } else { normal(cfg.init_value_mean, cfg.init_value_std, &mut rng) })
            .collect();
        Agent::with_values(task, params, cfg.options, ValueTable::with_initial_values(initial, params.init_offset))
    } else {
        Agent::new(task, params, cfg.options)
    };
    let streams = TrialStreams {
        policy: agent_stream(cfg.master_seed, agent_index, StreamPurpose::Policy),
        world: agent_stream(cfg.master_seed, agent_index, StreamPurpose::World),
    };
    let record = run_trial(agent, task, cfg.horizon, streams);
    (params, record)
}

/// Runs every agent of a condition in parallel and maps each finished trial
/// through `f`; results come back in agent order. A trial that panics is
/// reported as `Err` with its message instead of aborting the condition.
pub fn map_agents<T, F>(cfg: &PopulationConfig, f: F) -> Vec<Result<T, String>>
where
    T: Send,
    F: Fn(u64, &AgentParams, &TrialRecord) -> T + Sync,
{
    (0..cfg.n_agents as u64)
        .into_par_iter()
        .map(|i| {
            catch_unwind(AssertUnwindSafe(|| {
                let (params, record) = run_agent(cfg, i);
                f(i, &params, &record)
            }))
            .map_err(panic_message)
        })
        .collect()
}

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "trial panicked".to_string())
}

/// Exact running sum of f64 values in signed 64.64 fixed point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ExactSum(i128);

const FIXED_SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64

impl ExactSum {
    pub fn from_f64(x: f64) -> Self {
        Self((x * FIXED_SCALE).round() as i128)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / FIXED_SCALE
    }
}

impl Add for ExactSum {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl AddAssign for ExactSum {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl AddAssign<f64> for ExactSum {
    fn add_assign(&mut self, rhs: f64) {
        self.0 += Self::from_f64(rhs).0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent_id: u64,
    pub picks: Vec<u64>,
    pub total_reward: f64,
    pub params: AgentParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialFailure {
    pub agent_id: u64,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Joy,
    Distress,
    Fear,
    Reward,
}

impl Measure {
    pub const ALL: [Measure; 4] = [Measure::Joy, Measure::Distress, Measure::Fear, Measure::Reward];

    pub fn of(self, log: &StepLog) -> f64 {
        match self {
            Measure::Joy => log.joy,
            Measure::Distress => log.distress,
            Measure::Fear => log.fear,
            Measure::Reward => log.reward,
        }
    }
}

/// Step-aligned population sums and per-agent outcomes of one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionAggregate {
    pub horizon: usize,
    pub payoff_names: Vec<String>,
    /// Per measure (see `Measure::ALL`), per step: sum over agents.
    sums: [Vec<ExactSum>; 4],
    /// Sorted by agent id.
    pub agents: Vec<AgentSummary>,
    pub failures: Vec<TrialFailure>,
}

impl ConditionAggregate {
    pub fn empty(horizon: usize, payoff_names: Vec<String>) -> Self {
        let zeros = vec![ExactSum::default(); horizon];
        Self {
            horizon,
            payoff_names,
            sums: [zeros.clone(), zeros.clone(), zeros.clone(), zeros],
            agents: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// Aggregate of a single finished trial.
    pub fn from_trial(agent_id: u64, params: &AgentParams, record: &TrialRecord, horizon: usize, payoff_names: Vec<String>) -> Self {
        let mut agg = Self::empty(horizon, payoff_names);
        agg.absorb(agent_id, params, record);
        agg
    }

    /// Adds one finished trial in place. Agents are re-sorted by `finish`.
    fn absorb(&mut self, agent_id: u64, params: &AgentParams, record: &TrialRecord) {
        for (m, series) in Measure::ALL.iter().zip(self.sums.iter_mut()) {
            for (slot, log) in series.iter_mut().zip(&record.steps) {
                *slot += m.of(log);
            }
        }
        self.agents.push(AgentSummary {
            agent_id,
            picks: record.picks.clone(),
            total_reward: record.total_reward,
            params: *params,
        });
    }

    fn finish(mut self) -> Self {
        self.agents.sort_by_key(|a| a.agent_id);
        self.failures.sort_by_key(|f| f.agent_id);
        self
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Combines two partial aggregates. Exact: the result does not depend on
    /// the order or grouping of merges.
    pub fn merge(mut self, other: Self) -> Result<Self, PopulationError> {
        if self.horizon != other.horizon {
            return Err(PopulationError::Mismatch("horizons"));
        }
        if self.payoff_names != other.payoff_names {
            return Err(PopulationError::Mismatch("payoffs"));
        }
        for (mine, theirs) in self.sums.iter_mut().zip(other.sums) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
        self.agents.extend(other.agents);
        self.agents.sort_by_key(|a| a.agent_id);
        self.failures.extend(other.failures);
        self.failures.sort_by_key(|f| f.agent_id);
        Ok(self)
    }

    pub fn sum_series(&self, measure: Measure) -> &[ExactSum] {
        &self.sums[measure as usize]
    }

    /// Per-step population mean of `measure`.
    pub fn mean_series(&self, measure: Measure) -> Vec<f64> {
        let n = self.n_agents() as f64;
        self.sum_series(measure).iter().map(|s| s.to_f64() / n).collect()
    }

    /// Mean of `measure` over steps `range` and all agents.
    pub fn window_mean(&self, measure: Measure, range: std::ops::Range<usize>) -> f64 {
        let len = range.len() as f64;
        let total = self.sum_series(measure)[range].iter().fold(ExactSum::default(), |acc, &x| acc + x);
        total.to_f64() / (len * self.n_agents() as f64)
    }

    pub fn picks_of(&self, payoff: &str) -> Option<Vec<u64>> {
        let i = self.payoff_names.iter().position(|n| n == payoff)?;
        Some(self.agents.iter().map(|a| a.picks[i]).collect())
    }

    /// Histogram of per-agent pick counts for `payoff`; bin `k` covers
    /// `[k·width, (k+1)·width)`.
    pub fn histogram(&self, payoff: &str, bin_width: u64) -> Option<Vec<usize>> {
        let picks = self.picks_of(payoff)?;
        let width = bin_width.max(1);
        let bins = picks.iter().map(|p| p / width).max().map_or(0, |m| m as usize + 1);
        let mut hist = vec![0usize; bins];
        for p in picks {
            hist[(p / width) as usize] += 1;
        }
        Some(hist)
    }
}

/// Runs a whole condition. Trials are folded into per-worker partial
/// aggregates as they finish, so memory stays bounded by the worker count.
pub fn run_condition(cfg: &PopulationConfig) -> Result<ConditionAggregate, PopulationError> {
    cfg.validate()?;
    let names: Vec<String> = cfg.task.payoffs.iter().map(|p| p.name.clone()).collect();
    let empty = || ConditionAggregate::empty(cfg.horizon, names.clone());
    let agg = (0..cfg.n_agents as u64)
        .into_par_iter()
        .fold(empty, |mut acc, id| {
            match catch_unwind(AssertUnwindSafe(|| run_agent(cfg, id))) {
                Ok((params, record)) => acc.absorb(id, &params, &record),
                Err(e) => acc.failures.push(TrialFailure { agent_id: id, message: panic_message(e) }),
            }
            acc
        })
        .reduce(empty, |a, b| a.merge(b).expect("partials share horizon and payoffs"));
    Ok(agg.finish())
}

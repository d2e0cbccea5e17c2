//! Boltzmann action selection and the per-step agent loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gridworld::{step, Action, Cell, StateIndex, TaskSpec, WorldState};
use crate::model::EmpiricalModel;
use crate::valuation::{AgentParams, Backup, BiasMode, SignedWeighting, ValueTable};

/// Selection probabilities p(a) ∝ exp(β Q(a)), shifted by the maximum so
/// large β·Q cannot overflow.
pub fn boltzmann_probs(qs: &[f64], beta: f64) -> Vec<f64> {
    let top = qs.iter().map(|q| beta * q).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = qs.iter().map(|q| (beta * q - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Samples an action from the Boltzmann distribution over `qs`.
///
/// Panics if `qs` is empty.
pub fn boltzmann_select<R: Rng + ?Sized>(qs: &[(Action, f64)], beta: f64, rng: &mut R) -> Action {
    assert!(!qs.is_empty(), "boltzmann_select needs at least one action");
    let values: Vec<f64> = qs.iter().map(|&(_, q)| q).collect();
    let probs = boltzmann_probs(&values, beta);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (&(a, _), p) in qs.iter().zip(probs) {
        acc += p;
        if u < acc {
            return a;
        }
    }
    qs[qs.len() - 1].0
}

/// How fear is read off the value tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FearMode {
    /// −V₋(s), the predicted future punishment.
    #[default]
    Signed,
    /// −min(V(s), 0) on the agent's own (possibly biased) value.
    Raw,
}

impl std::str::FromStr for FearMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "signed" => Ok(FearMode::Signed),
            "raw" => Ok(FearMode::Raw),
            other => Err(format!("unknown fear mode `{other}` (expected signed|raw)")),
        }
    }
}

/// Switches that select between alternative readings of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOptions {
    pub fear_mode: FearMode,
    /// Select actions on bias-consistent Q values (true) or on the plain
    /// expectation for every bias (false).
    pub biased_q: bool,
    pub signed_weighting: SignedWeighting,
}

impl Default for AgentOptions {
    fn default() -> Self {
        Self { fear_mode: FearMode::Signed, biased_q: true, signed_weighting: SignedWeighting::default() }
    }
}

/// One logged step. Affect is computed for the state the agent departed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step_index: u64,
    pub state: Cell,
    pub action: Action,
    pub reward: f64,
    pub delta: f64,
    pub joy: f64,
    pub distress: f64,
    pub fear: f64,
    pub hope: f64,
    /// Index of the payoff consumed on this step, if any.
    pub consumed: Option<usize>,
}

/// Everything one simulated individual owns during a trial.
#[derive(Debug, Clone)]
pub struct Agent {
    pub params: AgentParams,
    pub options: AgentOptions,
    pub model: EmpiricalModel,
    pub values: ValueTable,
    states: StateIndex,
    backup: Backup,
}

impl Agent {
    pub fn new(task: &TaskSpec, params: AgentParams, options: AgentOptions) -> Self {
        let states = StateIndex::new(task);
        let values = ValueTable::new(states.len(), params.init_offset, |s| states.is_terminal(s));
        Self::with_values(task, params, options, values)
    }

    /// Starts from a caller-supplied value table (e.g. per-state noise).
    pub fn with_values(task: &TaskSpec, params: AgentParams, options: AgentOptions, values: ValueTable) -> Self {
        let states = StateIndex::new(task);
        assert_eq!(values.len(), states.len(), "value table does not match the task's states");
        Self { params, options, model: EmpiricalModel::new(states.len()), values, states, backup: params.backup() }
    }

    pub fn states(&self) -> &StateIndex {
        &self.states
    }

    fn selection_values(&self, s: usize) -> [(Action, f64); Action::COUNT] {
        let bias = if self.options.biased_q { self.params.bias } else { BiasMode::Realistic };
        let qs = self.backup.q_values(bias, &self.model, &self.values, s);
        Action::ALL.map(|a| (a, qs[a.index()]))
    }

    /// select → act → observe → recompute V(s) → log affect → respawn.
    pub fn step<P: Rng + ?Sized, W: Rng + ?Sized>(
        &mut self,
        task: &TaskSpec,
        world: &mut WorldState,
        policy_rng: &mut P,
        world_rng: &mut W,
    ) -> StepLog {
        let step_index = world.step_count;
        let cell = world.agent_pos;
        let s = task.cell_index(cell).expect("agent outside the task's cells");

        let requested = boltzmann_select(&self.selection_values(s), self.params.beta, policy_rng);
        let result = step(task, world, requested, world_rng);
        let next = match result.consumed {
            Some(c) => self.states.terminal(c),
            None => task.cell_index(result.arrived).expect("moves stay inside the task"),
        };

        self.model.observe(s, result.action, next, result.reward);
        let delta = self.backup.update(&self.model, &mut self.values, s, self.options.signed_weighting);
        let fear = match self.options.fear_mode {
            FearMode::Signed => -self.values.v_minus(s),
            FearMode::Raw => -self.values.value(s).min(0.0),
        };

        StepLog {
            step_index,
            state: cell,
            action: result.action,
            reward: result.reward,
            delta,
            joy: delta.max(0.0),
            distress: (-delta).max(0.0),
            fear,
            hope: self.values.hope(s),
            consumed: result.consumed.map(|c| c.payoff),
        }
    }
}

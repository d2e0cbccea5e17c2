//! Value recomputation under the four risk-perception modes.
//!
//! Every visit recomputes V(s) from the agent's empirical model instead of
//! nudging it with a learning rate. The modes differ only in how action and
//! outcome probabilities are weighted:
//!
//! * realistic: V(s) = Σ_a π̂(a|s) Σ_s' P̂(s'|s,a) (R̂ + γ V(s'))
//! * action-optimistic: V(s) = max_a Σ_s' P̂(s'|s,a) (R̂ + γ V(s'))
//! * outcome-optimistic: V(s) = max_(a,s') (R̂ + γ V(s'))
//! * exp-weighted: realistic, with P̂ reweighted by exp((R̂ + γ V(s')) / τ)
//!
//! The TD error is the change V_new(s) - V(s). A signed decomposition V₊/V₋
//! splits rewards by sign and is maintained alongside V for hope and fear.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::Action;
use crate::model::{EmpiricalModel, Successor};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown {kind} `{value}`")]
pub struct ParseModeError {
    kind: &'static str,
    value: String,
}

macro_rules! named_enum {
    ($ty:ident, $kind:literal, { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = ParseModeError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    _ => Err(ParseModeError { kind: $kind, value: s.to_string() }),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    Realistic,
    ActionOptimistic,
    OutcomeOptimistic,
    ExpWeighted,
}

named_enum!(BiasMode, "bias mode", {
    Realistic => "realistic",
    ActionOptimistic => "action_optimistic",
    OutcomeOptimistic => "outcome_optimistic",
    ExpWeighted => "exp_weighted",
});

impl BiasMode {
    pub const ALL: [BiasMode; 4] =
        [BiasMode::Realistic, BiasMode::ActionOptimistic, BiasMode::OutcomeOptimistic, BiasMode::ExpWeighted];
}

/// Which action weighting feeds the V₊/V₋ recomputation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignedWeighting {
    /// Historical action frequencies π̂ for every agent, whatever its bias.
    Behavior,
    /// The action weighting implied by the agent's bias: π̂ for realistic and
    /// exp-weighted agents, the single best action for the control-biased
    /// modes. Outcome odds are always the empirical P̂.
    #[default]
    BiasConsistent,
}

named_enum!(SignedWeighting, "signed weighting", {
    Behavior => "behavior",
    BiasConsistent => "bias_consistent",
});

/// Per-agent learner parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub gamma: f64,
    pub beta: f64,
    pub init_offset: f64,
    pub bias: BiasMode,
    /// Temperature τ of the exp-weighted mode; ignored by the others.
    pub exp_temperature: f64,
}

impl AgentParams {
    pub fn backup(&self) -> Backup {
        Backup { bias: self.bias, gamma: self.gamma, temperature: self.exp_temperature }
    }
}

/// V(s) with its signed decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    v: Vec<f64>,
    v_plus: Vec<f64>,
    v_minus: Vec<f64>,
    init_offset: f64,
}

impl ValueTable {
    /// Every non-terminal state starts at `init_offset`; terminals hold 0.
    pub fn new(n_states: usize, init_offset: f64, is_terminal: impl Fn(usize) -> bool) -> Self {
        let v = (0..n_states).map(|s| if is_terminal(s) { 0.0 } else { init_offset }).collect();
        Self { v, v_plus: vec![0.0; n_states], v_minus: vec![0.0; n_states], init_offset }
    }

    /// Per-state initial values. `init_offset` still serves as the value of
    /// untried actions.
    pub fn with_initial_values(initial: Vec<f64>, init_offset: f64) -> Self {
        let n = initial.len();
        Self { v: initial, v_plus: vec![0.0; n], v_minus: vec![0.0; n], init_offset }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn init_offset(&self) -> f64 {
        self.init_offset
    }

    pub fn value(&self, s: usize) -> f64 {
        self.v[s]
    }

    pub fn hope(&self, s: usize) -> f64 {
        self.v_plus[s]
    }

    /// V₋(s), always ≤ 0.
    pub fn v_minus(&self, s: usize) -> f64 {
        self.v_minus[s]
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn set_value(&mut self, s: usize, value: f64) {
        self.v[s] = value;
    }

    pub fn set_signed(&mut self, s: usize, plus: f64, minus: f64) {
        self.v_plus[s] = plus.max(0.0);
        self.v_minus[s] = minus.min(0.0);
    }
}

/// The TD error of one recomputation.
pub fn delta(v_old: f64, v_new: f64) -> f64 {
    v_new - v_old
}

/// How one agent backs up values: bias mode, discount and, for the
/// exp-weighted mode, its temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backup {
    pub bias: BiasMode,
    pub gamma: f64,
    pub temperature: f64,
}

impl Backup {
    pub fn new(bias: BiasMode, gamma: f64) -> Self {
        Self { bias, gamma, temperature: 1.0 }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    fn outcome_value(&self, vt: &ValueTable, succ: &Successor) -> f64 {
        succ.mean_reward() + self.gamma * vt.value(succ.state)
    }

    /// Σ P̂ (R̂ + γ V(s')) with weights proportional to the transition counts.
    fn expected(&self, vt: &ValueTable, row: &[Successor]) -> f64 {
        let total: u64 = row.iter().map(|s| s.count).sum();
        let total = total as f64;
        row.iter().map(|succ| (succ.count as f64 / total) * self.outcome_value(vt, succ)).sum()
    }

    /// Like `expected`, with every count scaled by exp(outcome value / τ).
    fn exp_weighted(&self, vt: &ValueTable, row: &[Successor]) -> f64 {
        let values: Vec<f64> = row.iter().map(|succ| self.outcome_value(vt, succ)).collect();
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = row
            .iter()
            .zip(&values)
            .map(|(succ, &x)| succ.count as f64 * ((x - top) / self.temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter().zip(&values).map(|(&w, &x)| (w / total) * x).sum()
    }

    fn best_outcome(&self, vt: &ValueTable, row: &[Successor]) -> f64 {
        row.iter().map(|succ| self.outcome_value(vt, succ)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Action value as perceived under `bias`. Untried actions are worth
    /// the agent's initial value, like a fresh state.
    pub fn q_value_as(&self, bias: BiasMode, m: &EmpiricalModel, vt: &ValueTable, s: usize, a: Action) -> f64 {
        let row = m.successors(s, a);
        if row.is_empty() {
            return vt.init_offset();
        }
        match bias {
            BiasMode::Realistic | BiasMode::ActionOptimistic => self.expected(vt, row),
            BiasMode::OutcomeOptimistic => self.best_outcome(vt, row),
            BiasMode::ExpWeighted => self.exp_weighted(vt, row),
        }
    }

    /// Bias-consistent action value.
    pub fn q_value(&self, m: &EmpiricalModel, vt: &ValueTable, s: usize, a: Action) -> f64 {
        self.q_value_as(self.bias, m, vt, s, a)
    }

    /// Action values of all four actions, in index order.
    pub fn q_values(&self, bias: BiasMode, m: &EmpiricalModel, vt: &ValueTable, s: usize) -> [f64; Action::COUNT] {
        Action::ALL.map(|a| self.q_value_as(bias, m, vt, s, a))
    }

    /// V_new(s) under the agent's bias. States without any tried action
    /// return the initial value.
    pub fn recompute_value(&self, m: &EmpiricalModel, vt: &ValueTable, s: usize) -> f64 {
        if m.visits(s) == 0 {
            return vt.init_offset();
        }
        match self.bias {
            BiasMode::Realistic | BiasMode::ExpWeighted => m
                .observed_actions(s)
                .map(|a| m.policy_freq(s, a) * self.q_value(m, vt, s, a))
                .sum(),
            BiasMode::ActionOptimistic => m
                .observed_actions(s)
                .map(|a| self.q_value_as(BiasMode::Realistic, m, vt, s, a))
                .fold(f64::NEG_INFINITY, f64::max),
            BiasMode::OutcomeOptimistic => m
                .observed_actions(s)
                .map(|a| self.best_outcome(vt, m.successors(s, a)))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Tried action with the highest bias-consistent value; ties go to the
    /// lowest action index.
    fn greedy_action(&self, m: &EmpiricalModel, vt: &ValueTable, s: usize) -> Option<Action> {
        let mut best: Option<(Action, f64)> = None;
        for a in m.observed_actions(s) {
            let q = self.q_value(m, vt, s, a);
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((a, q));
            }
        }
        best.map(|(a, _)| a)
    }

    /// Recomputes (V₊(s), V₋(s)): the same backup run twice, once on the
    /// positive and once on the negative part of each mean reward, each
    /// bootstrapping from its own table.
    pub fn signed_values(&self, m: &EmpiricalModel, vt: &ValueTable, s: usize, weighting: SignedWeighting) -> (f64, f64) {
        if m.visits(s) == 0 {
            return (vt.hope(s), vt.v_minus(s));
        }
        let gamma = self.gamma;
        let split = |row: &[Successor]| {
            let total = row.iter().map(|x| x.count).sum::<u64>() as f64;
            row.iter().fold((0.0, 0.0), |(plus, minus), succ| {
                let p = succ.count as f64 / total;
                let r = succ.mean_reward();
                (
                    plus + p * (r.max(0.0) + gamma * vt.hope(succ.state)),
                    minus + p * (r.min(0.0) + gamma * vt.v_minus(succ.state)),
                )
            })
        };
        let single_action = match (weighting, self.bias) {
            (SignedWeighting::BiasConsistent, BiasMode::ActionOptimistic | BiasMode::OutcomeOptimistic) => {
                self.greedy_action(m, vt, s)
            }
            _ => None,
        };
        let (plus, minus) = match single_action {
            Some(a) => split(m.successors(s, a)),
            None => m.observed_actions(s).fold((0.0, 0.0), |(plus, minus), a| {
                let pi = m.policy_freq(s, a);
                let (p, n) = split(m.successors(s, a));
                (plus + pi * p, minus + pi * n)
            }),
        };
        (plus.max(0.0), minus.min(0.0))
    }

    /// Recomputes V(s), assigns it and refreshes V₊/V₋. Returns the TD error.
    pub fn update(&self, m: &EmpiricalModel, vt: &mut ValueTable, s: usize, weighting: SignedWeighting) -> f64 {
        let v_new = self.recompute_value(m, vt, s);
        let d = delta(vt.value(s), v_new);
        vt.set_value(s, v_new);
        let (plus, minus) = self.signed_values(m, vt, s, weighting);
        vt.set_signed(s, plus, minus);
        d
    }
}

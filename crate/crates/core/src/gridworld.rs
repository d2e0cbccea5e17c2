//! T-maze grid worlds: geometry, payoffs, movement and the consume-and-respawn
//! dynamics shared by every built-in task.
//!
//! A task is a small set of walkable cells. Some cells are goal slots; stepping
//! into an occupied slot samples one outcome of the payoff placed there, ends
//! the episode and teleports the agent to a uniformly drawn start cell. In the
//! risky world the consumed payoff is moved to a random empty slot first.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that outcome probabilities sum to one.
const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("unknown task id `{0}`")]
    UnknownTask(String),
    #[error("payoff `{payoff}`: {reason}")]
    InvalidPayoff { payoff: String, reason: String },
    #[error("task `{task}`: {reason}")]
    InvalidTask { task: String, reason: String },
    #[error("task `{0}` does not relocate payoffs")]
    NotRelocating(String),
    #[error("goal slot {0} is not empty")]
    SlotOccupied(usize),
}

/// A grid coordinate. `y` grows downwards, so the T-maze bar sits at `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn moved(self, action: Action) -> Self {
        let (dx, dy) = action.delta();
        Self::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.x, self.y)
    }
}

/// The four movement actions. The discriminant doubles as the action index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const COUNT: usize = 4;
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Self {
        Self::ALL[index]
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }
}

/// One possible result of consuming a payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub label: String,
    pub probability: f64,
    pub reward: f64,
}

impl Outcome {
    pub fn new(label: impl Into<String>, probability: f64, reward: f64) -> Self {
        Self { label: label.into(), probability, reward }
    }
}

/// A payoff distribution; a deterministic payoff has a single outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffSpec {
    pub outcomes: Vec<Outcome>,
}

impl PayoffSpec {
    pub fn deterministic(label: impl Into<String>, reward: f64) -> Self {
        Self { outcomes: vec![Outcome::new(label, 1.0, reward)] }
    }

    pub fn new(outcomes: Vec<Outcome>) -> Self {
        Self { outcomes }
    }

    pub fn validate(&self, name: &str) -> Result<(), WorldError> {
        let invalid = |reason: String| WorldError::InvalidPayoff { payoff: name.to_string(), reason };
        if self.outcomes.is_empty() {
            return Err(invalid("no outcomes".into()));
        }
        for o in &self.outcomes {
            if !(o.probability > 0.0 && o.probability <= 1.0) {
                return Err(invalid(format!("probability {} of `{}` outside (0,1]", o.probability, o.label)));
            }
            if !o.reward.is_finite() {
                return Err(invalid(format!("reward of `{}` is not finite", o.label)));
            }
        }
        let total: f64 = self.outcomes.iter().map(|o| o.probability).sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(invalid(format!("probabilities sum to {total}, expected 1")));
        }
        let mut labels: Vec<&str> = self.outcomes.iter().map(|o| o.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.outcomes.len() {
            return Err(invalid("duplicate outcome labels".into()));
        }
        Ok(())
    }

    pub fn expected_reward(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability * o.reward).sum()
    }

    /// Draws an outcome index by inverse CDF on a single uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, o) in self.outcomes.iter().enumerate() {
            acc += o.probability;
            if u < acc {
                return i;
            }
        }
        self.outcomes.len() - 1
    }
}

/// A named payoff ("A", "B", "C") that can occupy a goal slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payoff {
    pub name: String,
    pub spec: PayoffSpec,
}

/// A goal location and the payoff it holds at the start of a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSlot {
    pub cell: Cell,
    pub initial: Option<usize>,
}

/// A reward added whenever the agent enters `cell` from another cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReward {
    pub cell: Cell,
    pub reward: f64,
}

/// Built-in task identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    TradeOff,
    Gambling,
    RiskyWorld,
    LackOfControl,
    SecondDistracter,
    PreGamblePunishment,
    HighStakes,
}

impl TaskId {
    pub const ALL: [TaskId; 7] = [
        TaskId::TradeOff,
        TaskId::Gambling,
        TaskId::RiskyWorld,
        TaskId::LackOfControl,
        TaskId::SecondDistracter,
        TaskId::PreGamblePunishment,
        TaskId::HighStakes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::TradeOff => "trade_off",
            TaskId::Gambling => "gambling",
            TaskId::RiskyWorld => "risky_world",
            TaskId::LackOfControl => "lack_of_control",
            TaskId::SecondDistracter => "second_distracter",
            TaskId::PreGamblePunishment => "pre_gamble_punishment",
            TaskId::HighStakes => "high_stakes",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| WorldError::UnknownTask(s.to_string()))
    }
}

/// Changes applied on top of a built-in task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskOverrides {
    /// Replacement payoff distributions keyed by payoff name.
    #[serde(default)]
    pub payoffs: std::collections::BTreeMap<String, PayoffSpec>,
    /// Replaces the task's step rewards when present.
    #[serde(default)]
    pub step_rewards: Option<Vec<StepReward>>,
}

/// Default reward of the second distracter C. Not a published value.
pub const SECOND_DISTRACTER_REWARD: f64 = 0.2;
/// Default punishment on the cell in front of B. Not a published value.
pub const PRE_GAMBLE_PUNISHMENT: f64 = -0.1;

/// A fully resolved task. Immutable once built; share it behind an `Arc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub cells: Vec<Cell>,
    pub goals: Vec<GoalSlot>,
    pub payoffs: Vec<Payoff>,
    pub start_cells: Vec<Cell>,
    pub forced_random_actions: bool,
    pub relocating_payoffs: bool,
    #[serde(default)]
    pub step_rewards: Vec<StepReward>,
}

fn t_maze_cells() -> Vec<Cell> {
    let mut cells: Vec<Cell> = (0..5).map(|x| Cell::new(x, 0)).collect();
    cells.extend((1..5).map(|y| Cell::new(2, y)));
    cells
}

fn three_arm_cells() -> Vec<Cell> {
    let mut cells = t_maze_cells();
    cells.extend([Cell::new(3, 2), Cell::new(4, 2)]);
    cells
}

const CELL_A: Cell = Cell::new(0, 0);
const CELL_B: Cell = Cell::new(4, 0);
const CELL_C: Cell = Cell::new(4, 2);
const CELL_BEFORE_B: Cell = Cell::new(3, 0);

fn payoff(name: &str, spec: PayoffSpec) -> Payoff {
    Payoff { name: name.to_string(), spec }
}

fn distracter() -> Payoff {
    payoff("A", PayoffSpec::deterministic("A", 0.2))
}

fn gamble(loss: f64, win: f64) -> Payoff {
    payoff(
        "B",
        PayoffSpec::new(vec![Outcome::new("B1", 0.9, loss), Outcome::new("B2", 0.1, win)]),
    )
}

fn static_goals(cells: &[Cell]) -> Vec<GoalSlot> {
    cells
        .iter()
        .enumerate()
        .map(|(i, &cell)| GoalSlot { cell, initial: Some(i) })
        .collect()
}

/// Builds a built-in task and applies `overrides`.
pub fn build_task(id: TaskId, overrides: &TaskOverrides) -> Result<TaskSpec, WorldError> {
    let trade_off_b = payoff("B", PayoffSpec::deterministic("B", -0.1));
    let (cells, goal_cells, payoffs, forced, relocating, step_rewards) = match id {
        TaskId::TradeOff => (t_maze_cells(), vec![CELL_A, CELL_B], vec![distracter(), trade_off_b], false, false, vec![]),
        TaskId::LackOfControl => (t_maze_cells(), vec![CELL_A, CELL_B], vec![distracter(), trade_off_b], true, false, vec![]),
        TaskId::Gambling => (t_maze_cells(), vec![CELL_A, CELL_B], vec![distracter(), gamble(-0.2, 0.8)], false, false, vec![]),
        TaskId::HighStakes => (t_maze_cells(), vec![CELL_A, CELL_B], vec![distracter(), gamble(-2.0, 17.0)], false, false, vec![]),
        TaskId::RiskyWorld => (three_arm_cells(), vec![CELL_A, CELL_B, CELL_C], vec![distracter(), trade_off_b], false, true, vec![]),
        TaskId::SecondDistracter => (
            three_arm_cells(),
            vec![CELL_A, CELL_B, CELL_C],
            vec![
                distracter(),
                gamble(-0.2, 0.8),
                payoff("C", PayoffSpec::deterministic("C", SECOND_DISTRACTER_REWARD)),
            ],
            false,
            false,
            vec![],
        ),
        TaskId::PreGamblePunishment => (
            t_maze_cells(),
            vec![CELL_A, CELL_B],
            vec![distracter(), gamble(-0.2, 0.8)],
            false,
            false,
            vec![StepReward { cell: CELL_BEFORE_B, reward: PRE_GAMBLE_PUNISHMENT }],
        ),
    };
    let goals = if relocating {
        // two payoffs over three slots; the third slot starts empty
        goal_cells
            .iter()
            .enumerate()
            .map(|(i, &cell)| GoalSlot { cell, initial: (i < payoffs.len()).then_some(i) })
            .collect()
    } else {
        static_goals(&goal_cells)
    };
    let start_cells = cells.iter().copied().filter(|c| !goal_cells.contains(c)).collect();
    let mut spec = TaskSpec {
        name: id.as_str().to_string(),
        cells,
        goals,
        payoffs,
        start_cells,
        forced_random_actions: forced,
        relocating_payoffs: relocating,
        step_rewards,
    };
    spec.apply(overrides)?;
    spec.validate()?;
    Ok(spec)
}

impl TaskSpec {
    pub fn apply(&mut self, overrides: &TaskOverrides) -> Result<(), WorldError> {
        for (name, replacement) in &overrides.payoffs {
            replacement.validate(name)?;
            let slot = self
                .payoffs
                .iter_mut()
                .find(|p| &p.name == name)
                .ok_or_else(|| WorldError::InvalidTask {
                    task: self.name.clone(),
                    reason: format!("override names unknown payoff `{name}`"),
                })?;
            slot.spec = replacement.clone();
        }
        if let Some(rewards) = &overrides.step_rewards {
            self.step_rewards = rewards.clone();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let invalid = |reason: String| WorldError::InvalidTask { task: self.name.clone(), reason };
        if self.cells.is_empty() {
            return Err(invalid("no cells".into()));
        }
        let mut sorted = self.cells.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.cells.len() {
            return Err(invalid("duplicate cells".into()));
        }
        if !self.is_connected() {
            return Err(invalid("cells are not connected".into()));
        }
        if self.goals.is_empty() {
            return Err(invalid("no goal cells".into()));
        }
        for (i, g) in self.goals.iter().enumerate() {
            if !self.contains(g.cell) {
                return Err(invalid(format!("goal {} is not a cell", g.cell)));
            }
            if self.goals[..i].iter().any(|o| o.cell == g.cell) {
                return Err(invalid(format!("goal {} listed twice", g.cell)));
            }
            if let Some(p) = g.initial {
                if p >= self.payoffs.len() {
                    return Err(invalid(format!("goal {} references payoff #{p}", g.cell)));
                }
            }
        }
        for p in &self.payoffs {
            p.spec.validate(&p.name)?;
        }
        let mut placed: Vec<usize> = self.goals.iter().filter_map(|g| g.initial).collect();
        placed.sort_unstable();
        if placed != (0..self.payoffs.len()).collect::<Vec<_>>() {
            return Err(invalid("every payoff must start in exactly one goal slot".into()));
        }
        if self.relocating_payoffs && self.payoffs.len() >= self.goals.len() {
            return Err(invalid("relocating payoffs need at least one spare goal slot".into()));
        }
        if !self.relocating_payoffs && self.goals.iter().any(|g| g.initial.is_none()) {
            return Err(invalid("static tasks cannot have empty goal slots".into()));
        }
        if self.start_cells.is_empty() {
            return Err(invalid("no start cells".into()));
        }
        for c in &self.start_cells {
            if !self.contains(*c) {
                return Err(invalid(format!("start cell {c} is not a cell")));
            }
            if self.goal_slot(*c).is_some() {
                return Err(invalid(format!("start cell {c} is a goal")));
            }
        }
        for r in &self.step_rewards {
            if !self.contains(r.cell) {
                return Err(invalid(format!("step reward cell {} is not a cell", r.cell)));
            }
            if !r.reward.is_finite() {
                return Err(invalid(format!("step reward at {} is not finite", r.cell)));
            }
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for a in Action::ALL {
                if let Some(j) = self.cell_index(self.cells[i].moved(a)) {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.cells.contains(&cell)
    }

    pub fn cell_index(&self, cell: Cell) -> Option<usize> {
        self.cells.iter().position(|&c| c == cell)
    }

    pub fn goal_slot(&self, cell: Cell) -> Option<usize> {
        self.goals.iter().position(|g| g.cell == cell)
    }

    pub fn payoff_index(&self, name: &str) -> Option<usize> {
        self.payoffs.iter().position(|p| p.name == name)
    }

    pub fn step_reward(&self, cell: Cell) -> f64 {
        self.step_rewards.iter().filter(|r| r.cell == cell).map(|r| r.reward).sum()
    }

    /// Where the agent ends up when attempting `action` from `from`.
    pub fn destination(&self, from: Cell, action: Action) -> Cell {
        let to = from.moved(action);
        if self.contains(to) {
            to
        } else {
            from
        }
    }
}

/// Mutable per-agent world state.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub agent_pos: Cell,
    /// Goal slot -> payoff currently placed there.
    pub placement: Vec<Option<usize>>,
    pub step_count: u64,
}

impl WorldState {
    /// Fresh state: the agent is respawned and, for relocating tasks, the
    /// payoffs are scattered uniformly over the goal slots.
    pub fn new<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> Self {
        let mut placement: Vec<Option<usize>> = spec.goals.iter().map(|g| g.initial).collect();
        if spec.relocating_payoffs {
            // Fisher-Yates over the slot assignment
            for i in (1..placement.len()).rev() {
                let j = rng.random_range(0..=i);
                placement.swap(i, j);
            }
        }
        let agent_pos = respawn(spec, rng);
        Self { agent_pos, placement, step_count: 0 }
    }

    pub fn occupied_slots(&self) -> usize {
        self.placement.iter().filter(|p| p.is_some()).count()
    }
}

/// What happened when the agent entered an occupied goal slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Consumption {
    pub slot: usize,
    pub payoff: usize,
    pub outcome: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    /// The action actually executed (differs from the request under forced random actions).
    pub action: Action,
    /// The cell the move led into, before any respawn.
    pub arrived: Cell,
    pub reward: f64,
    pub consumed: Option<Consumption>,
}

/// Advances the world by one action.
pub fn step<R: Rng + ?Sized>(spec: &TaskSpec, state: &mut WorldState, requested: Action, rng: &mut R) -> StepResult {
    let action = if spec.forced_random_actions {
        Action::from_index(rng.random_range(0..Action::COUNT))
    } else {
        requested
    };
    let from = state.agent_pos;
    let arrived = spec.destination(from, action);
    state.step_count += 1;

    let mut reward = if arrived != from { spec.step_reward(arrived) } else { 0.0 };
    let occupant = spec.goal_slot(arrived).and_then(|slot| state.placement[slot].map(|p| (slot, p)));
    let Some((slot, payoff)) = occupant else {
        state.agent_pos = arrived;
        return StepResult { action, arrived, reward, consumed: None };
    };

    let payoff_spec = &spec.payoffs[payoff].spec;
    let outcome = payoff_spec.sample(rng);
    reward += payoff_spec.outcomes[outcome].reward;
    if spec.relocating_payoffs {
        state.placement[slot] = None;
        relocate_payoff(spec, state, slot, payoff, rng).expect("relocating task with an emptied slot");
    }
    state.agent_pos = respawn(spec, rng);
    StepResult { action, arrived, reward, consumed: Some(Consumption { slot, payoff, outcome }) }
}

/// Places `payoff`, just consumed from `consumed_slot`, uniformly on one of
/// the empty goal slots (the consumed slot included).
pub fn relocate_payoff<R: Rng + ?Sized>(
    spec: &TaskSpec,
    state: &mut WorldState,
    consumed_slot: usize,
    payoff: usize,
    rng: &mut R,
) -> Result<(), WorldError> {
    if !spec.relocating_payoffs {
        return Err(WorldError::NotRelocating(spec.name.clone()));
    }
    if state.placement[consumed_slot].is_some() {
        return Err(WorldError::SlotOccupied(consumed_slot));
    }
    let empty: Vec<usize> = (0..state.placement.len()).filter(|&i| state.placement[i].is_none()).collect();
    let target = empty[rng.random_range(0..empty.len())];
    state.placement[target] = Some(payoff);
    Ok(())
}

/// Uniform draw over the task's start cells.
pub fn respawn<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> Cell {
    spec.start_cells[rng.random_range(0..spec.start_cells.len())]
}

/// Enumeration of the states an agent can tell apart.
///
/// Every cell is a location state. Each (goal slot, payoff, outcome) triple
/// that can occur is an extra terminal state: consuming a payoff is
/// recorded as a transition into that terminal, whose value is fixed at 0.
#[derive(Debug, Clone)]
pub struct StateIndex {
    n_cells: usize,
    terminals: Vec<Consumption>,
    lookup: HashMap<(usize, usize, usize), usize>,
}

impl StateIndex {
    pub fn new(spec: &TaskSpec) -> Self {
        let mut terminals = Vec::new();
        for (slot, goal) in spec.goals.iter().enumerate() {
            let payoffs: Vec<usize> = if spec.relocating_payoffs {
                (0..spec.payoffs.len()).collect()
            } else {
                goal.initial.into_iter().collect()
            };
            for payoff in payoffs {
                for outcome in 0..spec.payoffs[payoff].spec.outcomes.len() {
                    terminals.push(Consumption { slot, payoff, outcome });
                }
            }
        }
        let n_cells = spec.cells.len();
        let lookup = terminals
            .iter()
            .enumerate()
            .map(|(i, c)| ((c.slot, c.payoff, c.outcome), n_cells + i))
            .collect();
        Self { n_cells, terminals, lookup }
    }

    pub fn len(&self) -> usize {
        self.n_cells + self.terminals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        state >= self.n_cells
    }

    pub fn terminal(&self, c: Consumption) -> usize {
        self.lookup[&(c.slot, c.payoff, c.outcome)]
    }

    pub fn consumption(&self, state: usize) -> Option<Consumption> {
        state.checked_sub(self.n_cells).map(|i| self.terminals[i])
    }
}

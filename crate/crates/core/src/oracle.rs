//! Ground truth for checking the learners: the true MDP of a task, solved
//! by value iteration or policy evaluation, and Monte Carlo payoff estimates.
//!
//! States follow the agent's `StateIndex` layout. Each terminal (consumed
//! outcome) state has a single action that respawns uniformly over the
//! start cells with reward 0, so the chain is recurrent.

use rand::Rng;
use thiserror::Error;

use crate::gridworld::{Action, Consumption, PayoffSpec, StateIndex, TaskSpec};
use crate::model::EmpiricalModel;

pub const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("no convergence after {0} sweeps (defect: gamma < 1 guarantees a contraction)")]
    NoConvergence(usize),
    #[error("policy row for state {0} does not match its action count or sum to 1")]
    BadPolicy(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub probability: f64,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct ExactMDP {
    pub gamma: f64,
    /// `rows[s][a]`: the outcome distribution of action `a` in state `s`.
    pub rows: Vec<Vec<Vec<Transition>>>,
    pub states: StateIndex,
    /// Set when the payoff placement had to be replaced by its stationary
    /// distribution (relocating tasks).
    pub approximate: bool,
}

fn push_merged(row: &mut Vec<Transition>, t: Transition) {
    match row.iter_mut().find(|x| x.next == t.next) {
        Some(x) => {
            let p = x.probability + t.probability;
            x.reward = (x.reward * x.probability + t.reward * t.probability) / p;
            x.probability = p;
        }
        None => row.push(t),
    }
}

impl ExactMDP {
    pub fn from_task(spec: &TaskSpec, gamma: f64) -> Self {
        let states = StateIndex::new(spec);
        let n_payoffs = spec.payoffs.len() as f64;
        let n_slots = spec.goals.len() as f64;
        let mut rows = Vec::with_capacity(states.len());

        // Exact outcome distribution of physically moving `from` with `action`.
        let moves = |from: usize, action: Action, scale: f64, row: &mut Vec<Transition>| {
            let from_cell = spec.cells[from];
            let to_cell = spec.destination(from_cell, action);
            let to = spec.cell_index(to_cell).expect("destination inside the task");
            let step_reward = if to_cell != from_cell { spec.step_reward(to_cell) } else { 0.0 };
            let Some(slot) = spec.goal_slot(to_cell) else {
                push_merged(row, Transition { next: to, probability: scale, reward: step_reward });
                return;
            };
            // (payoff, probability that it sits in this slot)
            let occupants: Vec<(usize, f64)> = if spec.relocating_payoffs {
                (0..spec.payoffs.len()).map(|p| (p, 1.0 / n_slots)).collect()
            } else {
                spec.goals[slot].initial.map(|p| (p, 1.0)).into_iter().collect()
            };
            let empty = 1.0 - occupants.iter().map(|(_, q)| q).sum::<f64>();
            if spec.relocating_payoffs && n_slots > n_payoffs {
                push_merged(row, Transition { next: to, probability: scale * empty, reward: step_reward });
            }
            for (payoff, q) in occupants {
                for (outcome, o) in spec.payoffs[payoff].spec.outcomes.iter().enumerate() {
                    let next = states.terminal(Consumption { slot, payoff, outcome });
                    push_merged(row, Transition { next, probability: scale * q * o.probability, reward: step_reward + o.reward });
                }
            }
        };

        for s in 0..states.n_cells() {
            let actions = Action::ALL
                .iter()
                .map(|&a| {
                    let mut row = Vec::new();
                    if spec.forced_random_actions {
                        for actual in Action::ALL {
                            moves(s, actual, 1.0 / Action::COUNT as f64, &mut row);
                        }
                    } else {
                        moves(s, a, 1.0, &mut row);
                    }
                    row
                })
                .collect();
            rows.push(actions);
        }
        let respawn: Vec<Transition> = spec
            .start_cells
            .iter()
            .map(|&c| Transition {
                next: spec.cell_index(c).unwrap(),
                probability: 1.0 / spec.start_cells.len() as f64,
                reward: 0.0,
            })
            .collect();
        for _ in states.n_cells()..states.len() {
            rows.push(vec![respawn.clone()]);
        }
        Self { gamma, rows, states, approximate: spec.relocating_payoffs }
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    fn backup(&self, values: &[f64], row: &[Transition]) -> f64 {
        row.iter().map(|t| t.probability * (t.reward + self.gamma * values[t.next])).sum()
    }

    /// Bellman optimality residual max_s |max_a Q(s,a) - V(s)|.
    pub fn optimality_residual(&self, values: &[f64]) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(s, actions)| {
                let best = actions.iter().map(|r| self.backup(values, r)).fold(f64::NEG_INFINITY, f64::max);
                (best - values[s]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Uniform random policy over each state's actions.
    pub fn uniform_policy(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|a| vec![1.0 / a.len() as f64; a.len()]).collect()
    }

    /// An empirical model whose counts reproduce `policy` and the true
    /// transition probabilities exactly (to `scale` resolution): every row
    /// is observed `round(π·scale)` times, split by `round(p·π·scale)`.
    pub fn exact_counts_model(&self, policy: &[Vec<f64>], scale: f64) -> EmpiricalModel {
        let mut m = EmpiricalModel::new(self.n_states());
        for (s, actions) in self.rows.iter().enumerate() {
            for (a, row) in actions.iter().enumerate() {
                let weight = policy[s][a] * scale;
                for t in row {
                    let n = (t.probability * weight).round() as u64;
                    for _ in 0..n {
                        m.observe(s, Action::from_index(a), t.next, t.reward);
                    }
                }
            }
        }
        m
    }
}

fn check_tol(tol: f64) -> Result<(), OracleError> {
    if tol > 0.0 {
        Ok(())
    } else {
        Err(OracleError::BadTolerance(tol))
    }
}

/// Iterates the optimality backup until the sup-norm change drops below `tol`.
pub fn value_iteration(mdp: &ExactMDP, tol: f64) -> Result<Vec<f64>, OracleError> {
    check_tol(tol)?;
    let mut values = vec![0.0; mdp.n_states()];
    for _ in 0..MAX_ITERATIONS {
        let next: Vec<f64> = mdp
            .rows
            .iter()
            .map(|actions| actions.iter().map(|r| mdp.backup(&values, r)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let change = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        if change < tol {
            return Ok(values);
        }
    }
    Err(OracleError::NoConvergence(MAX_ITERATIONS))
}

/// Iterates the expectation backup of `policy` (`policy[s][a]`) to a
/// sup-norm change below `tol`.
pub fn policy_evaluation(mdp: &ExactMDP, policy: &[Vec<f64>], tol: f64) -> Result<Vec<f64>, OracleError> {
    check_tol(tol)?;
    for (s, row) in policy.iter().enumerate() {
        if row.len() != mdp.rows[s].len() || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(OracleError::BadPolicy(s));
        }
    }
    let mut values = vec![0.0; mdp.n_states()];
    for _ in 0..MAX_ITERATIONS {
        let next: Vec<f64> = mdp
            .rows
            .iter()
            .zip(policy)
            .map(|(actions, pi)| actions.iter().zip(pi).map(|(r, p)| p * mdp.backup(&values, r)).sum())
            .collect();
        let change = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        if change < tol {
            return Ok(values);
        }
    }
    Err(OracleError::NoConvergence(MAX_ITERATIONS))
}

/// Sample mean and standard error of `n` payoff draws (Welford).
pub fn monte_carlo_payoff<R: Rng + ?Sized>(payoff: &PayoffSpec, n: usize, rng: &mut R) -> (f64, f64) {
    assert!(n >= 1, "monte_carlo_payoff needs n >= 1");
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 1..=n {
        let x = payoff.outcomes[payoff.sample(rng)].reward;
        let d = x - mean;
        mean += d / k as f64;
        m2 += d * (x - mean);
    }
    let stderr = if n > 1 { (m2 / (n - 1) as f64).sqrt() / (n as f64).sqrt() } else { 0.0 };
    (mean, stderr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{build_task, Cell, TaskId, TaskOverrides};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mdp(id: TaskId) -> ExactMDP {
        ExactMDP::from_task(&build_task(id, &TaskOverrides::default()).unwrap(), 0.9)
    }

    #[test]
    fn rows_are_stochastic() {
        for id in TaskId::ALL {
            let m = mdp(id);
            for actions in &m.rows {
                for row in actions {
                    let total: f64 = row.iter().map(|t| t.probability).sum();
                    assert!((total - 1.0).abs() < 1e-12, "{id}: {total}");
                }
            }
        }
    }

    #[test]
    fn trade_off_rows() {
        let spec = build_task(TaskId::TradeOff, &TaskOverrides::default()).unwrap();
        let m = ExactMDP::from_task(&spec, 0.9);
        assert!(!m.approximate);
        let s = spec.cell_index(Cell::new(1, 0)).unwrap();
        let row = &m.rows[s][Action::Left.index()];
        assert_eq!(row.len(), 1);
        assert_eq!((row[0].probability, row[0].reward), (1.0, 0.2));
        let s = spec.cell_index(Cell::new(3, 0)).unwrap();
        assert_eq!(m.rows[s][Action::Right.index()][0].reward, -0.1);
    }

    #[test]
    fn gamble_row() {
        let spec = build_task(TaskId::Gambling, &TaskOverrides::default()).unwrap();
        let m = ExactMDP::from_task(&spec, 0.9);
        let s = spec.cell_index(Cell::new(3, 0)).unwrap();
        let row = &m.rows[s][Action::Right.index()];
        let probs: Vec<f64> = row.iter().map(|t| t.probability).collect();
        assert_eq!(probs, vec![0.9, 0.1]);
    }

    #[test]
    fn risky_world_is_flagged() {
        assert!(mdp(TaskId::RiskyWorld).approximate);
    }

    fn chain() -> ExactMDP {
        // s0 -> s1 -> goal (0.2); goal loops to itself with 0 reward
        let t = |next, reward| vec![Transition { next, probability: 1.0, reward }];
        ExactMDP {
            gamma: 0.9,
            rows: vec![vec![t(1, 0.0)], vec![t(2, 0.2)], vec![t(2, 0.0)]],
            states: StateIndex::new(&build_task(TaskId::TradeOff, &TaskOverrides::default()).unwrap()),
            approximate: false,
        }
    }

    #[test]
    fn two_step_chain() {
        let v = value_iteration(&chain(), 1e-12).unwrap();
        assert!((v[1] - 0.2).abs() < 1e-12);
        assert!((v[0] - 0.18).abs() < 1e-12);
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let mut m = chain();
        m.rows[1][0][0].reward = 0.0;
        assert!(value_iteration(&m, 1e-12).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_tolerance() {
        assert_eq!(value_iteration(&chain(), 0.0), Err(OracleError::BadTolerance(0.0)));
    }

    #[test]
    fn residual_below_tolerance() {
        for id in TaskId::ALL {
            let m = mdp(id);
            let v = value_iteration(&m, 1e-9).unwrap();
            assert!(m.optimality_residual(&v) < 1e-9, "{id}");
        }
    }

    #[test]
    fn deterministic_payoff_is_exact() {
        let (mean, se) = monte_carlo_payoff(&PayoffSpec::deterministic("A", 0.2), 1000, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!((mean, se), (0.2, 0.0));
    }

    #[test]
    fn gamble_entry_value_under_enter_b_policy() {
        // go straight for B from every cell; the immediate term at the cell
        // in front of B is the gamble's mean, -0.1
        let spec = build_task(TaskId::Gambling, &TaskOverrides::default()).unwrap();
        let m = ExactMDP::from_task(&spec, 0.9);
        let toward_b = |c: Cell| if c.y > 0 { Action::Up } else { Action::Right };
        let policy: Vec<Vec<f64>> = (0..m.n_states())
            .map(|s| {
                if s < spec.cells.len() {
                    let mut row = vec![0.0; 4];
                    row[toward_b(spec.cells[s]).index()] = 1.0;
                    row
                } else {
                    vec![1.0]
                }
            })
            .collect();
        let v = policy_evaluation(&m, &policy, 1e-12).unwrap();
        let s = spec.cell_index(Cell::new(3, 0)).unwrap();
        let immediate: f64 = m.rows[s][Action::Right.index()].iter().map(|t| t.probability * t.reward).sum();
        assert!((immediate + 0.1).abs() < 1e-12);
        let b1 = m.states.terminal(Consumption { slot: 1, payoff: 1, outcome: 0 });
        let continuation = v[b1];
        assert!((v[s] - (-0.1 + 0.9 * continuation)).abs() < 1e-9);
        assert!(continuation < 0.0);
    }
}

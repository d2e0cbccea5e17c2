//! Per-agent empirical model: visit, action and transition counts plus
//! running mean rewards, from which P̂(s'|s,a), R̂(s,a,s') and π̂(a|s) are read
//! as plain frequency ratios.

use crate::gridworld::Action;

/// Observed successor of one (state, action) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Successor {
    pub state: usize,
    pub count: u64,
    /// Running mean of the observed rewards; exact when they are constant.
    pub mean_reward: f64,
}

impl Successor {
    pub fn mean_reward(&self) -> f64 {
        self.mean_reward
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    visit_counts: Vec<u64>,
    action_counts: Vec<[u64; Action::COUNT]>,
    /// Indexed by `s * 4 + a`, kept sorted by successor state.
    transitions: Vec<Vec<Successor>>,
}

impl EmpiricalModel {
    pub fn new(n_states: usize) -> Self {
        Self {
            visit_counts: vec![0; n_states],
            action_counts: vec![[0; Action::COUNT]; n_states],
            transitions: vec![Vec::new(); n_states * Action::COUNT],
        }
    }

    pub fn n_states(&self) -> usize {
        self.visit_counts.len()
    }

    pub fn observe(&mut self, s: usize, a: Action, next: usize, reward: f64) {
        self.visit_counts[s] += 1;
        self.action_counts[s][a.index()] += 1;
        let row = &mut self.transitions[s * Action::COUNT + a.index()];
        match row.binary_search_by_key(&next, |succ| succ.state) {
            Ok(i) => {
                let succ = &mut row[i];
                succ.count += 1;
                succ.mean_reward += (reward - succ.mean_reward) / succ.count as f64;
            }
            Err(i) => row.insert(i, Successor { state: next, count: 1, mean_reward: reward }),
        }
    }

    pub fn visits(&self, s: usize) -> u64 {
        self.visit_counts[s]
    }

    pub fn action_count(&self, s: usize, a: Action) -> u64 {
        self.action_counts[s][a.index()]
    }

    /// Observed successors of (s, a), ordered by state index.
    pub fn successors(&self, s: usize, a: Action) -> &[Successor] {
        &self.transitions[s * Action::COUNT + a.index()]
    }

    pub fn transition_count(&self, s: usize, a: Action, next: usize) -> u64 {
        self.find(s, a, next).map_or(0, |succ| succ.count)
    }

    /// Actions taken at least once in `s`, in index order.
    pub fn observed_actions(&self, s: usize) -> impl Iterator<Item = Action> + '_ {
        Action::ALL.into_iter().filter(move |a| self.action_counts[s][a.index()] > 0)
    }

    fn find(&self, s: usize, a: Action, next: usize) -> Option<&Successor> {
        let row = self.successors(s, a);
        row.binary_search_by_key(&next, |succ| succ.state).ok().map(|i| &row[i])
    }

    /// P̂(next | s, a). An untried action falls back to a uniform spread over
    /// every successor observed from `s`, or 0 if `s` has none.
    pub fn transition_prob(&self, s: usize, a: Action, next: usize) -> f64 {
        let n = self.action_count(s, a);
        if n > 0 {
            return self.transition_count(s, a, next) as f64 / n as f64;
        }
        let mut seen: Vec<usize> = Action::ALL
            .iter()
            .flat_map(|&b| self.successors(s, b).iter().map(|succ| succ.state))
            .collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.binary_search(&next).is_ok() {
            1.0 / seen.len() as f64
        } else {
            0.0
        }
    }

    /// Mean observed reward for (s, a, next); 0 when never observed.
    pub fn expected_reward(&self, s: usize, a: Action, next: usize) -> f64 {
        self.find(s, a, next).map_or(0.0, Successor::mean_reward)
    }

    /// π̂(a | s); uniform before the first visit of `s`.
    pub fn policy_freq(&self, s: usize, a: Action) -> f64 {
        match self.visit_counts[s] {
            0 => 1.0 / Action::COUNT as f64,
            n => self.action_counts[s][a.index()] as f64 / n as f64,
        }
    }
}

use nalgebra::{DMatrix, DVector};

use tdrisk::oracle::{policy_evaluation, value_iteration, ExactMDP};
use tdrisk::{build_task, Backup, BiasMode, TaskId, TaskOverrides, ValueTable};

const GAMMA: f64 = 0.9;

fn mdp(id: TaskId) -> ExactMDP {
    ExactMDP::from_task(&build_task(id, &TaskOverrides::default()).unwrap(), GAMMA)
}

/// V = (I - γ P_π)⁻¹ r_π by a direct linear solve.
fn solve(mdp: &ExactMDP, policy: &[Vec<f64>]) -> Vec<f64> {
    let n = mdp.n_states();
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut r = DVector::<f64>::zeros(n);
    for (s, actions) in mdp.rows.iter().enumerate() {
        for (a, row) in actions.iter().enumerate() {
            for t in row {
                p[(s, t.next)] += policy[s][a] * t.probability;
                r[s] += policy[s][a] * t.probability * t.reward;
            }
        }
    }
    let lhs = DMatrix::<f64>::identity(n, n) - p * GAMMA;
    lhs.lu().solve(&r).expect("I - γP is invertible").iter().copied().collect()
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn policy_evaluation_matches_the_linear_solve() {
    for id in TaskId::ALL {
        let m = mdp(id);
        let policy = m.uniform_policy();
        let iterative = policy_evaluation(&m, &policy, 1e-12).unwrap();
        let direct = solve(&m, &policy);
        assert!(sup_gap(&iterative, &direct) < 1e-9, "{id}: {}", sup_gap(&iterative, &direct));
    }
}

#[test]
fn value_iteration_fixed_point() {
    for id in TaskId::ALL {
        let m = mdp(id);
        let tol = 1e-9;
        let v = value_iteration(&m, tol).unwrap();
        assert!(m.optimality_residual(&v) < tol, "{id}");
        // the greedy policy of V* evaluates back to V*
        let greedy: Vec<Vec<f64>> = m
            .rows
            .iter()
            .map(|actions| {
                let qs: Vec<f64> = actions
                    .iter()
                    .map(|row| row.iter().map(|t| t.probability * (t.reward + GAMMA * v[t.next])).sum())
                    .collect();
                let best = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let k = qs.iter().position(|&q| q == best).unwrap();
                (0..qs.len()).map(|j| if j == k { 1.0 } else { 0.0 }).collect()
            })
            .collect();
        assert!(sup_gap(&solve(&m, &greedy), &v) < 1e-7, "{id}");
    }
}

#[test]
fn realistic_recompute_reaches_the_oracle_value() {
    for id in [TaskId::TradeOff, TaskId::Gambling, TaskId::LackOfControl, TaskId::HighStakes] {
        let m = mdp(id);
        let policy = m.uniform_policy();
        // every row probability times 3360 is an integer, so the counts reproduce P exactly
        let model = m.exact_counts_model(&policy, 3360.0);
        let backup = Backup::new(BiasMode::Realistic, GAMMA);
        let mut vt = ValueTable::with_initial_values(vec![0.0; m.n_states()], 0.0);
        for _ in 0..10_000 {
            let mut change = 0.0f64;
            for s in 0..m.n_states() {
                let v = backup.recompute_value(&model, &vt, s);
                change = change.max((v - vt.value(s)).abs());
                vt.set_value(s, v);
            }
            if change < 1e-13 {
                break;
            }
        }
        let truth = policy_evaluation(&m, &policy, 1e-12).unwrap();
        assert!(sup_gap(&truth, vt.values()) < 1e-6, "{id}: {}", sup_gap(&truth, vt.values()));
    }
}

use std::sync::Arc;

use tdrisk::population::sample_agent;
use tdrisk::{build_task, run_condition, BiasMode, Measure, PopulationConfig, TaskId, TaskOverrides};

fn cfg(id: TaskId, bias: BiasMode, n: usize, horizon: usize) -> PopulationConfig {
    let task = Arc::new(build_task(id, &TaskOverrides::default()).unwrap());
    PopulationConfig::new(task, bias, n, horizon, 77)
}

#[test]
fn mean_reward_matches_agent_totals() {
    let c = cfg(TaskId::Gambling, BiasMode::OutcomeOptimistic, 64, 800);
    let agg = run_condition(&c).unwrap();
    let from_series = agg.window_mean(Measure::Reward, 0..c.horizon);
    let from_agents = agg.agents.iter().map(|a| a.total_reward).sum::<f64>() / (64.0 * 800.0);
    assert!((from_series - from_agents).abs() < 1e-9, "{from_series} vs {from_agents}");
    for m in Measure::ALL {
        assert_eq!(agg.mean_series(m).len(), c.horizon);
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let c = cfg(TaskId::RiskyWorld, BiasMode::ActionOptimistic, 37, 600);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_condition(&c).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn histograms_conserve_agents() {
    let c = cfg(TaskId::HighStakes, BiasMode::OutcomeOptimistic, 50, 500);
    let agg = run_condition(&c).unwrap();
    for (name, width) in [("A", 1), ("B", 10), ("B", 50)] {
        assert_eq!(agg.histogram(name, width).unwrap().iter().sum::<usize>(), 50);
    }
    assert!(agg.histogram("Z", 1).is_none());
}

#[test]
fn population_gamma_mean() {
    let c = cfg(TaskId::TradeOff, BiasMode::Realistic, 5000, 1);
    let mean = (0..5000).map(|i| sample_agent(&c, i).gamma).sum::<f64>() / 5000.0;
    assert!((mean - 0.9).abs() < 0.001, "{mean}");
}

#[test]
fn lack_of_control_outcomes_do_not_depend_on_bias() {
    let totals: Vec<Vec<u64>> = [BiasMode::Realistic, BiasMode::ActionOptimistic, BiasMode::OutcomeOptimistic]
        .iter()
        .map(|&b| {
            let agg = run_condition(&cfg(TaskId::LackOfControl, b, 40, 500)).unwrap();
            ["A", "B"].iter().map(|p| agg.picks_of(p).unwrap().iter().sum()).collect()
        })
        .collect();
    // forced actions and shared world streams make the trajectories identical
    assert!(totals.windows(2).all(|w| w[0] == w[1]), "{totals:?}");
}

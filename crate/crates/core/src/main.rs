use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use tdrisk::config::{BiasQ, ExperimentConfig};
use tdrisk::experiment::run_experiment;
use tdrisk::{FearMode, SignedWeighting};

/// Run risk-perception TD-learning experiments and write their CSVs.
#[derive(Debug, Parser)]
#[command(name = "tdrisk", version)]
struct Cli {
    /// Config file, or a preset name: fig2, fig3, fig4, desk.
    #[arg(long, default_value = "desk")]
    config: String,
    /// Output directory.
    #[arg(long, env = "TDRISK_OUT_DIR", default_value = "tdrisk-out")]
    out: PathBuf,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Agents per condition (overrides the config).
    #[arg(long)]
    agents: Option<usize>,
    /// Steps per trial (overrides the config).
    #[arg(long)]
    steps: Option<usize>,
    /// Run only this condition.
    #[arg(long)]
    condition: Option<String>,
    /// Fear reading: signed (-V-) or raw (-min(V, 0))
    #[arg(long)]
    fear_mode: Option<FearMode>,
    /// Action selection on the biased or the unbiased Q
    #[arg(long)]
    bias_q: Option<BiasQ>,
    /// Action weighting of V+ and V-: bias_consistent or behavior
    #[arg(long)]
    signed_weighting: Option<SignedWeighting>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "TDRISK_THREADS", default_value_t = 0)]
    threads: usize,
    /// List the conditions of the config and exit.
    #[arg(long)]
    list: bool,
}

impl Cli {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(n) = self.agents {
            cfg.population.agents = n;
        }
        if let Some(n) = self.steps {
            cfg.population.steps = n;
        }
        if let Some(m) = self.fear_mode {
            cfg.agent.fear_mode = m;
        }
        if let Some(q) = self.bias_q {
            cfg.agent.bias_q = q;
        }
        if let Some(w) = self.signed_weighting {
            cfg.agent.signed_weighting = w;
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let mut cfg = match ExperimentConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    cli.apply(&mut cfg);
    if cli.list {
        for c in &cfg.conditions {
            println!("{}\t{}\t{}", c.name, c.task, c.bias);
        }
        return ExitCode::SUCCESS;
    }

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run_experiment(&cfg, &cli.out, cli.condition.as_deref())) {
        Ok(reports) => {
            let mut failed = 0;
            for r in &reports {
                eprintln!("{}: {} agents, {} failed trials", r.name, r.n_agents, r.failed_trials);
                failed += r.failed_trials;
            }
            if failed > 0 {
                eprintln!("error: {failed} trials failed");
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

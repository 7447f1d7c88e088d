//! Offline MPC evaluation on cartpole across penalty weights. Cost counts
//! steps spent below the data divide; the planner never sees it.
//!
//! Uses a small model and planner so it runs in a few minutes.

use ugcem::data::{collect_random, filter_region};
use ugcem::ensemble::{train_ensemble, TrainConfig};
use ugcem::env::EnvId;
use ugcem::harness::{run_sweep, SweepSpec};
use ugcem::planner::CemConfig;

fn main() -> ugcem::Result<()> {
    let env = EnvId::Cartpole;
    let region = env.default_region();
    let data = filter_region(&collect_random(env, 10_000, 0)?, &region)?;
    let (ens, _) = train_ensemble(&data, &TrainConfig { hidden: vec![32, 32, 32], ..TrainConfig::default() }, 0)?;

    let planner = CemConfig { population: 100, particles: 8, ..CemConfig::for_env(env) };
    let spec = SweepSpec { betas: vec![0.0, 1.0, 5.0], seeds: vec![0, 1], episodes: 2, ..SweepSpec::default() };
    let result = run_sweep(&ens, &planner, &region, &spec)?;
    for a in &result.aggregates {
        println!(
            "β = {:<4} return {:6.1} ± {:5.1}   cost {:5.2} ± {:5.2}",
            a.beta, a.mean_return, a.std_return, a.mean_cost, a.std_cost
        );
    }
    let dir = std::env::temp_dir();
    result.write_results_csv(dir.join("ugcem_sweep_results.csv"))?;
    result.write_aggregate_csv(dir.join("ugcem_sweep_aggregate.csv"))?;
    Ok(())
}

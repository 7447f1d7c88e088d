//! Pendulum with the wedge −3π/4 < θ < −π/4 removed from the training data.
//! Runs a 200-step episode at several penalty weights and reports the cost.

use ugcem::data::{collect_random, filter_region};
use ugcem::ensemble::{train_ensemble, TrainConfig};
use ugcem::env::EnvId;
use ugcem::harness::run_episode;
use ugcem::planner::CemConfig;

fn main() -> ugcem::Result<()> {
    let env = EnvId::Pendulum;
    let region = env.default_region();
    let data = filter_region(&collect_random(env, 10_000, 0)?, &region)?;
    println!("kept {} of 10000 transitions", data.len());
    let (ens, _) = train_ensemble(&data, &TrainConfig { hidden: vec![32, 32, 32], ..TrainConfig::default() }, 0)?;

    for beta in [0.0, 1.0, 5.0] {
        let planner = CemConfig { population: 100, particles: 8, beta, ..CemConfig::for_env(env) };
        let ep = run_episode(&ens, &planner, &region, 0, 0, 200)?;
        println!("β = {beta:<4} return {:8.1}  cost {:3} / {}", ep.episode_return, ep.cost, ep.len());
    }
    Ok(())
}

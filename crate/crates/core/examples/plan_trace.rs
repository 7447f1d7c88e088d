//! One planning call from the data divide, recorded iteration by iteration.
//! Writes `trace_scores.csv` and `trace_states.csv` to the given directory.

use ugcem::data::{collect_random, filter_region};
use ugcem::ensemble::{train_ensemble, TrainConfig};
use ugcem::env::EnvId;
use ugcem::harness::{divide_state, plan_trace_experiment};
use ugcem::planner::CemConfig;

fn main() -> ugcem::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let env = EnvId::Cartpole;
    let region = env.default_region();
    let data = filter_region(&collect_random(env, 10_000, 0)?, &region)?;
    let (ens, _) = train_ensemble(&data, &TrainConfig { hidden: vec![64, 64, 64], ..TrainConfig::default() }, 0)?;

    let start = divide_state(&region);
    for beta in [0.0, 1.0] {
        let config = CemConfig { horizon: 5, beta, ..CemConfig::for_env(env) };
        let trace = plan_trace_experiment(&ens, &start, &config, 0, &dir)?;
        println!("beta = {beta}");
        for (i, it) in trace.iterations.iter().enumerate() {
            println!(
                "  iteration {i}: mean ω {:.3}, state spread {:.3e}, action mean {:+.3}",
                it.mean_omega(),
                it.state_spread,
                it.dist.mean[[0, 0]]
            );
        }
    }
    println!("CSVs for the last run are in {}", dir.display());
    Ok(())
}

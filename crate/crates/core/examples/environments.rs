//! Stepping the two environments directly.

use ugcem::env::{EnvId, EnvState};
use ugcem::seed;

fn main() -> ugcem::Result<()> {
    for env in [EnvId::Cartpole, EnvId::Pendulum] {
        let mut rng = seed::stream(0, &[]);
        let mut state: EnvState = env.reset(&mut rng);
        let (low, high) = env.action_bounds();
        println!("{env}: obs_dim {}, actions in [{low}, {high}]", env.obs_dim());
        let mut total = 0.0;
        for t in 0..200 {
            // Bang-bang on the sign of the angle (or angular velocity).
            let obs = state.observe().values;
            let push = match env {
                EnvId::Cartpole => obs[2] + 0.5 * obs[3],
                EnvId::Pendulum => obs[2],
            };
            let (r, done) = state.step(&[if push > 0.0 { high } else { low }])?;
            total += r;
            if done {
                println!("  terminated after {} steps", t + 1);
                break;
            }
        }
        println!("  return {total:.1}, final obs {:.3?}", state.observe().values);
    }
    Ok(())
}

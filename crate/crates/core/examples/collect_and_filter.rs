//! Random-interaction data collection and forbidden-region filtering.
//!
//! cargo run --release --example collect_and_filter -- [out.txt]

use ugcem::data::{collect_random, filter_region, fit_norm_stats, TransitionBuffer};
use ugcem::env::EnvId;

fn main() -> ugcem::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ugcem_cartpole_dataset.txt"));
    for env in [EnvId::Cartpole, EnvId::Pendulum] {
        let raw = collect_random(env, 10_000, 0)?;
        let region = env.default_region();
        let kept = filter_region(&raw, &region)?;
        println!(
            "{env}: {} transitions, {} removed by {:?}",
            raw.len(),
            raw.len() - kept.len(),
            region
        );
        let stats = fit_norm_stats(&kept)?;
        println!("  input mean {:.3?}", stats.mean);
        println!("  input std  {:.3?}", stats.std);
        if env == EnvId::Cartpole {
            kept.save(&out)?;
            let back = TransitionBuffer::load(&out)?;
            assert_eq!(back.len(), kept.len());
            println!("  saved to {}", out.display());
        }
    }
    Ok(())
}

//! Trains a bootstrap ensemble on filtered cartpole data and queries it.
//!
//! The full-size model (3 × 200 hidden, 50 epochs) takes a few minutes on
//! one core; pass `--full` to use it.

use ugcem::data::{collect_random, filter_region};
use ugcem::ensemble::{train_ensemble, Ensemble, TrainConfig};
use ugcem::env::EnvId;
use ugcem::seed;

fn main() -> ugcem::Result<()> {
    let full = std::env::args().any(|a| a == "--full");
    let env = EnvId::Cartpole;
    let data = filter_region(&collect_random(env, 10_000, 0)?, &env.default_region())?;
    let config = if full {
        TrainConfig::default()
    } else {
        TrainConfig { hidden: vec![32, 32, 32], epochs: 20, ..TrainConfig::default() }
    };
    let (ens, history) = train_ensemble(&data, &config, 0)?;
    for (m, losses) in history.iter().enumerate() {
        let picks: Vec<String> = losses.iter().step_by(5).map(|l| format!("{l:.3}")).collect();
        println!("member {m} nll every 5 epochs: {}", picks.join(" "));
    }

    let obs = [0.0, 0.0, 0.0, 0.0];
    let action = [0.5];
    for m in 0..ens.size() {
        let (mean, var) = ens.predict_dist(m, &obs, &action)?;
        let var: Vec<String> = var.iter().map(|v| format!("{v:.2e}")).collect();
        println!("member {m}: next mean {mean:.5?} var [{}]", var.join(", "));
    }
    let mut rng = seed::stream(7, &[]);
    println!("sample from member 0: {:.5?}", ens.sample_next(0, &obs, &action, &mut rng)?);

    let path = std::env::temp_dir().join("ugcem_example_ensemble.txt");
    ens.save(&path)?;
    let back = Ensemble::load(&path)?;
    assert_eq!(back.predict_dist(0, &obs, &action)?, ens.predict_dist(0, &obs, &action)?);
    println!("checkpoint round trip ok ({})", path.display());
    Ok(())
}

//! One-step uncertainty over a cartpole (x, θ) grid. Cells below the data
//! divide at θ = −0.105 lie outside the training distribution.
//!
//! cargo run --release --example uncertainty_heatmap -- [heatmap.csv]

use ugcem::data::{collect_random, filter_region};
use ugcem::ensemble::{train_ensemble, TrainConfig};
use ugcem::env::EnvId;
use ugcem::harness::{uncertainty_heatmap, GridSpec};

fn main() -> ugcem::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ugcem_heatmap.csv"));
    let env = EnvId::Cartpole;
    let data = filter_region(&collect_random(env, 10_000, 0)?, &env.default_region())?;
    let config = TrainConfig { hidden: vec![64, 64, 64], ..TrainConfig::default() };
    let (ens, _) = train_ensemble(&data, &config, 0)?;

    let grid = GridSpec { resolution: (9, 15), ..GridSpec::cartpole_default() };
    let map = uncertainty_heatmap(&ens, &grid, 200, 12, 0)?;
    map.write_csv(&out)?;

    println!("rows: θ, columns: x from {:.2} to {:.2}", grid.range1.0, grid.range1.1);
    for (j, theta) in map.values2.iter().enumerate().rev() {
        let row: Vec<String> = (0..map.values1.len()).map(|i| format!("{:.1e}", map.omega[[i, j]])).collect();
        let mark = if *theta < -0.105 { '*' } else { ' ' };
        println!("{theta:+.3}{mark} {}", row.join(" "));
    }
    let ood = map.mean_where(|t| t < -0.105);
    let id = map.mean_where(|t| t >= -0.105);
    println!("mean ω below the divide {ood:.3e}, above {id:.3e}, ratio {:.2}", ood / id);
    println!("wrote {}", out.display());
    Ok(())
}

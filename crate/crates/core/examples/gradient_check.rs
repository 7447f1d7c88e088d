//! Compares backpropagated gradients of the Gaussian NLL against central
//! finite differences on random small networks.

use rand::Rng;
use ugcem::nn::{grad_check, Mlp};
use ugcem::seed;

fn main() -> ugcem::Result<()> {
    let mut worst = 0.0f64;
    for s in 0..20u64 {
        let mut rng = seed::stream(s, &[]);
        let state_dim = rng.random_range(1..=4);
        let in_dim = state_dim + 1;
        let hidden = [rng.random_range(2..=8), rng.random_range(2..=8)];
        let mut net = Mlp::new(in_dim, &hidden, state_dim, &mut rng);
        for i in 0..net.num_params() {
            net.set_param(i, net.param(i) + rng.random_range(-0.1..0.1));
        }
        let x: Vec<f64> = (0..in_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..state_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let err = grad_check(&net, &x, &y)?;
        println!("net {s:>2}: {} params, max relative error {err:.2e}", net.num_params());
        worst = worst.max(err);
    }
    println!("worst {worst:.2e}");
    Ok(())
}

//! The two boundary quantities: the coupled probability of a divisor near y,
//! and the exact count with the n-dependent window, both against ξ(y).
//!
//! cargo run --release --example boundary_probes

use divisor_density::experiment::{ntbl, pdbl, ExperimentConfig};

fn main() -> divisor_density::Result<()> {
    let cfg = ExperimentConfig {
        x_grid: vec![1_000_000],
        n_samples: 5_000,
        ..Default::default()
    };
    for p in pdbl(&cfg)? {
        println!("x = {:e} y = {:>6}  P = {:.4}  ξ = {:.4}  ratio {:.3}", p.x, p.y, p.probability, p.xi, p.probability / p.xi);
    }
    let cfg = ExperimentConfig {
        x_grid: vec![100_000, 1_000_000, 10_000_000],
        ..Default::default()
    };
    for r in ntbl(&cfg, 0.3)? {
        println!("x = {:>9}  y = x^0.3 = {:8.2}  count {:>9}  count/(x ξ(y)) = {:.4}", r.x, r.y, r.count, r.ratio);
    }
    Ok(())
}

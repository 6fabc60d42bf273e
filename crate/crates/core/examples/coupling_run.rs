//! One realization of the coupled probability space, then batch statistics
//! at a few x.
//!
//! cargo run --release --example coupling_run

use divisor_density::coupling::{run_coupling, x_label, CouplingContext, DEFAULT_TOLERANCE};
use divisor_density::experiment::{couple, ExperimentConfig};
use divisor_density::streams::stream;

fn main() -> divisor_density::Result<()> {
    let ctx = CouplingContext::new(1e6, DEFAULT_TOLERANCE)?;
    let mut rng = stream(2024, 0, 0);
    let label = x_label(&mut rng, ctx.x, ctx.tolerance)?;
    println!(
        "window ({:.3e}, {:.0e}] with {} points, anchor S_1 = {:.4} <= log x = {:.4} < S_0 = {:.4}",
        label.window.a,
        label.window.b,
        label.window.points.len(),
        label.s(1),
        label.log_x,
        label.s(0)
    );

    let r = run_coupling(&ctx, &mut rng)?;
    println!("M = {}, M* = {}, N = {} (uncoupled at this x)", r.m, r.m_star, r.n);
    println!("V prefix {:.4?}", &r.v_prefix.entries[..r.v_prefix.entries.len().min(6)]);
    println!("S_x = {:.4}, T_x = {:.4}, ‖Primes − V‖ = {:.4}", r.s_x, r.t_x, r.l1_distance);
    println!("Θ1 = {:.4}, Θ2 = {:.4}\n", r.theta1, r.theta2);

    let cfg = ExperimentConfig {
        x_grid: vec![1_000, 10_000, 1_000_000],
        n_samples: 5_000,
        law_samples: 100_000,
        ..Default::default()
    };
    let (_, sums) = couple(&cfg)?;
    for s in sums {
        println!(
            "x = {:>8}  coupled {:<5}  mean ‖Primes(M) − V‖ {:.4}  P[M ≠ M*] {:.4}  P[E] {:.4}",
            s.x, s.coupled, s.mean_l1_m, s.p_m_ne_mstar, s.p_event_e
        );
    }
    Ok(())
}

//! Maximal coupling of two discrete laws: the output follows the target law
//! and agrees with the input with probability 1 − d_TV.
//!
//! cargo run --release --example maximal_coupling

use divisor_density::coupling::{EmpiricalLaw, MaximalCoupling};
use divisor_density::streams::stream;
use rand::Rng;

fn main() -> divisor_density::Result<()> {
    let source = EmpiricalLaw::new(vec![1, 2, 3, 4, 5], vec![0.4, 0.3, 0.1, 0.1, 0.1])?;
    let target = EmpiricalLaw::new(vec![1, 2, 3, 4, 5], vec![0.1, 0.2, 0.2, 0.2, 0.3])?;
    let c = MaximalCoupling::new(source.clone(), target.clone());
    println!("d_TV = {}", c.d_tv);

    let n = 100_000;
    let mut rng = stream(1, 0, 0);
    let mut counts = [0u32; 5];
    let mut same = 0;
    for _ in 0..n {
        let (mut u, mut m) = (rng.random::<f64>(), 5);
        for (&s, &p) in source.support.iter().zip(&source.masses) {
            if u < p {
                m = s;
                break;
            }
            u -= p;
        }
        let out = c.couple(m, rng.random(), rng.random());
        counts[out as usize - 1] += 1;
        same += (out == m) as u32;
    }
    for (i, &k) in counts.iter().enumerate() {
        println!("  {}: {:.4} (target {})", i + 1, k as f64 / n as f64, target.masses[i]);
    }
    println!("kept {:.4}, expected {:.4}", same as f64 / n as f64, 1.0 - c.d_tv);
    Ok(())
}

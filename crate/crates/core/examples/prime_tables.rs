//! Sieving, Chebyshev's θ, factorization and the prime-power step function.
//!
//! cargo run --release --example prime_tables

use divisor_density::primes::{chebyshev_theta, factorize, flat_sharp_split, primes_vector, StepFunctionTable};

fn main() -> divisor_density::Result<()> {
    for y in [10.0, 100.0, 1e4, 1e6] {
        let t = chebyshev_theta(y);
        println!("theta({y:e}) = {t:.6}   theta/y = {:.6}", t / y);
    }

    let n = 2u64.pow(3) * 3 * 5u64.pow(2) * 101;
    let (flat, sharp) = flat_sharp_split(n)?;
    println!("\n{n} = {:?}", factorize(n)?);
    println!("squarefree part {flat}, squarefull part {sharp}");
    println!("relative prime sizes against x = 1e6: {:?}", primes_vector(n, 1e6)?.entries);

    let table = StepFunctionTable::global();
    println!("\nfirst steps of h(t): r0 = {:.6}", table.r0());
    for j in 1..=6 {
        let (p, v) = table.prime_power(j).unwrap();
        let l = table.lambdas();
        println!("  h = log {p}^{v} on ({:.6}, {:.6}]", l[j - 1], l[j]);
    }
    for t in [0.3, 0.6, 1.0, 2.5, 10.0] {
        println!("h({t}) = {:.6}  r({t}) = {:.6}", table.step_h(t)?, table.discrepancy_r(t)?);
    }
    Ok(())
}

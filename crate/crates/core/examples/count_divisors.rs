//! Exact H(x, y, z) with the segmented sieve, checked against the brute-force
//! oracle, plus the order-of-magnitude comparator.
//!
//! cargo run --release --example count_divisors [x]

use divisor_density::divisor_interval::{count_h_naive, count_h_sieve, ford_bound, xi, CountQuery};

fn main() -> divisor_density::Result<()> {
    let x: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1_000_000);
    println!("{:>10} {:>10} {:>10} {:>12} {:>8}", "y", "z", "H", "ford", "ratio");
    for (y, z) in [(100.0, 200.0), (100.0, 1000.0), (1000.0, 4000.0), (1000.0, 1e5)] {
        let q = CountQuery::new(x, y, z)?;
        let h = count_h_sieve(&q)?;
        let f = ford_bound(&q);
        let mark = if f.flagged { " (outside guard)" } else { "" };
        println!("{y:>10} {z:>10} {h:>10} {:>12.1} {:>8.3}{mark}", f.value, h as f64 / f.value);
    }

    let q = CountQuery::new(100_000, 30.0, 300.0)?;
    assert_eq!(count_h_sieve(&q)?, count_h_naive(&q)?);
    println!("\nsieve and naive agree at x = 1e5, (30, 300)");
    println!("ξ(1e3) = {:.6}", xi(1e3).value);
    Ok(())
}

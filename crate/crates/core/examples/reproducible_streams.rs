//! Seed splitting: results depend on the master seed only, not on the number
//! of worker threads.
//!
//! cargo run --release --example reproducible_streams

use divisor_density::pd::{estimate_h_mc, IntervalQuery, DEFAULT_TAIL_THRESHOLD};

fn main() -> divisor_density::Result<()> {
    let q = IntervalQuery::new(0.3, 0.65)?;
    let mut results = Vec::new();
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let e = pool.install(|| estimate_h_mc(&q, 100_000, 99, DEFAULT_TAIL_THRESHOLD))?;
        println!("{threads} threads: {:.10}", e.estimate);
        results.push(e.estimate);
    }
    assert!(results.windows(2).all(|w| w[0] == w[1]));
    Ok(())
}

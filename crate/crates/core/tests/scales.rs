//! Recorded-constant checks: the sieve against the order-of-magnitude
//! comparator, and the boundary count against x·ξ(y).

use divisor_density::divisor_interval::{count_h_sieve, ford_bound, ntbl_count, xi, CountQuery, FordScale};

/// Largest allowed max/min of H/comparator over the guarded grid.
const FORD_SPREAD: f64 = 10.0;

#[test]
fn ford_ratio_stays_in_a_band() {
    let x = 1_000_000u64;
    let grid = [
        (100.0, 200.0),
        (100.0, 1000.0),
        (100.0, 10000.0),
        (300.0, 600.0),
        (300.0, 30000.0),
        (1000.0, 2000.0),
        (1000.0, 20000.0),
        (1000.0, 500000.0),
        (5000.0, 10000.0),
        (9000.0, 1000000.0),
    ];
    let ratios: Vec<f64> = grid
        .iter()
        .map(|&(y, z)| {
            let q = CountQuery::new(x, y, z).unwrap();
            assert!(FordScale::in_guard(&q), "({y}, {z}) outside the guard");
            let f = ford_bound(&q);
            assert!(!f.flagged);
            count_h_sieve(&q).unwrap() as f64 / f.value
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    println!("H/comparator in [{lo:.3}, {hi:.3}]");
    assert!(lo > 0.0 && hi / lo <= FORD_SPREAD);
}

#[test]
fn ntbl_ratio_is_bounded_across_x() {
    let ratios: Vec<f64> = [100_000u64, 1_000_000]
        .iter()
        .map(|&x| {
            let y = (x as f64).powf(0.3);
            let c = ntbl_count(x, y).unwrap();
            assert!(c <= x);
            c as f64 / (x as f64 * xi(y).value)
        })
        .collect();
    println!("ntbl/(x ξ) = {ratios:?}");
    assert!(ratios.iter().all(|&r| (0.2..=5.0).contains(&r)));
    assert!(ratios[1] / ratios[0] <= 2.0);
}

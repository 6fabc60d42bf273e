//! Distributional trends of the coupling across x.

use divisor_density::coupling::{estimate_law_m, run_batch, CouplingContext, CouplingRun, DEFAULT_TOLERANCE};
use divisor_density::experiment::{coupling_context, ExperimentConfig};
use divisor_density::streams::tag;

fn runs(x: f64, n: u64, seed: u64) -> Vec<CouplingRun> {
    let ctx = CouplingContext::new(x, DEFAULT_TOLERANCE).unwrap();
    run_batch(&ctx, seed, tag::COUPLING, n).unwrap()
}

fn freq(runs: &[CouplingRun], f: impl Fn(&CouplingRun) -> bool) -> f64 {
    runs.iter().filter(|r| f(r)).count() as f64 / runs.len() as f64
}

#[test]
fn invariants_hold_on_every_run() {
    for x in [2.0, 50.0, 1e3, 1e5] {
        for r in runs(x, 2_000, 1) {
            assert!(r.s_x >= 0.0 && r.t_x >= 0.0 && r.l1_distance >= 0.0);
            assert_eq!(r.event_e, r.n == r.m && r.m == r.m_star);
            assert_eq!(r.m, r.j * r.p_extra);
            assert_eq!(r.m_star, r.j_star * r.p_extra_star);
            let total: f64 = r.l_prefix.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn event_e_becomes_more_likely() {
    let cfg = ExperimentConfig {
        law_samples: 200_000,
        ..Default::default()
    };
    let p: Vec<f64> = [1e3, 1e4, 1e5]
        .iter()
        .map(|&x| {
            let (ctx, _) = coupling_context(x, &cfg).unwrap();
            let r = run_batch(&ctx, 2, tag::COUPLING, 20_000).unwrap();
            freq(&r, |r| r.event_e)
        })
        .collect();
    println!("P[E] = {p:?}");
    assert!(p[0] < p[1] && p[1] < p[2]);
}

#[test]
fn exceedance_is_rare() {
    // N = M at both x; the coupled N at 1e4 carries the noise of the
    // estimated law and is only reported
    let n = 100_000;
    for (x, seed) in [(1e4, 3), (1e6, 4)] {
        let p = freq(&runs(x, n, seed), |r| r.l1_distance_m >= r.s_x.max(r.t_x));
        println!("P[distance(M) >= max(S, T)] at {x:e}: {p}");
        assert!(p * f64::ln(x) <= 1.0);
    }
    let cfg = ExperimentConfig::default();
    let (ctx, _) = coupling_context(1e4, &cfg).unwrap();
    let r = run_batch(&ctx, 3, tag::COUPLING, 20_000).unwrap();
    println!("coupled N at 1e4: {}", freq(&r, |r| r.l1_distance >= r.s_x.max(r.t_x)));
}

#[test]
fn theta_tail_and_mgf() {
    let r = runs(1e3, 100_000, 5);
    let y: f64 = 1e3;
    let tail = freq(&r, |r| r.theta1 + r.theta2 > 3.0 * y.ln().ln());
    assert!(tail < 10.0 / y.ln(), "tail {tail}");
    let mgf = |s: &[CouplingRun]| s.iter().map(|r| (r.theta1 + r.theta2).exp()).sum::<f64>() / s.len() as f64;
    let (small, large) = (mgf(&r[..10_000]), mgf(&r));
    println!("E[exp Θ]: {small} (1e4), {large} (1e5)");
    assert!(large.is_finite() && (small / large - 1.0).abs() < 0.1);
}

#[test]
fn law_m_support_is_near_x() {
    let ctx = CouplingContext::new(1e3, DEFAULT_TOLERANCE).unwrap();
    let (law, over) = estimate_law_m(&ctx, 6, 100_000).unwrap();
    assert!((law.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // M exceeds x only through the last extra prime; rare, and counted
    assert!((over as f64) < 0.01 * 100_000.0);
    assert!(*law.support.first().unwrap() >= 1);
}

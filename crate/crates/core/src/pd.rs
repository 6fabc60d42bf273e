//! GEM and Poisson–Dirichlet(1) sampling, the finite-dimensional density,
//! and membership in `D(u, v)`.

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;

use crate::dickman::DickmanTable;
use crate::streams::{self, tag};
use crate::{Error, Result};

/// Default stopping threshold for the remaining stick.
pub const DEFAULT_TAIL_THRESHOLD: f64 = 1e-8;
/// Samples per independently seeded Monte Carlo block.
pub const MC_BLOCK: u64 = 1 << 14;
/// Tail mass below which a short prefix is taken to decide `in_d` by itself.
pub const PREFIX_TAIL_SLACK: f64 = 1e-6;
/// Relative tolerance used when flooring `1/(v − u)`.
const K_SLACK: f64 = 1e-12;

/// A truncated point of the simplex: kept entries plus the unsampled mass.
#[derive(Clone, Debug, PartialEq)]
pub struct PdPrefix {
    pub entries: Vec<f64>,
    pub tail_mass: f64,
}

impl PdPrefix {
    pub fn sum(&self) -> f64 {
        self.entries.iter().sum()
    }

    fn sort_descending(&mut self) {
        self.entries.sort_unstable_by(|a, b| b.total_cmp(a));
    }
}

/// `(u, v)` together with `k = ⌊1/(v − u)⌋`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalQuery {
    pub u: f64,
    pub v: f64,
    pub k: usize,
}

impl IntervalQuery {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        if !(u >= 0.0 && u < v && v <= 1.0) {
            return Err(Error::domain(format!("need 0 <= u < v <= 1, got ({u}, {v})")));
        }
        let w = v - u;
        // decimal inputs such as 0.45 - 0.35 land a few ulps above 1/10;
        // a relative slack of 1e-12 keeps k at its exact-arithmetic value
        let k = ((1.0 / w) * (1.0 + K_SLACK)).floor() as usize;
        Ok(Self { u, v, k: k.max(1) })
    }

    /// Strict membership of a single sum in `(u, v)`.
    pub fn inside(&self, s: f64) -> bool {
        self.u < s && s < self.v
    }
}

fn check_threshold(tail_threshold: f64) -> Result<()> {
    if tail_threshold > 0.0 && tail_threshold <= 1e-6 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "tail_threshold must be in (0, 1e-6], got {tail_threshold}"
        )))
    }
}

/// Stick-breaking with break proportions supplied by `next_break`, in GEM
/// order. Stops when the remaining stick drops below `tail_threshold`.
pub fn stick_break(mut next_break: impl FnMut() -> f64, tail_threshold: f64) -> PdPrefix {
    let mut remaining = 1.0f64;
    let mut entries = Vec::with_capacity(32);
    while remaining >= tail_threshold {
        let b = next_break();
        let piece = b * remaining;
        entries.push(piece);
        remaining -= piece;
    }
    PdPrefix {
        entries,
        tail_mass: remaining,
    }
}

/// A GEM(1) prefix in stick-breaking order.
pub fn sample_gem<R: Rng + ?Sized>(rng: &mut R, tail_threshold: f64) -> Result<PdPrefix> {
    check_threshold(tail_threshold)?;
    Ok(stick_break(|| rng.sample(Open01), tail_threshold))
}

/// A PD(1) prefix: a GEM sample sorted non-increasingly.
pub fn sample_pd<R: Rng + ?Sized>(rng: &mut R, tail_threshold: f64) -> Result<PdPrefix> {
    let mut p = sample_gem(rng, tail_threshold)?;
    p.sort_descending();
    Ok(p)
}

/// The PD(1) density of the `k` largest coordinates at `t`, given in
/// non-increasing order: `ρ((1 − Σt)/t_k)/(t_1⋯t_k)`. Zero when `Σt > 1` or
/// `t` is not ordered, `+∞` when some coordinate is 0.
pub fn pd_density(t: &[f64], table: &DickmanTable) -> Result<f64> {
    if t.is_empty() {
        return Err(Error::domain("pd_density needs k >= 1"));
    }
    if t.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::domain("pd_density needs nonnegative coordinates"));
    }
    if t.windows(2).any(|w| w[0] < w[1]) {
        return Ok(0.0);
    }
    let s: f64 = t.iter().sum();
    if s > 1.0 {
        return Ok(0.0);
    }
    let last = t[t.len() - 1];
    if last == 0.0 {
        return Ok(f64::INFINITY);
    }
    let prod: f64 = t.iter().product();
    let arg = ((1.0 - s) / last).max(0.0);
    Ok(table.rho_unchecked(arg) / prod)
}

/// Pruned depth-first search for a subset of `x` (non-increasing) whose sum
/// lies strictly inside `(u, v)`.
pub fn has_subsum_in(x: &[f64], u: f64, v: f64) -> bool {
    let mut suffix = vec![0.0; x.len() + 1];
    for i in (0..x.len()).rev() {
        suffix[i] = suffix[i + 1] + x[i];
    }
    fn dfs(x: &[f64], suffix: &[f64], i: usize, sum: f64, u: f64, v: f64) -> bool {
        if u < sum && sum < v {
            return true;
        }
        if i == x.len() || sum >= v || sum + suffix[i] <= u {
            return false;
        }
        dfs(x, suffix, i + 1, sum + x[i], u, v) || dfs(x, suffix, i + 1, sum, u, v)
    }
    dfs(x, &suffix, 0, 0.0, u, v)
}

/// Exhaustive `2^k` subset enumeration; the oracle for [`has_subsum_in`].
pub fn has_subsum_in_exhaustive(x: &[f64], u: f64, v: f64) -> bool {
    assert!(x.len() < 26, "exhaustive enumeration limited to 25 entries");
    (0u32..1 << x.len()).any(|mask| {
        let s: f64 = (0..x.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| x[i])
            .sum();
        u < s && s < v
    })
}

/// Whether the prefix has a subsum of its first `k` entries in `(u, v)`.
pub fn in_d(prefix: &PdPrefix, q: &IntervalQuery) -> Result<bool> {
    if prefix.entries.len() < q.k && prefix.tail_mass >= PREFIX_TAIL_SLACK {
        return Err(Error::InsufficientPrefix(format!(
            "{} entries with tail {:e}; need {} entries or tail below {PREFIX_TAIL_SLACK:e}",
            prefix.entries.len(),
            prefix.tail_mass,
            q.k
        )));
    }
    let k = q.k.min(prefix.entries.len());
    Ok(has_subsum_in(&prefix.entries[..k], q.u, q.v))
}

/// A Monte Carlo proportion with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: u64,
}

impl McEstimate {
    pub fn from_counts(hits: u64, n: u64) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            estimate: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            n_samples: n,
        }
    }
}

/// Number of hits of `event` over `n_samples` PD prefixes, drawn in fixed
/// blocks of [`MC_BLOCK`] with one stream per block, so the count depends
/// only on `(master_seed, stream_tag)` and not on the thread count.
pub fn count_pd_events<F>(
    n_samples: u64,
    master_seed: u64,
    stream_tag: u64,
    tail_threshold: f64,
    event: F,
) -> Result<u64>
where
    F: Fn(&PdPrefix) -> Result<bool> + Sync,
{
    check_threshold(tail_threshold)?;
    let blocks = n_samples.div_ceil(MC_BLOCK);
    let counts: Result<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = streams::stream(master_seed, stream_tag, b);
            let m = MC_BLOCK.min(n_samples - b * MC_BLOCK);
            let mut hits = 0;
            for _ in 0..m {
                let p = sample_pd(&mut rng, tail_threshold)?;
                hits += event(&p)? as u64;
            }
            Ok(hits)
        })
        .collect();
    Ok(counts?.into_iter().sum())
}

/// `h(u, v) = μ(D(u, v))` estimated from `n_samples` PD draws.
pub fn estimate_h_mc(
    q: &IntervalQuery,
    n_samples: u64,
    master_seed: u64,
    tail_threshold: f64,
) -> Result<McEstimate> {
    if n_samples < 1000 {
        return Err(Error::domain(format!("estimate_h_mc needs n_samples >= 1000, got {n_samples}")));
    }
    let hits = count_pd_events(n_samples, master_seed, tag::PD_MC, tail_threshold, |p| in_d(p, q))?;
    Ok(McEstimate::from_counts(hits, n_samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dickman::rho;

    /// `∫_a^b ρ((1−s)/s)/s ds` by composite Simpson.
    fn v1_mass(a: f64, b: f64, n: usize) -> f64 {
        let t = DickmanTable::standard();
        let h = (b - a) / n as f64;
        let f = |s: f64| {
            if s <= 0.0 {
                0.0
            } else {
                pd_density(&[s], t).unwrap()
            }
        };
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn query_k() {
        assert_eq!(IntervalQuery::new(0.2, 0.8).unwrap().k, 1);
        assert_eq!(IntervalQuery::new(0.3, 0.65).unwrap().k, 2);
        assert_eq!(IntervalQuery::new(0.35, 0.45).unwrap().k, 10);
        assert_eq!(IntervalQuery::new(0.45, 0.55).unwrap().k, 10);
        assert_eq!(IntervalQuery::new(0.0, 0.25).unwrap().k, 4);
        assert_eq!(IntervalQuery::new(0.0, 1.0).unwrap().k, 1);
        assert!(IntervalQuery::new(0.5, 0.5).is_err());
        assert!(IntervalQuery::new(0.5, 1.1).is_err());
        for i in 1..500 {
            let w = i as f64 / 500.0;
            let q = IntervalQuery::new(0.0, w).unwrap();
            assert!((1.0 / (q.k + 1) as f64) < w);
            assert!(w <= (1.0 + 1e-12) / q.k as f64);
        }
    }

    #[test]
    fn forced_halves() {
        let p = stick_break(|| 0.5, 1e-6);
        for (i, &e) in p.entries.iter().enumerate() {
            assert_eq!(e, 0.5f64.powi(i as i32 + 1));
        }
        assert!(p.tail_mass < 1e-6);
        assert!((p.sum() + p.tail_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_checked() {
        let mut rng = streams::stream(1, 0, 0);
        assert!(sample_gem(&mut rng, 0.0).is_err());
        assert!(sample_gem(&mut rng, 1e-3).is_err());
    }

    #[test]
    fn conservation_and_order() {
        let mut rng = streams::stream(7, 0, 0);
        for _ in 0..20_000 {
            let p = sample_pd(&mut rng, DEFAULT_TAIL_THRESHOLD).unwrap();
            assert!((p.sum() + p.tail_mass - 1.0).abs() < 1e-12);
            assert!(p.entries.windows(2).all(|w| w[0] >= w[1]));
            assert!(p.entries.iter().all(|&e| e > 0.0));
            assert!(p.tail_mass < DEFAULT_TAIL_THRESHOLD);
        }
    }

    #[test]
    fn gem_first_stick_mean() {
        let mut rng = streams::stream(11, 0, 0);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_gem(&mut rng, 1e-6).unwrap().entries[0])
            .sum::<f64>()
            / n as f64;
        let sigma = (1.0 / 12.0 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sigma, "mean = {mean}");
    }

    #[test]
    fn density_examples() {
        let t = DickmanTable::standard();
        assert!((pd_density(&[0.9], t).unwrap() - 1.0 / 0.9).abs() < 1e-12);
        let expected = (1.0 - 1.5f64.ln()) / 0.4;
        assert!((pd_density(&[0.4], t).unwrap() - expected).abs() < 1e-9);
        assert_eq!(pd_density(&[0.5, 0.5], t).unwrap(), 4.0);
        assert_eq!(pd_density(&[0.7, 0.5], t).unwrap(), 0.0);
        assert_eq!(pd_density(&[0.2, 0.5], t).unwrap(), 0.0);
        assert_eq!(pd_density(&[0.5, 0.0], t).unwrap(), f64::INFINITY);
        assert!(pd_density(&[], t).is_err());
    }

    #[test]
    fn density_normalised() {
        let total = v1_mass(0.0, 1.0, 20_000);
        assert!((total - 1.0).abs() < 1e-6, "total = {total}");
    }

    #[test]
    fn first_coordinate_marginals() {
        // the 1-D quadrature oracle agrees with ρ(5) and log(5/4)
        assert!((v1_mass(0.0, 0.2, 20_000) - rho(5.0).unwrap()).abs() < 1e-8);
        assert!((v1_mass(0.8, 1.0, 2_000) - 1.25f64.ln()).abs() < 1e-10);

        let n = 1_000_000;
        let below = count_pd_events(n, 3, 0, 1e-8, |p| Ok(p.entries[0] <= 0.2)).unwrap();
        let above = count_pd_events(n, 3, 0, 1e-8, |p| Ok(p.entries[0] >= 0.8)).unwrap();
        for (hits, target) in [(below, rho(5.0).unwrap()), (above, 1.25f64.ln())] {
            let est = McEstimate::from_counts(hits, n);
            let sigma = (target * (1.0 - target) / n as f64).sqrt();
            assert!(
                (est.estimate - target).abs() < 3.0 * sigma,
                "estimate {} vs {target}",
                est.estimate
            );
        }
    }

    #[test]
    fn in_d_examples() {
        let p = PdPrefix {
            entries: vec![0.5, 0.3, 0.2],
            tail_mass: 0.0,
        };
        assert!(!in_d(&p, &IntervalQuery::new(0.35, 0.45).unwrap()).unwrap());
        assert!(in_d(&p, &IntervalQuery::new(0.45, 0.55).unwrap()).unwrap());
        assert!(in_d(&p, &IntervalQuery::new(0.0, 1.0).unwrap()).unwrap());
        // endpoints are outside
        assert!(!has_subsum_in(&[0.5, 0.3, 0.2], 0.5, 0.7));
        let short = PdPrefix {
            entries: vec![0.6, 0.3],
            tail_mass: 0.1,
        };
        assert!(matches!(
            in_d(&short, &IntervalQuery::new(0.35, 0.45).unwrap()),
            Err(Error::InsufficientPrefix(_))
        ));
    }

    #[test]
    fn pruned_matches_exhaustive() {
        let mut rng = streams::stream(5, 0, 0);
        for case in 0..1000 {
            let p = sample_pd(&mut rng, 1e-8).unwrap();
            let k = 1 + case % 12;
            let x = &p.entries[..k.min(p.entries.len())];
            let u: f64 = rng.random::<f64>() * 0.9;
            let v = u + rng.random::<f64>() * (1.0 - u);
            assert_eq!(has_subsum_in(x, u, v), has_subsum_in_exhaustive(x, u, v));
        }
    }

    #[test]
    fn complement_duality() {
        // full-mass vectors with dyadic-free entries
        let mut rng = streams::stream(9, 0, 0);
        for _ in 0..2000 {
            let n = 1 + (rng.random::<u32>() % 8) as usize;
            let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let s: f64 = x.iter().sum();
            x.iter_mut().for_each(|e| *e /= s);
            x.sort_by(|a, b| b.total_cmp(a));
            let u = rng.random::<f64>() * 0.8;
            let v = u + 0.01 + rng.random::<f64>() * (0.99 - u);
            let v = v.min(1.0);
            assert_eq!(
                has_subsum_in_exhaustive(&x, u, v),
                has_subsum_in_exhaustive(&x, 1.0 - v, 1.0 - u)
            );
        }
    }

    #[test]
    fn two_dimensional_marginal() {
        // μ(V_1 >= 0.3, V_2 >= 0.2) by midpoint quadrature over the ordered triangle
        let t = DickmanTable::standard();
        let m = 1200;
        let (a, b) = (0.3, 0.2);
        let mut oracle = 0.0;
        let h1 = (1.0 - a) / m as f64;
        for i in 0..m {
            let t1 = a + (i as f64 + 0.5) * h1;
            let hi = t1.min(1.0 - t1);
            if hi <= b {
                continue;
            }
            let h2 = (hi - b) / m as f64;
            for j in 0..m {
                let t2 = b + (j as f64 + 0.5) * h2;
                oracle += pd_density(&[t1, t2], t).unwrap() * h1 * h2;
            }
        }
        let n = 1_000_000;
        let hits = count_pd_events(n, 21, 0, 1e-8, |p| Ok(p.entries[0] >= a && p.entries[1] >= b)).unwrap();
        let est = McEstimate::from_counts(hits, n);
        let sigma = (oracle * (1.0 - oracle) / n as f64).sqrt();
        assert!((est.estimate - oracle).abs() < 3.0 * sigma, "{} vs {oracle}", est.estimate);
    }

    #[test]
    fn h_mc_k1() {
        let q = IntervalQuery::new(0.2, 0.8).unwrap();
        let est = estimate_h_mc(&q, 200_000, 17, DEFAULT_TAIL_THRESHOLD).unwrap();
        let target = 1.0 - rho(5.0).unwrap() - 1.25f64.ln();
        assert!((est.estimate - target).abs() < 3.0 * est.std_error);
        let all = estimate_h_mc(&IntervalQuery::new(0.0, 1.0).unwrap(), 10_000, 1, 1e-8).unwrap();
        assert_eq!(all.estimate, 1.0);
        assert!(estimate_h_mc(&q, 10, 1, 1e-8).is_err());
    }

    #[test]
    fn blocks_independent_of_threads() {
        let q = IntervalQuery::new(0.3, 0.65).unwrap();
        let a = estimate_h_mc(&q, 40_000, 99, 1e-8).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| estimate_h_mc(&q, 40_000, 99, 1e-8).unwrap());
        assert_eq!(a, b);
    }
}

//! Exact counts of integers with a divisor in an open interval, and the
//! comparator scales used to judge them.

use rayon::prelude::*;

use crate::primes::factorize;
use crate::{Error, Flagged, Result};

/// `δ = 1 - (1 + log log 2)/log 2`.
pub fn ford_delta() -> f64 {
    let l2 = std::f64::consts::LN_2;
    1.0 - (1.0 + l2.ln()) / l2
}

/// Largest `x` accepted by [`count_h_sieve`].
pub const SIEVE_BUDGET: u64 = 1_000_000_000;
/// Largest `x` accepted by [`count_h_naive`].
pub const NAIVE_BUDGET: u64 = 1_000_000;
/// Largest `x` accepted by [`ntbl_count`].
pub const NTBL_BUDGET: u64 = 10_000_000;

/// Bits per sieve segment.
const SEGMENT_BITS: u64 = 1 << 24;

/// A request for `H(x, y, z)`: integers `n <= x` with a divisor `d`,
/// `y < d < z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CountQuery {
    pub x: u64,
    pub y: f64,
    pub z: f64,
}

impl CountQuery {
    pub fn new(x: u64, y: f64, z: f64) -> Result<Self> {
        if x == 0 {
            return Err(Error::domain("H(x, y, z) needs x >= 1"));
        }
        if !(y.is_finite() && z.is_finite() && y >= 0.0 && y < z) {
            return Err(Error::domain(format!("H(x, y, z) needs 0 <= y < z, got ({y}, {z})")));
        }
        Ok(Self { x, y, z })
    }

    /// The integers `d` with `y < d < z` and `d <= x`, as an inclusive range.
    fn candidate_range(&self) -> Option<(u64, u64)> {
        let lo = self.y.floor() as u64 + 1;
        let hi_real = self.z.ceil() - 1.0;
        if hi_real < 1.0 {
            return None;
        }
        let hi = (hi_real as u64).min(self.x);
        (lo <= hi).then_some((lo, hi))
    }
}

/// `true` iff some divisor `d` of `n` satisfies `y < d < z`.
pub fn has_divisor_in(n: u64, y: f64, z: f64) -> Result<bool> {
    if n == 0 {
        return Err(Error::domain("has_divisor_in needs n >= 1"));
    }
    if !(y < z) {
        return Ok(false);
    }
    Ok(factorize(n)?.divisors().into_iter().any(|d| {
        let d = d as f64;
        y < d && d < z
    }))
}

/// `H(x, y, z)` by marking multiples of every qualifying `d` in a segmented
/// bitset and counting marked bits. Segments are processed in parallel.
pub fn count_h_sieve(q: &CountQuery) -> Result<u64> {
    if q.x > SIEVE_BUDGET {
        return Err(Error::resource(format!(
            "count_h_sieve: x = {} exceeds budget {SIEVE_BUDGET}",
            q.x
        )));
    }
    let Some((dlo, dhi)) = q.candidate_range() else {
        return Ok(0);
    };
    let n_segments = q.x.div_ceil(SEGMENT_BITS);
    let total = (0..n_segments)
        .into_par_iter()
        .map(|seg| {
            // covers n in [start, end)
            let start = 1 + seg * SEGMENT_BITS;
            let end = (start + SEGMENT_BITS).min(q.x + 1);
            let len = (end - start) as usize;
            let mut bits = vec![0u64; len.div_ceil(64)];
            for d in dlo..=dhi.min(end - 1) {
                let mut m = start.div_ceil(d) * d;
                while m < end {
                    let off = (m - start) as usize;
                    bits[off >> 6] |= 1 << (off & 63);
                    m += d;
                }
            }
            bits.iter().map(|w| w.count_ones() as u64).sum::<u64>()
        })
        .sum();
    Ok(total)
}

/// `H(x, y, z)` by enumerating divisor pairs `(d, n/d)` with `d <= √n` for
/// each `n`. Independent oracle for [`count_h_sieve`].
pub fn count_h_naive(q: &CountQuery) -> Result<u64> {
    if q.x > NAIVE_BUDGET {
        return Err(Error::resource(format!(
            "count_h_naive: x = {} exceeds budget {NAIVE_BUDGET}",
            q.x
        )));
    }
    let inside = |d: u64| {
        let d = d as f64;
        q.y < d && d < q.z
    };
    let mut count = 0;
    for n in 1..=q.x {
        let mut d = 1;
        while d * d <= n {
            if n % d == 0 && (inside(d) || inside(n / d)) {
                count += 1;
                break;
            }
            d += 1;
        }
    }
    Ok(count)
}

/// `w = log(z/y) / log y` and `δ` for a query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FordScale {
    pub w: f64,
    pub delta: f64,
}

impl FordScale {
    pub fn of(q: &CountQuery) -> Self {
        Self {
            w: (q.z / q.y).ln() / q.y.ln(),
            delta: ford_delta(),
        }
    }

    /// `2y <= z <= min(y², x)` and `100 <= y <= x^{2/3}`.
    pub fn in_guard(q: &CountQuery) -> bool {
        let x = q.x as f64;
        2.0 * q.y <= q.z && q.z <= (q.y * q.y).min(x) && q.y >= 100.0 && q.y <= x.powf(2.0 / 3.0)
    }
}

/// The order-of-magnitude comparator `x w^δ (log 2/w)^{-3/2}`. Flagged
/// outside its guard; NaN (and flagged) when `w >= 2`.
pub fn ford_bound(q: &CountQuery) -> Flagged<f64> {
    let s = FordScale::of(q);
    if !(s.w > 0.0 && s.w < 2.0) {
        return Flagged::flagged(f64::NAN);
    }
    let value = q.x as f64 * s.w.powf(s.delta) * (2.0 / s.w).ln().powf(-1.5);
    if FordScale::in_guard(q) {
        Flagged::ok(value)
    } else {
        Flagged::flagged(value)
    }
}

/// `ξ(y) = (log y)^{-δ} (log log y)^{-3/2}`, flagged for `y <= e^e`.
pub fn xi(y: f64) -> Flagged<f64> {
    let ly = y.ln();
    let value = ly.powf(-ford_delta()) * ly.ln().powf(-1.5);
    if y > std::f64::consts::E.powf(std::f64::consts::E) {
        Flagged::ok(value)
    } else {
        Flagged::flagged(value)
    }
}

/// Membership of `n` in `{n : ∃ d | n, y/κ < d < yκ}`.
pub fn in_h_set(n: u64, y: f64, kappa: f64) -> Result<bool> {
    if !(kappa > 1.0) {
        return Err(Error::domain(format!("in_h_set needs kappa > 1, got {kappa}")));
    }
    has_divisor_in(n, y / kappa, y * kappa)
}

/// Linear sieve of smallest prime factors for `0..=limit`.
fn smallest_prime_factors(limit: usize) -> Vec<u32> {
    let mut spf = vec![0u32; limit + 1];
    let mut primes: Vec<u32> = Vec::new();
    for i in 2..=limit {
        if spf[i] == 0 {
            spf[i] = i as u32;
            primes.push(i as u32);
        }
        let si = spf[i];
        for &p in &primes {
            let m = i * p as usize;
            if p > si || m > limit {
                break;
            }
            spf[m] = p;
        }
    }
    spf
}

/// Counts `n <= x` having a divisor in `(y (x/n♭)^{-5}, y (x/n♭)^5)`, with `n♭`
/// the squarefree part of `n`.
pub fn ntbl_count(x: u64, y: f64) -> Result<u64> {
    if !(y >= 3.0 && y <= x as f64) {
        return Err(Error::domain(format!("ntbl_count needs 3 <= y <= x, got y = {y}, x = {x}")));
    }
    if x > NTBL_BUDGET {
        return Err(Error::resource(format!("ntbl_count: x = {x} exceeds budget {NTBL_BUDGET}")));
    }
    let spf = smallest_prime_factors(x as usize);
    let xf = x as f64;
    let count = (1..x as usize + 1)
        .into_par_iter()
        .with_min_len(4096)
        .filter(|&n| {
            let mut factors: Vec<(u64, u32)> = Vec::with_capacity(8);
            let mut rest = n;
            while rest > 1 {
                let p = spf[rest] as usize;
                let mut m = 0;
                while rest % p == 0 {
                    rest /= p;
                    m += 1;
                }
                factors.push((p as u64, m));
            }
            let flat: f64 = factors
                .iter()
                .filter(|&&(_, m)| m == 1)
                .map(|&(p, _)| p as f64)
                .product();
            let kappa5 = (xf / flat).powi(5);
            let lo = y / kappa5;
            let hi = y * kappa5;
            // divisors of n, checked as they are generated
            let mut divs = vec![1u64];
            for &(p, m) in &factors {
                let len = divs.len();
                let mut pk = 1u64;
                for _ in 0..m {
                    pk *= p;
                    for i in 0..len {
                        divs.push(divs[i] * pk);
                    }
                }
            }
            divs.iter().any(|&d| {
                let d = d as f64;
                lo < d && d < hi
            })
        })
        .count();
    Ok(count as u64)
}

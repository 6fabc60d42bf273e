//! Primes, factorizations, Chebyshev's θ and the prime-power step function.

use std::sync::OnceLock;

use crate::{Error, Result};

/// Euler–Mascheroni constant to 20 decimal digits.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Largest sieve bound accepted by [`sieve_primes`]. The odd-only bitset for
/// this bound occupies 256 MiB.
pub const MAX_SIEVE_LIMIT: u64 = 1 << 32;

/// All primes `<= limit`, ascending.
///
/// Sieve of Eratosthenes over odd numbers only, one bit per odd.
pub fn sieve_primes(limit: u64) -> Result<Vec<u64>> {
    if limit < 2 {
        return Err(Error::domain(format!("sieve limit {limit} < 2")));
    }
    if limit > MAX_SIEVE_LIMIT {
        return Err(Error::resource(format!(
            "sieve limit {limit} exceeds budget {MAX_SIEVE_LIMIT}"
        )));
    }
    // bit i stands for the odd number 2i + 1
    let n_odd = (limit as usize).div_ceil(2);
    let mut composite = vec![0u64; n_odd.div_ceil(64)];
    let mut i = 1usize;
    loop {
        let p = 2 * i + 1;
        if p * p > limit as usize {
            break;
        }
        if composite[i / 64] >> (i % 64) & 1 == 0 {
            let mut j = p * p / 2;
            while j < n_odd {
                composite[j / 64] |= 1 << (j % 64);
                j += p;
            }
        }
        i += 1;
    }
    let mut primes = Vec::with_capacity(estimate_prime_count(limit));
    primes.push(2);
    for i in 1..n_odd {
        if composite[i / 64] >> (i % 64) & 1 == 0 {
            primes.push(2 * i as u64 + 1);
        }
    }
    Ok(primes)
}

fn estimate_prime_count(limit: u64) -> usize {
    let x = limit as f64;
    if x < 17.0 {
        8
    } else {
        (1.26 * x / x.ln()) as usize
    }
}

/// Primes up to 10⁵, enough to trial-divide any `n <= 10¹⁰` completely.
fn small_primes() -> &'static [u64] {
    static SMALL: OnceLock<Vec<u64>> = OnceLock::new();
    SMALL.get_or_init(|| sieve_primes(100_000).expect("static sieve bound"))
}

/// A sieved prime list with running Chebyshev sums, for repeated θ queries
/// and for inverting θ.
#[derive(Clone, Debug)]
pub struct PrimeTable {
    limit: u64,
    primes: Vec<u64>,
    // theta[i] = log p_0 + ... + log p_i, accumulated in ascending order
    theta: Vec<f64>,
}

impl PrimeTable {
    pub fn new(limit: u64) -> Result<Self> {
        let primes = sieve_primes(limit.max(2))?;
        let mut theta = Vec::with_capacity(primes.len());
        let mut acc = 0.0;
        for &p in &primes {
            acc += (p as f64).ln();
            theta.push(acc);
        }
        Ok(Self {
            limit: limit.max(2),
            primes,
            theta,
        })
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    /// θ(y) for `y <= limit`.
    pub fn theta(&self, y: f64) -> Result<f64> {
        if y > self.limit as f64 + 0.5 {
            return Err(Error::domain(format!(
                "theta({y}) beyond table limit {}",
                self.limit
            )));
        }
        let count = self.primes.partition_point(|&p| (p as f64) <= y);
        Ok(if count == 0 { 0.0 } else { self.theta[count - 1] })
    }

    /// The smallest prime `p` with `θ(p) >= target`, for `0 < target <= θ(limit)`.
    pub fn smallest_prime_with_theta_at_least(&self, target: f64) -> Option<u64> {
        let idx = self.theta.partition_point(|&t| t < target);
        self.primes.get(idx).copied()
    }
}

/// Chebyshev's function θ(y) = Σ_{p ≤ y} log p. Zero for `y < 2`.
pub fn chebyshev_theta(y: f64) -> f64 {
    if !(y >= 2.0) {
        return 0.0;
    }
    let limit = y.floor() as u64;
    match sieve_primes(limit) {
        Ok(primes) => primes.iter().map(|&p| (p as f64).ln()).sum(),
        // beyond the sieve budget the caller gets the best bounded answer
        Err(_) => f64::NAN,
    }
}

/// The prime factorization of a positive integer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorVector {
    pub n: u64,
    /// `(prime, multiplicity)`, primes strictly increasing.
    pub factors: Vec<(u64, u32)>,
}

impl FactorVector {
    /// Prime factors with multiplicity, largest first.
    pub fn primes_descending(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for &(p, m) in self.factors.iter().rev() {
            out.extend(std::iter::repeat_n(p, m as usize));
        }
        out
    }

    /// All positive divisors, unsorted.
    pub fn divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for &(p, m) in &self.factors {
            let len = divs.len();
            let mut pk = 1u64;
            for _ in 0..m {
                pk *= p;
                for i in 0..len {
                    divs.push(divs[i] * pk);
                }
            }
        }
        divs
    }
}

/// Complete factorization by trial division.
pub fn factorize(n: u64) -> Result<FactorVector> {
    if n == 0 {
        return Err(Error::domain("factorize(0)"));
    }
    let mut rest = n;
    let mut factors = Vec::new();
    let mut push = |rest: &mut u64, p: u64| {
        let mut m = 0;
        while (*rest).is_multiple_of(p) {
            *rest /= p;
            m += 1;
        }
        if m > 0 {
            factors.push((p, m));
        }
    };
    for &p in small_primes() {
        if p * p > rest {
            break;
        }
        push(&mut rest, p);
    }
    // only reached for n > 10¹⁰ with a large cofactor
    let mut d = small_primes().last().copied().unwrap_or(3) + 2;
    while d.saturating_mul(d) <= rest {
        push(&mut rest, d);
        d += 2;
    }
    if rest > 1 {
        factors.push((rest, 1));
    }
    Ok(FactorVector { n, factors })
}

/// Split `n = nflat · nsharp` with `nflat` squarefree, `nsharp` squarefull and
/// the two coprime.
pub fn flat_sharp_split(n: u64) -> Result<(u64, u64)> {
    let fv = factorize(n)?;
    let mut flat = 1;
    let mut sharp = 1;
    for (p, m) in fv.factors {
        if m == 1 {
            flat *= p;
        } else {
            sharp *= p.pow(m);
        }
    }
    Ok((flat, sharp))
}

/// Relative sizes of prime factors, non-increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimeVector {
    pub entries: Vec<f64>,
    /// The logarithm the sizes are measured against (`log x` or `log n`).
    pub scale: f64,
}

impl PrimeVector {
    pub fn sum(&self) -> f64 {
        self.entries.iter().sum()
    }
}

/// `(log p_i(n) / log x)_i` with multiplicity, for `1 <= n <= x`.
pub fn primes_vector(n: u64, x: f64) -> Result<PrimeVector> {
    if !(x >= 2.0) {
        return Err(Error::domain(format!("primes_vector needs x >= 2, got {x}")));
    }
    if n == 0 || n as f64 > x {
        return Err(Error::domain(format!("primes_vector needs 1 <= n <= x ({n}, {x})")));
    }
    scaled_primes(n, x.ln())
}

/// `(log p_i(n) / log n)_i`, a full-mass point, for `n >= 2`.
pub fn primes_star(n: u64) -> Result<PrimeVector> {
    if n < 2 {
        return Err(Error::domain("primes_star needs n >= 2"));
    }
    scaled_primes(n, (n as f64).ln())
}

/// Relative sizes against an arbitrary scale; callers that tolerate `n > x`
/// (the coupling diagnostics) use this directly.
pub fn scaled_primes(n: u64, scale: f64) -> Result<PrimeVector> {
    let fv = factorize(n)?;
    let entries = fv
        .primes_descending()
        .into_iter()
        .map(|p| (p as f64).ln() / scale)
        .collect();
    Ok(PrimeVector { entries, scale })
}

/// The sequence `λ_j` and the step function `h(t) = log q_j` on
/// `(λ_{j-1}, λ_j]`, where `q_j = p_j^{v_j}` is the j-th smallest prime power.
#[derive(Clone, Debug)]
pub struct StepFunctionTable {
    qmax: u64,
    /// `λ_0, λ_1, ..., λ_J`
    lambdas: Vec<f64>,
    /// `q_1, ..., q_J` (index shifted by one against `lambdas`)
    q: Vec<u64>,
    v: Vec<u32>,
    logq: Vec<f64>,
    r0: f64,
}

/// Default prime-power bound. `λ_J ≈ 16.6`, which covers `log x` for every
/// `x <= 10⁷`.
pub const DEFAULT_QMAX: u64 = 1 << 24;

/// Prime-power bound past which the table refuses to grow.
pub const MAX_QMAX: u64 = 1 << 31;

impl StepFunctionTable {
    pub fn new(qmax: u64) -> Result<Self> {
        if qmax > MAX_QMAX {
            return Err(Error::resource(format!(
                "prime-power table bound {qmax} exceeds {MAX_QMAX}"
            )));
        }
        let primes = sieve_primes(qmax.max(2))?;
        let mut powers: Vec<(u64, u32)> = Vec::with_capacity(primes.len() + primes.len() / 8);
        for &p in &primes {
            let mut pv = p;
            let mut v = 1;
            loop {
                powers.push((pv, v));
                match pv.checked_mul(p) {
                    Some(next) if next <= qmax => {
                        pv = next;
                        v += 1;
                    }
                    _ => break,
                }
            }
        }
        powers.sort_unstable();

        let mut lambdas = Vec::with_capacity(powers.len() + 1);
        lambdas.push((-EULER_GAMMA).exp());
        // compensated running sum of 1/(v q)
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for &(q, v) in &powers {
            let term = 1.0 / (v as f64 * q as f64) - comp;
            let t = sum + term;
            comp = (t - sum) - term;
            sum = t;
            lambdas.push((sum - EULER_GAMMA).exp());
        }
        let q: Vec<u64> = powers.iter().map(|&(q, _)| q).collect();
        let v: Vec<u32> = powers.iter().map(|&(_, v)| v).collect();
        let logq: Vec<f64> = q.iter().map(|&q| (q as f64).ln()).collect();

        // r(t) = t on (0, λ_0]; on each (λ_{j-1}, λ_j] the sup of
        // |log q_j - t| sits at an endpoint
        let mut r0 = lambdas[0];
        for j in 0..logq.len() {
            r0 = r0
                .max((logq[j] - lambdas[j]).abs())
                .max((logq[j] - lambdas[j + 1]).abs());
        }
        Ok(Self {
            qmax,
            lambdas,
            q,
            v,
            logq,
            r0,
        })
    }

    /// The shared default table (prime powers up to [`DEFAULT_QMAX`]).
    pub fn global() -> &'static StepFunctionTable {
        static TABLE: OnceLock<StepFunctionTable> = OnceLock::new();
        TABLE.get_or_init(|| StepFunctionTable::new(DEFAULT_QMAX).expect("default table"))
    }

    /// A table whose `λ_J` exceeds `t`, doubling the prime-power bound until
    /// it does.
    pub fn covering(&self, t: f64) -> Result<StepFunctionTable> {
        let mut qmax = self.qmax;
        let mut table = self.clone();
        while table.lambda_max() < t {
            qmax = qmax.checked_mul(2).filter(|&q| q <= MAX_QMAX).ok_or_else(|| {
                Error::resource(format!("h({t}) needs prime powers beyond {MAX_QMAX}"))
            })?;
            table = StepFunctionTable::new(qmax)?;
        }
        Ok(table)
    }

    pub fn qmax(&self) -> u64 {
        self.qmax
    }

    /// Number of prime powers `J` in the table.
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn lambda_max(&self) -> f64 {
        *self.lambdas.last().expect("λ_0 always present")
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn logq(&self) -> &[f64] {
        &self.logq
    }

    /// `sup_t r(t)` over the table's range.
    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// `q_i`, 1-based.
    pub fn prime_power(&self, i: usize) -> Option<(u64, u32)> {
        if i == 0 {
            return None;
        }
        self.q.get(i - 1).map(|&q| (q, self.v[i - 1]))
    }

    /// `λ_j`, 0-based.
    pub fn lambda(&self, j: usize) -> Option<f64> {
        self.lambdas.get(j).copied()
    }

    /// Index `j >= 1` with `λ_{j-1} < t <= λ_j`, or 0 when `t <= λ_0`.
    fn step_index(&self, t: f64) -> Result<usize> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("h(t) needs t > 0, got {t}")));
        }
        if t > self.lambda_max() {
            return Err(Error::resource(format!(
                "h({t}) beyond table range λ_J = {}",
                self.lambda_max()
            )));
        }
        // first j with λ_j >= t; 0 means t <= λ_0
        Ok(self.lambdas.partition_point(|&l| l < t))
    }

    /// `h(t)`.
    pub fn step_h(&self, t: f64) -> Result<f64> {
        let j = self.step_index(t)?;
        Ok(if j == 0 { 0.0 } else { self.logq[j - 1] })
    }

    /// `e^{h(t)}` as an integer: the prime power `q_j`, or 1 when `t <= λ_0`.
    pub fn step_q(&self, t: f64) -> Result<u64> {
        let j = self.step_index(t)?;
        Ok(if j == 0 { 1 } else { self.q[j - 1] })
    }

    /// `r(t) = |h(t) - t|`.
    pub fn discrepancy_r(&self, t: f64) -> Result<f64> {
        Ok((self.step_h(t)? - t).abs())
    }
}

/// The i-th smallest prime power (1-based), from the default table, growing a
/// private table when `i` is beyond it.
pub fn prime_power_q(i: usize) -> Result<u64> {
    if i == 0 {
        return Err(Error::domain("prime_power_q is 1-based"));
    }
    let mut table = StepFunctionTable::global().clone();
    loop {
        if let Some((q, _)) = table.prime_power(i) {
            return Ok(q);
        }
        let next = table.qmax().checked_mul(2).filter(|&q| q <= MAX_QMAX);
        match next {
            Some(qmax) => table = StepFunctionTable::new(qmax)?,
            None => return Err(Error::resource(format!("prime power #{i} beyond table budget"))),
        }
    }
}

/// `λ_j` from the default table.
pub fn lambda_j(j: usize) -> Result<f64> {
    StepFunctionTable::global()
        .lambda(j)
        .ok_or_else(|| Error::resource(format!("λ_{j} beyond table")))
}

/// `h(t)` from the default table, extended on demand.
pub fn step_h(t: f64) -> Result<f64> {
    let table = StepFunctionTable::global();
    if t > table.lambda_max() {
        return table.covering(t)?.step_h(t);
    }
    table.step_h(t)
}

/// `r(t)` from the default table, extended on demand.
pub fn discrepancy_r(t: f64) -> Result<f64> {
    Ok((step_h(t)? - t).abs())
}

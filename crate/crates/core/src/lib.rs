//! Divisors in intervals, their limiting densities, and a simulated coupling
//! between the prime factorization of a random integer and a
//! Poisson–Dirichlet process.
//!
//! The crate is organised bottom-up:
//!
//! - [`primes`]: sieving, factorization, Chebyshev's θ and the step function
//!   `h(t)` built from prime powers.
//! - [`dickman`]: a tabulated Dickman function ρ with cubic interpolation and
//!   inversion.
//! - [`divisor_interval`]: exact counts `H(x, y, z)` by a segmented sieve and
//!   by a brute-force oracle, plus the comparator scales.
//! - [`pd`]: GEM and Poisson–Dirichlet sampling, the finite-dimensional
//!   density and a Monte Carlo estimator of `h(u, v)`.
//! - [`polytope`]: the subset-family polytopes and the integral formula for
//!   `h(u, v)`.
//! - [`coupling`]: the planar Poisson process, its x-labelling, the random
//!   integers `M`, `M*`, `N` and the experiment statistics.
//! - [`experiment`]: CSV-producing harnesses shared by the `divden` binary and
//!   the examples.

pub mod coupling;
pub mod csvfmt;
pub mod dickman;
pub mod divisor_interval;
pub mod experiment;
pub mod pd;
pub mod polytope;
pub mod primes;
pub mod streams;

mod error;

pub use error::{Error, Result};

/// A value paired with a flag marking it as outside the regime where it is
/// meaningful (a guard was violated, a table was exhausted, ...).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    pub flagged: bool,
}

impl<T> Flagged<T> {
    pub fn ok(value: T) -> Self {
        Self { value, flagged: false }
    }

    pub fn flagged(value: T) -> Self {
        Self { value, flagged: true }
    }
}

//! The Dickman function ρ, tabulated on a uniform grid.
//!
//! ρ = 1 on `[0, 1]` and `u ρ'(u) = -ρ(u - 1)` beyond. The table integrates the
//! equivalent form `ρ(u + h) = ρ(u) - ∫_u^{u+h} ρ(t - 1)/t dt` step by step
//! with Simpson's rule. On the panel `[m, m + 1]` the integrand only reads the
//! already finished panel `[m - 1, m]`, so the recursion is explicit. The grid
//! step must divide 1 so that no step straddles an integer, where ρ loses a
//! derivative.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use crate::{Error, Result};

/// Tolerance on `u ρ(u) = ∫_{u-1}^u ρ(t) dt` that [`DickmanTable::build`]
/// enforces.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;

pub const DEFAULT_UMAX: f64 = 50.0;
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug)]
pub struct DickmanTable {
    umax: f64,
    step: f64,
    per_unit: usize,
    values: Vec<f64>,
    truncations: AtomicU64,
}

impl Clone for DickmanTable {
    fn clone(&self) -> Self {
        Self {
            umax: self.umax,
            step: self.step,
            per_unit: self.per_unit,
            values: self.values.clone(),
            truncations: AtomicU64::new(self.truncations.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for DickmanTable {
    fn eq(&self, other: &Self) -> bool {
        self.umax.to_bits() == other.umax.to_bits()
            && self.step.to_bits() == other.step.to_bits()
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Cubic Lagrange interpolation through `f[s..s+4]` at fractional index `x`.
fn lagrange4(f: &[f64], s: usize, x: f64) -> f64 {
    let t = x - s as f64;
    let (f0, f1, f2, f3) = (f[s], f[s + 1], f[s + 2], f[s + 3]);
    let l0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
    let l1 = t * (t - 2.0) * (t - 3.0) / 2.0;
    let l2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
    let l3 = t * (t - 1.0) * (t - 2.0) / 6.0;
    f0 * l0 + f1 * l1 + f2 * l2 + f3 * l3
}

/// Stencil start for a 4-point interpolation around index `j`, kept inside
/// the smooth piece `[lo, hi]`.
fn stencil_start(j: usize, lo: usize, hi: usize) -> usize {
    j.saturating_sub(1).clamp(lo, hi - 3)
}

impl DickmanTable {
    /// Tabulate ρ on `[0, umax]` with grid spacing `step`.
    pub fn build(umax: f64, step: f64) -> Result<Self> {
        if !(umax >= 1.0) || !umax.is_finite() {
            return Err(Error::domain(format!("umax must be >= 1, got {umax}")));
        }
        if !(step > 0.0 && step <= 1e-3) {
            return Err(Error::domain(format!("step must be in (0, 1e-3], got {step}")));
        }
        let per_unit = (1.0 / step).round() as usize;
        if ((per_unit as f64) * step - 1.0).abs() > 1e-9 {
            return Err(Error::Construction(format!(
                "step {step} does not divide 1; grid would straddle the integers"
            )));
        }
        let step = 1.0 / per_unit as f64;
        let n_total = (umax * per_unit as f64).ceil() as usize;
        let umax = n_total as f64 * step;
        let n = per_unit;

        let mut values = vec![1.0f64; n_total + 1];
        for i in n..n_total {
            // step from u_i to u_{i+1}; the integrand reads indices j, j+1/2, j+1
            let u0 = i as f64 * step;
            let u1 = u0 + step;
            let um = u0 + 0.5 * step;
            let j = i - n;
            let panel_lo = (j / n) * n;
            let panel_hi = panel_lo + n;
            let s = stencil_start(j, panel_lo, panel_hi);
            let mid = lagrange4(&values, s, j as f64 + 0.5);
            let f0 = values[j] / u0;
            let f1 = values[j + 1] / u1;
            let fm = mid / um;
            values[i + 1] = values[i] - step / 6.0 * (f0 + 4.0 * fm + f1);
        }

        let table = Self {
            umax,
            step,
            per_unit,
            values,
            truncations: AtomicU64::new(0),
        };
        let worst = table.max_identity_residual();
        if !(worst <= IDENTITY_TOLERANCE) {
            return Err(Error::Construction(format!(
                "identity residual {worst:e} exceeds {IDENTITY_TOLERANCE:e}"
            )));
        }
        Ok(table)
    }

    /// The shared table with `umax = 50`, `step = 10⁻³`.
    pub fn standard() -> &'static DickmanTable {
        static TABLE: OnceLock<DickmanTable> = OnceLock::new();
        TABLE.get_or_init(|| DickmanTable::build(DEFAULT_UMAX, DEFAULT_STEP).expect("default table"))
    }

    pub fn umax(&self) -> f64 {
        self.umax
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `ρ(i · step)` for `i = 0..=umax/step`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// How many lookups fell past `umax` and were answered with 0.
    pub fn truncations(&self) -> u64 {
        self.truncations.load(Ordering::Relaxed)
    }

    /// ρ(u). Past `umax` the answer is 0 and the truncation counter is bumped.
    pub fn rho(&self, u: f64) -> Result<f64> {
        if u < 0.0 || u.is_nan() {
            return Err(Error::domain(format!("rho({u}) needs u >= 0")));
        }
        Ok(self.rho_unchecked(u))
    }

    /// ρ(u) for arguments already known to be `>= 0`.
    pub(crate) fn rho_unchecked(&self, u: f64) -> f64 {
        if u <= 1.0 {
            return 1.0;
        }
        if u > self.umax {
            self.truncations.fetch_add(1, Ordering::Relaxed);
            return 0.0;
        }
        let x = u * self.per_unit as f64;
        let j = (x.floor() as usize).min(self.values.len() - 2);
        // the piece (m, m+1] containing u, in grid indices
        let lo = ((u.ceil() as usize).max(1) - 1) * self.per_unit;
        let hi = (lo + self.per_unit).min(self.values.len() - 1);
        let s = stencil_start(j, lo, hi);
        lagrange4(&self.values, s, x)
    }

    /// `ρ'(u) = -ρ(u - 1)/u` for `u > 1`, 0 on `[0, 1)`.
    pub fn rho_prime(&self, u: f64) -> f64 {
        if u <= 1.0 {
            0.0
        } else {
            -self.rho_unchecked(u - 1.0) / u
        }
    }

    /// The `u >= 1` with `ρ(u) = y`, for `0 < y <= 1`. Returns 1 for `y >= 1`
    /// and `+∞` when `y` is below `ρ(umax)` (or not positive).
    pub fn rho_inverse(&self, y: f64) -> f64 {
        if y >= 1.0 {
            return 1.0;
        }
        let last = *self.values.last().expect("non-empty table");
        if !(y > 0.0) || y < last {
            return f64::INFINITY;
        }
        // values are strictly decreasing past index per_unit
        let tail = &self.values[self.per_unit..];
        let k = tail.partition_point(|&v| v > y);
        let hi_idx = (self.per_unit + k).min(self.values.len() - 1);
        let mut lo = (hi_idx.saturating_sub(1)).max(self.per_unit) as f64 * self.step;
        let mut hi = hi_idx as f64 * self.step;
        let target = y.ln();
        let mut u = 0.5 * (lo + hi);
        for _ in 0..60 {
            let r = self.rho_unchecked(u);
            let g = r.ln() - target;
            if g == 0.0 {
                return u;
            }
            if g > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            if hi - lo < 1e-15 * hi {
                break;
            }
            // Newton on log ρ, slope -ρ(u-1)/(u ρ(u)), kept inside the bracket
            let slope = -self.rho_unchecked(u - 1.0) / (u * r);
            if (g / slope).abs() < 1e-15 * u {
                return u - g / slope;
            }
            let next = u - g / slope;
            u = if next > lo && next < hi && slope.is_finite() {
                next
            } else {
                0.5 * (lo + hi)
            };
        }
        u
    }

    /// Fourth-order quadrature of the tabulated values between grid indices
    /// `a <= b`, all inside one smooth piece `[lo, hi]`.
    fn integrate_piece(&self, a: usize, b: usize, lo: usize, hi: usize) -> f64 {
        let f = &self.values;
        let h = self.step;
        let len = b - a;
        let simpson = |start: usize, steps: usize| -> f64 {
            debug_assert!(steps.is_multiple_of(2));
            if steps == 0 {
                return 0.0;
            }
            let mut acc = f[start] + f[start + steps];
            for i in 1..steps {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f[start + i];
            }
            acc * h / 3.0
        };
        match len {
            0 => 0.0,
            1 => {
                if a > lo && a + 2 <= hi {
                    h / 24.0 * (-f[a - 1] + 13.0 * f[a] + 13.0 * f[a + 1] - f[a + 2])
                } else if a + 3 <= hi {
                    h / 24.0 * (9.0 * f[a] + 19.0 * f[a + 1] - 5.0 * f[a + 2] + f[a + 3])
                } else {
                    h / 24.0 * (f[a - 2] - 5.0 * f[a - 1] + 19.0 * f[a] + 9.0 * f[a + 1])
                }
            }
            l if l % 2 == 0 => simpson(a, l),
            l => {
                let head = l - 3;
                let three_eighths =
                    3.0 * h / 8.0 * (f[b - 3] + 3.0 * f[b - 2] + 3.0 * f[b - 1] + f[b]);
                simpson(a, head) + three_eighths
            }
        }
    }

    /// `∫_{u-1}^{u} ρ(t) dt` for a grid point `u = i·step >= 1`, split at the
    /// integer inside the window.
    pub fn window_integral(&self, i: usize) -> f64 {
        let n = self.per_unit;
        assert!(i >= n && i < self.values.len());
        let a = i - n;
        let split = if a.is_multiple_of(n) { a } else { (a / n + 1) * n };
        let first = if split > a {
            let lo = (a / n) * n;
            self.integrate_piece(a, split, lo, lo + n)
        } else {
            0.0
        };
        let second = if i > split {
            self.integrate_piece(split, i, split, split + n)
        } else {
            0.0
        };
        first + second
    }

    /// `max |u ρ(u) - ∫_{u-1}^u ρ|` over grid points `u >= 1`.
    pub fn max_identity_residual(&self) -> f64 {
        let n = self.per_unit;
        (n..self.values.len())
            .map(|i| {
                let u = i as f64 * self.step;
                (u * self.values[i] - self.window_integral(i)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// A pointwise accuracy estimate for [`DickmanTable::rho`]: the larger of
    /// the identity residual and the spread between the two admissible
    /// interpolation stencils at cell midpoints.
    pub fn accuracy(&self) -> f64 {
        let n = self.per_unit;
        let spread = (0..self.values.len() - 1)
            .filter_map(|j| {
                let lo = (j / n) * n;
                let hi = (lo + n).min(self.values.len() - 1);
                if j < lo + 2 || j + 2 > hi {
                    return None;
                }
                let x = j as f64 + 0.5;
                Some((lagrange4(&self.values, j - 1, x) - lagrange4(&self.values, j - 2, x)).abs())
            })
            .fold(0.0, f64::max);
        self.max_identity_residual().max(spread).max(f64::EPSILON)
    }

    /// Write the table as text: a header with `umax`, `step` and the value
    /// count, then one value per line in shortest round-trip form.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::with_capacity(self.values.len() * 24 + 64);
        writeln!(s, "# dickman-table v1").unwrap();
        writeln!(s, "umax {:?}", self.umax).unwrap();
        writeln!(s, "step {:?}", self.step).unwrap();
        writeln!(s, "count {}", self.values.len()).unwrap();
        for v in &self.values {
            writeln!(s, "{v:?}").unwrap();
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Read a table written by [`DickmanTable::dump`].
    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next_line = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse("unexpected end of table".into()))?
                .map_err(Error::from)
        };
        let magic = next_line()?;
        if magic.trim() != "# dickman-table v1" {
            return Err(Error::Parse(format!("bad table header {magic:?}")));
        }
        let field = |line: String, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .map(|rest| rest.trim().to_string())
                .ok_or_else(|| Error::Parse(format!("expected `{key}`, got {line:?}")))
        };
        let parse_f = |s: String| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")))
        };
        let umax = parse_f(field(next_line()?, "umax")?)?;
        let step = parse_f(field(next_line()?, "step")?)?;
        let count: usize = field(next_line()?, "count")?
            .parse()
            .map_err(|e| Error::Parse(format!("count: {e}")))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(parse_f(next_line()?)?);
        }
        let per_unit = (1.0 / step).round() as usize;
        if per_unit < 4 || values.len() != (umax * per_unit as f64).round() as usize + 1 {
            return Err(Error::Parse("table header inconsistent with values".into()));
        }
        Ok(Self {
            umax,
            step,
            per_unit,
            values,
            truncations: AtomicU64::new(0),
        })
    }
}

/// ρ(u) from the standard table.
pub fn rho(u: f64) -> Result<f64> {
    DickmanTable::standard().rho(u)
}

//! The polytopes `P_{u,v}(𝓔)` of the complement decomposition of `D(u, v)`
//! and the integral formula for `h(u, v)`.
//!
//! Integrals of the PD density are taken in conditional-CDF coordinates:
//! with `R = 1 − Σ_{i<j} t_i` and `a_0 = max(1, R/t_{j−1})`,
//!
//! ```text
//! U_j = ρ(R/t_j) / ρ(a_0)
//! ```
//!
//! maps the ordered `k`-prefix of a PD(1) point to a uniform point of
//! `[0, 1]^k`, so the measure of a region is its volume in `U`. For fixed
//! `t_1..t_{k−1}` a polytope meets the `t_k` axis in an interval, which is
//! integrated exactly; only the first `k − 1` coordinates need cubature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;

use crate::dickman::DickmanTable;
use crate::pd::{has_subsum_in, IntervalQuery, McEstimate};
use crate::streams::{self, tag};
use crate::{Error, Result};

/// Largest `k` handled by family enumeration and [`h_exact`].
pub const MAX_EXACT_K: usize = 4;
/// Slack used when checking that a point lies in `Δ^k`.
const SIMPLEX_SLACK: f64 = 1e-12;
/// Feasibility tolerance of the vertex search.
const VERTEX_TOL: f64 = 1e-12;
/// Cells in the starting grid of the adaptive cubature, at most.
const START_CELLS: usize = 4096;
/// Cells refined per parallel batch.
const REFINE_BATCH: usize = 256;
/// Default evaluation budget for [`h_exact`] and the CLI.
pub const DEFAULT_BUDGET: u64 = 2_000_000;
/// Cubature stops once the accumulated error bound is below this.
pub const DEFAULT_TARGET: f64 = 1e-6;

/// A family of subsets of `{1..k}`, stored as a bitset over subset masks
/// (bit `i - 1` of a mask stands for element `i`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubsetFamily {
    k: usize,
    bits: Vec<u64>,
}

impl SubsetFamily {
    pub fn empty(k: usize) -> Result<Self> {
        if k == 0 || k > 16 {
            return Err(Error::domain(format!("subset families need 1 <= k <= 16, got {k}")));
        }
        Ok(Self {
            k,
            bits: vec![0; (1usize << k).div_ceil(64)],
        })
    }

    /// The family with the given member masks.
    pub fn from_masks(k: usize, masks: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut f = Self::empty(k)?;
        for m in masks {
            if m >= 1 << k {
                return Err(Error::domain(format!("mask {m} out of range for k = {k}")));
            }
            f.insert(m);
        }
        Ok(f)
    }

    /// `{E : Σ_{i∈E} t_i >= v}`.
    pub fn above(t: &[f64], v: f64) -> Result<Self> {
        let sums = subset_sums(t);
        Self::from_masks(t.len(), (0..sums.len()).filter(|&m| sums[m] >= v))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn insert(&mut self, mask: usize) {
        self.bits[mask >> 6] |= 1 << (mask & 63);
    }

    pub fn contains(&self, mask: usize) -> bool {
        self.bits[mask >> 6] >> (mask & 63) & 1 == 1
    }

    pub fn members(&self) -> Vec<usize> {
        (0..1usize << self.k).filter(|&m| self.contains(m)).collect()
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Members are closed under adding one element (hence under supersets).
    pub fn is_upward_closed(&self) -> bool {
        (0..1usize << self.k).all(|m| {
            !self.contains(m) || (0..self.k).all(|i| self.contains(m | 1 << i))
        })
    }
}

/// All `2^k` subset sums of `t`, indexed by mask.
pub fn subset_sums(t: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; 1 << t.len()];
    for m in 1..sums.len() {
        let low = m.trailing_zeros() as usize;
        sums[m] = sums[m & (m - 1)] + t[low];
    }
    sums
}

/// `P_{u,v}(𝓔)` inside `Δ^k`, `k` being the family's `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    pub q: IntervalQuery,
    pub family: SubsetFamily,
}

impl Polytope {
    pub fn new(q: IntervalQuery, family: SubsetFamily) -> Self {
        Self { q, family }
    }

    pub fn k(&self) -> usize {
        self.family.k
    }

    /// Constraint rows `a·x <= b` describing the polytope, simplex included.
    fn rows(&self) -> Vec<(Vec<f64>, f64)> {
        let k = self.k();
        let mut rows = Vec::new();
        // x_i <= x_{i-1}, then x_k >= 0
        for i in 1..k {
            let mut a = vec![0.0; k];
            a[i] = 1.0;
            a[i - 1] = -1.0;
            rows.push((a, 0.0));
        }
        let mut a = vec![0.0; k];
        a[k - 1] = -1.0;
        rows.push((a, 0.0));
        rows.push((vec![1.0; k], 1.0));
        for m in 1..1usize << k {
            let ind: Vec<f64> = (0..k).map(|i| (m >> i & 1) as f64).collect();
            if self.family.contains(m) {
                rows.push((ind.iter().map(|c| -c).collect(), -self.q.v));
            } else {
                rows.push((ind, self.q.u));
            }
        }
        rows
    }

    /// Nonempty iff the constraint system has a vertex; found by solving every
    /// choice of `k` active rows.
    pub fn is_nonempty(&self) -> bool {
        let k = self.k();
        if self.family.contains(0) && self.q.v > 0.0 {
            return false;
        }
        let rows = self.rows();
        let feasible = |x: &[f64]| {
            rows.iter().all(|(a, b)| {
                let lhs: f64 = a.iter().zip(x).map(|(c, xi)| c * xi).sum();
                lhs <= b + VERTEX_TOL
            })
        };
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            if let Some(x) = solve_square(idx.iter().map(|&i| &rows[i]), k) {
                if feasible(&x) {
                    return true;
                }
            }
            if !next_combination(&mut idx, rows.len()) {
                return false;
            }
        }
    }
}

/// Advance `idx` to the next `k`-subset of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
        return false;
    };
    idx[i] += 1;
    for j in i + 1..k {
        idx[j] = idx[j - 1] + 1;
    }
    true
}

/// Gaussian elimination with partial pivoting on `k` rows; `None` if singular.
fn solve_square<'a>(rows: impl Iterator<Item = &'a (Vec<f64>, f64)>, k: usize) -> Option<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = rows
        .map(|(a, b)| {
            let mut r = a.clone();
            r.push(*b);
            r
        })
        .collect();
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c].abs() < 1e-12 {
            return None;
        }
        m.swap(c, p);
        for r in 0..k {
            if r != c {
                let f = m[r][c] / m[c][c];
                if f != 0.0 {
                    for j in c..=k {
                        m[r][j] -= f * m[c][j];
                    }
                }
            }
        }
    }
    Some((0..k).map(|i| m[i][k] / m[i][i]).collect())
}

fn check_simplex(t: &[f64]) -> Result<()> {
    let ordered = t.windows(2).all(|w| w[1] <= w[0] + SIMPLEX_SLACK);
    let sum: f64 = t.iter().sum();
    if ordered && t.iter().all(|&x| x >= -SIMPLEX_SLACK) && sum <= 1.0 + SIMPLEX_SLACK {
        Ok(())
    } else {
        Err(Error::domain(format!("{t:?} is not in the ordered simplex")))
    }
}

/// Closed membership of a point of `Δ^k` in the polytope.
pub fn polytope_contains(t: &[f64], p: &Polytope) -> Result<bool> {
    if t.len() != p.k() {
        return Err(Error::domain(format!(
            "point has length {}, polytope has k = {}",
            t.len(),
            p.k()
        )));
    }
    check_simplex(t)?;
    let sums = subset_sums(t);
    Ok((0..sums.len()).all(|m| {
        if p.family.contains(m) {
            sums[m] >= p.q.v
        } else {
            sums[m] <= p.q.u
        }
    }))
}

/// Every upward-closed family without `∅` whose polytope is nonempty.
pub fn enumerate_nonempty_families(q: &IntervalQuery) -> Result<Vec<SubsetFamily>> {
    let k = q.k;
    if k > MAX_EXACT_K {
        return Err(Error::Unsupported(format!(
            "k = {k} exceeds {MAX_EXACT_K} for family enumeration; use the Monte Carlo estimator (--method mc)"
        )));
    }
    let n_sets = (1usize << k) - 1;
    let mut out = Vec::new();
    for choice in 0u64..1 << n_sets {
        // bit j of `choice` selects the nonempty mask j + 1
        let fam = SubsetFamily::from_masks(k, (0..n_sets).filter(|j| choice >> j & 1 == 1).map(|j| j + 1))?;
        if fam.is_upward_closed() && Polytope::new(*q, fam.clone()).is_nonempty() {
            out.push(fam);
        }
    }
    Ok(out)
}

/// Running state of the conditional-CDF map after some coordinates.
#[derive(Clone, Copy, Debug)]
struct Cursor {
    remaining: f64,
    prev: f64,
    first: bool,
}

impl Cursor {
    fn start() -> Self {
        Self {
            remaining: 1.0,
            prev: f64::INFINITY,
            first: true,
        }
    }

    fn a0(&self) -> f64 {
        if self.first {
            1.0
        } else {
            (self.remaining / self.prev).max(1.0)
        }
    }

    /// Largest admissible next coordinate.
    fn cap(&self) -> f64 {
        self.remaining.min(self.prev).max(0.0)
    }

    /// Conditional CDF of the next coordinate at `t`.
    fn cdf(&self, t: f64, table: &DickmanTable) -> f64 {
        let cap = self.cap();
        if t <= 0.0 || cap <= 0.0 {
            return 0.0;
        }
        if t >= cap {
            return 1.0;
        }
        let norm = table.rho_unchecked(self.a0());
        if norm <= 0.0 {
            // conditional law too far in the tail to tabulate; fall back to length
            return t / cap;
        }
        (table.rho_unchecked(self.remaining / t) / norm).min(1.0)
    }

    /// Inverse of [`Cursor::cdf`].
    fn quantile(&self, uj: f64, table: &DickmanTable) -> f64 {
        let cap = self.cap();
        if cap <= 0.0 {
            return 0.0;
        }
        let norm = table.rho_unchecked(self.a0());
        if norm <= 0.0 {
            return uj.max(0.0) * cap;
        }
        // u = 0 maps to the table's end rather than to t = 0, where the
        // slices degenerate and lose their limiting value
        let alpha = table.rho_inverse(uj.max(0.0) * norm).min(table.umax());
        (self.remaining / alpha).min(cap)
    }

    fn advance(&mut self, t: f64) {
        self.remaining -= t;
        self.prev = t;
        self.first = false;
    }
}

/// The conditional-CDF map `[0, 1]^k → Δ^k`; the image of a uniform point is
/// distributed as the `k` largest PD(1) coordinates.
pub fn cdf_to_simplex(u: &[f64], table: &DickmanTable) -> Vec<f64> {
    let mut c = Cursor::start();
    u.iter()
        .map(|&uj| {
            let t = c.quantile(uj, table);
            c.advance(t);
            t
        })
        .collect()
}

/// Inverse of [`cdf_to_simplex`].
pub fn simplex_to_cdf(t: &[f64], table: &DickmanTable) -> Vec<f64> {
    let mut c = Cursor::start();
    t.iter()
        .map(|&tj| {
            let uj = c.cdf(tj, table);
            c.advance(tj);
            uj
        })
        .collect()
}

/// Conditional probability that the last coordinate lands in the polytope,
/// given the first `k − 1`.
fn polytope_slice(head: &[f64], p: &Polytope, table: &DickmanTable) -> f64 {
    let k = p.k();
    debug_assert_eq!(head.len(), k - 1);
    let mut c = Cursor::start();
    for &t in head {
        c.advance(t);
    }
    let sums = subset_sums(head);
    let last = 1usize << (k - 1);
    let (mut lo, mut hi) = (0.0f64, c.cap());
    for (m, &s) in sums.iter().enumerate() {
        let ok = if p.family.contains(m) { s >= p.q.v } else { s <= p.q.u };
        if !ok {
            return 0.0;
        }
        if p.family.contains(m | last) {
            lo = lo.max(p.q.v - s);
        } else {
            hi = hi.min(p.q.u - s);
        }
    }
    if hi <= lo {
        return 0.0;
    }
    c.cdf(hi, table) - c.cdf(lo, table)
}

/// Conditional probability that the last coordinate leaves no subsum of the
/// `k`-prefix inside `(u, v)`.
fn union_slice(head: &[f64], q: &IntervalQuery, table: &DickmanTable) -> f64 {
    let mut c = Cursor::start();
    for &t in head {
        c.advance(t);
    }
    let sums = subset_sums(head);
    if sums.iter().any(|&s| q.inside(s)) {
        return 0.0;
    }
    let cap = c.cap();
    let mut bad: Vec<(f64, f64)> = sums
        .iter()
        .map(|&s| ((q.u - s).max(0.0), (q.v - s).min(cap)))
        .filter(|(a, b)| a < b)
        .collect();
    bad.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut cursor = 0.0f64;
    for (a, b) in bad {
        if a > cursor {
            total += c.cdf(a, table) - c.cdf(cursor, table);
        }
        cursor = cursor.max(b);
    }
    if cap > cursor {
        total += c.cdf(cap, table) - c.cdf(cursor, table);
    }
    total
}

/// Result of a numerical integration. For the grid method `error` is the
/// accumulated cell bound; for Monte Carlo it is one standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    /// The budget ran out before the error target was met.
    pub flagged: bool,
    pub evaluations: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// Adaptive midpoint cubature stopping at the given error target.
    Grid { target: f64 },
    /// Uniform sampling of the conditional-CDF cube.
    MonteCarlo { seed: u64 },
}

#[derive(Clone, Debug)]
struct Cell {
    lo: Vec<f64>,
    size: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Midpoint value and corner deviation of `f` on the cube `lo + [0, size]^d`.
fn evaluate_cell<F: Fn(&[f64]) -> f64>(f: &F, lo: Vec<f64>, size: f64) -> (Cell, u64) {
    let d = lo.len();
    let vol = size.powi(d as i32);
    let center: Vec<f64> = lo.iter().map(|x| x + 0.5 * size).collect();
    let fc = f(&center);
    let mut dev = 0.0f64;
    let mut corner = vec![0.0; d];
    for m in 0..1usize << d {
        for i in 0..d {
            corner[i] = lo[i] + if m >> i & 1 == 1 { size } else { 0.0 };
        }
        dev = dev.max((f(&corner) - fc).abs());
    }
    let cell = Cell {
        lo,
        size,
        value: fc * vol,
        error: dev * vol,
    };
    (cell, 1 + (1u64 << d))
}

/// Adaptive midpoint cubature of `f` over `[0, 1]^d`. Cells are bisected in
/// every direction, largest error first, in batches.
pub fn adaptive_cubature<F>(d: usize, f: F, budget: u64, target: f64) -> Integral
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if d == 0 {
        return Integral {
            value: f(&[]),
            error: 0.0,
            flagged: false,
            evaluations: 1,
        };
    }
    let mut m0 = 0;
    while 1usize << (d * (m0 + 1)) <= START_CELLS {
        m0 += 1;
    }
    let per_side = 1usize << m0;
    let size = 1.0 / per_side as f64;
    let n_start = per_side.pow(d as u32);
    let start: Vec<(Cell, u64)> = (0..n_start)
        .into_par_iter()
        .map(|idx| {
            let mut rest = idx;
            let lo = (0..d)
                .map(|_| {
                    let c = rest % per_side;
                    rest /= per_side;
                    c as f64 * size
                })
                .collect();
            evaluate_cell(&f, lo, size)
        })
        .collect();
    let mut evaluations: u64 = start.iter().map(|c| c.1).sum();
    let mut heap: BinaryHeap<Cell> = start.into_iter().map(|c| c.0).collect();
    let cost = 1u64 << d;
    let per_cell = 1 + cost;
    loop {
        let error: f64 = heap.iter().map(|c| c.error).sum();
        if error <= target {
            break;
        }
        let remaining = budget.saturating_sub(evaluations);
        let affordable = (remaining / (cost * per_cell)) as usize;
        if affordable == 0 {
            break;
        }
        let mut batch = Vec::new();
        while batch.len() < REFINE_BATCH.min(affordable) {
            match heap.pop() {
                Some(c) if c.error > 0.0 => batch.push(c),
                Some(c) => {
                    heap.push(c);
                    break;
                }
                None => break,
            }
        }
        if batch.is_empty() {
            break;
        }
        let children: Vec<(Cell, u64)> = batch
            .par_iter()
            .flat_map_iter(|parent| {
                let half = 0.5 * parent.size;
                (0..1usize << d).map(move |m| {
                    let lo: Vec<f64> = (0..d)
                        .map(|i| parent.lo[i] + if m >> i & 1 == 1 { half } else { 0.0 })
                        .collect();
                    (lo, half)
                })
            })
            .map(|(lo, half)| evaluate_cell(&f, lo, half))
            .collect();
        for (c, n) in children {
            evaluations += n;
            heap.push(c);
        }
    }
    // sum in a fixed order so the value does not depend on heap layout
    let mut cells = heap.into_vec();
    cells.sort_by(|a, b| {
        a.lo.iter()
            .zip(&b.lo)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then(a.size.total_cmp(&b.size))
    });
    let value = cells.iter().map(|c| c.value).sum();
    let error: f64 = cells.iter().map(|c| c.error).sum();
    Integral {
        value,
        error,
        flagged: error > target,
        evaluations,
    }
}

/// Uniform points of `(0, 1)^d` mapped through `f`, in fixed seeded blocks.
/// Returns the mean and its standard error.
fn cube_mc<F>(d: usize, f: F, n: u64, seed: u64, stream_tag: u64) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let block = crate::pd::MC_BLOCK;
    let blocks = n.div_ceil(block);
    let partial: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = streams::stream(seed, stream_tag, b);
            let m = block.min(n - b * block);
            let mut u = vec![0.0; d];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..m {
                u.iter_mut().for_each(|x| *x = rng.sample(Open01));
                let y = f(&u);
                s += y;
                s2 += y * y;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = s / n as f64;
    let var = (s2 / n as f64 - mean * mean).max(0.0) * n as f64 / (n as f64 - 1.0).max(1.0);
    (mean, (var / n as f64).sqrt())
}

/// `∫_P ρ((1 − Σt)/t_k) dt/(t_1⋯t_k)`, the PD(1) measure of the polytope.
/// `budget` is the number of integrand evaluations (grid) or samples (MC).
pub fn integrate_polytope(p: &Polytope, table: &DickmanTable, method: Method, budget: u64) -> Result<Integral> {
    let k = p.k();
    match method {
        Method::Grid { target } => {
            let f = |w: &[f64]| {
                let head = cdf_to_simplex(w, table);
                polytope_slice(&head, p, table)
            };
            Ok(adaptive_cubature(k - 1, f, budget, target))
        }
        Method::MonteCarlo { seed } => {
            if budget < 2 {
                return Err(Error::domain("Monte Carlo integration needs at least 2 samples"));
            }
            let f = |w: &[f64]| {
                let t = cdf_to_simplex(w, table);
                polytope_contains(&t, p).unwrap_or(false) as u8 as f64
            };
            let (mean, se) = cube_mc(k, f, budget, seed, tag::POLYTOPE_MC);
            Ok(Integral {
                value: mean,
                error: se,
                flagged: false,
                evaluations: budget,
            })
        }
    }
}

/// `h(u, v)` from the family decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HExact {
    pub u: f64,
    pub v: f64,
    pub k: usize,
    pub n_families: usize,
    pub value: f64,
    pub error_bound: f64,
    pub flagged: bool,
}

impl HExact {
    pub const CSV_HEADER: &'static str = "u,v,k,n_families,value,error_bound";

    pub fn csv_row(&self) -> String {
        use crate::csvfmt::num;
        format!(
            "{},{},{},{},{},{}",
            num(self.u),
            num(self.v),
            self.k,
            self.n_families,
            num(self.value),
            num(self.error_bound)
        )
    }
}

/// `1 − Σ_𝓔 μ(P_{u,v}(𝓔))` with the grid integrator; `budget` is shared
/// evenly between the families.
pub fn h_exact(q: &IntervalQuery, table: &DickmanTable, budget: u64) -> Result<HExact> {
    let families = enumerate_nonempty_families(q)?;
    let share = (budget / families.len().max(1) as u64).max(1);
    let target = DEFAULT_TARGET / families.len().max(1) as f64;
    let parts: Vec<Integral> = families
        .iter()
        .map(|f| integrate_polytope(&Polytope::new(*q, f.clone()), table, Method::Grid { target }, share))
        .collect::<Result<_>>()?;
    let mass: f64 = parts.iter().map(|p| p.value).sum();
    Ok(HExact {
        u: q.u,
        v: q.v,
        k: q.k,
        n_families: families.len(),
        value: 1.0 - mass,
        // each slice is a difference of two table lookups
        error_bound: parts.iter().map(|p| p.error).sum::<f64>() + 2.0 * families.len() as f64 * table.accuracy(),
        flagged: parts.iter().any(|p| p.flagged),
    })
}

/// Grid integral of the PD density over the whole union of polytopes (the
/// complement of `D(u, v)` in `Δ^k`), without enumerating families.
pub fn integrate_union_grid(q: &IntervalQuery, table: &DickmanTable, budget: u64, target: f64) -> Integral {
    let f = |w: &[f64]| {
        let head = cdf_to_simplex(w, table);
        union_slice(&head, q, table)
    };
    adaptive_cubature(q.k - 1, f, budget, target)
}

/// `h(u, v)` for any `k`: the union integral sampled over the first `k − 1`
/// conditional-CDF coordinates, the last one done exactly.
pub fn h_formula_mc(q: &IntervalQuery, table: &DickmanTable, n_samples: u64, seed: u64) -> Result<McEstimate> {
    if n_samples < 2 {
        return Err(Error::domain("h_formula_mc needs at least 2 samples"));
    }
    let f = |w: &[f64]| {
        let head = cdf_to_simplex(w, table);
        union_slice(&head, q, table)
    };
    let (mean, se) = if q.k == 1 {
        (f(&[]), 0.0)
    } else {
        cube_mc(q.k - 1, f, n_samples, seed, tag::POLYTOPE_MC)
    };
    Ok(McEstimate {
        estimate: 1.0 - mean,
        std_error: se,
        n_samples,
    })
}

/// Whether `t` (a `k`-prefix of a full-mass point) lies in exactly one
/// polytope or has a `k`-subsum in `(u, v)`, but not both and not neither.
/// The only candidate polytope is the one for `{E : Σ_E t >= v}`.
pub fn decomposition_check(t: &[f64], q: &IntervalQuery) -> Result<bool> {
    if t.len() != q.k {
        return Err(Error::domain(format!("prefix length {} differs from k = {}", t.len(), q.k)));
    }
    let fam = SubsetFamily::above(t, q.v)?;
    let in_union = polytope_contains(t, &Polytope::new(*q, fam))?;
    Ok(in_union != has_subsum_in(t, q.u, q.v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dickman::rho;
    use crate::pd::{pd_density, sample_pd};

    fn table() -> &'static DickmanTable {
        DickmanTable::standard()
    }

    fn q(u: f64, v: f64) -> IntervalQuery {
        IntervalQuery::new(u, v).unwrap()
    }

    fn random_simplex_point<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
        // uniform on the simplex {Σ <= 1} by spacings, then sorted
        let mut cuts: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        cuts.push(0.0);
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        let mut t: Vec<f64> = cuts.windows(2).map(|w| w[1] - w[0]).take(k).collect();
        t.sort_by(|a, b| b.total_cmp(a));
        t
    }

    #[test]
    fn contains_examples() {
        let one = Polytope::new(q(0.2, 0.8), SubsetFamily::from_masks(1, [1]).unwrap());
        assert!(polytope_contains(&[0.9], &one).unwrap());
        assert!(!polytope_contains(&[0.5], &one).unwrap());
        assert!(polytope_contains(&[0.8], &one).unwrap());
        let none = Polytope::new(q(0.2, 0.8), SubsetFamily::empty(1).unwrap());
        assert!(polytope_contains(&[0.1], &none).unwrap());
        assert!(polytope_contains(&[0.2], &none).unwrap());
        assert!(polytope_contains(&[0.5, 0.1], &one).is_err());
        assert!(polytope_contains(&[0.1, 0.5], &Polytope::new(q(0.3, 0.65), SubsetFamily::empty(2).unwrap())).is_err());
    }

    #[test]
    fn k1_families() {
        let fams = enumerate_nonempty_families(&q(0.2, 0.8)).unwrap();
        assert_eq!(fams.len(), 2);
        assert!(fams.contains(&SubsetFamily::empty(1).unwrap()));
        assert!(fams.contains(&SubsetFamily::from_masks(1, [1]).unwrap()));
        assert!(matches!(enumerate_nonempty_families(&q(0.35, 0.45)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn families_match_grid_scan() {
        // a family is nonempty iff some point of a fine grid of Δ^2 lands in it
        for (u, v) in [(0.3, 0.65), (0.25, 0.7), (0.1, 0.6)] {
            let qq = q(u, v);
            assert_eq!(qq.k, 2);
            let fams = enumerate_nonempty_families(&qq).unwrap();
            let mut seen = std::collections::HashSet::new();
            let n = 400;
            for i in 0..=n {
                for j in 0..=i {
                    let t = [i as f64 / n as f64, j as f64 / n as f64];
                    if t[0] + t[1] > 1.0 {
                        continue;
                    }
                    let f = SubsetFamily::above(&t, v).unwrap();
                    if polytope_contains(&t, &Polytope::new(qq, f.clone())).unwrap() {
                        seen.insert(f);
                    }
                }
            }
            for f in &seen {
                assert!(fams.contains(f));
            }
            // every enumerated family with positive measure shows up on the grid
            for f in &fams {
                let i = integrate_polytope(&Polytope::new(qq, f.clone()), table(), Method::Grid { target: 1e-9 }, 100_000)
                    .unwrap();
                if i.value > 1e-3 {
                    assert!(seen.contains(f), "{f:?} missing from grid");
                }
            }
            assert!(fams.iter().all(|f| f.is_upward_closed() && !f.contains(0)));
        }
    }

    #[test]
    fn upward_closure_is_necessary() {
        for (u, v) in [(0.2, 0.8), (0.3, 0.65), (0.4, 0.7), (0.1, 0.35)] {
            for k in 1..=3usize {
                let n_sets = (1usize << k) - 1;
                let qq = IntervalQuery { u, v, k };
                for choice in 0u64..1 << n_sets {
                    let f = SubsetFamily::from_masks(k, (0..n_sets).filter(|j| choice >> j & 1 == 1).map(|j| j + 1))
                        .unwrap();
                    if !f.is_upward_closed() {
                        assert!(!Polytope::new(qq, f).is_nonempty());
                    }
                }
                let mut with_empty = SubsetFamily::empty(k).unwrap();
                (0..1 << k).for_each(|m| with_empty.insert(m));
                assert!(!Polytope::new(qq, with_empty).is_nonempty());
            }
        }
    }

    #[test]
    fn disjointness() {
        let mut rng = streams::stream(3, 0, 0);
        for (u, v) in [(0.2, 0.8), (0.3, 0.65)] {
            let qq = q(u, v);
            let polys: Vec<Polytope> = enumerate_nonempty_families(&qq)
                .unwrap()
                .into_iter()
                .map(|f| Polytope::new(qq, f))
                .collect();
            for _ in 0..100_000 {
                let t = random_simplex_point(&mut rng, qq.k);
                let hits = polys.iter().filter(|p| polytope_contains(&t, p).unwrap()).count();
                assert!(hits <= 1);
            }
        }
        // k = 10: a point can only sit in its own `above` polytope; flipping
        // any one subset in or out yields a family that excludes it
        let qq = q(0.35, 0.45);
        for _ in 0..2_000 {
            let t = random_simplex_point(&mut rng, qq.k);
            let own = SubsetFamily::above(&t, qq.v).unwrap();
            for m in 1..1usize << qq.k {
                if (m * 7919) % 97 != 0 {
                    continue;
                }
                let mut other = SubsetFamily::empty(qq.k).unwrap();
                for x in own.members() {
                    if x != m {
                        other.insert(x);
                    }
                }
                if !own.contains(m) {
                    other.insert(m);
                }
                let inside_own = polytope_contains(&t, &Polytope::new(qq, own.clone())).unwrap();
                let inside_other = polytope_contains(&t, &Polytope::new(qq, other)).unwrap();
                let s = subset_sums(&t)[m];
                let on_boundary = s == qq.u || s == qq.v;
                assert!(!(inside_own && inside_other) || on_boundary);
            }
        }
    }

    #[test]
    fn cdf_map_round_trips() {
        let mut rng = streams::stream(4, 0, 0);
        for k in 1..=5 {
            for _ in 0..200 {
                let u: Vec<f64> = (0..k).map(|_| rng.sample(Open01)).collect();
                let t = cdf_to_simplex(&u, table());
                check_simplex(&t).unwrap();
                let back = simplex_to_cdf(&t, table());
                for (a, b) in u.iter().zip(&back) {
                    assert!((a - b).abs() < 1e-9, "{u:?} -> {t:?} -> {back:?}");
                }
            }
        }
    }

    #[test]
    fn cdf_map_jacobian_is_inverse_density() {
        let mut rng = streams::stream(6, 0, 0);
        let h = 1e-6;
        for k in 1..=3usize {
            let mut checked = 0;
            while checked < 50 {
                let u: Vec<f64> = (0..k).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
                let t0 = cdf_to_simplex(&u, table());
                let dens = pd_density(&t0, table()).unwrap();
                if !(dens.is_finite() && dens > 1e-6 && dens < 1e6) {
                    continue;
                }
                // central-difference Jacobian dt/dU
                let mut jac = vec![vec![0.0; k]; k];
                for j in 0..k {
                    let mut up = u.clone();
                    let mut dn = u.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let tp = cdf_to_simplex(&up, table());
                    let tm = cdf_to_simplex(&dn, table());
                    for i in 0..k {
                        jac[i][j] = (tp[i] - tm[i]) / (2.0 * h);
                    }
                }
                // the map is triangular, so the determinant is the diagonal product
                let det: f64 = (0..k).map(|i| jac[i][i]).product();
                let rel = (det.abs() * dens - 1.0).abs();
                assert!(rel < 1e-4, "k = {k}, u = {u:?}, det*density = {}", det.abs() * dens);
                checked += 1;
            }
        }
    }

    #[test]
    fn k1_integrals() {
        let qq = q(0.2, 0.8);
        let top = integrate_polytope(
            &Polytope::new(qq, SubsetFamily::from_masks(1, [1]).unwrap()),
            table(),
            Method::Grid { target: 1e-12 },
            10,
        )
        .unwrap();
        assert!((top.value - 1.25f64.ln()).abs() < 1e-10);
        let bottom = integrate_polytope(&Polytope::new(qq, SubsetFamily::empty(1).unwrap()), table(), Method::Grid { target: 1e-12 }, 10)
            .unwrap();
        assert!((bottom.value - rho(5.0).unwrap()).abs() < 1e-10);
        let empty = Polytope::new(qq, SubsetFamily::from_masks(1, [0, 1]).unwrap());
        assert_eq!(integrate_polytope(&empty, table(), Method::Grid { target: 1e-12 }, 10).unwrap().value, 0.0);
    }

    #[test]
    fn h_exact_examples() {
        let h = h_exact(&q(0.2, 0.8), table(), 1000).unwrap();
        let target = 1.0 - 1.25f64.ln() - rho(5.0).unwrap();
        assert!((h.value - target).abs() < 1e-10);
        assert!((h.value - 0.77651).abs() < 1e-5);
        assert_eq!(h.n_families, 2);
        let all = h_exact(&q(0.0, 1.0), table(), 1000).unwrap();
        assert!((all.value - 1.0).abs() < 1e-12);
        assert!(matches!(h_exact(&q(0.35, 0.45), table(), 1000), Err(Error::Unsupported(_))));
    }

    #[test]
    fn additivity_and_union_agree() {
        for (u, v) in [(0.3, 0.65), (0.1, 0.45), (0.05, 0.3)] {
            let qq = q(u, v);
            let h = h_exact(&qq, table(), 400_000).unwrap();
            let union = integrate_union_grid(&qq, table(), 400_000, 1e-9);
            let diff = (1.0 - union.value - h.value).abs();
            assert!(diff <= union.error + h.error_bound + 1e-9, "({u}, {v}): {diff} vs {} + {}", union.error, h.error_bound);
        }
    }

    #[test]
    fn monte_carlo_method_agrees_with_grid() {
        let qq = q(0.3, 0.65);
        for f in enumerate_nonempty_families(&qq).unwrap() {
            let p = Polytope::new(qq, f);
            let g = integrate_polytope(&p, table(), Method::Grid { target: 1e-9 }, 200_000).unwrap();
            let m = integrate_polytope(&p, table(), Method::MonteCarlo { seed: 8 }, 200_000).unwrap();
            let sigma = (g.value * (1.0 - g.value) / 200_000.0).sqrt();
            assert!((g.value - m.value).abs() < 4.0 * sigma + g.error + 1e-12, "{} vs {}", g.value, m.value);
        }
    }

    #[test]
    fn monotone_chain() {
        let chain = [(0.3, 0.6), (0.3, 0.65), (0.25, 0.65), (0.2, 0.65)];
        let values: Vec<HExact> = chain.iter().map(|&(u, v)| h_exact(&q(u, v), table(), 200_000).unwrap()).collect();
        for w in values.windows(2) {
            assert!(w[1].value + w[1].error_bound + w[0].error_bound >= w[0].value);
        }
        assert!(values.iter().all(|h| (0.0..=1.0).contains(&h.value)));
    }

    #[test]
    fn formula_mc_matches_exact() {
        let qq = q(0.3, 0.65);
        let exact = h_exact(&qq, table(), 400_000).unwrap();
        let mc = h_formula_mc(&qq, table(), 100_000, 2).unwrap();
        assert!((exact.value - mc.estimate).abs() < 4.0 * mc.std_error + exact.error_bound);
        let k1 = h_formula_mc(&q(0.2, 0.8), table(), 10, 2).unwrap();
        assert!((k1.estimate - (1.0 - 1.25f64.ln() - rho(5.0).unwrap())).abs() < 1e-10);
    }

    #[test]
    fn decomposition_holds_on_pd_prefixes() {
        let qq = q(0.35, 0.45);
        let mut rng = streams::stream(10, 0, 0);
        for _ in 0..20_000 {
            let p = sample_pd(&mut rng, 1e-8).unwrap();
            let mut t = p.entries.clone();
            t.resize(qq.k, 0.0);
            assert!(decomposition_check(&t, &qq).unwrap());
        }
        let qq = q(0.3, 0.65);
        let polys: Vec<Polytope> = enumerate_nonempty_families(&qq)
            .unwrap()
            .into_iter()
            .map(|f| Polytope::new(qq, f))
            .collect();
        for _ in 0..5_000 {
            let p = sample_pd(&mut rng, 1e-8).unwrap();
            let t = &p.entries[..2];
            let hits = polys.iter().filter(|pp| polytope_contains(t, pp).unwrap()).count();
            assert_eq!(hits == 1, !has_subsum_in(t, qq.u, qq.v));
        }
    }
}

//! A simulated version of the probability space that couples the prime
//! factorization of a random integer `N ≤ x` with a Poisson–Dirichlet
//! process `V`.
//!
//! Everything is extracted from one planar Poisson process `𝓡` with
//! intensity `e^{−wy} dw dy` and three independent uniforms. `𝓡` is simulated
//! on vertical strips `A < W ≤ B`; a strip holds `Poisson(log(B/A))` points
//! with `W = A(B/A)^U` and `Y | W ~ Exp(W)`.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;

use crate::divisor_interval::{has_divisor_in, xi};
use crate::pd::PdPrefix;
use crate::primes::{flat_sharp_split, scaled_primes, PrimeTable, StepFunctionTable, DEFAULT_QMAX, MAX_QMAX};
use crate::streams::{self, tag, Stream};
use crate::{csvfmt, Error, Result};

/// Default bound on the expected Y-mass left beyond the window, i.e. `1/B`.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Downward window extensions allowed while locating the plain anchor.
pub const MAX_HALVINGS: u32 = 64;
/// Further halvings allowed while locating the anchor of `𝓡*`.
pub const STAR_HALVINGS: u32 = 20;
/// Lower cut-off of the standalone `Θ^{(1)}_∞` sampler.
pub const THETA1_EPS: f64 = 1e-6;
/// Largest `x` for which the CLI estimates the law of `M_x` and couples `N`.
pub const LAW_M_MAX_X: f64 = 1e4;

/// Points of `𝓡` with `A < W ≤ B`, sorted by `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanePointSet {
    pub points: Vec<(f64, f64)>,
    pub a: f64,
    pub b: f64,
}

/// One strip of `𝓡`.
pub fn sample_strip<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> Result<PlanePointSet> {
    if !(a > 0.0 && a < b && b.is_finite()) {
        return Err(Error::domain(format!("sample_strip needs 0 < A < B, got ({a}, {b})")));
    }
    let mass = (b / a).ln();
    let count = Poisson::new(mass)
        .map_err(|e| Error::domain(format!("strip mass {mass}: {e}")))?
        .sample(rng) as usize;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.sample(Open01);
        let w = (a * (b / a).powf(u)).clamp(f64::MIN_POSITIVE, b);
        let y = Exp::new(w).expect("positive rate").sample(rng);
        points.push((w, y));
    }
    points.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(PlanePointSet { points, a, b })
}

/// The x-labelling of the simulated window: points sorted by `W`, with the
/// position of index 0 chosen so that `S_1 ≤ log x < S_0`.
#[derive(Clone, Debug, PartialEq)]
pub struct XLabelling {
    pub window: PlanePointSet,
    pub log_x: f64,
    /// Position in `window.points` of the point labelled 0.
    pub anchor: usize,
    /// `suffix[p] = Σ_{q ≥ p} Y_q` over the window, so `S_i = suffix[anchor + i]`.
    pub suffix: Vec<f64>,
    /// Expected Y-mass beyond `B`, not simulated.
    pub tail_bound: f64,
    pub halvings: u32,
}

impl XLabelling {
    /// `S_i` for a label `i` inside the window.
    pub fn s(&self, i: i64) -> f64 {
        let p = self.anchor as i64 + i;
        self.suffix[p as usize]
    }

    /// Points labelled `1, 2, ...`, by increasing `W`.
    pub fn labelled(&self) -> &[(f64, f64)] {
        &self.window.points[self.anchor + 1..]
    }

    fn rebuild(&mut self) -> Result<()> {
        let pts = &self.window.points;
        let mut suffix = vec![0.0; pts.len() + 1];
        for p in (0..pts.len()).rev() {
            suffix[p] = suffix[p + 1] + pts[p].1;
        }
        // last position whose suffix still exceeds log x
        let count_above = suffix[..pts.len()].partition_point(|&s| s > self.log_x);
        if count_above == 0 {
            return Err(Error::InsufficientPrefix(format!(
                "window Y-mass {} does not exceed log x = {}",
                suffix[0], self.log_x
            )));
        }
        self.anchor = count_above - 1;
        self.suffix = suffix;
        Ok(())
    }

    /// Prepend the strip `(A/2, A]`.
    fn extend_down<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let a = self.window.a;
        let strip = sample_strip(rng, 0.5 * a, a)?;
        let mut pts = strip.points;
        pts.extend_from_slice(&self.window.points);
        self.window.points = pts;
        self.window.a = 0.5 * a;
        self.halvings += 1;
        Ok(())
    }
}

/// Simulate strips until the anchor `S_1 ≤ log x < S_0` is inside the window.
/// `B = 1/tolerance` bounds the expected unsimulated mass.
pub fn x_label<R: Rng + ?Sized>(rng: &mut R, x: f64, tolerance: f64) -> Result<XLabelling> {
    if !(x >= 2.0) {
        return Err(Error::domain(format!("x_label needs x >= 2, got {x}")));
    }
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::domain(format!("tolerance must be in (0, 1), got {tolerance}")));
    }
    let log_x = x.ln();
    let b = 1.0 / tolerance;
    let a = (1.0 / log_x).min(0.5 * b);
    let mut label = XLabelling {
        window: sample_strip(rng, a, b)?,
        log_x,
        anchor: 0,
        suffix: Vec::new(),
        tail_bound: tolerance,
        halvings: 0,
    };
    loop {
        match label.rebuild() {
            Ok(()) => return Ok(label),
            Err(Error::InsufficientPrefix(_)) if label.halvings < MAX_HALVINGS => label.extend_down(rng)?,
            Err(Error::InsufficientPrefix(msg)) => {
                return Err(Error::resource(format!("x_label: {MAX_HALVINGS} halvings exhausted; {msg}")))
            }
            Err(e) => return Err(e),
        }
    }
}

/// `L_1 = 1 − S_1/log x`, `L_i = Y_{i−1}/log x`, and `V = L` sorted.
pub fn build_l_v(label: &XLabelling) -> (Vec<f64>, PdPrefix) {
    let lx = label.log_x;
    let mut l = Vec::with_capacity(label.labelled().len() + 1);
    l.push(1.0 - label.s(1) / lx);
    l.extend(label.labelled().iter().map(|&(_, y)| y / lx));
    let mut v = l.clone();
    v.sort_by(|a, b| b.total_cmp(a));
    let tail_mass = (1.0 - v.iter().sum::<f64>()).max(0.0);
    (l, PdPrefix { entries: v, tail_mass })
}

/// A point of `𝓡* = ψ(𝓡 ∩ {Y > e^{−γ}})`, `ψ(w, y) = (wy/h(y), e^{h(y)})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StarPoint {
    pub t_star: f64,
    /// The prime power `e^{h(Y)}`; `None` when `Y` lies past the table, in
    /// which case `log_q` is a lower bound and `h(Y) ≈ Y` was used for `T*`.
    pub q_star: Option<u64>,
    pub log_q: f64,
}

/// Apply `ψ` to the points with `Y > e^{−γ}`.
pub fn map_to_rstar(points: &[(f64, f64)], table: &StepFunctionTable) -> Vec<StarPoint> {
    let lambda0 = table.lambdas()[0];
    let floor = (table.qmax() as f64).ln();
    points
        .iter()
        .filter(|p| p.1 > lambda0)
        .map(|&(w, y)| match (table.step_h(y), table.step_q(y)) {
            (Ok(h), Ok(q)) => StarPoint {
                t_star: w * y / h,
                q_star: Some(q),
                log_q: h,
            },
            _ => StarPoint {
                t_star: w,
                q_star: None,
                log_q: y.max(floor),
            },
        })
        .collect()
}

/// The x-labelling of `𝓡*`, by increasing `T*`.
#[derive(Clone, Debug, PartialEq)]
pub struct StarLabelling {
    pub points: Vec<StarPoint>,
    /// Position of the point labelled 0.
    pub anchor: usize,
    /// Number of points labelled `1..=K`.
    pub k: usize,
    pub j_star: u64,
    /// Whether every unsimulated point provably has a smaller `T*` than the
    /// anchor.
    pub determined: bool,
}

/// Label `𝓡*` from its simulated part. `t_cap` bounds `T*` of every point
/// not simulated. An undetermined anchor is an [`Error::InsufficientPrefix`].
pub fn x_label_star(mut points: Vec<StarPoint>, x: f64, t_cap: f64) -> Result<StarLabelling> {
    points.sort_by(|a, b| a.t_star.total_cmp(&b.t_star));
    let log_x = x.ln();
    let mut acc = 0.0;
    let mut anchor = None;
    for p in (0..points.len()).rev() {
        acc += points[p].log_q;
        if acc > log_x * (1.0 + 1e-14) {
            anchor = Some(p);
            break;
        }
    }
    let Some(anchor) = anchor else {
        return Err(Error::InsufficientPrefix(format!(
            "simulated 𝓡* has total log-mass {acc} <= log x"
        )));
    };
    if !(points[anchor].t_star > t_cap) {
        return Err(Error::InsufficientPrefix(format!(
            "anchor T* = {} not above the unsimulated bound {t_cap}",
            points[anchor].t_star
        )));
    }
    let mut j_star = 1u64;
    for p in &points[anchor + 1..] {
        let q = p
            .q_star
            .ok_or_else(|| Error::Integrity("oversize point labelled at index >= 1".into()))?;
        j_star = j_star
            .checked_mul(q)
            .ok_or_else(|| Error::Integrity("J* overflows u64".into()))?;
    }
    let k = points.len() - anchor - 1;
    Ok(StarLabelling {
        points,
        anchor,
        k,
        j_star,
        determined: true,
    })
}

/// The smallest element of `{1} ∪ primes` with `θ(p) ≥ u1·θ(x/J)`.
pub fn extra_prime(u1: f64, x: f64, j: f64, primes: &PrimeTable) -> Result<u64> {
    if !(j >= 1.0) {
        return Err(Error::domain(format!("extra_prime needs J >= 1, got {j}")));
    }
    let y = x / j;
    if y < 2.0 {
        return Ok(1);
    }
    let target = u1 * primes.theta(y)?;
    if target <= 0.0 {
        return Ok(1);
    }
    primes
        .smallest_prime_with_theta_at_least(target)
        .ok_or_else(|| Error::resource(format!("θ inversion at {target} beyond the prime table")))
}

/// `M = J·P_extra` for either labelling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MDraw {
    pub m: u64,
    pub j: u64,
    pub p_extra: u64,
    /// `J > x`; impossible in exact arithmetic only when `Σ h(Y_i) ≤ log x`,
    /// which the anchor does not guarantee.
    pub j_exceeds_x: bool,
}

fn finish_m(j: u64, u1: f64, x: f64, primes: &PrimeTable) -> Result<MDraw> {
    let j_exceeds_x = j as f64 > x;
    let p_extra = if j_exceeds_x { 1 } else { extra_prime(u1, x, j as f64, primes)? };
    let m = j
        .checked_mul(p_extra)
        .ok_or_else(|| Error::Integrity("M overflows u64".into()))?;
    Ok(MDraw {
        m,
        j,
        p_extra,
        j_exceeds_x,
    })
}

/// `J = ∏_{i≥1} e^{h(Y_i)}` and `M = J·P_extra`.
pub fn build_m(label: &XLabelling, u1: f64, x: f64, ctx: &CouplingContext) -> Result<MDraw> {
    let mut j = 1u64;
    for &(_, y) in label.labelled() {
        let q = ctx.table.step_q(y)?;
        j = j
            .checked_mul(q)
            .ok_or_else(|| Error::Integrity("J overflows u64".into()))?;
    }
    finish_m(j, u1, x, &ctx.primes)
}

/// `M* = J*·P*_extra`, reusing the same `U_1`.
pub fn build_mstar(star: &StarLabelling, u1: f64, x: f64, ctx: &CouplingContext) -> Result<MDraw> {
    finish_m(star.j_star, u1, x, &ctx.primes)
}

/// A finitely supported law on the positive integers.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalLaw {
    pub support: Vec<u64>,
    pub masses: Vec<f64>,
}

impl EmpiricalLaw {
    pub fn new(support: Vec<u64>, masses: Vec<f64>) -> Result<Self> {
        if support.len() != masses.len() || support.is_empty() {
            return Err(Error::domain("law needs matching, nonempty support and masses"));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("law support must be sorted and distinct"));
        }
        if masses.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::domain("law masses must be nonnegative"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("law masses sum to {total}, not 1")));
        }
        Ok(Self { support, masses })
    }

    /// Histogram of observed values.
    pub fn from_counts(counts: &BTreeMap<u64, u64>) -> Result<Self> {
        let n: u64 = counts.values().sum();
        let support = counts.keys().copied().collect();
        let masses = counts.values().map(|&c| c as f64 / n as f64).collect();
        Self::new(support, masses)
    }

    /// Uniform on `1..=n`.
    pub fn uniform(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("uniform law needs n >= 1"));
        }
        Ok(Self {
            support: (1..=n).collect(),
            masses: vec![1.0 / n as f64; n as usize],
        })
    }

    pub fn mass(&self, m: u64) -> f64 {
        self.support.binary_search(&m).map_or(0.0, |i| self.masses[i])
    }
}

/// `sup_A |μ_1(A) − μ_2(A)|`, as half the ℓ¹ distance of the mass vectors.
pub fn tv_distance(law1: &EmpiricalLaw, law2: &EmpiricalLaw) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    let (s1, s2) = (&law1.support, &law2.support);
    while i < s1.len() || j < s2.len() {
        let a = s1.get(i).copied().unwrap_or(u64::MAX);
        let b = s2.get(j).copied().unwrap_or(u64::MAX);
        if a == b {
            acc += (law1.masses[i] - law2.masses[j]).abs();
            i += 1;
            j += 1;
        } else if a < b {
            acc += law1.masses[i];
            i += 1;
        } else {
            acc += law2.masses[j];
            j += 1;
        }
    }
    0.5 * acc
}

/// The map `f_{μ1,μ2}(m, a, b)`: keep `m` when `a·μ_1(m) ≤ μ_2(m)`, otherwise
/// draw from the normalised deficit `(μ_1 − μ_2)^−` by inverting `z_j`.
#[derive(Clone, Debug)]
pub struct MaximalCoupling {
    pub law1: EmpiricalLaw,
    pub law2: EmpiricalLaw,
    pub d_tv: f64,
    /// `(i, z_i)` for the `i` where `μ_2(i) > μ_1(i)`.
    z: Vec<(u64, f64)>,
}

impl MaximalCoupling {
    pub fn new(law1: EmpiricalLaw, law2: EmpiricalLaw) -> Self {
        let d_tv = tv_distance(&law1, &law2);
        let mut z = Vec::new();
        let mut acc = 0.0;
        if d_tv > 0.0 {
            for (&i, &m2) in law2.support.iter().zip(&law2.masses) {
                let deficit = m2 - law1.mass(i);
                if deficit > 0.0 {
                    acc += deficit / d_tv;
                    z.push((i, acc));
                }
            }
        }
        Self { law1, law2, d_tv, z }
    }

    /// `m` drawn outside both supports is treated as rejected rather than kept.
    pub fn couple(&self, m: u64, u2: f64, u3: f64) -> u64 {
        if self.d_tv == 0.0 || self.z.is_empty() {
            return m;
        }
        let (m1, m2) = (self.law1.mass(m), self.law2.mass(m));
        if m2 > 0.0 && u2 * m1 <= m2 {
            return m;
        }
        let idx = self.z.partition_point(|&(_, zi)| zi < u3).min(self.z.len() - 1);
        self.z[idx].0
    }
}

/// One-shot form of [`MaximalCoupling::couple`].
pub fn maximal_couple(m: u64, u2: f64, u3: f64, law1: &EmpiricalLaw, law2: &EmpiricalLaw) -> u64 {
    MaximalCoupling::new(law1.clone(), law2.clone()).couple(m, u2, u3)
}

/// `r_0 + Σ r(Y)` over a Poisson process with intensity `dy/y` on
/// `(eps, e^{−γ}]`, where `r(y) = y`. The part below `eps` has mean `eps`.
pub fn theta1_inf<R: Rng + ?Sized>(rng: &mut R, eps: f64, table: &StepFunctionTable) -> Result<f64> {
    let lambda0 = table.lambdas()[0];
    if !(eps > 0.0 && eps < lambda0) {
        return Err(Error::domain(format!("theta1_inf needs 0 < eps < e^-γ, got {eps}")));
    }
    let ratio = lambda0 / eps;
    let count = Poisson::new(ratio.ln()).expect("positive mean").sample(rng) as usize;
    let mut acc = table.r0();
    for _ in 0..count {
        let u: f64 = rng.sample(Open01);
        acc += eps * ratio.powf(u);
    }
    Ok(acc)
}

/// `Σ_{i ≥ 1, Y_i > e^{−γ}} r(Y_i)`.
pub fn theta2_x(label: &XLabelling, table: &StepFunctionTable) -> Result<f64> {
    let lambda0 = table.lambdas()[0];
    label
        .labelled()
        .iter()
        .filter(|p| p.1 > lambda0)
        .map(|&(_, y)| table.discrepancy_r(y))
        .sum()
}

/// Counts `A_{p^v}` of labelled points with `e^{h(Y_i)} = p^v`, for `p^v ≤ pmax`.
pub fn apv_diagnostic(label: &XLabelling, table: &StepFunctionTable, pmax: u64) -> Result<BTreeMap<u64, u32>> {
    let mut out = BTreeMap::new();
    for &(_, y) in label.labelled() {
        let q = table.step_q(y)?;
        if q > 1 && q <= pmax {
            *out.entry(q).or_insert(0) += 1;
        }
    }
    Ok(out)
}

/// Tables shared by every run at one `x`.
#[derive(Clone, Debug)]
pub struct CouplingContext {
    pub x: f64,
    pub log_x: f64,
    pub tolerance: f64,
    pub table: Cow<'static, StepFunctionTable>,
    pub primes: PrimeTable,
    /// `max_j λ_j / log q_j`, so that `T* ≤ c_max·W` for every point of `𝓡*`.
    pub c_max: f64,
    /// Coupling of `M`'s law to the uniform law on `1..=⌊x⌋`; without it
    /// `N = M`.
    pub coupling: Option<MaximalCoupling>,
}

impl CouplingContext {
    pub fn new(x: f64, tolerance: f64) -> Result<Self> {
        if !(x >= 2.0) {
            return Err(Error::domain(format!("coupling needs x >= 2, got {x}")));
        }
        if x > MAX_QMAX as f64 {
            return Err(Error::resource(format!("coupling supports x <= {MAX_QMAX}")));
        }
        // every prime power <= x must be tabulated so that labelled factors
        // never fall past the table
        let table = if x <= DEFAULT_QMAX as f64 {
            Cow::Borrowed(StepFunctionTable::global())
        } else {
            Cow::Owned(StepFunctionTable::new((x as u64).next_power_of_two().min(MAX_QMAX))?)
        };
        let c_max = table
            .lambdas()
            .iter()
            .skip(1)
            .zip(table.logq())
            .map(|(l, lq)| l / lq)
            .fold(0.0, f64::max);
        Ok(Self {
            x,
            log_x: x.ln(),
            tolerance,
            table,
            primes: PrimeTable::new(x.floor() as u64)?,
            c_max,
            coupling: None,
        })
    }

    /// Couples `N` to `M` using `law_m` against the uniform law on `1..=⌊x⌋`.
    pub fn with_law_m(mut self, law_m: EmpiricalLaw) -> Result<Self> {
        let uniform = EmpiricalLaw::uniform(self.x.floor() as u64)?;
        self.coupling = Some(MaximalCoupling::new(law_m, uniform));
        Ok(self)
    }
}

/// One realization of every coupled quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingRun {
    pub x: f64,
    pub n: u64,
    pub m: u64,
    pub m_star: u64,
    pub v_prefix: PdPrefix,
    pub l_prefix: Vec<f64>,
    pub s_x: f64,
    pub t_x: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// `‖Primes(N, x) − V‖₁`.
    pub l1_distance: f64,
    /// `‖Primes(M, x) − V‖₁`.
    pub l1_distance_m: f64,
    pub event_e: bool,
    pub p_extra: u64,
    pub p_extra_star: u64,
    pub j: u64,
    pub j_star: u64,
    /// `N` came from the maximal coupling rather than `N = M`.
    pub coupled: bool,
    pub j_exceeds_x: bool,
    pub star_determined: bool,
}

impl CouplingRun {
    pub const CSV_HEADER: &'static str = "x,N,M,Mstar,S_x,T_x,Theta1,Theta2,l1_distance,event_E";

    pub fn csv_row(&self) -> String {
        use csvfmt::num;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            num(self.x),
            self.n,
            self.m,
            self.m_star,
            num(self.s_x),
            num(self.t_x),
            num(self.theta1),
            num(self.theta2),
            num(self.l1_distance),
            self.event_e as u8
        )
    }

    /// `x^{T_x}`, the multiplicative window of the boundary event.
    pub fn kappa(&self) -> f64 {
        (self.t_x * self.x.ln()).exp()
    }
}

/// `‖a − b‖₁` for non-increasing sequences padded with zeros.
pub fn l1_padded(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .sum()
}

fn primes_of(n: u64, log_x: f64) -> Result<Vec<f64>> {
    if n <= 1 {
        return Ok(Vec::new());
    }
    Ok(scaled_primes(n, log_x)?.entries)
}

/// Draws of `U_1`, the plain labelling and `M`, shared by [`run_coupling`]
/// and [`estimate_law_m`].
fn draw_m(ctx: &CouplingContext, rng: &mut Stream) -> Result<(f64, f64, f64, XLabelling, MDraw)> {
    let u1: f64 = rng.sample(Open01);
    let u2: f64 = rng.sample(Open01);
    let u3: f64 = rng.sample(Open01);
    let label = x_label(rng, ctx.x, ctx.tolerance)?;
    let m = build_m(&label, u1, ctx.x, ctx)?;
    Ok((u1, u2, u3, label, m))
}

/// Simulate one coupling run.
pub fn run_coupling(ctx: &CouplingContext, rng: &mut Stream) -> Result<CouplingRun> {
    let x = ctx.x;
    let log_x = ctx.log_x;
    let table = &*ctx.table;
    let lambda0 = table.lambdas()[0];
    let (u1, u2, u3, mut label, m) = draw_m(ctx, rng)?;
    let (l_prefix, v_prefix) = build_l_v(&label);

    // 𝓡*: extend the window down until its anchor cannot move
    let mut extra = 0;
    let star = loop {
        let pts = map_to_rstar(&label.window.points, table);
        match x_label_star(pts, x, ctx.c_max * label.window.a) {
            Ok(s) => break s,
            Err(Error::InsufficientPrefix(_)) if extra < STAR_HALVINGS => {
                label.extend_down(rng)?;
                extra += 1;
            }
            Err(Error::InsufficientPrefix(_)) => {
                let pts = map_to_rstar(&label.window.points, table);
                let mut s = x_label_star(pts, x, 0.0)?;
                s.determined = false;
                break s;
            }
            Err(e) => return Err(e),
        }
    };
    label.rebuild()?;
    let mstar = build_mstar(&star, u1, x, ctx)?;

    let (n, coupled) = match &ctx.coupling {
        Some(c) => (c.couple(m.m, u2, u3), true),
        None => (m.m, false),
    };

    // Θ^{(1)}: window points with Y ≤ e^{−γ}, plus W ≤ A by thinning a unit-rate
    // process on (0, A] × (0, e^{−γ}]
    let a = label.window.a;
    let mut theta1 = table.r0();
    theta1 += label
        .window
        .points
        .iter()
        .filter(|p| p.1 <= lambda0)
        .map(|p| p.1)
        .sum::<f64>();
    let low = Poisson::new(a * lambda0).expect("positive mean").sample(rng) as usize;
    for _ in 0..low {
        let w = a * rng.random::<f64>();
        let y = lambda0 * rng.random::<f64>();
        if y > 0.0 && rng.random::<f64>() < (-w * y).exp() {
            theta1 += y;
        }
    }
    let theta2 = theta2_x(&label, table)?;

    let (flat, _) = flat_sharp_split(n)?;
    let s_x = (5.0 / log_x) * (x / flat as f64).ln().max(0.0);
    let mut r_sum = 0.0;
    let first = log_x - label.s(1);
    if first > 0.0 {
        r_sum += table.discrepancy_r(first)?;
    }
    for &(_, y) in label.labelled() {
        r_sum += table.discrepancy_r(y)?;
    }
    let t_x = (5.0 / log_x) * (r_sum + label.tail_bound);

    let tail = label.tail_bound / log_x;
    let l1_distance = l1_padded(&primes_of(n, log_x)?, &v_prefix.entries) + tail;
    let l1_distance_m = l1_padded(&primes_of(m.m, log_x)?, &v_prefix.entries) + tail;

    Ok(CouplingRun {
        x,
        n,
        m: m.m,
        m_star: mstar.m,
        v_prefix,
        l_prefix,
        s_x,
        t_x,
        theta1,
        theta2,
        l1_distance,
        l1_distance_m,
        event_e: n == m.m && m.m == mstar.m,
        p_extra: m.p_extra,
        p_extra_star: mstar.p_extra,
        j: m.j,
        j_star: mstar.j,
        coupled,
        j_exceeds_x: m.j_exceeds_x,
        star_determined: star.determined,
    })
}

/// `n_runs` runs, run `i` on stream `(master_seed, stream_tag, i)`.
pub fn run_batch(ctx: &CouplingContext, master_seed: u64, stream_tag: u64, n_runs: u64) -> Result<Vec<CouplingRun>> {
    (0..n_runs)
        .into_par_iter()
        .map(|i| run_coupling(ctx, &mut streams::stream(master_seed, stream_tag, i)))
        .collect()
}

/// Empirical law of `M_x` from `n_samples` independent draws, and the number
/// of draws with `M > x`.
pub fn estimate_law_m(ctx: &CouplingContext, master_seed: u64, n_samples: u64) -> Result<(EmpiricalLaw, u64)> {
    if n_samples == 0 {
        return Err(Error::domain("estimate_law_m needs n_samples >= 1"));
    }
    let block = crate::pd::MC_BLOCK;
    let blocks = n_samples.div_ceil(block);
    let parts: Vec<(HashMap<u64, u64>, u64)> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<_> {
            let mut rng = streams::stream(master_seed, tag::LAW_M, b);
            let mut counts = HashMap::new();
            let mut over = 0;
            for _ in 0..block.min(n_samples - b * block) {
                let (_, _, _, _, m) = draw_m(ctx, &mut rng)?;
                *counts.entry(m.m).or_insert(0) += 1;
                over += (m.m as f64 > ctx.x) as u64;
            }
            Ok((counts, over))
        })
        .collect::<Result<_>>()?;
    let mut total = BTreeMap::new();
    let mut over = 0;
    for (c, o) in parts {
        over += o;
        for (k, v) in c {
            *total.entry(k).or_insert(0) += v;
        }
    }
    Ok((EmpiricalLaw::from_counts(&total)?, over))
}

/// Frequency of `{N has a divisor in (y·x^{−T_x}, y·x^{T_x})}`, paired with `ξ(y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdblEstimate {
    pub x: f64,
    pub y: f64,
    pub probability: f64,
    pub std_error: f64,
    pub xi: f64,
    /// `N = M` was used because no law of `M` was supplied.
    pub uncoupled: bool,
}

impl PdblEstimate {
    pub const CSV_HEADER: &'static str = "x,y,probability,xi";

    pub fn csv_row(&self) -> String {
        use csvfmt::num;
        format!("{},{},{},{}", num(self.x), num(self.y), num(self.probability), num(self.xi))
    }
}

/// Estimate the boundary probability from `n_runs` coupling runs. With
/// `zero_t` the window is forced to `κ = 1`, an empty interval.
pub fn pdbl_probe(ctx: &CouplingContext, master_seed: u64, y: f64, n_runs: u64, zero_t: bool) -> Result<PdblEstimate> {
    if !(y >= 3.0 && y <= ctx.x) {
        return Err(Error::domain(format!("pdbl_probe needs 3 <= y <= x, got y = {y}")));
    }
    if n_runs == 0 {
        return Err(Error::domain("pdbl_probe needs n_runs >= 1"));
    }
    let hits: u64 = (0..n_runs)
        .into_par_iter()
        .map(|i| -> Result<u64> {
            let run = run_coupling(ctx, &mut streams::stream(master_seed, tag::PDBL, i))?;
            let kappa = if zero_t { 1.0 } else { run.kappa() };
            Ok(has_divisor_in(run.n, y / kappa, y * kappa)? as u64)
        })
        .sum::<Result<u64>>()?;
    let p = hits as f64 / n_runs as f64;
    Ok(PdblEstimate {
        x: ctx.x,
        y,
        probability: p,
        std_error: (p * (1.0 - p) / n_runs as f64).sqrt(),
        xi: xi(y).value,
        uncoupled: ctx.coupling.is_none(),
    })
}

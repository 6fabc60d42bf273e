//! Batch harnesses behind the `divden` subcommands: each takes an
//! [`ExperimentConfig`], returns typed rows and can render them as CSV.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::coupling::{
    estimate_law_m, pdbl_probe, run_batch, CouplingContext, CouplingRun, PdblEstimate, DEFAULT_TOLERANCE,
    LAW_M_MAX_X,
};
use crate::csvfmt::num;
use crate::dickman::DickmanTable;
use crate::divisor_interval::{count_h_sieve, ntbl_count, xi, CountQuery};
use crate::pd::{estimate_h_mc, IntervalQuery, DEFAULT_TAIL_THRESHOLD};
use crate::polytope::{h_exact, h_formula_mc, DEFAULT_BUDGET, MAX_EXACT_K};
use crate::streams::tag;
use crate::{Error, Result};

/// Shared settings of the batch subcommands. Read from a flat `key = value`
/// file; command-line flags override individual keys.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub n_samples: u64,
    pub x_grid: Vec<u64>,
    pub uv_grid: Vec<(f64, f64)>,
    /// Probe points for `pdbl`.
    pub y_grid: Vec<f64>,
    /// Draws of `M` used to estimate its law for `couple` and `pdbl`.
    pub law_samples: u64,
    pub output_path: Option<PathBuf>,
    /// `None` lets rayon decide.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            n_samples: 10_000,
            x_grid: vec![10_000, 100_000, 1_000_000],
            uv_grid: vec![(0.3, 0.65)],
            y_grid: vec![10.0, 100.0, 1000.0],
            law_samples: 200_000,
            output_path: None,
            threads: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, s: &str) -> Result<T> {
    let s = s.trim();
    // allow 1e6 for integer keys
    s.parse::<T>().or_else(|_| {
        let f: f64 = s
            .parse()
            .map_err(|_| Error::Parse(format!("{key}: cannot parse {s:?}")))?;
        format!("{}", f as u64)
            .parse::<T>()
            .map_err(|_| Error::Parse(format!("{key}: cannot parse {s:?}")))
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| parse_num(key, t)).collect()
}

/// `u:v` pairs separated by commas, e.g. `0.3:0.65,0.2:0.8`.
pub fn parse_uv_grid(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (u, v) = t
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("uv pair {t:?} is not u:v")))?;
            Ok((parse_num("uv_grid", u)?, parse_num("uv_grid", v)?))
        })
        .collect()
}

impl ExperimentConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "master_seed" | "seed" => self.master_seed = parse_num(key, value)?,
            "n_samples" | "samples" => self.n_samples = parse_num(key, value)?,
            "x_grid" => self.x_grid = parse_list(key, value)?,
            "uv_grid" => self.uv_grid = parse_uv_grid(value)?,
            "y_grid" => self.y_grid = parse_list(key, value)?,
            "law_samples" => self.law_samples = parse_num(key, value)?,
            "output_path" | "output" => self.output_path = Some(PathBuf::from(value)),
            "threads" | "thread_count" => {
                self.threads = if value == "auto" { None } else { Some(parse_num(key, value)?) }
            }
            other => return Err(Error::Parse(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parse a config file body. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::domain("n_samples must be at least 1"));
        }
        if self.x_grid.iter().any(|&x| x < 2) {
            return Err(Error::domain("x_grid entries must be at least 2"));
        }
        for &(u, v) in &self.uv_grid {
            IntervalQuery::new(u, v)?;
        }
        if self.threads == Some(0) {
            return Err(Error::domain("threads must be at least 1"));
        }
        Ok(())
    }

    /// Run `f` on a pool sized by `threads`.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(f()),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map(|p| p.install(f))
                .map_err(|e| Error::resource(format!("thread pool: {e}"))),
        }
    }
}

/// Write `text` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// `h(u, v)` and an uncertainty: the grid bound for `k ≤ 4`, otherwise a
/// standard error of the sampled union integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityValue {
    pub u: f64,
    pub v: f64,
    pub k: usize,
    pub value: f64,
    pub error: f64,
    pub method: DensityMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DensityMethod {
    Exact,
    /// Sampling of the integral formula.
    Formula,
    /// Direct sampling of the Poisson–Dirichlet process.
    Mc,
}

impl DensityMethod {
    pub fn name(self) -> &'static str {
        match self {
            DensityMethod::Exact => "exact",
            DensityMethod::Formula => "formula",
            DensityMethod::Mc => "mc",
        }
    }
}

/// Evaluate `h(u, v)`; `budget` is the grid budget for `Exact` and the sample
/// count otherwise.
pub fn density(u: f64, v: f64, method: DensityMethod, budget: u64, seed: u64) -> Result<DensityValue> {
    let q = IntervalQuery::new(u, v)?;
    let table = DickmanTable::standard();
    let (value, error) = match method {
        DensityMethod::Exact => {
            let h = h_exact(&q, table, budget)?;
            (h.value, h.error_bound)
        }
        DensityMethod::Formula => {
            let e = h_formula_mc(&q, table, budget, seed)?;
            (e.estimate, e.std_error)
        }
        DensityMethod::Mc => {
            let e = estimate_h_mc(&q, budget, seed, DEFAULT_TAIL_THRESHOLD)?;
            (e.estimate, e.std_error)
        }
    };
    Ok(DensityValue { u, v, k: q.k, value, error, method })
}

/// Exact evaluation when the family enumeration is feasible, formula sampling
/// otherwise.
pub fn best_density(u: f64, v: f64, n_samples: u64, seed: u64) -> Result<DensityValue> {
    let q = IntervalQuery::new(u, v)?;
    if q.k <= MAX_EXACT_K {
        density(u, v, DensityMethod::Exact, DEFAULT_BUDGET, seed)
    } else {
        density(u, v, DensityMethod::Formula, n_samples, seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem1Row {
    pub x: u64,
    pub u: f64,
    pub v: f64,
    pub y: f64,
    pub z: f64,
    pub h_count: u64,
    /// `x·h(u, v)`.
    pub x_h: f64,
    pub abs_diff: f64,
    /// `x·ξ(y)`.
    pub x_xi: f64,
}

impl Theorem1Row {
    pub const CSV_HEADER: &'static str = "x,y,z,H_exact,x_h,abs_diff,x_xi";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.x,
            num(self.y),
            num(self.z),
            self.h_count,
            num(self.x_h),
            num(self.abs_diff),
            num(self.x_xi)
        )
    }

    /// `|H/x − h|`.
    pub fn normalized_error(&self) -> f64 {
        self.abs_diff / self.x as f64
    }
}

/// Exact `H(x, x^u, x^v)` against `x·h(u, v)` for every grid pair.
pub fn theorem1(cfg: &ExperimentConfig) -> Result<Vec<Theorem1Row>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &(u, v) in &cfg.uv_grid {
        let h = best_density(u, v, cfg.n_samples.max(1000), cfg.master_seed)?.value;
        for &x in &cfg.x_grid {
            let xf = x as f64;
            let (y, z) = (xf.powf(u), xf.powf(v));
            let count = count_h_sieve(&CountQuery::new(x, y, z)?)?;
            let x_h = xf * h;
            rows.push(Theorem1Row {
                x,
                u,
                v,
                y,
                z,
                h_count: count,
                x_h,
                abs_diff: (count as f64 - x_h).abs(),
                x_xi: xf * xi(y).value,
            });
        }
    }
    Ok(rows)
}

pub fn theorem1_csv(rows: &[Theorem1Row]) -> String {
    csv(Theorem1Row::CSV_HEADER, rows.iter().map(Theorem1Row::csv_row))
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

/// Log-log plot of `|H/x − h|` and `ξ(x^u)` against `x`, one series pair per
/// `(u, v)`.
pub fn theorem1_svg(rows: &[Theorem1Row]) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .flat_map(|r| [(r.x as f64, r.normalized_error()), (r.x as f64, r.x_xi / r.x as f64)])
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|(a, b)| (a.log10(), b.log10()))
        .collect();
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min).floor();
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max).ceil();
        if lo.is_finite() && hi > lo { (lo, hi) } else { (0.0, 1.0) }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let sx = |v: f64| pad + (v - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{} {} V{} H{}" fill="none" stroke="black"/>"#,
        pad,
        pad,
        h - pad,
        w - pad
    );
    for e in x0 as i32..=x1 as i32 {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">1e{e}</text>"#, sx(e as f64), h - pad + 18.0);
    }
    for e in y0 as i32..=y1 as i32 {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">1e{e}</text>"#, pad - 6.0, sy(e as f64) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">x</text>"#, w / 2.0, h - 15.0);

    let mut pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.u, r.v)).collect();
    pairs.dedup();
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    for (i, (u, v)) in pairs.iter().enumerate() {
        let c = colors[i % colors.len()];
        let series: Vec<&Theorem1Row> = rows.iter().filter(|r| (r.u, r.v) == (*u, *v)).collect();
        for (dash, f) in [("", Theorem1Row::normalized_error as fn(&Theorem1Row) -> f64), ("6 4", |r: &Theorem1Row| r.x_xi / r.x as f64)] {
            let d: Vec<String> = series
                .iter()
                .filter(|r| f(r) > 0.0)
                .map(|r| format!("{:.2},{:.2}", sx((r.x as f64).log10()), sy(f(r).log10())))
                .collect();
            if d.is_empty() {
                continue;
            }
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{c}" stroke-dasharray="{dash}"/>"#,
                d.join(" ")
            );
            for p in &d {
                let (px, py) = p.split_once(',').unwrap();
                let _ = writeln!(s, r#"<circle cx="{px}" cy="{py}" r="3" fill="{c}"/>"#);
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{c}">(u, v) = ({u}, {v}): |H/x - h| solid, xi(x^u) dashed</text>"#,
            pad + 10.0,
            pad - 20.0 + 16.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Aggregates of one `x` in a coupling batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoupleSummary {
    pub x: f64,
    pub runs: u64,
    /// `N` came from the maximal coupling (as opposed to `N = M`).
    pub coupled: bool,
    pub law_tv: f64,
    pub mean_l1_n: f64,
    pub mean_l1_m: f64,
    pub p_event_e: f64,
    pub p_m_ne_mstar: f64,
    pub p_exceed_n: f64,
    pub p_exceed_m: f64,
    pub star_undetermined: u64,
    pub j_exceeds_x: u64,
}

impl CoupleSummary {
    pub const CSV_HEADER: &'static str = "x,runs,coupled,law_tv,mean_l1_N,mean_l1_M,P_event_E,P_M_ne_Mstar,P_exceed_N,P_exceed_M,star_undetermined,J_exceeds_x";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            num(self.x),
            self.runs,
            self.coupled as u8,
            num(self.law_tv),
            num(self.mean_l1_n),
            num(self.mean_l1_m),
            num(self.p_event_e),
            num(self.p_m_ne_mstar),
            num(self.p_exceed_n),
            num(self.p_exceed_m),
            self.star_undetermined,
            self.j_exceeds_x
        )
    }

    pub fn of(x: f64, runs: &[CouplingRun], law_tv: f64) -> Self {
        let n = runs.len().max(1) as f64;
        let freq = |f: &dyn Fn(&CouplingRun) -> bool| runs.iter().filter(|r| f(r)).count() as f64 / n;
        let mean = |f: &dyn Fn(&CouplingRun) -> f64| runs.iter().map(f).sum::<f64>() / n;
        Self {
            x,
            runs: runs.len() as u64,
            coupled: runs.first().is_some_and(|r| r.coupled),
            law_tv,
            mean_l1_n: mean(&|r| r.l1_distance),
            mean_l1_m: mean(&|r| r.l1_distance_m),
            p_event_e: freq(&|r| r.event_e),
            p_m_ne_mstar: freq(&|r| r.m != r.m_star),
            p_exceed_n: freq(&|r| r.l1_distance >= r.s_x.max(r.t_x)),
            p_exceed_m: freq(&|r| r.l1_distance_m >= r.s_x.max(r.t_x)),
            star_undetermined: runs.iter().filter(|r| !r.star_determined).count() as u64,
            j_exceeds_x: runs.iter().filter(|r| r.j_exceeds_x).count() as u64,
        }
    }
}

/// Build the coupling context at `x`, estimating the law of `M` when
/// `x ≤` [`LAW_M_MAX_X`]. Returns the context and `d_TV(law M, uniform)`
/// (NaN when no law was estimated).
pub fn coupling_context(x: f64, cfg: &ExperimentConfig) -> Result<(CouplingContext, f64)> {
    let ctx = CouplingContext::new(x, DEFAULT_TOLERANCE)?;
    if x > LAW_M_MAX_X {
        return Ok((ctx, f64::NAN));
    }
    let (law, _) = estimate_law_m(&ctx, cfg.master_seed, cfg.law_samples.max(1))?;
    let ctx = ctx.with_law_m(law)?;
    let tv = ctx.coupling.as_ref().map_or(f64::NAN, |c| c.d_tv);
    Ok((ctx, tv))
}

/// `n_samples` coupling runs per grid `x`.
pub fn couple(cfg: &ExperimentConfig) -> Result<(Vec<CouplingRun>, Vec<CoupleSummary>)> {
    cfg.validate()?;
    let mut all = Vec::new();
    let mut summaries = Vec::new();
    for &x in &cfg.x_grid {
        let (ctx, tv) = coupling_context(x as f64, cfg)?;
        let runs = run_batch(&ctx, cfg.master_seed, tag::COUPLING, cfg.n_samples)?;
        summaries.push(CoupleSummary::of(x as f64, &runs, tv));
        all.extend(runs);
    }
    Ok((all, summaries))
}

pub fn couple_csv(runs: &[CouplingRun]) -> String {
    csv(CouplingRun::CSV_HEADER, runs.iter().map(CouplingRun::csv_row))
}

pub fn couple_summary_csv(rows: &[CoupleSummary]) -> String {
    csv(CoupleSummary::CSV_HEADER, rows.iter().map(CoupleSummary::csv_row))
}

/// Boundary probabilities for every `(x, y)` with `y ≤ x`.
pub fn pdbl(cfg: &ExperimentConfig) -> Result<Vec<PdblEstimate>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &x in &cfg.x_grid {
        let (ctx, _) = coupling_context(x as f64, cfg)?;
        for &y in cfg.y_grid.iter().filter(|&&y| y <= x as f64) {
            out.push(pdbl_probe(&ctx, cfg.master_seed, y, cfg.n_samples, false)?);
        }
    }
    Ok(out)
}

pub fn pdbl_csv(rows: &[PdblEstimate]) -> String {
    csv(PdblEstimate::CSV_HEADER, rows.iter().map(PdblEstimate::csv_row))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NtblRow {
    pub x: u64,
    pub y: f64,
    pub count: u64,
    pub ratio: f64,
}

impl NtblRow {
    pub const CSV_HEADER: &'static str = "x,y,count,ratio_to_x_xi";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.x, num(self.y), self.count, num(self.ratio))
    }
}

/// The boundary count at `y = x^u` for every grid `x`.
pub fn ntbl(cfg: &ExperimentConfig, u: f64) -> Result<Vec<NtblRow>> {
    cfg.validate()?;
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::domain(format!("ntbl exponent must be in (0, 1], got {u}")));
    }
    cfg.x_grid
        .iter()
        .map(|&x| {
            let y = (x as f64).powf(u);
            let count = ntbl_count(x, y)?;
            Ok(NtblRow {
                x,
                y,
                count,
                ratio: count as f64 / (x as f64 * xi(y).value),
            })
        })
        .collect()
}

pub fn ntbl_csv(rows: &[NtblRow]) -> String {
    csv(NtblRow::CSV_HEADER, rows.iter().map(NtblRow::csv_row))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parse_and_override() {
        let mut cfg = ExperimentConfig::parse(
            "# comment\nmaster_seed = 7\nn_samples = 1e3\nx_grid = 1000, 10000\nuv_grid = 0.3:0.65,0.2:0.8\nthreads = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.n_samples, 1000);
        assert_eq!(cfg.x_grid, vec![1000, 10000]);
        assert_eq!(cfg.uv_grid, vec![(0.3, 0.65), (0.2, 0.8)]);
        assert_eq!(cfg.threads, Some(2));
        cfg.set("threads", "auto").unwrap();
        assert_eq!(cfg.threads, None);
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
        cfg.n_samples = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn theorem1_rows_small() {
        let cfg = ExperimentConfig {
            x_grid: vec![1000, 10000],
            ..Default::default()
        };
        let rows = theorem1(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            let brute = (1..=r.x)
                .filter(|&n| crate::divisor_interval::has_divisor_in(n, r.y, r.z).unwrap())
                .count() as u64;
            assert_eq!(brute, r.h_count);
        }
        let svg = theorem1_svg(&rows);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let text = theorem1_csv(&rows);
        assert_eq!(text.lines().next().unwrap(), Theorem1Row::CSV_HEADER);
    }

    #[test]
    fn couple_is_reproducible() {
        let cfg = ExperimentConfig {
            x_grid: vec![1000],
            n_samples: 200,
            law_samples: 20_000,
            ..Default::default()
        };
        let a = couple_csv(&couple(&cfg).unwrap().0);
        let single = ExperimentConfig { threads: Some(1), ..cfg.clone() };
        let b = single.install(|| couple_csv(&couple(&single).unwrap().0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 201);
    }

    #[test]
    fn ntbl_matches_brute_force() {
        let cfg = ExperimentConfig {
            x_grid: vec![10, 2000],
            ..Default::default()
        };
        let rows = ntbl(&cfg, 0.5).unwrap();
        for r in &rows {
            let brute = (1..=r.x)
                .filter(|&n| {
                    let (flat, _) = crate::primes::flat_sharp_split(n).unwrap();
                    let k = (r.x as f64 / flat as f64).powi(5);
                    crate::divisor_interval::has_divisor_in(n, r.y / k, r.y * k).unwrap()
                })
                .count() as u64;
            assert_eq!(brute, r.count);
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use divisor_density::dickman::DickmanTable;
use divisor_density::divisor_interval::{count_h_naive, count_h_sieve, CountQuery};
use divisor_density::experiment::{self as exp, DensityMethod, ExperimentConfig};
use divisor_density::polytope::DEFAULT_BUDGET;
use divisor_density::Error;

#[derive(Parser)]
#[command(name = "divden", version, about = "Integers with a divisor in an interval: counts, densities and coupling experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "DIVDEN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact H(x, y, z): integers n <= x with a divisor in (y, z).
    Count {
        #[arg(long)]
        x: u64,
        #[arg(long)]
        y: f64,
        #[arg(long)]
        z: f64,
        #[arg(long, value_enum, default_value_t = Engine::Sieve)]
        engine: Engine,
    },
    /// The limiting density h(u, v).
    Density {
        #[arg(long)]
        u: f64,
        #[arg(long)]
        v: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
        method: MethodArg,
        /// Grid evaluations for exact, samples otherwise.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Dickman rho at the given points, or a full table dump.
    Dickman {
        #[arg(long, value_delimiter = ',')]
        u: Vec<f64>,
        /// Write the tabulated values to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Exact H(x, x^u, x^v) against x*h(u, v).
    Theorem1 {
        #[command(flatten)]
        common: Common,
        /// SVG plot path (defaults next to --out).
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Coupling runs, one CSV row each.
    Couple {
        #[command(flatten)]
        common: Common,
        /// Summary CSV path (defaults next to --out, else stderr).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Boundary probability against xi(y).
    Pdbl {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        y: Option<Vec<f64>>,
    },
    /// The boundary count at y = x^u.
    Ntbl {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.3)]
        u: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Sieve,
    Naive,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Mc,
    Formula,
}

#[derive(Args)]
struct Common {
    /// Flat key = value file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<String>>,
    /// Comma-separated u:v pairs.
    #[arg(long)]
    uv: Option<String>,
    #[arg(long)]
    law_samples: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self, threads: Option<usize>) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(n) = self.samples {
            cfg.n_samples = n;
        }
        if let Some(x) = &self.x {
            cfg.set("x_grid", &x.join(","))?;
        }
        if let Some(uv) = &self.uv {
            cfg.set("uv_grid", uv)?;
        }
        if let Some(n) = self.law_samples {
            cfg.law_samples = n;
        }
        if let Some(o) = &self.out {
            cfg.output_path = Some(o.clone());
        }
        if threads.is_some() {
            cfg.threads = threads;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sibling(out: Option<&Path>, ext: &str) -> Option<PathBuf> {
    out.map(|p| p.with_extension(ext))
}

fn run(cli: Cli) -> Result<(), Error> {
    let threads = cli.threads;
    let pool = ExperimentConfig { threads, ..Default::default() };
    pool.validate()?;
    pool.install(|| match cli.cmd {
        Cmd::Count { x, y, z, engine } => {
            let q = CountQuery::new(x, y, z)?;
            let n = match engine {
                Engine::Sieve => count_h_sieve(&q)?,
                Engine::Naive => count_h_naive(&q)?,
            };
            println!("{n}");
            Ok(())
        }
        Cmd::Density { u, v, method, budget, seed } => {
            let (m, default) = match method {
                MethodArg::Exact => (DensityMethod::Exact, DEFAULT_BUDGET),
                MethodArg::Mc => (DensityMethod::Mc, 1_000_000),
                MethodArg::Formula => (DensityMethod::Formula, 1_000_000),
            };
            let d = exp::density(u, v, m, budget.unwrap_or(default), seed)?;
            println!("{} ± {}", d.value, d.error);
            Ok(())
        }
        Cmd::Dickman { u, dump } => {
            let table = DickmanTable::standard();
            if let Some(p) = dump {
                table.dump(std::io::BufWriter::new(std::fs::File::create(p)?))?;
            }
            if !u.is_empty() {
                println!("u,rho");
                for v in u {
                    println!("{},{}", divisor_density::csvfmt::num(v), divisor_density::csvfmt::num(table.rho(v)?));
                }
            }
            Ok(())
        }
        Cmd::Theorem1 { common, plot } => {
            let cfg = common.config(threads)?;
            let rows = exp::theorem1(&cfg)?;
            let out = cfg.output_path.as_deref();
            exp::emit(out, &exp::theorem1_csv(&rows))?;
            if let Some(p) = plot.or_else(|| sibling(out, "svg")) {
                std::fs::write(p, exp::theorem1_svg(&rows))?;
            }
            Ok(())
        }
        Cmd::Couple { common, summary } => {
            let cfg = common.config(threads)?;
            let (runs, sums) = exp::couple(&cfg)?;
            let out = cfg.output_path.as_deref();
            exp::emit(out, &exp::couple_csv(&runs))?;
            let text = exp::couple_summary_csv(&sums);
            match summary.or_else(|| sibling(out, "summary.csv")) {
                Some(p) => std::fs::write(p, text)?,
                None => eprint!("{text}"),
            }
            Ok(())
        }
        Cmd::Pdbl { common, y } => {
            let mut cfg = common.config(threads)?;
            if let Some(y) = y {
                cfg.y_grid = y;
            }
            let rows = exp::pdbl(&cfg)?;
            exp::emit(cfg.output_path.as_deref(), &exp::pdbl_csv(&rows))
        }
        Cmd::Ntbl { common, u } => {
            let cfg = common.config(threads)?;
            let rows = exp::ntbl(&cfg, u)?;
            exp::emit(cfg.output_path.as_deref(), &exp::ntbl_csv(&rows))
        }
    })?
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("divden: {e}");
            match e {
                Error::Domain(_) | Error::Parse(_) | Error::Unsupported(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

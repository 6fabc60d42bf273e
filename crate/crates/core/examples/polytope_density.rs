//! h(u, v) from the subset-family polytopes, compared with the closed form at
//! (0.2, 0.8) and with sampling.
//!
//! cargo run --release --example polytope_density

use divisor_density::dickman::DickmanTable;
use divisor_density::pd::{estimate_h_mc, IntervalQuery, DEFAULT_TAIL_THRESHOLD};
use divisor_density::polytope::{enumerate_nonempty_families, h_exact, h_formula_mc, DEFAULT_BUDGET};

fn main() -> divisor_density::Result<()> {
    let table = DickmanTable::standard();

    let q = IntervalQuery::new(0.2, 0.8)?;
    let h = h_exact(&q, table, DEFAULT_BUDGET)?;
    let closed = 1.0 - table.rho(5.0)? - (1.25f64).ln();
    println!("h(0.2, 0.8) = {:.10} ± {:.1e}, closed form {closed:.10}", h.value, h.error_bound);

    for (u, v) in [(0.3, 0.65), (0.3, 0.55), (0.4, 0.75)] {
        let q = IntervalQuery::new(u, v)?;
        let fams = enumerate_nonempty_families(&q)?;
        let h = h_exact(&q, table, DEFAULT_BUDGET)?;
        let mc = estimate_h_mc(&q, 200_000, 3, DEFAULT_TAIL_THRESHOLD)?;
        println!(
            "h({u}, {v}): k = {}, {} families, exact {:.6} ± {:.1e}, PD sampling {:.6} ± {:.1e}",
            q.k,
            fams.len(),
            h.value,
            h.error_bound,
            mc.estimate,
            mc.std_error
        );
    }

    // too many families to enumerate; sample the integral formula instead
    let q = IntervalQuery::new(0.35, 0.45)?;
    let f = h_formula_mc(&q, table, 200_000, 5)?;
    println!("h(0.35, 0.45): k = {}, formula sampling {:.6} ± {:.1e}", q.k, f.estimate, f.std_error);
    Ok(())
}

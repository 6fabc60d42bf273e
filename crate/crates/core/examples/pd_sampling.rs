//! GEM and Poisson–Dirichlet prefixes, the subsum event, and direct Monte
//! Carlo estimation of h(u, v).
//!
//! cargo run --release --example pd_sampling

use divisor_density::pd::{estimate_h_mc, in_d, sample_gem, sample_pd, IntervalQuery, DEFAULT_TAIL_THRESHOLD};
use divisor_density::streams::stream;

fn main() -> divisor_density::Result<()> {
    let mut rng = stream(42, 0, 0);
    let gem = sample_gem(&mut rng, 1e-6)?;
    println!("GEM prefix ({} pieces, tail {:.2e}):", gem.entries.len(), gem.tail_mass);
    println!("  {:.4?}", &gem.entries[..gem.entries.len().min(8)]);
    let pd = sample_pd(&mut rng, 1e-6)?;
    println!("PD prefix: {:.4?}", &pd.entries[..pd.entries.len().min(8)]);

    let q = IntervalQuery::new(0.3, 0.65)?;
    println!("prefix has a subsum in (0.3, 0.65): {}", in_d(&pd, &q)?);

    for (u, v) in [(0.2, 0.8), (0.3, 0.65), (0.35, 0.45)] {
        let q = IntervalQuery::new(u, v)?;
        let e = estimate_h_mc(&q, 200_000, 7, DEFAULT_TAIL_THRESHOLD)?;
        println!("h({u}, {v}) ≈ {:.5} ± {:.5}  (k = {})", e.estimate, e.std_error, q.k);
    }
    Ok(())
}

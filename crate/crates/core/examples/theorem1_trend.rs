//! Exact counts H(x, x^u, x^v) approaching x·h(u, v); writes a CSV and an SVG
//! plot into the temp directory.
//!
//! cargo run --release --example theorem1_trend

use divisor_density::experiment::{theorem1, theorem1_csv, theorem1_svg, ExperimentConfig};

fn main() -> divisor_density::Result<()> {
    let cfg = ExperimentConfig {
        x_grid: vec![10_000, 100_000, 1_000_000, 10_000_000],
        uv_grid: vec![(0.3, 0.65), (0.2, 0.8)],
        ..Default::default()
    };
    let rows = theorem1(&cfg)?;
    for r in &rows {
        println!(
            "(u, v) = ({}, {})  x = {:>9}  |H/x - h| = {:.5}  ξ(x^u) = {:.4}",
            r.u,
            r.v,
            r.x,
            r.normalized_error(),
            r.x_xi / r.x as f64
        );
    }
    let dir = std::env::temp_dir();
    std::fs::write(dir.join("theorem1.csv"), theorem1_csv(&rows))?;
    std::fs::write(dir.join("theorem1.svg"), theorem1_svg(&rows))?;
    println!("wrote {}/theorem1.{{csv,svg}}", dir.display());
    Ok(())
}

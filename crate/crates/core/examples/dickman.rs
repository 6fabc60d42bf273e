//! The tabulated Dickman function: values, inversion and the integral
//! identity residual.
//!
//! cargo run --release --example dickman

use divisor_density::dickman::DickmanTable;

fn main() -> divisor_density::Result<()> {
    let table = DickmanTable::standard();
    println!("step {} up to u = {}", table.step(), table.umax());
    println!("ρ(2) - (1 - log 2) = {:e}", table.rho(2.0)? - (1.0 - 2f64.ln()));
    for u in [1.5, 2.0, 3.0, 5.0, 10.0, 20.0] {
        let r = table.rho(u)?;
        println!("ρ({u:>4}) = {r:.12e}   ρ⁻¹ = {:.12}", table.rho_inverse(r));
    }
    println!("max identity residual {:e}", table.max_identity_residual());
    Ok(())
}

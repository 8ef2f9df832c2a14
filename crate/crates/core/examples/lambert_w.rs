//! Principal-branch Lambert W on a few points, with the identity residual.
//!
//!     cargo run --example lambert_w -- 0.5 100

use v2x_offload::numerics::lambert_w0;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut xs: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    if xs.is_empty() {
        xs = vec![-(-1.0f64).exp(), -0.2, 0.0, 1.0, std::f64::consts::E, 1e3, 1e6, 1e300];
    }
    println!("{:>14} {:>22} {:>12}", "x", "W0(x)", "residual");
    for x in xs {
        match lambert_w0(x) {
            Ok(w) => println!("{x:>14.6e} {w:>22.15e} {:>12.3e}", (w * w.exp() - x).abs() / x.abs().max(1.0)),
            Err(e) => println!("{x:>14.6e} error: {e}"),
        }
    }
    Ok(())
}

//! Solve the radial vortex profile and extrapolate the core constant.
//!
//! `cargo run --example profile_core`
use glpin::profile::{core_constant, solve_profile};

fn main() -> glpin::Result<()> {
    let p = solve_profile(200.0, 4000)?;
    println!("newton iterations {}, max residual {:.2e}", p.newton_iterations, p.residual);
    println!("f0'(0) ~ {:.6}", p.slope_at_origin());
    for r in [1.0, 2.0, 5.0, 10.0] {
        println!("f0({r:>4}) = {:.6}", p.eval(r));
    }
    for r in [10.0, 30.0, 60.0, 100.0] {
        println!("2 pi I({r}) - pi log {r} = {:.6}", p.gamma_at(r));
    }
    let c = core_constant(200.0, 4000)?;
    println!("gamma = {:.6} (coarse {:.6}, fine {:.6})", c.gamma, c.gamma_coarse, c.gamma_fine);
    Ok(())
}

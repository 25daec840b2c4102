//! Corrected current of a chord in the unit ball and its renormalised self-energy.
//!
//! `cargo run --release --example corrected_fields -- 32`
use glpin::ampere::AmpereOptions;
use glpin::biotsavart::{c_omega, solve_ja};
use glpin::geometry::{extend_and_close, PolyCurve};
use glpin::grid::Domain;
use glpin::Vec3;

fn main() -> glpin::Result<()> {
    let cells: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let d = Domain::ball(Vec3::zeros(), 1.0, cells, 4)?;
    let h = d.grid.h;
    let chord = PolyCurve::segment(Vec3::new(0.3, 0.2, -1.0).normalize(), Vec3::new(-0.2, 0.1, 1.0).normalize(), 32)?;
    let (loop_, _) = extend_and_close(&chord, &d.shape, 0.25, 2.0)?;
    let t = std::time::Instant::now();
    let f = solve_ja(&loop_, &d, &AmpereOptions::default())?;
    println!(
        "{} cells: cg {} iterations, flux residual {:.2e}, div A {:.2e}, length inside {:.4} ({:.1?})",
        cells,
        f.cg_iterations,
        f.flux_residual,
        f.div_a_residual,
        f.length_inside,
        t.elapsed()
    );
    let k = c_omega(&f, &[10.0 * h, 8.0 * h, 6.0 * h, 4.0 * h])?;
    for (r, v) in &k.table {
        println!("  r {r:.4}  bracket {v:.5}");
    }
    println!("C = {:.4} (slope {:.3}, fit deviation {:.1e}, magnetic {:.4})", k.value, k.slope, k.uncertainty, k.magnetic);
    Ok(())
}

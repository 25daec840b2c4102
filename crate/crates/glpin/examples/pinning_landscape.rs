//! Pinning modulus for a few landscapes, with the gap `sup |rho^2 - a|` as eps shrinks.
//!
//! `cargo run --release --example pinning_landscape`
use glpin::grid::Domain;
use glpin::pinning::{holder_norm, solve_rho, PinningModel, RhoOptions};
use glpin::Vec3;

fn main() -> glpin::Result<()> {
    let d = Domain::ball(Vec3::zeros(), 1.0, 40, 2)?;
    let models = [
        PinningModel::Bump { center: [0.2, 0.0, 0.0], width: 0.4, depth: 0.5 },
        PinningModel::Impurities { centers: vec![[0.4, 0.0, 0.0], [-0.3, 0.3, 0.1]], width: 0.2, depth: 0.6 },
        PinningModel::Periodic { period: 0.5, depth: 0.4 },
    ];
    for m in &models {
        let a = m.sample(&d)?;
        println!("{m:?}");
        for eps in [0.2, 0.1, 0.05] {
            let s = solve_rho(&d, &a, eps, &RhoOptions::default())?;
            let gap = (0..d.grid.len())
                .filter(|&n| d.node_weight(n) > 0.0)
                .map(|n| (s.rho.values[n].powi(2) - a.values[n]).abs())
                .fold(0.0, f64::max);
            let hr = holder_norm(&d, &s.rho, 0.5, 1.0, 1.0, eps);
            println!(
                "  eps {eps:<5} newton {:>2}  residual {:.1e}  sup|rho^2 - a| {gap:.3e}  C^0.5 norm {:.3} (bound {:.3})",
                s.newton_iterations, s.residual, hr.norm, hr.bound
            );
        }
    }
    Ok(())
}

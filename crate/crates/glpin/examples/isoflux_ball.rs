//! Weighted isoflux optimum in the unit ball under a vertical applied field.
//!
//! `cargo run --release --example isoflux_ball`
use glpin::ampere::AmpereOptions;
use glpin::grid::{Domain, Placement, ScalarField};
use glpin::isoflux::{maximize_ratio, IsofluxInstance, IsofluxOptions};
use glpin::meissner::{solve_b0, AppliedField};
use glpin::Vec3;

fn main() -> glpin::Result<()> {
    let cells: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(24);
    let spacing: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.125);
    let t = std::time::Instant::now();
    let domain = Domain::ball(Vec3::zeros(), 1.0, cells, 4)?;
    let rho = ScalarField::constant(domain.grid, Placement::Node, 1.0);
    let applied = AppliedField::uniform(Vec3::z(), 1.0)?;
    let ms = solve_b0(&rho, &applied, &domain, &AmpereOptions::default())?;
    println!("B0 solved in {:.1?}", t.elapsed());
    let inst = IsofluxInstance::from_rho(ms.b0.clone(), &rho, domain.shape, spacing, 0.05)?;
    let res = maximize_ratio(&inst, &IsofluxOptions::default())?;
    println!("done in {:.1?}", t.elapsed());
    println!("graph {} nodes, {} edges", res.graph_nodes, res.graph_edges);
    println!("lambdas {:?}", res.lambdas);
    println!("graph ratio {:.6}, polished ratio {:.6}, kind {:?}", res.graph_ratio, res.ratio, res.kind);
    println!("H_c1 = {:.4}", res.hc1.unwrap_or(f64::NAN));
    if let Some(c) = &res.curve {
        println!("length {:.4}, ends {:?} {:?}", c.length(), c.points[0], c.points[c.points.len() - 1]);
    }
    Ok(())
}

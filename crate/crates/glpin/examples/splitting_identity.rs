//! Energy splitting for random smooth configurations on refined grids.
//!
//! Prints the defect between both sides and its observed order.
//! `cargo run --release --example splitting_identity`
use glpin::ampere::AmpereOptions;
use glpin::energy::{random_smooth_configuration, split_energy};
use glpin::grid::Domain;
use glpin::meissner::{solve_b0, AppliedField};
use glpin::pinning::{solve_rho, PinningModel, RhoOptions};
use glpin::Vec3;

fn main() -> glpin::Result<()> {
    let eps = 0.3;
    let model = PinningModel::Bump { center: [0.1, 0.0, -0.1], width: 0.5, depth: 0.4 };
    let applied = AppliedField::uniform(Vec3::new(0.2, 0.1, 1.0), 1.0)?;
    let mut last: Option<f64> = None;
    for cells in [12, 24, 48] {
        let d = Domain::ball(Vec3::zeros(), 1.0, cells, 4)?;
        let ae = model.sample(&d)?;
        let rho = solve_rho(&d, &ae, eps, &RhoOptions::default())?.rho;
        let ms = solve_b0(&rho, &applied, &d, &AmpereOptions::default())?;
        let (u, a) = random_smooth_configuration(&d, 0);
        let s = split_energy(&u, &a, &rho, &ae, eps, &ms, 1.5, &d)?;
        let order = last.map(|p| (p / s.defect).log2());
        println!(
            "cells {cells:>2}: lhs {:.6} rhs {:.6} (Meissner {:.4}, F {:.4}, pairing {:.4}, remainder {:.2e}) defect {:.2e} order {}",
            s.lhs,
            s.rhs,
            s.meissner,
            s.free,
            s.pairing,
            s.remainder,
            s.defect,
            order.map_or("-".into(), |o| format!("{o:.2}"))
        );
        last = Some(s.defect);
    }
    Ok(())
}

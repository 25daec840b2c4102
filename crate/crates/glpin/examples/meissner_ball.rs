//! Meissner state of a ball under a uniform field, with and without pinning.
//!
//! `cargo run --release --example meissner_ball`
use glpin::ampere::AmpereOptions;
use glpin::grid::Domain;
use glpin::meissner::{solve_b0, AppliedField};
use glpin::pinning::{solve_rho, PinningModel, RhoOptions};
use glpin::Vec3;

fn main() -> glpin::Result<()> {
    let d = Domain::ball(Vec3::zeros(), 1.0, 24, 6)?;
    let applied = AppliedField::uniform(Vec3::z(), 1.0)?;
    for model in [PinningModel::Constant { value: 1.0 }, PinningModel::Bump { center: [0.0; 3], width: 0.5, depth: 0.6 }] {
        let a = model.sample(&d)?;
        let rho = solve_rho(&d, &a, 0.1, &RhoOptions::default())?.rho;
        let ms = solve_b0(&rho, &applied, &d, &AmpereOptions::default())?;
        let at_centre = ms.b0.sample(&Vec3::zeros());
        println!("{model:?}");
        println!("  energy coefficient {:.5}, B0 at centre {:.4?}", ms.energy, at_centre.as_slice());
        println!("  {:?}", ms.residuals);
    }
    Ok(())
}

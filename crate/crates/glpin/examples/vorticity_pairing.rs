//! Vorticity of the test configuration against smooth test fields.
//!
//! Prints `pairing(mu, B)` and `2 pi int_G B . dl` for five smooth fields
//! vanishing on the sphere, for a chord of the unit ball and several eps.
//! `cargo run --release --example vorticity_pairing -- 0.1,0.05,0.025`
use glpin::construction::assemble;
use glpin::energy::{pairing, vanishing_field_library, vorticity};
use glpin::geometry::PolyCurve;
use glpin::grid::Domain;
use glpin::pipeline::{corrected_fields, field_domain, profile_for, RunConfig};
use glpin::Vec3;

const CONFIG: &str = r#"
name = "unit-ball"
seed = 1
output = "out/unit-ball"
[domain]
center = [0.0, 0.0, 0.0]
radius = 1.0
[grid]
field_h = 0.0625
pad = 3
cells_per_eps = 1.5
lattice_spacing = 0.125
[pinning]
eps = [0.1]
[pinning.model]
kind = "constant"
value = 1.0
[field]
direction = [0.0, 0.0, 1.0]
h_ex = 1.0
eta = 0.45
[onset]
h_max = 40.0
samples = 81
[curve]
source = "isoflux"
"#;

fn main() -> glpin::Result<()> {
    let eps: Vec<f64> = std::env::args()
        .nth(1)
        .map(|s| s.split(',').filter_map(|t| t.parse().ok()).collect())
        .unwrap_or_else(|| vec![0.1, 0.05, 0.025]);
    let cfg = RunConfig::from_toml(CONFIG)?;
    let p = Vec3::new(0.3, 0.2, -1.0).normalize();
    let q = Vec3::new(-0.2, 0.1, 1.0).normalize();
    let chord = PolyCurve::segment(p, q, 32)?;
    let fields = corrected_fields(&cfg, &field_domain(&cfg)?, &chord)?;
    let profile = profile_for(&cfg)?;
    let library: Vec<_> = vanishing_field_library(&Vec3::zeros(), 1.0, 5, 11);
    for e in eps {
        let d = Domain::ball_cell_centered(Vec3::zeros(), 1.0, cfg.fine_h(e), 2)?;
        let conf = assemble(&d, &fields, &profile, e, cfg.curve.q, None)?;
        let mu = vorticity(&conf.u, &conf.a, &d)?;
        print!("eps {e}:");
        for f in &library {
            let lhs = pairing(&mu.winding_form, &f.on_faces(&d.grid), &d);
            let rhs = f.curve_term(&chord);
            print!(" {:+.3e}", (lhs - rhs) / rhs.abs());
        }
        println!();
    }
    Ok(())
}

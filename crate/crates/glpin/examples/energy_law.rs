//! Free energy of a diameter vortex in the unit ball against |log eps|.
//!
//! `cargo run --release --example energy_law -- 1.0 0.05,0.025,0.0125`
//! The first argument is the constant pinning value `a = rho^2`.
use glpin::geometry::PolyCurve;
use glpin::pipeline::{epsilon_sweep, profile_for, RunConfig};
use glpin::Vec3;

pub const UNIT_BALL: &str = r#"
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
eps = [0.05]
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
    let mut args = std::env::args().skip(1);
    let value: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let eps: Vec<f64> = args
        .next()
        .map(|s| s.split(',').filter_map(|t| t.parse().ok()).collect())
        .unwrap_or_else(|| vec![0.05, 0.025, 0.0125]);
    let mut cfg = RunConfig::from_toml(UNIT_BALL)?;
    cfg.pinning.model = glpin::pinning::PinningModel::Constant { value };
    let diameter = PolyCurve::segment(Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, 1.0), 32)?;
    let profile = profile_for(&cfg)?;
    let t = std::time::Instant::now();
    let table = epsilon_sweep(&cfg, &eps, Some(&diameter), &profile)?;
    print!("{}", table.csv());
    println!(
        "slope {:.4}, predicted {:.4}, ratio {:.4} ({:.1?})",
        table.law.slope,
        table.law.predicted,
        table.law.ratio,
        t.elapsed()
    );
    for w in &table.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

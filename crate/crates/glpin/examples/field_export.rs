//! Write a vortex configuration in the binary and CSV formats and read it back.
//!
//! `cargo run --release --example field_export -- out/export`
use glpin::construction::assemble;
use glpin::geometry::{FramedCurve, PolyCurve};
use glpin::grid::Domain;
use glpin::io::{field_csv, read_curve, read_field, write_curve, write_field, FieldData};
use glpin::pipeline::{corrected_fields, profile_for, RunConfig};
use glpin::Vec3;

const CONFIG: &str = r#"
name = "export"
seed = 0
output = "out/export"
[domain]
center = [0.0, 0.0, 0.0]
radius = 1.0
[grid]
field_h = 0.125
pad = 3
cells_per_eps = 2.0
lattice_spacing = 0.25
[pinning]
eps = [0.2]
[pinning.model]
kind = "constant"
value = 1.0
[field]
direction = [0.0, 0.0, 1.0]
h_ex = 1.0
eta = 0.45
[onset]
h_max = 30.0
samples = 61
[curve]
source = "isoflux"
"#;

fn main() -> glpin::Result<()> {
    let dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/export".into()));
    std::fs::create_dir_all(&dir)?;
    let cfg = RunConfig::from_toml(CONFIG)?;
    let eps = cfg.pinning.eps[0];
    let coarse = Domain::ball_cell_centered(Vec3::zeros(), 1.0, cfg.grid.field_h, cfg.grid.pad)?;
    let curve = PolyCurve::segment(Vec3::new(0.1, 0.0, -1.0).normalize(), Vec3::new(-0.1, 0.0, 1.0).normalize(), 16)?;
    let fields = corrected_fields(&cfg, &coarse, &curve)?;
    let fine = Domain::ball_cell_centered(Vec3::zeros(), 1.0, cfg.fine_h(eps), 2)?;
    let conf = assemble(&fine, &fields, &profile_for(&cfg)?, eps, cfg.curve.q, None)?;

    let u_path = dir.join("u.glf");
    write_field(&u_path, &FieldData::from(&conf.u))?;
    let back = read_field(&u_path)?.into_complex()?;
    println!("u.glf: {} bytes, round trip exact: {}", std::fs::metadata(&u_path)?.len(), back == conf.u);

    let modulus = conf.u.modulus();
    std::fs::write(dir.join("modulus.csv"), field_csv(&FieldData::from(&modulus)))?;
    let frame = FramedCurve::parallel_transport(&conf.curve, None)?;
    write_curve(&dir.join("gamma.csv"), &conf.curve, Some(&frame))?;
    let c = read_curve(&dir.join("gamma.csv"))?;
    println!("gamma.csv: {} vertices, length {:.4}, closed {}", c.points.len(), c.length(), c.closed);
    println!("wrote {}", dir.display());
    Ok(())
}

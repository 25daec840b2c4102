//! Run every stage for a configuration and print the manifest summary.
//!
//! `cargo run --release --example run_pipeline -- configs/ball-rho1.toml`
use glpin::pipeline::{run_pipeline, RunConfig};

fn main() -> glpin::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/ball-rho1.toml".into());
    let cfg = RunConfig::from_toml(&std::fs::read_to_string(path)?)?;
    let m = run_pipeline(&cfg)?;
    for s in &m.stages {
        let eps = s.eps.map_or(String::new(), |e| format!(" eps {e}"));
        println!("{:<9}{eps:<12} {:?} {:.1}s {} files", s.stage, s.status, s.seconds, s.outputs.len());
    }
    for o in &m.onset {
        println!("eps {}: R {:.5}  Hc1 {:.4}  h* {:?}  h*/Hc1 {:?}", o.eps, o.ratio, o.hc1, o.h_star, o.normalized);
    }
    println!("manifest: {}", cfg.output.join("manifest.json").display());
    Ok(())
}

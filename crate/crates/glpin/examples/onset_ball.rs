//! Vortex-onset energy balance on the reference ball.
//!
//! `cargo run --release --example onset_ball -- configs/ball-rho1.toml 0.1`
use glpin::pipeline::{onset_experiment, profile_for, RunConfig};

fn main() -> glpin::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "configs/ball-rho1.toml".into());
    let cfg = RunConfig::from_toml(&std::fs::read_to_string(path)?)?;
    let eps_list: Vec<f64> = match args.next() {
        Some(e) => vec![e.parse().map_err(|_| glpin::GlError::Config("bad eps".into()))?],
        None => cfg.pinning.eps.clone(),
    };
    let profile = profile_for(&cfg)?;
    for eps in eps_list {
        let t = std::time::Instant::now();
        let ex = onset_experiment(&cfg, eps, &profile)?;
        println!(
            "eps {eps}: R {:.5} Hc1 {:.4} F {:.4} P {:?} r2 {:?} h* {:?} h*/Hc1 {:?} ({} nodes, {:.1?})",
            ex.isoflux.ratio,
            ex.report.hc1,
            ex.fine.energy.total,
            ex.fine.pairing,
            ex.fine.remainder,
            ex.report.h_star,
            ex.report.normalized,
            ex.fine.nodes,
            t.elapsed()
        );
        println!("  weighted length {:.4}, energy {:?}", ex.fine.weighted_length, ex.fine.energy);
    }
    Ok(())
}

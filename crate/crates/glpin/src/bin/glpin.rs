//! Command-line front end. Exit codes: 0 success, 2 validation, 3 solver failure.

use clap::{Parser, Subcommand};
use glpin::biotsavart::c_omega;
use glpin::construction::assemble;
use glpin::grid::Domain;
use glpin::io;
use glpin::isoflux::hc1;
use glpin::meissner::{check, solve_b0, AppliedField};
use glpin::pinning::{holder_norm, solve_rho};
use glpin::pipeline::{self, RunConfig};
use glpin::{GlError, Result, Vec3};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "glpin", version, about = "Pinned Ginzburg-Landau lower critical field lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve for the weight rho on the field grid.
    Pinning {
        #[arg(long)]
        config: PathBuf,
        /// Hoelder exponent and the bound `c1 |log eps|^n` to test against.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
        #[arg(long, default_value_t = 1.0)]
        n: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Radial vortex profile and core constant.
    Profile {
        #[arg(long, default_value_t = 100.0)]
        rmax: f64,
        #[arg(long, default_value_t = 4000)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corrected current and potential of a curve.
    Bs {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Meissner state at unit intensity.
    Meissner {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vortex test configuration on the fine grid.
    Construct {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Free energy of the configuration; with several eps, the sweep table.
    Energy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        epsilon: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weighted isoflux optimum.
    Isoflux {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Threshold |log eps| / (2R).
    Hc1 {
        #[arg(long)]
        ratio: f64,
        #[arg(long)]
        epsilon: f64,
    },
    /// Energy-balance crossing for every eps of the configuration.
    Onset {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Free energy against |log eps| for a list of eps.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        epsilon: Vec<f64>,
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quick self-checks; with a config, also the full pipeline.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn load(path: &Path, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_toml(&std::fs::read_to_string(path)?)?;
    if let Some(o) = out {
        cfg.output = o;
    }
    std::fs::create_dir_all(&cfg.output)?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v).map_err(|e| GlError::Format(e.to_string()))?);
    Ok(())
}

fn tagged(dir: &Path, eps: f64, name: &str) -> PathBuf {
    dir.join(format!("eps{eps}_{name}"))
}

fn run(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Pinning { config, alpha, c1, n, out } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(GlError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
            }
            let cfg = load(&config, out)?;
            let domain = pipeline::field_domain(&cfg)?;
            let a = cfg.pinning.model.sample(&domain)?;
            for &eps in &cfg.pinning.eps {
                let sol = solve_rho(&domain, &a, eps, &cfg.rho_options())?;
                io::write_field(&tagged(&cfg.output, eps, "rho.glf"), &(&sol.rho).into())?;
                let r2: Vec<f64> = (0..domain.grid.len())
                    .filter(|&n| domain.node_weight(n) > 0.0)
                    .map(|n| sol.rho.values[n].powi(2))
                    .collect();
                let holder = holder_norm(&domain, &sol.rho, alpha, c1, n, eps);
                let rep = serde_json::json!({
                    "eps": eps,
                    "residual": sol.residual,
                    "min_rho2": r2.iter().copied().fold(f64::INFINITY, f64::min),
                    "max_rho2": r2.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    "holder": holder,
                    "hypothesis": if holder.within_bound { "holder bound satisfied" } else { "unverified hypothesis" },
                    "warnings": sol.warnings,
                });
                io::write_json(&tagged(&cfg.output, eps, "pinning.json"), &rep)?;
                print_json(&rep)?;
            }
        }
        Cmd::Profile { rmax, n, out } => {
            let p = glpin::profile::solve_profile(rmax, n)?;
            let core = glpin::profile::core_constant(rmax, n)?;
            let dir = out.unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("profile.csv"), pipeline::profile_csv(&p))?;
            let rep = serde_json::json!({ "gamma": core.gamma, "uncertainty": core.uncertainty, "residual": p.residual });
            io::write_json(&dir.join("profile.json"), &rep)?;
            print_json(&rep)?;
        }
        Cmd::Bs { curve, config, out } => {
            let cfg = load(&config, out)?;
            let domain = pipeline::field_domain(&cfg)?;
            let c = io::read_curve(&curve)?;
            let fields = pipeline::corrected_fields(&cfg, &domain, &c)?;
            let h = domain.grid.h;
            let k = c_omega(&fields, &[8.0 * h, 6.0 * h, 4.0 * h])?;
            io::write_field(&cfg.output.join("j.glf"), &(&fields.j).into())?;
            io::write_field(&cfg.output.join("a.glf"), &(&fields.a).into())?;
            let rep = serde_json::json!({
                "c_omega": k.value,
                "table": k.table,
                "flux_residual": fields.flux_residual,
                "length_inside": fields.length_inside,
            });
            io::write_json(&cfg.output.join("bs.json"), &rep)?;
            print_json(&rep)?;
        }
        Cmd::Meissner { config, out } => {
            let cfg = load(&config, out)?;
            let domain = pipeline::field_domain(&cfg)?;
            let a = cfg.pinning.model.sample(&domain)?;
            let applied = AppliedField::uniform(Vec3::from(cfg.field.direction), 1.0)?;
            for &eps in &cfg.pinning.eps {
                let rho = solve_rho(&domain, &a, eps, &cfg.rho_options())?.rho;
                let ms = solve_b0(&rho, &applied, &domain, &cfg.ampere())?;
                io::write_field(&tagged(&cfg.output, eps, "b0.glf"), &(&ms.b0).into())?;
                let rep = serde_json::json!({
                    "eps": eps,
                    "energy_coefficient": ms.energy,
                    "residuals": check(&ms, &rho, &domain),
                });
                io::write_json(&tagged(&cfg.output, eps, "meissner.json"), &rep)?;
                print_json(&rep)?;
            }
        }
        Cmd::Construct { curve, epsilon, config, out } => {
            let mut cfg = load(&config, out)?;
            cfg.pinning.eps = vec![epsilon];
            cfg.validate()?;
            let domain = pipeline::field_domain(&cfg)?;
            let c = io::read_curve(&curve)?;
            let fields = pipeline::corrected_fields(&cfg, &domain, &c)?;
            let profile = pipeline::profile_for(&cfg)?;
            let h = cfg.fine_h(epsilon);
            let fine = Domain::ball_cell_centered(cfg.shape().center(), cfg.domain.radius, h, cfg.grid.pad.min(2))?;
            let conf = assemble(&fine, &fields, &profile, epsilon, cfg.curve.q, None)?;
            io::write_field(&tagged(&cfg.output, epsilon, "u.glf"), &(&conf.u).into())?;
            io::write_field(&tagged(&cfg.output, epsilon, "a.glf"), &(&conf.a).into())?;
            io::write_json(&tagged(&cfg.output, epsilon, "construct.json"), &conf.meta)?;
            print_json(&conf.meta)?;
        }
        Cmd::Energy { config, curve, epsilon, out } => {
            let cfg = load(&config, out)?;
            let eps_list = if epsilon.is_empty() { cfg.pinning.eps.clone() } else { epsilon };
            let curve = curve.map(|p| io::read_curve(&p)).transpose()?;
            let profile = pipeline::profile_for(&cfg)?;
            let stage = pipeline::field_stage(&cfg, eps_list[0], curve.as_ref())?;
            let fields = pipeline::corrected_fields(&cfg, &stage.domain, &stage.curve)?;
            let mut all = Vec::new();
            for &eps in &eps_list {
                let mut probe = cfg.clone();
                probe.pinning.eps = vec![eps];
                probe.validate()?;
                all.push(pipeline::fine_stage(&cfg, eps, None, &fields, &profile)?);
            }
            io::write_json(&cfg.output.join("energy.json"), &all)?;
            print_json(&all)?;
        }
        Cmd::Isoflux { config, out } => {
            let cfg = load(&config, out)?;
            for &eps in &cfg.pinning.eps {
                let stage = pipeline::field_stage(&cfg, eps, None)?;
                let fields = pipeline::corrected_fields(&cfg, &stage.domain, &stage.curve)?;
                let (hyp, _) = pipeline::hypotheses(&stage, &fields, 1.02 * 2.0 * cfg.domain.radius)?;
                io::write_curve(&tagged(&cfg.output, eps, "gamma.csv"), &stage.curve, None)?;
                let rep = serde_json::json!({ "eps": eps, "result": stage.isoflux, "hypotheses": hyp });
                io::write_json(&tagged(&cfg.output, eps, "isoflux.json"), &rep)?;
                print_json(&rep)?;
            }
        }
        Cmd::Hc1 { ratio, epsilon } => {
            println!("{}", hc1(ratio, epsilon)?);
        }
        Cmd::Onset { config, out } => {
            let cfg = load(&config, out)?;
            let profile = pipeline::profile_for(&cfg)?;
            let mut rows = Vec::new();
            for &eps in &cfg.pinning.eps {
                let ex = pipeline::onset_experiment(&cfg, eps, &profile)?;
                println!(
                    "eps {eps}: H_c1 {:.5}, h* {}, h*/H_c1 {}",
                    ex.report.hc1,
                    ex.report.h_star.map_or("none".into(), |h| format!("{h:.5}")),
                    ex.report.normalized.map_or("none".into(), |v| format!("{v:.5}"))
                );
                rows.push(ex);
            }
            io::write_json(&cfg.output.join("onset.json"), &rows)?;
        }
        Cmd::Sweep { config, epsilon, curve, out } => {
            let cfg = load(&config, out)?;
            let eps_list = if epsilon.is_empty() { cfg.pinning.eps.clone() } else { epsilon };
            let curve = curve.map(|p| io::read_curve(&p)).transpose()?;
            let profile = pipeline::profile_for(&cfg)?;
            let table = pipeline::epsilon_sweep(&cfg, &eps_list, curve.as_ref(), &profile)?;
            for w in &table.warnings {
                log::warn!("{w}");
            }
            std::fs::write(cfg.output.join("sweep.csv"), table.csv())?;
            print!("{}", table.csv());
        }
        Cmd::Verify { config, seed } => {
            let checks = pipeline::verify_suite(seed)?;
            let mut ok = true;
            for c in &checks {
                println!("{} {:<32} {:.3e} (tol {:.1e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
                ok &= c.pass;
            }
            if let Some(path) = config {
                let cfg = load(&path, None)?;
                let m = pipeline::run_pipeline(&cfg)?;
                for s in &m.stages {
                    println!("{:?} {} {:?}", s.status, s.stage, s.eps);
                }
                if let Some(f) = m.first_failure() {
                    eprintln!("stage {} failed: {}", f.stage, f.error.clone().unwrap_or_default());
                }
                ok &= m.succeeded();
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Named experiments: configuration, stage orchestration, sweeps and manifests.
//!
//! Field solves (weight, Meissner state, isoflux search, corrected fields)
//! run on a field grid of spacing `field_h`. The vortex configuration and
//! its energies are evaluated on a fine grid with `h = eps / cells_per_eps`
//! per value of `eps`; field-grid quantities are interpolated onto it.

use crate::ampere::AmpereOptions;
use crate::biotsavart::{c_omega, solve_ja, CorrectedFields, RenormalizedConstant};
use crate::construction::{assemble, tube_radius, ConfigurationMeta};
use crate::energy::{free_energy, pairing, vorticity, EnergyReport};
use crate::error::{GlError, Result};
use crate::geometry::{extend_and_close, PolyCurve};
use crate::grid::{interpolate, Domain, Placement, ScalarField, Shape, Vec3, VectorField};
use crate::isoflux::{
    check_hypotheses, maximize_ratio, onset_crossing, ratio, HypothesisReport, IsofluxInstance, IsofluxOptions,
    IsofluxResult, OnsetInputs, OnsetReport,
};
use crate::meissner::{check, solve_b0, AppliedField, MeissnerResiduals, MeissnerState};
use crate::pinning::{solve_rho, PinningModel, RhoOptions};
use crate::profile::{solve_profile, Profile};
use serde::{Deserialize, Serialize};
use crate::io;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Spacing of the field grid.
    pub field_h: f64,
    /// Cells of padding around the domain.
    #[serde(default = "default_pad")]
    pub pad: usize,
    /// `eps / h` on the fine grid; at least 1.5.
    #[serde(default = "default_cells_per_eps")]
    pub cells_per_eps: f64,
    /// Spacing of the isoflux search lattice.
    pub lattice_spacing: f64,
}

fn default_pad() -> usize {
    3
}

fn default_cells_per_eps() -> f64 {
    1.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinningSpec {
    pub model: PinningModel,
    pub eps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub direction: [f64; 3],
    /// Intensity used for the splitting check; must satisfy `h_ex <= eps^-eta`.
    pub h_ex: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnsetSpec {
    pub h_max: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CurveSource {
    Isoflux,
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    #[serde(flatten)]
    pub source: CurveSource,
    /// Exponent in `r_eps = |log eps|^-q`.
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_q() -> f64 {
    1.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub cg_tol: f64,
    pub transfer_tol: f64,
    pub rho_tol: f64,
    pub profile_rmax: f64,
    pub profile_n: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { cg_tol: 1e-11, transfer_tol: 1e-8, rho_tol: 1e-10, profile_rmax: 60.0, profile_n: 3000 }
    }
}

/// Experiment description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    pub domain: DomainSpec,
    pub grid: GridSpec,
    pub pinning: PinningSpec,
    pub field: FieldSpec,
    pub onset: OnsetSpec,
    pub curve: CurveSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| GlError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GlError::Config(e.to_string()))
    }

    pub fn shape(&self) -> Shape {
        Shape::ball(Vec3::from(self.domain.center), self.domain.radius)
    }

    /// Fine-grid spacing for `eps`.
    pub fn fine_h(&self, eps: f64) -> f64 {
        eps / self.grid.cells_per_eps
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GlError::Config(m));
        if !(self.domain.radius > 0.0) {
            return bad(format!("radius must be positive, got {}", self.domain.radius));
        }
        if !(self.grid.field_h > 0.0 && self.grid.field_h < self.domain.radius) {
            return bad(format!("field_h {} must lie in (0, radius)", self.grid.field_h));
        }
        if !(self.grid.lattice_spacing > 0.0 && self.grid.lattice_spacing < self.domain.radius) {
            return bad(format!("lattice_spacing {} must lie in (0, radius)", self.grid.lattice_spacing));
        }
        if !(self.grid.cells_per_eps >= 1.5) {
            return bad(format!("cells_per_eps {} violates eps >= 1.5 h", self.grid.cells_per_eps));
        }
        if self.pinning.eps.is_empty() {
            return bad("at least one eps is required".into());
        }
        if !(self.field.eta > 0.0 && self.field.eta < 0.5) {
            return bad(format!("eta = {} must lie in (0, 1/2)", self.field.eta));
        }
        let dir = Vec3::from(self.field.direction);
        if !(dir.norm() > 0.0) {
            return bad("field direction must be non-zero".into());
        }
        if !(self.curve.q > 1.0) {
            return bad(format!("tube exponent q = {} must exceed 1", self.curve.q));
        }
        for &eps in &self.pinning.eps {
            if !(eps > 0.0 && eps < (-1f64).exp()) {
                return bad(format!("eps = {eps} outside (0, 1/e)"));
            }
            let h = self.fine_h(eps);
            let r = tube_radius(eps, self.curve.q)?;
            if r < 4.0 * h {
                return bad(format!("tube radius {r:.4} below 4h = {:.4} for eps = {eps}", 4.0 * h));
            }
            let guard = eps.powf(-self.field.eta);
            if self.field.h_ex > guard {
                return bad(format!("h_ex = {} exceeds eps^-eta = {guard:.4} for eps = {eps}", self.field.h_ex));
            }
        }
        if !(self.onset.h_max > 0.0) || self.onset.samples < 2 {
            return bad("onset scan needs h_max > 0 and two or more samples".into());
        }
        if !(self.tolerances.cg_tol > 0.0 && self.tolerances.transfer_tol > 0.0 && self.tolerances.rho_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn ampere(&self) -> AmpereOptions {
        AmpereOptions { cg_tol: self.tolerances.cg_tol, transfer_tol: self.tolerances.transfer_tol, ..Default::default() }
    }

    pub fn rho_options(&self) -> RhoOptions {
        RhoOptions { tol: self.tolerances.rho_tol, ..Default::default() }
    }

    pub fn onset_grid(&self) -> Vec<f64> {
        let n = self.onset.samples;
        (0..n).map(|i| self.onset.h_max * i as f64 / (n - 1) as f64).collect()
    }
}

/// Weight, Meissner state and isoflux optimum on the field grid for one `eps`.
pub struct FieldStage {
    pub domain: Domain,
    pub rho: ScalarField,
    pub meissner: MeissnerState,
    pub residuals: MeissnerResiduals,
    pub instance: IsofluxInstance,
    pub isoflux: IsofluxResult,
    pub curve: PolyCurve,
}

/// Field-grid domain of a configuration.
pub fn field_domain(cfg: &RunConfig) -> Result<Domain> {
    Domain::ball_cell_centered(cfg.shape().center(), cfg.domain.radius, cfg.grid.field_h, cfg.grid.pad)
}

pub fn field_stage(cfg: &RunConfig, eps: f64, curve_override: Option<&PolyCurve>) -> Result<FieldStage> {
    let shape = cfg.shape();
    let domain = Domain::ball_cell_centered(shape.center(), cfg.domain.radius, cfg.grid.field_h, cfg.grid.pad)?;
    let a = cfg.pinning.model.sample(&domain)?;
    let rho = solve_rho(&domain, &a, eps, &cfg.rho_options())?.rho;
    let applied = AppliedField::uniform(Vec3::from(cfg.field.direction), 1.0)?;
    let meissner = solve_b0(&rho, &applied, &domain, &cfg.ampere())?;
    let residuals = check(&meissner, &rho, &domain);
    let instance = IsofluxInstance::from_rho(meissner.b0.clone(), &rho, shape, cfg.grid.lattice_spacing, eps)?;
    let (isoflux, curve) = match curve_override {
        Some(c) => (given_curve(c, &instance)?, c.clone()),
        None => {
            let res = maximize_ratio(&instance, &IsofluxOptions::default())?;
            let c = res
                .curve
                .clone()
                .ok_or_else(|| GlError::Numerical("isoflux search found no curve with positive circulation".into()))?;
            (res, c)
        }
    };
    Ok(FieldStage { domain, rho, meissner, residuals, instance, isoflux, curve })
}

/// Result record for a curve supplied by the user instead of the search.
fn given_curve(c: &PolyCurve, inst: &IsofluxInstance) -> Result<IsofluxResult> {
    let r = ratio(c, inst)?;
    Ok(IsofluxResult {
        curve: Some(c.clone()),
        ratio: r,
        hc1: crate::isoflux::hc1(r, inst.eps).ok(),
        graph_ratio: r,
        lambdas: Vec::new(),
        kind: Some(if c.closed { "cycle" } else { "path" }.into()),
        graph_nodes: 0,
        graph_edges: 0,
        polish_steps: 0,
        smoothing_passes: 0,
        max_curvature: c.vertex_curvature().iter().map(|k| k.norm()).fold(0.0, f64::max),
        diagnostic: Some("curve read from file".into()),
    })
}

/// Closed loop and corrected fields for a curve with ends on the boundary.
pub fn corrected_fields(cfg: &RunConfig, domain: &Domain, curve: &PolyCurve) -> Result<CorrectedFields> {
    let r = cfg.domain.radius;
    let loop_ = if curve.closed { curve.clone() } else { extend_and_close(curve, &domain.shape, 0.25 * r, 2.0 * r)?.0 };
    solve_ja(&loop_, domain, &cfg.ampere())
}

/// Values on the fine grid at one `eps`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FineStage {
    pub eps: f64,
    pub h: f64,
    pub nodes: usize,
    pub meta: ConfigurationMeta,
    pub energy: EnergyReport,
    /// `<mu, B0>` with the current form of the vorticity.
    pub pairing: Option<f64>,
    /// Remainder of the splitting at unit intensity.
    pub remainder: Option<f64>,
    pub weighted_length: f64,
}

fn resample_masked(src: &VectorField, domain: &Domain, p: Placement, keep: impl Fn(usize, usize, usize, usize) -> bool) -> VectorField {
    let g = domain.grid;
    let mut out = VectorField::zeros(g, p);
    for c in 0..3 {
        g.for_each(p, c, |i, j, k, n| {
            if keep(c, i, j, k) {
                out.comps[c][n] = interpolate(&src.comps[c], &src.grid, p, c, &g.position(p, c, i, j, k));
            }
        });
    }
    out
}

/// Build the vortex configuration on the fine grid and evaluate its energy.
/// With a field stage, also the pairing with `B0` and the splitting remainder.
pub fn fine_stage(
    cfg: &RunConfig,
    eps: f64,
    stage: Option<&FieldStage>,
    fields: &CorrectedFields,
    profile: &Profile,
) -> Result<FineStage> {
    let h = cfg.fine_h(eps);
    let shape = cfg.shape();
    let domain = Domain::ball_cell_centered(shape.center(), cfg.domain.radius, h, cfg.grid.pad.min(2))?;
    let g = domain.grid;
    let a = cfg.pinning.model.sample(&domain)?;
    let rho = solve_rho(&domain, &a, eps, &cfg.rho_options())?.rho;
    drop(a);
    let conf = assemble(&domain, fields, profile, eps, cfg.curve.q, None)?;
    let energy = free_energy(&conf, &rho, &domain)?;
    let weighted_length = crate::geometry::weighted_length(&conf.curve, &rho, &shape);
    let (mut p, mut r) = (None, None);
    if let Some(stage) = stage {
        let b0 = resample_masked(&stage.meissner.b0, &domain, Placement::Face, |c, i, j, k| domain.face_in(c, i, j, k));
        let mu = vorticity(&conf.u, &conf.a, &domain)?;
        p = Some(pairing(&mu.current, &b0, &domain));
        drop((b0, mu));
        let mut kinetic = vec![[false; 3]; g.len()];
        domain.for_each_kinetic_edge(|c, i, _, _| kinetic[i][c] = true);
        let w = resample_masked(&stage.meissner.w, &domain, Placement::Edge, |c, i, j, k| kinetic[g.idx(i, j, k)][c]);
        drop(kinetic);
        let h3 = h.powi(3);
        let mut acc = 0.0;
        domain.for_each_kinetic_edge(|c, i, j, wt| {
            let wv = w.comps[c][i];
            let m2 = 0.5 * (conf.u.values[i].norm_sqr() + conf.u.values[j].norm_sqr()) - 1.0;
            acc += wt * h3 * rho.values[i] * rho.values[j] * wv * wv * m2;
        });
        r = Some(0.5 * acc);
    }
    Ok(FineStage { eps, h, nodes: g.len(), meta: conf.meta.clone(), energy, pairing: p, remainder: r, weighted_length })
}

fn balance(fine: &FineStage) -> Result<OnsetInputs> {
    match (fine.pairing, fine.remainder) {
        (Some(pairing), Some(remainder)) => Ok(OnsetInputs { free_energy: fine.energy.total, pairing, remainder }),
        _ => Err(GlError::Config("fine stage was evaluated without the Meissner field".into())),
    }
}

/// Onset experiment for one `eps`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OnsetExperiment {
    pub eps: f64,
    pub isoflux: IsofluxResult,
    pub fine: FineStage,
    pub report: OnsetReport,
    /// Largest scanned intensity inside the guard `h <= eps^-eta`.
    pub guard: f64,
    pub crossing_inside_guard: Option<bool>,
}

pub fn onset_experiment(cfg: &RunConfig, eps: f64, profile: &Profile) -> Result<OnsetExperiment> {
    let stage = field_stage(cfg, eps, None)?;
    let fields = corrected_fields(cfg, &stage.domain, &stage.curve)?;
    let fine = fine_stage(cfg, eps, Some(&stage), &fields, profile)?;
    let inputs = balance(&fine)?;
    let report = onset_crossing(&inputs, &cfg.onset_grid(), eps, stage.isoflux.ratio)?;
    let guard = eps.powf(-cfg.field.eta);
    Ok(OnsetExperiment {
        eps,
        crossing_inside_guard: report.h_star.map(|h| h <= guard),
        isoflux: stage.isoflux,
        fine,
        report,
        guard,
    })
}

pub fn profile_for(cfg: &RunConfig) -> Result<Profile> {
    solve_profile(cfg.tolerances.profile_rmax, cfg.tolerances.profile_n)
}

/// Hypothesis report with the renormalised constant of the optimal curve.
pub fn hypotheses(stage: &FieldStage, fields: &CorrectedFields, c0: f64) -> Result<(HypothesisReport, Option<RenormalizedConstant>)> {
    let h = stage.domain.grid.h;
    let radii: Vec<f64> = [8.0, 6.0, 4.0].iter().map(|m| m * h).collect();
    let c = c_omega(fields, &radii).ok();
    let rep = check_hypotheses(&stage.isoflux, &stage.instance, c0, c.as_ref().map(|c| c.value))?;
    Ok((rep, c))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

/// One executed (or skipped) stage with the hashes of what it wrote.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub eps: Option<f64>,
    pub status: StageStatus,
    pub error: Option<String>,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OnsetSummary {
    pub eps: f64,
    pub ratio: f64,
    pub hc1: f64,
    pub h_star: Option<f64>,
    pub normalized: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub stages: Vec<StageRecord>,
    pub onset: Vec<OnsetSummary>,
}

impl RunManifest {
    pub fn succeeded(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Ok)
    }

    pub fn first_failure(&self) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.status == StageStatus::Failed)
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Files written by one stage.
pub struct Outputs {
    dir: PathBuf,
    prefix: String,
    files: BTreeMap<String, String>,
}

impl Outputs {
    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let file = format!("{}{name}", self.prefix);
        let hash = io::write_hashed(&self.dir.join(&file), bytes)?;
        self.files.insert(file, hash);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let s = serde_json::to_string_pretty(value).map_err(|e| GlError::Format(e.to_string()))? + "\n";
        self.bytes(name, s.as_bytes())
    }

    pub fn field(&mut self, name: &str, f: &io::FieldData) -> Result<()> {
        self.bytes(name, &io::encode_field(f))
    }
}

struct Runner {
    dir: PathBuf,
    stages: Vec<StageRecord>,
}

impl Runner {
    fn run<T>(&mut self, stage: &str, eps: Option<f64>, f: impl FnOnce(&mut Outputs) -> Result<T>) -> Option<T> {
        let t = std::time::Instant::now();
        let prefix = eps.map(|e| format!("eps{e}_")).unwrap_or_default();
        let mut out = Outputs { dir: self.dir.clone(), prefix, files: BTreeMap::new() };
        let res = f(&mut out);
        let (status, error, value) = match res {
            Ok(v) => (StageStatus::Ok, None, Some(v)),
            Err(e) => {
                log::error!("stage {stage} failed: {e}");
                (StageStatus::Failed, Some(e.to_string()), None)
            }
        };
        self.stages.push(StageRecord {
            stage: stage.into(),
            eps,
            status,
            error,
            outputs: out.files,
            seconds: t.elapsed().as_secs_f64(),
        });
        value
    }

    fn skip(&mut self, stages: &[&str], eps: f64) {
        for s in stages {
            self.stages.push(StageRecord {
                stage: (*s).into(),
                eps: Some(eps),
                status: StageStatus::Skipped,
                error: None,
                outputs: BTreeMap::new(),
                seconds: 0.0,
            });
        }
    }
}

pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    Ok(io::sha256_hex(cfg.to_toml()?.as_bytes()))
}

/// Execute all stages for every `eps` and write the manifest to the output directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output)?;
    let started = unix_now();
    let mut run = Runner { dir: cfg.output.clone(), stages: Vec::new() };
    let mut onset = Vec::new();
    run.run("config", None, |o| o.bytes("config.toml", cfg.to_toml()?.as_bytes()));
    let file_curve = match &cfg.curve.source {
        CurveSource::File { path } => run.run("curve", None, |_| io::read_curve(path)),
        CurveSource::Isoflux => None,
    };
    let profile = run.run("profile", None, |o| {
        let p = profile_for(cfg)?;
        let core = crate::profile::core_constant(cfg.tolerances.profile_rmax.max(50.0), cfg.tolerances.profile_n)?;
        o.bytes("profile.csv", profile_csv(&p).as_bytes())?;
        o.json("profile.json", &core)?;
        Ok(p)
    });
    let downstream = ["pinning", "meissner", "isoflux", "bs", "construct", "onset"];
    for &eps in &cfg.pinning.eps {
        let Some(profile) = profile.as_ref() else {
            run.skip(&downstream, eps);
            continue;
        };
        if matches!(cfg.curve.source, CurveSource::File { .. }) && file_curve.is_none() {
            run.skip(&downstream, eps);
            continue;
        }
        let shape = cfg.shape();
        let Some((domain, rho)) = run.run("pinning", Some(eps), |o| {
            let domain = Domain::ball_cell_centered(shape.center(), cfg.domain.radius, cfg.grid.field_h, cfg.grid.pad)?;
            let a = cfg.pinning.model.sample(&domain)?;
            let sol = solve_rho(&domain, &a, eps, &cfg.rho_options())?;
            let inside: Vec<f64> =
                (0..domain.grid.len()).filter(|&n| domain.node_weight(n) > 0.0).map(|n| sol.rho.values[n].powi(2)).collect();
            let holder = crate::pinning::holder_norm(&domain, &sol.rho, 0.5, 1.0, 1.0, eps);
            o.field("rho.glf", &(&sol.rho).into())?;
            o.json(
                "pinning.json",
                &serde_json::json!({
                    "residual": sol.residual,
                    "newton_iterations": sol.newton_iterations,
                    "min_rho2": inside.iter().copied().fold(f64::INFINITY, f64::min),
                    "max_rho2": inside.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    "hypothesis": if holder.within_bound { "holder bound satisfied" } else { "unverified hypothesis" },
                    "holder": holder,
                    "warnings": sol.warnings,
                }),
            )?;
            Ok((domain, sol.rho))
        }) else {
            run.skip(&downstream[1..], eps);
            continue;
        };
        let Some((meissner, residuals)) = run.run("meissner", Some(eps), |o| {
            let applied = AppliedField::uniform(Vec3::from(cfg.field.direction), 1.0)?;
            let ms = solve_b0(&rho, &applied, &domain, &cfg.ampere())?;
            let res = check(&ms, &rho, &domain);
            o.field("b0.glf", &(&ms.b0).into())?;
            o.json("meissner.json", &serde_json::json!({ "energy_coefficient": ms.energy, "residuals": res }))?;
            Ok((ms, res))
        }) else {
            run.skip(&downstream[2..], eps);
            continue;
        };
        let Some(stage) = run.run("isoflux", Some(eps), |o| {
            let instance = IsofluxInstance::from_rho(meissner.b0.clone(), &rho, shape, cfg.grid.lattice_spacing, eps)?;
            let (isoflux, curve) = match &file_curve {
                Some(c) => (given_curve(c, &instance)?, c.clone()),
                None => {
                    let r = maximize_ratio(&instance, &IsofluxOptions::default())?;
                    let c = r.curve.clone().ok_or_else(|| {
                        GlError::Numerical(r.diagnostic.clone().unwrap_or_else(|| "no optimal curve".into()))
                    })?;
                    (r, c)
                }
            };
            o.json("isoflux.json", &isoflux)?;
            o.bytes("gamma.csv", io::curve_csv(&curve, None).as_bytes())?;
            Ok(FieldStage {
                domain: domain.clone(),
                rho: rho.clone(),
                meissner: meissner.clone(),
                residuals: residuals.clone(),
                instance,
                isoflux,
                curve,
            })
        }) else {
            run.skip(&downstream[3..], eps);
            continue;
        };
        let Some(fields) = run.run("bs", Some(eps), |o| {
            let fields = corrected_fields(cfg, &stage.domain, &stage.curve)?;
            let c0 = 1.02 * 2.0 * cfg.domain.radius;
            let (hyp, c) = hypotheses(&stage, &fields, c0)?;
            o.field("j.glf", &(&fields.j).into())?;
            o.field("a.glf", &(&fields.a).into())?;
            o.json(
                "bs.json",
                &serde_json::json!({
                    "c_omega": c,
                    "flux_residual": fields.flux_residual,
                    "length_inside": fields.length_inside,
                    "transfer_history": fields.transfer_history,
                }),
            )?;
            o.json("hypotheses.json", &hyp)?;
            Ok(fields)
        }) else {
            run.skip(&downstream[4..], eps);
            continue;
        };
        let Some(fine) = run.run("construct", Some(eps), |o| {
            let fine = fine_stage(cfg, eps, Some(&stage), &fields, profile)?;
            o.json("energy.json", &fine)?;
            Ok(fine)
        }) else {
            run.skip(&downstream[5..], eps);
            continue;
        };
        if let Some(rep) = run.run("onset", Some(eps), |o| {
            let rep = onset_crossing(&balance(&fine)?, &cfg.onset_grid(), eps, stage.isoflux.ratio)?;
            o.json("onset.json", &rep)?;
            Ok(rep)
        }) {
            onset.push(OnsetSummary { eps, ratio: rep.ratio, hc1: rep.hc1, h_star: rep.h_star, normalized: rep.normalized });
        }
    }
    let manifest = RunManifest {
        name: cfg.name.clone(),
        config_hash: config_hash(cfg)?,
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        started_unix: started,
        finished_unix: unix_now(),
        stages: run.stages,
        onset,
    };
    io::write_json(&cfg.output.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// `r, f0, f0'` on a fixed radial grid.
pub fn profile_csv(p: &Profile) -> String {
    let mut s = String::from("r,f0,df0\n");
    let d = 1e-5;
    for i in 0..=400 {
        let r = p.r_max * i as f64 / 400.0;
        let df = if r < d {
            p.slope_at_origin()
        } else {
            let hi = (r + d).min(p.r_max);
            (p.eval(hi) - p.eval(r - d)) / (hi - r + d)
        };
        s.push_str(&format!("{r},{},{df}\n", p.eval(r)));
    }
    s
}

/// One row of the `eps` sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub log_eps: f64,
    pub free_energy: f64,
    /// `pi |rho^2 G| |log eps|`.
    pub leading: f64,
    pub weighted_length: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub law: crate::energy::EnergyLaw,
    /// Slope of `log F` against `log |log eps|`.
    pub loglog_slope: f64,
    pub warnings: Vec<String>,
}

impl SweepTable {
    pub fn csv(&self) -> String {
        let mut s = String::from("eps,log_eps,F,leading,F_minus_leading,weighted_length\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.eps,
                r.log_eps,
                r.free_energy,
                r.leading,
                r.free_energy - r.leading,
                r.weighted_length
            ));
        }
        s.push_str(&format!("# slope,{},predicted,{},loglog_slope,{}\n", self.law.slope, self.law.predicted, self.loglog_slope));
        s
    }
}

/// Free energy of the vortex configuration over several `eps` for one curve.
/// Values of `eps` that fail the resolution rules are dropped with a warning.
pub fn epsilon_sweep(cfg: &RunConfig, eps_list: &[f64], curve: Option<&PolyCurve>, profile: &Profile) -> Result<SweepTable> {
    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    for &eps in eps_list {
        let mut probe = cfg.clone();
        probe.pinning.eps = vec![eps];
        match probe.validate() {
            Ok(()) => kept.push(eps),
            Err(e) => warnings.push(format!("eps = {eps} dropped: {e}")),
        }
    }
    if kept.len() < 3 {
        return Err(GlError::Config(format!("sweep needs three admissible eps values, have {}", kept.len())));
    }
    let first = field_stage(cfg, kept[0], curve)?;
    let fields = corrected_fields(cfg, &first.domain, &first.curve)?;
    drop(first);
    let mut rows = Vec::new();
    for &eps in &kept {
        let fine = fine_stage(cfg, eps, None, &fields, profile)?;
        warnings.extend(fine.meta.warnings.iter().map(|w| format!("eps = {eps}: {w}")));
        let l = eps.ln().abs();
        rows.push(SweepRow {
            eps,
            log_eps: l,
            free_energy: fine.energy.total,
            leading: std::f64::consts::PI * fine.weighted_length * l,
            weighted_length: fine.weighted_length,
        });
    }
    let wl = rows.iter().map(|r| r.weighted_length).sum::<f64>() / rows.len() as f64;
    let law = crate::energy::energy_law(&rows.iter().map(|r| (r.eps, r.free_energy)).collect::<Vec<_>>(), wl)?;
    let logs: Vec<(f64, f64)> = rows.iter().map(|r| (r.log_eps.ln(), r.free_energy.ln())).collect();
    let (_, loglog_slope) = crate::biotsavart::linear_fit(&logs);
    Ok(SweepTable { rows, law, loglog_slope, warnings })
}

/// Outcome of one quick self-check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn check_item(name: &str, value: f64, tolerance: f64) -> Check {
    Check { name: name.into(), value, tolerance, pass: value.abs() <= tolerance }
}

/// Fast consistency checks of the discrete operators, kernels and formats.
pub fn verify_suite(seed: u64) -> Result<Vec<Check>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = crate::grid::Grid::new([-0.3, 0.1, 0.2], 0.1, [9, 8, 10])?;
    let mut e = VectorField::zeros(g, Placement::Edge);
    e.comps.iter_mut().flatten().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    let dc = crate::grid::div(&crate::grid::curl(&e)).max_abs();
    let mut s = ScalarField::zeros(g, Placement::Node);
    s.values.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    let cg = crate::grid::curl(&crate::grid::grad(&s)).max_abs();
    let circle = crate::biotsavart::Source::Circle { center: Vec3::zeros(), axis: Vec3::z(), radius: 1.0 };
    let x = crate::biotsavart::eval_x(&Vec3::zeros(), &circle)?;
    let bytes = io::encode_field(&(&e).into());
    let round = io::decode_field(&bytes)?.into_vector()? == e;
    let p = solve_profile(30.0, 600)?;
    Ok(vec![
        check_item("div curl", dc, 1e-12),
        check_item("curl grad", cg, 1e-12),
        check_item("circle centre value - pi", x.z - std::f64::consts::PI, 1e-10),
        check_item("circle centre transverse", x.x.abs() + x.y.abs(), 1e-10),
        check_item("GLF1 round trip", if round { 0.0 } else { 1.0 }, 0.0),
        check_item("profile residual", p.residual, 1e-10),
        check_item("H_c1(1/2, 1e-3) - log 1000", crate::isoflux::hc1(0.5, 1e-3)? - 1000f64.ln(), 1e-12),
    ])
}

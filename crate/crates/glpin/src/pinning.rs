//! Pinning term `a` and the modulus `rho` it induces.
//!
//! `rho` is the critical point of the lattice energy
//! `1/2 sum_e w_e h^3 |d rho / h|^2 + 1/(4 eps^2) sum_n w_n h^3 (a - rho^2)^2`
//! over the staircase domain, which discretises `-Lap rho = rho (a - rho^2)/eps^2`
//! with natural Neumann conditions.

use crate::error::{GlError, Result};
use crate::grid::{Domain, Placement, ScalarField, Vec3};
use crate::linalg::pcg;
use serde::{Deserialize, Serialize};

/// Analytic pinning landscapes with values in `[b, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PinningModel {
    Constant { value: f64 },
    /// `1 - depth * exp(-|x - center|^2 / width^2)`.
    Bump { center: [f64; 3], width: f64, depth: f64 },
    /// Sum of Gaussian wells, clipped below at `1 - depth`.
    Impurities { centers: Vec<[f64; 3]>, width: f64, depth: f64 },
    /// `1 - depth * (1 - cos(2 pi x/period) cos(2 pi y/period) cos(2 pi z/period)) / 2`.
    Periodic { period: f64, depth: f64 },
}

impl PinningModel {
    pub fn eval(&self, x: &Vec3) -> f64 {
        match self {
            PinningModel::Constant { value } => *value,
            PinningModel::Bump { center, width, depth } => {
                let c = Vec3::new(center[0], center[1], center[2]);
                1.0 - depth * (-(x - c).norm_squared() / (width * width)).exp()
            }
            PinningModel::Impurities { centers, width, depth } => {
                let s: f64 = centers
                    .iter()
                    .map(|c| (-(x - Vec3::new(c[0], c[1], c[2])).norm_squared() / (width * width)).exp())
                    .sum();
                1.0 - depth * s.min(1.0)
            }
            PinningModel::Periodic { period, depth } => {
                let k = 2.0 * std::f64::consts::PI / period;
                1.0 - 0.5 * depth * (1.0 - (k * x.x).cos() * (k * x.y).cos() * (k * x.z).cos())
            }
        }
    }

    /// Lower bound `b` of the landscape.
    pub fn lower_bound(&self) -> f64 {
        match self {
            PinningModel::Constant { value } => *value,
            PinningModel::Bump { depth, .. }
            | PinningModel::Impurities { depth, .. }
            | PinningModel::Periodic { depth, .. } => 1.0 - depth,
        }
    }

    pub fn sample(&self, domain: &Domain) -> Result<ScalarField> {
        let b = self.lower_bound();
        if !(b > 0.0 && b <= 1.0) {
            return Err(GlError::Pinning(format!("lower bound {b} outside (0, 1]")));
        }
        let f = ScalarField::from_fn(domain.grid, Placement::Node, |x| self.eval(&x));
        check_range(&f)?;
        Ok(f)
    }
}

fn check_range(a: &ScalarField) -> Result<()> {
    for &v in &a.values {
        if !v.is_finite() || v <= 0.0 || v > 1.0 + 1e-12 {
            return Err(GlError::Pinning(format!("pinning value {v} outside (0, 1]")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhoOptions {
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for RhoOptions {
    fn default() -> Self {
        RhoOptions { tol: 1e-10, max_newton: 40 }
    }
}

/// Solution of the pinning problem.
#[derive(Clone, Debug)]
pub struct RhoSolution {
    pub rho: ScalarField,
    pub eps: f64,
    /// Largest strong-form residual `|-Lap_h rho - rho (a - rho^2)/eps^2|` over weighted nodes.
    pub residual: f64,
    pub newton_iterations: usize,
    pub warnings: Vec<String>,
}

/// Strong-form residual at every node: weighted edge differences divided by `w_n h^3`.
fn residual(domain: &Domain, a: &[f64], rho: &[f64], eps: f64, out: &mut [f64]) -> f64 {
    let g = &domain.grid;
    let h = g.h;
    out.iter_mut().for_each(|v| *v = 0.0);
    domain.for_each_kinetic_edge(|_, i, j, w| {
        let d = w * h * (rho[j] - rho[i]);
        out[i] -= d;
        out[j] += d;
    });
    let h3 = h.powi(3);
    let k = 1.0 / (eps * eps);
    let mut m: f64 = 0.0;
    for n in 0..g.len() {
        let wn = domain.node_weight(n);
        if wn > 0.0 {
            out[n] -= wn * h3 * k * rho[n] * (a[n] - rho[n] * rho[n]);
            m = m.max((out[n] / (wn * h3)).abs());
        } else {
            out[n] = 0.0;
        }
    }
    m
}

/// Lattice energy whose critical point is `rho`.
pub fn rho_energy(domain: &Domain, a: &ScalarField, rho: &ScalarField, eps: f64) -> f64 {
    let h = domain.grid.h;
    let mut e = 0.0;
    domain.for_each_kinetic_edge(|_, i, j, w| {
        let d = rho.values[j] - rho.values[i];
        e += 0.5 * w * h * d * d;
    });
    let h3 = h.powi(3);
    for n in 0..domain.grid.len() {
        let wn = domain.node_weight(n);
        if wn > 0.0 {
            let q = a.values[n] - rho.values[n] * rho.values[n];
            e += wn * h3 * q * q / (4.0 * eps * eps);
        }
    }
    e
}

/// Damped Newton iteration started from `sqrt(a)`.
pub fn solve_rho(domain: &Domain, a: &ScalarField, eps: f64, opts: &RhoOptions) -> Result<RhoSolution> {
    if a.placement != Placement::Node || a.grid != domain.grid {
        return Err(GlError::Pinning("pinning term must be a node field on the domain grid".into()));
    }
    if !(eps > 0.0) {
        return Err(GlError::Config(format!("eps must be positive, got {eps}")));
    }
    check_range(a)?;
    let g = domain.grid;
    let h = g.h;
    let mut warnings = Vec::new();
    if eps < 2.0 * h {
        let msg = format!("eps = {eps} is below 2h = {}; the core is under-resolved", 2.0 * h);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let n = g.len();
    let mut rho: Vec<f64> = a.values.iter().map(|v| v.sqrt()).collect();
    let mut r = vec![0.0; n];
    let mut res = residual(domain, &a.values, &rho, eps, &mut r);
    let h3 = h.powi(3);
    let k = 1.0 / (eps * eps);
    let mut iters = 0;
    while res > opts.tol && iters < opts.max_newton {
        iters += 1;
        let mut diag = vec![0.0; n];
        domain.for_each_kinetic_edge(|_, i, j, w| {
            diag[i] += w * h;
            diag[j] += w * h;
        });
        let mut react = vec![0.0; n];
        for m in 0..n {
            let wn = domain.node_weight(m);
            if wn > 0.0 {
                react[m] = wn * h3 * k * (3.0 * rho[m] * rho[m] - a.values[m]).max(1e-3 * a.values[m]);
                diag[m] += react[m];
            }
        }
        let mut apply = |x: &[f64], y: &mut [f64]| {
            for m in 0..n {
                y[m] = react[m] * x[m];
            }
            domain.for_each_kinetic_edge(|_, i, j, w| {
                let d = w * h * (x[i] - x[j]);
                y[i] += d;
                y[j] -= d;
            });
        };
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut step = vec![0.0; n];
        pcg(&mut apply, &diag, &rhs, &mut step, 1e-13, 20_000, "pinning Newton step")?;
        let mut t = 1.0;
        let mut trial = rho.clone();
        loop {
            for m in 0..n {
                trial[m] = rho[m] + t * step[m];
            }
            let rt = residual(domain, &a.values, &trial, eps, &mut r);
            if rt < res || t < 1e-4 {
                res = rt;
                break;
            }
            t *= 0.5;
        }
        std::mem::swap(&mut rho, &mut trial);
    }
    if res > opts.tol {
        return Err(GlError::NoConvergence { what: "pinning modulus".into(), iterations: iters, residual: res });
    }
    Ok(RhoSolution {
        rho: ScalarField { grid: g, placement: Placement::Node, values: rho },
        eps,
        residual: res,
        newton_iterations: iters,
        warnings,
    })
}

/// `max |rho^2 - a|` over nodes at distance at least `margin` inside the boundary.
pub fn interior_gap(domain: &Domain, a: &ScalarField, rho: &ScalarField, margin: f64) -> f64 {
    let g = domain.grid;
    let mut m: f64 = 0.0;
    g.for_each(Placement::Node, 0, |i, j, k, n| {
        if domain.shape.distance(&g.node(i, j, k)) < -margin {
            m = m.max((rho.values[n] * rho.values[n] - a.values[n]).abs());
        }
    });
    m
}

/// Sampled Holder norm of `rho` against the bound `C1 |log eps|^N`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderReport {
    pub alpha: f64,
    pub sup: f64,
    pub seminorm: f64,
    pub norm: f64,
    pub bound: f64,
    pub within_bound: bool,
}

/// Holder quotients over node pairs along lattice directions at separations `h, 2h, 4h, ...`.
pub fn holder_norm(domain: &Domain, rho: &ScalarField, alpha: f64, c1: f64, big_n: f64, eps: f64) -> HolderReport {
    let g = domain.grid;
    let dirs: [[isize; 3]; 7] = [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0], [1, 0, 1], [0, 1, 1], [1, 1, 1]];
    let mut sup: f64 = 0.0;
    let mut semi: f64 = 0.0;
    g.for_each(Placement::Node, 0, |i, j, k, n| {
        if domain.node_weight(n) == 0.0 {
            return;
        }
        sup = sup.max(rho.values[n].abs());
        for d in &dirs {
            let mut step = 1isize;
            while step <= 8 {
                let q = [i as isize + d[0] * step, j as isize + d[1] * step, k as isize + d[2] * step];
                if (0..3).any(|a| q[a] < 0 || q[a] >= g.dims[a] as isize) {
                    break;
                }
                let m = g.idx(q[0] as usize, q[1] as usize, q[2] as usize);
                if domain.node_weight(m) > 0.0 {
                    let dist = g.h * step as f64 * ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt();
                    semi = semi.max((rho.values[m] - rho.values[n]).abs() / dist.powf(alpha));
                }
                step *= 2;
            }
        }
    });
    let bound = c1 * eps.ln().abs().powf(big_n);
    HolderReport { alpha, sup, seminorm: semi, norm: sup + semi, bound, within_bound: sup + semi <= bound }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_landscape_gives_square_root() {
        let d = Domain::ball(Vec3::zeros(), 1.0, 12, 2).unwrap();
        let a = PinningModel::Constant { value: 0.49 }.sample(&d).unwrap();
        let s = solve_rho(&d, &a, 0.3, &RhoOptions::default()).unwrap();
        assert_eq!(s.newton_iterations, 0);
        for n in 0..d.grid.len() {
            assert_eq!(s.rho.values[n], 0.7);
        }
    }

    #[test]
    fn rejects_values_above_one() {
        let d = Domain::ball(Vec3::zeros(), 1.0, 8, 2).unwrap();
        assert!(PinningModel::Constant { value: 1.2 }.sample(&d).is_err());
        assert!(PinningModel::Bump { center: [0.0; 3], width: 0.3, depth: 1.0 }.sample(&d).is_err());
    }

    #[test]
    fn bump_residual_and_energy_decrease() {
        let d = Domain::ball(Vec3::zeros(), 1.0, 16, 2).unwrap();
        let a = PinningModel::Bump { center: [0.1, 0.0, 0.0], width: 0.4, depth: 0.5 }.sample(&d).unwrap();
        let s = solve_rho(&d, &a, 0.2, &RhoOptions::default()).unwrap();
        assert!(s.residual < 1e-10);
        let start = ScalarField { values: a.values.iter().map(|v| v.sqrt()).collect(), ..a.clone() };
        assert!(rho_energy(&d, &a, &s.rho, 0.2) < rho_energy(&d, &a, &start, 0.2));
        for n in 0..d.grid.len() {
            if d.node_weight(n) > 0.0 {
                assert!(s.rho.values[n] > 0.0 && s.rho.values[n] <= 1.0 + 1e-12);
            }
        }
    }
}

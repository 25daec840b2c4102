//! Coupled current/potential problem shared by the Meissner state and the
//! corrected curve fields.
//!
//! Unknowns are a node potential `phi` on the kinetic graph and an edge
//! potential `a` on the box. The quadratic form
//!
//! `Q = 1/2 sum_e w_e c_e h^3 (S_e + a_e - d phi_e / h)^2 + 1/2 sum_f h^3 |curl a|^2 + 1/2 sum_n h^3 |div a|^2`
//!
//! is minimised with box-surface edges held at Dirichlet data. The
//! divergence penalty selects the Coulomb gauge without changing the
//! minimum. The Dirichlet data come from the Newtonian potential of the
//! current `K = -w c (S + a - d phi / h)` and are refreshed until they stop
//! changing, which emulates the free-space problem.

use crate::error::{GlError, Result};
use crate::grid::{curl_edge_raw, curl_face_raw, div_edge_raw, grad_node_raw, Domain, Placement, Vec3};
use crate::linalg::pcg;

/// Inputs on kinetic edges, indexed like edge component arrays.
pub struct AmpereProblem<'a> {
    pub domain: &'a Domain,
    pub source: &'a [Vec<f64>; 3],
    pub coupling: &'a [Vec<f64>; 3],
}

#[derive(Clone, Debug)]
pub struct AmpereOptions {
    pub cg_tol: f64,
    pub max_cg: usize,
    pub transfer_tol: f64,
    pub max_transfers: usize,
    /// Side of the source blocks used for the boundary potential, in cells.
    pub block: usize,
}

impl Default for AmpereOptions {
    fn default() -> Self {
        AmpereOptions { cg_tol: 1e-11, max_cg: 20_000, transfer_tol: 1e-8, max_transfers: 30, block: 4 }
    }
}

/// Minimiser of the quadratic form.
#[derive(Clone, Debug)]
pub struct AmpereSolution {
    /// Node potential divided by `h` (so edge differences are gradients).
    pub phi: Vec<f64>,
    pub a: [Vec<f64>; 3],
    /// `S + a - d phi / h` on kinetic edges, zero elsewhere.
    pub residual_current: [Vec<f64>; 3],
    pub cg_iterations: usize,
    pub transfers: usize,
    /// Relative change of the boundary data at each transfer.
    pub transfer_history: Vec<f64>,
}

struct Layout {
    n: usize,
}

impl Layout {
    fn total(&self) -> usize {
        4 * self.n
    }
}

fn free_edge_mask(domain: &Domain) -> [Vec<bool>; 3] {
    let g = domain.grid;
    let mut m = [vec![false; g.len()], vec![false; g.len()], vec![false; g.len()]];
    for c in 0..3 {
        let mc = &mut m[c];
        g.for_each(Placement::Edge, c, |i, j, k, n| mc[n] = !g.edge_on_boundary(c, i, j, k));
    }
    m
}

/// `M x` for the homogeneous part of the gradient of `Q / h^3`.
fn apply_operator(domain: &Domain, coupling: &[Vec<f64>; 3], x: &[f64], y: &mut [f64], scratch: &mut Scratch) {
    let g = domain.grid;
    let n = g.len();
    let (phi, a) = x.split_at(n);
    let a3 = [a[..n].to_vec(), a[n..2 * n].to_vec(), a[2 * n..].to_vec()];
    curl_edge_raw(&g, &a3, &mut scratch.faces);
    curl_face_raw(&g, &scratch.faces, &mut scratch.edges);
    div_edge_raw(&g, &a3, &mut scratch.nodes);
    g.for_each(Placement::Node, 0, |i, j, k, m| {
        if g.on_boundary(i, j, k) {
            scratch.nodes[m] = 0.0;
        }
    });
    // grad of the masked divergence enters with a minus sign (div = -grad^T)
    grad_node_raw(&g, &scratch.nodes, &mut scratch.edges2);
    y.iter_mut().for_each(|v| *v = 0.0);
    let (yphi, ya) = y.split_at_mut(n);
    for c in 0..3 {
        let base = c * n;
        for m in 0..n {
            ya[base + m] = scratch.edges[c][m] - scratch.edges2[c][m];
        }
    }
    domain.for_each_kinetic_edge(|c, i, j, w| {
        let r = coupling[c][i] * w * (a3[c][i] - (phi[j] - phi[i]));
        ya[c * n + i] += r;
        yphi[i] += r;
        yphi[j] -= r;
    });
}

struct Scratch {
    faces: [Vec<f64>; 3],
    edges: [Vec<f64>; 3],
    edges2: [Vec<f64>; 3],
    nodes: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        let z = || [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        Scratch { faces: z(), edges: z(), edges2: z(), nodes: vec![0.0; n] }
    }
}

/// Solve with free-space boundary transfer.
pub fn solve(p: &AmpereProblem, opts: &AmpereOptions) -> Result<AmpereSolution> {
    let domain = p.domain;
    let g = domain.grid;
    let n = g.len();
    let lay = Layout { n };
    let free = free_edge_mask(domain);
    // diagonal of the operator
    let h = g.h;
    let mut diag = vec![0.0; lay.total()];
    for c in 0..3 {
        let fc = &free[c];
        g.for_each(Placement::Edge, c, |i, j, k, m| {
            if fc[m] {
                let mut d = 4.0 / (h * h);
                let (ti, tj, tk) = (i, j, k);
                let (hi, hj, hk) = g.ijk(m + g.stride(c));
                if !g.on_boundary(ti, tj, tk) {
                    d += 1.0 / (h * h);
                }
                if !g.on_boundary(hi, hj, hk) {
                    d += 1.0 / (h * h);
                }
                diag[n + c * n + m] = d;
            }
        });
    }
    domain.for_each_kinetic_edge(|c, i, j, w| {
        let cw = p.coupling[c][i] * w;
        if free[c][i] {
            diag[n + c * n + i] += cw;
        }
        diag[i] += cw;
        diag[j] += cw;
    });
    // the constant mode of phi is consistent (the source enters as a divergence)
    let mut x = vec![0.0; lay.total()];
    let mut scratch = Scratch::new(n);
    let mut history = Vec::new();
    let mut cg_total = 0;
    let mut transfers = 0;
    let mut y = vec![0.0; lay.total()];
    loop {
        // rhs = -(M x0 + source terms) on free variables, with x0 = current x
        apply_operator(domain, p.coupling, &x, &mut y, &mut scratch);
        let mut rhs: Vec<f64> = y.iter().map(|v| -v).collect();
        domain.for_each_kinetic_edge(|c, i, j, w| {
            let r = p.coupling[c][i] * w * p.source[c][i];
            rhs[n + c * n + i] -= r;
            rhs[i] -= r;
            rhs[j] += r;
        });
        for c in 0..3 {
            for m in 0..n {
                if !free[c][m] {
                    rhs[n + c * n + m] = 0.0;
                }
            }
        }
        let mut dx = vec![0.0; lay.total()];
        let rnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm > 0.0 {
            let mut apply = |v: &[f64], out: &mut [f64]| apply_operator(domain, p.coupling, v, out, &mut scratch);
            let scale = source_scale(p, n);
            let tol = opts.cg_tol * (scale / rnorm).max(1.0);
            let st = pcg(&mut apply, &diag, &rhs, &mut dx, tol.min(0.1), opts.max_cg, "current/potential solve")?;
            cg_total += st.iterations;
        }
        for (a, b) in x.iter_mut().zip(&dx) {
            *a += b;
        }
        // refresh boundary data
        let current = residual_current(domain, p, &x);
        let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        domain.for_each_kinetic_edge(|c, i, _, w| k[c][i] = -p.coupling[c][i] * w * current[c][i]);
        let new_bd = newtonian_on_boundary(domain, &k, opts.block);
        let mut change: f64 = 0.0;
        let mut amax: f64 = 0.0;
        for c in 0..3 {
            for &(m, v) in &new_bd[c] {
                change = change.max((x[n + c * n + m] - v).abs());
                x[n + c * n + m] = v;
            }
        }
        for v in &x[n..] {
            amax = amax.max(v.abs());
        }
        let rel = if amax > 0.0 { change / amax } else { 0.0 };
        history.push(rel);
        transfers += 1;
        if rel < opts.transfer_tol {
            // final interior solve with converged boundary data
            apply_operator(domain, p.coupling, &x, &mut y, &mut scratch);
            let mut rhs: Vec<f64> = y.iter().map(|v| -v).collect();
            domain.for_each_kinetic_edge(|c, i, j, w| {
                let r = p.coupling[c][i] * w * p.source[c][i];
                rhs[n + c * n + i] -= r;
                rhs[i] -= r;
                rhs[j] += r;
            });
            for c in 0..3 {
                for m in 0..n {
                    if !free[c][m] {
                        rhs[n + c * n + m] = 0.0;
                    }
                }
            }
            let rnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm > 0.0 {
                let mut dx = vec![0.0; lay.total()];
                let mut apply = |v: &[f64], out: &mut [f64]| apply_operator(domain, p.coupling, v, out, &mut scratch);
                let scale = source_scale(p, n);
                let tol = opts.cg_tol * (scale / rnorm).max(1.0);
                let st = pcg(&mut apply, &diag, &rhs, &mut dx, tol.min(0.1), opts.max_cg, "current/potential solve")?;
                cg_total += st.iterations;
                for (a, b) in x.iter_mut().zip(&dx) {
                    *a += b;
                }
            }
            break;
        }
        if transfers >= opts.max_transfers {
            return Err(GlError::NoConvergence {
                what: format!("boundary transfer (history {history:?})"),
                iterations: transfers,
                residual: rel,
            });
        }
        if history.len() >= 4 && rel > 0.9 * history[history.len() - 2] && rel > 1e-4 {
            return Err(GlError::Numerical(format!("boundary transfer is not contracting: {history:?}")));
        }
    }
    let current = residual_current(domain, p, &x);
    let phi = x[..n].to_vec();
    let a = [x[n..2 * n].to_vec(), x[2 * n..3 * n].to_vec(), x[3 * n..].to_vec()];
    Ok(AmpereSolution { phi, a, residual_current: current, cg_iterations: cg_total, transfers, transfer_history: history })
}

/// Size of the source term, used to set an absolute CG tolerance.
fn source_scale(p: &AmpereProblem, n: usize) -> f64 {
    let mut s = 0.0;
    p.domain.for_each_kinetic_edge(|c, i, _, w| {
        let v = p.coupling[c][i] * w * p.source[c][i];
        s += 3.0 * v * v;
    });
    let _ = n;
    s.sqrt()
}

fn residual_current(domain: &Domain, p: &AmpereProblem, x: &[f64]) -> [Vec<f64>; 3] {
    let n = domain.grid.len();
    let mut r = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    domain.for_each_kinetic_edge(|c, i, j, _| {
        r[c][i] = p.source[c][i] + x[n + c * n + i] - (x[j] - x[i]);
    });
    r
}

/// Newtonian potential `sum_e K_e h^3 / (4 pi |x - y_e|)` at box-surface edge
/// midpoints, from monopole and dipole moments of `block^3` source blocks.
pub fn newtonian_on_boundary(domain: &Domain, k: &[Vec<f64>; 3], block: usize) -> [Vec<(usize, f64)>; 3] {
    let g = domain.grid;
    let h3 = g.h.powi(3);
    let b = block.max(1);
    let nb = [(g.dims[0] + b - 1) / b, (g.dims[1] + b - 1) / b, (g.dims[2] + b - 1) / b];
    let mut out: [Vec<(usize, f64)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for c in 0..3 {
        // monopole, dipole and quadrupole moments per block about its centre
        let nbt = nb[0] * nb[1] * nb[2];
        let center_of = |bi: usize| -> Vec3 {
            let bx = bi % nb[0];
            let by = (bi / nb[0]) % nb[1];
            let bz = bi / (nb[0] * nb[1]);
            g.origin()
                + g.h * Vec3::new(
                    (bx * b) as f64 + 0.5 * (b as f64 - 1.0),
                    (by * b) as f64 + 0.5 * (b as f64 - 1.0),
                    (bz * b) as f64 + 0.5 * (b as f64 - 1.0),
                )
        };
        let mut q = vec![0.0; nbt];
        let mut dip = vec![Vec3::zeros(); nbt];
        let mut quad = vec![nalgebra::Matrix3::<f64>::zeros(); nbt];
        g.for_each(Placement::Edge, c, |i, j, kk, m| {
            let v = k[c][m];
            if v != 0.0 {
                let bi = i / b + nb[0] * (j / b + nb[1] * (kk / b));
                let y = g.position(Placement::Edge, c, i, j, kk) - center_of(bi);
                q[bi] += v * h3;
                dip[bi] += v * h3 * y;
                quad[bi] += v * h3 * y * y.transpose();
            }
        });
        let centers: Vec<(Vec3, f64, Vec3, nalgebra::Matrix3<f64>)> = (0..nbt)
            .filter(|&bi| q[bi] != 0.0 || dip[bi] != Vec3::zeros() || quad[bi] != nalgebra::Matrix3::zeros())
            .map(|bi| (center_of(bi), q[bi], dip[bi], quad[bi]))
            .collect();
        let inv4pi = 1.0 / (4.0 * std::f64::consts::PI);
        g.for_each(Placement::Edge, c, |i, j, kk, m| {
            if !g.edge_on_boundary(c, i, j, kk) {
                return;
            }
            let x = g.position(Placement::Edge, c, i, j, kk);
            let mut s = 0.0;
            for (ctr, qq, dp, qd) in &centers {
                let d = x - ctr;
                let r2 = d.norm_squared();
                let r = r2.sqrt();
                let r3 = r2 * r;
                let dqd = d.dot(&(qd * d));
                s += qq / r + dp.dot(&d) / r3 + (3.0 * dqd - r2 * qd.trace()) / (2.0 * r3 * r2);
            }
            out[c].push((m, s * inv4pi));
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_source_gives_zero_solution() {
        let d = Domain::ball(Vec3::zeros(), 1.0, 8, 3).unwrap();
        let n = d.grid.len();
        let z = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let one = [vec![1.0; n], vec![1.0; n], vec![1.0; n]];
        let s = solve(&AmpereProblem { domain: &d, source: &z, coupling: &one }, &AmpereOptions::default()).unwrap();
        assert!(s.a.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn block_moments_match_direct_sum() {
        let d = Domain::ball(Vec3::zeros(), 1.0, 16, 8).unwrap();
        let g = d.grid;
        let n = g.len();
        let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        d.for_each_kinetic_edge(|c, i, _, _| {
            let (a, b, cc) = g.ijk(i);
            k[c][i] = ((a + 2 * b + 3 * cc + c) % 5) as f64 - 2.0;
        });
        let approx = newtonian_on_boundary(&d, &k, 4);
        let h3 = g.h.powi(3);
        for c in 0..3 {
            let mut scale: f64 = 0.0;
            let mut worst: f64 = 0.0;
            for &(m, v) in &approx[c] {
                let (i, j, kk) = g.ijk(m);
                let x = g.position(Placement::Edge, c, i, j, kk);
                let mut direct = 0.0;
                g.for_each(Placement::Edge, c, |a, b, e, q| {
                    if k[c][q] != 0.0 {
                        direct += k[c][q] * h3 / (x - g.position(Placement::Edge, c, a, b, e)).norm();
                    }
                });
                direct /= 4.0 * std::f64::consts::PI;
                scale = scale.max(direct.abs());
                worst = worst.max((v - direct).abs());
            }
            assert!(worst < 0.02 * scale, "component {c}: {worst} vs {scale}");
        }
    }
}

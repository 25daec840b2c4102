//! Constrained Meissner state.
//!
//! With `|u| = rho` fixed the Ginzburg-Landau energy at unit intensity is
//! `J0 = 1/2 int rho^2 |A0 - grad phi0|^2 + 1/2 int |curl A0 - H0|^2`. It is
//! minimised with the shared current/potential solver, writing
//! `A0 = A_ex + a` where `curl A_ex = H0`. The induced field then satisfies
//! `curl^T curl a = -J0` with `J0 = w rho rho W`, `W = A0 - grad phi0`.
//!
//! `B0 = -curl a + grad psi` on faces. `psi` is integrated along faces
//! outside the domain so that `B0` vanishes there exactly, and is harmonic
//! on interior cells. Then `curl^T B0 = J0` on every interior edge, which is
//! the discrete form of `A0 - grad phi0 = curl B0 / rho^2`.

use crate::ampere::{self, AmpereOptions, AmpereProblem};
use crate::error::{GlError, Result};
use crate::grid::{curl_edge_raw, curl_face_raw, div_face_raw, Domain, Placement, ScalarField, VectorField, Vec3};
use crate::linalg::pcg;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Uniform applied field `h_ex * H0`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AppliedField {
    pub direction: [f64; 3],
    pub h_ex: f64,
}

impl AppliedField {
    pub fn uniform(direction: Vec3, h_ex: f64) -> Result<Self> {
        if !(direction.norm() > 0.0) || !h_ex.is_finite() {
            return Err(GlError::Config("applied field needs a non-zero direction and finite intensity".into()));
        }
        Ok(AppliedField { direction: [direction.x, direction.y, direction.z], h_ex })
    }

    pub fn h0(&self) -> Vec3 {
        Vec3::from(self.direction)
    }

    /// Vector potential `1/2 H0 x (x - c)` of the unit-intensity field.
    pub fn potential(&self, x: &Vec3, center: &Vec3) -> Vec3 {
        0.5 * self.h0().cross(&(x - center))
    }
}

/// Diagnostics recomputed from the final fields.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MeissnerResiduals {
    /// `max |curl^T B0 - w rho rho W|` over interior edges, relative to `max |J0|`.
    pub relation: f64,
    /// `max |div B0|` over interior in-cells, relative to `max |B0| / h`.
    pub divergence: f64,
    /// `max |B0|` on faces outside the domain, relative to `max |B0|`.
    pub tangential_trace: f64,
    /// `max |B0 - grad psi - (H0 - curl A0)|` on faces, relative to `max |B0|`.
    pub closure: f64,
    /// Discrete `L4` norm of `curl B0` over the domain.
    pub curl_b0_l4: f64,
    pub cg_iterations: usize,
    pub transfers: usize,
}

/// Unit-intensity Meissner fields.
#[derive(Clone, Debug)]
pub struct MeissnerState {
    pub applied: AppliedField,
    /// Induced potential `a = A0 - A_ex` on the box.
    pub a: VectorField,
    /// `A0` on the box.
    pub a0: VectorField,
    /// `grad phi0` on kinetic edges.
    pub grad_phi0: VectorField,
    /// `W = A0 - grad phi0` on kinetic edges.
    pub w: VectorField,
    /// `B0` on faces.
    pub b0: VectorField,
    /// Cell potential closing `B0`.
    pub psi: ScalarField,
    /// `J0` at unit intensity.
    pub energy: f64,
    pub residuals: MeissnerResiduals,
}

/// Solve for the Meissner state with weight `rho` (node field) at unit intensity.
pub fn solve_b0(rho: &ScalarField, applied: &AppliedField, domain: &Domain, opts: &AmpereOptions) -> Result<MeissnerState> {
    let g = domain.grid;
    if rho.grid != g || rho.placement != Placement::Node {
        return Err(GlError::Grid("weight must be a node field on the domain grid".into()));
    }
    let n = g.len();
    let center = domain.shape.center();
    let a_ex = VectorField::from_fn(g, Placement::Edge, |x| applied.potential(&x, &center));
    let mut source = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut coupling = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    domain.for_each_kinetic_edge(|c, i, j, _| {
        source[c][i] = a_ex.comps[c][i];
        coupling[c][i] = rho.values[i] * rho.values[j];
    });
    let sol = ampere::solve(&AmpereProblem { domain, source: &source, coupling: &coupling }, opts)?;
    let a = VectorField { grid: g, placement: Placement::Edge, comps: sol.a.clone() };
    let mut a0 = a_ex.clone();
    a0.axpy(1.0, &a);
    let mut grad_phi0 = VectorField::zeros(g, Placement::Edge);
    let mut w = VectorField::zeros(g, Placement::Edge);
    let mut kin_energy = 0.0;
    let h3 = g.h.powi(3);
    domain.for_each_kinetic_edge(|c, i, j, wt| {
        grad_phi0.comps[c][i] = sol.phi[j] - sol.phi[i];
        w.comps[c][i] = sol.residual_current[c][i];
        kin_energy += 0.5 * wt * coupling[c][i] * h3 * w.comps[c][i].powi(2);
    });
    let mut curl_a = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    curl_edge_raw(&g, &a.comps, &mut curl_a);
    let mag_energy = 0.5 * h3 * curl_a.iter().flatten().map(|v| v * v).sum::<f64>();
    let psi = close_with_potential(domain, &curl_a)?;
    let mut b0 = VectorField::zeros(g, Placement::Face);
    let mut gpsi = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    crate::grid::grad_cell_raw(&g, &psi, &mut gpsi);
    for c in 0..3 {
        let bc = &mut b0.comps[c];
        g.for_each(Placement::Face, c, |i, j, k, m| {
            if domain.face_in(c, i, j, k) {
                bc[m] = -curl_a[c][m] + gpsi[c][m];
            }
        });
    }
    let mut st = MeissnerState {
        applied: applied.clone(),
        a,
        a0,
        grad_phi0,
        w,
        b0,
        psi: ScalarField { grid: g, placement: Placement::Cell, values: psi },
        energy: kin_energy + mag_energy,
        residuals: MeissnerResiduals::default(),
    };
    st.residuals = check(&st, rho, domain);
    st.residuals.cg_iterations = sol.cg_iterations;
    st.residuals.transfers = sol.transfers;
    Ok(st)
}

/// Cells touching a face outside the domain get `psi` by integrating `curl a`
/// along such faces; the remaining cells solve the discrete Laplace equation.
fn close_with_potential(domain: &Domain, curl_a: &[Vec<f64>; 3]) -> Result<Vec<f64>> {
    let g = domain.grid;
    let n = g.len();
    let h = g.h;
    let mut psi = vec![0.0; n];
    let mut fixed = vec![false; n];
    let cell_valid = |i: usize, j: usize, k: usize| g.valid(Placement::Cell, 0, i, j, k);
    // interior face between cells m - s and m along axis c, outside the domain
    let out_face = |c: usize, m: usize| -> bool {
        let (i, j, k) = g.ijk(m);
        g.valid(Placement::Face, c, i, j, k) && !g.face_on_boundary(c, i, j, k) && !domain.face_in(c, i, j, k)
    };
    let mut queue = VecDeque::new();
    let mut cells_seen = 0usize;
    g.for_each(Placement::Cell, 0, |i, j, k, m| {
        if fixed[m] || domain.cell_in(m) {
            return;
        }
        // seed every component of out-cells (normally one)
        fixed[m] = true;
        cells_seen += 1;
        let _ = (i, j, k);
        queue.push_back(m);
        while let Some(cur) = queue.pop_front() {
            let (ci, cj, ck) = g.ijk(cur);
            let ijk = [ci, cj, ck];
            for c in 0..3 {
                let s = g.stride(c);
                // neighbour above across face at cur + s
                if ijk[c] + 1 < g.dims[c] && {
                    let mut t = ijk;
                    t[c] += 1;
                    cell_valid(t[0], t[1], t[2])
                } && out_face(c, cur + s)
                    && !fixed[cur + s]
                {
                    psi[cur + s] = psi[cur] + h * curl_a[c][cur + s];
                    fixed[cur + s] = true;
                    queue.push_back(cur + s);
                }
                // neighbour below across face at cur
                if ijk[c] > 0 && out_face(c, cur) && !fixed[cur - s] {
                    psi[cur - s] = psi[cur] - h * curl_a[c][cur];
                    fixed[cur - s] = true;
                    queue.push_back(cur - s);
                }
            }
        }
    });
    if cells_seen == 0 {
        return Err(GlError::Geometry("the domain leaves no exterior cells in the box".into()));
    }
    // harmonic extension into the remaining cells
    let free: Vec<bool> = (0..n)
        .map(|m| {
            let (i, j, k) = g.ijk(m);
            cell_valid(i, j, k) && !fixed[m]
        })
        .collect();
    if !free.iter().any(|&b| b) {
        return Ok(psi);
    }
    let lap = |x: &[f64], y: &mut [f64]| {
        for m in 0..n {
            y[m] = 0.0;
            if !free[m] {
                continue;
            }
            let (i, j, k) = g.ijk(m);
            let ijk = [i, j, k];
            let mut s = 0.0;
            for c in 0..3 {
                let st = g.stride(c);
                let up = if ijk[c] + 2 < g.dims[c] && free[m + st] { x[m + st] } else { 0.0 };
                let dn = if ijk[c] > 0 && free[m - st] { x[m - st] } else { 0.0 };
                s += 2.0 * x[m] - up - dn;
            }
            y[m] = s;
        }
    };
    let mut rhs = vec![0.0; n];
    let diag: Vec<f64> = free.iter().map(|&f| if f { 6.0 } else { 0.0 }).collect();
    for m in 0..n {
        if !free[m] {
            continue;
        }
        let (i, j, k) = g.ijk(m);
        let ijk = [i, j, k];
        for c in 0..3 {
            let st = g.stride(c);
            if ijk[c] + 2 < g.dims[c] && !free[m + st] {
                rhs[m] += psi[m + st];
            }
            if ijk[c] > 0 && !free[m - st] {
                rhs[m] += psi[m - st];
            }
        }
    }
    let mut x = vec![0.0; n];
    let mut apply = lap;
    pcg(&mut apply, &diag, &rhs, &mut x, 1e-13, 20_000, "Meissner closure potential")?;
    for m in 0..n {
        if free[m] {
            psi[m] = x[m];
        }
    }
    Ok(psi)
}

/// Recompute the invariants from the stored fields with independent operators.
pub fn check(st: &MeissnerState, rho: &ScalarField, domain: &Domain) -> MeissnerResiduals {
    let g = domain.grid;
    let n = g.len();
    let h = g.h;
    let mut cb = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    curl_face_raw(&g, &st.b0.comps, &mut cb);
    let mut jmax: f64 = 0.0;
    let mut rel: f64 = 0.0;
    let mut l4 = 0.0;
    for c in 0..3 {
        g.for_each(Placement::Edge, c, |i, j, k, m| {
            if g.edge_on_boundary(c, i, j, k) {
                return;
            }
            let w = domain.edge_weight(c, m);
            let j0 = if w > 0.0 { w * rho.values[m] * rho.values[m + g.stride(c)] * st.w.comps[c][m] } else { 0.0 };
            jmax = jmax.max(j0.abs());
            rel = rel.max((cb[c][m] - j0).abs());
            l4 += w * h.powi(3) * cb[c][m].powi(4);
        });
    }
    let mut dv = vec![0.0; n];
    div_face_raw(&g, &st.b0.comps, &mut dv);
    let bmax = st.b0.max_abs().max(1e-300);
    let mut dmax: f64 = 0.0;
    let mut trace: f64 = 0.0;
    let mut curl_a0 = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    curl_edge_raw(&g, &st.a0.comps, &mut curl_a0);
    let mut gpsi = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    crate::grid::grad_cell_raw(&g, &st.psi.values, &mut gpsi);
    let h0 = st.applied.h0();
    let mut closure: f64 = 0.0;
    g.for_each(Placement::Cell, 0, |i, j, k, m| {
        let all_in = (0..3).all(|c| {
            let mut t = [i, j, k];
            let lo = domain.face_in(c, t[0], t[1], t[2]);
            t[c] += 1;
            lo && domain.face_in(c, t[0], t[1], t[2])
        });
        if all_in {
            dmax = dmax.max(dv[m].abs());
        }
    });
    for c in 0..3 {
        g.for_each(Placement::Face, c, |i, j, k, m| {
            if g.face_on_boundary(c, i, j, k) {
                return;
            }
            if domain.face_in(c, i, j, k) {
                closure = closure.max((st.b0.comps[c][m] - gpsi[c][m] - (h0[c] - curl_a0[c][m])).abs());
            } else {
                trace = trace.max(st.b0.comps[c][m].abs());
            }
        });
    }
    MeissnerResiduals {
        relation: rel / jmax.max(1e-300),
        divergence: dmax * h / bmax,
        tangential_trace: trace / bmax,
        closure: closure / bmax,
        curl_b0_l4: l4.powf(0.25),
        cg_iterations: 0,
        transfers: 0,
    }
}

/// Energy of the Meissner configuration at intensity `h_ex`.
pub fn meissner_energy(st: &MeissnerState, h_ex: f64) -> f64 {
    h_ex * h_ex * st.energy
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball_state(cells: usize) -> (Domain, MeissnerState) {
        let d = Domain::ball(Vec3::zeros(), 1.0, cells, 6).unwrap();
        let rho = ScalarField::constant(d.grid, Placement::Node, 1.0);
        let ap = AppliedField::uniform(Vec3::z(), 1.0).unwrap();
        let st = solve_b0(&rho, &ap, &d, &AmpereOptions::default()).unwrap();
        (d, st)
    }

    #[test]
    fn invariants_hold_on_ball() {
        let (_, st) = ball_state(16);
        let r = &st.residuals;
        assert!(r.relation < 1e-8, "{r:?}");
        assert!(r.divergence < 1e-8, "{r:?}");
        assert_eq!(r.tangential_trace, 0.0);
        assert!(r.closure < 1e-12, "{r:?}");
        assert!(st.energy > 0.0);
    }

    #[test]
    fn field_is_symmetric_under_quarter_turn() {
        let (d, st) = ball_state(16);
        let mut worst: f64 = 0.0;
        for &(x, y, z) in &[(0.3, 0.1, 0.2), (0.5, -0.2, -0.4), (0.0, 0.6, 0.1)] {
            let p = Vec3::new(x, y, z);
            let q = Vec3::new(-y, x, z);
            let b = st.b0.sample(&p);
            let bq = st.b0.sample(&q);
            let rot = Vec3::new(-b.y, b.x, b.z);
            worst = worst.max((rot - bq).norm());
        }
        assert!(worst < 1e-2 * st.b0.max_abs(), "{worst}");
        let _ = d;
    }

    #[test]
    fn energy_is_quadratic_in_intensity() {
        let (_, st) = ball_state(12);
        assert_eq!(meissner_energy(&st, 0.0), 0.0);
        assert_eq!(meissner_energy(&st, 2.0), 4.0 * meissner_energy(&st, 1.0));
    }
}

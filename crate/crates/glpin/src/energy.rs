//! Lattice energies, vorticity and the energy splitting.
//!
//! Kinetic terms use link variables: the edge from node `i` to node `j`
//! contributes `1/2 w h c |u_j e^{-i h A_e} - u_i|^2` with `c = rho_i rho_j`
//! and `w` the staircase edge weight. Gauge transformations
//! `u -> u e^{i Phi}`, `A -> A + grad Phi` leave every functional unchanged
//! up to rounding.

use crate::construction::TestConfiguration;
use crate::error::{GlError, Result};
use crate::geometry::PolyCurve;
use crate::grid::{curl_edge_raw, ComplexField, Domain, Placement, ScalarField, VectorField, Vec3};
use crate::meissner::{AppliedField, MeissnerState};
use crate::pinning::rho_energy;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Terms of a Ginzburg-Landau type functional.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct EnergyReport {
    pub kinetic: f64,
    pub potential: f64,
    pub magnetic: f64,
    pub total: f64,
    /// Kinetic and potential parts inside the tube (edges touching a tube node, tube nodes).
    pub kinetic_tube: f64,
    pub potential_tube: f64,
    pub kinetic_exterior: f64,
    pub potential_exterior: f64,
    /// Largest `|curl A|` on faces touching the box surface relative to the largest overall.
    pub magnetic_edge_ratio: f64,
    pub note: String,
}

fn check_same(u: &ComplexField, a: &VectorField, domain: &Domain) -> Result<()> {
    if u.grid != domain.grid || a.grid != domain.grid || a.placement != Placement::Edge {
        return Err(GlError::Grid("fields must live on the domain grid (u on nodes, A on edges)".into()));
    }
    Ok(())
}

/// Link difference `u_j e^{-i h A} - u_i`.
#[inline]
fn link(u_i: Complex64, u_j: Complex64, h: f64, a: f64) -> Complex64 {
    u_j * Complex64::from_polar(1.0, -h * a) - u_i
}

/// `1/2 sum_f h^3 |curl a - b|^2` over the box (faces on the box surface at
/// half weight) and the edge-ratio diagnostic.
fn magnetic(a: &VectorField, background: Vec3) -> (f64, f64) {
    let g = a.grid;
    let n = g.len();
    let mut f = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    curl_edge_raw(&g, &a.comps, &mut f);
    let mut e = 0.0;
    let mut max_all: f64 = 0.0;
    let mut max_edge: f64 = 0.0;
    for c in 0..3 {
        let fc = &f[c];
        g.for_each(Placement::Face, c, |i, j, k, m| {
            let v = fc[m] - background[c];
            e += if g.face_on_boundary(c, i, j, k) { 0.5 * v * v } else { v * v };
            max_all = max_all.max(v.abs());
            let ijk = [i, j, k];
            if (0..3).any(|d| ijk[d] == 0 || ijk[d] + 2 >= g.dims[d]) {
                max_edge = max_edge.max(v.abs());
            }
        });
    }
    (0.5 * g.h.powi(3) * e, if max_all > 0.0 { max_edge / max_all } else { 0.0 })
}

/// `F(u, A) = 1/2 int rho^2 |grad_A u|^2 + int rho^4 (1 - |u|^2)^2 / (4 eps^2) + 1/2 int |curl A|^2`.
///
/// `magnetic_override` replaces the box magnetic term (used when `A` was
/// resampled from a coarser grid). `in_tube` selects the tube split.
pub fn free_energy_fields(
    u: &ComplexField,
    a: &VectorField,
    rho: &ScalarField,
    eps: f64,
    domain: &Domain,
    magnetic_override: Option<f64>,
    in_tube: Option<&[bool]>,
) -> Result<EnergyReport> {
    check_same(u, a, domain)?;
    let g = domain.grid;
    let h = g.h;
    let h3 = h.powi(3);
    let tube = |m: usize| in_tube.map_or(false, |t| t[m]);
    let (mut kt, mut ke) = (0.0, 0.0);
    domain.for_each_kinetic_edge(|c, i, j, w| {
        let d = link(u.values[i], u.values[j], h, a.comps[c][i]).norm_sqr();
        let e = 0.5 * w * h * rho.values[i] * rho.values[j] * d;
        if tube(i) || tube(j) {
            kt += e;
        } else {
            ke += e;
        }
    });
    let (mut pt, mut pe) = (0.0, 0.0);
    for m in 0..g.len() {
        let wn = domain.node_weight(m);
        if wn > 0.0 {
            let q = 1.0 - u.values[m].norm_sqr();
            let e = wn * h3 * rho.values[m].powi(4) * q * q / (4.0 * eps * eps);
            if tube(m) {
                pt += e;
            } else {
                pe += e;
            }
        }
    }
    let (mag, edge_ratio) = match magnetic_override {
        Some(v) => (v, f64::NAN),
        None => magnetic(a, Vec3::zeros()),
    };
    let kinetic = kt + ke;
    let potential = pt + pe;
    Ok(EnergyReport {
        kinetic,
        potential,
        magnetic: mag,
        total: kinetic + potential + mag,
        kinetic_tube: kt,
        potential_tube: pt,
        kinetic_exterior: ke,
        potential_exterior: pe,
        magnetic_edge_ratio: edge_ratio,
        note: "potential coefficient rho^4/(4 eps^2)".into(),
    })
}

/// Free energy of a test configuration.
pub fn free_energy(cfg: &TestConfiguration, rho: &ScalarField, domain: &Domain) -> Result<EnergyReport> {
    free_energy_fields(&cfg.u, &cfg.a, rho, cfg.meta.eps, domain, cfg.magnetic_energy, Some(&cfg.in_tube))
}

/// Full functional `1/2 int |grad_A u|^2 + (2 eps^2)^-1 * 1/2 int (a - |u|^2)^2 + 1/2 int |curl A - H_ex|^2`.
pub fn full_gl(
    u: &ComplexField,
    a: &VectorField,
    a_eps: &ScalarField,
    eps: f64,
    applied: &AppliedField,
    domain: &Domain,
) -> Result<EnergyReport> {
    check_same(u, a, domain)?;
    let g = domain.grid;
    let h = g.h;
    let h3 = h.powi(3);
    let mut kin = 0.0;
    domain.for_each_kinetic_edge(|c, i, j, w| {
        kin += 0.5 * w * h * link(u.values[i], u.values[j], h, a.comps[c][i]).norm_sqr();
    });
    let mut pot = 0.0;
    for m in 0..g.len() {
        let wn = domain.node_weight(m);
        if wn > 0.0 {
            let q = a_eps.values[m] - u.values[m].norm_sqr();
            pot += wn * h3 * 0.5 * q * q / (2.0 * eps * eps);
        }
    }
    let (mag, ratio) = magnetic(a, applied.h0() * applied.h_ex);
    Ok(EnergyReport {
        kinetic: kin,
        potential: pot,
        magnetic: mag,
        total: kin + pot + mag,
        kinetic_exterior: kin,
        potential_exterior: pot,
        magnetic_edge_ratio: ratio,
        note: "potential coefficient (2 eps^2)^-1 applied to (a - |u|^2)^2 / 2".into(),
        ..Default::default()
    })
}

/// Plaquette vorticity on in-faces.
#[derive(Clone, Debug)]
pub struct VorticityField {
    /// `curl j + curl A` with the link current `j_e = Im(u_j e^{-ihA} conj(u_i)) / h`.
    pub current: VectorField,
    /// Wrapped link phases summed around each plaquette over `h^2`, plus `curl A`.
    pub winding_form: VectorField,
    /// Nonzero integer windings `(comp, face, n)`.
    pub windings: Vec<(usize, usize, i64)>,
    /// Winding plaquettes with an edge whose two endpoints vanish.
    pub indeterminate: usize,
}

/// Vorticity `mu(u, A)`.
pub fn vorticity(u: &ComplexField, a: &VectorField, domain: &Domain) -> Result<VorticityField> {
    check_same(u, a, domain)?;
    let g = domain.grid;
    let n = g.len();
    let h = g.h;
    let mut jcur = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut ang = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut dead = [vec![false; n], vec![false; n], vec![false; n]];
    domain.for_each_kinetic_edge(|c, i, j, _| {
        let z = u.values[j] * Complex64::from_polar(1.0, -h * a.comps[c][i]) * u.values[i].conj();
        jcur[c][i] = z.im / h;
        ang[c][i] = z.arg();
        dead[c][i] = u.values[i].norm() == 0.0 && u.values[j].norm() == 0.0;
    });
    let mut ca = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    curl_edge_raw(&g, &a.comps, &mut ca);
    let mut cj = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    curl_edge_raw(&g, &jcur, &mut cj);
    let mut current = VectorField::zeros(g, Placement::Face);
    let mut winding_form = VectorField::zeros(g, Placement::Face);
    let mut windings = Vec::new();
    let mut indeterminate = 0;
    for c in 0..3 {
        let p = (c + 1) % 3;
        let q = (c + 2) % 3;
        let (sp, sq) = (g.stride(p), g.stride(q));
        g.for_each(Placement::Face, c, |i, j, k, m| {
            if !domain.face_in(c, i, j, k) {
                return;
            }
            current.comps[c][m] = cj[c][m] + ca[c][m];
            // boundary of the face: +p edge at m, +q edge at m + sp, -p edge at m + sq, -q edge at m
            let s = ang[p][m] + ang[q][m + sp] - ang[p][m + sq] - ang[q][m];
            winding_form.comps[c][m] = s / (h * h) + ca[c][m];
            let wnd = ((s + h * h * ca[c][m]) / (2.0 * PI)).round() as i64;
            if wnd != 0 {
                windings.push((c, m, wnd));
                if dead[p][m] || dead[q][m + sp] || dead[p][m + sq] || dead[q][m] {
                    indeterminate += 1;
                }
            }
        });
    }
    Ok(VorticityField { current, winding_form, windings, indeterminate })
}

/// `sum_f h^3 mu_f B_f` over in-faces.
pub fn pairing(mu: &VectorField, b: &VectorField, domain: &Domain) -> f64 {
    let g = domain.grid;
    let mut s = 0.0;
    for c in 0..3 {
        g.for_each(Placement::Face, c, |i, j, k, m| {
            if domain.face_in(c, i, j, k) {
                s += mu.comps[c][m] * b.comps[c][m];
            }
        });
    }
    s * g.h.powi(3)
}

/// Sparse polynomial in three variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    pub terms: Vec<(f64, [u32; 3])>,
}

impl Poly {
    pub fn monomial(c: f64, e: [u32; 3]) -> Self {
        Poly { terms: vec![(c, e)] }
    }

    pub fn eval(&self, x: &Vec3) -> f64 {
        self.terms.iter().map(|(c, e)| c * x.x.powi(e[0] as i32) * x.y.powi(e[1] as i32) * x.z.powi(e[2] as i32)).sum()
    }

    pub fn derivative(&self, axis: usize) -> Poly {
        let terms = self
            .terms
            .iter()
            .filter(|(_, e)| e[axis] > 0)
            .map(|(c, e)| {
                let mut f = *e;
                f[axis] -= 1;
                (c * e[axis] as f64, f)
            })
            .collect();
        Poly { terms }.simplified()
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut terms = Vec::new();
        for (a, ea) in &self.terms {
            for (b, eb) in &o.terms {
                terms.push((a * b, [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]]));
            }
        }
        Poly { terms }.simplified()
    }

    fn simplified(mut self) -> Poly {
        self.terms.sort_by_key(|t| t.1);
        let mut out: Vec<(f64, [u32; 3])> = Vec::new();
        for (c, e) in self.terms {
            match out.last_mut() {
                Some(l) if l.1 == e => l.0 += c,
                _ => out.push((c, e)),
            }
        }
        out.retain(|t| t.0 != 0.0);
        Poly { terms: out }
    }

    /// Upper bound of `|p|` on the ball `|x - center| <= r`, by expanding about the centre.
    pub fn bound_on_ball(&self, center: &Vec3, r: f64) -> f64 {
        self.shifted(center).terms.iter().map(|(c, e)| c.abs() * r.powi((e[0] + e[1] + e[2]) as i32)).sum()
    }

    /// `q(y) = p(y + center)`.
    pub fn shifted(&self, center: &Vec3) -> Poly {
        let mut out = Poly { terms: Vec::new() };
        for (c, e) in &self.terms {
            let mut t = Poly::monomial(*c, [0, 0, 0]);
            for a in 0..3 {
                let mut unit = [0, 0, 0];
                unit[a] = 1;
                let lin = Poly { terms: vec![(center[a], [0, 0, 0]), (1.0, unit)] }.simplified();
                for _ in 0..e[a] {
                    t = t.mul(&lin);
                }
            }
            out.terms.extend(t.terms);
        }
        out.simplified()
    }
}

/// `|x - c|^2 - R^2`.
fn sphere_poly(center: &Vec3, radius: f64) -> Poly {
    let mut r2 = Poly { terms: vec![(-radius * radius + center.norm_squared(), [0, 0, 0])] };
    for a in 0..3 {
        let mut e = [0, 0, 0];
        e[a] = 2;
        r2.terms.push((1.0, e));
        let mut e1 = [0, 0, 0];
        e1[a] = 1;
        r2.terms.push((-2.0 * center[a], e1));
    }
    r2.simplified()
}

/// Smooth test field on a ball, `B = grad((|x - c|^2 - R^2) q)`, normal on the sphere.
#[derive(Clone, Debug)]
pub struct TestField {
    pub comps: [Poly; 3],
    /// Certified bounds of `sup |B|` and of the Lipschitz constant on the ball.
    pub sup: f64,
    pub lipschitz: f64,
}

impl TestField {
    pub fn from_potential_factor(q: &Poly, center: &Vec3, radius: f64) -> Self {
        let p = sphere_poly(center, radius).mul(q);
        Self::with_bounds([p.derivative(0), p.derivative(1), p.derivative(2)], center, radius)
    }

    /// `B = (1 - |x - c|^2 / R^2) v`, vanishing on the sphere.
    pub fn from_vector_factor(v: &[Poly; 3], center: &Vec3, radius: f64) -> Self {
        let r2 = sphere_poly(center, radius);
        let cut = Poly { terms: r2.terms.iter().map(|&(c, e)| (-c / (radius * radius), e)).collect() };
        let comps = [cut.mul(&v[0]), cut.mul(&v[1]), cut.mul(&v[2])];
        Self::with_bounds(comps, center, radius)
    }

    fn with_bounds(comps: [Poly; 3], center: &Vec3, radius: f64) -> Self {
        let sup = comps.iter().map(|c| c.bound_on_ball(center, radius).powi(2)).sum::<f64>().sqrt();
        let mut lip2 = 0.0;
        for c in &comps {
            for a in 0..3 {
                lip2 += c.derivative(a).bound_on_ball(center, radius).powi(2);
            }
        }
        TestField { comps, sup, lipschitz: lip2.sqrt() }
    }

    pub fn eval(&self, x: &Vec3) -> Vec3 {
        Vec3::new(self.comps[0].eval(x), self.comps[1].eval(x), self.comps[2].eval(x))
    }

    /// Certified upper bound of the `C^{0,beta}` norm: `M + L^beta (2M)^{1-beta}`.
    pub fn holder_norm(&self, beta: f64) -> f64 {
        if beta == 0.0 {
            return self.sup;
        }
        self.sup + self.lipschitz.powf(beta) * (2.0 * self.sup).powf(1.0 - beta)
    }

    /// Face samples on a grid.
    pub fn on_faces(&self, g: &crate::grid::Grid) -> VectorField {
        VectorField::from_fn(*g, Placement::Face, |x| self.eval(&x))
    }

    /// `2 pi int_G B . dl` by three-point Gauss quadrature per segment.
    pub fn curve_term(&self, curve: &PolyCurve) -> f64 {
        2.0 * PI * curve.circulation(None, f64::INFINITY, |x| self.eval(x))
    }
}

/// Library of `count` test fields on the ball: `q` runs over monomials of degree
/// at most 3 and then random cubic combinations from `seed`.
pub fn test_field_library(center: &Vec3, radius: f64, count: usize, seed: u64) -> Vec<TestField> {
    let mut monos = Vec::new();
    for d in 0..=3u32 {
        for a in 0..=d {
            for b in 0..=(d - a) {
                monos.push([a, b, d - a - b]);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let q = if k < monos.len() {
            // monomials in the coordinates relative to the centre, scaled to the ball
            let e = monos[k];
            let deg = e[0] + e[1] + e[2];
            Poly::monomial(radius.powi(-(deg as i32)), e).shifted(&(-center))
        } else {
            let mut terms = Vec::new();
            for e in &monos {
                let deg = e[0] + e[1] + e[2];
                terms.push((rng.gen_range(-1.0..1.0) * radius.powi(-(deg as i32)), *e));
            }
            Poly { terms }.simplified().shifted(&(-center))
        };
        out.push(TestField::from_potential_factor(&q, center, radius));
    }
    out
}

/// Fields `(1 - |x - c|^2 / R^2) v` with random affine `v` from `seed`.
///
/// Unlike the gradient library these have nonzero circulation along chords.
pub fn vanishing_field_library(center: &Vec3, radius: f64, count: usize, seed: u64) -> Vec<TestField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v = [0, 1, 2].map(|_| {
                let mut terms = vec![(rng.gen_range(-1.0..1.0), [0, 0, 0])];
                for a in 0..3 {
                    let mut e = [0, 0, 0];
                    e[a] = 1;
                    terms.push((rng.gen_range(-1.0..1.0) / radius, e));
                }
                Poly { terms }.shifted(&(-center))
            });
            TestField::from_vector_factor(&v, center, radius)
        })
        .collect()
}

/// Library-based lower bound of a dual Hoelder norm.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualNormEstimate {
    pub beta: f64,
    pub value: f64,
    pub argmax: usize,
    pub discrepancies: Vec<f64>,
    pub label: String,
}

/// `max_k |d_k| / ||B_k||_{C^{0,beta}}` for precomputed discrepancies `d_k`.
pub fn dual_norm_from(discrepancies: &[f64], library: &[TestField], beta: f64) -> Result<DualNormEstimate> {
    if library.is_empty() || discrepancies.len() != library.len() {
        return Err(GlError::Config("dual norm needs a non-empty library matching the discrepancies".into()));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(GlError::Config(format!("beta must lie in [0, 1], got {beta}")));
    }
    let (mut best, mut arg) = (0.0, 0);
    for (k, (d, f)) in discrepancies.iter().zip(library).enumerate() {
        let v = d.abs() / f.holder_norm(beta);
        if v > best {
            best = v;
            arg = k;
        }
    }
    Ok(DualNormEstimate {
        beta,
        value: best,
        argmax: arg,
        discrepancies: discrepancies.to_vec(),
        label: "lower bound over a finite test-field library".into(),
    })
}

/// Discrepancies `pairing(mu, B_k) - 2 pi int_G B_k` for each library field.
pub fn vorticity_discrepancies(mu: &VectorField, curve: &PolyCurve, library: &[TestField], domain: &Domain) -> Vec<f64> {
    library.iter().map(|f| pairing(mu, &f.on_faces(&domain.grid), domain) - f.curve_term(curve)).collect()
}

/// Energy splitting of `GL(rho u e^{i h phi0}, A + h A0)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitReport {
    pub lhs: f64,
    pub rho_energy: f64,
    /// Meissner configuration energy with link variables.
    pub meissner: f64,
    /// Quadratic Meissner energy `rho_energy + h^2 J0`.
    pub meissner_quadratic: f64,
    pub free: f64,
    pub pairing: f64,
    pub remainder: f64,
    pub rhs: f64,
    pub defect: f64,
    /// Sum of absolute values of the right-hand terms.
    pub scale: f64,
}

/// `GL(rho e^{i h phi0}, h A0)` with link variables.
pub fn meissner_gl(
    meissner: &MeissnerState,
    rho: &ScalarField,
    a_eps: &ScalarField,
    eps: f64,
    h_ex: f64,
    domain: &Domain,
) -> Result<f64> {
    let g = domain.grid;
    if rho.grid != g || meissner.w.grid != g {
        return Err(GlError::Grid("Meissner state and weight must share the domain grid".into()));
    }
    let h = g.h;
    let h3 = h.powi(3);
    let mut kin = 0.0;
    domain.for_each_kinetic_edge(|c, i, j, w| {
        let d = link(Complex64::new(rho.values[i], 0.0), Complex64::new(rho.values[j], 0.0), h, h_ex * meissner.w.comps[c][i]);
        kin += 0.5 * w * h * d.norm_sqr();
    });
    let mut pot = 0.0;
    for m in 0..g.len() {
        let wn = domain.node_weight(m);
        if wn > 0.0 {
            let q = a_eps.values[m] - rho.values[m].powi(2);
            pot += wn * h3 * q * q / (4.0 * eps * eps);
        }
    }
    let mut scaled = meissner.a.clone();
    scaled.scale(h_ex);
    let (mag, _) = magnetic(&scaled, Vec3::zeros());
    Ok(kin + pot + mag)
}

/// Evaluate both sides of the splitting at intensity `h_ex`.
#[allow(clippy::too_many_arguments)]
pub fn split_energy(
    u: &ComplexField,
    a: &VectorField,
    rho: &ScalarField,
    a_eps: &ScalarField,
    eps: f64,
    meissner: &MeissnerState,
    h_ex: f64,
    domain: &Domain,
) -> Result<SplitReport> {
    check_same(u, a, domain)?;
    let g = domain.grid;
    let n = g.len();
    let h = g.h;
    let h3 = h.powi(3);
    // left side, with phi0 entering only through its edge gradient
    let mut kin = 0.0;
    domain.for_each_kinetic_edge(|c, i, j, w| {
        let ui = u.values[i] * rho.values[i];
        let uj = u.values[j] * rho.values[j];
        let ab = a.comps[c][i] + h_ex * (meissner.a0.comps[c][i] - meissner.grad_phi0.comps[c][i]);
        kin += 0.5 * w * h * link(ui, uj, h, ab).norm_sqr();
    });
    let mut pot = 0.0;
    for m in 0..n {
        let wn = domain.node_weight(m);
        if wn > 0.0 {
            let q = a_eps.values[m] - rho.values[m].powi(2) * u.values[m].norm_sqr();
            pot += wn * h3 * q * q / (4.0 * eps * eps);
        }
    }
    let mut total_a = a.clone();
    total_a.axpy(h_ex, &meissner.a0);
    let (mag, _) = magnetic(&total_a, meissner.applied.h0() * h_ex);
    let lhs = kin + pot + mag;
    // right side
    let e_rho = rho_energy(domain, a_eps, rho, eps);
    let e_m = meissner_gl(meissner, rho, a_eps, eps, h_ex, domain)?;
    let f = free_energy_fields(u, a, rho, eps, domain, None, None)?.total;
    let mu = vorticity(u, a, domain)?;
    let p = pairing(&mu.current, &meissner.b0, domain);
    let mut r = 0.0;
    domain.for_each_kinetic_edge(|c, i, j, w| {
        let wv = meissner.w.comps[c][i];
        let m2 = 0.5 * (u.values[i].norm_sqr() + u.values[j].norm_sqr()) - 1.0;
        r += w * h3 * rho.values[i] * rho.values[j] * wv * wv * m2;
    });
    let remainder = 0.5 * h_ex * h_ex * r;
    let rhs = e_m + f - h_ex * p + remainder;
    Ok(SplitReport {
        lhs,
        rho_energy: e_rho,
        meissner: e_m,
        meissner_quadratic: e_rho + h_ex * h_ex * meissner.energy,
        free: f,
        pairing: p,
        remainder,
        rhs,
        defect: (lhs - rhs).abs(),
        scale: e_m.abs() + f.abs() + (h_ex * p).abs() + remainder.abs(),
    })
}

/// Least-squares slope of `F` against `|log eps|` and its ratio to `pi |rho^2 G|`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyLaw {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub predicted: f64,
    pub ratio: f64,
}

pub fn energy_law(eps_energy: &[(f64, f64)], weighted_length: f64) -> Result<EnergyLaw> {
    if eps_energy.len() < 3 {
        return Err(GlError::Config("energy law needs at least three values of eps".into()));
    }
    let pts: Vec<(f64, f64)> = eps_energy.iter().map(|&(e, f)| (e.ln().abs(), f)).collect();
    let (intercept, slope) = crate::biotsavart::linear_fit(&pts);
    let predicted = PI * weighted_length;
    Ok(EnergyLaw { points: pts, slope, intercept, predicted, ratio: slope / predicted })
}

/// Random smooth configuration for identity checks: `A` vanishes near the box surface.
pub fn random_smooth_configuration(domain: &Domain, seed: u64) -> (ComplexField, VectorField) {
    let g = domain.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = domain.shape.center();
    let r = domain.shape.bounding_radius();
    let k: Vec<Vec3> = (0..3).map(|_| Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)) / r).collect();
    let ph: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let amp: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let u = ComplexField::from_fn(g, |x| {
        let y = x - c;
        let m = 1.0 + amp[0] * (k[0].dot(&y) + ph[0]).sin() * 0.5;
        let th = amp[1] * 3.0 * (k[1].dot(&y) + ph[1]).cos() + amp[2] * 3.0 * (k[2].dot(&y) + ph[2]).sin();
        Complex64::from_polar(m, th)
    });
    let half = (g.upper() - g.origin()) * 0.5;
    let a = VectorField::from_fn(g, Placement::Edge, |x| {
        let y = x - c;
        // cutoff vanishing on the box surface
        let mut cut = 1.0;
        for d in 0..3 {
            let s = (y[d] / half[d]).clamp(-1.0, 1.0);
            cut *= (1.0 - s * s).powi(2);
        }
        Vec3::new(
            amp[3] * (k[1].dot(&y) + ph[3]).sin(),
            amp[4] * (k[2].dot(&y) + ph[4]).cos(),
            amp[5] * (k[0].dot(&y) + ph[5]).sin(),
        ) * cut
    });
    (u, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ampere::AmpereOptions;
    use crate::meissner::solve_b0;
    use crate::pinning::{solve_rho, PinningModel, RhoOptions};

    fn ball(cells: usize) -> Domain {
        Domain::ball(Vec3::zeros(), 1.0, cells, 4).unwrap()
    }

    #[test]
    fn constant_state_has_zero_energy() {
        let d = ball(10);
        let u = ComplexField::from_fn(d.grid, |_| Complex64::new(1.0, 0.0));
        let a = VectorField::zeros(d.grid, Placement::Edge);
        let rho = ScalarField::constant(d.grid, Placement::Node, 1.0);
        let r = free_energy_fields(&u, &a, &rho, 0.1, &d, None, None).unwrap();
        assert_eq!(r.total, 0.0);
        let ae = ScalarField::constant(d.grid, Placement::Node, 0.49);
        let v = ComplexField::from_fn(d.grid, |_| Complex64::new(0.7, 0.0));
        let ap = AppliedField::uniform(Vec3::z(), 0.0).unwrap();
        assert!(full_gl(&v, &a, &ae, 0.1, &ap, &d).unwrap().total.abs() < 1e-28);
    }

    #[test]
    fn uniform_curl_gives_magnetic_only() {
        let d = ball(10);
        let g = d.grid;
        let u = ComplexField::from_fn(g, |_| Complex64::new(1.0, 0.0));
        let bz = 0.7;
        let a = VectorField::from_fn(g, Placement::Edge, |x| Vec3::new(-0.5 * bz * x.y, 0.5 * bz * x.x, 0.0));
        let rho = ScalarField::constant(g, Placement::Node, 1.0);
        let r = free_energy_fields(&u, &a, &rho, 0.1, &d, None, None).unwrap();
        let vol = (g.upper() - g.origin()).iter().product::<f64>();
        assert!((r.magnetic - 0.5 * bz * bz * vol).abs() < 1e-10 * r.magnetic);
        assert_eq!(r.potential, 0.0);
    }

    #[test]
    fn gauge_invariance() {
        let d = ball(12);
        let g = d.grid;
        let (u, a) = random_smooth_configuration(&d, 3);
        let rho = ScalarField::from_fn(g, Placement::Node, |x| 0.8 + 0.1 * x.x);
        let phi = |x: Vec3| 0.7 * (1.3 * x.x).sin() + 0.4 * x.y * x.z;
        let u2 = ComplexField { grid: g, values: u.values.iter().enumerate().map(|(m, v)| {
            let (i, j, k) = g.ijk(m);
            v * Complex64::from_polar(1.0, phi(g.node(i, j, k)))
        }).collect() };
        let da = VectorField::from_line_integrals(g, |p, q| phi(q) - phi(p));
        let mut a2 = a.clone();
        a2.axpy(1.0, &da);
        let r1 = free_energy_fields(&u, &a, &rho, 0.2, &d, None, None).unwrap();
        let r2 = free_energy_fields(&u2, &a2, &rho, 0.2, &d, None, None).unwrap();
        assert!((r1.total - r2.total).abs() < 1e-10 * r1.total);
        let m1 = vorticity(&u, &a, &d).unwrap();
        let m2 = vorticity(&u2, &a2, &d).unwrap();
        let diff = m1.winding_form.comps.iter().flatten().zip(m2.winding_form.comps.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn test_fields_are_normal_on_the_sphere() {
        let c = Vec3::new(0.1, -0.2, 0.3);
        let lib = test_field_library(&c, 1.3, 30, 7);
        for f in &lib {
            for &(t, p) in &[(0.3, 1.0), (1.2, 4.0), (2.5, 2.0)] {
                let nrm = Vec3::new(f64::sin(t) * f64::cos(p), f64::sin(t) * f64::sin(p), f64::cos(t));
                let b = f.eval(&(c + nrm * 1.3));
                assert!(b.cross(&nrm).norm() < 1e-10 * (1.0 + b.norm()));
                assert!(b.norm() <= f.sup + 1e-12);
            }
        }
    }

    #[test]
    fn vanishing_fields_vanish_on_the_sphere() {
        let c = Vec3::new(0.2, 0.1, -0.3);
        let lib = vanishing_field_library(&c, 0.9, 6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for f in &lib {
            for _ in 0..20 {
                let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
                assert!(f.eval(&(c + d * 0.9)).norm() < 1e-12);
                assert!(f.eval(&(c + d * 0.5)).norm() <= f.sup + 1e-12);
            }
        }
        // circulation along a diameter of a constant-direction field: int (1 - t^2) dt over [-1, 1] = 4/3
        let z = Poly::monomial(0.0, [0, 0, 0]);
        let f = TestField::from_vector_factor(&[z.clone(), z, Poly::monomial(1.0, [0, 0, 0])], &Vec3::zeros(), 1.0);
        let g = PolyCurve::segment(-Vec3::z(), Vec3::z(), 7).unwrap();
        assert!((f.curve_term(&g) - 2.0 * PI * 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn polynomial_shift_is_consistent() {
        let p = Poly { terms: vec![(1.5, [2, 1, 0]), (-0.5, [0, 0, 3]), (2.0, [1, 1, 1])] };
        let c = Vec3::new(0.3, -0.7, 0.2);
        let q = p.shifted(&c);
        let y = Vec3::new(0.11, 0.42, -0.9);
        assert!((q.eval(&y) - p.eval(&(y + c))).abs() < 1e-12);
    }

    #[test]
    fn splitting_for_constant_state() {
        let d = ball(12);
        let g = d.grid;
        let model = PinningModel::Constant { value: 0.8 };
        let ae = model.sample(&d).unwrap();
        let rho = solve_rho(&d, &ae, 0.3, &RhoOptions::default()).unwrap().rho;
        let ap = AppliedField::uniform(Vec3::z(), 1.0).unwrap();
        let ms = solve_b0(&rho, &ap, &d, &AmpereOptions::default()).unwrap();
        let u = ComplexField::from_fn(g, |_| Complex64::new(1.0, 0.0));
        let a = VectorField::zeros(g, Placement::Edge);
        let s = split_energy(&u, &a, &rho, &ae, 0.3, &ms, 1.0, &d).unwrap();
        assert_eq!(s.remainder, 0.0);
        assert_eq!(s.free, 0.0);
        assert!(s.defect < 1e-10 * s.scale.max(1.0), "{s:?}");
    }
}

//! Vortex test configurations built around a curve.
//!
//! The modulus is the radial profile in the distance to the curve,
//! normalised to reach 1 on the tube of radius `r = |log eps|^-q` and set to 1
//! outside it. The phase integrates `X + grad f` along a spanning tree of the
//! kinetic graph, where the increments of `X` are exact half solid-angle
//! differences. The vector potential is the corrected `A` of the curve.

use crate::biotsavart::{half_solid_angles, wrap, CorrectedFields};
use crate::error::{GlError, Result};
use crate::geometry::PolyCurve;
use crate::grid::{ComplexField, Domain, Grid, Placement, ScalarField, VectorField};
use crate::profile::Profile;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Exponent `N / alpha + 1` of the tube radius.
pub fn tube_exponent(n: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || !(n > 0.0) {
        return Err(GlError::Config(format!("need N > 0 and alpha in (0,1), got N = {n}, alpha = {alpha}")));
    }
    Ok(n / alpha + 1.0)
}

/// Tube radius `|log eps|^-q`.
pub fn tube_radius(eps: f64, q: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < (-1.0f64).exp()) {
        return Err(GlError::Config(format!("eps must lie in (0, 1/e), got {eps}")));
    }
    if !(q > 1.0) {
        return Err(GlError::Config(format!("tube exponent must exceed 1, got {q}")));
    }
    Ok(eps.ln().abs().powf(-q))
}

/// Resolution checks for a given spacing; returns warnings for soft limits.
pub fn check_resolution(eps: f64, r: f64, h: f64) -> Result<Vec<String>> {
    if eps < 1.5 * h * (1.0 - 1e-12) {
        return Err(GlError::Config(format!("eps = {eps} is below 1.5 h = {}", 1.5 * h)));
    }
    if r < 4.0 * h {
        return Err(GlError::Config(format!("tube radius {r} is below 4 h = {}", 4.0 * h)));
    }
    let mut w = Vec::new();
    if r / eps < 10.0 {
        w.push(format!("r/eps = {:.3} < 10: the profile normalisation is far from 1", r / eps));
    }
    Ok(w)
}

/// Distance from nodes to the curve, computed only within `reach` (infinite elsewhere).
pub fn node_distance(curve: &PolyCurve, grid: &Grid, reach: f64) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; grid.len()];
    let o = grid.origin();
    let h = grid.h;
    for (a, b) in curve.segments() {
        let lo = a.inf(&b).add_scalar(-reach);
        let hi = a.sup(&b).add_scalar(reach);
        let mut rng = [(0usize, 0usize); 3];
        for c in 0..3 {
            let l = ((lo[c] - o[c]) / h).ceil().max(0.0) as usize;
            let u = (((hi[c] - o[c]) / h).floor().max(-1.0) as isize).min(grid.dims[c] as isize - 1);
            if u < l as isize {
                rng[c] = (1, 0);
            } else {
                rng[c] = (l, u as usize);
            }
        }
        if (0..3).any(|c| rng[c].0 > rng[c].1) {
            continue;
        }
        let seg = b - a;
        let len2 = seg.norm_squared();
        for k in rng[2].0..=rng[2].1 {
            for j in rng[1].0..=rng[1].1 {
                for i in rng[0].0..=rng[0].1 {
                    let p = grid.node(i, j, k);
                    let t = if len2 > 0.0 { ((p - a).dot(&seg) / len2).clamp(0.0, 1.0) } else { 0.0 };
                    let dist = (p - (a + seg * t)).norm();
                    let m = grid.idx(i, j, k);
                    if dist < d[m] {
                        d[m] = dist;
                    }
                }
            }
        }
    }
    d
}

/// Modulus `f0(d/eps)/f0(r/eps)` inside the tube, 1 outside, 0 within `h/2` of the curve.
pub struct Modulus {
    pub values: ScalarField,
    /// Nodes strictly inside the tube.
    pub in_tube: Vec<bool>,
    pub normalization: f64,
}

pub fn build_modulus(curve: &PolyCurve, eps: f64, r: f64, profile: &Profile, grid: &Grid) -> Result<Modulus> {
    if r < 4.0 * grid.h {
        return Err(GlError::Config(format!("tube radius {r} is under-resolved (h = {})", grid.h)));
    }
    let norm = profile.eval(r / eps);
    if !(norm > 0.0) {
        return Err(GlError::Numerical("profile vanishes at the tube radius".into()));
    }
    let dist = node_distance(curve, grid, r);
    let mut vals = ScalarField::constant(*grid, Placement::Node, 1.0);
    let mut in_tube = vec![false; grid.len()];
    for (m, &d) in dist.iter().enumerate() {
        if d < r {
            in_tube[m] = true;
            vals.values[m] = if d < 0.5 * grid.h { 0.0 } else { (profile.eval(d / eps) / norm).min(1.0) };
        }
    }
    Ok(Modulus { values: vals, in_tube, normalization: norm })
}

/// Phase on kinetic nodes.
pub struct Phase {
    pub theta: Vec<f64>,
    pub kinetic: Vec<bool>,
    pub root: usize,
}

/// Integrate `X + grad f` along a breadth-first spanning tree of the kinetic graph.
/// `root` selects the first tree root (the lowest kinetic node by default).
pub fn build_phase(domain: &Domain, curve: &PolyCurve, f: &[f64], root: Option<usize>) -> Result<Phase> {
    let g = domain.grid;
    let n = g.len();
    if f.len() != n {
        return Err(GlError::Grid("phase correction has the wrong length".into()));
    }
    let mut kinetic = vec![false; n];
    domain.for_each_kinetic_edge(|_, i, j, _| {
        kinetic[i] = true;
        kinetic[j] = true;
    });
    let half = half_solid_angles(&g, curve, |m| kinetic[m]);
    let mut theta = vec![0.0; n];
    let mut seen = vec![false; n];
    let first = match root {
        Some(r) if r < n && kinetic[r] => r,
        Some(r) => return Err(GlError::Config(format!("tree root {r} is not a kinetic node"))),
        None => (0..n).find(|&m| kinetic[m]).ok_or_else(|| GlError::Geometry("no kinetic nodes".into()))?,
    };
    let neighbours = |m: usize, out: &mut Vec<usize>| {
        out.clear();
        let (i, j, k) = g.ijk(m);
        let ijk = [i, j, k];
        for c in 0..3 {
            let s = g.stride(c);
            if ijk[c] + 1 < g.dims[c] && domain.edge_weight(c, m) > 0.0 {
                out.push(m + s);
            }
            if ijk[c] > 0 && domain.edge_weight(c, m - s) > 0.0 {
                out.push(m - s);
            }
        }
    };
    let mut queue = VecDeque::new();
    let mut nb = Vec::with_capacity(6);
    let seeds = std::iter::once(first).chain(0..n);
    for s in seeds {
        if !kinetic[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        theta[s] = half[s] + f[s];
        queue.push_back(s);
        while let Some(m) = queue.pop_front() {
            neighbours(m, &mut nb);
            for &q in &nb {
                if !seen[q] {
                    seen[q] = true;
                    theta[q] = theta[m] + wrap(half[q] - half[m]) + (f[q] - f[m]);
                    queue.push_back(q);
                }
            }
        }
    }
    Ok(Phase { theta, kinetic, root: first })
}

/// Nonzero plaquette windings `(comp, face index, winding)` of wrapped phase
/// differences around in-faces.
pub fn plaquette_windings(domain: &Domain, theta: &[f64]) -> Vec<(usize, usize, i64)> {
    let g = domain.grid;
    let mut out = Vec::new();
    for c in 0..3 {
        let a = (c + 1) % 3;
        let b = (c + 2) % 3;
        let (sa, sb) = (g.stride(a), g.stride(b));
        g.for_each(Placement::Face, c, |i, j, k, m| {
            if !domain.face_in(c, i, j, k) {
                return;
            }
            // counter-clockwise about axis c: m -> m+sa -> m+sa+sb -> m+sb -> m
            let loop_ = [m, m + sa, m + sa + sb, m + sb, m];
            let s: f64 = loop_.windows(2).map(|w| wrap(theta[w[1]] - theta[w[0]])).sum();
            let wnd = (s / (2.0 * std::f64::consts::PI)).round() as i64;
            if wnd != 0 {
                out.push((c, m, wnd));
            }
        });
    }
    out
}

/// Vortex test configuration on a domain.
#[derive(Clone, Debug)]
pub struct TestConfiguration {
    pub u: ComplexField,
    /// Vector potential on edges (kinetic edges only when resampled from a coarser grid).
    pub a: VectorField,
    /// Magnetic energy carried over from the field grid when `a` was resampled.
    pub magnetic_energy: Option<f64>,
    pub curve: PolyCurve,
    pub loop_curve: PolyCurve,
    pub in_tube: Vec<bool>,
    pub meta: ConfigurationMeta,
}

/// Scalars describing a configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfigurationMeta {
    pub eps: f64,
    pub r_eps: f64,
    pub q: f64,
    pub normalization: f64,
    /// Length of the curve inside the domain.
    pub length: f64,
    pub h: f64,
    pub field_h: f64,
    pub tree_root: usize,
    pub warnings: Vec<String>,
}

/// Assemble the configuration on `domain` from corrected fields, possibly on a coarser grid.
pub fn assemble(
    domain: &Domain,
    fields: &CorrectedFields,
    profile: &Profile,
    eps: f64,
    q: f64,
    root: Option<usize>,
) -> Result<TestConfiguration> {
    let g = domain.grid;
    let r = tube_radius(eps, q)?;
    let mut warnings = check_resolution(eps, r, g.h)?;
    if domain.shape != fields.domain.shape {
        return Err(GlError::Grid("corrected fields belong to another domain".into()));
    }
    let same = fields.domain.grid == g;
    let modulus = build_modulus(&fields.curve, eps, r, profile, &g)?;
    let n = g.len();
    let f: Vec<f64> = if same {
        fields.f.values.clone()
    } else {
        let mut v = vec![0.0; n];
        g.for_each(Placement::Node, 0, |i, j, k, m| {
            if domain.node_kinetic(m) {
                v[m] = fields.f.sample(&g.node(i, j, k));
            }
        });
        v
    };
    let phase = build_phase(domain, &fields.curve, &f, root)?;
    drop(f);
    let mut u = ComplexField::zeros(g);
    for m in 0..n {
        let th = if phase.kinetic[m] { phase.theta[m] } else { 0.0 };
        u.values[m] = Complex64::from_polar(modulus.values.values[m], th);
    }
    let (a, magnetic_energy) = if same {
        (fields.a.clone(), None)
    } else {
        let mut a = VectorField::zeros(g, Placement::Edge);
        domain.for_each_kinetic_edge(|c, i, _, _| {
            let (x, y, z) = g.ijk(i);
            a.comps[c][i] = crate::grid::interpolate(
                &fields.a.comps[c],
                &fields.a.grid,
                Placement::Edge,
                c,
                &g.position(Placement::Edge, c, x, y, z),
            );
        });
        (a, Some(crate::biotsavart::magnetic_energy(&fields.a)))
    };
    if modulus.normalization < 0.9 {
        warnings.push(format!("profile normalisation {:.4} below 0.9", modulus.normalization));
    }
    Ok(TestConfiguration {
        u,
        a,
        magnetic_energy,
        curve: clip_inside(&fields.curve, domain)?,
        loop_curve: fields.curve.clone(),
        in_tube: modulus.in_tube,
        meta: ConfigurationMeta {
            eps,
            r_eps: r,
            q,
            normalization: modulus.normalization,
            length: fields.length_inside,
            h: g.h,
            field_h: fields.domain.grid.h,
            tree_root: phase.root,
            warnings,
        },
    })
}

/// Longest run of the loop lying inside the domain, as an open curve.
pub fn clip_inside(loop_: &PolyCurve, domain: &Domain) -> Result<PolyCurve> {
    let mut best: Vec<crate::grid::Vec3> = Vec::new();
    let mut cur: Vec<crate::grid::Vec3> = Vec::new();
    for (a, b) in loop_.segments() {
        match crate::geometry::clip_segment(&domain.shape, a, b) {
            Some((p, q)) => {
                if cur.last().map_or(true, |l| (l - p).norm() > 1e-12) {
                    if cur.len() > best.len() {
                        best = std::mem::take(&mut cur);
                    }
                    cur.clear();
                    cur.push(p);
                }
                cur.push(q);
            }
            None => {
                if cur.len() > best.len() {
                    best = std::mem::take(&mut cur);
                }
                cur.clear();
            }
        }
    }
    if cur.len() > best.len() {
        best = cur;
    }
    if best.len() < 2 {
        return Err(GlError::Geometry("the loop does not enter the domain".into()));
    }
    PolyCurve::new(best, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ampere::AmpereOptions;
    use crate::biotsavart::solve_ja;
    use crate::geometry::extend_and_close;
    use crate::grid::{Shape, Vec3};
    use crate::profile::solve_profile;

    #[test]
    fn tube_radius_arithmetic() {
        let r = tube_radius((-10.0f64).exp(), tube_exponent(0.5, 0.5).unwrap()).unwrap();
        assert!((r - 0.01).abs() < 1e-15);
        assert!(tube_radius(0.01, 1.5).unwrap() < tube_radius(0.02, 1.5).unwrap());
        assert!(tube_radius(0.5, 1.5).is_err());
    }

    /// Faces of the lattice crossed by a segment, found by testing every face
    /// square against the segment.
    fn crossed_faces(g: &Grid, a: Vec3, b: Vec3) -> Vec<(usize, usize, i64)> {
        let mut out = Vec::new();
        for c in 0..3 {
            let (p, q) = ((c + 1) % 3, (c + 2) % 3);
            if (b[c] - a[c]).abs() < 1e-15 {
                continue;
            }
            g.for_each(Placement::Face, c, |i, j, k, m| {
                let x = g.node(i, j, k);
                let t = (x[c] - a[c]) / (b[c] - a[c]);
                if !(0.0..1.0).contains(&t) {
                    return;
                }
                let y = a + (b - a) * t;
                let (u, v) = ((y[p] - x[p]) / g.h, (y[q] - x[q]) / g.h);
                if (0.0..1.0).contains(&u) && (0.0..1.0).contains(&v) {
                    out.push((c, m, if b[c] > a[c] { 1 } else { -1 }));
                }
            });
        }
        out
    }

    #[test]
    fn windings_sit_on_pierced_faces() {
        let d = Domain::new(Shape::ball(Vec3::zeros(), 1.0), Grid::cell_centered(Vec3::zeros(), 9, 0.125).unwrap()).unwrap();
        let seg = PolyCurve::segment(Vec3::new(0.03, -0.02, -1.0), Vec3::new(0.05, 0.01, 1.0), 4)
            .unwrap()
            .clip_to(&d.shape)
            .unwrap();
        let (loop_, _) = extend_and_close(&seg, &d.shape, 0.2, 1.5).unwrap();
        let f = vec![0.0; d.grid.len()];
        let ph = build_phase(&d, &loop_, &f, None).unwrap();
        let mut got = plaquette_windings(&d, &ph.theta);
        let mut want = Vec::new();
        for (a, b) in loop_.segments() {
            for (c, m, s) in crossed_faces(&d.grid, a, b) {
                let (i, j, k) = d.grid.ijk(m);
                if d.face_in(c, i, j, k) {
                    want.push((c, m, s));
                }
            }
        }
        got.sort();
        want.sort();
        assert!(!want.is_empty());
        assert_eq!(got, want);
    }

    #[test]
    fn phase_is_tree_independent() {
        let d = Domain::ball(Vec3::zeros(), 1.0, 12, 3).unwrap();
        let seg = PolyCurve::segment(Vec3::new(0.01, 0.02, -1.0), Vec3::new(0.01, 0.02, 1.0), 4).unwrap();
        let (loop_, _) = extend_and_close(&seg, &d.shape, 0.2, 1.5).unwrap();
        let f: Vec<f64> = (0..d.grid.len()).map(|m| (m as f64 * 1e-3).sin() * 0.1).collect();
        let p1 = build_phase(&d, &loop_, &f, None).unwrap();
        let last = (0..d.grid.len()).rev().find(|&m| p1.kinetic[m]).unwrap();
        let p2 = build_phase(&d, &loop_, &f, Some(last)).unwrap();
        let shift = p2.theta[p1.root] - p1.theta[p1.root];
        for m in 0..d.grid.len() {
            if p1.kinetic[m] {
                let diff = wrap(p2.theta[m] - p1.theta[m] - shift);
                assert!(diff.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn modulus_values() {
        let g = Grid::cell_centered(Vec3::zeros(), 20, 0.01).unwrap();
        let axis = g.node(20, 20, 0);
        let curve = PolyCurve::segment(Vec3::new(axis.x, axis.y, -0.2), Vec3::new(axis.x, axis.y, 0.2), 4).unwrap();
        let p = solve_profile(40.0, 800).unwrap();
        let (eps, r) = (0.01, 0.1);
        let m = build_modulus(&curve, eps, r, &p, &g).unwrap();
        let v = |i, j, k| m.values.values[g.idx(i, j, k)];
        assert_eq!(v(20, 20, 20), 0.0);
        // distance exactly eps and exactly r
        assert!((v(21, 20, 20) - p.eval(1.0) / p.eval(10.0)).abs() < 1e-12);
        assert_eq!(v(30, 20, 20), 1.0);
        assert_eq!(v(34, 20, 20), 1.0);
        assert!(m.values.values.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn assemble_on_field_grid() {
        let d = Domain::ball(Vec3::zeros(), 1.0, 30, 4).unwrap();
        let seg = PolyCurve::segment(Vec3::new(0.02, 0.01, -1.0), Vec3::new(0.02, 0.01, 1.0), 4).unwrap();
        let (loop_, _) = extend_and_close(&seg, &d.shape, 0.2, 1.5).unwrap();
        let fields = solve_ja(&loop_, &d, &AmpereOptions::default()).unwrap();
        let p = solve_profile(40.0, 800).unwrap();
        let cfg = assemble(&d, &fields, &p, 0.1, 1.5, None).unwrap();
        let outside = (0..d.grid.len()).filter(|&m| !cfg.in_tube[m]).all(|m| (cfg.u.values[m].norm() - 1.0).abs() < 1e-15);
        assert!(outside);
        assert!((cfg.curve.length() - 2.0 * (1.0f64 - 0.0005).sqrt()).abs() < 1e-9);
    }
}

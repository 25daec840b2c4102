//! Biot-Savart field of a closed curve and the corrected fields of the curve
//! in the domain.
//!
//! With the normalisation `X(p) = 1/2 int (G(t) - p)/|G(t) - p|^3 x G'(t) dt`
//! the field has circulation `2 pi` around the curve and equals half the
//! gradient of the solid angle subtended by the curve. Edge line integrals
//! of `X` are therefore taken as exact half solid-angle differences.

use crate::ampere::{self, AmpereOptions, AmpereProblem};
use crate::error::{GlError, Result};
use crate::geometry::{clip_segment, PolyCurve, Tube};
use crate::grid::{curl_edge_raw, div_edge_raw, Domain, Placement, ScalarField, VectorField, Vec3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Closed-form field of one straight segment from `a` to `b` at `p`.
pub fn segment_field(p: &Vec3, a: &Vec3, b: &Vec3) -> Result<Vec3> {
    let d = b - a;
    let len = d.norm();
    let u = d / len;
    let r1 = p - a;
    let r2 = p - b;
    let (n1, n2) = (r1.norm(), r2.norm());
    let (s1, s2) = (r1.dot(&u), r2.dot(&u));
    let perp = r1 - u * s1;
    let rho2 = perp.norm_squared();
    let t = (s1 / len).clamp(0.0, 1.0);
    if (r1 - d * t).norm() < 1e-12 * len.max(1.0) {
        return Err(GlError::Numerical("field evaluated on the source segment".into()));
    }
    let dir = u.cross(&perp);
    // s1/n1 - s2/n2, rewritten without cancellation when p projects outside the segment
    let factor = if s1 * s2 > 0.0 {
        len * (s1 + s2) / (n1 * n2 * (s1 * n2 + s2 * n1))
    } else {
        (s1 / n1 - s2 / n2) / rho2
    };
    Ok(dir * (0.5 * factor))
}

/// Complete elliptic integrals `K(m)` and `E(m)` with parameter `m = k^2`, by the AGM.
pub fn elliptic_ke(m: f64) -> (f64, f64) {
    let mut a = 1.0;
    let mut b = (1.0 - m).sqrt();
    let mut c = m.sqrt();
    let mut sum = 0.5 * c * c;
    let mut pow = 0.5;
    for _ in 0..60 {
        if c.abs() < 1e-17 {
            break;
        }
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        c = 0.5 * (a - b);
        a = an;
        b = bn;
        pow *= 2.0;
        sum += pow * c * c;
    }
    let k = PI / (2.0 * a);
    (k, k * (1.0 - sum))
}

/// Closed source curve.
#[derive(Clone, Debug)]
pub enum Source {
    Polyline(PolyCurve),
    /// Exact circle, oriented counter-clockwise about `axis`.
    Circle { center: Vec3, axis: Vec3, radius: f64 },
}

impl Source {
    pub fn polyline(curve: PolyCurve) -> Result<Self> {
        if !curve.closed {
            return Err(GlError::Geometry("the field source must be a closed curve".into()));
        }
        Ok(Source::Polyline(curve))
    }
}

/// `X` at `p`.
pub fn eval_x(p: &Vec3, src: &Source) -> Result<Vec3> {
    match src {
        Source::Polyline(c) => {
            let mut s = Vec3::zeros();
            for (a, b) in c.segments() {
                s += segment_field(p, &a, &b)?;
            }
            Ok(s)
        }
        Source::Circle { center, axis, radius } => {
            let ez = axis.normalize();
            let d = p - center;
            let z = d.dot(&ez);
            let radial = d - ez * z;
            let rho = radial.norm();
            let a = *radius;
            let q = (a + rho).powi(2) + z * z;
            let dd = (a - rho).powi(2) + z * z;
            if dd < 1e-24 {
                return Err(GlError::Numerical("field evaluated on the source circle".into()));
            }
            let (k, e) = elliptic_ke(4.0 * a * rho / q);
            let sq = q.sqrt();
            let bz = (k + (a * a - rho * rho - z * z) / dd * e) / sq;
            let br = if rho > 1e-14 { z / (rho * sq) * (-k + (a * a + rho * rho + z * z) / dd * e) } else { 0.0 };
            let er = if rho > 1e-14 { radial / rho } else { Vec3::zeros() };
            Ok(ez * bz + er * br)
        }
    }
}

/// Solid angle (mod `4 pi`) subtended at `p` by the fan of triangles from `apex` over the polygon.
pub fn solid_angle(p: &Vec3, curve: &PolyCurve, apex: &Vec3) -> f64 {
    let a = apex - p;
    let na = a.norm();
    let pts = &curve.points;
    let m = pts.len();
    let mut prev = pts[m - 1] - p;
    let mut nprev = prev.norm();
    let mut s = 0.0;
    for q in pts.iter() {
        let b = q - p;
        let nb = b.norm();
        let num = a.dot(&prev.cross(&b));
        let den = na * nprev * nb + a.dot(&prev) * nb + a.dot(&b) * nprev + prev.dot(&b) * na;
        s += 2.0 * num.atan2(den);
        prev = b;
        nprev = nb;
    }
    s
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Apex used for solid-angle fans: the vertex centroid.
pub fn fan_apex(curve: &PolyCurve) -> Vec3 {
    curve.points.iter().fold(Vec3::zeros(), |s, p| s + p) / curve.points.len() as f64
}

/// `X` line integral from `p` to `q`, exact as long as it stays below `pi` in size.
pub fn line_integral(p: &Vec3, q: &Vec3, curve: &PolyCurve, apex: &Vec3) -> f64 {
    wrap(0.5 * solid_angle(q, curve, apex) - 0.5 * solid_angle(p, curve, apex))
}

/// Half solid angles at the nodes where `want` holds (zero elsewhere).
pub fn half_solid_angles(grid: &crate::grid::Grid, curve: &PolyCurve, want: impl Fn(usize) -> bool) -> Vec<f64> {
    let apex = fan_apex(curve);
    let mut out = vec![0.0; grid.len()];
    grid.for_each(Placement::Node, 0, |i, j, k, n| {
        if want(n) {
            out[n] = 0.5 * solid_angle(&grid.node(i, j, k), curve, &apex);
        }
    });
    out
}

/// `Y(p) = (p_G - p)/|p_G - p|^2 x G'(p_G)` and the remainder `X - Y`.
pub fn near_split(p: &Vec3, tube: &Tube, src: &Source) -> Result<(Vec3, Vec3)> {
    let tc = tube.coords(p).ok_or_else(|| GlError::Geometry("point outside the tube".into()))?;
    let c = &tube.framed.curve;
    let n = c.points.len();
    let (a, b) = (c.points[tc.segment], c.points[(tc.segment + 1) % n]);
    let tan = (b - a).normalize();
    let d = b - a;
    let t = ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    let pg = a + d * t;
    let r = pg - p;
    let y = r.cross(&tan) / r.norm_squared();
    let x = eval_x(p, src)?;
    Ok((y, x - y))
}

/// Corrected current, vector potential and harmonic phase correction of a curve.
#[derive(Clone, Debug)]
pub struct CorrectedFields {
    pub domain: Domain,
    /// Closed loop carrying the source (the part in the domain plus its extension).
    pub curve: PolyCurve,
    /// Length of the curve inside the domain.
    pub length_inside: f64,
    /// Current on kinetic edges.
    pub j: VectorField,
    /// Vector potential on the box.
    pub a: VectorField,
    /// Phase correction on nodes (extended past the kinetic nodes by averaging).
    pub f: ScalarField,
    /// Edge line integrals of `X` divided by `h`, on kinetic edges.
    pub x_edges: VectorField,
    /// Largest unbalanced weighted current at a kinetic node relative to the largest current.
    pub flux_residual: f64,
    /// Largest `|div A|` at interior nodes relative to `max |A| / h`.
    pub div_a_residual: f64,
    pub cg_iterations: usize,
    pub transfer_history: Vec<f64>,
}

/// Length of the part of a closed loop inside the domain.
pub fn length_inside(curve: &PolyCurve, domain: &Domain) -> f64 {
    curve
        .segments()
        .filter_map(|(a, b)| clip_segment(&domain.shape, a, b))
        .map(|(a, b)| (b - a).norm())
        .sum()
}

/// Solve for the corrected fields of a closed loop on the domain.
pub fn solve_ja(curve: &PolyCurve, domain: &Domain, opts: &AmpereOptions) -> Result<CorrectedFields> {
    if !curve.closed {
        return Err(GlError::Geometry("the corrected fields need a closed loop".into()));
    }
    let g = domain.grid;
    let n = g.len();
    let mut kin = vec![false; n];
    domain.for_each_kinetic_edge(|_, i, j, _| {
        kin[i] = true;
        kin[j] = true;
    });
    let om = half_solid_angles(&g, curve, |m| kin[m]);
    let mut x_edges = VectorField::zeros(g, Placement::Edge);
    let mut source = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let one = [vec![1.0; n], vec![1.0; n], vec![1.0; n]];
    domain.for_each_kinetic_edge(|c, i, j, _| {
        let x = wrap(om[j] - om[i]) / g.h;
        x_edges.comps[c][i] = x;
        source[c][i] = -x;
    });
    let sol = ampere::solve(&AmpereProblem { domain, source: &source, coupling: &one }, opts)?;
    let mut j = VectorField::zeros(g, Placement::Edge);
    let mut jmax: f64 = 0.0;
    domain.for_each_kinetic_edge(|c, i, _, _| {
        j.comps[c][i] = -sol.residual_current[c][i];
        jmax = jmax.max(j.comps[c][i].abs());
    });
    let a = VectorField { grid: g, placement: Placement::Edge, comps: sol.a };
    let f_raw: Vec<f64> = sol.phi.iter().map(|v| v * g.h).collect();
    let f = ScalarField { grid: g, placement: Placement::Node, values: extend_by_averaging(&g, &f_raw, &kin) };
    let flux_residual = weighted_divergence_max(domain, &j) / jmax.max(1e-300);
    let div_a_residual = interior_div_max(&a) * g.h / a.max_abs().max(1e-300);
    Ok(CorrectedFields {
        domain: domain.clone(),
        curve: curve.clone(),
        length_inside: length_inside(curve, domain),
        j,
        a,
        f,
        x_edges,
        flux_residual,
        div_a_residual,
        cg_iterations: sol.cg_iterations,
        transfer_history: sol.transfer_history,
    })
}

/// Largest `|sum_e +- w_e v_e| / sum_e w_e` over kinetic nodes.
pub fn weighted_divergence_max(domain: &Domain, v: &VectorField) -> f64 {
    let n = domain.grid.len();
    let mut acc = vec![0.0; n];
    let mut wsum = vec![0.0; n];
    domain.for_each_kinetic_edge(|c, i, j, w| {
        acc[i] -= w * v.comps[c][i];
        acc[j] += w * v.comps[c][i];
        wsum[i] += w;
        wsum[j] += w;
    });
    (0..n).filter(|&m| wsum[m] > 0.0).map(|m| (acc[m] / wsum[m]).abs()).fold(0.0, f64::max)
}

/// Largest `|div a|` over nodes off the box surface.
pub fn interior_div_max(a: &VectorField) -> f64 {
    let g = a.grid;
    let mut d = vec![0.0; g.len()];
    div_edge_raw(&g, &a.comps, &mut d);
    let mut m: f64 = 0.0;
    g.for_each(Placement::Node, 0, |i, j, k, q| {
        if !g.on_boundary(i, j, k) {
            m = m.max(d[q].abs());
        }
    });
    m
}

/// Fill nodes without data with the mean of filled neighbours, layer by layer.
pub fn extend_by_averaging(g: &crate::grid::Grid, values: &[f64], known: &[bool]) -> Vec<f64> {
    let mut v = values.to_vec();
    let mut have = known.to_vec();
    if !have.iter().any(|&b| b) {
        return vec![0.0; v.len()];
    }
    loop {
        let mut updates = Vec::new();
        g.for_each(Placement::Node, 0, |i, j, k, m| {
            if have[m] {
                return;
            }
            let ijk = [i, j, k];
            let mut s = 0.0;
            let mut cnt = 0;
            for a in 0..3 {
                let st = g.stride(a);
                if ijk[a] > 0 && have[m - st] {
                    s += v[m - st];
                    cnt += 1;
                }
                if ijk[a] + 1 < g.dims[a] && have[m + st] {
                    s += v[m + st];
                    cnt += 1;
                }
            }
            if cnt > 0 {
                updates.push((m, s / cnt as f64));
            }
        });
        if updates.is_empty() {
            break;
        }
        for (m, val) in updates {
            v[m] = val;
            have[m] = true;
        }
    }
    v
}

/// Magnetic energy `1/2 sum_f h^3 |curl a|^2` over the box, faces on the box surface at half weight.
pub fn magnetic_energy(a: &VectorField) -> f64 {
    let g = a.grid;
    let n = g.len();
    let mut f = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    curl_edge_raw(&g, &a.comps, &mut f);
    let mut e = 0.0;
    for (c, fc) in f.iter().enumerate() {
        g.for_each(Placement::Face, c, |i, j, k, m| {
            e += if g.face_on_boundary(c, i, j, k) { 0.5 } else { 1.0 } * fc[m] * fc[m];
        });
    }
    0.5 * g.h.powi(3) * e
}

/// Distance from `p` to a polygon.
pub fn distance_to_curve(p: &Vec3, curve: &PolyCurve) -> f64 {
    curve
        .segments()
        .map(|(a, b)| {
            let d = b - a;
            let t = ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
            (p - (a + d * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Extrapolated renormalised constant of a curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RenormalizedConstant {
    pub value: f64,
    /// Slope of the linear remainder in the tube radius.
    pub slope: f64,
    /// `(radius, bracket)` including the magnetic energy.
    pub table: Vec<(f64, f64)>,
    pub magnetic: f64,
    pub length: f64,
    /// Largest deviation of the table from the fitted line.
    pub uncertainty: f64,
}

/// Bracket `1/2 int_{Omega minus tube} |j|^2 + pi |G| log r` at each tube radius, plus the
/// magnetic energy, extrapolated to zero radius with a linear fit.
pub fn c_omega(fields: &CorrectedFields, radii: &[f64]) -> Result<RenormalizedConstant> {
    let d = &fields.domain;
    let g = d.grid;
    if radii.len() < 2 {
        return Err(GlError::Config("need at least two tube radii".into()));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(GlError::Config("tube radii must decrease".into()));
    }
    if *radii.last().unwrap() < 3.0 * g.h * (1.0 - 1e-12) {
        return Err(GlError::Config(format!("smallest tube radius must be at least 3h = {}", 3.0 * g.h)));
    }
    let h3 = g.h.powi(3);
    let mut sums = vec![0.0; radii.len()];
    d.for_each_kinetic_edge(|c, i, _, w| {
        let (a, b, k) = g.ijk(i);
        let mid = g.position(Placement::Edge, c, a, b, k);
        let dist = distance_to_curve(&mid, &fields.curve);
        let e = 0.5 * w * h3 * fields.j.comps[c][i].powi(2);
        for (s, &r) in sums.iter_mut().zip(radii) {
            if dist > r {
                *s += e;
            }
        }
    });
    let magnetic = magnetic_energy(&fields.a);
    let len = fields.length_inside;
    let table: Vec<(f64, f64)> =
        radii.iter().zip(&sums).map(|(&r, &s)| (r, s + PI * len * r.ln() + magnetic)).collect();
    let (a, b) = linear_fit(&table);
    let uncertainty = table.iter().map(|(r, v)| (v - (a + b * r)).abs()).fold(0.0, f64::max);
    Ok(RenormalizedConstant { value: a, slope: b, table, magnetic, length: len, uncertainty })
}

/// Least-squares line `y = a + b x`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    ((sy - b * sx) / n, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn long_segment_matches_line_current() {
        let a = Vec3::new(0.0, 0.0, -1e5);
        let b = Vec3::new(0.0, 0.0, 1e5);
        let x = segment_field(&Vec3::new(0.5, 0.0, 0.0), &a, &b).unwrap();
        assert_relative_eq!(x.y, 2.0, epsilon = 1e-8);
        assert!(x.x.abs() < 1e-12 && x.z.abs() < 1e-12);
    }

    #[test]
    fn reversal_flips_sign() {
        let (a, b) = (Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.4, 0.5, 1.0));
        let p = Vec3::new(0.7, -0.2, 0.1);
        let x = segment_field(&p, &a, &b).unwrap();
        let y = segment_field(&p, &b, &a).unwrap();
        assert!((x + y).norm() < 1e-14 * x.norm());
    }

    #[test]
    fn circle_center_value() {
        let c = Source::Circle { center: Vec3::zeros(), axis: Vec3::z(), radius: 1.0 };
        let x = eval_x(&Vec3::zeros(), &c).unwrap();
        assert!((x - Vec3::new(0.0, 0.0, PI)).norm() < 1e-14);
    }

    #[test]
    fn circle_matches_fine_polygon_off_axis() {
        let p = Vec3::new(0.3, -0.2, 0.4);
        let c = Source::Circle { center: Vec3::zeros(), axis: Vec3::z(), radius: 1.0 };
        let poly = Source::polyline(PolyCurve::circle(Vec3::zeros(), Vec3::z(), 1.0, 20000).unwrap()).unwrap();
        let (x, y) = (eval_x(&p, &c).unwrap(), eval_x(&p, &poly).unwrap());
        assert!((x - y).norm() < 1e-6 * x.norm());
    }

    #[test]
    fn solid_angle_difference_is_line_integral() {
        let loop_ = PolyCurve::circle(Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.2, 0.1, 1.0), 0.8, 64).unwrap();
        let src = Source::polyline(loop_.clone()).unwrap();
        let apex = fan_apex(&loop_);
        let p = Vec3::new(0.3, 0.2, 0.25);
        let q = Vec3::new(0.35, 0.1, 0.3);
        let mut quad = 0.0;
        let m = 200;
        for s in 0..m {
            let t = (s as f64 + 0.5) / m as f64;
            quad += eval_x(&(p + (q - p) * t), &src).unwrap().dot(&(q - p)) / m as f64;
        }
        assert_relative_eq!(line_integral(&p, &q, &loop_, &apex), quad, epsilon = 1e-7);
    }
}

#[cfg(test)]
mod solve_tests {
    use super::*;
    use crate::geometry::extend_and_close;

    #[test]
    fn diameter_fields_are_balanced() {
        let domain = Domain::ball(Vec3::zeros(), 1.0, 16, 6).unwrap();
        let seg = PolyCurve::segment(Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, 1.0), 32).unwrap();
        let (loop_, _) = extend_and_close(&seg, &domain.shape, 0.3, 3.0).unwrap();
        let t = std::time::Instant::now();
        let f = solve_ja(&loop_, &domain, &AmpereOptions::default()).unwrap();
        eprintln!(
            "time {:?} cg {} transfers {:?} flux {:e} div {:e} len {}",
            t.elapsed(),
            f.cg_iterations,
            f.transfer_history,
            f.flux_residual,
            f.div_a_residual,
            f.length_inside
        );
        let c = c_omega(&f, &[0.6, 0.5, 0.4]).unwrap();
        eprintln!("{c:?}");
        assert!(f.flux_residual < 1e-6);
        assert!((f.length_inside - 2.0).abs() < 1e-12);
    }
}

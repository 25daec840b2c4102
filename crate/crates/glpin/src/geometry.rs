//! Polygonal curves, rotation-minimising frames and tubular neighbourhoods.

use crate::error::{GlError, Result};
use crate::grid::{ScalarField, Shape, Vec3};
use std::collections::HashMap;

/// Ordered vertex list, optionally closed (last vertex joins the first).
#[derive(Clone, Debug, PartialEq)]
pub struct PolyCurve {
    pub points: Vec<Vec3>,
    pub closed: bool,
}

/// Three-point Gauss rule on `[0,1]`.
pub(crate) const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

impl PolyCurve {
    pub fn new(points: Vec<Vec3>, closed: bool) -> Result<Self> {
        if points.len() < 2 {
            return Err(GlError::Geometry("a curve needs at least two vertices".into()));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(GlError::Geometry("non-finite vertex".into()));
        }
        let c = PolyCurve { points, closed };
        if c.segments().any(|(a, b)| (b - a).norm() == 0.0) {
            return Err(GlError::Geometry("repeated consecutive vertex".into()));
        }
        Ok(c)
    }

    /// Straight segment from `a` to `b` with `n` equal pieces.
    pub fn segment(a: Vec3, b: Vec3, n: usize) -> Result<Self> {
        let n = n.max(1);
        PolyCurve::new((0..=n).map(|i| a + (b - a) * (i as f64 / n as f64)).collect(), false)
    }

    /// Circle of radius `r` about `center` in the plane normal to `axis`, with `n` vertices.
    pub fn circle(center: Vec3, axis: Vec3, r: f64, n: usize) -> Result<Self> {
        let z = axis.normalize();
        let x = any_perpendicular(&z);
        let y = z.cross(&x);
        let pts = (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                center + r * (t.cos() * x + t.sin() * y)
            })
            .collect();
        PolyCurve::new(pts, true)
    }

    pub fn n_segments(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    pub fn segments(&self) -> impl Iterator<Item = (Vec3, Vec3)> + '_ {
        let n = self.points.len();
        (0..self.n_segments()).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| (b - a).norm()).sum()
    }

    /// Cumulative arc length at each vertex (plus the closing vertex for closed curves).
    pub fn arclength(&self) -> Vec<f64> {
        let mut s = vec![0.0];
        for (a, b) in self.segments() {
            s.push(s.last().unwrap() + (b - a).norm());
        }
        s
    }

    pub fn reversed(&self) -> Self {
        let mut p = self.points.clone();
        p.reverse();
        PolyCurve { points: p, closed: self.closed }
    }

    /// Point at arc length `s` (clamped for open curves, periodic for closed).
    pub fn point_at(&self, s: f64) -> Vec3 {
        let cum = self.arclength();
        let total = *cum.last().unwrap();
        let s = if self.closed { s.rem_euclid(total) } else { s.clamp(0.0, total) };
        let i = match cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.n_segments() - 1),
            Err(i) => i.saturating_sub(1).min(self.n_segments() - 1),
        };
        let n = self.points.len();
        let (a, b) = (self.points[i], self.points[(i + 1) % n]);
        let t = ((s - cum[i]) / (cum[i + 1] - cum[i])).clamp(0.0, 1.0);
        a + (b - a) * t
    }

    /// Uniform resampling by arc length with `n` segments.
    pub fn resample(&self, n: usize) -> Result<Self> {
        let total = self.length();
        let m = if self.closed { n } else { n + 1 };
        let pts = (0..m).map(|i| self.point_at(total * i as f64 / n as f64)).collect();
        PolyCurve::new(pts, self.closed)
    }

    /// Unit tangent of each segment.
    pub fn segment_tangents(&self) -> Vec<Vec3> {
        self.segments().map(|(a, b)| (b - a).normalize()).collect()
    }

    /// Unit tangent at each vertex (average of the adjoining segments).
    pub fn vertex_tangents(&self) -> Vec<Vec3> {
        let ts = self.segment_tangents();
        let n = self.points.len();
        let m = ts.len();
        (0..n)
            .map(|i| {
                let prev = if i > 0 { Some(ts[i - 1]) } else if self.closed { Some(ts[m - 1]) } else { None };
                let next = if i < m { Some(ts[i]) } else { None };
                match (prev, next) {
                    (Some(p), Some(q)) => {
                        let s = p + q;
                        if s.norm() > 1e-12 {
                            s.normalize()
                        } else {
                            q
                        }
                    }
                    (Some(p), None) => p,
                    (None, Some(q)) => q,
                    _ => Vec3::z(),
                }
            })
            .collect()
    }

    /// Discrete curvature vector (second arc-length derivative) at each vertex.
    pub fn vertex_curvature(&self) -> Vec<Vec3> {
        let ts = self.segment_tangents();
        let cum = self.arclength();
        let lens: Vec<f64> = cum.windows(2).map(|w| w[1] - w[0]).collect();
        let n = self.points.len();
        let m = ts.len();
        (0..n)
            .map(|i| {
                let prev = if i > 0 { Some(i - 1) } else if self.closed { Some(m - 1) } else { None };
                let next = if i < m { Some(i) } else { None };
                match (prev, next) {
                    (Some(p), Some(q)) => (ts[q] - ts[p]) / (0.5 * (lens[p] + lens[q])),
                    _ => Vec3::zeros(),
                }
            })
            .collect()
    }

    /// Part of the curve inside the domain: the longest run of vertices with
    /// negative distance, with its ends moved onto the boundary.
    pub fn clip_to(&self, shape: &Shape) -> Result<PolyCurve> {
        if self.closed {
            if self.points.iter().all(|p| shape.distance(p) < 0.0) {
                return Ok(self.clone());
            }
            return Err(GlError::Geometry("closed curve leaves the domain".into()));
        }
        let mut pieces = Vec::new();
        for (a, b) in self.segments() {
            let (da, db) = (shape.distance(&a), shape.distance(&b));
            match (da < 0.0, db < 0.0) {
                (true, true) => pieces.push((a, b)),
                (true, false) => pieces.push((a, boundary_crossing(shape, a, b))),
                (false, true) => pieces.push((boundary_crossing(shape, b, a), b)),
                (false, false) => {}
            }
        }
        if pieces.is_empty() {
            return Err(GlError::Geometry("curve does not meet the domain".into()));
        }
        let mut pts = vec![pieces[0].0];
        for (a, b) in &pieces {
            if (a - pts.last().unwrap()).norm() > 1e-14 {
                return Err(GlError::Geometry("curve enters the domain more than once".into()));
            }
            if (b - a).norm() > 1e-14 {
                pts.push(*b);
            }
        }
        PolyCurve::new(pts, false)
    }

    /// Integral of `f` along the curve restricted to the domain, using
    /// three-point Gauss rules on pieces no longer than `step`.
    pub fn integrate_along(&self, shape: Option<&Shape>, step: f64, f: impl Fn(&Vec3, &Vec3) -> f64) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.segments() {
            let (a, b) = match shape {
                Some(sh) => match clip_segment(sh, a, b) {
                    Some(ab) => ab,
                    None => continue,
                },
                None => (a, b),
            };
            let d = b - a;
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let t = d / len;
            let m = ((len / step).ceil() as usize).max(1);
            for q in 0..m {
                let p0 = a + d * (q as f64 / m as f64);
                for (x, w) in GAUSS3 {
                    let p = p0 + d * (x / m as f64);
                    acc += w * len / m as f64 * f(&p, &t);
                }
            }
        }
        acc
    }

    /// Circulation of a vector field along the curve inside the domain.
    pub fn circulation(&self, shape: Option<&Shape>, step: f64, b: impl Fn(&Vec3) -> Vec3) -> f64 {
        self.integrate_along(shape, step, |p, t| b(p).dot(t))
    }
}

/// Weighted length `int rho^2 dl` over the part of the curve inside the domain.
///
/// `rho^2` is interpolated from the squared node values, so linear `rho^2` is integrated exactly.
pub fn weighted_length(curve: &PolyCurve, rho: &ScalarField, shape: &Shape) -> f64 {
    let sq = ScalarField {
        grid: rho.grid,
        placement: rho.placement,
        values: rho.values.iter().map(|v| v * v).collect(),
    };
    curve.integrate_along(Some(shape), 0.5 * rho.grid.h, |p, _| sq.sample(p))
}

/// Crossing angle between each open end of the curve and the boundary tangent plane.
pub fn transversality(curve: &PolyCurve, shape: &Shape) -> Vec<f64> {
    if curve.closed {
        return Vec::new();
    }
    let ts = curve.segment_tangents();
    let n = curve.points.len();
    let ends = [(curve.points[0], ts[0]), (curve.points[n - 1], ts[ts.len() - 1])];
    ends.iter()
        .map(|(p, t)| t.dot(&shape.normal(p)).abs().clamp(0.0, 1.0).asin())
        .collect()
}

fn boundary_crossing(shape: &Shape, inside: Vec3, outside: Vec3) -> Vec3 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if shape.distance(&(inside + (outside - inside) * mid)) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    inside + (outside - inside) * (0.5 * (lo + hi))
}

/// Portion of the segment inside a convex domain.
pub fn clip_segment(shape: &Shape, a: Vec3, b: Vec3) -> Option<(Vec3, Vec3)> {
    let (ia, ib) = (shape.distance(&a) < 0.0, shape.distance(&b) < 0.0);
    match (ia, ib) {
        (true, true) => Some((a, b)),
        (true, false) => Some((a, boundary_crossing(shape, a, b))),
        (false, true) => Some((boundary_crossing(shape, b, a), b)),
        (false, false) => {
            // a chord may still pass through: test the closest point to the centre
            let c = shape.center();
            let d = b - a;
            let t = ((c - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
            let m = a + d * t;
            if shape.distance(&m) < 0.0 {
                Some((boundary_crossing(shape, m, a), boundary_crossing(shape, m, b)))
            } else {
                None
            }
        }
    }
}

pub fn any_perpendicular(t: &Vec3) -> Vec3 {
    let a = if t.x.abs() < 0.6 { Vec3::x() } else if t.y.abs() < 0.6 { Vec3::y() } else { Vec3::z() };
    (a - t * t.dot(&a)).normalize()
}

/// Curve with an orthonormal frame `(T, e1, e2)` at each vertex.
#[derive(Clone, Debug)]
pub struct FramedCurve {
    pub curve: PolyCurve,
    pub tangents: Vec<Vec3>,
    pub e1: Vec<Vec3>,
    pub e2: Vec<Vec3>,
    /// Rotation about the tangent accumulated around a closed curve (zero when open).
    pub holonomy: f64,
}

impl FramedCurve {
    /// Rotation-minimising frame by double reflection, seeded with `e1_start`
    /// (projected onto the normal plane) or an arbitrary perpendicular.
    pub fn parallel_transport(curve: &PolyCurve, e1_start: Option<Vec3>) -> Result<Self> {
        let t = curve.vertex_tangents();
        let n = curve.points.len();
        let mut e1 = Vec::with_capacity(n);
        let seed = match e1_start {
            Some(v) => {
                let p = v - t[0] * t[0].dot(&v);
                if p.norm() < 1e-12 {
                    return Err(GlError::Geometry("initial frame vector is tangent".into()));
                }
                p.normalize()
            }
            None => any_perpendicular(&t[0]),
        };
        e1.push(seed);
        for i in 0..n - 1 {
            e1.push(double_reflect(curve.points[i], curve.points[i + 1], t[i], t[i + 1], e1[i]));
        }
        let e2: Vec<Vec3> = (0..n).map(|i| t[i].cross(&e1[i])).collect();
        let holonomy = if curve.closed {
            let last = double_reflect(curve.points[n - 1], curve.points[0], t[n - 1], t[0], e1[n - 1]);
            let y = t[0].cross(&e1[0]);
            last.dot(&y).atan2(last.dot(&e1[0]))
        } else {
            0.0
        };
        Ok(FramedCurve { curve: curve.clone(), tangents: t, e1, e2, holonomy })
    }

    /// Largest deviation from orthonormality over all vertex frames.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.tangents.len() {
            let (t, a, b) = (self.tangents[i], self.e1[i], self.e2[i]);
            for v in [t.dot(&a), t.dot(&b), a.dot(&b), t.norm() - 1.0, a.norm() - 1.0, b.norm() - 1.0] {
                m = m.max(v.abs());
            }
        }
        m
    }

    /// Largest twist rate `|de1/ds . e2|` between consecutive vertices.
    pub fn max_twist(&self) -> f64 {
        let cum = self.curve.arclength();
        (0..self.e1.len() - 1)
            .map(|i| {
                let ds = cum[i + 1] - cum[i];
                ((self.e1[i + 1] - self.e1[i]) / ds).dot(&(0.5 * (self.e2[i] + self.e2[i + 1]))).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn double_reflect(x0: Vec3, x1: Vec3, t0: Vec3, t1: Vec3, r0: Vec3) -> Vec3 {
    let v1 = x1 - x0;
    let c1 = v1.dot(&v1);
    if c1 == 0.0 {
        return r0;
    }
    let rl = r0 - v1 * (2.0 / c1 * v1.dot(&r0));
    let tl = t0 - v1 * (2.0 / c1 * v1.dot(&t0));
    let v2 = t1 - tl;
    let c2 = v2.dot(&v2);
    let r1 = if c2 > 1e-300 { rl - v2 * (2.0 / c2 * v2.dot(&rl)) } else { rl };
    (r1 - t1 * t1.dot(&r1)).normalize()
}

/// Nearest-point data of a point relative to a framed curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TubularCoords {
    /// Arc length of the nearest point.
    pub s: f64,
    pub v: f64,
    pub w: f64,
    /// Distance to the curve.
    pub distance: f64,
    /// Segment holding the nearest point.
    pub segment: usize,
}

/// Tube of radius `delta` about a framed curve, with a spatial hash of segments.
#[derive(Clone, Debug)]
pub struct Tube {
    pub framed: FramedCurve,
    pub delta: f64,
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<u32>>,
    cum: Vec<f64>,
}

impl Tube {
    pub fn new(framed: FramedCurve, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(GlError::Geometry("tube radius must be positive".into()));
        }
        let cell = delta.max(1e-9);
        let mut buckets: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (si, (a, b)) in framed.curve.segments().enumerate() {
            let lo = a.inf(&b) - Vec3::from_element(delta);
            let hi = a.sup(&b) + Vec3::from_element(delta);
            let kl = key(&lo, cell);
            let kh = key(&hi, cell);
            for i in kl.0..=kh.0 {
                for j in kl.1..=kh.1 {
                    for k in kl.2..=kh.2 {
                        buckets.entry((i, j, k)).or_default().push(si as u32);
                    }
                }
            }
        }
        let cum = framed.curve.arclength();
        Ok(Tube { framed, delta, cell, buckets, cum })
    }

    /// Tubular coordinates if `x` is within `delta` of the curve.
    pub fn coords(&self, x: &Vec3) -> Option<TubularCoords> {
        let cands = self.buckets.get(&key(x, self.cell))?;
        let c = &self.framed.curve;
        let n = c.points.len();
        let mut best: Option<(f64, usize, f64)> = None;
        for &si in cands {
            let si = si as usize;
            let (a, b) = (c.points[si], c.points[(si + 1) % n]);
            let d = b - a;
            let t = ((x - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
            let dist = (x - (a + d * t)).norm();
            if best.map_or(true, |(bd, _, _)| dist < bd) {
                best = Some((dist, si, t));
            }
        }
        let (dist, si, t) = best?;
        if dist >= self.delta {
            return None;
        }
        let (a, b) = (c.points[si], c.points[(si + 1) % n]);
        let p = a + (b - a) * t;
        let (tan, e1) = self.frame_on_segment(si, t);
        let e2 = tan.cross(&e1);
        let xp = x - p;
        Some(TubularCoords {
            s: self.cum[si] + t * (self.cum[si + 1] - self.cum[si]),
            v: xp.dot(&e1),
            w: xp.dot(&e2),
            distance: dist,
            segment: si,
        })
    }

    fn frame_on_segment(&self, si: usize, t: f64) -> (Vec3, Vec3) {
        let f = &self.framed;
        let n = f.curve.points.len();
        let j = (si + 1) % n;
        let tan = if t > 0.0 && t < 1.0 {
            (f.curve.points[j] - f.curve.points[si]).normalize()
        } else if t <= 0.0 {
            f.tangents[si]
        } else {
            f.tangents[j]
        };
        let e = f.e1[si] * (1.0 - t) + f.e1[j] * t;
        let e = (e - tan * tan.dot(&e)).normalize();
        (tan, e)
    }

    /// Point with tubular coordinates `(s, v, w)`.
    pub fn reconstruct(&self, s: f64, v: f64, w: f64) -> Vec3 {
        let c = &self.framed.curve;
        let total = *self.cum.last().unwrap();
        let s = s.clamp(0.0, total);
        let si = match self.cum.binary_search_by(|q| q.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(c.n_segments() - 1),
            Err(i) => i.saturating_sub(1).min(c.n_segments() - 1),
        };
        let t = (s - self.cum[si]) / (self.cum[si + 1] - self.cum[si]);
        let n = c.points.len();
        let p = c.points[si] + (c.points[(si + 1) % n] - c.points[si]) * t;
        let (tan, e1) = self.frame_on_segment(si, t);
        p + v * e1 + w * tan.cross(&e1)
    }

    /// Volume factor `1 - x_perp . Gamma''(s)` of the tubular change of variables.
    pub fn volume_jacobian(&self, x: &Vec3) -> Option<f64> {
        let tc = self.coords(x)?;
        let kappa = self.framed.curve.vertex_curvature();
        let n = self.framed.curve.points.len();
        let si = tc.segment;
        let j = (si + 1) % n;
        let t = (tc.s - self.cum[si]) / (self.cum[si + 1] - self.cum[si]);
        let k = kappa[si] * (1.0 - t) + kappa[j] * t;
        let p = self.reconstruct(tc.s, 0.0, 0.0);
        Some(1.0 - (x - p).dot(&k))
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        self.coords(x).is_some()
    }
}

fn key(x: &Vec3, cell: f64) -> (i64, i64, i64) {
    ((x.x / cell).floor() as i64, (x.y / cell).floor() as i64, (x.z / cell).floor() as i64)
}

/// Closed loop made of an open curve inside the domain, straight extensions
/// of length `ext` along the exit tangents, radial legs out to `cap_radius`
/// about the domain centre, and a great-circle arc joining them.
///
/// Returns the loop and the number of vertices belonging to the original curve
/// (they come first).
pub fn extend_and_close(curve: &PolyCurve, shape: &Shape, ext: f64, cap_radius: f64) -> Result<(PolyCurve, usize)> {
    if curve.closed {
        return Ok((curve.clone(), curve.points.len()));
    }
    let ts = curve.segment_tangents();
    let n = curve.points.len();
    let start = curve.points[0];
    let end = curve.points[n - 1];
    let c = shape.center();
    let q_end = end + ts[ts.len() - 1] * ext;
    let q_start = start - ts[0] * ext;
    if shape.distance(&q_end) <= 0.0 || shape.distance(&q_start) <= 0.0 {
        return Err(GlError::Geometry("curve extension does not leave the domain".into()));
    }
    if cap_radius <= shape.bounding_radius() {
        return Err(GlError::Geometry("cap radius must exceed the domain radius".into()));
    }
    // straight pieces are single segments; the arc uses 48 segments per turn
    let mut pts = curve.points.clone();
    pts.push(q_end);
    let dir_e = (q_end - c).normalize();
    let dir_s = (q_start - c).normalize();
    let far_e = c + dir_e * cap_radius.max((q_end - c).norm());
    let far_s = c + dir_s * cap_radius.max((q_start - c).norm());
    pts.push(far_e);
    let cosang = dir_e.dot(&dir_s).clamp(-1.0, 1.0);
    let ang = cosang.acos();
    let mut perp = dir_s - dir_e * cosang;
    if perp.norm() < 1e-9 {
        perp = any_perpendicular(&dir_e);
    }
    let perp = perp.normalize();
    let r_e = (far_e - c).norm();
    let r_s = (far_s - c).norm();
    let m = ((ang * 24.0 / std::f64::consts::PI).ceil() as usize).max(2);
    for i in 1..m {
        let th = ang * i as f64 / m as f64;
        let r = r_e + (r_s - r_e) * i as f64 / m as f64;
        pts.push(c + r * (th.cos() * dir_e + th.sin() * perp));
    }
    pts.push(far_s);
    pts.push(q_start);
    Ok((PolyCurve::new(pts, true)?, n))
}

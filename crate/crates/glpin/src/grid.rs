//! Staggered Cartesian lattice.
//!
//! Scalars live on nodes or cells, vector fields on edges (tangential
//! components, line integral divided by `h`) or faces (normal components,
//! flux divided by `h^2`). Every component array has `nx*ny*nz` entries in
//! x-fastest order; entries whose geometric object would leave the box are
//! kept at zero.
//!
//! Index conventions for entry `(i, j, k)`:
//!
//! - edge x joins node `(i,j,k)` to `(i+1,j,k)`
//! - face x is the plaquette centred at `(i, j+1/2, k+1/2)`
//! - cell `(i,j,k)` is centred at `(i+1/2, j+1/2, k+1/2)`
//!
//! The primal operators `grad` (node to edge), `curl` (edge to face) and
//! `div` (face to cell) form a complex; the dual operators (cell to face,
//! face to edge, edge to node) are their negative transposes or transposes,
//! so `div curl = 0` and `curl grad = 0` hold exactly in both directions.

use crate::error::{GlError, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Placement {
    Node,
    Edge,
    Face,
    Cell,
}

impl Placement {
    pub fn code(self) -> u32 {
        match self {
            Placement::Node => 0,
            Placement::Edge => 1,
            Placement::Face => 2,
            Placement::Cell => 3,
        }
    }

    pub fn from_code(c: u32) -> Result<Self> {
        Ok(match c {
            0 => Placement::Node,
            1 => Placement::Edge,
            2 => Placement::Face,
            3 => Placement::Cell,
            _ => return Err(GlError::Format(format!("unknown placement code {c}"))),
        })
    }

    /// Offset of component `comp` from the node lattice, in units of `h`.
    pub fn offset(self, comp: usize) -> [f64; 3] {
        match self {
            Placement::Node => [0.0; 3],
            Placement::Cell => [0.5; 3],
            Placement::Edge => {
                let mut o = [0.0; 3];
                o[comp] = 0.5;
                o
            }
            Placement::Face => {
                let mut o = [0.5; 3];
                o[comp] = 0.0;
                o
            }
        }
    }

    /// Number of valid entries along each axis for component `comp`.
    pub fn extent(self, dims: [usize; 3], comp: usize) -> [usize; 3] {
        let o = self.offset(comp);
        let mut e = dims;
        for a in 0..3 {
            if o[a] > 0.0 {
                e[a] -= 1;
            }
        }
        e
    }

    fn expect(self, want: Placement) -> Result<()> {
        if self == want {
            Ok(())
        } else {
            Err(GlError::Placement {
                expected: format!("{want:?}"),
                found: format!("{self:?}"),
            })
        }
    }
}

/// Uniform box of `dims` nodes with spacing `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: [f64; 3],
    pub h: f64,
    pub dims: [usize; 3],
}

impl Grid {
    pub fn new(origin: [f64; 3], h: f64, dims: [usize; 3]) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(GlError::Grid(format!("spacing must be positive, got {h}")));
        }
        if dims.iter().any(|&n| n < 2) {
            return Err(GlError::Grid(format!("need at least 2 nodes per axis, got {dims:?}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(GlError::Grid("non-finite origin".into()));
        }
        Ok(Grid { origin, h, dims })
    }

    /// Cube whose central cell is centred at `center`, with `half` cells on each side of it.
    pub fn cell_centered(center: Vec3, half: usize, h: f64) -> Result<Self> {
        let off = (half as f64 + 0.5) * h;
        let n = 2 * half + 2;
        Grid::new([center.x - off, center.y - off, center.z - off], h, [n; 3])
    }

    /// Cube with a node at `center` and `half` cells on each side of it.
    pub fn node_centered(center: Vec3, half: usize, h: f64) -> Result<Self> {
        let off = half as f64 * h;
        let n = 2 * half + 1;
        Grid::new([center.x - off, center.y - off, center.z - off], h, [n; 3])
    }

    /// Smallest node-centred cube of spacing `h` covering a ball plus `pad` cells.
    pub fn around_ball(center: Vec3, radius: f64, h: f64, pad: usize) -> Result<Self> {
        let half = (radius / h).ceil() as usize + pad;
        Grid::node_centered(center, half, h)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn ijk(&self, n: usize) -> (usize, usize, usize) {
        let i = n % self.dims[0];
        let r = n / self.dims[0];
        (i, r % self.dims[1], r / self.dims[1])
    }

    /// Linear stride along axis `a`.
    #[inline]
    pub fn stride(&self, a: usize) -> usize {
        match a {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    pub fn origin(&self) -> Vec3 {
        Vec3::new(self.origin[0], self.origin[1], self.origin[2])
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.position(Placement::Node, 0, i, j, k)
    }

    pub fn position(&self, p: Placement, comp: usize, i: usize, j: usize, k: usize) -> Vec3 {
        let o = p.offset(comp);
        Vec3::new(
            self.origin[0] + (i as f64 + o[0]) * self.h,
            self.origin[1] + (j as f64 + o[1]) * self.h,
            self.origin[2] + (k as f64 + o[2]) * self.h,
        )
    }

    #[inline]
    pub fn valid(&self, p: Placement, comp: usize, i: usize, j: usize, k: usize) -> bool {
        let e = p.extent(self.dims, comp);
        i < e[0] && j < e[1] && k < e[2]
    }

    pub fn upper(&self) -> Vec3 {
        self.origin() + Vec3::from_element(self.h).component_mul(&Vec3::new(
            (self.dims[0] - 1) as f64,
            (self.dims[1] - 1) as f64,
            (self.dims[2] - 1) as f64,
        ))
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        let lo = self.origin();
        let hi = self.upper();
        (0..3).all(|a| x[a] >= lo[a] && x[a] <= hi[a])
    }

    /// Whether node `(i,j,k)` lies on the box surface.
    pub fn on_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        i == 0
            || j == 0
            || k == 0
            || i + 1 == self.dims[0]
            || j + 1 == self.dims[1]
            || k + 1 == self.dims[2]
    }

    /// Whether edge `comp` at `(i,j,k)` lies in the box surface.
    pub fn edge_on_boundary(&self, comp: usize, i: usize, j: usize, k: usize) -> bool {
        let ijk = [i, j, k];
        (0..3)
            .filter(|&a| a != comp)
            .any(|a| ijk[a] == 0 || ijk[a] + 1 == self.dims[a])
    }

    /// Whether face `comp` at `(i,j,k)` lies in the box surface.
    pub fn face_on_boundary(&self, comp: usize, i: usize, j: usize, k: usize) -> bool {
        let ijk = [i, j, k];
        ijk[comp] == 0 || ijk[comp] + 1 == self.dims[comp]
    }

    /// Iterate valid `(i,j,k,linear)` for a placement and component.
    pub fn for_each(&self, p: Placement, comp: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
        let e = p.extent(self.dims, comp);
        for k in 0..e[2] {
            for j in 0..e[1] {
                let base = self.idx(0, j, k);
                for i in 0..e[0] {
                    f(i, j, k, base + i);
                }
            }
        }
    }
}

/// Scalar on nodes or cells.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub placement: Placement,
    pub values: Vec<f64>,
}

/// Vector on edges or faces, one array per component.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub placement: Placement,
    pub comps: [Vec<f64>; 3],
}

/// Complex order parameter on nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid, placement: Placement) -> Self {
        assert!(matches!(placement, Placement::Node | Placement::Cell));
        ScalarField { grid, placement, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, placement: Placement, c: f64) -> Self {
        let mut f = Self::zeros(grid, placement);
        grid.for_each(placement, 0, |_, _, _, n| f.values[n] = c);
        f
    }

    pub fn from_fn(grid: Grid, placement: Placement, f: impl Fn(Vec3) -> f64) -> Self {
        let mut out = Self::zeros(grid, placement);
        grid.for_each(placement, 0, |i, j, k, n| {
            out.values[n] = f(grid.position(placement, 0, i, j, k));
        });
        out
    }

    /// Trilinear interpolation; points outside the valid lattice are clamped.
    pub fn sample(&self, x: &Vec3) -> f64 {
        interpolate(&self.values, &self.grid, self.placement, 0, x)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl VectorField {
    pub fn zeros(grid: Grid, placement: Placement) -> Self {
        assert!(matches!(placement, Placement::Edge | Placement::Face));
        let n = grid.len();
        VectorField { grid, placement, comps: [vec![0.0; n], vec![0.0; n], vec![0.0; n]] }
    }

    /// Sample the relevant component of `f` at each edge midpoint or face centre.
    pub fn from_fn(grid: Grid, placement: Placement, f: impl Fn(Vec3) -> Vec3) -> Self {
        let mut out = Self::zeros(grid, placement);
        for c in 0..3 {
            let vals = &mut out.comps[c];
            grid.for_each(placement, c, |i, j, k, n| {
                vals[n] = f(grid.position(placement, c, i, j, k))[c];
            });
        }
        out
    }

    /// Edge field from exact line integrals: `line(a, b)` integrates from `a` to `b`.
    pub fn from_line_integrals(grid: Grid, line: impl Fn(Vec3, Vec3) -> f64) -> Self {
        let mut out = Self::zeros(grid, Placement::Edge);
        for c in 0..3 {
            let mut step = Vec3::zeros();
            step[c] = grid.h;
            let vals = &mut out.comps[c];
            grid.for_each(Placement::Edge, c, |i, j, k, n| {
                let a = grid.node(i, j, k);
                vals[n] = line(a, a + step) / grid.h;
            });
        }
        out
    }

    /// Interpolated vector at `x`, each component from its own staggered lattice.
    pub fn sample(&self, x: &Vec3) -> Vec3 {
        Vec3::new(
            interpolate(&self.comps[0], &self.grid, self.placement, 0, x),
            interpolate(&self.comps[1], &self.grid, self.placement, 1, x),
            interpolate(&self.comps[2], &self.grid, self.placement, 2, x),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.comps.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn axpy(&mut self, s: f64, other: &VectorField) {
        for c in 0..3 {
            for (a, b) in self.comps[c].iter_mut().zip(&other.comps[c]) {
                *a += s * b;
            }
        }
    }
}

impl ComplexField {
    pub fn zeros(grid: Grid) -> Self {
        ComplexField { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Vec3) -> Complex64) -> Self {
        let mut out = Self::zeros(grid);
        grid.for_each(Placement::Node, 0, |i, j, k, n| out.values[n] = f(grid.node(i, j, k)));
        out
    }

    pub fn modulus(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            placement: Placement::Node,
            values: self.values.iter().map(|z| z.norm()).collect(),
        }
    }
}

/// Trilinear interpolation of one staggered component.
pub fn interpolate(values: &[f64], grid: &Grid, p: Placement, comp: usize, x: &Vec3) -> f64 {
    let o = p.offset(comp);
    let e = p.extent(grid.dims, comp);
    let mut base = [0usize; 3];
    let mut t = [0.0; 3];
    for a in 0..3 {
        let q = (x[a] - grid.origin[a]) / grid.h - o[a];
        if e[a] < 2 {
            base[a] = 0;
            t[a] = 0.0;
            continue;
        }
        let qmax = (e[a] - 1) as f64;
        let q = q.clamp(0.0, qmax);
        let b = (q.floor() as usize).min(e[a] - 2);
        base[a] = b;
        t[a] = q - b as f64;
    }
    let mut acc = 0.0;
    for dk in 0..2 {
        let wk = if dk == 0 { 1.0 - t[2] } else { t[2] };
        if wk == 0.0 {
            continue;
        }
        for dj in 0..2 {
            let wj = if dj == 0 { 1.0 - t[1] } else { t[1] };
            if wj == 0.0 {
                continue;
            }
            for di in 0..2 {
                let wi = if di == 0 { 1.0 - t[0] } else { t[0] };
                if wi == 0.0 {
                    continue;
                }
                let n = grid.idx(base[0] + di, base[1] + dj, base[2] + dk);
                acc += wi * wj * wk * values[n];
            }
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Operators on raw component arrays. Out-of-range reads are treated as zero.

#[inline]
fn at(v: &[f64], g: &Grid, p: Placement, c: usize, i: isize, j: isize, k: isize) -> f64 {
    if i < 0 || j < 0 || k < 0 {
        return 0.0;
    }
    let (i, j, k) = (i as usize, j as usize, k as usize);
    if g.valid(p, c, i, j, k) {
        v[g.idx(i, j, k)]
    } else {
        0.0
    }
}

fn axis_step(a: usize) -> [isize; 3] {
    let mut d = [0isize; 3];
    d[a] = 1;
    d
}

/// Node scalar to edge vector: forward differences.
pub fn grad_node_raw(g: &Grid, f: &[f64], out: &mut [Vec<f64>; 3]) {
    let inv = 1.0 / g.h;
    for c in 0..3 {
        let s = g.stride(c);
        let o = &mut out[c];
        g.for_each(Placement::Edge, c, |_, _, _, n| o[n] = (f[n + s] - f[n]) * inv);
    }
}

/// Edge vector to face vector.
pub fn curl_edge_raw(g: &Grid, e: &[Vec<f64>; 3], out: &mut [Vec<f64>; 3]) {
    let inv = 1.0 / g.h;
    for c in 0..3 {
        let a = (c + 1) % 3;
        let b = (c + 2) % 3;
        let sa = g.stride(a);
        let sb = g.stride(b);
        let o = &mut out[c];
        // (curl E)_c = d_a E_b - d_b E_a
        g.for_each(Placement::Face, c, |_, _, _, n| {
            o[n] = ((e[b][n + sa] - e[b][n]) - (e[a][n + sb] - e[a][n])) * inv;
        });
    }
}

/// Face vector to cell scalar.
pub fn div_face_raw(g: &Grid, f: &[Vec<f64>; 3], out: &mut [f64]) {
    let inv = 1.0 / g.h;
    g.for_each(Placement::Cell, 0, |_, _, _, n| {
        let mut s = 0.0;
        for c in 0..3 {
            s += f[c][n + g.stride(c)] - f[c][n];
        }
        out[n] = s * inv;
    });
}

/// Face vector to edge vector; the transpose of [`curl_edge_raw`].
pub fn curl_face_raw(g: &Grid, f: &[Vec<f64>; 3], out: &mut [Vec<f64>; 3]) {
    let inv = 1.0 / g.h;
    for c in 0..3 {
        let a = (c + 1) % 3;
        let b = (c + 2) % 3;
        let da = axis_step(a);
        let db = axis_step(b);
        let o = &mut out[c];
        g.for_each(Placement::Edge, c, |i, j, k, n| {
            let (ii, jj, kk) = (i as isize, j as isize, k as isize);
            let fb = at(&f[b], g, Placement::Face, b, ii, jj, kk)
                - at(&f[b], g, Placement::Face, b, ii - da[0], jj - da[1], kk - da[2]);
            let fa = at(&f[a], g, Placement::Face, a, ii, jj, kk)
                - at(&f[a], g, Placement::Face, a, ii - db[0], jj - db[1], kk - db[2]);
            o[n] = (fb - fa) * inv;
        });
    }
}

/// Cell scalar to face vector; `-div^T`, with cells outside the box read as zero.
pub fn grad_cell_raw(g: &Grid, f: &[f64], out: &mut [Vec<f64>; 3]) {
    let inv = 1.0 / g.h;
    for c in 0..3 {
        let d = axis_step(c);
        let o = &mut out[c];
        g.for_each(Placement::Face, c, |i, j, k, n| {
            let (ii, jj, kk) = (i as isize, j as isize, k as isize);
            let hi = at(f, g, Placement::Cell, 0, ii, jj, kk);
            let lo = at(f, g, Placement::Cell, 0, ii - d[0], jj - d[1], kk - d[2]);
            o[n] = (hi - lo) * inv;
        });
    }
}

/// Edge vector to node scalar; `-grad^T`.
pub fn div_edge_raw(g: &Grid, e: &[Vec<f64>; 3], out: &mut [f64]) {
    let inv = 1.0 / g.h;
    g.for_each(Placement::Node, 0, |i, j, k, n| {
        let mut s = 0.0;
        let (ii, jj, kk) = (i as isize, j as isize, k as isize);
        for c in 0..3 {
            let d = axis_step(c);
            s += at(&e[c], g, Placement::Edge, c, ii, jj, kk)
                - at(&e[c], g, Placement::Edge, c, ii - d[0], jj - d[1], kk - d[2]);
        }
        out[n] = s * inv;
    });
}

fn zero3(n: usize) -> [Vec<f64>; 3] {
    [vec![0.0; n], vec![0.0; n], vec![0.0; n]]
}

/// Discrete gradient: node to edge, or cell to face.
pub fn grad(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let mut comps = zero3(g.len());
    let placement = match f.placement {
        Placement::Node => {
            grad_node_raw(&g, &f.values, &mut comps);
            Placement::Edge
        }
        _ => {
            grad_cell_raw(&g, &f.values, &mut comps);
            Placement::Face
        }
    };
    VectorField { grid: g, placement, comps }
}

/// Discrete curl: edge to face, or face to edge.
pub fn curl(v: &VectorField) -> VectorField {
    let g = v.grid;
    let mut comps = zero3(g.len());
    let placement = match v.placement {
        Placement::Edge => {
            curl_edge_raw(&g, &v.comps, &mut comps);
            Placement::Face
        }
        _ => {
            curl_face_raw(&g, &v.comps, &mut comps);
            Placement::Edge
        }
    };
    VectorField { grid: g, placement, comps }
}

/// Discrete divergence: face to cell, or edge to node.
pub fn div(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let mut values = vec![0.0; g.len()];
    let placement = match v.placement {
        Placement::Face => {
            div_face_raw(&g, &v.comps, &mut values);
            Placement::Cell
        }
        _ => {
            div_edge_raw(&g, &v.comps, &mut values);
            Placement::Node
        }
    };
    ScalarField { grid: g, placement, values }
}

/// Euclidean inner product over all valid entries times `h^3`.
pub fn inner(a: &VectorField, b: &VectorField) -> Result<f64> {
    a.placement.expect(b.placement)?;
    let g = a.grid;
    let mut s = 0.0;
    for c in 0..3 {
        g.for_each(a.placement, c, |_, _, _, n| s += a.comps[c][n] * b.comps[c][n]);
    }
    Ok(s * g.h.powi(3))
}

// ---------------------------------------------------------------------------
// Domains.

/// Smooth bounded domain given by a signed distance (negative inside).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Ball { center: [f64; 3], radius: f64 },
}

impl Shape {
    pub fn ball(center: Vec3, radius: f64) -> Self {
        Shape::Ball { center: [center.x, center.y, center.z], radius }
    }

    pub fn distance(&self, x: &Vec3) -> f64 {
        match *self {
            Shape::Ball { center, radius } => {
                (x - Vec3::new(center[0], center[1], center[2])).norm() - radius
            }
        }
    }

    /// Outward unit normal of the level set through `x`.
    pub fn normal(&self, x: &Vec3) -> Vec3 {
        match *self {
            Shape::Ball { center, .. } => {
                let r = x - Vec3::new(center[0], center[1], center[2]);
                let n = r.norm();
                if n > 0.0 {
                    r / n
                } else {
                    Vec3::z()
                }
            }
        }
    }

    /// Nearest boundary point.
    pub fn project(&self, x: &Vec3) -> Vec3 {
        x - self.distance(x) * self.normal(x)
    }

    pub fn center(&self) -> Vec3 {
        match *self {
            Shape::Ball { center, .. } => Vec3::new(center[0], center[1], center[2]),
        }
    }

    /// Radius of a ball about [`Shape::center`] containing the domain.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Ball { radius, .. } => radius,
        }
    }

    pub fn volume(&self) -> f64 {
        match *self {
            Shape::Ball { radius, .. } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        }
    }
}

/// A shape discretised on a grid.
///
/// The lattice functionals use the staircase set of in-cells (cell centre
/// inside). An in-face separates two in-cells. An edge is kinetic when it
/// bounds an in-face; its weight is the number of adjacent in-cells over 4.
/// A node weight is the number of adjacent in-cells over 8.
#[derive(Clone, Debug)]
pub struct Domain {
    pub shape: Shape,
    pub grid: Grid,
    cell_in: Vec<bool>,
    edge_count: [Vec<u8>; 3],
    node_count: Vec<u8>,
}

impl Domain {
    pub fn new(shape: Shape, grid: Grid) -> Result<Self> {
        let c = shape.center();
        let r = shape.bounding_radius();
        let lo = grid.origin();
        let hi = grid.upper();
        for a in 0..3 {
            if c[a] - r <= lo[a] + 0.5 * grid.h || c[a] + r >= hi[a] - 0.5 * grid.h {
                return Err(GlError::Grid(format!(
                    "domain does not fit strictly inside the box along axis {a}"
                )));
            }
        }
        let n = grid.len();
        let mut cell_in = vec![false; n];
        grid.for_each(Placement::Cell, 0, |i, j, k, m| {
            cell_in[m] = shape.distance(&grid.position(Placement::Cell, 0, i, j, k)) < 0.0;
        });
        let cin = |i: isize, j: isize, k: isize| -> bool {
            i >= 0
                && j >= 0
                && k >= 0
                && grid.valid(Placement::Cell, 0, i as usize, j as usize, k as usize)
                && cell_in[grid.idx(i as usize, j as usize, k as usize)]
        };
        let mut node_count = vec![0u8; n];
        grid.for_each(Placement::Node, 0, |i, j, k, m| {
            let (i, j, k) = (i as isize, j as isize, k as isize);
            let mut cnt = 0u8;
            for dk in -1..1 {
                for dj in -1..1 {
                    for di in -1..1 {
                        cnt += cin(i + di, j + dj, k + dk) as u8;
                    }
                }
            }
            node_count[m] = cnt;
        });
        let mut edge_count = [vec![0u8; n], vec![0u8; n], vec![0u8; n]];
        for c in 0..3 {
            let a = (c + 1) % 3;
            let b = (c + 2) % 3;
            let ec = &mut edge_count[c];
            grid.for_each(Placement::Edge, c, |i, j, k, m| {
                // ring of the four cells around the edge, in cyclic order
                let base = [i as isize, j as isize, k as isize];
                let ring: [bool; 4] = [(0, 0), (-1, 0), (-1, -1), (0, -1)].map(|(da, db)| {
                    let mut p = base;
                    p[a] += da;
                    p[b] += db;
                    cin(p[0], p[1], p[2])
                });
                let has_face = (0..4).any(|q| ring[q] && ring[(q + 1) % 4]);
                if has_face {
                    ec[m] = ring.iter().filter(|&&x| x).count() as u8;
                }
            });
        }
        Ok(Domain { shape, grid, cell_in, edge_count, node_count })
    }

    /// Ball of given radius on a node-centred grid with `cells_across` cells per diameter.
    pub fn ball(center: Vec3, radius: f64, cells_across: usize, pad: usize) -> Result<Self> {
        let h = 2.0 * radius / cells_across as f64;
        Domain::new(Shape::ball(center, radius), Grid::around_ball(center, radius, h, pad)?)
    }

    /// Ball on a grid whose central cell is centred at the ball centre, spacing `h`.
    pub fn ball_cell_centered(center: Vec3, radius: f64, h: f64, pad: usize) -> Result<Self> {
        let half = (radius / h).ceil() as usize + pad;
        Domain::new(Shape::ball(center, radius), Grid::cell_centered(center, half, h)?)
    }

    #[inline]
    pub fn cell_in(&self, n: usize) -> bool {
        self.cell_in[n]
    }

    #[inline]
    pub fn edge_weight(&self, comp: usize, n: usize) -> f64 {
        self.edge_count[comp][n] as f64 * 0.25
    }

    #[inline]
    pub fn node_weight(&self, n: usize) -> f64 {
        self.node_count[n] as f64 * 0.125
    }

    /// Node touched by at least one kinetic edge.
    pub fn node_kinetic(&self, n: usize) -> bool {
        let g = &self.grid;
        let (i, j, k) = g.ijk(n);
        let ijk = [i, j, k];
        (0..3).any(|c| {
            let s = g.stride(c);
            (ijk[c] + 1 < g.dims[c] && self.edge_count[c][n] > 0)
                || (ijk[c] > 0 && self.edge_count[c][n - s] > 0)
        })
    }

    /// Face separating two in-cells.
    pub fn face_in(&self, comp: usize, i: usize, j: usize, k: usize) -> bool {
        let g = &self.grid;
        if !g.valid(Placement::Face, comp, i, j, k) || g.face_on_boundary(comp, i, j, k) {
            return false;
        }
        let n = g.idx(i, j, k);
        self.cell_in[n] && self.cell_in[n - g.stride(comp)]
    }

    /// Visit every kinetic edge as `(comp, tail node, head node, weight)`.
    pub fn for_each_kinetic_edge(&self, mut f: impl FnMut(usize, usize, usize, f64)) {
        let g = self.grid;
        for c in 0..3 {
            let s = g.stride(c);
            let ec = &self.edge_count[c];
            g.for_each(Placement::Edge, c, |_, _, _, n| {
                if ec[n] > 0 {
                    f(c, n, n + s, ec[n] as f64 * 0.25);
                }
            });
        }
    }

    pub fn inside(&self, x: &Vec3) -> bool {
        self.shape.distance(x) < 0.0
    }

    /// Staircase volume (number of in-cells times `h^3`).
    pub fn staircase_volume(&self) -> f64 {
        self.cell_in.iter().filter(|&&b| b).count() as f64 * self.grid.h.powi(3)
    }
}

// ---------------------------------------------------------------------------
// Cut-cell quadrature.

/// Integration region for [`integrate`].
pub enum Region<'a> {
    Box,
    Omega,
    /// Points of the domain where the predicate holds, tested at sub-cell centroids.
    OmegaWhere(&'a dyn Fn(&Vec3) -> bool),
}

const GL2: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];

/// Gauss-Legendre pieces of `[0,1]` split at the given breakpoints.
fn pieces(mut cuts: Vec<f64>, mut f: impl FnMut(f64, f64)) {
    cuts.retain(|c| *c > 0.0 && *c < 1.0);
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let m = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        for (x, wt) in GL2 {
            f(m + r * x, wt * r);
        }
    }
}

/// Volume and centroid of `{xi in [0,1]^3 : n . xi < t}`.
///
/// The integrand in the dominant axis is a clamped linear function, so
/// splitting at its kinks and applying two-point Gauss rules is exact.
pub fn unit_cube_cut(n: [f64; 3], t: f64) -> (f64, [f64; 3]) {
    let mut perm = [0usize, 1, 2];
    perm.sort_by(|&a, &b| n[b].abs().partial_cmp(&n[a].abs()).unwrap());
    let z = perm[0];
    let (x, y) = (perm[1], perm[2]);
    if n[z] == 0.0 {
        return if t > 0.0 { (1.0, [0.5; 3]) } else { (0.0, [0.5; 3]) };
    }
    let flip = n[z] < 0.0;
    let (nz, tt) = if flip { (-n[z], t - n[z]) } else { (n[z], t) };
    let (nx, ny) = (n[x], n[y]);
    // length along z at (u,v) is clamp((tt - nx u - ny v)/nz, 0, 1)
    let a0 = tt / nz;
    let ax = nx / nz;
    let b = ny / nz;
    let mut vol = 0.0;
    let mut mu = 0.0;
    let mut mv = 0.0;
    let mut mz = 0.0;
    let mut ucuts = Vec::with_capacity(4);
    for lvl in [0.0, 1.0] {
        for v in [0.0, 1.0] {
            if ax != 0.0 {
                ucuts.push((a0 - b * v - lvl) / ax);
            }
        }
    }
    pieces(ucuts, |u, wu| {
        let a = a0 - ax * u;
        let mut vcuts = Vec::with_capacity(2);
        if b != 0.0 {
            vcuts.push(a / b);
            vcuts.push((a - 1.0) / b);
        }
        let mut g = 0.0;
        let mut gv = 0.0;
        let mut gz = 0.0;
        pieces(vcuts, |v, wv| {
            let len = (a - b * v).clamp(0.0, 1.0);
            g += wv * len;
            gv += wv * v * len;
            gz += wv * 0.5 * len * len;
        });
        vol += wu * g;
        mu += wu * u * g;
        mv += wu * gv;
        mz += wu * gz;
    });
    let mut c = [0.5; 3];
    if vol > 0.0 {
        c[x] = mu / vol;
        c[y] = mv / vol;
        c[z] = if flip { 1.0 - mz / vol } else { mz / vol };
    }
    (vol, c)
}

/// Inside volume and centroid of the cell with lower corner `corner`,
/// using the signed distance linearised at the cell centre.
pub fn cell_cut(shape: &Shape, corner: Vec3, h: f64) -> (f64, Vec3) {
    let c = corner + Vec3::from_element(0.5 * h);
    let d = shape.distance(&c);
    if d <= -0.8661 * h {
        return (h.powi(3), c);
    }
    if d >= 0.8661 * h {
        return (0.0, c);
    }
    let g = shape.normal(&c);
    let t = -d / h + 0.5 * (g.x + g.y + g.z);
    let (v, xi) = unit_cube_cut([g.x, g.y, g.z], t);
    (v * h.powi(3), corner + h * Vec3::new(xi[0], xi[1], xi[2]))
}

/// Integral of a node or cell scalar over a region, second order in `h`.
pub fn integrate(f: &ScalarField, domain: &Domain, region: Region) -> f64 {
    let g = &f.grid;
    let h3 = g.h.powi(3);
    let mut sum = 0.0;
    g.for_each(Placement::Cell, 0, |i, j, k, _| {
        let corner = g.node(i, j, k);
        let (vol, x) = match region {
            Region::Box => (h3, corner + Vec3::from_element(0.5 * g.h)),
            _ => cell_cut(&domain.shape, corner, g.h),
        };
        if vol == 0.0 {
            return;
        }
        if let Region::OmegaWhere(pred) = region {
            if !pred(&x) {
                return;
            }
        }
        sum += vol * f.sample(&x);
    });
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cube_cut_half_space() {
        let (v, c) = unit_cube_cut([0.0, 0.0, 1.0], 0.25);
        assert_relative_eq!(v, 0.25, epsilon = 1e-14);
        assert_relative_eq!(c[2], 0.125, epsilon = 1e-14);
        let (v, c) = unit_cube_cut([-1.0, 0.0, 0.0], -0.25);
        assert_relative_eq!(v, 0.75, epsilon = 1e-14);
        assert_relative_eq!(c[0], 0.625, epsilon = 1e-14);
    }

    #[test]
    fn cube_cut_corner_tetrahedron() {
        let s = 1.0 / 3f64.sqrt();
        let (v, c) = unit_cube_cut([s, s, s], 0.5 * s);
        assert_relative_eq!(v, 0.125 / 6.0, epsilon = 1e-14);
        for a in c {
            assert_relative_eq!(a, 0.125, epsilon = 1e-13);
        }
    }

    #[test]
    fn interpolation_reproduces_linear() {
        let g = Grid::new([-1.0, -0.5, 0.2], 0.1, [12, 11, 10]).unwrap();
        let lin = |x: Vec3| 1.0 + 2.0 * x.x - x.y + 0.5 * x.z;
        let f = ScalarField::from_fn(g, Placement::Cell, lin);
        let p = Vec3::new(-0.43, 0.11, 0.61);
        assert_relative_eq!(f.sample(&p), lin(p), epsilon = 1e-12);
    }

    #[test]
    fn grad_of_linear_is_exact() {
        let g = Grid::new([0.0; 3], 0.25, [5, 6, 7]).unwrap();
        let f = ScalarField::from_fn(g, Placement::Node, |x| 3.0 * x.x - 2.0 * x.y + x.z);
        let e = grad(&f);
        g.for_each(Placement::Edge, 1, |_, _, _, n| assert_relative_eq!(e.comps[1][n], -2.0, epsilon = 1e-12));
    }

    #[test]
    fn staircase_weights_of_ball() {
        let d = Domain::ball(Vec3::zeros(), 1.0, 16, 2).unwrap();
        let g = d.grid;
        let mut interior = 0;
        g.for_each(Placement::Node, 0, |i, j, k, n| {
            let w = d.node_weight(n);
            assert!((0.0..=1.0).contains(&w));
            if g.node(i, j, k).norm() < 0.7 {
                assert_eq!(w, 1.0);
                interior += 1;
            }
        });
        assert!(interior > 0);
        assert!((d.staircase_volume() / d.shape.volume() - 1.0).abs() < 0.05);
    }
}

//! Weighted isoflux problem: maximise `<G, B0> / |rho^2 G|` over simple
//! curves that are loops in the closed domain or run between boundary points.
//!
//! The global search runs on a lattice graph with a 26-neighbour stencil.
//! Dinkelbach's parametric method reduces the ratio problem to a sequence of
//! linear problems `max <G,B0> - lambda |rho^2 G|`; each is answered by a
//! positive-cycle search followed by a longest boundary-to-boundary walk.
//! The winning lattice curve is then polished by projected gradient ascent
//! on vertex positions.

use crate::error::{GlError, Result};
use crate::geometry::{transversality, PolyCurve};
use crate::grid::{Placement, ScalarField, Shape, Vec3, VectorField};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Ratio functional data: the Meissner field, the squared weight and the
/// lattice used by the global search.
#[derive(Clone, Debug)]
pub struct IsofluxInstance {
    pub b0: VectorField,
    pub rho2: ScalarField,
    pub shape: Shape,
    /// Lattice spacing of the search graph.
    pub spacing: f64,
    pub eps: f64,
}

impl IsofluxInstance {
    pub fn new(b0: VectorField, rho2: ScalarField, shape: Shape, spacing: f64, eps: f64) -> Result<Self> {
        if b0.placement != Placement::Face {
            return Err(GlError::Placement { expected: "face".into(), found: format!("{:?}", b0.placement) });
        }
        if rho2.placement != Placement::Node {
            return Err(GlError::Placement { expected: "node".into(), found: format!("{:?}", rho2.placement) });
        }
        if b0.grid != rho2.grid {
            return Err(GlError::Grid("B0 and rho^2 must share a grid".into()));
        }
        if !(spacing > 0.0) || !(eps > 0.0 && eps < 1.0) {
            return Err(GlError::Config(format!("bad lattice spacing {spacing} or eps {eps}")));
        }
        let inst = IsofluxInstance { b0, rho2, shape, spacing, eps };
        if !(inst.min_rho2() > 0.0) {
            return Err(GlError::Pinning("rho^2 must be positive in the domain".into()));
        }
        Ok(inst)
    }

    /// Build from a weight `rho` on nodes (squared here).
    pub fn from_rho(b0: VectorField, rho: &ScalarField, shape: Shape, spacing: f64, eps: f64) -> Result<Self> {
        let rho2 = ScalarField {
            grid: rho.grid,
            placement: rho.placement,
            values: rho.values.iter().map(|v| v * v).collect(),
        };
        IsofluxInstance::new(b0, rho2, shape, spacing, eps)
    }

    /// Smallest `rho^2` over grid nodes inside the domain.
    pub fn min_rho2(&self) -> f64 {
        let g = self.rho2.grid;
        let mut m = f64::INFINITY;
        for n in 0..g.len() {
            let (i, j, k) = g.ijk(n);
            if self.shape.distance(&g.node(i, j, k)) <= 0.0 {
                m = m.min(self.rho2.values[n]);
            }
        }
        m
    }

    fn step(&self) -> f64 {
        0.5 * self.b0.grid.h
    }

    /// Circulation `<G, B0>` of the part inside the domain.
    pub fn gain(&self, curve: &PolyCurve) -> f64 {
        curve.circulation(Some(&self.shape), self.step(), |p| self.b0.sample(p))
    }

    /// Weighted length `|rho^2 G|` of the part inside the domain.
    pub fn cost(&self, curve: &PolyCurve) -> f64 {
        curve.integrate_along(Some(&self.shape), self.step(), |p, _| self.rho2.sample(p))
    }
}

/// `R(G) = <G, B0> / |rho^2 G|`.
pub fn ratio(curve: &PolyCurve, inst: &IsofluxInstance) -> Result<f64> {
    let c = inst.cost(curve);
    if !(c > 0.0) {
        return Err(GlError::Geometry("curve has zero weighted length inside the domain".into()));
    }
    Ok(inst.gain(curve) / c)
}

/// `H_c1 = |log eps| / (2 R)`.
pub fn hc1(r: f64, eps: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(GlError::Config(format!("no finite threshold for ratio {r}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(GlError::Config(format!("eps {eps} outside (0,1)")));
    }
    Ok(eps.ln().abs() / (2.0 * r))
}

/// Undirected edge; traversing it from `b` to `a` negates the gain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub gain: f64,
    pub cost: f64,
}

/// Connection from a terminal node to the boundary. `gain` is measured
/// from the node outwards.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stub {
    pub gain: f64,
    pub cost: f64,
}

/// Ratio graph: curves are simple cycles or simple paths between terminals
/// (including their stubs).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioGraph {
    pub n: usize,
    pub edges: Vec<GraphEdge>,
    pub stubs: Vec<Option<Stub>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphCurve {
    Path(Vec<usize>),
    Cycle(Vec<usize>),
}

impl GraphCurve {
    pub fn nodes(&self) -> &[usize] {
        match self {
            GraphCurve::Path(v) | GraphCurve::Cycle(v) => v,
        }
    }

    /// Cycles rotated to start at their smallest node.
    pub fn canonical(&self) -> GraphCurve {
        match self {
            GraphCurve::Path(v) => GraphCurve::Path(v.clone()),
            GraphCurve::Cycle(v) => {
                let k = (0..v.len()).min_by_key(|&i| v[i]).unwrap_or(0);
                GraphCurve::Cycle(v[k..].iter().chain(&v[..k]).copied().collect())
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Arc {
    to: usize,
    gain: f64,
    cost: f64,
}

impl RatioGraph {
    pub fn new(n: usize, edges: Vec<GraphEdge>, stubs: Vec<Option<Stub>>) -> Result<Self> {
        if stubs.len() != n {
            return Err(GlError::Config("one stub entry per node".into()));
        }
        for e in &edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(GlError::Config(format!("bad edge {}-{}", e.a, e.b)));
            }
            if !(e.cost > 0.0) || !e.gain.is_finite() {
                return Err(GlError::Config("edge costs must be positive and gains finite".into()));
            }
        }
        if stubs.iter().flatten().any(|s| !(s.cost >= 0.0) || !s.gain.is_finite()) {
            return Err(GlError::Config("stub costs must be non-negative".into()));
        }
        Ok(RatioGraph { n, edges, stubs })
    }

    fn arcs(&self) -> Vec<Vec<Arc>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.a].push(Arc { to: e.b, gain: e.gain, cost: e.cost });
            adj[e.b].push(Arc { to: e.a, gain: -e.gain, cost: e.cost });
        }
        for a in adj.iter_mut() {
            a.sort_by_key(|x| x.to);
        }
        adj
    }

    fn arc(&self, adj: &[Vec<Arc>], a: usize, b: usize) -> Option<Arc> {
        adj[a].iter().find(|x| x.to == b).copied()
    }

    /// Total gain and cost of a curve; errors when it is not a simple curve
    /// of the graph.
    pub fn value(&self, curve: &GraphCurve) -> Result<(f64, f64)> {
        let adj = self.arcs();
        self.value_with(&adj, curve)
    }

    fn value_with(&self, adj: &[Vec<Arc>], curve: &GraphCurve) -> Result<(f64, f64)> {
        let v = curve.nodes();
        let mut seen = vec![false; self.n];
        for &x in v {
            if x >= self.n || seen[x] {
                return Err(GlError::Geometry("curve is not simple".into()));
            }
            seen[x] = true;
        }
        let (mut g, mut c) = (0.0, 0.0);
        let mut add = |a: usize, b: usize| -> Result<()> {
            let arc = self.arc(adj, a, b).ok_or_else(|| GlError::Geometry(format!("no edge {a}-{b}")))?;
            g += arc.gain;
            c += arc.cost;
            Ok(())
        };
        match curve {
            GraphCurve::Path(p) => {
                if p.len() < 2 {
                    return Err(GlError::Geometry("a path needs an edge".into()));
                }
                for w in p.windows(2) {
                    add(w[0], w[1])?;
                }
                let (s, t) = (p[0], p[p.len() - 1]);
                match (self.stubs[s], self.stubs[t]) {
                    (Some(a), Some(b)) => {
                        g += b.gain - a.gain;
                        c += a.cost + b.cost;
                    }
                    _ => return Err(GlError::Geometry("path ends must be terminals".into())),
                }
            }
            GraphCurve::Cycle(p) => {
                if p.len() < 3 {
                    return Err(GlError::Geometry("a cycle needs three nodes".into()));
                }
                for i in 0..p.len() {
                    add(p[i], p[(i + 1) % p.len()])?;
                }
            }
        }
        Ok((g, c))
    }

    /// Copy with gains multiplied by `a` and costs by `b`.
    pub fn scaled(&self, a: f64, b: f64) -> RatioGraph {
        RatioGraph {
            n: self.n,
            edges: self.edges.iter().map(|e| GraphEdge { gain: a * e.gain, cost: b * e.cost, ..*e }).collect(),
            stubs: self.stubs.iter().map(|s| s.map(|s| Stub { gain: a * s.gain, cost: b * s.cost })).collect(),
        }
    }
}

/// Dinkelbach outcome on a graph.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dinkelbach {
    pub curve: Option<GraphCurve>,
    pub ratio: f64,
    /// Ratio of the curve found at each iteration; strictly increasing.
    pub lambdas: Vec<f64>,
    pub iterations: usize,
}

/// Maximise gain/cost over simple cycles and terminal paths.
pub fn dinkelbach(g: &RatioGraph, max_iter: usize) -> Result<Dinkelbach> {
    let adj = g.arcs();
    let mut lambda = 0.0;
    let mut lambdas = Vec::new();
    let mut best = None;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let Some(curve) = improving_curve(g, &adj, lambda) else { break };
        let (gain, cost) = g.value_with(&adj, &curve)?;
        let r = gain / cost;
        if !(r > lambda * (1.0 + 1e-13)) {
            break;
        }
        lambda = r;
        lambdas.push(r);
        best = Some(curve);
    }
    if iterations >= max_iter && best.is_some() && improving_curve(g, &adj, lambda).is_some() {
        return Err(GlError::NoConvergence { what: "Dinkelbach iteration".into(), iterations, residual: lambda });
    }
    Ok(Dinkelbach { ratio: if best.is_some() { lambda } else { 0.0 }, curve: best, lambdas, iterations })
}

/// A curve with `gain - lambda cost > 0`, or `None` when none exists.
fn improving_curve(g: &RatioGraph, adj: &[Vec<Arc>], lambda: f64) -> Option<GraphCurve> {
    let scale = adj
        .iter()
        .flatten()
        .map(|a| a.gain.abs() + lambda * a.cost)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;
    if let Some(c) = positive_cycle(adj, lambda, tol) {
        return Some(GraphCurve::Cycle(c));
    }
    longest_walk(g, adj, lambda, tol).map(GraphCurve::Path)
}

/// Label-correcting search from all nodes at once; a cycle in the
/// predecessor graph has positive weight.
fn positive_cycle(adj: &[Vec<Arc>], lambda: f64, tol: f64) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut dist = vec![0.0; n];
    let mut pred = vec![usize::MAX; n];
    let mut queued = vec![true; n];
    let mut queue: VecDeque<usize> = (0..n).collect();
    let mut relax = 0usize;
    while let Some(u) = queue.pop_front() {
        queued[u] = false;
        for a in &adj[u] {
            let cand = dist[u] + a.gain - lambda * a.cost;
            if cand > dist[a.to] + tol {
                dist[a.to] = cand;
                pred[a.to] = u;
                relax += 1;
                if relax % n == 0 {
                    if let Some(c) = pred_cycle(&pred) {
                        return Some(c);
                    }
                }
                if !queued[a.to] {
                    queued[a.to] = true;
                    queue.push_back(a.to);
                }
            }
        }
    }
    pred_cycle(&pred)
}

fn pred_cycle(pred: &[usize]) -> Option<Vec<usize>> {
    let n = pred.len();
    let mut stamp = vec![usize::MAX; n];
    for s in 0..n {
        let mut v = s;
        while v != usize::MAX && stamp[v] == usize::MAX {
            stamp[v] = s;
            v = pred[v];
        }
        if v != usize::MAX && stamp[v] == s {
            // walk the cycle backwards, then orient it forwards
            let mut cyc = vec![v];
            let mut w = pred[v];
            while w != v {
                cyc.push(w);
                w = pred[w];
            }
            cyc.reverse();
            return Some(cyc);
        }
    }
    None
}

/// Best terminal-to-terminal walk, assuming no positive cycle; loop-erased
/// into a simple path.
fn longest_walk(g: &RatioGraph, adj: &[Vec<Arc>], lambda: f64, tol: f64) -> Option<Vec<usize>> {
    let n = g.n;
    let mut dist = vec![f64::NEG_INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut queued = vec![false; n];
    let mut queue = VecDeque::new();
    for (v, s) in g.stubs.iter().enumerate() {
        if let Some(s) = s {
            dist[v] = -s.gain - lambda * s.cost;
            queued[v] = true;
            queue.push_back(v);
        }
    }
    while let Some(u) = queue.pop_front() {
        queued[u] = false;
        for a in &adj[u] {
            let cand = dist[u] + a.gain - lambda * a.cost;
            if cand > dist[a.to] + tol {
                dist[a.to] = cand;
                pred[a.to] = u;
                if !queued[a.to] {
                    queued[a.to] = true;
                    queue.push_back(a.to);
                }
            }
        }
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for u in 0..n {
        if dist[u] == f64::NEG_INFINITY {
            continue;
        }
        for a in &adj[u] {
            if let Some(s) = g.stubs[a.to] {
                let v = dist[u] + a.gain - lambda * a.cost + s.gain - lambda * s.cost;
                if v > tol && best.map_or(true, |(b, _, _)| v > b) {
                    best = Some((v, u, a.to));
                }
            }
        }
    }
    let (_, u, t) = best?;
    let mut walk = vec![t, u];
    let mut v = pred[u];
    while v != usize::MAX && walk.len() <= n + 1 {
        walk.push(v);
        v = pred[v];
    }
    walk.reverse();
    let path = loop_erase(&walk);
    (path.len() >= 2).then_some(path)
}

fn loop_erase(walk: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for &v in walk {
        if let Some(k) = out.iter().position(|&x| x == v) {
            out.truncate(k + 1);
        } else {
            out.push(v);
        }
    }
    out
}

/// Exhaustive maximum over all simple cycles and terminal paths for several
/// weightings sharing one topology. Errors when more than `limit` partial
/// paths would be visited.
pub fn exhaustive_max(graphs: &[RatioGraph], limit: u64) -> Result<Vec<Option<(GraphCurve, f64)>>> {
    let Some(first) = graphs.first() else { return Ok(Vec::new()) };
    let n = first.n;
    for g in graphs {
        let same = g.n == n
            && g.edges.len() == first.edges.len()
            && g.edges.iter().zip(&first.edges).all(|(x, y)| x.a == y.a && x.b == y.b)
            && g.stubs.iter().zip(&first.stubs).all(|(x, y)| x.is_some() == y.is_some());
        if !same {
            return Err(GlError::Config("weightings must share one topology".into()));
        }
    }
    let k = graphs.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut arc_g = Vec::new();
    let mut arc_c = Vec::new();
    for (e_idx, e) in first.edges.iter().enumerate() {
        for (from, to, sign) in [(e.a, e.b, 1.0), (e.b, e.a, -1.0)] {
            adj[from].push((to, arc_g.len() / k));
            for g in graphs {
                arc_g.push(sign * g.edges[e_idx].gain);
                arc_c.push(g.edges[e_idx].cost);
            }
        }
    }
    for a in adj.iter_mut() {
        a.sort();
    }
    let mut stub_g = vec![0.0; n * k];
    let mut stub_c = vec![0.0; n * k];
    for (gi, g) in graphs.iter().enumerate() {
        for v in 0..n {
            if let Some(s) = g.stubs[v] {
                stub_g[v * k + gi] = s.gain;
                stub_c[v * k + gi] = s.cost;
            }
        }
    }
    let terminal: Vec<bool> = first.stubs.iter().map(|s| s.is_some()).collect();
    let mut e = Enumerator {
        adj,
        k,
        arc_g,
        arc_c,
        stub_g,
        stub_c,
        terminal,
        best: vec![f64::NEG_INFINITY; k],
        best_curve: vec![None; k],
        path: Vec::with_capacity(n),
        visited: vec![false; n],
        acc_g: vec![0.0; (n + 1) * k],
        acc_c: vec![0.0; (n + 1) * k],
        visits: 0,
        limit,
    };
    for s in 0..n {
        if e.terminal[s] {
            for q in 0..k {
                e.acc_g[q] = -e.stub_g[s * k + q];
                e.acc_c[q] = e.stub_c[s * k + q];
            }
            e.visited[s] = true;
            e.path.push(s);
            e.paths(s)?;
            e.path.pop();
            e.visited[s] = false;
        }
    }
    for s in 0..n {
        e.acc_g[..k].iter_mut().for_each(|x| *x = 0.0);
        e.acc_c[..k].iter_mut().for_each(|x| *x = 0.0);
        e.visited[s] = true;
        e.path.push(s);
        e.cycles(s)?;
        e.path.pop();
        e.visited[s] = false;
    }
    Ok(e.best_curve.into_iter().zip(e.best).map(|(c, r)| c.map(|c| (c, r))).collect())
}

struct Enumerator {
    adj: Vec<Vec<(usize, usize)>>,
    k: usize,
    arc_g: Vec<f64>,
    arc_c: Vec<f64>,
    stub_g: Vec<f64>,
    stub_c: Vec<f64>,
    terminal: Vec<bool>,
    best: Vec<f64>,
    best_curve: Vec<Option<GraphCurve>>,
    path: Vec<usize>,
    visited: Vec<bool>,
    acc_g: Vec<f64>,
    acc_c: Vec<f64>,
    visits: u64,
    limit: u64,
}

impl Enumerator {
    fn tick(&mut self) -> Result<()> {
        self.visits += 1;
        if self.visits > self.limit {
            return Err(GlError::Config(format!("more than {} partial paths", self.limit)));
        }
        Ok(())
    }

    fn extend(&mut self, depth: usize, arc: usize) {
        let k = self.k;
        for q in 0..k {
            self.acc_g[(depth + 1) * k + q] = self.acc_g[depth * k + q] + self.arc_g[arc * k + q];
            self.acc_c[(depth + 1) * k + q] = self.acc_c[depth * k + q] + self.arc_c[arc * k + q];
        }
    }

    fn offer(&mut self, q: usize, g: f64, c: f64, curve: impl FnOnce() -> GraphCurve) {
        let r = g / c;
        if r > self.best[q] {
            self.best[q] = r;
            self.best_curve[q] = Some(curve());
        }
    }

    fn paths(&mut self, s: usize) -> Result<()> {
        self.tick()?;
        let depth = self.path.len() - 1;
        let v = self.path[depth];
        let k = self.k;
        if v != s && self.terminal[v] {
            for q in 0..k {
                let g = self.acc_g[depth * k + q] + self.stub_g[v * k + q];
                let c = self.acc_c[depth * k + q] + self.stub_c[v * k + q];
                let path = &self.path;
                if g / c > self.best[q] {
                    let p = path.clone();
                    self.offer(q, g, c, || GraphCurve::Path(p));
                }
            }
        }
        for i in 0..self.adj[v].len() {
            let (w, arc) = self.adj[v][i];
            if self.visited[w] {
                continue;
            }
            self.extend(depth, arc);
            self.visited[w] = true;
            self.path.push(w);
            self.paths(s)?;
            self.path.pop();
            self.visited[w] = false;
        }
        Ok(())
    }

    fn cycles(&mut self, s: usize) -> Result<()> {
        self.tick()?;
        let depth = self.path.len() - 1;
        let v = self.path[depth];
        let k = self.k;
        for i in 0..self.adj[v].len() {
            let (w, arc) = self.adj[v][i];
            if w == s && self.path.len() >= 3 {
                for q in 0..k {
                    let g = self.acc_g[depth * k + q] + self.arc_g[arc * k + q];
                    let c = self.acc_c[depth * k + q] + self.arc_c[arc * k + q];
                    if g / c > self.best[q] {
                        let p = self.path.clone();
                        self.offer(q, g, c, || GraphCurve::Cycle(p));
                    }
                }
            }
            if w <= s || self.visited[w] {
                continue;
            }
            self.extend(depth, arc);
            self.visited[w] = true;
            self.path.push(w);
            self.cycles(s)?;
            self.path.pop();
            self.visited[w] = false;
        }
        Ok(())
    }
}

/// Lattice graph over the domain with node positions and boundary anchors.
#[derive(Clone, Debug)]
pub struct LatticeGraph {
    pub graph: RatioGraph,
    pub positions: Vec<Vec3>,
    /// Boundary point joined to each terminal by its stub.
    pub anchors: Vec<Option<Vec3>>,
}

impl LatticeGraph {
    /// Polyline of a graph curve; paths start and end on the boundary.
    pub fn polyline(&self, curve: &GraphCurve) -> Result<PolyCurve> {
        let mut pts: Vec<Vec3> = Vec::new();
        let mut push = |p: Vec3| {
            if pts.last().map_or(true, |q: &Vec3| (q - p).norm() > 0.0) {
                pts.push(p);
            }
        };
        match curve {
            GraphCurve::Path(v) => {
                let s = v[0];
                let t = v[v.len() - 1];
                push(self.anchors[s].ok_or_else(|| GlError::Geometry("path start is not a terminal".into()))?);
                v.iter().for_each(|&x| push(self.positions[x]));
                push(self.anchors[t].ok_or_else(|| GlError::Geometry("path end is not a terminal".into()))?);
                PolyCurve::new(pts, false)
            }
            GraphCurve::Cycle(v) => {
                v.iter().for_each(|&x| push(self.positions[x]));
                PolyCurve::new(pts, true)
            }
        }
    }
}

/// Lattice nodes inside the closed domain with a 26-neighbour stencil.
/// Nodes within one spacing of the boundary are terminals with a straight
/// stub to their nearest boundary point.
pub fn build_lattice(inst: &IsofluxInstance) -> Result<LatticeGraph> {
    let s = inst.spacing;
    let c = inst.shape.center();
    let r = inst.shape.bounding_radius();
    let m = (r / s).ceil() as i64;
    let side = (2 * m + 1) as usize;
    let mut index = vec![usize::MAX; side * side * side];
    let mut positions = Vec::new();
    let at = |i: i64, j: i64, k: i64| ((i + m) as usize) + side * (((j + m) as usize) + side * (k + m) as usize);
    for k in -m..=m {
        for j in -m..=m {
            for i in -m..=m {
                let p = c + Vec3::new(i as f64, j as f64, k as f64) * s;
                if inst.shape.distance(&p) <= 0.0 {
                    index[at(i, j, k)] = positions.len();
                    positions.push(p);
                }
            }
        }
    }
    if positions.len() < 2 {
        return Err(GlError::Config("lattice spacing too coarse for the domain".into()));
    }
    let mut edges = Vec::new();
    for k in -m..=m {
        for j in -m..=m {
            for i in -m..=m {
                let a = index[at(i, j, k)];
                if a == usize::MAX {
                    continue;
                }
                for (di, dj, dk) in half_stencil() {
                    let (ii, jj, kk) = (i + di, j + dj, k + dk);
                    if ii.abs() > m || jj.abs() > m || kk.abs() > m {
                        continue;
                    }
                    let b = index[at(ii, jj, kk)];
                    if b == usize::MAX {
                        continue;
                    }
                    let seg = PolyCurve::new(vec![positions[a], positions[b]], false)?;
                    edges.push(GraphEdge { a, b, gain: inst.gain(&seg), cost: inst.cost(&seg) });
                }
            }
        }
    }
    let mut stubs = Vec::with_capacity(positions.len());
    let mut anchors = Vec::with_capacity(positions.len());
    for p in &positions {
        if inst.shape.distance(p) > -s {
            let q = inst.shape.project(p);
            let stub = if (q - p).norm() > 1e-12 * s {
                let seg = PolyCurve::new(vec![*p, q], false)?;
                Stub { gain: inst.gain(&seg), cost: inst.cost(&seg) }
            } else {
                Stub::default()
            };
            stubs.push(Some(stub));
            anchors.push(Some(q));
        } else {
            stubs.push(None);
            anchors.push(None);
        }
    }
    Ok(LatticeGraph { graph: RatioGraph::new(positions.len(), edges, stubs)?, positions, anchors })
}

fn half_stencil() -> impl Iterator<Item = (i64, i64, i64)> {
    (-1..=1i64)
        .flat_map(|k| (-1..=1i64).flat_map(move |j| (-1..=1i64).map(move |i| (i, j, k))))
        .filter(|&(i, j, k)| (k, j, i) > (0, 0, 0))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsofluxOptions {
    pub max_iter: usize,
    pub polish_iter: usize,
    /// Largest curvature allowed after smoothing, in units of `1/spacing`.
    pub curvature_bound: f64,
}

impl Default for IsofluxOptions {
    fn default() -> Self {
        IsofluxOptions { max_iter: 60, polish_iter: 80, curvature_bound: 1.0 }
    }
}

/// Optimiser output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsofluxResult {
    #[serde(skip)]
    pub curve: Option<PolyCurve>,
    /// `R(G*)` recomputed on the polished curve.
    pub ratio: f64,
    pub hc1: Option<f64>,
    pub graph_ratio: f64,
    pub lambdas: Vec<f64>,
    pub kind: Option<String>,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub polish_steps: usize,
    pub smoothing_passes: usize,
    pub max_curvature: f64,
    pub diagnostic: Option<String>,
}

/// Global lattice search followed by continuous polishing.
pub fn maximize_ratio(inst: &IsofluxInstance, opts: &IsofluxOptions) -> Result<IsofluxResult> {
    let lat = build_lattice(inst)?;
    let dk = dinkelbach(&lat.graph, opts.max_iter)?;
    let mut res = IsofluxResult {
        curve: None,
        ratio: dk.ratio,
        hc1: None,
        graph_ratio: dk.ratio,
        lambdas: dk.lambdas.clone(),
        kind: None,
        graph_nodes: lat.graph.n,
        graph_edges: lat.graph.edges.len(),
        polish_steps: 0,
        smoothing_passes: 0,
        max_curvature: 0.0,
        diagnostic: None,
    };
    let Some(gc) = dk.curve else {
        res.diagnostic = Some("no curve with positive circulation".into());
        return Ok(res);
    };
    res.kind = Some(match gc {
        GraphCurve::Path(_) => "path".into(),
        GraphCurve::Cycle(_) => "cycle".into(),
    });
    let start = lat.polyline(&gc)?;
    let polished = polish(&start, inst, opts)?;
    let (curve, steps, passes) = if polished.ratio >= ratio(&start, inst)? {
        (polished.curve, polished.steps, polished.passes)
    } else {
        (start, 0, 0)
    };
    res.ratio = ratio(&curve, inst)?;
    res.max_curvature = curve.vertex_curvature().iter().map(|k| k.norm()).fold(0.0, f64::max);
    res.polish_steps = steps;
    res.smoothing_passes = passes;
    res.hc1 = hc1(res.ratio, inst.eps).ok();
    res.curve = Some(curve);
    Ok(res)
}

struct Polished {
    curve: PolyCurve,
    ratio: f64,
    steps: usize,
    passes: usize,
}

fn constrain(shape: &Shape, pts: &mut [Vec3], closed: bool) {
    let n = pts.len();
    for (i, p) in pts.iter_mut().enumerate() {
        let end = !closed && (i == 0 || i + 1 == n);
        if end || shape.distance(p) > 0.0 {
            *p = shape.project(p);
        }
    }
}

fn max_curvature(pts: &[Vec3], closed: bool) -> f64 {
    PolyCurve::new(pts.to_vec(), closed)
        .map(|c| c.vertex_curvature().iter().map(|k| k.norm()).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY)
}

fn eval(pts: &[Vec3], closed: bool, inst: &IsofluxInstance) -> f64 {
    PolyCurve::new(pts.to_vec(), closed).ok().and_then(|c| ratio(&c, inst).ok()).unwrap_or(f64::NEG_INFINITY)
}

/// Resample, smooth by local averaging until the curvature bound holds,
/// then projected gradient ascent that keeps the bound.
fn polish(start: &PolyCurve, inst: &IsofluxInstance, opts: &IsofluxOptions) -> Result<Polished> {
    let s = inst.spacing;
    let closed = start.closed;
    let segs = ((start.length() / s).ceil() as usize).max(if closed { 6 } else { 4 });
    let mut pts = start.resample(segs)?.points;
    let kmax = opts.curvature_bound / s;
    let mut passes = 0;
    while max_curvature(&pts, closed) > kmax && passes < 200 {
        let n = pts.len();
        let old = pts.clone();
        for i in 0..n {
            let (p, q) = match (closed, i) {
                (false, 0) => continue,
                (false, _) if i + 1 == n => continue,
                _ => (old[(i + n - 1) % n], old[(i + 1) % n]),
            };
            pts[i] = (p + old[i] * 2.0 + q) * 0.25;
        }
        constrain(&inst.shape, &mut pts, closed);
        passes += 1;
    }
    let mut value = eval(&pts, closed, inst);
    let delta = 1e-4 * s;
    let mut t = 0.25 * s;
    let mut steps = 0;
    for _ in 0..opts.polish_iter {
        let mut grad = vec![Vec3::zeros(); pts.len()];
        for i in 0..pts.len() {
            for a in 0..3 {
                let mut plus = pts.clone();
                let mut minus = pts.clone();
                plus[i][a] += delta;
                minus[i][a] -= delta;
                constrain(&inst.shape, &mut plus, closed);
                constrain(&inst.shape, &mut minus, closed);
                grad[i][a] = (eval(&plus, closed, inst) - eval(&minus, closed, inst)) / (2.0 * delta);
            }
        }
        let gmax = grad.iter().map(|g| g.norm()).fold(0.0, f64::max);
        if !(gmax > 0.0) || !gmax.is_finite() {
            break;
        }
        let mut moved = false;
        while t > 1e-4 * s {
            let mut trial: Vec<Vec3> = pts.iter().zip(&grad).map(|(p, g)| p + g * (t / gmax)).collect();
            constrain(&inst.shape, &mut trial, closed);
            let v = eval(&trial, closed, inst);
            if v > value && max_curvature(&trial, closed) <= kmax.max(max_curvature(&pts, closed)) {
                pts = trial;
                value = v;
                moved = true;
                t *= 1.5;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
        steps += 1;
    }
    Ok(Polished { curve: PolyCurve::new(pts, closed)?, ratio: value, steps, passes })
}

/// Great-circle-like path on the boundary from `p` to `q` through `via`.
pub fn boundary_arc(shape: &Shape, p: Vec3, q: Vec3, via: Vec3, pieces: usize) -> Result<PolyCurve> {
    let c = shape.center();
    let r = shape.bounding_radius();
    let dirs = [p - c, via - c, q - c];
    if dirs.iter().any(|d| d.norm() == 0.0) {
        return Err(GlError::Geometry("arc points must differ from the centre".into()));
    }
    let pieces = pieces.max(2);
    let mut pts = Vec::with_capacity(2 * pieces + 1);
    for (a, b) in [(dirs[0], dirs[1]), (dirs[1], dirs[2])] {
        for i in 0..pieces {
            let t = i as f64 / pieces as f64;
            let d = a.normalize() * (1.0 - t) + b.normalize() * t;
            if d.norm() < 1e-12 {
                return Err(GlError::Geometry("antipodal arc leg".into()));
            }
            pts.push(c + d.normalize() * r);
        }
    }
    pts.push(c + dirs[2].normalize() * r);
    pts.dedup_by(|a, b| (*a - *b).norm() == 0.0);
    PolyCurve::new(pts, false)
}

/// `|<G~,B0> - <G,B0>|` for closures of an open curve by boundary arcs
/// from its end back to its start through each waypoint.
pub fn stokes_defects(curve: &PolyCurve, inst: &IsofluxInstance, waypoints: &[Vec3]) -> Result<Vec<f64>> {
    if curve.closed {
        return Err(GlError::Geometry("closure needs an open curve".into()));
    }
    let p = curve.points[curve.points.len() - 1];
    let q = curve.points[0];
    let base = inst.gain(curve);
    waypoints
        .iter()
        .map(|w| {
            let arc = boundary_arc(&inst.shape, p, q, *w, 24)?;
            let mut pts = curve.points.clone();
            pts.extend(arc.points[1..arc.points.len() - 1].iter().copied());
            let closed = PolyCurve::new(pts, true)?;
            Ok((inst.gain(&closed) - base).abs())
        })
        .collect()
}

/// Report on the hypotheses used by the test-configuration estimates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// Graph optimum minus the polished ratio.
    pub relaxation_gap: f64,
    pub gap_bound: f64,
    pub gap_ok: bool,
    pub length: f64,
    pub c0: f64,
    pub length_ok: bool,
    pub c_omega: Option<f64>,
    pub c_omega_bound: f64,
    pub c_omega_ok: Option<bool>,
    /// Crossing angles at the boundary (radians).
    pub transversality: Vec<f64>,
    /// `|rho^2 G*|`, the empirical lower constant for the weighted length.
    pub weighted_length: f64,
    pub min_rho2: f64,
    pub weighted_ge_b_length: bool,
}

pub fn check_hypotheses(
    result: &IsofluxResult,
    inst: &IsofluxInstance,
    c0: f64,
    c_omega: Option<f64>,
) -> Result<HypothesisReport> {
    let curve = result.curve.as_ref().ok_or_else(|| GlError::Geometry("no optimal curve to check".into()))?;
    let inside = curve.clip_to(&inst.shape)?;
    let length = inside.length();
    let weighted = inst.cost(curve);
    let b = inst.min_rho2();
    let l = inst.eps.ln().abs();
    let gap = result.graph_ratio - result.ratio;
    let c_bound = c0 * l.ln();
    Ok(HypothesisReport {
        relaxation_gap: gap,
        gap_bound: 1.0 / l,
        gap_ok: gap.abs() <= 1.0 / l,
        length,
        c0,
        length_ok: length <= c0,
        c_omega,
        c_omega_bound: c_bound,
        c_omega_ok: c_omega.map(|c| c <= c_bound),
        transversality: transversality(curve, &inst.shape),
        weighted_length: weighted,
        min_rho2: b,
        weighted_ge_b_length: weighted >= b * length * (1.0 - 1e-12),
    })
}

/// Energy balance `dE(h) = F - h P + h^2 r` of the vortex configuration
/// against the Meissner state.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OnsetInputs {
    pub free_energy: f64,
    pub pairing: f64,
    /// Remainder at unit intensity; it scales with `h^2`.
    pub remainder: f64,
}

impl OnsetInputs {
    pub fn delta(&self, h: f64) -> f64 {
        self.free_energy - h * self.pairing + h * h * self.remainder
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OnsetReport {
    pub eps: f64,
    pub ratio: f64,
    pub hc1: f64,
    pub samples: Vec<(f64, f64)>,
    pub h_star: Option<f64>,
    /// `h* 2R / |log eps|`.
    pub normalized: Option<f64>,
    pub monotone: bool,
    pub diagnostic: Option<String>,
}

/// First sign change of `dE` on the grid, refined by bisection.
pub fn onset_crossing(inputs: &OnsetInputs, h_grid: &[f64], eps: f64, r: f64) -> Result<OnsetReport> {
    let hc = hc1(r, eps)?;
    if h_grid.len() < 2 || h_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(GlError::Config("intensity grid must be increasing with two or more values".into()));
    }
    let samples: Vec<(f64, f64)> = h_grid.iter().map(|&h| (h, inputs.delta(h))).collect();
    let monotone = samples.windows(2).all(|w| w[1].1 <= w[0].1);
    let mut h_star = None;
    for w in samples.windows(2) {
        let ((a, fa), (b, fb)) = (w[0], w[1]);
        if fa > 0.0 && fb <= 0.0 {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if inputs.delta(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-14 * hi.abs() {
                    break;
                }
            }
            h_star = Some(0.5 * (lo + hi));
            break;
        }
    }
    let diagnostic = match h_star {
        Some(_) => None,
        None => Some(format!(
            "no crossing on [{}, {}]: dE from {:.6e} to {:.6e}, monotone {}",
            h_grid[0],
            h_grid[h_grid.len() - 1],
            samples[0].1,
            samples[samples.len() - 1].1,
            monotone
        )),
    };
    Ok(OnsetReport {
        eps,
        ratio: r,
        hc1: hc,
        normalized: h_star.map(|h| h / hc),
        samples,
        h_star,
        monotone,
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_weights(g: &RatioGraph, seed: u64) -> RatioGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RatioGraph {
            n: g.n,
            edges: g.edges.iter().map(|e| GraphEdge { gain: rng.gen_range(-1.0..1.0), cost: rng.gen_range(0.5..1.5), ..*e }).collect(),
            stubs: g.stubs.iter().map(|s| s.map(|_| Stub { gain: rng.gen_range(-0.5..0.5), cost: rng.gen_range(0.1..0.6) })).collect(),
        }
    }

    fn complete(n: usize, terminals: &[usize]) -> RatioGraph {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                edges.push(GraphEdge { a, b, gain: 0.0, cost: 1.0 });
            }
        }
        let stubs = (0..n).map(|v| terminals.contains(&v).then(Stub::default)).collect();
        RatioGraph::new(n, edges, stubs).unwrap()
    }

    #[test]
    fn threshold_arithmetic() {
        assert!((hc1(0.5, 1e-3).unwrap() - 6.907_755_278_982_137).abs() < 1e-12);
        let d = hc1(0.7, 0.01).unwrap() - hc1(0.7, 0.02).unwrap();
        assert!((d - 2f64.ln() / 1.4).abs() < 1e-12);
        assert!(hc1(0.0, 0.1).is_err());
    }

    #[test]
    fn loop_erasure_keeps_a_simple_path() {
        assert_eq!(loop_erase(&[1, 2, 3, 2, 4, 1, 5]), vec![1, 5]);
        assert_eq!(loop_erase(&[0, 1, 2]), vec![0, 1, 2]);
    }

    #[test]
    fn complete_graph_matches_enumeration() {
        let base = complete(7, &[0, 3, 5]);
        let graphs: Vec<RatioGraph> = (0..10).map(|s| random_weights(&base, s)).collect();
        let exact = exhaustive_max(&graphs, 1 << 26).unwrap();
        for (g, ex) in graphs.iter().zip(exact) {
            let (curve, r) = ex.unwrap();
            let d = dinkelbach(g, 100).unwrap();
            assert!((d.ratio - r).abs() <= 1e-12 * r.abs().max(1.0), "{} vs {r}", d.ratio);
            assert_eq!(d.curve.unwrap().canonical(), curve.canonical());
            assert!(d.lambdas.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn value_rejects_non_simple_curves() {
        let g = complete(4, &[0, 1]);
        assert!(g.value(&GraphCurve::Cycle(vec![0, 1, 0])).is_err());
        assert!(g.value(&GraphCurve::Path(vec![0, 2, 3])).is_err());
        assert_eq!(g.value(&GraphCurve::Path(vec![0, 2, 1])).unwrap(), (0.0, 2.0));
    }

    #[test]
    fn no_positive_curve_gives_empty_result() {
        let g = complete(5, &[0, 1]);
        let d = dinkelbach(&g, 10).unwrap();
        assert!(d.curve.is_none());
        assert!(d.lambdas.is_empty());
    }

    fn uniform_instance(field: Vec3) -> IsofluxInstance {
        let g = Grid::cell_centered(Vec3::zeros(), 10, 0.125).unwrap();
        let b0 = VectorField::from_fn(g, Placement::Face, |_| field);
        let rho2 = ScalarField::constant(g, Placement::Node, 1.0);
        IsofluxInstance::new(b0, rho2, Shape::ball(Vec3::zeros(), 1.0), 0.25, 0.1).unwrap()
    }

    #[test]
    fn ratio_orientation_and_parametrisation() {
        let inst = uniform_instance(Vec3::new(0.0, 0.3, 1.0));
        let c = PolyCurve::new(vec![Vec3::new(0.1, 0.0, -0.9), Vec3::new(0.2, 0.1, 0.0), Vec3::new(0.0, 0.2, 0.8)], false).unwrap();
        let r = ratio(&c, &inst).unwrap();
        assert!((ratio(&c.reversed(), &inst).unwrap() + r).abs() < 1e-13);
        assert!((ratio(&c.resample(37).unwrap(), &inst).unwrap() - r).abs() < 1e-2 * r.abs());
        // a uniform field integrates exactly: gain is the chord projection
        let gain = inst.gain(&c);
        assert!((gain - (0.3 * 0.2 + 1.0 * 1.7)).abs() < 1e-12);
    }

    #[test]
    fn uniform_field_optimum_is_the_aligned_diameter() {
        let inst = uniform_instance(Vec3::new(0.0, 0.0, 1.0));
        let res = maximize_ratio(&inst, &IsofluxOptions::default()).unwrap();
        // the best is a straight diameter along the field with ratio 1
        assert!(res.ratio <= 1.0 + 1e-12 && res.ratio > 0.999, "{res:?}");
        assert!(res.graph_ratio <= 1.0 + 1e-12);
        assert!(res.lambdas.windows(2).all(|w| w[1] > w[0]));
        let curve = res.curve.unwrap();
        assert!((ratio(&curve, &inst).unwrap() - res.ratio).abs() < 1e-10);
        assert!((curve.length() - 2.0).abs() < 0.02);
    }

    #[test]
    fn onset_on_linear_balance() {
        let inp = OnsetInputs { free_energy: 10.0, pairing: 4.0, remainder: 0.0 };
        let rep = onset_crossing(&inp, &[0.0, 1.0, 2.0, 3.0, 4.0], 0.1, 0.5).unwrap();
        assert!((rep.h_star.unwrap() - 2.5).abs() < 1e-12);
        assert!(rep.monotone);
        let none = onset_crossing(&inp, &[0.0, 1.0], 0.1, 0.5).unwrap();
        assert!(none.h_star.is_none() && none.diagnostic.is_some());
    }

    #[test]
    fn boundary_arcs_stay_on_the_sphere() {
        let sh = Shape::ball(Vec3::zeros(), 1.5);
        let arc = boundary_arc(&sh, Vec3::new(0.0, 0.0, 1.5), Vec3::new(0.0, 0.0, -1.5), Vec3::new(1.5, 0.0, 0.0), 12).unwrap();
        assert!(arc.points.iter().all(|p| (p.norm() - 1.5).abs() < 1e-12));
    }
}

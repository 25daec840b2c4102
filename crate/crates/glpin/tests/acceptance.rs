//! Acceptance criteria, run in order inside one test so that the large grids
//! of the later criteria never coexist in memory.
//!
//! Each criterion prints one `PASS`/`FAIL` line with its measured values and
//! runtime; the test fails at the end if any criterion failed.
//! `GLPIN_ACCEPTANCE_ONLY=4,9` restricts the run to the listed criteria.

use glpin::ampere::AmpereOptions;
use glpin::biotsavart::{c_omega, eval_x, solve_ja, Source};
use glpin::construction::assemble;
use glpin::energy::{pairing, random_smooth_configuration, split_energy, vanishing_field_library, vorticity};
use glpin::geometry::{extend_and_close, PolyCurve};
use glpin::grid::{curl, div, grad, Domain, Grid, Placement, ScalarField, VectorField};
use glpin::isoflux::{build_lattice, dinkelbach, exhaustive_max, GraphEdge, IsofluxInstance, RatioGraph, Stub};
use glpin::meissner::{solve_b0, AppliedField};
use glpin::pinning::{solve_rho, PinningModel, RhoOptions};
use glpin::pipeline::{corrected_fields, epsilon_sweep, field_domain, onset_experiment, profile_for, RunConfig};
use glpin::profile::{core_constant, solve_profile};
use glpin::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

const UNIT_BALL: &str = r#"
name = "unit-ball"
seed = 1
output = "out/unit-ball"
[domain]
center = [0.0, 0.0, 0.0]
radius = 1.0
[grid]
field_h = 0.0625
pad = 3
cells_per_eps = 1.5
lattice_spacing = 0.125
[pinning]
eps = [0.05]
[pinning.model]
kind = "constant"
value = 1.0
[field]
direction = [0.0, 0.0, 1.0]
h_ex = 1.0
eta = 0.45
[onset]
h_max = 40.0
samples = 81
[curve]
source = "isoflux"
"#;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn unit_ball() -> RunConfig {
    RunConfig::from_toml(UNIT_BALL).unwrap()
}

fn random_fill(rng: &mut ChaCha8Rng, g: &Grid, p: Placement) -> [Vec<f64>; 3] {
    let mut comps = [vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()]];
    for (c, comp) in comps.iter_mut().enumerate() {
        g.for_each(p, c, |_, _, _, n| comp[n] = rng.gen_range(-1.0..1.0));
    }
    comps
}

fn max_valid(v: &VectorField) -> f64 {
    let mut m: f64 = 0.0;
    for c in 0..3 {
        v.grid.for_each(v.placement, c, |_, _, _, n| m = m.max(v.comps[c][n].abs()));
    }
    m
}

fn max_cells(s: &ScalarField) -> f64 {
    let mut m: f64 = 0.0;
    s.grid.for_each(s.placement, 0, |_, _, _, n| m = m.max(s.values[n].abs()));
    m
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Grid::new([-0.3, 0.1, 0.2], 0.1, [18, 20, 22]).unwrap();
    let (mut dc, mut cg): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let e = VectorField { grid: g, placement: Placement::Edge, comps: random_fill(&mut rng, &g, Placement::Edge) };
        dc = dc.max(max_cells(&div(&curl(&e))));
        let f = ScalarField { grid: g, placement: Placement::Node, values: random_fill(&mut rng, &g, Placement::Node)[0].clone() };
        cg = cg.max(max_valid(&curl(&grad(&f))));
    }
    outcome(dc <= 1e-12 && cg <= 1e-12, format!("max |div curl| {dc:.2e}, max |curl grad| {cg:.2e}"))
}

fn sup_gap(d: &Domain, a: &ScalarField, rho: &ScalarField) -> f64 {
    (0..d.grid.len())
        .filter(|&n| d.node_weight(n) > 0.0)
        .map(|n| (rho.values[n].powi(2) - a.values[n]).abs())
        .fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let opts = RhoOptions::default();
    let d = Domain::ball(Vec3::zeros(), 1.0, 58, 3).unwrap();
    let dims = d.grid.dims;
    let c = PinningModel::Constant { value: 0.36 }.sample(&d).unwrap();
    let flat = solve_rho(&d, &c, 0.1, &opts).unwrap();
    let exact = flat.rho.values.iter().all(|&v| v == 0.6);
    let bump = PinningModel::Bump { center: [0.1, -0.05, 0.0], width: 0.4, depth: 0.5 };
    let a = bump.sample(&d).unwrap();
    let s1 = solve_rho(&d, &a, 0.2, &opts).unwrap();
    let s2 = solve_rho(&d, &a, 0.1, &opts).unwrap();
    let (g1, g2) = (sup_gap(&d, &a, &s1.rho), sup_gap(&d, &a, &s2.rho));
    let order = (g1 / g2).log2();
    let residual = s1.residual.max(s2.residual);
    outcome(
        exact && residual <= 1e-8 && order >= 1.0,
        format!(
            "constant exact {exact}; grid {dims:?}, residual {residual:.2e}; sup|rho^2 - a| {g1:.3e} -> {g2:.3e}, order {order:.2}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let (r_max, n) = (100.0, 4000);
    let p = solve_profile(r_max, n).unwrap();
    let core = core_constant(r_max, n).unwrap();
    let unit = 10f64.powf(core.gamma.abs().log10().floor() - 3.0);
    let agree = (core.gamma_coarse - core.gamma_fine).abs() <= 0.5 * unit;
    let remainder = [30.0, 35.0, 40.0, 45.0, 50.0]
        .iter()
        .map(|&r| (p.gamma_at(r) - core.gamma).abs())
        .fold(0.0, f64::max);
    outcome(
        p.residual <= 1e-10 && agree && remainder < 0.01,
        format!(
            "residual {:.2e}; gamma {:.6} (n) vs {:.6} (2n); max remainder for R >= 30: {remainder:.2e}",
            p.residual, core.gamma_coarse, core.gamma_fine
        ),
    )
}

/// Signed crossings of a closed loop through the flat polygonal disk bounded by `disk` in `z = 0`.
fn linking_with_disk(loop_: &PolyCurve, disk: &PolyCurve) -> i32 {
    let inside = |x: f64, y: f64| {
        let mut odd = false;
        for (a, b) in disk.segments() {
            if (a.y > y) != (b.y > y) && x < a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y) {
                odd = !odd;
            }
        }
        odd
    };
    let mut link = 0;
    for (a, b) in loop_.segments() {
        if (a.z > 0.0) != (b.z > 0.0) {
            let t = a.z / (a.z - b.z);
            let p = a + (b - a) * t;
            if inside(p.x, p.y) {
                link += if b.z > a.z { 1 } else { -1 };
            }
        }
    }
    link
}

fn random_loop(rng: &mut ChaCha8Rng, gamma: &PolyCurve) -> PolyCurve {
    loop {
        let phi = rng.gen_range(0.0..2.0 * PI);
        let q = Vec3::new(phi.cos(), phi.sin(), 0.0);
        let n1 = Vec3::new(phi.cos(), phi.sin(), rng.gen_range(-0.3..0.3)).normalize();
        let n2 = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 1.0).normalize();
        let (r1, r2) = (rng.gen_range(0.2..0.6), rng.gen_range(0.2..0.6));
        let shift = if rng.gen_bool(0.3) { n1 * rng.gen_range(0.7..1.2) } else { Vec3::zeros() };
        let wob: Vec<Vec3> = (0..3).map(|_| Vec3::new(rng.gen_range(-0.06..0.06), rng.gen_range(-0.06..0.06), rng.gen_range(-0.06..0.06))).collect();
        let m = rng.gen_range(40..400);
        let pts: Vec<Vec3> = (0..m)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / m as f64;
                q + shift + n1 * (r1 * t.cos()) + n2 * (r2 * t.sin()) + wob[0] * (2.0 * t).cos() + wob[1] * (3.0 * t).sin() + wob[2] * (5.0 * t).cos()
            })
            .collect();
        let mut c = PolyCurve::new(pts, true).unwrap();
        if rng.gen_bool(0.5) {
            c = c.reversed();
        }
        let near = c.segments().map(|(a, _)| glpin::biotsavart::distance_to_curve(&a, gamma)).fold(f64::INFINITY, f64::min);
        if near > 0.1 {
            return c;
        }
    }
}

fn criterion_4() -> Outcome {
    let gamma = PolyCurve::circle(Vec3::zeros(), Vec3::z(), 1.0, 96).unwrap();
    let src = Source::polyline(gamma.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut links = [0usize; 3];
    for _ in 0..50 {
        let c = random_loop(&mut rng, &gamma);
        let link = linking_with_disk(&c, &gamma);
        links[(link + 1).clamp(0, 2) as usize] += 1;
        let circ = c.circulation(None, 0.005, |p| eval_x(p, &src).unwrap());
        worst = worst.max((circ - 2.0 * PI * link as f64).abs() / (2.0 * PI));
    }
    let centre = eval_x(&Vec3::zeros(), &Source::Circle { center: Vec3::zeros(), axis: Vec3::z(), radius: 1.0 }).unwrap();
    let cerr = (centre - Vec3::new(0.0, 0.0, PI)).norm();
    outcome(
        worst <= 0.02 && cerr <= 1e-10 && links[0] + links[2] > 0 && links[1] > 0,
        format!("50 loops (link -1/0/+1: {links:?}), worst |circ - 2 pi link| / 2 pi {worst:.2e}; centre error {cerr:.1e}"),
    )
}

fn rel_diff_kinetic(d: &Domain, x: &VectorField, y: &VectorField) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    d.for_each_kinetic_edge(|c, i, _, _| {
        num += (x.comps[c][i] - y.comps[c][i]).powi(2);
        den += x.comps[c][i].powi(2);
    });
    (num / den).sqrt()
}

fn criterion_5() -> Outcome {
    let d = Domain::ball(Vec3::zeros(), 1.0, 58, 3).unwrap();
    let h = d.grid.h;
    let p = Vec3::new(0.3, 0.2, -1.0).normalize();
    let q = Vec3::new(-0.2, 0.1, 1.0).normalize();
    let chord = PolyCurve::segment(p, q, 32).unwrap();
    let opts = AmpereOptions::default();
    let (l1, _) = extend_and_close(&chord, &d.shape, 0.25, 2.0).unwrap();
    let (l2, _) = extend_and_close(&chord, &d.shape, 0.5, 3.0).unwrap();
    let f1 = solve_ja(&l1, &d, &opts).unwrap();
    let f2 = solve_ja(&l2, &d, &opts).unwrap();
    let dj = rel_diff_kinetic(&d, &f1.j, &f2.j);
    let da = rel_diff_kinetic(&d, &f1.a, &f2.a);
    let k = c_omega(&f1, &[10.0 * h, 8.0 * h, 6.0 * h, 4.0 * h]).unwrap();
    // consecutive difference quotients of the bracket are the remainder slope
    let quot: Vec<f64> = k.table.windows(2).map(|w| (w[0].1 - w[1].1) / (w[0].0 - w[1].0)).collect();
    let spread = quot.iter().map(|s| (s - k.slope).abs()).fold(0.0, f64::max);
    let linear = spread <= 0.25 * k.slope.abs().max(1.0);
    let flux = f1.flux_residual.max(f2.flux_residual);
    outcome(
        flux <= 1e-3 && dj <= 0.01 && da <= 0.01 && linear && k.value.is_finite(),
        format!(
            "grid {:?}; flux residual {flux:.2e}; extension change j {dj:.2e}, A {da:.2e}; C table {:?} -> {:.4} (slope {:.3}, quotients {:?})",
            d.grid.dims,
            k.table.iter().map(|(r, v)| (format!("{r:.3}"), format!("{v:.4}"))).collect::<Vec<_>>(),
            k.value,
            k.slope,
            quot.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_6() -> Outcome {
    let eps = 0.3;
    let model = PinningModel::Bump { center: [0.1, 0.0, -0.1], width: 0.5, depth: 0.4 };
    let applied = AppliedField::uniform(Vec3::new(0.2, 0.1, 1.0), 1.0).unwrap();
    let levels = [12usize, 24, 48];
    let mut defects = vec![Vec::new(); levels.len()];
    let mut bound_ok = true;
    for (l, &cells) in levels.iter().enumerate() {
        let d = Domain::ball(Vec3::zeros(), 1.0, cells, 4).unwrap();
        let h = d.grid.h;
        let ae = model.sample(&d).unwrap();
        let rho = solve_rho(&d, &ae, eps, &RhoOptions::default()).unwrap().rho;
        let ms = solve_b0(&rho, &applied, &d, &AmpereOptions::default()).unwrap();
        for seed in 0..10 {
            let (u, a) = random_smooth_configuration(&d, seed);
            let s = split_energy(&u, &a, &rho, &ae, eps, &ms, 1.5, &d).unwrap();
            bound_ok &= s.defect <= 5.0 * h * h * s.scale;
            defects[l].push(s.defect);
        }
    }
    let orders: Vec<f64> = (0..2)
        .flat_map(|l| (0..10).map(move |s| (l, s)))
        .map(|(l, s)| (defects[l][s] / defects[l + 1][s]).log2())
        .collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let worst: Vec<String> = defects.iter().map(|v| format!("{:.2e}", v.iter().copied().fold(0.0, f64::max))).collect();
    outcome(
        bound_ok && min_order >= 1.8,
        format!("cells {levels:?}: worst defect {worst:?}, within 5 h^2 scale {bound_ok}; minimum order {min_order:.2}"),
    )
}

fn criterion_7() -> Outcome {
    let eps = [0.05, 0.025, 0.0125];
    let diameter = PolyCurve::segment(Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, 1.0), 32).unwrap();
    let mut cfg = unit_ball();
    let profile = profile_for(&cfg).unwrap();
    let one = epsilon_sweep(&cfg, &eps, Some(&diameter), &profile).unwrap();
    cfg.pinning.model = PinningModel::Constant { value: 0.25 };
    let quarter = epsilon_sweep(&cfg, &eps, Some(&diameter), &profile).unwrap();
    let r1 = one.law.slope / (PI * 2.0);
    let rb = quarter.law.slope / one.law.slope / 0.25;
    let rw = quarter.law.slope / quarter.law.predicted;
    outcome(
        (r1 - 1.0).abs() <= 0.1 && (rb - 1.0).abs() <= 0.1 && (rw - 1.0).abs() <= 0.1,
        format!(
            "slope {:.4} vs pi|G| {:.4} (ratio {r1:.4}); rho^2 = 1/4: slope {:.4}, rescaling {rb:.4}, vs pi|rho^2 G| {rw:.4}",
            one.law.slope,
            2.0 * PI,
            quarter.law.slope
        ),
    )
}

fn criterion_8() -> Outcome {
    let cfg = unit_ball();
    let p = Vec3::new(0.3, 0.2, -1.0).normalize();
    let q = Vec3::new(-0.2, 0.1, 1.0).normalize();
    let chord = PolyCurve::segment(p, q, 32).unwrap();
    let fields = corrected_fields(&cfg, &field_domain(&cfg).unwrap(), &chord).unwrap();
    let profile = profile_for(&cfg).unwrap();
    let library = vanishing_field_library(&Vec3::zeros(), 1.0, 5, 11);
    let targets: Vec<f64> = library.iter().map(|f| f.curve_term(&chord)).collect();
    let mut worst = Vec::new();
    for eps in [0.05, 0.025, 0.0125] {
        let d = Domain::ball_cell_centered(Vec3::zeros(), 1.0, cfg.fine_h(eps), 2).unwrap();
        let conf = assemble(&d, &fields, &profile, eps, cfg.curve.q, None).unwrap();
        let mu = vorticity(&conf.u, &conf.a, &d).unwrap().winding_form;
        drop(conf);
        let err = library
            .iter()
            .zip(&targets)
            .map(|(f, t)| (pairing(&mu, &f.on_faces(&d.grid), &d) - t).abs() / t.abs())
            .fold(0.0, f64::max);
        worst.push(err);
    }
    let monotone = worst.windows(2).all(|w| w[1] < w[0]);
    outcome(
        worst.iter().all(|&e| e <= 0.05) && monotone,
        format!("worst relative error over 5 fields at eps 1/20, 1/40, 1/80: {:?}", worst.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()),
    )
}

fn six_neighbour_lattice() -> RatioGraph {
    let id = |i: usize, j: usize, k: usize| i + 3 * j + 9 * k;
    let mut edges = Vec::new();
    for k in 0..3 {
        for j in 0..3 {
            for i in 0..3 {
                if i < 2 {
                    edges.push(GraphEdge { a: id(i, j, k), b: id(i + 1, j, k), gain: 0.0, cost: 1.0 });
                }
                if j < 2 {
                    edges.push(GraphEdge { a: id(i, j, k), b: id(i, j + 1, k), gain: 0.0, cost: 1.0 });
                }
                if k < 2 {
                    edges.push(GraphEdge { a: id(i, j, k), b: id(i, j, k + 1), gain: 0.0, cost: 1.0 });
                }
            }
        }
    }
    let corner = |n: usize| [n % 3, (n / 3) % 3, n / 9].iter().all(|&x| x != 1);
    let stubs = (0..27).map(|n| corner(n).then(Stub::default)).collect();
    RatioGraph::new(27, edges, stubs).unwrap()
}

fn complete_cube() -> RatioGraph {
    let edges = (0..8).flat_map(|a| (a + 1..8).map(move |b| GraphEdge { a, b, gain: 0.0, cost: 1.0 })).collect();
    RatioGraph::new(8, edges, vec![Some(Stub::default()); 8]).unwrap()
}

fn weighted(base: &RatioGraph, rng: &mut ChaCha8Rng) -> RatioGraph {
    RatioGraph {
        n: base.n,
        edges: base.edges.iter().map(|e| GraphEdge { gain: rng.gen_range(-1.0..1.0), cost: rng.gen_range(0.5..1.5), ..*e }).collect(),
        stubs: base.stubs.iter().map(|s| s.map(|_| Stub { gain: rng.gen_range(-0.5..0.5), cost: rng.gen_range(0.1..0.6) })).collect(),
    }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut agree = 0;
    let mut total = 0;
    let mut increasing = true;
    let mut worst: f64 = 0.0;
    for base in [six_neighbour_lattice(), complete_cube()] {
        let graphs: Vec<RatioGraph> = (0..20).map(|_| weighted(&base, &mut rng)).collect();
        let exact = exhaustive_max(&graphs, 1 << 40).unwrap();
        for (g, ex) in graphs.iter().zip(exact) {
            total += 1;
            let d = dinkelbach(g, 100).unwrap();
            increasing &= d.lambdas.windows(2).all(|w| w[1] > w[0]);
            match (ex, d.curve) {
                (Some((c, r)), Some(dc)) => {
                    let err = (d.ratio - r).abs() / r.abs().max(1.0);
                    worst = worst.max(err);
                    if err <= 1e-12 && dc.canonical() == c.canonical() {
                        agree += 1;
                    }
                }
                (None, None) => agree += 1,
                _ => {}
            }
        }
    }
    // argmax invariance on a lattice built from a field
    let g = Grid::cell_centered(Vec3::zeros(), 6, 0.2).unwrap();
    let b0 = VectorField::from_fn(g, Placement::Face, |x| Vec3::new(0.3 * x.z, 0.1, 1.0 - 0.2 * x.x * x.x));
    let rho2 = ScalarField::from_fn(g, Placement::Node, |x| 0.6 + 0.3 * x.y * x.y);
    let inst = IsofluxInstance::new(b0, rho2, glpin::grid::Shape::ball(Vec3::zeros(), 1.0), 0.25, 0.1).unwrap();
    let lat = build_lattice(&inst).unwrap();
    let base = dinkelbach(&lat.graph, 100).unwrap();
    let key = base.curve.as_ref().map(|c| c.canonical());
    let mut invariant = key.is_some();
    increasing &= base.lambdas.windows(2).all(|w| w[1] > w[0]);
    for (a, b) in [(3.0, 1.0), (1.0, 0.4), (0.2, 7.0)] {
        let s = dinkelbach(&lat.graph.scaled(a, b), 100).unwrap();
        increasing &= s.lambdas.windows(2).all(|w| w[1] > w[0]);
        invariant &= s.curve.map(|c| c.canonical()) == key && (s.ratio - base.ratio * a / b).abs() <= 1e-12 * s.ratio.abs();
    }
    outcome(
        agree == total && increasing && invariant,
        format!(
            "{agree}/{total} weightings match enumeration (worst ratio error {worst:.1e}); lambda increasing {increasing}; scaling invariance on a {}-node lattice {invariant}",
            lat.graph.n
        ),
    )
}

fn criterion_10() -> Outcome {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/ball-rho1.toml");
    let cfg = RunConfig::from_toml(&std::fs::read_to_string(path).unwrap()).unwrap();
    let profile = profile_for(&cfg).unwrap();
    let mut rows = Vec::new();
    for &eps in &cfg.pinning.eps {
        let ex = onset_experiment(&cfg, eps, &profile).unwrap();
        rows.push((eps, ex.report.hc1, ex.report.h_star, ex.report.normalized));
    }
    let above = rows.iter().all(|r| matches!(r.2, Some(h) if h >= r.1));
    let norm: Vec<f64> = rows.iter().map(|r| r.3.unwrap_or(f64::NAN)).collect();
    let decreasing = norm.windows(2).all(|w| w[1] < w[0]) && norm.iter().all(|&v| v >= 1.0);
    outcome(
        above && decreasing,
        format!(
            "(eps, Hc1, h*, h*/Hc1): {:?}",
            rows.iter()
                .map(|r| format!("({}, {:.4}, {:.4}, {:.4})", r.0, r.1, r.2.unwrap_or(f64::NAN), r.3.unwrap_or(f64::NAN)))
                .collect::<Vec<_>>()
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let only: Option<Vec<usize>> =
        std::env::var("GLPIN_ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(&str, fn() -> Outcome, u64); 10] = [
        ("discrete calculus identities", criterion_1, 10),
        ("pinning solver", criterion_2, 120),
        ("profile and core constant", criterion_3, 30),
        ("Biot-Savart quantisation", criterion_4, 60),
        ("corrected current and potential", criterion_5, 600),
        ("energy splitting", criterion_6, 300),
        ("energy law", criterion_7, 1800),
        ("vorticity concentration", criterion_8, 300),
        ("isoflux optimiser", criterion_9, 120),
        ("onset consistency", criterion_10, 2700),
    ];
    let mut failed = Vec::new();
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let id = k + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            println!("SKIP {id:>2} {name}");
            continue;
        }
        let t = Instant::now();
        let out = run();
        let el = t.elapsed();
        let pass = out.pass && el <= Duration::from_secs(*budget);
        println!(
            "{} {id:>2} {name}: {} [{:.1?} of {budget} s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            el
        );
        if !pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

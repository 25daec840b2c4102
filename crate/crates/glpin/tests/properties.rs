//! Randomised invariants across modules.

use glpin::geometry::{FramedCurve, PolyCurve};
use glpin::grid::{curl, div, grad, ComplexField, Domain, Grid, Placement, ScalarField, Shape, VectorField};
use glpin::io::{decode_field, encode_field, parse_curve_csv, curve_csv, FieldData};
use glpin::isoflux::{dinkelbach, exhaustive_max, hc1, ratio, GraphEdge, IsofluxInstance, RatioGraph, Stub};
use glpin::pinning::{solve_rho, PinningModel, RhoOptions};
use glpin::Vec3;
use num_complex::Complex64;
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn grid() -> impl Strategy<Value = Grid> {
    (4usize..9, 4usize..9, 4usize..9, 0.05..0.5f64, vec3())
        .prop_map(|(a, b, c, h, o)| Grid::new([o.x, o.y, o.z], h, [a, b, c]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_discrete_identities(g in grid(), seed in any::<u64>()) {
        let f = ScalarField::from_fn(g, Placement::Node, |x| (x.x * 3.1 + seed as f64 * 1e-3).sin() * x.y.exp() - x.z * x.z);
        let v = VectorField::from_fn(g, Placement::Edge, |x| Vec3::new(x.y.cos(), (x.z * x.x).sin(), x.x * x.y * x.z + (seed % 7) as f64));
        let cg = curl(&grad(&f));
        let dc = div(&curl(&v));
        let scale = 1.0 / (g.h * g.h);
        for c in 0..3 {
            g.for_each(Placement::Face, c, |_, _, _, n| assert!(cg.comps[c][n].abs() <= 1e-11 * scale));
        }
        g.for_each(Placement::Cell, 0, |_, _, _, n| assert!(dc.values[n].abs() <= 1e-11 * scale));
    }

    #[test]
    fn glf_round_trip(g in grid(), s in -5.0..5.0f64) {
        let sf = ScalarField::from_fn(g, Placement::Node, |x| s * x.x - x.y * x.z);
        let vf = VectorField::from_fn(g, Placement::Face, |x| x * s);
        let cf = ComplexField::from_fn(g, |x| Complex64::new(x.x, s * x.z));
        let back = decode_field(&encode_field(&FieldData::from(&sf))).unwrap().into_scalar().unwrap();
        prop_assert_eq!(back, sf);
        let back = decode_field(&encode_field(&FieldData::from(&vf))).unwrap().into_vector().unwrap();
        prop_assert_eq!(back, vf);
        let back = decode_field(&encode_field(&FieldData::from(&cf))).unwrap().into_complex().unwrap();
        prop_assert_eq!(back, cf);
    }

    #[test]
    fn truncated_glf_is_rejected(g in grid(), cut in 1usize..64) {
        let sf = ScalarField::constant(g, Placement::Node, 1.5);
        let bytes = encode_field(&FieldData::from(&sf));
        prop_assert!(decode_field(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn curve_csv_round_trip(pts in prop::collection::vec(vec3(), 3..12), closed in any::<bool>()) {
        prop_assume!(pts.windows(2).all(|w| (w[1] - w[0]).norm() > 1e-3) && (pts[0] - pts[pts.len() - 1]).norm() > 1e-3);
        let c = PolyCurve::new(pts, closed).unwrap();
        let back = parse_curve_csv(&curve_csv(&c, None)).unwrap();
        prop_assert_eq!(back.closed, c.closed);
        for (a, b) in back.points.iter().zip(&c.points) {
            prop_assert!((a - b).norm() <= 1e-15 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn frames_are_orthonormal(pts in prop::collection::vec(vec3(), 3..15)) {
        prop_assume!(pts.windows(2).all(|w| (w[1] - w[0]).norm() > 1e-2));
        let c = PolyCurve::new(pts, false).unwrap();
        prop_assume!(c.vertex_tangents().iter().all(|t| t.norm() > 0.5));
        let f = FramedCurve::parallel_transport(&c, None).unwrap();
        prop_assert!(f.orthonormality_defect() < 1e-12);
        for i in 0..f.e1.len() {
            prop_assert!(f.tangents[i].cross(&f.e1[i]).dot(&f.e2[i]) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn threshold_shift_under_halving(r in 0.01..10.0f64, eps in 1e-6..0.3f64) {
        let d = hc1(r, eps / 2.0).unwrap() - hc1(r, eps).unwrap();
        prop_assert!((d - std::f64::consts::LN_2 / (2.0 * r)).abs() <= 1e-12 * (1.0 + hc1(r, eps / 2.0).unwrap()));
    }

    #[test]
    fn ratio_is_odd_and_homogeneous(b in vec3(), c in 0.2..5.0f64, mid in vec3()) {
        prop_assume!(b.norm() > 0.1);
        let g = Grid::cell_centered(Vec3::zeros(), 6, 0.25).unwrap();
        let shape = Shape::ball(Vec3::zeros(), 1.0);
        let make = |scale_b: f64, rho2: f64| {
            let b0 = VectorField::from_fn(g, Placement::Face, |x| (b + x * 0.3) * scale_b);
            IsofluxInstance::new(b0, ScalarField::constant(g, Placement::Node, rho2), shape, 0.25, 0.1).unwrap()
        };
        let curve = PolyCurve::new(vec![Vec3::new(0.0, 0.0, -1.0), mid * 0.6, Vec3::new(0.0, 0.0, 1.0)], false).unwrap();
        let r = ratio(&curve, &make(1.0, 0.7)).unwrap();
        prop_assert!((ratio(&curve.reversed(), &make(1.0, 0.7)).unwrap() + r).abs() <= 1e-13 * (1.0 + r.abs()));
        prop_assert!((ratio(&curve, &make(c, 0.7)).unwrap() - c * r).abs() <= 1e-12 * (1.0 + (c * r).abs()));
        prop_assert!((ratio(&curve, &make(1.0, 0.7 * c)).unwrap() - r / c).abs() <= 1e-12 * (1.0 + r.abs()));
    }
}

fn random_graph(n: usize, terminals: &[usize], vals: &[(f64, f64)]) -> RatioGraph {
    let mut k = 0;
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let (g, c) = vals[k % vals.len()];
            k += 1;
            edges.push(GraphEdge { a, b, gain: g, cost: c });
        }
    }
    let stubs = (0..n)
        .map(|v| {
            terminals.contains(&v).then(|| {
                let (g, c) = vals[(k + v) % vals.len()];
                Stub { gain: 0.5 * g, cost: 0.3 * c }
            })
        })
        .collect();
    RatioGraph::new(n, edges, stubs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dinkelbach_matches_enumeration(
        n in 3usize..7,
        vals in prop::collection::vec((-1.0..1.0f64, 0.2..1.5f64), 21..40),
        t in prop::collection::btree_set(0usize..7, 0..4),
    ) {
        let terminals: Vec<usize> = t.into_iter().filter(|&v| v < n).collect();
        let g = random_graph(n, &terminals, &vals);
        let exact = exhaustive_max(std::slice::from_ref(&g), 1 << 30).unwrap().pop().unwrap();
        let d = dinkelbach(&g, 100).unwrap();
        prop_assert!(d.lambdas.windows(2).all(|w| w[1] > w[0]));
        match exact {
            Some((c, r)) => {
                prop_assert!((d.ratio - r).abs() <= 1e-12 * r.abs().max(1.0));
                prop_assert_eq!(d.curve.unwrap().canonical(), c.canonical());
            }
            None => prop_assert!(d.curve.is_none()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn pinning_comparison_principle(
        c in vec3(),
        width in 0.3..0.8f64,
        depth in 0.1..0.5f64,
        extra in 0.0..0.3f64,
    ) {
        let d = Domain::ball(Vec3::zeros(), 1.0, 12, 2).unwrap();
        let low = PinningModel::Bump { center: [c.x * 0.5, c.y * 0.5, c.z * 0.5], width, depth: depth + extra };
        let high = PinningModel::Bump { center: [c.x * 0.5, c.y * 0.5, c.z * 0.5], width, depth };
        let (a, b) = (low.sample(&d).unwrap(), high.sample(&d).unwrap());
        let opts = RhoOptions::default();
        let r1 = solve_rho(&d, &a, 0.25, &opts).unwrap().rho;
        let r2 = solve_rho(&d, &b, 0.25, &opts).unwrap().rho;
        for n in 0..d.grid.len() {
            if d.node_weight(n) > 0.0 {
                prop_assert!(r1.values[n] <= r2.values[n] + 1e-8);
                prop_assert!(r1.values[n] >= (1.0 - depth - extra).sqrt() - 1e-8 && r2.values[n] <= 1.0 + 1e-8);
            }
        }
    }
}

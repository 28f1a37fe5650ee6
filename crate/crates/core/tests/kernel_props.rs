use proptest::prelude::*;

use tdiff::geom::{vector, Polyhedron, Region, Vector};
use tdiff::homog::{HomogMap, Matrix};

fn pt2() -> impl Strategy<Value = Vector> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| vector(&[a, b]))
}

fn dir2() -> impl Strategy<Value = Vector> {
    (0.0..std::f64::consts::TAU).prop_map(|t| vector(&[t.cos(), t.sin()]))
}

fn polytope() -> impl Strategy<Value = Polyhedron> {
    prop::collection::vec(pt2(), 1..7).prop_map(|pts| Polyhedron::from_vrep(2, pts, vec![]).unwrap())
}

fn matrix2() -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0..2.0f64, 4).prop_map(|v| Matrix::from_row_slice(2, 2, &v))
}

/// A map from the plane to the plane with one of several representations.
fn homog() -> impl Strategy<Value = HomogMap> {
    prop_oneof![
        (0.0..3.0f64).prop_map(|k| HomogMap::ball(2, 2, k).unwrap()),
        matrix2().prop_map(HomogMap::linear),
        prop::collection::vec(matrix2(), 1..4).prop_map(|ms| HomogMap::bundle(ms).unwrap()),
        (matrix2(), 0.0..1.0f64).prop_map(|(m, d)| HomogMap::linear(m).inflate(d).unwrap()),
    ]
}

fn max_support(points: &[Vector], u: &Vector) -> f64 {
    points.iter().map(|p| p.dot(u)).fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn values_scale_with_the_argument(t in homog(), w in pt2(), lambda in 0.1..4.0f64, u in dir2()) {
        let a = t.eval(&(&w * lambda)).unwrap();
        let b = t.eval(&w).unwrap();
        let (sa, sb) = (a.support(&u).unwrap(), b.support(&u).unwrap());
        prop_assert!((sa - lambda * sb).abs() <= 1e-7 * (1.0 + sa.abs()), "{sa} vs {lambda} * {sb}");
        for y in [vector(&[0.3, -0.4]), vector(&[2.0, 1.0])] {
            let da = t.dist_to_value(&(&w * lambda), &(&y * lambda)).unwrap();
            let db = t.dist_to_value(&w, &y).unwrap();
            prop_assert!((da - lambda * db).abs() <= 1e-7 * (1.0 + da));
        }
    }

    #[test]
    fn inflations_add_up(m in matrix2(), a in 0.0..1.0f64, b in 0.0..1.0f64, w in pt2(), y in pt2()) {
        let t = HomogMap::linear(m.clone());
        let twice = t.inflate(a).unwrap().inflate(b).unwrap();
        let once = t.inflate(a + b).unwrap();
        let d2 = twice.dist_to_value(&w, &y).unwrap();
        let d1 = once.dist_to_value(&w, &y).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-9);
        let exact = ((&m * &w - &y).norm() - (a + b) * w.norm()).max(0.0);
        prop_assert!((d1 - exact).abs() < 1e-9, "{d1} vs {exact}");
    }

    #[test]
    fn inflation_only_grows_values(t in homog(), d in 0.0..1.0f64, w in pt2()) {
        let big = t.inflate(d).unwrap().eval(&w).unwrap();
        for piece in &t.eval(&w).unwrap().pieces {
            for v in piece.vertices() {
                prop_assert!(big.contains(v, 1e-7));
            }
        }
    }

    #[test]
    fn minkowski_support_is_additive(p in polytope(), q in polytope(), u in dir2()) {
        let s = p.minkowski(&q).unwrap();
        let lhs = s.support(&u);
        let rhs = p.support(&u) + q.support(&u);
        prop_assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn hausdorff_is_a_pseudometric(a in polytope(), b in polytope(), c in polytope()) {
        let (a, b, c) = (Region::single(a), Region::single(b), Region::single(c));
        let ab = a.hausdorff(&b, None).unwrap();
        let ba = b.hausdorff(&a, None).unwrap();
        let bc = b.hausdorff(&c, None).unwrap();
        let ac = a.hausdorff(&c, None).unwrap();
        prop_assert!(a.hausdorff(&a, None).unwrap() < 1e-9);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-8);
        prop_assert!(ac <= ab + bc + 1e-8);
    }

    #[test]
    fn vertex_and_facet_descriptions_agree(pts in prop::collection::vec(pt2(), 3..8), u in dir2(), probe in pt2()) {
        let p = Polyhedron::from_vrep(2, pts.clone(), vec![]).unwrap();
        for v in &pts {
            prop_assert!(p.contains(v, 1e-8));
            for h in p.hrep() {
                prop_assert!(h.violation(v) <= 1e-8);
            }
        }
        prop_assert!((p.support(&u) - max_support(&pts, &u)).abs() < 1e-8);
        // rebuilding from the facets gives the same set
        let q = Polyhedron::from_hrep(2, p.hrep().to_vec()).unwrap();
        prop_assert!((q.support(&u) - p.support(&u)).abs() < 1e-8);
        prop_assert_eq!(p.contains(&probe, 1e-9), q.contains(&probe, 1e-9));
    }
}

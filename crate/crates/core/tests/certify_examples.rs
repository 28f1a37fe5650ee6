use tdiff::certify::{certify_pseudo, certify_setvalued, recheck_witness, CertConfig, Notion, Verdict};
use tdiff::gallery::map_by_name;
use tdiff::geom::vector;
use tdiff::homog::{half_line_example_map, HomogMap, Matrix};
use tdiff::{Halfspace, Polyhedron, SVMap};

fn lower_half_line() -> SVMap {
    let g = Polyhedron::from_hrep(2, vec![Halfspace::new(vector(&[-1.0, 1.0]), 0.0).unwrap()]).unwrap();
    SVMap::poly_graph(1, 1, vec![g]).unwrap()
}

#[test]
fn half_line_strict_and_reflected_outer() {
    let s = lower_half_line();
    let t = half_line_example_map();
    let cfg = CertConfig::default();
    for x in [-1.0, 0.0, 1.0] {
        let c = certify_setvalued(&s, &vector(&[x]), &t, Notion::StrictT, &cfg).unwrap();
        assert!(c.verified(), "x = {x}: {:?}", c.rungs);
        assert!(c.deltas.iter().all(|d| d.radius.is_some()));
    }
    let r = t.reflect();
    let c = certify_setvalued(&s, &vector(&[0.0]), &r, Notion::OuterT, &cfg).unwrap();
    assert_eq!(c.verdict, Verdict::Refuted);
    let w = c.witness.as_ref().unwrap();
    assert!(w.violation > 3.0 * (c.slack.geometric + c.slack.resolution));
    assert!(recheck_witness(&s, &r, &c).unwrap() > 3.0 * c.slack.geometric);
}

#[test]
fn vertical_line_map() {
    // gph = {(x1, x2, y1, y2) : y1 = x1}
    let g = Polyhedron::from_hrep(
        4,
        vec![
            Halfspace::new(vector(&[1.0, 0.0, -1.0, 0.0]), 0.0).unwrap(),
            Halfspace::new(vector(&[-1.0, 0.0, 1.0, 0.0]), 0.0).unwrap(),
        ],
    )
    .unwrap();
    let s = SVMap::poly_graph(2, 2, vec![g]).unwrap();
    let t1 = HomogMap::identity(2);
    let t2 = HomogMap::linear(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    let cfg = CertConfig { grid_per_axis: 7, max_points: 49, pair_budget: 800, ..CertConfig::default() };
    let x = vector(&[0.2, -0.3]);
    assert!(certify_setvalued(&s, &x, &t1, Notion::StrictT, &cfg).unwrap().verified());
    assert!(certify_setvalued(&s, &x, &t2, Notion::StrictT, &cfg).unwrap().verified());
    let both = HomogMap::intersect(&t1, &t2).unwrap();
    let c = certify_setvalued(&s, &x, &both, Notion::StrictT, &cfg).unwrap();
    assert!(c.refuted());
}

#[test]
fn sqrt_hook_is_not_pseudo_strict() {
    let s = map_by_name("sqrt_hook", &serde_json::Value::Null).unwrap();
    let t = HomogMap::from_rays(1, 2, &[vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]]).unwrap();
    let cfg = CertConfig {
        radius_ladder: vec![0.1, 0.05, 0.02, 0.01],
        window_ladder: vec![0.5, 0.4, 0.3, 0.25],
        ..CertConfig::default()
    };
    let c = certify_pseudo(&s, &vector(&[0.0]), &vector(&[0.0, 0.0]), &t, Notion::PseudoStrictT, &cfg).unwrap();
    assert!(c.refuted(), "{:?}", c.rungs);
    assert_eq!(c.slack.resolution, 1e-3);
    let w = c.witness.unwrap();
    assert!(w.y[1] > 0.0);
}

#[test]
fn whole_space_is_pseudo_differentiable_by_zero() {
    let s = map_by_name("whole_space", &serde_json::json!({"dim_in": 1, "dim_out": 1})).unwrap();
    let t = HomogMap::zero(1, 1);
    let cfg = CertConfig::default();
    for (x, y) in [(0.0, 0.0), (1.0, -3.0)] {
        let c = certify_pseudo(&s, &vector(&[x]), &vector(&[y]), &t, Notion::PseudoT, &cfg).unwrap();
        assert!(c.verified());
    }
}

//! Acceptance suite. Prints one line per criterion and exits nonzero when any
//! criterion fails. Pass criterion numbers as arguments to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use tdiff::calculus::{chain_t, sum_t};
use tdiff::certify::{
    certify_pseudo, certify_setvalued, certify_single, estimate_lip, recheck_witness, CertConfig, Notion,
};
use tdiff::clarke::{clarke_dirderiv, clarke_jacobian, hull_distance, jacobian_t, ClarkeConfig, SmoothSampler};
use tdiff::coderiv::{coderivative, graphical_modulus, mord_t};
use tdiff::corpus::{chain_corpus, clarke_corpus, mordukhovich_corpus, regcover_corpus, sum_corpus, Flavor};
use tdiff::gallery::{function_by_name, map_by_name};
use tdiff::geom::vector;
use tdiff::homog::{half_line_example_map, HomogMap, Matrix};
use tdiff::instance::{gallery_instances, run_instance, RunFlags};
use tdiff::regcover::{equivalence_harness, subreg_harness};
use tdiff::strictify::{graph_net, lip_equals_limsup_clm, strict_from_outer, ProbeMode};
use tdiff::{Error, Halfspace, Polyhedron, Region, SVMap, Vector};

type Check = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: std::result::Result<T, E>, ctx: &str) -> std::result::Result<T, String> {
    r.map_err(|e| format!("{ctx}: {e}"))
}

fn lower_half_line() -> SVMap {
    let g = Polyhedron::from_hrep(2, vec![Halfspace::new(vector(&[-1.0, 1.0]), 0.0).unwrap()]).unwrap();
    SVMap::poly_graph(1, 1, vec![g]).unwrap()
}

fn gallery_fidelity() -> Check {
    let cfg = CertConfig::default();
    let s = lower_half_line();
    let t = half_line_example_map();
    for x in [-1.0, 0.0, 1.0] {
        let c = ok(certify_setvalued(&s, &vector(&[x]), &t, Notion::StrictT, &cfg), "half-line strict")?;
        ensure!(c.verified(), "half-line strict not verified at {x}");
        ensure!(
            c.deltas.len() == cfg.delta_ladder.len() && c.deltas.iter().all(|d| d.radius.is_some()),
            "some delta failed at {x}"
        );
    }
    let r = t.reflect();
    let c = ok(certify_setvalued(&s, &vector(&[0.0]), &r, Notion::OuterT, &cfg), "reflected outer")?;
    ensure!(c.refuted(), "reflected outer map not refuted: {:?}", c.verdict);
    let w = c.witness.as_ref().ok_or("refutation without witness")?;
    let slack = c.slack.geometric;
    ensure!(w.violation > 3.0 * slack, "witness violation {} below 3x slack", w.violation);
    ensure!(ok(recheck_witness(&s, &r, &c), "recheck")? > 3.0 * slack, "witness does not recheck");
    let reflected_violation = w.violation;

    // vertical line map on the plane
    let g = Polyhedron::from_hrep(
        4,
        vec![
            Halfspace::new(vector(&[1.0, 0.0, -1.0, 0.0]), 0.0).unwrap(),
            Halfspace::new(vector(&[-1.0, 0.0, 1.0, 0.0]), 0.0).unwrap(),
        ],
    )
    .unwrap();
    let vl = SVMap::poly_graph(2, 2, vec![g]).unwrap();
    let t1 = HomogMap::identity(2);
    let t2 = HomogMap::linear(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    let small = CertConfig { grid_per_axis: 7, max_points: 49, pair_budget: 800, ..CertConfig::default() };
    let x = vector(&[0.2, -0.3]);
    ensure!(ok(certify_setvalued(&vl, &x, &t1, Notion::StrictT, &small), "T1")?.verified(), "T1 not verified");
    ensure!(ok(certify_setvalued(&vl, &x, &t2, Notion::StrictT, &small), "T2")?.verified(), "T2 not verified");
    let both = ok(HomogMap::intersect(&t1, &t2), "intersection")?;
    ensure!(
        ok(certify_setvalued(&vl, &x, &both, Notion::StrictT, &small), "T1 and T2")?.refuted(),
        "intersection not refuted"
    );

    let hook = ok(map_by_name("sqrt_hook", &Value::Null), "sqrt_hook")?;
    ensure!(hook.resolution() == 1e-3, "oracle resolution is {}", hook.resolution());
    let ds = ok(
        HomogMap::from_rays(1, 2, &[vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]]),
        "hook map",
    )?;
    let hook_cfg = CertConfig {
        radius_ladder: vec![0.1, 0.05, 0.02, 0.01],
        window_ladder: vec![0.5, 0.4, 0.3, 0.25],
        ..CertConfig::default()
    };
    let c = ok(
        certify_pseudo(&hook, &vector(&[0.0]), &vector(&[0.0, 0.0]), &ds, Notion::PseudoStrictT, &hook_cfg),
        "hook",
    )?;
    ensure!(c.refuted(), "hook not refuted: {:?}", c.verdict);

    let whole = ok(map_by_name("whole_space", &json!({"dim_in": 1, "dim_out": 1})), "whole space")?;
    let c = ok(
        certify_pseudo(&whole, &vector(&[0.0]), &vector(&[0.0]), &HomogMap::zero(1, 1), Notion::PseudoT, &cfg),
        "whole space",
    )?;
    ensure!(c.verified(), "whole space not verified");
    Ok(format!("4 examples as expected (reflected-map violation {reflected_violation:.3e})"))
}

fn mordukhovich() -> Check {
    // coderivative norms worked out by hand
    let expected = [
        2.0,
        1.0,
        3.0,
        2.0,
        1.0,
        1.0,
        1.0,
        2.0,
        5f64.sqrt(),
        1.0,
        1.25f64.sqrt(),
        2f64.sqrt(),
    ];
    let corpus = ok(mordukhovich_corpus(), "corpus")?;
    ensure!(corpus.len() == 12, "corpus has {} maps", corpus.len());
    let cfg = CertConfig::default();
    let mut worst: f64 = 0.0;
    for (p, want) in corpus.iter().zip(expected) {
        let d = ok(coderivative(&p.map, &p.point.x, &p.point.y), &p.name)?;
        let gm = ok(graphical_modulus(&d), &p.name)?;
        ensure!((gm - want).abs() < 1e-6, "{}: graphical modulus {gm}, expected {want}", p.name);
        let lip = ok(estimate_lip(&p.map, &p.point.x, Some(&p.point.y), &cfg), &p.name)?.value;
        let rel = (gm - lip).abs() / gm;
        ensure!(rel <= 0.05, "{}: modulus {gm} vs estimate {lip}", p.name);
        worst = worst.max(rel);
        let t = ok(mord_t(&d), &p.name)?;
        let c = ok(certify_pseudo(&p.map, &p.point.x, &p.point.y, &t, Notion::PseudoStrictT, &cfg), &p.name)?;
        ensure!(c.verified(), "{}: pseudo strict certificate {:?}", p.name, c.verdict);
    }
    Ok(format!("12/12 maps, worst relative gap {:.2}%", 100.0 * worst))
}

fn harnesses() -> Check {
    let corpus = ok(regcover_corpus(0, 20), "corpus")?;
    let (mut verified, mut refuted) = (0, 0);
    let results: Vec<_> = corpus
        .iter()
        .map(|c| (equivalence_harness(&c.instance), subreg_harness(&c.instance)))
        .collect();
    for (i, (eq, sub)) in results.into_iter().enumerate() {
        let eq = ok(eq, &format!("instance {i}"))?;
        ensure!(
            eq.agree,
            "instance {i}: three-way disagreement {:?} {:?} {:?}",
            eq.mr.verdict,
            eq.oc.verdict,
            eq.it.verdict
        );
        if eq.mr.verified() {
            verified += 1;
        } else if eq.mr.refuted() {
            refuted += 1;
        }
        let sub = ok(sub, &format!("instance {i}"))?;
        ensure!(sub.agree, "instance {i}: two-way disagreement {:?} {:?}", sub.msr.verdict, sub.outer_it.verdict);
    }
    Ok(format!("20/20 three-way and 20/20 two-way agreement ({verified} verified, {refuted} refuted)"))
}

fn clarke_suite() -> Check {
    let cc = ClarkeConfig::default();
    let cfg = CertConfig::default();
    let sampler = |name: &str| SmoothSampler::new(function_by_name(name, &Value::Null).unwrap());
    let j = ok(clarke_jacobian(&sampler("abs"), &vector(&[0.0]), &cc), "abs")?;
    let d_abs = ok(hull_distance(&j.hull_points(), &[vector(&[-1.0]), vector(&[1.0])]), "abs hull")?;
    ensure!(d_abs <= 1e-3, "abs hull at distance {d_abs}");
    let j = ok(clarke_jacobian(&sampler("max2"), &vector(&[0.0, 0.0]), &cc), "max2")?;
    let d_max = ok(hull_distance(&j.hull_points(), &[vector(&[1.0, 0.0]), vector(&[0.0, 1.0])]), "max hull")?;
    ensure!(d_max <= 1e-2, "max hull at distance {d_max}");
    let mut homog_err: f64 = 0.0;
    let corpus = clarke_corpus();
    for (name, x) in &corpus {
        let f = ok(function_by_name(name, &Value::Null), name)?;
        let x = vector(x);
        let s = SmoothSampler::new(f.clone());
        let j = ok(clarke_jacobian(&s, &x, &cc), name)?;
        let t = ok(jacobian_t(&j), name)?;
        let c = ok(certify_single(f.clone(), &x, &t, Notion::SingleT, &cfg), name)?;
        ensure!(c.verified(), "{name}: Clarke Jacobian map {:?}", c.verdict);
        if f.dim_out() == 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..4 {
                let v = Vector::from_iterator(x.len(), (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)));
                let base = ok(clarke_dirderiv(&s, &x, &v, &cc), name)?.value;
                for k in [2.0, 10.0] {
                    let scaled = ok(clarke_dirderiv(&s, &x, &(&v * k), &cc), name)?.value;
                    homog_err = homog_err.max((scaled - k * base).abs());
                }
            }
        }
    }
    ensure!(homog_err <= 1e-6, "directional derivative homogeneity error {homog_err}");
    Ok(format!(
        "hulls at {d_abs:.1e} and {d_max:.1e}, {} functions verified, homogeneity error {homog_err:.1e}",
        corpus.len()
    ))
}

fn calculus_soundness() -> Check {
    let cfg = CertConfig::default();
    let mut strict = 0;
    for (i, case) in ok(chain_corpus(0, 10), "chain corpus")?.iter().enumerate() {
        let inst = &case.instance;
        let composed = ok(chain_t(inst), &format!("chain {i}"))?;
        let gf = ok(SVMap::compose(&inst.g, &inst.f), "compose")?;
        let c = ok(certify_pseudo(&gf, &inst.xbar, &inst.zbar, &composed.map, Notion::PseudoOuterT, &cfg), "chain")?;
        ensure!(c.verified(), "chain {i}: pseudo outer {:?}", c.verdict);
        if case.flavor == Flavor::Strict {
            let c =
                ok(certify_pseudo(&gf, &inst.xbar, &inst.zbar, &composed.map, Notion::PseudoStrictT, &cfg), "chain")?;
            ensure!(c.verified(), "chain {i}: pseudo strict {:?}", c.verdict);
            strict += 1;
        }
    }
    for (i, case) in ok(sum_corpus(0, 6), "sum corpus")?.iter().enumerate() {
        let inst = &case.instance;
        let composed = ok(sum_t(inst), &format!("sum {i}"))?;
        let total = ok(SVMap::sum(&inst.maps), "sum")?;
        let c = ok(certify_pseudo(&total, &inst.xbar, &inst.ybar, &composed.map, Notion::PseudoOuterT, &cfg), "sum")?;
        ensure!(c.verified(), "sum {i}: pseudo outer {:?}", c.verdict);
        if case.flavor == Flavor::Strict {
            let c =
                ok(certify_pseudo(&total, &inst.xbar, &inst.ybar, &composed.map, Notion::PseudoStrictT, &cfg), "sum")?;
            ensure!(c.verified(), "sum {i}: pseudo strict {:?}", c.verdict);
            strict += 1;
        }
    }
    Ok(format!("10 chain and 6 sum instances certified ({strict} also strictly)"))
}

fn section_eight() -> Check {
    let cfg = CertConfig::default();
    let corpus = ok(mordukhovich_corpus(), "corpus")?;
    let (mut equal, mut passing, mut failing) = (0, 0, 0);
    for p in &corpus {
        let (x, y) = (&p.point.x, &p.point.y);
        let r = ok(lip_equals_limsup_clm(&p.map, x, y, &cfg), &p.name)?;
        ensure!(r.one_sided, "{}: lip {} below sup of calmness moduli {}", p.name, r.lip_est, r.clm_sup_est);
        if r.inner_semicontinuous {
            ensure!(
                r.equality == Some(true),
                "{}: lip {} and calmness sup {} differ",
                p.name,
                r.lip_est,
                r.clm_sup_est
            );
            let rel = (r.lip_est - r.clm_sup_est).abs() / r.lip_est.max(1e-12);
            ensure!(rel <= 0.05, "{}: relative gap {rel}", p.name);
            equal += 1;
        }
        let t = ok(coderivative(&p.map, x, y).and_then(|d| mord_t(&d)), &p.name)?;
        let net = ok(graph_net(&p.map, x, y, 0.05, 5, 0), &p.name)?;
        match strict_from_outer(&p.map, &t, x, y, &cfg, &net, ProbeMode::Standard) {
            Ok(rep) => {
                ensure!(!rep.certificate.refuted(), "{}: prediction contradicted", p.name);
                ensure!(rep.consistent, "{}: inconsistent report", p.name);
                passing += 1;
            }
            Err(Error::HypothesisFailure(_)) => failing += 1,
            Err(e) => return Err(format!("{}: {e}", p.name)),
        }
    }
    let s = lower_half_line();
    let net = ok(graph_net(&s, &vector(&[0.0]), &vector(&[0.0]), 0.05, 5, 0), "half line")?;
    let rep = ok(
        strict_from_outer(&s, &half_line_example_map(), &vector(&[0.0]), &vector(&[0.0]), &cfg, &net, ProbeMode::Standard),
        "half line",
    )?;
    ensure!(rep.certificate.verified(), "half-line prediction not verified");
    passing += 1;
    ensure!(passing >= 6, "only {passing} instances passed the probes");
    let sq = SVMap::from_function(
        ok(function_by_name("square", &Value::Null), "square")?,
        tdiff::svmap::DomainBox::cube(1, 3.0),
    );
    let r = ok(lip_equals_limsup_clm(&sq, &vector(&[1.0]), &vector(&[1.0]), &cfg), "square")?;
    ensure!((r.lip_est - 2.0).abs() <= 0.04, "lip of x^2 at 1 is {}", r.lip_est);
    Ok(format!(
        "one-sided on 12/12, equality on {equal}, {passing} probe-passing predictions held ({failing} failed probes), lip(x^2 at 1) = {:.4}",
        r.lip_est
    ))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| rng.gen_range(-scale..scale)))
}

fn random_homog(rng: &mut ChaCha8Rng, n: usize, m: usize) -> HomogMap {
    match rng.gen_range(0..4) {
        0 => HomogMap::ball(n, m, rng.gen_range(0.1..3.0)).unwrap(),
        1 => HomogMap::linear(Matrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0))),
        2 => HomogMap::bundle((0..2).map(|_| Matrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0))).collect())
            .unwrap(),
        _ => {
            let rays: Vec<Vec<f64>> = (0..n + m + 1).map(|_| random_vec(rng, n + m, 1.0).iter().copied().collect()).collect();
            HomogMap::from_rays(n, m, &[rays]).unwrap()
        }
    }
}

fn random_polytope(rng: &mut ChaCha8Rng, n: usize) -> Polyhedron {
    let c = random_vec(rng, n, 1.0);
    let pts: Vec<Vector> = (0..n + 3).map(|_| &c + random_vec(rng, n, 1.0)).collect();
    Polyhedron::from_vrep(n, pts, vec![]).unwrap()
}

/// One construction per seed; returns a description of the first failure.
fn kernel_case(seed: u64) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=2);
    let m = rng.gen_range(1..=2);
    let t = random_homog(&mut rng, n, m);
    let tol = 1e-7;
    // homogeneity
    for _ in 0..20 {
        if let Some((w, y)) = t.sample_graph_point(&mut rng).map_err(|e| format!("seed {seed}: {e}"))? {
            for k in [0.1, 0.5, 2.0, 10.0] {
                let d = t.dist_to_value(&(&w * k), &(&y * k)).map_err(|e| format!("seed {seed}: {e}"))?;
                if d > tol * (1.0 + k * y.norm()) {
                    return Err(format!("seed {seed}: ({k} w, {k} y) at distance {d}"));
                }
            }
        }
    }
    // inflation composition
    let (d1, d2) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
    let a = t.inflate(d1).and_then(|x| x.inflate(d2)).map_err(|e| format!("seed {seed}: {e}"))?;
    let b = t.inflate(d1 + d2).map_err(|e| format!("seed {seed}: {e}"))?;
    let w = random_vec(&mut rng, n, 1.0);
    let (ea, eb) = (a.eval(&w).map_err(|e| format!("seed {seed}: {e}"))?, b.eval(&w).map_err(|e| format!("seed {seed}: {e}"))?);
    // a cone graph may leave some directions without values
    let h = match (ea.is_empty(), eb.is_empty()) {
        (true, true) => 0.0,
        (false, false) => {
            let c = ea.project(&Vector::zeros(m)).map_err(|e| format!("seed {seed}: {e}"))?;
            ea.hausdorff(&eb, Some(&tdiff::Ball::new(c, 20.0).unwrap())).map_err(|e| format!("seed {seed}: {e}"))?
        }
        _ => f64::INFINITY,
    };
    if h > 1e-8 {
        return Err(format!("seed {seed}: inflations differ by {h}"));
    }
    // Minkowski support additivity
    let d = rng.gen_range(1..=3);
    let (p, q) = (random_polytope(&mut rng, d), random_polytope(&mut rng, d));
    let pq = p.minkowski(&q).map_err(|e| format!("seed {seed}: {e}"))?;
    for _ in 0..10 {
        let u = random_vec(&mut rng, d, 1.0);
        let gap = (pq.support(&u) - p.support(&u) - q.support(&u)).abs();
        if gap > 1e-8 * (1.0 + u.norm()) {
            return Err(format!("seed {seed}: support gap {gap}"));
        }
    }
    // Hausdorff pseudometric
    let r = random_polytope(&mut rng, d);
    let (rp, rq, rr) = (Region::single(p.clone()), Region::single(q.clone()), Region::single(r));
    let hd = |a: &Region, b: &Region| a.hausdorff(b, None).map_err(|e| format!("seed {seed}: hausdorff: {e}"));
    let (pq_d, qp_d, pp_d) = (hd(&rp, &rq)?, hd(&rq, &rp)?, hd(&rp, &rp)?);
    let (pr, rq_d) = (hd(&rp, &rr)?, hd(&rr, &rq)?);
    if pp_d > 1e-9 || (pq_d - qp_d).abs() > 1e-9 || pq_d > pr + rq_d + 1e-9 || pq_d < 0.0 {
        return Err(format!("seed {seed}: Hausdorff axioms fail ({pp_d}, {pq_d}, {qp_d}, {pr}, {rq_d})"));
    }
    // H/V consistency
    let back = Polyhedron::from_hrep(d, p.hrep().to_vec()).map_err(|e| format!("seed {seed}: {e}"))?;
    if !back.approx_eq(&p, 1e-7) {
        return Err(format!("seed {seed}: H-representation does not reproduce the vertices"));
    }
    for v in p.vertices() {
        if p.hrep().iter().any(|h| h.violation(v) > 1e-9) {
            return Err(format!("seed {seed}: vertex outside its own H-representation"));
        }
    }
    Ok(())
}

fn kernel_properties() -> Check {
    let failures: Vec<String> = (0..500u64).filter_map(|s| kernel_case(s).err()).collect();
    ensure!(failures.is_empty(), "{} failures, first: {}", failures.len(), failures[0]);
    Ok("500/500 constructions".into())
}

fn determinism() -> Check {
    let flags = RunFlags { seed: 0, ..RunFlags::default() };
    let mut reports = Vec::new();
    for _ in 0..2 {
        let mut texts = Vec::new();
        for (name, inst) in ok(gallery_instances(), "gallery")? {
            let text = ok(serde_json::to_string(&inst), "serialize")?;
            let out = ok(run_instance(&text, &flags), &name)?;
            ensure!(out.exit_code == 0, "{name}: exit code {}", out.exit_code);
            texts.push(ok(serde_json::to_string_pretty(&out.report), "report")?);
        }
        reports.push(texts);
    }
    ensure!(reports[0] == reports[1], "gallery reports differ between runs");
    let bytes: usize = reports[0].iter().map(String::len).sum();
    Ok(format!("{} gallery reports byte-identical ({bytes} bytes)", reports[0].len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 8] = [
        (1, "gallery fidelity", gallery_fidelity),
        (2, "coderivative consistency", mordukhovich),
        (3, "equivalence harnesses", harnesses),
        (4, "Clarke corpus", clarke_suite),
        (5, "calculus soundness", calculus_soundness),
        (6, "strict from outer and moduli", section_eight),
        (7, "kernel properties", kernel_properties),
        (8, "determinism", determinism),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let start = Instant::now();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {id} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    println!("acceptance: {failed} failed, total {:.1}s", start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

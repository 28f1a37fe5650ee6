//! Chain and sum rules for derivative maps, with hypothesis checks.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::geom::{complement, orth_basis, unit_directions, Ball, Polyhedron, Region, Vector, EPS, MAX_EXACT_DIM};
use crate::homog::HomogMap;
use crate::svmap::{Function, SVMap, SemiVerdict, DEFAULT_PROBE_LADDER};

const NET_TOL: f64 = 1e-7;

/// One intermediate point `y` with the derivative maps `x -> y` and `y -> z`.
#[derive(Clone, Debug)]
pub struct ChainLink {
    pub y: Vector,
    pub t_in: HomogMap,
    pub t_out: HomogMap,
}

#[derive(Clone, Debug)]
pub struct ChainInstance {
    pub f: SVMap,
    pub g: SVMap,
    pub xbar: Vector,
    pub zbar: Vector,
    pub net: Vec<ChainLink>,
}

/// One decomposition `y_1 + ... + y_p = ybar` with a map per summand.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub parts: Vec<Vector>,
    pub tmaps: Vec<HomogMap>,
}

#[derive(Clone, Debug)]
pub struct SumInstance {
    pub maps: Vec<SVMap>,
    pub xbar: Vector,
    pub ybar: Vector,
    pub net: Vec<Decomposition>,
    /// Net resolution used by the coverage check.
    pub resolution: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Hypotheses {
    #[serde(with = "crate::num")]
    pub alpha: f64,
    #[serde(with = "crate::num")]
    pub beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semicontinuity: Option<SemiVerdict>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Composed {
    pub map: HomogMap,
    pub hypotheses: Hypotheses,
}

fn hausdorff_or_inf(a: &Region, b: &Region) -> Result<f64> {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => Ok(0.0),
        (false, false) => a.hausdorff(b, None),
        _ => Ok(f64::INFINITY),
    }
}

fn direction_ratio(t: &HomogMap, u: &Vector, basis: &[Vector], h: f64) -> Result<f64> {
    let tu = t.eval(u)?;
    let mut worst: f64 = 0.0;
    for b in basis {
        for s in [h, -h] {
            let v = u + b * s;
            let v = &v / v.norm();
            let d = hausdorff_or_inf(&tu, &t.eval(&v)?)?;
            worst = worst.max(d / (u - &v).norm());
        }
    }
    Ok(worst)
}

/// Lipschitz modulus of a positively homogeneous map at the origin.
///
/// With `T(0) = {0}` this is `|T|+` in one dimension. In higher dimensions
/// the Hausdorff difference quotient between nearby unit directions is added
/// at two angular steps; a quotient that keeps growing as the step shrinks
/// marks a jump and yields `+inf`.
pub fn lip_at_zero(t: &HomogMap) -> Result<f64> {
    if !t.trivial_at_zero()? {
        return Ok(f64::INFINITY);
    }
    let norm = t.outer_norm()?;
    let n = t.dim_in();
    if n == 1 || !norm.is_finite() {
        return Ok(norm);
    }
    let count = if n == 2 { 180 } else { 120 };
    let dirs = unit_directions(n, count);
    let pairs = dirs
        .par_iter()
        .map(|u| {
            let basis = complement(&orth_basis(&[u.clone()], 1e-12), n);
            Ok((direction_ratio(t, u, &basis, 1e-2)?, direction_ratio(t, u, &basis, 1e-4)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let coarse = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let fine = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    if !fine.is_finite() || fine > 2.0 * coarse + 1e-6 {
        return Ok(f64::INFINITY);
    }
    Ok(norm.max(coarse).max(fine))
}

fn require_finite_norm(t: &HomogMap, what: &str) -> Result<f64> {
    let a = t.outer_norm()?;
    if !a.is_finite() {
        return Err(Error::HypothesisFailure(format!("outer norm of {what} is infinite")));
    }
    Ok(a)
}

fn require_outer_link(t: &HomogMap, what: &str) -> Result<f64> {
    if !t.trivial_at_zero()? {
        return Err(Error::HypothesisFailure(format!("{what} does not vanish at 0")));
    }
    let b = lip_at_zero(t)?;
    if !b.is_finite() {
        return Err(Error::HypothesisFailure(format!("{what} is not Lipschitz at 0")));
    }
    Ok(b)
}

/// Outer semicontinuity of `(x, z) -> G^{-1}(z) ∩ F(x)` at `(xbar, zbar)`,
/// probed when both graphs are polyhedral and small enough.
fn auxiliary_semicontinuity(inst: &ChainInstance) -> Result<Option<SemiVerdict>> {
    let (n, m, p) = (inst.f.dim_in(), inst.f.dim_out(), inst.g.dim_out());
    let (Some(fp), Some(gp)) = (inst.f.graph_pieces(), inst.g.graph_pieces()) else {
        return Ok(None);
    };
    if n + m + p > MAX_EXACT_DIM {
        return Ok(None);
    }
    let total = n + p + m;
    let x_slots: Vec<usize> = (0..n).collect();
    let z_slots: Vec<usize> = (n..n + p).collect();
    let y_slots: Vec<usize> = (n + p..total).collect();
    let f_slots: Vec<usize> = x_slots.iter().chain(&y_slots).copied().collect();
    let g_slots: Vec<usize> = y_slots.iter().chain(&z_slots).copied().collect();
    let mut pieces = Vec::new();
    for a in fp {
        for b in gp {
            let mut hs = a.lift_constraints(total, &f_slots);
            hs.extend(b.lift_constraints(total, &g_slots));
            let q = Polyhedron::from_hrep(total, hs)?;
            if !q.is_empty() {
                pieces.push(q);
            }
        }
    }
    let aux = SVMap::poly_graph(n + p, m, pieces)?;
    let at = Vector::from_iterator(n + p, inst.xbar.iter().chain(inst.zbar.iter()).copied());
    let trunc = Ball::centered(m, 10.0)?;
    let report = aux.semicontinuity_report(&at, &trunc, &DEFAULT_PROBE_LADDER)?;
    Ok(Some(report.outer))
}

/// Union over the intermediate net of `t_out ∘ t_in`.
pub fn chain_t(inst: &ChainInstance) -> Result<Composed> {
    let (n, m, p) = (inst.f.dim_in(), inst.f.dim_out(), inst.g.dim_out());
    check_dim(m, inst.g.dim_in())?;
    check_dim(n, inst.xbar.len())?;
    check_dim(p, inst.zbar.len())?;
    if inst.net.is_empty() {
        return Err(Error::HypothesisFailure("intermediate net is empty".into()));
    }
    let mut hyp = Hypotheses::default();
    for link in &inst.net {
        check_dim(m, link.y.len())?;
        if !inst.f.on_graph(&inst.xbar, &link.y, NET_TOL)? {
            return Err(Error::HypothesisFailure(format!("net point {:?} is not a value of F at xbar", link.y.as_slice())));
        }
        if !inst.g.on_graph(&link.y, &inst.zbar, NET_TOL)? {
            return Err(Error::HypothesisFailure(format!("zbar is not a value of G at {:?}", link.y.as_slice())));
        }
        hyp.alpha = hyp.alpha.max(require_finite_norm(&link.t_in, "the inner derivative")?);
        hyp.beta = hyp.beta.max(require_outer_link(&link.t_out, "the outer derivative")?);
    }
    let maps = inst
        .net
        .par_iter()
        .map(|l| HomogMap::compose(&l.t_out, &l.t_in))
        .collect::<Result<Vec<_>>>()?;
    match auxiliary_semicontinuity(inst) {
        Ok(Some(v)) => {
            if !v.holds {
                hyp.warnings.push("intermediate map may fail outer semicontinuity".into());
            }
            hyp.semicontinuity = Some(v);
        }
        Ok(None) => hyp.warnings.push("outer semicontinuity of the intermediate map was not probed".into()),
        Err(e) => hyp.warnings.push(format!("outer semicontinuity probe failed: {e}")),
    }
    Ok(Composed { map: HomogMap::union(&maps)?, hypotheses: hyp })
}

/// `t_g ∘ t_f` for a single-valued inner function.
pub fn chain_single(
    f: Arc<dyn Function>,
    xbar: &Vector,
    t_f: &HomogMap,
    g: &SVMap,
    zbar: &Vector,
    t_g: &HomogMap,
) -> Result<Composed> {
    check_dim(f.dim_in(), xbar.len())?;
    check_dim(f.dim_out(), g.dim_in())?;
    check_dim(g.dim_out(), zbar.len())?;
    let ybar = f.eval(xbar)?;
    if !g.on_graph(&ybar, zbar, NET_TOL)? {
        return Err(Error::HypothesisFailure("zbar is not a value of G at f(xbar)".into()));
    }
    let alpha = require_finite_norm(t_f, "the inner derivative")?;
    let beta = require_outer_link(t_g, "the outer derivative")?;
    Ok(Composed {
        map: HomogMap::compose(t_g, t_f)?,
        hypotheses: Hypotheses { alpha, beta, ..Hypotheses::default() },
    })
}

fn intersect_regions(a: &Region, b: &Region) -> Result<Region> {
    let mut pieces = Vec::new();
    for p in &a.pieces {
        for q in &b.pieces {
            let r = p.intersect(q)?;
            if !r.is_empty() {
                pieces.push(r);
            }
        }
    }
    Region::new(a.dim, pieces)
}

/// For two summands, checks that the net's first components cover
/// `S_1(xbar) ∩ (ybar - S_2(xbar))` to the instance resolution.
fn decomposition_coverage(inst: &SumInstance) -> Result<Option<f64>> {
    if inst.maps.len() != 2 {
        return Ok(None);
    }
    let s1 = inst.maps[0].eval(&inst.xbar)?;
    let s2 = inst.maps[1].eval(&inst.xbar)?;
    let set = intersect_regions(&s1, &s2.negated().translate(&inst.ybar)?)?;
    if set.is_empty() {
        return Err(Error::HypothesisFailure("ybar admits no decomposition".into()));
    }
    if !set.is_bounded() {
        return Err(Error::HypothesisFailure("decomposition set is unbounded".into()));
    }
    let mut worst: f64 = 0.0;
    for y in set.sample_points(4)? {
        let d = inst.net.iter().map(|dec| (&dec.parts[0] - &y).norm()).fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    Ok(Some(worst))
}

/// Union over the decomposition net of the sums of the attached maps.
pub fn sum_t(inst: &SumInstance) -> Result<Composed> {
    let first = inst.maps.first().ok_or_else(|| Error::Invalid("sum of no maps".into()))?;
    let (n, m) = (first.dim_in(), first.dim_out());
    for s in &inst.maps {
        check_dim(n, s.dim_in())?;
        check_dim(m, s.dim_out())?;
    }
    check_dim(n, inst.xbar.len())?;
    check_dim(m, inst.ybar.len())?;
    if inst.net.is_empty() {
        return Err(Error::HypothesisFailure("decomposition net is empty".into()));
    }
    let mut hyp = Hypotheses::default();
    for dec in &inst.net {
        if dec.parts.len() != inst.maps.len() || dec.tmaps.len() != inst.maps.len() {
            return Err(Error::Invalid("each decomposition needs one point and one map per summand".into()));
        }
        let total = dec.parts.iter().fold(Vector::zeros(m), |acc, y| acc + y);
        if (&total - &inst.ybar).norm() > NET_TOL {
            return Err(Error::HypothesisFailure(format!("decomposition sums to {:?}", total.as_slice())));
        }
        for (s, y) in inst.maps.iter().zip(&dec.parts) {
            if !s.on_graph(&inst.xbar, y, NET_TOL)? {
                return Err(Error::HypothesisFailure(format!("{:?} is not a value at xbar", y.as_slice())));
            }
        }
        for t in &dec.tmaps {
            hyp.alpha = hyp.alpha.max(require_finite_norm(t, "a summand derivative")?);
        }
    }
    if let Some(gap) = decomposition_coverage(inst)? {
        if gap > inst.resolution + EPS {
            return Err(Error::CoverageGap(format!("decomposition net misses points at distance {gap:.3e}")));
        }
    } else {
        hyp.warnings.push("decomposition coverage is only checked for two summands".into());
    }
    let maps = inst
        .net
        .par_iter()
        .map(|d| HomogMap::sum(&d.tmaps))
        .collect::<Result<Vec<_>>>()?;
    Ok(Composed { map: HomogMap::union(&maps)?, hypotheses: hyp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::Affine;
    use crate::geom::{vector, Halfspace};
    use crate::homog::Matrix;

    fn m1(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn outer_bound(t: &HomogMap, w: f64) -> f64 {
        t.eval(&vector(&[w])).unwrap().pieces.iter().map(|p| p.interval_bounds().1).fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn linear_chain_is_product() {
        let a = Matrix::from_row_slice(2, 1, &[1.0, -2.0]);
        let b = Matrix::from_row_slice(1, 2, &[3.0, 0.5]);
        let inst = ChainInstance {
            f: SVMap::linear(&a).unwrap(),
            g: SVMap::linear(&b).unwrap(),
            xbar: vector(&[1.0]),
            zbar: vector(&[2.0]),
            net: vec![ChainLink {
                y: vector(&[1.0, -2.0]),
                t_in: HomogMap::linear(a.clone()),
                t_out: HomogMap::linear(b.clone()),
            }],
        };
        let c = chain_t(&inst).unwrap();
        let v = c.map.eval(&vector(&[2.0])).unwrap();
        assert!(v.contains(&vector(&[4.0]), 1e-9));
        assert!((outer_bound(&c.map, 2.0) - 4.0).abs() < 1e-9);
        assert!((c.hypotheses.beta - b.norm()).abs() < 1e-6);
        let single = chain_single(
            Arc::new(Affine::new(a.clone(), vector(&[0.0, 0.0])).unwrap()),
            &vector(&[1.0]),
            &HomogMap::linear(a),
            &SVMap::linear(&b).unwrap(),
            &vector(&[2.0]),
            &HomogMap::linear(b),
        )
        .unwrap();
        assert!((outer_bound(&single.map, 1.0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn ball_chain_multiplies_moduli() {
        let inst = ChainInstance {
            f: SVMap::linear(&m1(2.0)).unwrap(),
            g: SVMap::linear(&m1(3.0)).unwrap(),
            xbar: vector(&[0.0]),
            zbar: vector(&[0.0]),
            net: vec![ChainLink {
                y: vector(&[0.0]),
                t_in: HomogMap::ball(1, 1, 2.0).unwrap(),
                t_out: HomogMap::ball(1, 1, 3.0).unwrap(),
            }],
        };
        let c = chain_t(&inst).unwrap();
        for w in [-1.5, 0.5, 2.0] {
            let got = c.map.eval(&vector(&[w])).unwrap();
            let want = HomogMap::ball(1, 1, 6.0).unwrap().eval(&vector(&[w])).unwrap();
            assert!(got.hausdorff(&want, None).unwrap() < 1e-9);
        }
        assert!(c.hypotheses.semicontinuity.as_ref().unwrap().holds);
    }

    #[test]
    fn chain_rejects_outer_map_not_vanishing_at_zero() {
        // T(w) = R_+ for every w
        let g = Polyhedron::from_hrep(2, vec![Halfspace::new(vector(&[0.0, -1.0]), 0.0).unwrap()]).unwrap();
        let bad = HomogMap::cone_graph(1, 1, vec![g]).unwrap();
        let inst = ChainInstance {
            f: SVMap::linear(&m1(1.0)).unwrap(),
            g: SVMap::linear(&m1(1.0)).unwrap(),
            xbar: vector(&[0.0]),
            zbar: vector(&[0.0]),
            net: vec![ChainLink { y: vector(&[0.0]), t_in: HomogMap::identity(1), t_out: bad.clone() }],
        };
        assert!(matches!(chain_t(&inst), Err(Error::HypothesisFailure(_))));
        let inst = ChainInstance {
            net: vec![ChainLink { y: vector(&[0.0]), t_in: bad, t_out: HomogMap::identity(1) }],
            ..inst
        };
        assert!(matches!(chain_t(&inst), Err(Error::HypothesisFailure(_))));
    }

    #[test]
    fn lipschitz_at_zero_detects_jumps() {
        let t = HomogMap::ball(2, 1, 1.5).unwrap();
        assert!((lip_at_zero(&t).unwrap() - 1.5).abs() < 1e-6);
        // T(w) = {0} on w_1 <= 0, [0, |w|] elsewhere is discontinuous across w_1 = 0.
        let p = Polyhedron::from_hrep(
            3,
            vec![
                Halfspace::new(vector(&[-1.0, 0.0, 0.0]), 0.0).unwrap(),
                Halfspace::new(vector(&[0.0, 0.0, -1.0]), 0.0).unwrap(),
                Halfspace::new(vector(&[-1.0, 0.0, 1.0]), 0.0).unwrap(),
            ],
        )
        .unwrap();
        let q = Polyhedron::from_hrep(
            3,
            vec![
                Halfspace::new(vector(&[1.0, 0.0, 0.0]), 0.0).unwrap(),
                Halfspace::new(vector(&[0.0, 0.0, 1.0]), 0.0).unwrap(),
                Halfspace::new(vector(&[0.0, 0.0, -1.0]), 0.0).unwrap(),
            ],
        )
        .unwrap();
        let smooth = HomogMap::cone_graph(2, 1, vec![p.clone(), q.clone()]).unwrap();
        assert!(lip_at_zero(&smooth).unwrap().is_finite());
        let jump = Polyhedron::from_hrep(
            3,
            vec![
                Halfspace::new(vector(&[-1.0, 0.0, 0.0]), 0.0).unwrap(),
                Halfspace::new(vector(&[0.0, 0.0, -1.0]), 0.0).unwrap(),
                Halfspace::new(vector(&[0.0, -1.0, 1.0]), 0.0).unwrap(),
                Halfspace::new(vector(&[0.0, 1.0, 1.0]), 0.0).unwrap(),
            ],
        )
        .unwrap();
        let broken = HomogMap::cone_graph(2, 1, vec![jump, q]).unwrap();
        assert_eq!(lip_at_zero(&broken).unwrap(), f64::INFINITY);
    }

    #[test]
    fn sum_rules() {
        let inst = SumInstance {
            maps: vec![SVMap::linear(&m1(2.0)).unwrap(), SVMap::linear(&m1(-0.5)).unwrap()],
            xbar: vector(&[1.0]),
            ybar: vector(&[1.5]),
            net: vec![Decomposition {
                parts: vec![vector(&[2.0]), vector(&[-0.5])],
                tmaps: vec![HomogMap::linear(m1(2.0)), HomogMap::linear(m1(-0.5))],
            }],
            resolution: 1e-6,
        };
        let c = sum_t(&inst).unwrap();
        assert!((outer_bound(&c.map, 2.0) - 3.0).abs() < 1e-9);
        let balls = SumInstance {
            net: vec![Decomposition {
                parts: vec![vector(&[2.0]), vector(&[-0.5])],
                tmaps: vec![HomogMap::ball(1, 1, 1.0).unwrap(), HomogMap::ball(1, 1, 2.5).unwrap()],
            }],
            ..inst.clone()
        };
        assert!((outer_bound(&sum_t(&balls).unwrap().map, -2.0) - 7.0).abs() < 1e-9);
        let wrong = SumInstance {
            net: vec![Decomposition {
                parts: vec![vector(&[1.0]), vector(&[0.5])],
                tmaps: vec![HomogMap::zero(1, 1), HomogMap::zero(1, 1)],
            }],
            ..inst
        };
        assert!(matches!(sum_t(&wrong), Err(Error::HypothesisFailure(_))));
    }

    #[test]
    fn interval_sum_needs_a_covering_net() {
        // S_1 = S_2 = [0, 1] everywhere, ybar = 1
        let slab = Polyhedron::from_hrep(
            2,
            vec![
                Halfspace::new(vector(&[0.0, -1.0]), 0.0).unwrap(),
                Halfspace::new(vector(&[0.0, 1.0]), 1.0).unwrap(),
            ],
        )
        .unwrap();
        let s = SVMap::poly_graph(1, 1, vec![slab]).unwrap();
        let net = |k: usize| {
            (0..=k)
                .map(|i| {
                    let t = i as f64 / k as f64;
                    Decomposition {
                        parts: vec![vector(&[t]), vector(&[1.0 - t])],
                        tmaps: vec![HomogMap::zero(1, 1), HomogMap::zero(1, 1)],
                    }
                })
                .collect::<Vec<_>>()
        };
        let inst = SumInstance {
            maps: vec![s.clone(), s],
            xbar: vector(&[0.0]),
            ybar: vector(&[1.0]),
            net: net(2),
            resolution: 0.1,
        };
        assert!(matches!(sum_t(&inst), Err(Error::CoverageGap(_))));
        let fine = SumInstance { net: net(10), ..inst };
        assert_eq!(outer_bound(&sum_t(&fine).unwrap().map, 1.0), 0.0);
    }
}

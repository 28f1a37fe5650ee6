use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{combine, decide, CertConfig, Certificate, Notion, RunInfo, RungSamples, Verdict};
use crate::error::{check_dim, Error, Result};
use crate::geom::{Polyhedron, Region, Vector};
use crate::homog::HomogMap;
use crate::svmap::{DomainBox, Function, SVMap};

/// One checked pair: `x` is the moving point, `x2` the reference point and
/// `y` the sampled point with the largest distance to the right-hand side.
#[derive(Clone, Debug)]
pub(crate) struct Sample {
    pub x: Vector,
    pub x2: Vector,
    pub y: Vector,
    pub excess: f64,
    pub scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Layout {
    /// `S(x) ∩ B ⊆ S(xbar) + T(x - xbar)`.
    Outer,
    /// `S(xbar) ∩ B ⊆ S(x) - T(x - xbar)`.
    Inner,
    /// `S(x) ∩ B ⊆ S(x') + T(x - x')` for all pairs.
    Strict,
}

const SAMPLES_PER_EDGE: usize = 2;
const CLOSE_STEPS: [f64; 2] = [1e-3, 1e-5];
const CLOSE_BASES: usize = 32;

/// Odd lattice on the box `center + [-r, r]^n` (center first) followed by
/// `2 n k` seeded uniform points, where `k` is the per-axis count.
pub(crate) fn grid_points(center: &Vector, r: f64, per_axis: usize, max_points: usize, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    let n = center.len();
    let mut k = per_axis.max(3) | 1;
    if n >= 2 {
        while k > 3 && k.pow(n as u32) > max_points.max(9) {
            k -= 2;
        }
    }
    let offsets: Vec<f64> = (0..k).map(|i| r * (2.0 * i as f64 / (k - 1) as f64 - 1.0)).collect();
    let mid = k / 2;
    let mut out = vec![center.clone()];
    let total = k.pow(n as u32);
    for idx in 0..total {
        let mut rem = idx;
        let mut p = center.clone();
        let mut at_center = true;
        for d in 0..n {
            let i = rem % k;
            rem /= k;
            at_center &= i == mid;
            p[d] += offsets[i];
        }
        if !at_center {
            out.push(p);
        }
    }
    for _ in 0..2 * n * k {
        out.push(Vector::from_iterator(n, center.iter().map(|c| c + rng.gen_range(-r..=r))));
    }
    out
}

fn as_point(r: &Region) -> Option<&Vector> {
    match r.pieces.as_slice() {
        [p] if p.rays().is_empty() && p.vertices().len() == 1 => Some(&p.vertices()[0]),
        _ => None,
    }
}

/// Largest distance from `points` to `base + U(w)`, where each part of `U`
/// contributes its core shifted by `base` and shrunk by its radius.
fn excess(points: &[Vector], base: &Region, u: &HomogMap, w: &Vector) -> Result<(f64, usize)> {
    if points.is_empty() {
        return Ok((0.0, 0));
    }
    if base.is_empty() {
        return Ok((f64::INFINITY, 0));
    }
    let parts = u.eval_parts(w)?;
    let base_pt = as_point(base);
    let mut sums: Vec<(Option<Region>, Option<Vector>, &Region, f64)> = Vec::with_capacity(parts.len());
    for (core, rho) in &parts {
        if core.is_empty() {
            continue;
        }
        if let Some(b) = base_pt {
            sums.push((None, Some(-b), core, *rho));
        } else if let Some(c) = as_point(core) {
            sums.push((None, Some(-c), base, *rho));
        } else {
            sums.push((Some(base.minkowski_sum(core)?), None, base, *rho));
        }
    }
    if sums.is_empty() {
        return Ok((f64::INFINITY, 0));
    }
    let mut worst = (f64::NEG_INFINITY, 0);
    for (i, p) in points.iter().enumerate() {
        let mut best = f64::INFINITY;
        for (sum, shift, target, rho) in &sums {
            let d = match (sum, shift) {
                (Some(s), _) => s.dist(p)?,
                (None, Some(t)) => target.dist(&(p + t))?,
                _ => unreachable!(),
            };
            best = best.min((d - rho).max(0.0));
        }
        if best > worst.0 {
            worst = (best, i);
        }
    }
    Ok(worst)
}

fn clip(v: &Region, b: &Polyhedron) -> Result<Region> {
    let pieces = v.pieces.iter().map(|p| p.intersect(b)).collect::<Result<Vec<_>>>()?;
    Region::new(v.dim, pieces)
}

fn lhs_points(v: &Region, b: &Polyhedron) -> Result<Vec<Vector>> {
    clip(v, b)?.sample_points(SAMPLES_PER_EDGE)
}

struct Problem<'a> {
    s: &'a SVMap,
    xbar: &'a Vector,
    ybar: Option<&'a Vector>,
    t: &'a HomogMap,
    layout: Layout,
    cfg: &'a CertConfig,
}

impl Problem<'_> {
    fn check(&self) -> Result<()> {
        self.cfg.validate()?;
        check_dim(self.s.dim_in(), self.xbar.len())?;
        check_dim(self.s.dim_in(), self.t.dim_in())?;
        check_dim(self.s.dim_out(), self.t.dim_out())?;
        if !self.s.in_domain(self.xbar) {
            return Err(Error::OutsideDomain);
        }
        if let Some(y) = self.ybar {
            check_dim(self.s.dim_out(), y.len())?;
            if !self.s.on_graph(self.xbar, y, 1e-7)? {
                return Err(Error::NotOnGraph);
            }
        }
        if let Some(c) = &self.cfg.truncation.center {
            check_dim(self.s.dim_out(), c.len())?;
        }
        Ok(())
    }

    fn truncation_box(&self) -> Result<Polyhedron> {
        let m = self.s.dim_out();
        let center = match &self.cfg.truncation.center {
            Some(c) => Vector::from_column_slice(c),
            None => {
                let v = self.s.eval(self.xbar)?;
                if v.is_empty() {
                    Vector::zeros(m)
                } else {
                    v.project(&Vector::zeros(m))?
                }
            }
        };
        Polyhedron::cube(&center, self.cfg.truncation.radius)
    }

    fn lhs_box(&self, rung: usize, trunc: &Polyhedron) -> Result<Polyhedron> {
        match self.ybar {
            Some(y) => Polyhedron::cube(y, self.cfg.window(rung)),
            None => Ok(trunc.clone()),
        }
    }

    fn rng(&self, rung: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(rung as u64 + 1)))
    }

    /// Points of one rung and the ordered index pairs `(moving, reference)`.
    fn rung_pairs(&self, rung: usize) -> (Vec<Vector>, Vec<(usize, usize)>) {
        let r = self.cfg.radius_ladder[rung];
        let n = self.xbar.len();
        let mut rng = self.rng(rung);
        let grid: Vec<Vector> = grid_points(self.xbar, r, self.cfg.grid_per_axis, self.cfg.max_points, &mut rng)
            .into_iter()
            .filter(|x| self.s.in_domain(x))
            .collect();
        let mut points = grid.clone();
        let mut pairs = Vec::new();
        let axes: Vec<Vector> = (0..n)
            .flat_map(|i| {
                [1.0, -1.0].into_iter().map(move |sgn| {
                    let mut e = Vector::zeros(n);
                    e[i] = sgn;
                    e
                })
            })
            .collect();
        let push_close = |points: &mut Vec<Vector>, pairs: &mut Vec<(usize, usize)>, b: usize, both: bool| {
            for step in CLOSE_STEPS {
                for e in &axes {
                    let p = &points[b] + e * (r * step);
                    if !self.s.in_domain(&p) {
                        continue;
                    }
                    points.push(p);
                    let j = points.len() - 1;
                    pairs.push((j, b));
                    if both {
                        pairs.push((b, j));
                    }
                }
            }
        };
        match self.layout {
            Layout::Outer | Layout::Inner => {
                pairs.extend((1..grid.len()).map(|i| (i, 0)));
                push_close(&mut points, &mut pairs, 0, false);
            }
            Layout::Strict => {
                let g = grid.len();
                let mut with_center = Vec::new();
                let mut others = Vec::new();
                for i in 0..g {
                    for j in 0..g {
                        if i == j {
                            continue;
                        }
                        if i == 0 || j == 0 {
                            with_center.push((i, j));
                        } else {
                            others.push((i, j));
                        }
                    }
                }
                let room = self.cfg.pair_budget.saturating_sub(with_center.len());
                if others.len() > room {
                    others.shuffle(&mut rng);
                    others.truncate(room);
                    others.sort_unstable();
                }
                pairs.extend(with_center);
                pairs.extend(others);
                let nb = CLOSE_BASES.min(g);
                for t in 0..nb {
                    let b = t * g / nb;
                    push_close(&mut points, &mut pairs, b, true);
                }
            }
        }
        (points, pairs)
    }

    fn run(&self) -> Result<Vec<RungSamples>> {
        self.check()?;
        let trunc = self.truncation_box()?;
        let reflected = self.t.reflect();
        let base_value = self.s.eval(self.xbar)?;
        let mut out = Vec::with_capacity(self.cfg.radius_ladder.len());
        for (k, &r) in self.cfg.radius_ladder.iter().enumerate() {
            let lhs_box = self.lhs_box(k, &trunc)?;
            let (points, pairs) = self.rung_pairs(k);
            let values: Vec<Region> = points.par_iter().map(|x| self.s.eval(x)).collect::<Result<_>>()?;
            let samples: Vec<Sample> = match self.layout {
                Layout::Inner => {
                    let lhs = lhs_points(&base_value, &lhs_box)?;
                    pairs
                        .par_iter()
                        .filter(|(i, j)| points[*i] != points[*j])
                        .map(|&(i, j)| {
                            let w = &points[j] - &points[i];
                            let (e, at) = excess(&lhs, &values[i], &reflected, &w)?;
                            Ok(Sample {
                                x: points[i].clone(),
                                x2: points[j].clone(),
                                y: lhs.get(at).cloned().unwrap_or_else(|| Vector::zeros(self.s.dim_out())),
                                excess: e,
                                scale: w.norm(),
                            })
                        })
                        .collect::<Result<_>>()?
                }
                Layout::Outer | Layout::Strict => {
                    let lhs: Vec<Vec<Vector>> =
                        values.par_iter().map(|v| lhs_points(v, &lhs_box)).collect::<Result<_>>()?;
                    pairs
                        .par_iter()
                        .filter(|(i, j)| points[*i] != points[*j])
                        .map(|&(i, j)| {
                            let w = &points[i] - &points[j];
                            let (e, at) = excess(&lhs[i], &values[j], self.t, &w)?;
                            Ok(Sample {
                                x: points[i].clone(),
                                x2: points[j].clone(),
                                y: lhs[i].get(at).cloned().unwrap_or_else(|| Vector::zeros(self.s.dim_out())),
                                excess: e,
                                scale: w.norm(),
                            })
                        })
                        .collect::<Result<_>>()?
                }
            };
            out.push(RungSamples { radius: r, window: self.ybar.map(|_| self.cfg.window(k)), samples });
        }
        Ok(out)
    }

    fn certify(&self, notion: Notion) -> Result<Certificate> {
        let rungs = self.run()?;
        Ok(decide(
            RunInfo {
                notion,
                base_point: self.xbar,
                base_value: self.ybar,
                resolution: self.s.resolution(),
                approximate_t: self.t.is_approximate(),
                cfg: self.cfg,
            },
            rungs,
        ))
    }
}

pub(crate) fn run_layout(
    s: &SVMap,
    xbar: &Vector,
    ybar: Option<&Vector>,
    t: &HomogMap,
    layout: Layout,
    cfg: &CertConfig,
) -> Result<Vec<RungSamples>> {
    Problem { s, xbar, ybar, t, layout, cfg }.run()
}

fn certify_layouts(
    s: &SVMap,
    xbar: &Vector,
    ybar: Option<&Vector>,
    t: &HomogMap,
    notion: Notion,
    cfg: &CertConfig,
) -> Result<Certificate> {
    let one = |layout: Layout, n: Notion| Problem { s, xbar, ybar, t, layout, cfg }.certify(n);
    use Notion::*;
    match notion {
        OuterT | PseudoOuterT | SingleT | Calm => one(Layout::Outer, notion),
        InnerT | PseudoInnerT => one(Layout::Inner, notion),
        StrictT | PseudoStrictT | SingleStrictT | Aubin => one(Layout::Strict, notion),
        T | PseudoT => {
            let (o, i) = if notion == T { (OuterT, InnerT) } else { (PseudoOuterT, PseudoInnerT) };
            Ok(combine(notion, one(Layout::Outer, o)?, one(Layout::Inner, i)?))
        }
        other => Err(Error::Invalid(format!("{other:?} is not certified by this routine"))),
    }
}

/// Certifies a non-pseudo notion of `T` at `xbar`.
pub fn certify_setvalued(s: &SVMap, xbar: &Vector, t: &HomogMap, notion: Notion, cfg: &CertConfig) -> Result<Certificate> {
    if notion.is_pseudo() || matches!(notion, Notion::Calm) {
        return Err(Error::Invalid(format!("{notion:?} needs a base value")));
    }
    certify_layouts(s, xbar, None, t, notion, cfg)
}

/// Certifies a pseudo notion of `T` at `(xbar, ybar)`.
pub fn certify_pseudo(
    s: &SVMap,
    xbar: &Vector,
    ybar: &Vector,
    t: &HomogMap,
    notion: Notion,
    cfg: &CertConfig,
) -> Result<Certificate> {
    if !notion.is_pseudo() && notion != Notion::Calm {
        return Err(Error::Invalid(format!("{notion:?} is not a pseudo notion")));
    }
    certify_layouts(s, xbar, Some(ybar), t, notion, cfg)
}

/// Calmness or the Aubin property with modulus `kappa` at `(xbar, ybar)`.
pub fn certify_ball(s: &SVMap, xbar: &Vector, ybar: &Vector, kappa: f64, notion: Notion, cfg: &CertConfig) -> Result<Certificate> {
    if !matches!(notion, Notion::Calm | Notion::Aubin) {
        return Err(Error::Invalid(format!("{notion:?} is not a ball notion")));
    }
    let t = HomogMap::ball(s.dim_in(), s.dim_out(), kappa)?;
    certify_layouts(s, xbar, Some(ybar), &t, notion, cfg)
}

/// Single-valued notions for `f` near `xbar`.
pub fn certify_single(f: Arc<dyn Function>, xbar: &Vector, t: &HomogMap, notion: Notion, cfg: &CertConfig) -> Result<Certificate> {
    let notion = match notion {
        Notion::SingleT | Notion::OuterT | Notion::T => Notion::SingleT,
        Notion::SingleStrictT | Notion::StrictT => Notion::SingleStrictT,
        other => return Err(Error::Invalid(format!("{other:?} does not apply to functions"))),
    };
    check_dim(f.dim_in(), xbar.len())?;
    let half = 2.0 * cfg.radius_ladder.first().copied().unwrap_or(0.0) + 1.0;
    let domain = DomainBox {
        lo: xbar.iter().map(|v| v - half).collect(),
        hi: xbar.iter().map(|v| v + half).collect(),
    };
    let s = SVMap::from_function(f, domain);
    certify_layouts(&s, xbar, None, t, notion, cfg)
}

/// Aggregates pseudo certificates over a net of `S(xbar) ∩ truncation` into
/// the corresponding non-pseudo notion, then confirms with a direct run.
pub fn globalize(s: &SVMap, xbar: &Vector, t: &HomogMap, notion: Notion, cfg: &CertConfig) -> Result<Certificate> {
    let target = notion
        .globalized()
        .ok_or_else(|| Error::Invalid(format!("{notion:?} has no non-pseudo counterpart")))?;
    let p = Problem { s, xbar, ybar: None, t, layout: Layout::Outer, cfg };
    p.check()?;
    let trunc = p.truncation_box()?;
    let base = clip(&s.eval(xbar)?, &trunc)?;
    if base.is_empty() {
        return Err(Error::CoverageGap("the truncated base value is empty".into()));
    }
    let net = base.sample_points(1)?;
    let fine = base.sample_points(4)?;
    let certs = net
        .iter()
        .map(|y| certify_pseudo(s, xbar, y, t, notion, cfg))
        .collect::<Result<Vec<_>>>()?;
    let reach = cfg.window_ladder[0];
    let verified: Vec<&Vector> = net.iter().zip(&certs).filter(|(_, c)| c.verified()).map(|(y, _)| y).collect();
    let covered = fine.iter().all(|y| verified.iter().any(|v| (y - *v).norm() <= reach));
    let any_refuted = certs.iter().any(|c| c.refuted());
    if !covered && !any_refuted {
        return Err(Error::CoverageGap(format!(
            "{} of {} net points verified; windows of half-width {reach} do not cover the base value",
            verified.len(),
            net.len()
        )));
    }
    let mut direct = certify_setvalued(s, xbar, t, target, cfg)?;
    if covered && !direct.verified() {
        direct.notes.push("pseudo certificates cover the base value but the direct run did not verify".into());
        direct.verdict = Verdict::Inconclusive;
        direct.witness = None;
    } else if !covered && direct.verified() {
        direct.notes.push("a pseudo certificate was refuted but the direct run verified".into());
        direct.verdict = Verdict::Inconclusive;
    }
    direct.notes.push(format!("aggregated {} pseudo certificates", certs.len()));
    direct.components = certs;
    Ok(direct)
}

/// Recomputes the violation `excess - delta |x - x'|` at a certificate's
/// witness pair.
pub fn recheck_witness(s: &SVMap, t: &HomogMap, cert: &Certificate) -> Result<f64> {
    let (cert, w) = match &cert.witness {
        Some(w) if cert.components.is_empty() => (cert, w),
        _ => {
            let c = cert
                .components
                .iter()
                .find(|c| c.witness.is_some())
                .ok_or_else(|| Error::Invalid("certificate has no witness".into()))?;
            (c, c.witness.as_ref().unwrap())
        }
    };
    let layout = match cert.notion {
        Notion::InnerT | Notion::PseudoInnerT => Layout::Inner,
        Notion::StrictT | Notion::PseudoStrictT | Notion::SingleStrictT | Notion::Aubin => Layout::Strict,
        _ => Layout::Outer,
    };
    let t = match cert.notion {
        Notion::Calm | Notion::Aubin => {
            return Err(Error::Invalid("recheck ball notions through certify_ball".into()));
        }
        _ => t,
    };
    let xbar = Vector::from_column_slice(&cert.base_point);
    let ybar = cert.base_value.as_ref().map(|y| Vector::from_column_slice(y));
    let cfg = &cert.config;
    let p = Problem { s, xbar: &xbar, ybar: ybar.as_ref(), t, layout, cfg };
    let rung = cfg
        .radius_ladder
        .iter()
        .position(|r| (r - w.radius).abs() <= 1e-15 * r.max(1.0))
        .unwrap_or(cfg.radius_ladder.len() - 1);
    let lhs_box = p.lhs_box(rung, &p.truncation_box()?)?;
    let x = Vector::from_column_slice(&w.x);
    let x2 = Vector::from_column_slice(&w.x_prime);
    let (e, scale) = match layout {
        Layout::Inner => {
            let lhs = lhs_points(&s.eval(&x2)?, &lhs_box)?;
            (excess(&lhs, &s.eval(&x)?, &t.reflect(), &(&x2 - &x))?.0, (&x - &x2).norm())
        }
        _ => {
            let lhs = lhs_points(&s.eval(&x)?, &lhs_box)?;
            (excess(&lhs, &s.eval(&x2)?, t, &(&x - &x2))?.0, (&x - &x2).norm())
        }
    };
    Ok(e - w.delta * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::function_by_name;
    use crate::geom::vector;
    use crate::homog::Matrix;

    #[test]
    fn grid_starts_at_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = grid_points(&vector(&[1.0, 2.0]), 0.1, 21, 121, &mut rng);
        assert_eq!(g[0], vector(&[1.0, 2.0]));
        assert!(g.iter().all(|p| (p - vector(&[1.0, 2.0])).amax() <= 0.1 + 1e-12));
        assert_eq!(g.len(), 121 + 2 * 2 * 11);
    }

    #[test]
    fn abs_is_strictly_differentiable_by_the_unit_ball() {
        let f = function_by_name("abs", &serde_json::Value::Null).unwrap();
        let t = HomogMap::ball(1, 1, 1.0).unwrap();
        let c = certify_single(f, &vector(&[0.0]), &t, Notion::SingleStrictT, &CertConfig::default()).unwrap();
        assert!(c.verified(), "{c:?}");
    }

    #[test]
    fn oscillating_square_is_differentiable_but_not_strictly() {
        let f = function_by_name("x2_sin", &serde_json::Value::Null).unwrap();
        let t = HomogMap::zero(1, 1);
        let cfg = CertConfig::default();
        let c = certify_single(f.clone(), &vector(&[0.0]), &t, Notion::SingleT, &cfg).unwrap();
        assert!(c.verified(), "{:?}", c.rungs);
        let c = certify_single(f.clone(), &vector(&[0.0]), &t, Notion::SingleStrictT, &cfg).unwrap();
        assert!(c.refuted());
        let s = SVMap::from_function(f, DomainBox::cube(1, 2.0));
        assert!(recheck_witness(&s, &t, &c).unwrap() > 0.0);
    }

    #[test]
    fn wrong_slope_is_refuted_with_witness() {
        let s = SVMap::linear(&Matrix::from_element(1, 1, 2.0)).unwrap();
        let t = HomogMap::linear(Matrix::from_element(1, 1, 1.0));
        let c = certify_setvalued(&s, &vector(&[0.0]), &t, Notion::T, &CertConfig::default()).unwrap();
        assert!(c.refuted());
        assert_eq!(c.components.len(), 2);
        assert!(recheck_witness(&s, &t, &c).unwrap() > 0.0);
        let good = HomogMap::linear(Matrix::from_element(1, 1, 2.0));
        let c = certify_setvalued(&s, &vector(&[0.0]), &good, Notion::StrictT, &CertConfig::default()).unwrap();
        assert!(c.verified());
    }
}

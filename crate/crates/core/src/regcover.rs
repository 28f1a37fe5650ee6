//! Metric regularity, open covering and metric subregularity driven by a
//! positively homogeneous map `t: Y ⇉ X`, plus harnesses that compare them
//! with differentiability of the inverse map.
//!
//! Sign conventions: `certify_mr` and `certify_msr` test regularity with
//! respect to `w -> t(-w)`, and `certify_oc` tests covering with respect to
//! `w -> -t(-w)`. With these conventions all three formulations are
//! equivalent to pseudo (strict or outer) `t`-differentiability of `S^{-1}`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::certify::engine::grid_points;
use crate::certify::{certify_pseudo, decide, CertConfig, Certificate, Notion, RunInfo, RungSamples, Sample};
use crate::error::{check_dim, Error, Result};
use crate::geom::{unit_directions, Halfspace, Polyhedron, Region, Vector, EPS};
use crate::homog::HomogMap;
use crate::svmap::{GraphPoint, SVMap};

#[derive(Clone, Debug)]
pub struct RegInstance {
    pub s: SVMap,
    pub point: GraphPoint,
    /// Map `Y ⇉ X`.
    pub t: HomogMap,
    pub cfg: CertConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Form {
    Regularity,
    Covering,
    Subregularity,
}

impl Form {
    fn notion(self) -> Notion {
        match self {
            Form::Regularity => Notion::MetricRegularity,
            Form::Covering => Notion::OpenCovering,
            Form::Subregularity => Notion::MetricSubregularity,
        }
    }
    fn tag(self) -> u64 {
        match self {
            Form::Regularity => 0x51,
            Form::Covering => 0x52,
            Form::Subregularity => 0x53,
        }
    }
}

impl RegInstance {
    fn check(&self) -> Result<SVMap> {
        self.cfg.validate()?;
        let (n, m) = (self.s.dim_in(), self.s.dim_out());
        check_dim(m, self.t.dim_in())?;
        check_dim(n, self.t.dim_out())?;
        check_dim(n, self.point.x.len())?;
        check_dim(m, self.point.y.len())?;
        if !self.s.on_graph(&self.point.x, &self.point.y, 1e-7)? {
            return Err(Error::NotOnGraph);
        }
        self.s.invert()
    }
}

/// `min` over parts of `dist(p, base + core) - rho`, clipped at zero.
fn dist_to_sum(p: &Vector, base: &Region, parts: &[(Region, f64)]) -> Result<f64> {
    if base.is_empty() {
        return Ok(f64::INFINITY);
    }
    let mut best = f64::INFINITY;
    for (core, rho) in parts {
        if core.is_empty() {
            continue;
        }
        let d = base.minkowski_sum(core)?.dist(p)?;
        best = best.min((d - rho).max(0.0));
    }
    Ok(best)
}

/// `min` over parts of the set distance between `p + core` and `target`,
/// shrunk by the part radius.
fn set_gap(p: &Vector, parts: &[(Region, f64)], target: &Region) -> Result<f64> {
    if target.is_empty() {
        return Ok(f64::INFINITY);
    }
    let origin = Vector::zeros(p.len());
    let mut best = f64::INFINITY;
    for (core, rho) in parts {
        if core.is_empty() {
            continue;
        }
        let moved = core.translate(p)?;
        let d = moved.minkowski_sum(&target.negated())?.dist(&origin)?;
        best = best.min((d - rho).max(0.0));
    }
    Ok(best)
}

fn clip_samples(v: &Region, b: &Polyhedron) -> Result<Vec<Vector>> {
    let pieces = v.pieces.iter().map(|p| p.intersect(b)).collect::<Result<Vec<_>>>()?;
    Region::new(v.dim, pieces)?.sample_points(2)
}

struct Run<'a> {
    inst: &'a RegInstance,
    sinv: SVMap,
    form: Form,
    /// Draw `y'` from the whole truncation box instead of the `r`-window.
    unrestricted: bool,
}

impl Run<'_> {
    fn truncation(&self) -> Result<Polyhedron> {
        let c = match &self.inst.cfg.truncation.center {
            Some(c) => Vector::from_column_slice(c),
            None => self.inst.point.y.clone(),
        };
        Polyhedron::cube(&c, self.inst.cfg.truncation.radius)
    }

    fn rung(&self, k: usize) -> Result<RungSamples> {
        let cfg = &self.inst.cfg;
        let (xbar, ybar) = (&self.inst.point.x, &self.inst.point.y);
        let rho = cfg.radius_ladder[k];
        let win = cfg.window(k);
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed ^ self.form.tag() ^ 0x2545_f491_4f6c_dd1du64.wrapping_mul(k as u64 + 1));
        let mut xs = grid_points(xbar, win, cfg.grid_per_axis, cfg.max_points, &mut rng);
        xs.extend(grid_points(xbar, win.min(4.0 * rho), cfg.grid_per_axis, cfg.max_points, &mut rng).into_iter().skip(1));
        xs.retain(|x| self.inst.s.in_domain(x));
        let ys = match self.form {
            Form::Subregularity => vec![ybar.clone()],
            _ => grid_points(ybar, rho, cfg.grid_per_axis, cfg.max_points, &mut rng),
        };
        let window = if self.unrestricted { self.truncation()? } else { Polyhedron::cube(ybar, rho)? };
        let values: Vec<Vec<Vector>> = xs
            .par_iter()
            .map(|x| clip_samples(&self.inst.s.eval(x)?, &window))
            .collect::<Result<_>>()?;
        let preimages: Vec<Region> = ys.par_iter().map(|y| self.sinv.eval(y)).collect::<Result<_>>()?;
        let mut central = Vec::new();
        let mut others = Vec::new();
        for (i, vals) in values.iter().enumerate() {
            for v in 0..vals.len() {
                for j in 0..ys.len() {
                    if i == 0 {
                        central.push((i, v, j));
                    } else {
                        others.push((i, v, j));
                    }
                }
            }
        }
        let room = cfg.pair_budget.saturating_sub(central.len());
        if others.len() > room {
            others.shuffle(&mut rng);
            others.truncate(room);
            others.sort_unstable();
        }
        central.extend(others);
        let samples = central
            .par_iter()
            .map(|&(i, v, j)| {
                let (x, yp, y) = (&xs[i], &values[i][v], &ys[j]);
                // the derivative map is evaluated at y' - y = -a
                let w = yp - y;
                let parts = self.inst.t.eval_parts(&w)?;
                let excess = match self.form {
                    Form::Regularity | Form::Subregularity => dist_to_sum(x, &preimages[j], &parts)?,
                    Form::Covering => {
                        let neg: Vec<(Region, f64)> = parts.into_iter().map(|(c, r)| (c.negated(), r)).collect();
                        set_gap(x, &neg, &preimages[j])?
                    }
                };
                Ok(Sample { x: x.clone(), x2: yp.clone(), y: y.clone(), excess, scale: w.norm() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RungSamples { radius: rho, window: Some(win), samples })
    }

    fn certify(&self) -> Result<Certificate> {
        let rungs = (0..self.inst.cfg.radius_ladder.len()).map(|k| self.rung(k)).collect::<Result<Vec<_>>>()?;
        let mut c = decide(
            RunInfo {
                notion: self.form.notion(),
                base_point: &self.inst.point.x,
                base_value: Some(&self.inst.point.y),
                resolution: self.inst.s.resolution(),
                approximate_t: self.inst.t.is_approximate(),
                cfg: &self.inst.cfg,
            },
            rungs,
        );
        c.slack.proportional = "delta * |a|".into();
        if c.witness.is_some() {
            c.notes.push("witness: x_prime is the value y' in S(x), y = y' + a".into());
        }
        if self.unrestricted {
            c.notes.push("perturbations unrestricted within the truncation box".into());
        }
        Ok(c)
    }
}

fn run(inst: &RegInstance, form: Form, unrestricted: bool) -> Result<Certificate> {
    let sinv = inst.check()?;
    Run { inst, sinv, form, unrestricted }.certify()
}

/// `t(-·)`-metric regularity at the instance point.
pub fn certify_mr(inst: &RegInstance) -> Result<Certificate> {
    run(inst, Form::Regularity, false)
}

/// `(-t(-·))`-open covering at the instance point.
pub fn certify_oc(inst: &RegInstance) -> Result<Certificate> {
    run(inst, Form::Covering, false)
}

/// `t(-·)`-metric subregularity at the instance point.
pub fn certify_msr(inst: &RegInstance) -> Result<Certificate> {
    run(inst, Form::Subregularity, false)
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceRecord {
    pub mr: Certificate,
    pub oc: Certificate,
    pub it: Certificate,
    pub agree: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubregRecord {
    pub msr: Certificate,
    pub outer_it: Certificate,
    pub agree: bool,
}

fn inverse_certificate(inst: &RegInstance, notion: Notion) -> Result<Certificate> {
    let sinv = inst.check()?;
    certify_pseudo(&sinv, &inst.point.y, &inst.point.x, &inst.t, notion, &inst.cfg)
}

/// Regularity, covering and pseudo strict differentiability of the inverse.
pub fn equivalence_harness(inst: &RegInstance) -> Result<EquivalenceRecord> {
    let ((mr, oc), it) = rayon::join(
        || rayon::join(|| certify_mr(inst), || certify_oc(inst)),
        || inverse_certificate(inst, Notion::PseudoStrictT),
    );
    let (mr, oc, it) = (mr?, oc?, it?);
    let agree = mr.verdict == oc.verdict && oc.verdict == it.verdict;
    Ok(EquivalenceRecord { mr, oc, it, agree })
}

/// Subregularity and pseudo outer differentiability of the inverse.
pub fn subreg_harness(inst: &RegInstance) -> Result<SubregRecord> {
    let (msr, it) = rayon::join(|| certify_msr(inst), || inverse_certificate(inst, Notion::PseudoOuterT));
    let (msr, outer_it) = (msr?, it?);
    let agree = msr.verdict == outer_it.verdict;
    Ok(SubregRecord { msr, outer_it, agree })
}

#[derive(Clone, Debug, Serialize)]
pub struct AltDefsRecord {
    pub constrained: Certificate,
    pub unconstrained: Certificate,
    pub agree: bool,
}

/// Whether `0 ∈ t(w)` for every `w`, checked on the generating rays of the
/// graph and on a sphere sample.
fn kernel_is_everything(t: &HomogMap) -> Result<bool> {
    let n = t.dim_out();
    let zero = Vector::zeros(n);
    let m = t.dim_in();
    let mut dirs = unit_directions(m, if m == 1 { 2 } else { 64 });
    if let Ok((pieces, _)) = t.to_cone_graph() {
        for p in &pieces {
            for r in p.rays() {
                let w = r.rows(0, m).into_owned();
                if w.norm() > 1e-12 {
                    dirs.push(&w / w.norm());
                }
            }
        }
    }
    for w in dirs {
        let v = t.eval(&w)?;
        if v.is_empty() || !v.contains(&zero, 1e-9) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Reruns metric regularity with unrestricted perturbations and compares.
/// Requires `t^{-1}(0)` to be the whole space.
pub fn alt_defs_check(inst: &RegInstance) -> Result<AltDefsRecord> {
    inst.check()?;
    if !kernel_is_everything(&inst.t)? {
        return Err(Error::HypothesisFailure("the derivative map does not contain 0 at every direction".into()));
    }
    let (a, b) = rayon::join(|| run(inst, Form::Regularity, false), || run(inst, Form::Regularity, true));
    let (constrained, unconstrained) = (a?, b?);
    let agree = constrained.verdict == unconstrained.verdict;
    Ok(AltDefsRecord { constrained, unconstrained, agree })
}

/// `w -> gauge_C(w) t(C)`, a cone graph built from the facets of `C` and the
/// pieces of `t(C)`.
pub fn ct_reduce(c: &Region, t: &HomogMap) -> Result<HomogMap> {
    let (m, n) = (t.dim_in(), t.dim_out());
    check_dim(m, c.dim)?;
    let [piece] = c.pieces.as_slice() else {
        return Err(Error::Invalid("the gauge set must be a single convex polyhedron".into()));
    };
    if piece.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if !piece.is_bounded() {
        return Err(Error::Invalid("the gauge set must be bounded".into()));
    }
    if piece.hrep().iter().any(|h| h.offset <= EPS) {
        return Err(Error::GaugeUnbounded);
    }
    let (graph, _) = t.to_cone_graph()?;
    let lift: Vec<Halfspace> = piece.lift_constraints(m + n, &(0..m).collect::<Vec<_>>());
    let mut images = Vec::new();
    for g in &graph {
        let cut = g.add_halfspaces(&lift)?;
        if cut.is_empty() {
            continue;
        }
        images.push(cut.project_coords(&(m..m + n).collect::<Vec<_>>())?);
    }
    let mut cones = Vec::new();
    for h in piece.hrep() {
        let facet: Vec<&Vector> = piece
            .vertices()
            .iter()
            .filter(|v| (h.normal.dot(v) - h.offset).abs() <= 1e-9 * (1.0 + h.offset))
            .collect();
        if facet.len() < m {
            continue;
        }
        for img in &images {
            let mut rays = Vec::new();
            for v in &facet {
                for p in img.vertices() {
                    rays.push(Vector::from_iterator(m + n, v.iter().chain(p.iter()).copied()));
                }
            }
            for r in img.rays() {
                rays.push(Vector::from_iterator(m + n, std::iter::repeat(0.0).take(m).chain(r.iter().copied())));
            }
            cones.push(Polyhedron::cone(m + n, rays)?);
        }
    }
    HomogMap::cone_graph(m, n, cones)
}

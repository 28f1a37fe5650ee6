//! Gradient sampling for locally Lipschitz functions: Clarke directional
//! derivatives, Clarke Jacobians, a mean-value test and the derivative map
//! built from a Jacobian.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{certify_single, CertConfig, Certificate, Notion};
use crate::error::{check_dim, Error, Result};
use crate::geom::{Polyhedron, Vector};
use crate::homog::{HomogMap, Matrix};
use crate::svmap::Function;

/// Gradients by analytic Jacobian where available, central differences
/// otherwise, plus a kink detector.
#[derive(Clone)]
pub struct SmoothSampler {
    pub f: Arc<dyn Function>,
    /// Finite-difference step; `None` means `1e-6 (1 + |x|)` at each point.
    pub h_fd: Option<f64>,
}

/// Gradient at one point, or a flag when one-sided quotients disagree.
pub enum Gradient {
    Smooth(Matrix),
    Flagged,
}

impl SmoothSampler {
    pub fn new(f: Arc<dyn Function>) -> Self {
        SmoothSampler { f, h_fd: None }
    }

    fn step(&self, x: &Vector) -> f64 {
        self.h_fd.unwrap_or(1e-6 * (1.0 + x.norm()))
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        let y = self.f.eval(x)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::EvaluationFailure(format!("{} is not finite at {:?}", self.f.name(), x.as_slice())));
        }
        Ok(y)
    }

    /// Forward and backward quotients along each axis; a point is flagged
    /// when they differ by more than `100 h (1 + L)`, with `L` the largest
    /// quotient seen.
    pub fn gradient(&self, x: &Vector) -> Result<Gradient> {
        let (n, m) = (self.f.dim_in(), self.f.dim_out());
        check_dim(n, x.len())?;
        let h = self.step(x);
        let fx = self.eval(x)?;
        let mut central = Matrix::zeros(m, n);
        let mut worst_gap: f64 = 0.0;
        let mut lip: f64 = 0.0;
        for j in 0..n {
            let mut e = Vector::zeros(n);
            e[j] = h;
            let fp = self.eval(&(x + &e))?;
            let fm = self.eval(&(x - &e))?;
            let fwd = (&fp - &fx) / h;
            let bwd = (&fx - &fm) / h;
            worst_gap = worst_gap.max((&fwd - &bwd).amax());
            lip = lip.max(fwd.amax()).max(bwd.amax());
            central.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        if worst_gap > 100.0 * h * (1.0 + lip) {
            return Ok(Gradient::Flagged);
        }
        Ok(Gradient::Smooth(self.f.jacobian(x).unwrap_or(central)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClarkeConfig {
    pub radii: Vec<f64>,
    pub samples_per_rung: usize,
    pub seed: u64,
    /// Hausdorff movement of the hull between the last two rungs below which
    /// the estimate is called stable.
    pub stability_tol: f64,
}

impl Default for ClarkeConfig {
    fn default() -> Self {
        ClarkeConfig { radii: vec![1e-2, 1e-3, 1e-4, 1e-5], samples_per_rung: 200, seed: 0, stability_tol: 1e-3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirDeriv {
    pub value: f64,
    /// Largest quotient per rung.
    pub per_rung: Vec<f64>,
    pub radii: Vec<f64>,
}

/// Hull vertices of sampled Jacobians, each stored row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JacobianEstimate {
    pub rows: usize,
    pub cols: usize,
    pub matrices: Vec<Vec<f64>>,
    pub sample_radius: f64,
    pub sample_count: usize,
    pub flagged: usize,
    pub stable: bool,
}

impl JacobianEstimate {
    pub fn matrix(&self, i: usize) -> Matrix {
        Matrix::from_row_slice(self.rows, self.cols, &self.matrices[i])
    }

    pub fn hull_points(&self) -> Vec<Vector> {
        self.matrices.iter().map(|m| Vector::from_column_slice(m)).collect()
    }
}

fn box_samples(center: &Vector, r: f64, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    (0..count)
        .map(|_| Vector::from_iterator(center.len(), center.iter().map(|c| c + rng.gen_range(-r..=r))))
        .collect()
}

fn require_scalar(f: &dyn Function) -> Result<()> {
    if f.dim_out() != 1 {
        return Err(Error::NotScalar);
    }
    Ok(())
}

/// `f°(xbar; v)` as the largest difference quotient over a ladder of base
/// points near `xbar` and steps of length `r / 10` and `r / 100` along `v`.
pub fn clarke_dirderiv(s: &SmoothSampler, xbar: &Vector, v: &Vector, cfg: &ClarkeConfig) -> Result<DirDeriv> {
    require_scalar(s.f.as_ref())?;
    check_dim(s.f.dim_in(), xbar.len())?;
    check_dim(s.f.dim_in(), v.len())?;
    let nv = v.norm();
    if nv == 0.0 {
        return Ok(DirDeriv { value: 0.0, per_rung: vec![0.0; cfg.radii.len()], radii: cfg.radii.clone() });
    }
    let mut per_rung = Vec::with_capacity(cfg.radii.len());
    for (k, &r) in cfg.radii.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
        let mut xs = vec![xbar.clone()];
        xs.extend(box_samples(xbar, r, cfg.samples_per_rung, &mut rng));
        let steps = [r / 10.0 / nv, r / 100.0 / nv];
        let best = xs
            .par_iter()
            .map(|x| -> Result<f64> {
                let fx = s.eval(x)?[0];
                let mut b = f64::NEG_INFINITY;
                for t in steps {
                    b = b.max((s.eval(&(x + v * t))?[0] - fx) / t);
                }
                Ok(b)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        per_rung.push(best);
    }
    Ok(DirDeriv { value: *per_rung.last().unwrap(), per_rung, radii: cfg.radii.clone() })
}

fn hull_vertices(points: Vec<Vector>) -> Result<Vec<Vector>> {
    let d = points[0].len();
    let mut uniq: Vec<Vector> = Vec::new();
    for p in points {
        if !uniq.iter().any(|q| (q - &p).amax() <= 1e-9 * (1.0 + p.amax())) {
            uniq.push(p);
        }
    }
    if d == 1 {
        let lo = uniq.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = uniq.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let mut out = vec![Vector::from_element(1, lo)];
        if hi > lo {
            out.push(Vector::from_element(1, hi));
        }
        return Ok(out);
    }
    if uniq.len() == 1 {
        return Ok(uniq);
    }
    // Work in a centered, unit-diameter frame so that tiny clouds keep
    // well-conditioned facets.
    let c = uniq.iter().fold(Vector::zeros(d), |a, p| a + p) / uniq.len() as f64;
    let spread = uniq.iter().map(|p| (p - &c).amax()).fold(0.0, f64::max);
    let local: Vec<Vector> = uniq.iter().map(|p| (p - &c) / spread).collect();
    let hull = Polyhedron::from_vrep(d, local, Vec::new())?;
    Ok(hull.vertices().iter().map(|v| v * spread + &c).collect())
}

fn jacobian_at_radius(s: &SmoothSampler, xbar: &Vector, r: f64, count: usize, seed: u64) -> Result<(Vec<Vector>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = box_samples(xbar, r, count, &mut rng);
    let grads = xs.par_iter().map(|x| s.gradient(x)).collect::<Result<Vec<_>>>()?;
    let mut flagged = 0;
    let mut pts = Vec::new();
    for g in grads {
        match g {
            Gradient::Flagged => flagged += 1,
            Gradient::Smooth(a) => pts.push(Vector::from_iterator(a.len(), a.transpose().iter().copied())),
        }
    }
    if pts.is_empty() || flagged * 10 > count * 9 {
        return Err(Error::InsufficientSamples);
    }
    Ok((hull_vertices(pts)?, flagged))
}

fn one_sided(a: &[Vector], b: &[Vector]) -> Result<f64> {
    if b[0].len() == 1 {
        let lo = b.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = b.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return Ok(a.iter().map(|p| (lo - p[0]).max(p[0] - hi).max(0.0)).fold(0.0, f64::max));
    }
    let hull = Polyhedron::from_vrep(b[0].len(), b.to_vec(), Vec::new())?;
    Ok(a.iter().map(|p| hull.dist(p)).fold(0.0, f64::max))
}

/// Hausdorff distance between the convex hulls of two point sets.
pub fn hull_distance(a: &[Vector], b: &[Vector]) -> Result<f64> {
    Ok(one_sided(a, b)?.max(one_sided(b, a)?))
}

/// Clarke Jacobian estimate: the hull of gradients sampled at points where
/// no kink was detected, at the smallest radius of the ladder.
pub fn clarke_jacobian(s: &SmoothSampler, xbar: &Vector, cfg: &ClarkeConfig) -> Result<JacobianEstimate> {
    check_dim(s.f.dim_in(), xbar.len())?;
    if cfg.radii.is_empty() {
        return Err(Error::Invalid("empty radius ladder".into()));
    }
    let mut prev: Option<Vec<Vector>> = None;
    let mut stable = false;
    let mut last = (Vec::new(), 0);
    for (k, &r) in cfg.radii.iter().enumerate() {
        let (h, flagged) = jacobian_at_radius(s, xbar, r, cfg.samples_per_rung, cfg.seed.wrapping_add(k as u64))?;
        if let Some(p) = &prev {
            stable = hull_distance(p, &h)? < cfg.stability_tol;
        }
        prev = Some(h.clone());
        last = (h, flagged);
    }
    let (m, n) = (s.f.dim_out(), s.f.dim_in());
    Ok(JacobianEstimate {
        rows: m,
        cols: n,
        matrices: last.0.iter().map(|v| v.iter().copied().collect()).collect(),
        sample_radius: *cfg.radii.last().unwrap(),
        sample_count: cfg.samples_per_rung,
        flagged: last.1,
        stable,
    })
}

/// `w -> {A w : A in conv J}`.
pub fn jacobian_t(j: &JacobianEstimate) -> Result<HomogMap> {
    if j.matrices.is_empty() {
        return Err(Error::Invalid("empty Jacobian estimate".into()));
    }
    HomogMap::bundle((0..j.matrices.len()).map(|i| j.matrix(i)).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MvtVerdict {
    pub holds: bool,
    /// Segment point whose subdifferential estimate contains the increment.
    pub u: Option<Vec<f64>>,
    pub increment: f64,
    /// Range of `<g, x2 - x1>` over the estimate at `u` (or at the closest
    /// miss when the test fails).
    pub range: (f64, f64),
}

/// Searches the segment `[x1, x2]` for a point whose Clarke subdifferential
/// estimate, taken over the surrounding segment cell, pairs with `x2 - x1`
/// to the increment `f(x2) - f(x1)`.
pub fn mvt_check(s: &SmoothSampler, x1: &Vector, x2: &Vector, cells: usize, tol: f64, seed: u64) -> Result<MvtVerdict> {
    require_scalar(s.f.as_ref())?;
    check_dim(s.f.dim_in(), x1.len())?;
    check_dim(s.f.dim_in(), x2.len())?;
    let cells = cells.max(1);
    let d = x2 - x1;
    let increment = s.eval(x2)?[0] - s.eval(x1)?[0];
    let radius = 0.5 * d.amax() / cells as f64 * 1.01 + 1e-12;
    let mut best: Option<(f64, Vec<f64>, (f64, f64))> = None;
    for i in 0..=cells {
        let u = x1 + &d * (i as f64 / cells as f64);
        let (hull, _) = match jacobian_at_radius(s, &u, radius, 64, seed.wrapping_add(i as u64)) {
            Ok(h) => h,
            Err(Error::InsufficientSamples) => continue,
            Err(e) => return Err(e),
        };
        let vals: Vec<f64> = hull.iter().map(|g| g.dot(&d)).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let miss = (lo - increment).max(increment - hi).max(0.0);
        if best.as_ref().is_none_or(|b| miss < b.0) {
            best = Some((miss, u.iter().copied().collect(), (lo, hi)));
        }
    }
    let (miss, u, range) = best.ok_or(Error::InsufficientSamples)?;
    let holds = miss <= tol;
    Ok(MvtVerdict { holds, u: holds.then_some(u), increment, range })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovectorCheck {
    pub strict: Certificate,
    /// Whether every hull vertex of the Clarke estimate lies in `C` up to
    /// the tolerance.
    pub containment: bool,
    pub excess: f64,
    pub jacobian: JacobianEstimate,
}

/// Strict differentiability by `w -> <C, w>` together with containment of
/// the sampled Clarke subdifferential in the covector set `C`.
pub fn covector_check(
    f: Arc<dyn Function>,
    covectors: &[Vector],
    xbar: &Vector,
    cfg: &CertConfig,
    ccfg: &ClarkeConfig,
    tol: f64,
) -> Result<CovectorCheck> {
    require_scalar(f.as_ref())?;
    if covectors.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let n = f.dim_in();
    for c in covectors {
        check_dim(n, c.len())?;
    }
    let t = HomogMap::bundle(covectors.iter().map(|c| Matrix::from_row_slice(1, n, c.as_slice())).collect())?;
    let strict = certify_single(f.clone(), xbar, &t, Notion::SingleStrictT, cfg)?;
    let jacobian = clarke_jacobian(&SmoothSampler::new(f), xbar, ccfg)?;
    let excess = one_sided(&jacobian.hull_points(), &hull_vertices(covectors.to_vec())?)?;
    Ok(CovectorCheck { strict, containment: excess <= tol, excess, jacobian })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::function_by_name;
    use crate::geom::vector;

    fn sampler(name: &str) -> SmoothSampler {
        SmoothSampler::new(function_by_name(name, &serde_json::Value::Null).unwrap())
    }

    #[test]
    fn abs_directional_derivative() {
        let s = sampler("abs");
        let c = ClarkeConfig::default();
        for v in [1.0, -1.0] {
            let d = clarke_dirderiv(&s, &vector(&[0.0]), &vector(&[v]), &c).unwrap();
            assert!((d.value - 1.0).abs() < 1e-9);
        }
        let d = clarke_dirderiv(&sampler("smooth2"), &vector(&[0.3, 0.2]), &vector(&[1.0, -2.0]), &c).unwrap();
        assert!((d.value - (0.3f64.cos() - 0.8)).abs() < 1e-4);
    }

    #[test]
    fn abs_jacobian_is_the_unit_interval() {
        let j = clarke_jacobian(&sampler("abs"), &vector(&[0.0]), &ClarkeConfig::default()).unwrap();
        let mut v: Vec<f64> = j.matrices.iter().map(|m| m[0]).collect();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, vec![-1.0, 1.0]);
        let t = jacobian_t(&j).unwrap();
        let (lo, hi) = t.eval(&vector(&[2.0])).unwrap().pieces[0].interval_bounds();
        assert!((lo + 2.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_jacobian_is_a_point() {
        let x = vector(&[0.3, 0.2]);
        let j = clarke_jacobian(&sampler("smooth2"), &x, &ClarkeConfig::default()).unwrap();
        for m in &j.matrices {
            assert!((m[0] - 0.3f64.cos()).abs() < 1e-4 && (m[1] - 0.4).abs() < 1e-4, "{m:?}");
        }
    }

    #[test]
    fn mean_value_points() {
        let s = sampler("abs");
        let v = mvt_check(&s, &vector(&[-1.0]), &vector(&[2.0]), 40, 1e-9, 0).unwrap();
        assert!(v.holds);
        assert!(v.u.unwrap()[0].abs() < 0.1);
        let v = mvt_check(&s, &vector(&[1.0]), &vector(&[2.0]), 40, 1e-9, 0).unwrap();
        assert!(v.holds);
        assert!(mvt_check(&sampler("abs_pair"), &vector(&[1.0]), &vector(&[2.0]), 4, 1e-9, 0).is_err());
    }

    #[test]
    fn covector_sets() {
        let f = function_by_name("abs", &serde_json::Value::Null).unwrap();
        let cfg = CertConfig::default();
        let cc = ClarkeConfig::default();
        let ok = covector_check(f.clone(), &[vector(&[-1.0]), vector(&[1.0])], &vector(&[0.0]), &cfg, &cc, 1e-3).unwrap();
        assert!(ok.strict.verified() && ok.containment);
        let bad = covector_check(f, &[vector(&[-0.5]), vector(&[0.5])], &vector(&[0.0]), &cfg, &cc, 1e-3).unwrap();
        assert!(bad.strict.refuted() && !bad.containment);
    }
}

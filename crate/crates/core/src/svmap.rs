use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geom::{
    check_exact_dim, compose_graphs, sum_graphs, swap_blocks, unit_directions, Ball, Polyhedron, Region, Vector,
    EPS,
};
use crate::homog::Matrix;

/// Default discretization step for curved values.
pub const DEFAULT_RESOLUTION: f64 = 1e-3;

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn cube(dim: usize, half: f64) -> Self {
        DomainBox { lo: vec![-half; dim], hi: vec![half; dim] }
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.lo.len()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= a - EPS && *v <= b + EPS)
    }
}

/// Closed-form evaluator `x -> S(x)`. Implementations must be pure functions
/// of `(x, resolution)`.
pub trait Oracle: Send + Sync {
    fn name(&self) -> &str;
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn domain(&self) -> DomainBox;
    fn eval(&self, x: &Vector, resolution: f64) -> Result<Region>;
    fn params(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Single-valued function `f: R^n -> R^m`.
pub trait Function: Send + Sync {
    fn name(&self) -> &str;
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, x: &Vector) -> Result<Vector>;
    /// Analytic Jacobian when available at `x`.
    fn jacobian(&self, _x: &Vector) -> Option<Matrix> {
        None
    }
    fn params(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

struct FunctionOracle {
    f: Arc<dyn Function>,
    domain: DomainBox,
}

impl Oracle for FunctionOracle {
    fn name(&self) -> &str {
        self.f.name()
    }
    fn dim_in(&self) -> usize {
        self.f.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.f.dim_out()
    }
    fn domain(&self) -> DomainBox {
        self.domain.clone()
    }
    fn eval(&self, x: &Vector, _resolution: f64) -> Result<Region> {
        let y = self.f.eval(x)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::EvaluationFailure(format!("{} is not finite at {:?}", self.f.name(), x.as_slice())));
        }
        Region::point(y)
    }
    fn params(&self) -> serde_json::Value {
        self.f.params()
    }
}

#[derive(Clone)]
pub enum Backend {
    PolyGraph(Vec<Polyhedron>),
    Oracle(Arc<dyn Oracle>),
}

#[derive(Clone)]
pub struct SVMap {
    dim_in: usize,
    dim_out: usize,
    backend: Backend,
    resolution: f64,
    function: Option<Arc<dyn Function>>,
}

impl fmt::Debug for SVMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.backend {
            Backend::PolyGraph(p) => format!("poly_graph[{} pieces]", p.len()),
            Backend::Oracle(o) => format!("oracle[{}]", o.name()),
        };
        write!(f, "SVMap({} -> {}, {kind})", self.dim_in, self.dim_out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphPoint {
    #[serde(with = "crate::geom::vec_serde")]
    pub x: Vector,
    #[serde(with = "crate::geom::vec_serde")]
    pub y: Vector,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitProbe {
    pub ladder: Vec<f64>,
    /// Union of the values at the sample points of the finest rung.
    pub outer: Region,
    /// Candidate points whose distance to every sampled value is within
    /// the rung tolerance.
    pub inner: Vec<Vec<f64>>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiVerdict {
    pub holds: bool,
    /// Worst gap per rung of the ladder.
    pub gaps: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_x: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemicontinuityReport {
    pub ladder: Vec<f64>,
    pub outer: SemiVerdict,
    pub inner: SemiVerdict,
}

pub const DEFAULT_PROBE_LADDER: [f64; 3] = [1e-1, 1e-2, 1e-3];

impl SVMap {
    pub fn poly_graph(dim_in: usize, dim_out: usize, pieces: Vec<Polyhedron>) -> Result<Self> {
        check_exact_dim(dim_in + dim_out)?;
        for p in &pieces {
            check_dim(dim_in + dim_out, p.dim())?;
        }
        Ok(SVMap {
            dim_in,
            dim_out,
            backend: Backend::PolyGraph(pieces.into_iter().filter(|p| !p.is_empty()).collect()),
            resolution: 0.0,
            function: None,
        })
    }

    pub fn from_oracle(oracle: Arc<dyn Oracle>, resolution: f64) -> Self {
        SVMap {
            dim_in: oracle.dim_in(),
            dim_out: oracle.dim_out(),
            backend: Backend::Oracle(oracle),
            resolution,
            function: None,
        }
    }

    /// Wraps a single-valued function as `x -> {f(x)}`.
    pub fn from_function(f: Arc<dyn Function>, domain: DomainBox) -> Self {
        let oracle = Arc::new(FunctionOracle { f: f.clone(), domain });
        let mut s = Self::from_oracle(oracle, 0.0);
        s.function = Some(f);
        s
    }

    /// `x -> {A x}` as a polyhedral graph.
    pub fn linear(a: &Matrix) -> Result<Self> {
        let g = crate::homog::HomogMap::linear(a.clone()).to_cone_graph()?.0;
        Self::poly_graph(a.ncols(), a.nrows(), g)
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }
    pub fn dim_out(&self) -> usize {
        self.dim_out
    }
    pub fn backend(&self) -> &Backend {
        &self.backend
    }
    pub fn function(&self) -> Option<&Arc<dyn Function>> {
        self.function.as_ref()
    }

    /// Discretization step `h` of curved values (0 for polyhedral graphs).
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn with_resolution(&self, h: f64) -> Self {
        let mut s = self.clone();
        if matches!(s.backend, Backend::Oracle(_)) {
            s.resolution = h;
        }
        s
    }

    pub fn graph_pieces(&self) -> Option<&[Polyhedron]> {
        match &self.backend {
            Backend::PolyGraph(p) => Some(p),
            Backend::Oracle(_) => None,
        }
    }

    pub fn domain(&self) -> Option<DomainBox> {
        match &self.backend {
            Backend::PolyGraph(_) => None,
            Backend::Oracle(o) => Some(o.domain()),
        }
    }

    pub fn in_domain(&self, x: &Vector) -> bool {
        match &self.backend {
            Backend::PolyGraph(_) => x.len() == self.dim_in,
            Backend::Oracle(o) => o.domain().contains(x),
        }
    }

    pub fn eval(&self, x: &Vector) -> Result<Region> {
        check_dim(self.dim_in, x.len())?;
        match &self.backend {
            Backend::PolyGraph(ps) => {
                let slices = ps.iter().map(|p| p.slice_prefix(x)).collect::<Result<Vec<_>>>()?;
                Region::new(self.dim_out, slices)
            }
            Backend::Oracle(o) => {
                if !o.domain().contains(x) {
                    return Err(Error::OutsideDomain);
                }
                o.eval(x, self.resolution)
            }
        }
    }

    pub fn on_graph(&self, x: &Vector, y: &Vector, tol: f64) -> Result<bool> {
        check_dim(self.dim_out, y.len())?;
        let v = self.eval(x)?;
        Ok(!v.is_empty() && v.dist(y)? <= tol + self.resolution)
    }

    /// `y -> {x : y in S(x)}`.
    pub fn invert(&self) -> Result<SVMap> {
        match &self.backend {
            Backend::PolyGraph(ps) => {
                let swapped = ps
                    .iter()
                    .map(|p| swap_blocks(p, self.dim_in, self.dim_out))
                    .collect::<Result<Vec<_>>>()?;
                Self::poly_graph(self.dim_out, self.dim_in, swapped)
            }
            Backend::Oracle(_) => Err(Error::OracleNotInvertible),
        }
    }

    /// `x -> G(F(x))` for polyhedral graphs.
    pub fn compose(g: &SVMap, f: &SVMap) -> Result<SVMap> {
        check_dim(f.dim_out, g.dim_in)?;
        let (Some(gf), Some(gg)) = (f.graph_pieces(), g.graph_pieces()) else {
            return Err(Error::Invalid("composition needs polyhedral graphs".into()));
        };
        let pieces = compose_graphs(gg, gf, f.dim_in, f.dim_out, g.dim_out)?;
        Self::poly_graph(f.dim_in, g.dim_out, pieces)
    }

    /// `x -> S_1(x) + ... + S_p(x)` for polyhedral graphs.
    pub fn sum(maps: &[SVMap]) -> Result<SVMap> {
        let first = maps.first().ok_or_else(|| Error::Invalid("sum of no maps".into()))?;
        let (n, m) = (first.dim_in, first.dim_out);
        let mut acc: Vec<Polyhedron> =
            first.graph_pieces().ok_or_else(|| Error::Invalid("sum needs polyhedral graphs".into()))?.to_vec();
        for s in &maps[1..] {
            check_dim(n, s.dim_in)?;
            check_dim(m, s.dim_out)?;
            let g = s.graph_pieces().ok_or_else(|| Error::Invalid("sum needs polyhedral graphs".into()))?;
            acc = sum_graphs(&acc, g, n, m)?;
        }
        Self::poly_graph(n, m, acc)
    }

    /// Random graph point of a polyhedral graph: a convex combination of a
    /// piece's vertices plus a bounded multiple of its rays.
    pub fn sample_graph_point<R: Rng>(&self, rng: &mut R) -> Option<GraphPoint> {
        let ps = self.graph_pieces()?;
        if ps.is_empty() {
            return None;
        }
        let p = &ps[rng.gen_range(0..ps.len())];
        let verts = p.vertices();
        let ws: Vec<f64> = verts.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = ws.iter().sum::<f64>().max(1e-12);
        let mut z = Vector::zeros(self.dim_in + self.dim_out);
        for (v, a) in verts.iter().zip(&ws) {
            z += v * (*a / total);
        }
        for r in p.rays() {
            z += r * rng.gen_range(0.0..1.0);
        }
        Some(GraphPoint {
            x: z.rows(0, self.dim_in).into_owned(),
            y: z.rows(self.dim_in, self.dim_out).into_owned(),
        })
    }

    fn rung_points(&self, xbar: &Vector, r: f64) -> Vec<Vector> {
        unit_directions(self.dim_in, 12)
            .into_iter()
            .map(|u| xbar + u * r)
            .filter(|x| self.in_domain(x))
            .collect()
    }

    fn value_samples(&self, v: &Region, trunc: &Ball) -> Result<Vec<Vector>> {
        let v = if v.is_bounded() { v.clone() } else { v.truncate(trunc)? };
        v.sample_points(3)
    }

    fn truncation_for(&self, xbar: &Vector, radius: f64) -> Result<Ball> {
        let v = self.eval(xbar)?;
        let center = if v.is_empty() { Vector::zeros(self.dim_out) } else { v.project(&Vector::zeros(self.dim_out))? };
        Ball::new(center, radius)
    }

    /// Sampled outer and inner limits at `xbar` over a punctured radius
    /// ladder. Values are truncated to a ball of radius 10 around the point
    /// of `S(xbar)` nearest the origin.
    pub fn limit_probe(&self, xbar: &Vector, radii: &[f64]) -> Result<LimitProbe> {
        check_dim(self.dim_in, xbar.len())?;
        if !self.in_domain(xbar) {
            return Err(Error::OutsideDomain);
        }
        let r = *radii.last().ok_or_else(|| Error::Invalid("empty radius ladder".into()))?;
        let trunc = self.truncation_for(xbar, 10.0)?;
        let xs = self.rung_points(xbar, r);
        let mut outer = Region::empty(self.dim_out);
        let mut values = Vec::with_capacity(xs.len());
        for x in &xs {
            let v = self.eval(x)?;
            outer = outer.union(&v)?;
            values.push(v);
        }
        let tolerance = 10.0 * r * (1.0 + trunc.radius) + self.resolution + 10.0 * EPS;
        let mut candidates = self.value_samples(&self.eval(xbar)?, &trunc)?;
        if !outer.is_empty() {
            candidates.extend(self.value_samples(&outer, &trunc)?);
        }
        let mut inner = Vec::new();
        for y in candidates {
            let mut worst: f64 = 0.0;
            for v in &values {
                worst = worst.max(if v.is_empty() { f64::INFINITY } else { v.dist(&y)? });
            }
            if worst <= tolerance && !values.is_empty() {
                inner.push(y.iter().copied().collect());
            }
        }
        Ok(LimitProbe { ladder: radii.to_vec(), outer, inner, tolerance })
    }

    /// Sampled outer and inner semicontinuity at `xbar`. A property holds at
    /// resolution when the worst gap at the finest rung is within the
    /// geometric slack, or has at least halved relative to the coarsest rung.
    pub fn semicontinuity_report(&self, xbar: &Vector, truncation: &Ball, radii: &[f64]) -> Result<SemicontinuityReport> {
        check_dim(self.dim_in, xbar.len())?;
        if !self.in_domain(xbar) {
            return Err(Error::OutsideDomain);
        }
        if radii.is_empty() {
            return Err(Error::Invalid("empty radius ladder".into()));
        }
        let base = self.eval(xbar)?;
        let base_samples = if base.is_empty() { Vec::new() } else { self.value_samples(&base, truncation)? };
        let slack = self.resolution + 10.0 * EPS;

        let mut outer_gaps = Vec::with_capacity(radii.len());
        let mut inner_gaps = Vec::with_capacity(radii.len());
        let mut outer_w = None;
        let mut inner_w = None;
        for &r in radii {
            let mut og: f64 = 0.0;
            let mut ig: f64 = 0.0;
            let mut ow = None;
            let mut iw = None;
            let xs = self.rung_points(xbar, r);
            let vals = xs.iter().map(|x| self.eval(x)).collect::<Result<Vec<_>>>()?;
            for (x, v) in xs.iter().zip(&vals) {
                if v.is_empty() {
                    continue;
                }
                for y in self.value_samples(v, truncation)? {
                    let d = if base.is_empty() { f64::INFINITY } else { base.dist(&y)? };
                    if d > og {
                        og = d;
                        ow = Some((x.clone(), y));
                    }
                }
            }
            for y in &base_samples {
                for (x, v) in xs.iter().zip(&vals) {
                    let d = if v.is_empty() { f64::INFINITY } else { v.dist(y)? };
                    if d > ig {
                        ig = d;
                        iw = Some((x.clone(), y.clone()));
                    }
                }
            }
            outer_gaps.push(og);
            inner_gaps.push(ig);
            outer_w = ow;
            inner_w = iw;
        }
        let verdict = |gaps: Vec<f64>, w: Option<(Vector, Vector)>| {
            let last = *gaps.last().unwrap();
            let first = gaps[0];
            let holds = last <= slack || (gaps.len() > 1 && last.is_finite() && last <= 0.5 * first);
            let (wx, wy) = match (holds, w) {
                (false, Some((x, y))) => (Some(x.iter().copied().collect()), Some(y.iter().copied().collect())),
                _ => (None, None),
            };
            SemiVerdict { holds, gaps, witness_x: wx, witness_y: wy }
        };
        Ok(SemicontinuityReport {
            ladder: radii.to_vec(),
            outer: verdict(outer_gaps, outer_w),
            inner: verdict(inner_gaps, inner_w),
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
enum SVMapJson {
    PolyGraph {
        dim_in: usize,
        dim_out: usize,
        pieces: Vec<Polyhedron>,
    },
    Oracle {
        name: String,
        #[serde(default)]
        params: serde_json::Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resolution: Option<f64>,
    },
}

impl Serialize for SVMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match &self.backend {
            Backend::PolyGraph(ps) => SVMapJson::PolyGraph { dim_in: self.dim_in, dim_out: self.dim_out, pieces: ps.clone() },
            Backend::Oracle(o) => SVMapJson::Oracle {
                name: o.name().to_string(),
                params: o.params(),
                resolution: Some(self.resolution),
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SVMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match SVMapJson::deserialize(d)? {
            SVMapJson::PolyGraph { dim_in, dim_out, pieces } => {
                SVMap::poly_graph(dim_in, dim_out, pieces).map_err(D::Error::custom)
            }
            SVMapJson::Oracle { name, params, resolution } => {
                let s = crate::gallery::map_by_name(&name, &params).map_err(D::Error::custom)?;
                Ok(match resolution {
                    Some(h) => s.with_resolution(h),
                    None => s,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{vector, Halfspace};

    fn half_line() -> SVMap {
        // gph = {(x, y) : y <= x}
        let g = Polyhedron::from_hrep(2, vec![Halfspace::new(vector(&[-1.0, 1.0]), 0.0).unwrap()]).unwrap();
        SVMap::poly_graph(1, 1, vec![g]).unwrap()
    }

    #[test]
    fn half_line_eval_and_inverse() {
        let s = half_line();
        let v = s.eval(&vector(&[2.0])).unwrap();
        let (lo, hi) = v.pieces[0].interval_bounds();
        assert_eq!(lo, f64::NEG_INFINITY);
        assert!((hi - 2.0).abs() < 1e-12);
        let inv = s.invert().unwrap();
        let (lo, hi) = inv.eval(&vector(&[1.0])).unwrap().pieces[0].interval_bounds();
        assert!((lo - 1.0).abs() < 1e-12 && hi == f64::INFINITY);
        let back = inv.invert().unwrap();
        assert!(back.graph_pieces().unwrap()[0].approx_eq(&s.graph_pieces().unwrap()[0], 1e-12));
    }

    #[test]
    fn linear_map_inverse() {
        let s = SVMap::linear(&Matrix::from_element(1, 1, 2.0)).unwrap();
        let inv = s.invert().unwrap();
        let v = inv.eval(&vector(&[3.0])).unwrap();
        assert!(v.contains(&vector(&[1.5]), 1e-9));
        assert_eq!(v.pieces[0].vertices().len(), 1);
    }

    #[test]
    fn linear_map_is_continuous() {
        let s = SVMap::linear(&Matrix::from_element(1, 1, 2.0)).unwrap();
        let t = Ball::centered(1, 10.0).unwrap();
        let rep = s.semicontinuity_report(&vector(&[0.5]), &t, &DEFAULT_PROBE_LADDER).unwrap();
        assert!(rep.outer.holds && rep.inner.holds);
    }

    #[test]
    fn closed_graph_is_outer_semicontinuous() {
        let s = half_line();
        let t = Ball::centered(1, 10.0).unwrap();
        let rep = s.semicontinuity_report(&vector(&[0.0]), &t, &DEFAULT_PROBE_LADDER).unwrap();
        assert!(rep.outer.holds);
    }

    #[test]
    fn composition_of_polygraphs() {
        let f = SVMap::linear(&Matrix::from_element(1, 1, 2.0)).unwrap();
        let g = half_line();
        let c = SVMap::compose(&g, &f).unwrap();
        let (_, hi) = c.eval(&vector(&[1.0])).unwrap().pieces[0].interval_bounds();
        assert!((hi - 2.0).abs() < 1e-9);
        let s = SVMap::sum(&[f.clone(), f]).unwrap();
        assert!(s.eval(&vector(&[1.0])).unwrap().contains(&vector(&[4.0]), 1e-9));
    }
}

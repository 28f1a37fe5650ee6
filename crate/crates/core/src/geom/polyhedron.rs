//! Convex polyhedra with both H- and V-representations kept in sync.
//!
//! Construction from either side computes the other one by brute-force
//! combinatorial enumeration, which is adequate for the small dimensions the
//! crate targets. The stored H-representation is canonical: one halfspace per
//! facet, plus a pair of opposite halfspaces per equality of the affine hull.

use serde::{Deserialize, Serialize};

use super::linalg::{binomial, complement, orth_basis, orthogonal_direction, solve, Combinations};
use super::{Ball, Vector, EPS};
use crate::error::{Error, Result};

/// Dimension cap for lifted intermediate polyhedra (compositions and sums
/// lift to the product space before projecting).
pub const MAX_LIFT_DIM: usize = 8;

const COMBINATION_BUDGET: f64 = 4.0e6;

/// Closed halfspace `{z : <normal, z> <= offset}` with a unit normal.
#[derive(Clone, Debug, PartialEq)]
pub struct Halfspace {
    pub normal: Vector,
    pub offset: f64,
}

impl Halfspace {
    /// Normalizes `normal` to unit length. Fails if the normal vanishes.
    pub fn new(normal: Vector, offset: f64) -> Result<Self> {
        let n = normal.norm();
        if !(n > EPS) || !offset.is_finite() {
            return Err(Error::Invalid(
                "halfspace normal must be nonzero and finite".into(),
            ));
        }
        Ok(Halfspace {
            normal: normal / n,
            offset: offset / n,
        })
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// `<normal, p> - offset`; positive means outside.
    pub fn violation(&self, p: &Vector) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

#[derive(Clone, Debug)]
pub struct Polyhedron {
    dim: usize,
    hrep: Vec<Halfspace>,
    vertices: Vec<Vector>,
    rays: Vec<Vector>,
}

fn scale_of(points: &[Vector]) -> f64 {
    1.0 + points.iter().map(|p| p.amax()).fold(0.0, f64::max)
}

fn dedup_points(points: Vec<Vector>, tol: f64) -> Vec<Vector> {
    let mut out: Vec<Vector> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| (q - &p).amax() <= tol) {
            out.push(p);
        }
    }
    out
}

fn dedup_directions(dirs: Vec<Vector>) -> Vec<Vector> {
    let mut out: Vec<Vector> = Vec::new();
    for d in dirs {
        let n = d.norm();
        if n <= EPS {
            continue;
        }
        let u = d / n;
        if !out.iter().any(|q| (q - &u).amax() <= 1e-9) {
            out.push(u);
        }
    }
    out
}

fn check_budget(count: f64, what: &str) -> Result<()> {
    if count > COMBINATION_BUDGET {
        return Err(Error::ComplexityBudgetExceeded(format!(
            "{what}: {count:.0} candidate subsets"
        )));
    }
    Ok(())
}

/// Vertex and extreme-ray enumeration for `{x : A x <= b}`.
///
/// The lineality space is split off first so that the remaining polyhedron is
/// pointed; its vertices come from nonsingular `p`-subsets of constraints and
/// its extreme rays from rank-`(p-1)` subsets. Lineality directions are
/// returned as pairs of opposite rays.
fn enumerate_vrep(dim: usize, hs: &[Halfspace]) -> Result<Option<(Vec<Vector>, Vec<Vector>)>> {
    if hs.is_empty() {
        let mut rays = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            let mut e = Vector::zeros(dim);
            e[i] = 1.0;
            rays.push(e.clone());
            rays.push(-e);
        }
        return Ok(Some((vec![Vector::zeros(dim)], rays)));
    }
    let normals: Vec<Vector> = hs.iter().map(|h| h.normal.clone()).collect();
    let row_space = orth_basis(&normals, 1e-10);
    let lineality = complement(&row_space, dim);
    let p = row_space.len();
    // reduced coordinates: x = U c with U spanning the row space
    let red: Vec<Vec<f64>> = hs
        .iter()
        .map(|h| row_space.iter().map(|u| h.normal.dot(u)).collect())
        .collect();
    let k = hs.len();
    check_budget(
        binomial(k, p) + binomial(k, p.saturating_sub(1)),
        "vertex enumeration",
    )?;

    let lift = |c: &[f64]| -> Vector {
        let mut x = Vector::zeros(dim);
        for (ci, u) in c.iter().zip(&row_space) {
            x += u * *ci;
        }
        x
    };

    let mut verts: Vec<Vec<f64>> = Vec::new();
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for subset in Combinations::new(k, p) {
        for (r, &i) in subset.iter().enumerate() {
            a[r * p..(r + 1) * p].copy_from_slice(&red[i]);
            b[r] = hs[i].offset;
        }
        let Some(c) = solve(&a, &b, p) else { continue };
        let scale = 1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let feasible = (0..k).all(|i| {
            let lhs: f64 = red[i].iter().zip(&c).map(|(x, y)| x * y).sum();
            lhs <= hs[i].offset + EPS * scale
        });
        if feasible
            && !verts
                .iter()
                .any(|v| v.iter().zip(&c).all(|(x, y)| (x - y).abs() <= 1e-9 * scale))
        {
            verts.push(c);
        }
    }
    if verts.is_empty() {
        return Ok(None);
    }

    let mut rays: Vec<Vector> = Vec::new();
    if p == 1 {
        for s in [1.0, -1.0] {
            if (0..k).all(|i| red[i][0] * s <= EPS) {
                rays.push(lift(&[s]));
            }
        }
    } else {
        for subset in Combinations::new(k, p - 1) {
            let rows: Vec<Vector> = subset
                .iter()
                .map(|&i| Vector::from_vec(red[i].clone()))
                .collect();
            let Some(dir) = orthogonal_direction(&rows, p) else {
                continue;
            };
            for s in [1.0, -1.0] {
                let r = &dir * s;
                let ok = (0..k).all(|i| {
                    let v: f64 = red[i].iter().zip(r.iter()).map(|(x, y)| x * y).sum();
                    v <= EPS
                });
                if ok {
                    rays.push(lift(r.as_slice()));
                }
            }
        }
    }
    for l in &lineality {
        rays.push(l.clone());
        rays.push(-l.clone());
    }
    let vertices: Vec<Vector> = verts.iter().map(|c| lift(c)).collect();
    Ok(Some((vertices, dedup_directions(rays))))
}

/// Extreme points of a planar point set (monotone chain). Collinear and
/// duplicate points are dropped.
fn planar_hull(mut pts: Vec<Vector>, tol: f64) -> Vec<Vector> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let cross = |o: &Vector, a: &Vector, b: &Vector| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<Vector> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= tol
        {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Vector> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= tol
        {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Facet enumeration for `conv(points) + cone(rays)`.
fn enumerate_hrep(dim: usize, points: &[Vector], rays: &[Vector]) -> Result<Vec<Halfspace>> {
    let p0 = points[0].clone();
    let mut dirs: Vec<Vector> = points.iter().skip(1).map(|p| p - &p0).collect();
    dirs.extend(rays.iter().cloned());
    let scale = scale_of(points);
    let basis = orth_basis(&dirs, 1e-10 * scale);
    let k = basis.len();
    let mut out = Vec::new();
    for n in complement(&basis, dim) {
        let off = n.dot(&p0);
        out.push(Halfspace::new(n.clone(), off)?);
        out.push(Halfspace::new(-n, -off)?);
    }
    if k == 0 {
        return Ok(out);
    }
    let coords =
        |v: &Vector| -> Vector { Vector::from_iterator(k, basis.iter().map(|b| b.dot(v))) };
    let mut pc: Vec<Vector> = points.iter().map(|p| coords(&(p - &p0))).collect();
    if k == 2 && pc.len() > 3 {
        pc = planar_hull(pc, EPS * scale);
    }
    let rc: Vec<Vector> = rays.iter().map(coords).collect();
    let tol = EPS * scale;

    let mut facets: Vec<(Vector, f64)> = Vec::new();
    let consider = |a: Vector, beta: f64, facets: &mut Vec<(Vector, f64)>| {
        if pc.iter().all(|c| a.dot(c) <= beta + tol)
            && rc.iter().all(|r| a.dot(r) <= tol)
            && !facets
                .iter()
                .any(|(b, bb)| (b - &a).amax() <= 1e-7 && (bb - beta).abs() <= 1e-7 * scale)
        {
            facets.push((a, beta));
        }
    };
    if k == 1 {
        for s in [1.0, -1.0] {
            let a = Vector::from_element(1, s);
            let beta = pc
                .iter()
                .map(|c| a.dot(c))
                .fold(f64::NEG_INFINITY, f64::max);
            consider(a, beta, &mut facets);
        }
    } else {
        let npts = pc.len();
        let total_gen = npts + rc.len();
        check_budget(
            npts as f64 * binomial(total_gen, k - 1),
            "facet enumeration",
        )?;
        for anchor in 0..npts {
            // generators other than the anchor, as directions from it
            // a facet is found from the lowest-index point on it
            let gens: Vec<Vector> = (anchor + 1..npts)
                .map(|i| &pc[i] - &pc[anchor])
                .chain(rc.iter().cloned())
                .collect();
            for subset in Combinations::new(gens.len(), k - 1) {
                let rows: Vec<Vector> = subset.iter().map(|&i| gens[i].clone()).collect();
                let Some(a) = orthogonal_direction(&rows, k) else {
                    continue;
                };
                for s in [1.0, -1.0] {
                    let aa = &a * s;
                    let beta = aa.dot(&pc[anchor]);
                    consider(aa, beta, &mut facets);
                }
            }
        }
    }
    for (a, beta) in facets {
        let mut n = Vector::zeros(dim);
        for (ai, b) in a.iter().zip(&basis) {
            n += b * *ai;
        }
        let off = beta + n.dot(&p0);
        out.push(Halfspace::new(n, off)?);
    }
    Ok(out)
}

impl Polyhedron {
    /// Builds a polyhedron from halfspaces; computes the V-representation and
    /// replaces the halfspaces by the canonical facet description.
    pub fn from_hrep(dim: usize, hs: Vec<Halfspace>) -> Result<Self> {
        if dim == 0 || dim > MAX_LIFT_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        for h in &hs {
            crate::error::check_dim(dim, h.dim())?;
        }
        match enumerate_vrep(dim, &hs)? {
            None => Ok(Self::empty(dim)),
            Some((vertices, rays)) => {
                let hrep = enumerate_hrep(dim, &vertices, &rays)?;
                Ok(Polyhedron {
                    dim,
                    hrep,
                    vertices,
                    rays,
                })
            }
        }
    }

    /// Builds `conv(vertices) + cone(rays)`. An empty vertex list yields the
    /// empty set.
    pub fn from_vrep(dim: usize, vertices: Vec<Vector>, rays: Vec<Vector>) -> Result<Self> {
        if dim == 0 || dim > MAX_LIFT_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        for v in vertices.iter().chain(&rays) {
            crate::error::check_dim(dim, v.len())?;
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::Invalid("non-finite coordinate".into()));
            }
        }
        if vertices.is_empty() {
            return Ok(Self::empty(dim));
        }
        let scale = scale_of(&vertices);
        let pts = dedup_points(vertices, 1e-10 * scale);
        let rays = dedup_directions(rays);
        let hrep = enumerate_hrep(dim, &pts, &rays)?;
        Self::from_hrep(dim, hrep)
    }

    pub fn empty(dim: usize) -> Self {
        let mut e = Vector::zeros(dim);
        e[0] = 1.0;
        Polyhedron {
            dim,
            hrep: vec![
                Halfspace {
                    normal: e.clone(),
                    offset: -1.0,
                },
                Halfspace {
                    normal: -e,
                    offset: -1.0,
                },
            ],
            vertices: Vec::new(),
            rays: Vec::new(),
        }
    }

    pub fn whole(dim: usize) -> Self {
        Self::from_hrep(dim, Vec::new()).expect("whole space")
    }

    pub fn point(p: Vector) -> Result<Self> {
        let d = p.len();
        Self::from_vrep(d, vec![p], Vec::new())
    }

    /// Axis-aligned box `center + [-half, half]^d`.
    pub fn cube(center: &Vector, half: f64) -> Result<Self> {
        let d = center.len();
        let mut hs = Vec::with_capacity(2 * d);
        for i in 0..d {
            let mut e = Vector::zeros(d);
            e[i] = 1.0;
            hs.push(Halfspace::new(e.clone(), center[i] + half)?);
            hs.push(Halfspace::new(-e, -(center[i] - half))?);
        }
        Self::from_hrep(d, hs)
    }

    /// Closed interval in `R^1`; infinite bounds are allowed.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        let mut hs = Vec::new();
        if hi.is_finite() {
            hs.push(Halfspace::new(Vector::from_element(1, 1.0), hi)?);
        }
        if lo.is_finite() {
            hs.push(Halfspace::new(Vector::from_element(1, -1.0), -lo)?);
        }
        Self::from_hrep(1, hs)
    }

    /// Cone generated by `rays` (apex at the origin).
    pub fn cone(dim: usize, rays: Vec<Vector>) -> Result<Self> {
        Self::from_vrep(dim, vec![Vector::zeros(dim)], rays)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn hrep(&self) -> &[Halfspace] {
        &self.hrep
    }
    pub fn vertices(&self) -> &[Vector] {
        &self.vertices
    }
    pub fn rays(&self) -> &[Vector] {
        &self.rays
    }
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
    pub fn is_bounded(&self) -> bool {
        self.rays.is_empty()
    }

    /// True when every vertex is the origin, i.e. the polyhedron is a cone.
    pub fn is_cone(&self) -> bool {
        !self.is_empty() && self.vertices.iter().all(|v| v.amax() <= EPS * 10.0)
    }

    pub fn contains(&self, p: &Vector, tol: f64) -> bool {
        !self.is_empty() && self.hrep.iter().all(|h| h.violation(p) <= tol)
    }

    pub fn intersect(&self, other: &Polyhedron) -> Result<Polyhedron> {
        crate::error::check_dim(self.dim, other.dim)?;
        if self.is_empty() || other.is_empty() {
            return Ok(Self::empty(self.dim));
        }
        let mut hs = self.hrep.clone();
        hs.extend(other.hrep.iter().cloned());
        Self::from_hrep(self.dim, hs)
    }

    pub fn add_halfspaces(&self, extra: &[Halfspace]) -> Result<Polyhedron> {
        if self.is_empty() {
            return Ok(self.clone());
        }
        let mut hs = self.hrep.clone();
        hs.extend(extra.iter().cloned());
        Self::from_hrep(self.dim, hs)
    }

    /// Intersects with the axis-aligned box circumscribing `ball`.
    pub fn truncate(&self, ball: &Ball) -> Result<Polyhedron> {
        crate::error::check_dim(self.dim, ball.center.len())?;
        if self.is_empty() {
            return Ok(self.clone());
        }
        self.intersect(&Self::cube(&ball.center, ball.radius)?)
    }

    /// Euclidean projection of `p`, found by enumerating active sets and
    /// keeping the first one that satisfies the KKT conditions.
    pub fn project(&self, p: &Vector) -> Option<Vector> {
        if self.is_empty() {
            return None;
        }
        if self.dim == 1 {
            let (lo, hi) = self.interval_bounds();
            return Some(Vector::from_element(1, p[0].clamp(lo, hi)));
        }
        let k = self.hrep.len();
        let viol: Vec<f64> = self.hrep.iter().map(|h| h.violation(p)).collect();
        let tol = EPS * (1.0 + p.amax());
        if viol.iter().all(|&v| v <= tol) {
            return Some(p.clone());
        }
        let d = self.dim;
        let mut best: Option<(f64, Vector)> = None;
        for s in 1..=d.min(k) {
            for subset in Combinations::new(k, s) {
                // gram matrix of the active normals
                let mut g = vec![0.0; s * s];
                let mut rhs = vec![0.0; s];
                for (r, &i) in subset.iter().enumerate() {
                    for (c, &j) in subset.iter().enumerate() {
                        g[r * s + c] = self.hrep[i].normal.dot(&self.hrep[j].normal);
                    }
                    rhs[r] = viol[i];
                }
                let Some(lambda) = solve(&g, &rhs, s) else {
                    continue;
                };
                let mut x = p.clone();
                for (l, &i) in lambda.iter().zip(&subset) {
                    x -= &self.hrep[i].normal * *l;
                }
                let xtol = EPS * (1.0 + x.amax()) * 10.0;
                if !self.hrep.iter().all(|h| h.violation(&x) <= xtol) {
                    continue;
                }
                if lambda.iter().all(|&l| l >= -1e-12) {
                    return Some(x);
                }
                let dist = (&x - p).norm();
                if best.as_ref().is_none_or(|(b, _)| dist < *b) {
                    best = Some((dist, x));
                }
            }
        }
        best.map(|(_, x)| x)
    }

    pub fn dist(&self, p: &Vector) -> f64 {
        match self.project(p) {
            Some(x) => (x - p).norm(),
            None => f64::INFINITY,
        }
    }

    /// `(min, max)` of a one-dimensional polyhedron, with infinities for rays.
    pub fn interval_bounds(&self) -> (f64, f64) {
        debug_assert_eq!(self.dim, 1);
        let mut lo = self
            .vertices
            .iter()
            .map(|v| v[0])
            .fold(f64::INFINITY, f64::min);
        let mut hi = self
            .vertices
            .iter()
            .map(|v| v[0])
            .fold(f64::NEG_INFINITY, f64::max);
        for r in &self.rays {
            if r[0] > EPS {
                hi = f64::INFINITY;
            }
            if r[0] < -EPS {
                lo = f64::NEG_INFINITY;
            }
        }
        (lo, hi)
    }

    /// `sup <u, x>` over the polyhedron; `+inf` along a recession direction and
    /// `-inf` for the empty set.
    pub fn support(&self, u: &Vector) -> f64 {
        if self.is_empty() {
            return f64::NEG_INFINITY;
        }
        if self.rays.iter().any(|r| u.dot(r) > EPS) {
            return f64::INFINITY;
        }
        self.vertices
            .iter()
            .map(|v| u.dot(v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn minkowski(&self, other: &Polyhedron) -> Result<Polyhedron> {
        crate::error::check_dim(self.dim, other.dim)?;
        if self.is_empty() || other.is_empty() {
            return Ok(Self::empty(self.dim));
        }
        let mut verts = Vec::with_capacity(self.vertices.len() * other.vertices.len());
        for a in &self.vertices {
            for b in &other.vertices {
                verts.push(a + b);
            }
        }
        let mut rays = self.rays.clone();
        rays.extend(other.rays.iter().cloned());
        Self::from_vrep(self.dim, verts, rays)
    }

    pub fn translate(&self, t: &Vector) -> Result<Polyhedron> {
        crate::error::check_dim(self.dim, t.len())?;
        if self.is_empty() {
            return Ok(self.clone());
        }
        Ok(Polyhedron {
            dim: self.dim,
            hrep: self
                .hrep
                .iter()
                .map(|h| Halfspace {
                    normal: h.normal.clone(),
                    offset: h.offset + h.normal.dot(t),
                })
                .collect(),
            vertices: self.vertices.iter().map(|v| v + t).collect(),
            rays: self.rays.clone(),
        })
    }

    /// The reflection `-P`.
    pub fn negated(&self) -> Polyhedron {
        Polyhedron {
            dim: self.dim,
            hrep: self
                .hrep
                .iter()
                .map(|h| Halfspace {
                    normal: -&h.normal,
                    offset: h.offset,
                })
                .collect(),
            vertices: self.vertices.iter().map(|v| -v).collect(),
            rays: self.rays.iter().map(|r| -r).collect(),
        }
    }

    /// Dilation `s P` for `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Polyhedron> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Invalid(format!(
                "scale factor must be positive, got {s}"
            )));
        }
        if self.is_empty() {
            return Ok(self.clone());
        }
        Ok(Polyhedron {
            dim: self.dim,
            hrep: self
                .hrep
                .iter()
                .map(|h| Halfspace {
                    normal: h.normal.clone(),
                    offset: h.offset * s,
                })
                .collect(),
            vertices: self.vertices.iter().map(|v| v * s).collect(),
            rays: self.rays.clone(),
        })
    }

    /// Image under the linear map `m` (rows = output dimension).
    pub fn linear_image(&self, m: &nalgebra::DMatrix<f64>) -> Result<Polyhedron> {
        crate::error::check_dim(self.dim, m.ncols())?;
        if self.is_empty() {
            return Ok(Self::empty(m.nrows()));
        }
        let verts = self.vertices.iter().map(|v| m * v).collect();
        let rays = self.rays.iter().map(|r| m * r).collect();
        Self::from_vrep(m.nrows(), verts, rays)
    }

    /// `{y : (x, y) in P}` where `x` fixes the leading coordinates.
    pub fn slice_prefix(&self, x: &Vector) -> Result<Polyhedron> {
        let n = x.len();
        if n >= self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim - 1,
                got: n,
            });
        }
        let m = self.dim - n;
        if self.is_empty() {
            return Ok(Self::empty(m));
        }
        let mut hs = Vec::with_capacity(self.hrep.len());
        for h in &self.hrep {
            let ax: f64 = (0..n).map(|i| h.normal[i] * x[i]).sum();
            let ay = Vector::from_iterator(m, (n..self.dim).map(|i| h.normal[i]));
            let rhs = h.offset - ax;
            if ay.norm() <= 1e-12 {
                if rhs < -EPS * (1.0 + x.amax()) {
                    return Ok(Self::empty(m));
                }
                continue;
            }
            hs.push(Halfspace::new(ay, rhs)?);
        }
        Self::from_hrep(m, hs)
    }

    /// Coordinate projection onto `coords` (in the given order).
    pub fn project_coords(&self, coords: &[usize]) -> Result<Polyhedron> {
        let d = coords.len();
        if self.is_empty() {
            return Ok(Self::empty(d));
        }
        let pick = |v: &Vector| Vector::from_iterator(d, coords.iter().map(|&i| v[i]));
        let verts = self.vertices.iter().map(pick).collect();
        let rays = self.rays.iter().map(pick).collect();
        Self::from_vrep(d, verts, rays)
    }

    /// Reorders coordinates: new coordinate `i` is old coordinate `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Polyhedron> {
        crate::error::check_dim(self.dim, perm.len())?;
        if self.is_empty() {
            return Ok(self.clone());
        }
        let pick = |v: &Vector| Vector::from_iterator(v.len(), perm.iter().map(|&i| v[i]));
        Ok(Polyhedron {
            dim: self.dim,
            hrep: self
                .hrep
                .iter()
                .map(|h| Halfspace {
                    normal: pick(&h.normal),
                    offset: h.offset,
                })
                .collect(),
            vertices: self.vertices.iter().map(pick).collect(),
            rays: self.rays.iter().map(pick).collect(),
        })
    }

    /// Embeds into a larger space: coordinate `i` of `self` becomes
    /// coordinate `slots[i]`; the remaining coordinates are free.
    pub(crate) fn lift_constraints(&self, total: usize, slots: &[usize]) -> Vec<Halfspace> {
        self.hrep
            .iter()
            .map(|h| {
                let mut n = Vector::zeros(total);
                for (i, &s) in slots.iter().enumerate() {
                    n[s] = h.normal[i];
                }
                Halfspace {
                    normal: n,
                    offset: h.offset,
                }
            })
            .collect()
    }

    /// Indices of halfspaces active at `p`.
    pub fn active_set(&self, p: &Vector, tol: f64) -> Vec<usize> {
        self.hrep
            .iter()
            .enumerate()
            .filter(|(_, h)| h.violation(p).abs() <= tol)
            .map(|(i, _)| i)
            .collect()
    }

    /// Vertices, points along edges and a few interior points. Only the
    /// vertices and bounded edges are covered for unbounded polyhedra.
    pub fn sample_points(&self, per_edge: usize) -> Vec<Vector> {
        let mut out = self.vertices.clone();
        let nv = self.vertices.len();
        if nv < 2 {
            return out;
        }
        let tol = EPS * scale_of(&self.vertices) * 10.0;
        let tight: Vec<Vec<usize>> = self
            .vertices
            .iter()
            .map(|v| self.active_set(v, tol))
            .collect();
        for i in 0..nv {
            for j in i + 1..nv {
                let common: Vec<Vector> = tight[i]
                    .iter()
                    .filter(|k| tight[j].contains(k))
                    .map(|&k| self.hrep[k].normal.clone())
                    .collect();
                if orth_basis(&common, 1e-9).len() + 1 != self.dim {
                    continue;
                }
                for s in 1..=per_edge {
                    let t = s as f64 / (per_edge + 1) as f64;
                    out.push(&self.vertices[i] * (1.0 - t) + &self.vertices[j] * t);
                }
            }
        }
        if nv > 2 {
            let c = self
                .vertices
                .iter()
                .fold(Vector::zeros(self.dim), |a, v| a + v)
                / nv as f64;
            for v in &self.vertices {
                out.push((&c + v) * 0.5);
            }
            out.push(c);
        }
        out
    }

    /// Structural equality up to tolerance: same vertex set and ray set.
    pub fn approx_eq(&self, other: &Polyhedron, tol: f64) -> bool {
        if self.dim != other.dim || self.is_empty() != other.is_empty() {
            return false;
        }
        let same = |a: &[Vector], b: &[Vector]| {
            a.len() == b.len() && a.iter().all(|x| b.iter().any(|y| (x - y).amax() <= tol))
        };
        let recedes = |p: &Polyhedron, r: &Vector| p.hrep.iter().all(|h| h.normal.dot(r) <= tol);
        same(&self.vertices, &other.vertices)
            && self.rays.iter().all(|r| recedes(other, r))
            && other.rays.iter().all(|r| recedes(self, r))
    }
}

#[derive(Serialize, Deserialize)]
struct VrepJson {
    vertices: Vec<Vec<f64>>,
    #[serde(default)]
    rays: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PolyhedronJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<VrepJson>,
}

fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

impl Serialize for Polyhedron {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let h = self
            .hrep
            .iter()
            .map(|hs| {
                let mut row = to_vec(&hs.normal);
                row.push(hs.offset);
                row
            })
            .collect();
        PolyhedronJson {
            dim: Some(self.dim),
            h: Some(h),
            v: Some(VrepJson {
                vertices: self.vertices.iter().map(to_vec).collect(),
                rays: self.rays.iter().map(to_vec).collect(),
            }),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polyhedron {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = PolyhedronJson::deserialize(d)?;
        let build = || -> Result<Polyhedron> {
            if let Some(h) = &j.h {
                let dim = match (j.dim, h.first()) {
                    (Some(d), _) => d,
                    (None, Some(row)) if row.len() >= 2 => row.len() - 1,
                    _ => {
                        return Err(Error::Invalid(
                            "cannot infer dimension from empty \"h\"".into(),
                        ))
                    }
                };
                let mut hs = Vec::with_capacity(h.len());
                for row in h {
                    if row.len() != dim + 1 {
                        return Err(Error::DimensionMismatch {
                            expected: dim + 1,
                            got: row.len(),
                        });
                    }
                    hs.push(Halfspace::new(
                        Vector::from_column_slice(&row[..dim]),
                        row[dim],
                    )?);
                }
                return Polyhedron::from_hrep(dim, hs);
            }
            if let Some(v) = &j.v {
                let dim = match (j.dim, v.vertices.first()) {
                    (Some(d), _) => d,
                    (None, Some(p)) => p.len(),
                    _ => {
                        return Err(Error::Invalid(
                            "cannot infer dimension from empty \"v\"".into(),
                        ))
                    }
                };
                let verts = v
                    .vertices
                    .iter()
                    .map(|p| Vector::from_column_slice(p))
                    .collect();
                let rays = v
                    .rays
                    .iter()
                    .map(|p| Vector::from_column_slice(p))
                    .collect();
                return Polyhedron::from_vrep(dim, verts, rays);
            }
            Err(Error::Invalid("polyhedron needs \"h\" or \"v\"".into()))
        };
        build().map_err(D::Error::custom)
    }
}

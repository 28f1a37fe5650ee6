//! Positively homogeneous set-valued maps `T: R^n => R^m`.
//!
//! A map is a finite union of parts. Each part is a polyhedral (or linear)
//! core plus an exact Euclidean inflation `radius * |w| * B`, so that
//! `(T + delta)` never has to be polyhedralized when distances are measured.
//! Polyhedral balls are only introduced when a part has to be turned into a
//! cone graph (composition, sums of non-linear parts); the map then carries
//! `approximate = true`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geom::{
    check_exact_dim, compose_graphs, polyball, polyball_overshoot, sum_graphs, unit_directions,
    Halfspace, Polyhedron, Region, Vector,
};

pub type Matrix = DMatrix<f64>;

/// Cap on the number of cone pieces produced by one composition or sum.
pub const MAX_PIECES: usize = 10_000;

#[derive(Clone, Debug)]
pub enum Rep {
    /// `w -> {0}`.
    Zero,
    /// `w -> conv{A_1 w, ..., A_k w}`.
    Bundle(Vec<Matrix>),
    /// Graph given as a union of polyhedral cones in `R^(n+m)`.
    Cone(Vec<Polyhedron>),
}

#[derive(Clone, Debug)]
pub struct Part {
    pub rep: Rep,
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct HomogMap {
    dim_in: usize,
    dim_out: usize,
    parts: Vec<Part>,
    approximate: bool,
}

/// Outcome of a sampled containment test `T_small(w) ⊆ T_big(w)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Containment {
    pub holds: bool,
    pub directions_checked: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_direction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_point: Option<Vec<f64>>,
}

fn identity_block(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

fn subspace_graph(a: &Matrix) -> Result<Polyhedron> {
    // {(w, y) : y = A w}
    let (m, n) = (a.nrows(), a.ncols());
    let mut hs = Vec::with_capacity(2 * m);
    for i in 0..m {
        let mut row = Vector::zeros(n + m);
        for j in 0..n {
            row[j] = -a[(i, j)];
        }
        row[n + i] = 1.0;
        hs.push(Halfspace::new(row.clone(), 0.0)?);
        hs.push(Halfspace::new(-row, 0.0)?);
    }
    Polyhedron::from_hrep(n + m, hs)
}

fn concat(a: &Vector, b: &Vector) -> Vector {
    Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// Graph of `w -> r |w| B` as cone pieces, with a flag telling whether the
/// pieces are exact. Exact only when both sides are one-dimensional.
fn ball_cone_pieces(n: usize, m: usize, r: f64) -> Result<(Vec<Polyhedron>, bool)> {
    check_exact_dim(m)?;
    let ball = polyball(&Vector::zeros(m), 1.0)?;
    if n == 1 {
        let mut out = Vec::with_capacity(2);
        for s in [1.0, -1.0] {
            let rays = ball
                .vertices()
                .iter()
                .map(|y| concat(&Vector::from_element(1, s), &(y * r)))
                .collect();
            out.push(Polyhedron::cone(1 + m, rays)?);
        }
        return Ok((out, m == 1));
    }
    check_exact_dim(n)?;
    // inscribed polytope in the w-space: its gauge dominates |w|
    let factor = polyball_overshoot(n)?;
    let q = polyball(&Vector::zeros(n), 1.0 / factor)?;
    let tol = 1e-9;
    let mut out = Vec::new();
    for h in q.hrep() {
        let face: Vec<&Vector> = q
            .vertices()
            .iter()
            .filter(|v| h.violation(v).abs() <= tol)
            .collect();
        let mut rays = Vec::with_capacity(face.len() * ball.vertices().len());
        for v in &face {
            for y in ball.vertices() {
                rays.push(concat(v, &(y * r)));
            }
        }
        out.push(Polyhedron::cone(n + m, rays)?);
    }
    Ok((out, false))
}

fn rep_cone_pieces(rep: &Rep, n: usize, m: usize) -> Result<Vec<Polyhedron>> {
    match rep {
        Rep::Zero => Ok(vec![subspace_graph(&Matrix::zeros(m, n))?]),
        Rep::Bundle(ms) if ms.len() == 1 => Ok(vec![subspace_graph(&ms[0])?]),
        Rep::Bundle(ms) if n == 1 => {
            let mut out = Vec::with_capacity(2);
            for s in [1.0, -1.0] {
                let rays = ms
                    .iter()
                    .map(|a| concat(&Vector::from_element(1, s), &(a.column(0).into_owned() * s)))
                    .collect();
                out.push(Polyhedron::cone(1 + m, rays)?);
            }
            Ok(out)
        }
        Rep::Bundle(_) => Err(Error::NotRepresentable(
            "a bundle of several matrices on R^n, n > 1, has a non-polyhedral graph".into(),
        )),
        Rep::Cone(ps) => Ok(ps.clone()),
    }
}

fn check_piece_budget(count: usize) -> Result<()> {
    if count > MAX_PIECES {
        return Err(Error::ComplexityBudgetExceeded(format!("{count} cone pieces")));
    }
    Ok(())
}

fn compose_cones(k2: &[Polyhedron], k1: &[Polyhedron], n: usize, m: usize, p: usize) -> Result<Vec<Polyhedron>> {
    check_piece_budget(k1.len() * k2.len())?;
    compose_graphs(k2, k1, n, m, p)
}

fn sum_cones(k1: &[Polyhedron], k2: &[Polyhedron], n: usize, m: usize) -> Result<Vec<Polyhedron>> {
    check_piece_budget(k1.len() * k2.len())?;
    sum_graphs(k1, k2, n, m)
}

/// `c` with `B^T B = c^2 I` for a square `B`, if any.
fn conformal_factor(b: &Matrix) -> Option<f64> {
    if b.nrows() != b.ncols() {
        return None;
    }
    let g = b.transpose() * b;
    let c2 = g[(0, 0)];
    let n = g.nrows();
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { c2 } else { 0.0 };
            if (g[(i, j)] - target).abs() > 1e-12 * (1.0 + c2) {
                return None;
            }
        }
    }
    Some(c2.max(0.0).sqrt())
}

fn map_graph_output(pieces: &[Polyhedron], n: usize, b: &Matrix) -> Result<Vec<Polyhedron>> {
    let (p, m) = (b.nrows(), b.ncols());
    let mut blk = Matrix::zeros(n + p, n + m);
    for i in 0..n {
        blk[(i, i)] = 1.0;
    }
    blk.view_mut((n, n), (p, m)).copy_from(b);
    pieces.iter().map(|q| q.linear_image(&blk)).collect()
}

impl Part {
    fn rep_value(&self, w: &Vector, m: usize) -> Result<Region> {
        match &self.rep {
            Rep::Zero => Region::point(Vector::zeros(m)),
            Rep::Bundle(ms) => {
                let pts = ms.iter().map(|a| a * w).collect();
                Ok(Region::single(Polyhedron::from_vrep(m, pts, Vec::new())?))
            }
            Rep::Cone(ps) => {
                let slices = ps
                    .iter()
                    .map(|p| p.slice_prefix(w))
                    .collect::<Result<Vec<_>>>()?;
                Region::new(m, slices)
            }
        }
    }

    fn to_cones(&self, n: usize, m: usize) -> Result<(Vec<Polyhedron>, bool)> {
        if self.radius <= 0.0 {
            return Ok((rep_cone_pieces(&self.rep, n, m)?, true));
        }
        let (ball, exact) = ball_cone_pieces(n, m, self.radius)?;
        if matches!(self.rep, Rep::Zero) {
            return Ok((ball, exact));
        }
        let base = rep_cone_pieces(&self.rep, n, m)?;
        Ok((sum_cones(&base, &ball, n, m)?, exact))
    }
}

impl HomogMap {
    fn from_parts(dim_in: usize, dim_out: usize, parts: Vec<Part>, approximate: bool) -> Self {
        HomogMap {
            dim_in,
            dim_out,
            parts,
            approximate,
        }
    }

    /// Flags the map as carrying a polyhedral ball approximation.
    pub(crate) fn with_approximation(mut self, approximate: bool) -> Self {
        self.approximate |= approximate;
        self
    }

    pub fn zero(dim_in: usize, dim_out: usize) -> Self {
        Self::from_parts(
            dim_in,
            dim_out,
            vec![Part {
                rep: Rep::Zero,
                radius: 0.0,
            }],
            false,
        )
    }

    /// `w -> kappa |w| B`.
    pub fn ball(dim_in: usize, dim_out: usize, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::Invalid(format!(
                "ball modulus must be finite and nonnegative, got {kappa}"
            )));
        }
        Ok(Self::from_parts(
            dim_in,
            dim_out,
            vec![Part {
                rep: Rep::Zero,
                radius: kappa,
            }],
            false,
        ))
    }

    pub fn linear(a: Matrix) -> Self {
        let (m, n) = (a.nrows(), a.ncols());
        Self::from_parts(
            n,
            m,
            vec![Part {
                rep: Rep::Bundle(vec![a]),
                radius: 0.0,
            }],
            false,
        )
    }

    pub fn identity(n: usize) -> Self {
        Self::linear(identity_block(n))
    }

    pub fn bundle(matrices: Vec<Matrix>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::Invalid("empty matrix bundle".into()))?;
        let (m, n) = (first.nrows(), first.ncols());
        for a in &matrices {
            check_dim(m, a.nrows())?;
            check_dim(n, a.ncols())?;
        }
        Ok(Self::from_parts(
            n,
            m,
            vec![Part {
                rep: Rep::Bundle(matrices),
                radius: 0.0,
            }],
            false,
        ))
    }

    /// Map whose graph is the union of the given cones in `R^(n+m)`.
    pub fn cone_graph(dim_in: usize, dim_out: usize, pieces: Vec<Polyhedron>) -> Result<Self> {
        for p in &pieces {
            check_dim(dim_in + dim_out, p.dim())?;
            if !p.is_empty() && !p.is_cone() {
                return Err(Error::Invalid(
                    "cone graph pieces must have the origin as their only vertex".into(),
                ));
            }
        }
        let pieces = pieces.into_iter().filter(|p| !p.is_empty()).collect();
        Ok(Self::from_parts(
            dim_in,
            dim_out,
            vec![Part {
                rep: Rep::Cone(pieces),
                radius: 0.0,
            }],
            false,
        ))
    }

    /// Cone graph generated by explicit ray lists, one list per piece.
    pub fn from_rays(dim_in: usize, dim_out: usize, pieces: &[Vec<Vec<f64>>]) -> Result<Self> {
        let d = dim_in + dim_out;
        let ps = pieces
            .iter()
            .map(|rays| {
                Polyhedron::cone(
                    d,
                    rays.iter().map(|r| Vector::from_column_slice(r)).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::cone_graph(dim_in, dim_out, ps)
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }
    pub fn dim_out(&self) -> usize {
        self.dim_out
    }
    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    /// True when some construction step replaced a Euclidean ball by its
    /// polyhedral over-approximation.
    pub fn is_approximate(&self) -> bool {
        self.approximate
    }

    /// `(T + delta)`.
    pub fn inflate(&self, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::Invalid(format!(
                "inflation must be nonnegative, got {delta}"
            )));
        }
        let parts = self
            .parts
            .iter()
            .map(|p| Part {
                rep: p.rep.clone(),
                radius: p.radius + delta,
            })
            .collect();
        Ok(Self::from_parts(
            self.dim_in,
            self.dim_out,
            parts,
            self.approximate,
        ))
    }

    /// Per part: the polyhedral core `R(w)` and the inflation radius at `w`.
    pub fn eval_parts(&self, w: &Vector) -> Result<Vec<(Region, f64)>> {
        check_dim(self.dim_in, w.len())?;
        let nw = w.norm();
        self.parts
            .iter()
            .map(|p| Ok((p.rep_value(w, self.dim_out)?, p.radius * nw)))
            .collect()
    }

    /// `T(w)` as a region; inflations use the circumscribed polyhedral ball.
    pub fn eval(&self, w: &Vector) -> Result<Region> {
        let mut out = Region::empty(self.dim_out);
        for (core, rho) in self.eval_parts(w)? {
            let v = if rho > 0.0 && !core.is_empty() {
                core.minkowski_sum(&Region::single(polyball(
                    &Vector::zeros(self.dim_out),
                    rho,
                )?))?
            } else {
                core
            };
            out = out.union(&v)?;
        }
        Ok(out)
    }

    /// Exact Euclidean distance from `y` to `T(w)`.
    pub fn dist_to_value(&self, w: &Vector, y: &Vector) -> Result<f64> {
        check_dim(self.dim_out, y.len())?;
        let mut best = f64::INFINITY;
        for (core, rho) in self.eval_parts(w)? {
            if core.is_empty() {
                continue;
            }
            best = best.min((core.dist(y)? - rho).max(0.0));
        }
        Ok(best)
    }

    /// `w -> -T(-w)`.
    pub fn reflect(&self) -> Self {
        let parts = self
            .parts
            .iter()
            .map(|p| {
                let rep = match &p.rep {
                    Rep::Cone(ps) => Rep::Cone(ps.iter().map(|q| q.negated()).collect()),
                    other => other.clone(),
                };
                Part {
                    rep,
                    radius: p.radius,
                }
            })
            .collect();
        Self::from_parts(self.dim_in, self.dim_out, parts, self.approximate)
    }

    /// `w -> T(-w)`.
    pub fn neg_arg(&self) -> Result<Self> {
        let (n, m) = (self.dim_in, self.dim_out);
        let mut flip = Matrix::identity(n + m, n + m);
        for i in 0..n {
            flip[(i, i)] = -1.0;
        }
        let parts = self
            .parts
            .iter()
            .map(|p| {
                let rep = match &p.rep {
                    Rep::Zero => Rep::Zero,
                    Rep::Bundle(ms) => Rep::Bundle(ms.iter().map(|a| -a).collect()),
                    Rep::Cone(ps) => Rep::Cone(
                        ps.iter()
                            .map(|q| q.linear_image(&flip))
                            .collect::<Result<Vec<_>>>()?,
                    ),
                };
                Ok(Part {
                    rep,
                    radius: p.radius,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_parts(n, m, parts, self.approximate))
    }

    /// Whether `T(0) = {0}`.
    pub fn trivial_at_zero(&self) -> Result<bool> {
        let z = Vector::zeros(self.dim_in);
        for (core, _) in self.eval_parts(&z)? {
            for p in &core.pieces {
                if !p.is_bounded() || p.vertices().iter().any(|v| v.norm() > 1e-9) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// `sup { |y| : y in T(w), |w| <= 1 }`.
    ///
    /// Exact for bundles (spectral norms) and for one-dimensional inputs; for
    /// cone graphs over `R^n`, `n >= 2`, the supremum is taken over a dense
    /// set of directions together with the normalized generating rays.
    pub fn outer_norm(&self) -> Result<f64> {
        if !self.trivial_at_zero()? {
            return Ok(f64::INFINITY);
        }
        let mut best: f64 = 0.0;
        for p in &self.parts {
            let core = match &p.rep {
                Rep::Zero => 0.0,
                Rep::Bundle(ms) => ms
                    .iter()
                    .map(|a| a.clone().svd(false, false).singular_values.max())
                    .fold(0.0, f64::max),
                Rep::Cone(ps) => {
                    let n = self.dim_in;
                    let count = match n {
                        1 => 0,
                        2 => 3600,
                        _ => 4000,
                    };
                    let mut s: f64 = 0.0;
                    for w in unit_directions(n, count) {
                        let v = p.rep_value(&w, self.dim_out)?;
                        for q in &v.pieces {
                            for x in q.vertices() {
                                s = s.max(x.norm());
                            }
                        }
                    }
                    for q in ps {
                        for r in q.rays() {
                            let w = r.rows(0, n).norm();
                            if w > 1e-12 {
                                s = s.max(r.rows(n, self.dim_out).norm() / w);
                            }
                        }
                    }
                    s
                }
            };
            best = best.max(core + p.radius);
        }
        Ok(best)
    }

    fn require_same_dims(&self, other: &HomogMap) -> Result<()> {
        check_dim(self.dim_in, other.dim_in)?;
        check_dim(self.dim_out, other.dim_out)
    }

    /// Pointwise union.
    pub fn union(maps: &[HomogMap]) -> Result<HomogMap> {
        let first = maps
            .first()
            .ok_or_else(|| Error::Invalid("union of no maps".into()))?;
        let mut parts = Vec::new();
        let mut approx = false;
        for t in maps {
            first.require_same_dims(t)?;
            parts.extend(t.parts.iter().cloned());
            approx |= t.approximate;
        }
        Ok(Self::from_parts(first.dim_in, first.dim_out, parts, approx))
    }

    fn sum_parts(a: &Part, b: &Part, n: usize, m: usize) -> Result<(Part, bool)> {
        let radius = a.radius + b.radius;
        let rep = match (&a.rep, &b.rep) {
            (Rep::Zero, x) | (x, Rep::Zero) => x.clone(),
            (Rep::Bundle(xs), Rep::Bundle(ys)) => {
                let mut out = Vec::with_capacity(xs.len() * ys.len());
                for x in xs {
                    for y in ys {
                        out.push(x + y);
                    }
                }
                Rep::Bundle(out)
            }
            (x, y) => {
                let kx = rep_cone_pieces(x, n, m)?;
                let ky = rep_cone_pieces(y, n, m)?;
                Rep::Cone(sum_cones(&kx, &ky, n, m)?)
            }
        };
        Ok((Part { rep, radius }, false))
    }

    /// Pointwise Minkowski sum.
    pub fn sum(maps: &[HomogMap]) -> Result<HomogMap> {
        let first = maps
            .first()
            .ok_or_else(|| Error::Invalid("sum of no maps".into()))?;
        let (n, m) = (first.dim_in, first.dim_out);
        let mut acc = first.clone();
        for t in &maps[1..] {
            acc.require_same_dims(t)?;
            let mut parts = Vec::with_capacity(acc.parts.len() * t.parts.len());
            let mut approx = acc.approximate || t.approximate;
            for a in &acc.parts {
                for b in &t.parts {
                    let (p, ap) = Self::sum_parts(a, b, n, m)?;
                    approx |= ap;
                    parts.push(p);
                }
            }
            acc = Self::from_parts(n, m, parts, approx);
            acc.check_budget()?;
        }
        Ok(acc)
    }

    fn check_budget(&self) -> Result<()> {
        let pieces: usize = self
            .parts
            .iter()
            .map(|p| match &p.rep {
                Rep::Cone(ps) => ps.len(),
                Rep::Bundle(ms) => ms.len(),
                Rep::Zero => 1,
            })
            .sum();
        check_piece_budget(pieces)
    }

    /// `p2 ∘ p1` for single parts; the flag is false when a polyhedral ball
    /// replaced a Euclidean one.
    fn compose_parts(p2: &Part, p1: &Part, n: usize, m: usize, p: usize) -> Result<(Part, bool)> {
        match (&p2.rep, &p1.rep) {
            (Rep::Zero, Rep::Zero) => {
                return Ok((
                    Part {
                        rep: Rep::Zero,
                        radius: p1.radius * p2.radius,
                    },
                    true,
                ));
            }
            (Rep::Zero, _) if p2.radius == 0.0 => {
                return Ok((
                    Part {
                        rep: Rep::Zero,
                        radius: 0.0,
                    },
                    true,
                ));
            }
            (Rep::Bundle(bs), Rep::Bundle(as_)) if p1.radius == 0.0 && p2.radius == 0.0 => {
                let mut out = Vec::with_capacity(as_.len() * bs.len());
                for b in bs {
                    for a in as_ {
                        out.push(b * a);
                    }
                }
                return Ok((
                    Part {
                        rep: Rep::Bundle(out),
                        radius: 0.0,
                    },
                    true,
                ));
            }
            _ => {}
        }
        if let Rep::Bundle(bs) = &p2.rep {
            if bs.len() == 1 && p2.radius == 0.0 {
                let b = &bs[0];
                let scale = if p1.radius > 0.0 {
                    conformal_factor(b)
                } else {
                    Some(0.0)
                };
                if let Some(c) = scale {
                    let rep = match &p1.rep {
                        Rep::Zero => Rep::Zero,
                        Rep::Bundle(as_) => Rep::Bundle(as_.iter().map(|a| b * a).collect()),
                        Rep::Cone(ps) => Rep::Cone(map_graph_output(ps, n, b)?),
                    };
                    return Ok((
                        Part {
                            rep,
                            radius: c * p1.radius,
                        },
                        true,
                    ));
                }
            }
        }
        let (k1, e1) = p1.to_cones(n, m)?;
        let (k2, e2) = p2.to_cones(m, p)?;
        let pieces = compose_cones(&k2, &k1, n, m, p)?;
        Ok((
            Part {
                rep: Rep::Cone(pieces),
                radius: 0.0,
            },
            e1 && e2,
        ))
    }

    /// `w -> T2(T1(w))`.
    pub fn compose(t2: &HomogMap, t1: &HomogMap) -> Result<HomogMap> {
        check_dim(t1.dim_out, t2.dim_in)?;
        let (n, m, p) = (t1.dim_in, t1.dim_out, t2.dim_out);
        let mut parts = Vec::with_capacity(t1.parts.len() * t2.parts.len());
        let mut approx = t1.approximate || t2.approximate;
        for b in &t2.parts {
            for a in &t1.parts {
                let (part, exact) = Self::compose_parts(b, a, n, m, p)?;
                approx |= !exact;
                parts.push(part);
            }
        }
        let out = Self::from_parts(n, p, parts, approx);
        out.check_budget()?;
        Ok(out)
    }

    /// Pointwise intersection `w -> T1(w) ∩ T2(w)`.
    pub fn intersect(a: &HomogMap, b: &HomogMap) -> Result<HomogMap> {
        a.require_same_dims(b)?;
        let (n, m) = (a.dim_in, a.dim_out);
        let mut pieces = Vec::new();
        let mut approx = a.approximate || b.approximate;
        for pa in &a.parts {
            let (ka, ea) = pa.to_cones(n, m)?;
            for pb in &b.parts {
                let (kb, eb) = pb.to_cones(n, m)?;
                approx |= !(ea && eb);
                for x in &ka {
                    for y in &kb {
                        let z = x.intersect(y)?;
                        if !z.is_empty() {
                            pieces.push(z);
                        }
                    }
                }
            }
        }
        check_piece_budget(pieces.len())?;
        let mut out = Self::cone_graph(n, m, pieces)?;
        out.approximate = approx;
        Ok(out)
    }

    /// The whole map as cone pieces in `R^(n+m)`, plus an exactness flag.
    pub fn to_cone_graph(&self) -> Result<(Vec<Polyhedron>, bool)> {
        let mut out = Vec::new();
        let mut exact = !self.approximate;
        for p in &self.parts {
            let (k, e) = p.to_cones(self.dim_in, self.dim_out)?;
            exact &= e;
            out.extend(k);
        }
        Ok((out, exact))
    }

    /// Sampled test of `small(w) ⊆ big(w)` over `n_dirs` unit directions
    /// (coordinate axes first) and `w = 0`.
    pub fn contains(big: &HomogMap, small: &HomogMap, n_dirs: usize) -> Result<Containment> {
        big.require_same_dims(small)?;
        let n = big.dim_in;
        let mut dirs = vec![Vector::zeros(n)];
        dirs.extend(unit_directions(n, n_dirs));
        let circle = unit_directions(small.dim_out, 16);
        let mut checked = 0;
        for w in &dirs {
            checked += 1;
            let reach = 10.0 * (1.0 + w.norm());
            let trunc = crate::geom::Ball::centered(small.dim_out, reach)?;
            for (core, rho) in small.eval_parts(w)? {
                let core = if core.is_bounded() {
                    core
                } else {
                    core.truncate(&trunc)?
                };
                for p in &core.pieces {
                    let mut pts = p.sample_points(2);
                    if rho > 0.0 {
                        let base = pts.clone();
                        for b in &base {
                            for u in &circle {
                                pts.push(b + u * rho);
                            }
                        }
                    }
                    for q in pts {
                        let d = big.dist_to_value(w, &q)?;
                        if d > 1e-7 * (1.0 + q.norm()) {
                            return Ok(Containment {
                                holds: false,
                                directions_checked: checked,
                                witness_direction: Some(w.iter().copied().collect()),
                                witness_point: Some(q.iter().copied().collect()),
                            });
                        }
                    }
                }
            }
        }
        Ok(Containment {
            holds: true,
            directions_checked: checked,
            witness_direction: None,
            witness_point: None,
        })
    }

    /// Midpoint test of convexity of `T(w)` on sampled unit directions.
    /// Returns the first direction where a midpoint leaves the value.
    pub fn convexity_violation(&self, n_dirs: usize) -> Result<Option<Vector>> {
        let trunc = crate::geom::Ball::centered(self.dim_out, 20.0)?;
        for w in unit_directions(self.dim_in, n_dirs) {
            let parts = self.eval_parts(&w)?;
            let mut pts = Vec::new();
            for (core, rho) in &parts {
                let core = if core.is_bounded() {
                    core.clone()
                } else {
                    core.truncate(&trunc)?
                };
                for p in &core.pieces {
                    for x in p.sample_points(1) {
                        pts.push(x.clone());
                        for u in unit_directions(self.dim_out, 8) {
                            pts.push(&x + u * *rho);
                        }
                    }
                }
            }
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    let mid = (&pts[i] + &pts[j]) * 0.5;
                    if self.dist_to_value(&w, &mid)? > 1e-7 * (1.0 + mid.norm()) {
                        return Ok(Some(w));
                    }
                }
            }
        }
        Ok(None)
    }

    /// Random point `(w, y)` of the graph with `|w| <= 1` (values truncated
    /// to a ball of radius 5 when unbounded). Returns `None` if the sampled
    /// direction has an empty value.
    pub fn sample_graph_point<R: Rng>(&self, rng: &mut R) -> Result<Option<(Vector, Vector)>> {
        let n = self.dim_in;
        let w = Vector::from_iterator(n, (0..n).map(|_| rng.gen_range(-1.0..=1.0)));
        let parts = self.eval_parts(&w)?;
        let idx = rng.gen_range(0..parts.len());
        let (core, rho) = &parts[idx];
        let trunc = crate::geom::Ball::centered(self.dim_out, 5.0)?;
        let core = if core.is_bounded() {
            core.clone()
        } else {
            core.truncate(&trunc)?
        };
        if core.is_empty() {
            return Ok(None);
        }
        let piece = &core.pieces[rng.gen_range(0..core.pieces.len())];
        let verts = piece.vertices();
        let weights: Vec<f64> = verts.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = weights.iter().sum::<f64>().max(1e-12);
        let mut y = Vector::zeros(self.dim_out);
        for (v, a) in verts.iter().zip(&weights) {
            y += v * (*a / total);
        }
        if *rho > 0.0 {
            let u = Vector::from_iterator(
                self.dim_out,
                (0..self.dim_out).map(|_| rng.gen_range(-1.0..=1.0)),
            );
            let nu = u.norm();
            if nu > 0.0 {
                y += u * (rho * rng.gen_range(0.0..1.0) / nu);
            }
        }
        Ok(Some((w, y)))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum HomogJson {
    Zero {
        dim_in: usize,
        dim_out: usize,
    },
    Ball {
        kappa: f64,
        #[serde(default = "one")]
        dim_in: usize,
        #[serde(default = "one")]
        dim_out: usize,
    },
    MatrixBundle {
        matrices: Vec<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "is_zero")]
        inflation: f64,
    },
    ConeGraph {
        dim_in: usize,
        dim_out: usize,
        pieces: Vec<Polyhedron>,
        #[serde(default, skip_serializing_if = "is_zero")]
        inflation: f64,
    },
    Union {
        parts: Vec<HomogJson>,
    },
}

fn one() -> usize {
    1
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let m = rows.len();
    let n = rows.first().map(|r| r.len()).unwrap_or(0);
    if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Invalid(
            "matrix rows must be nonempty and of equal length".into(),
        ));
    }
    Ok(Matrix::from_fn(m, n, |i, j| rows[i][j]))
}

fn matrix_rows(a: &Matrix) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

impl HomogJson {
    fn build(self) -> Result<HomogMap> {
        match self {
            HomogJson::Zero { dim_in, dim_out } => Ok(HomogMap::zero(dim_in, dim_out)),
            HomogJson::Ball {
                kappa,
                dim_in,
                dim_out,
            } => HomogMap::ball(dim_in, dim_out, kappa),
            HomogJson::MatrixBundle {
                matrices,
                inflation,
            } => {
                let ms = matrices
                    .iter()
                    .map(|r| matrix_from_rows(r))
                    .collect::<Result<Vec<_>>>()?;
                HomogMap::bundle(ms)?.inflate(inflation)
            }
            HomogJson::ConeGraph {
                dim_in,
                dim_out,
                pieces,
                inflation,
            } => HomogMap::cone_graph(dim_in, dim_out, pieces)?.inflate(inflation),
            HomogJson::Union { parts } => {
                let maps = parts
                    .into_iter()
                    .map(|p| p.build())
                    .collect::<Result<Vec<_>>>()?;
                HomogMap::union(&maps)
            }
        }
    }

    fn from_part(part: &Part, n: usize, m: usize) -> HomogJson {
        match &part.rep {
            Rep::Zero if part.radius == 0.0 => HomogJson::Zero {
                dim_in: n,
                dim_out: m,
            },
            Rep::Zero => HomogJson::Ball {
                kappa: part.radius,
                dim_in: n,
                dim_out: m,
            },
            Rep::Bundle(ms) => HomogJson::MatrixBundle {
                matrices: ms.iter().map(matrix_rows).collect(),
                inflation: part.radius,
            },
            Rep::Cone(ps) => HomogJson::ConeGraph {
                dim_in: n,
                dim_out: m,
                pieces: ps.clone(),
                inflation: part.radius,
            },
        }
    }
}

impl Serialize for HomogMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (n, m) = (self.dim_in, self.dim_out);
        if self.parts.len() == 1 {
            HomogJson::from_part(&self.parts[0], n, m).serialize(s)
        } else {
            HomogJson::Union {
                parts: self
                    .parts
                    .iter()
                    .map(|p| HomogJson::from_part(p, n, m))
                    .collect(),
            }
            .serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for HomogMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        HomogJson::deserialize(d)?.build().map_err(D::Error::custom)
    }
}

/// The map of a half-line example: `{0}` for `w <= 0` and `[-w, w]` for `w >= 0`.
pub fn half_line_example_map() -> HomogMap {
    HomogMap::from_rays(
        1,
        1,
        &[vec![vec![-1.0, 0.0]], vec![vec![1.0, 1.0], vec![1.0, -1.0]]],
    )
    .expect("valid rays")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vector;

    fn bounds(r: &Region) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &r.pieces {
            let (a, b) = p.interval_bounds();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo, hi)
    }

    fn close(a: (f64, f64), b: (f64, f64)) -> bool {
        (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9
    }

    #[test]
    fn ball_eval_and_norm() {
        let t = HomogMap::ball(1, 1, 2.0).unwrap();
        assert!(close(
            bounds(&t.eval(&vector(&[3.0])).unwrap()),
            (-6.0, 6.0)
        ));
        assert_eq!(
            HomogMap::ball(1, 1, 3.0).unwrap().outer_norm().unwrap(),
            3.0
        );
    }

    #[test]
    fn half_line_map() {
        let t = half_line_example_map();
        assert!(close(
            bounds(&t.eval(&vector(&[-1.0])).unwrap()),
            (0.0, 0.0)
        ));
        assert!(close(
            bounds(&t.eval(&vector(&[2.0])).unwrap()),
            (-2.0, 2.0)
        ));
        assert!((t.outer_norm().unwrap() - 1.0).abs() < 1e-12);
        let r = t.reflect();
        assert!(close(bounds(&r.eval(&vector(&[1.0])).unwrap()), (0.0, 0.0)));
        assert!(close(
            bounds(&r.eval(&vector(&[-3.0])).unwrap()),
            (-3.0, 3.0)
        ));
    }

    #[test]
    fn unbounded_at_zero_has_infinite_norm() {
        let t = HomogMap::from_rays(
            1,
            2,
            &[vec![
                vec![1.0, 0.0, 0.0],
                vec![-1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ]],
        )
        .unwrap();
        assert_eq!(t.outer_norm().unwrap(), f64::INFINITY);
    }

    #[test]
    fn bundle_ops() {
        let t = HomogMap::bundle(vec![
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, -1.0),
        ])
        .unwrap();
        assert!(close(
            bounds(&t.eval(&vector(&[5.0])).unwrap()),
            (-5.0, 5.0)
        ));
        let two = HomogMap::linear(Matrix::from_element(1, 1, 2.0));
        let three = HomogMap::bundle(vec![
            Matrix::from_element(1, 1, 3.0),
            Matrix::from_element(1, 1, -3.0),
        ])
        .unwrap();
        let c = HomogMap::compose(&two, &three).unwrap();
        match &c.parts()[0].rep {
            Rep::Bundle(ms) => {
                let mut v: Vec<f64> = ms.iter().map(|m| m[(0, 0)]).collect();
                v.sort_by(f64::total_cmp);
                assert_eq!(v, vec![-6.0, 6.0]);
            }
            _ => panic!("expected a bundle"),
        }
    }

    #[test]
    fn ball_arithmetic() {
        let a = HomogMap::ball(1, 1, 2.0).unwrap();
        let b = HomogMap::ball(1, 1, 3.0).unwrap();
        let c = HomogMap::compose(&b, &a).unwrap();
        assert!(close(
            bounds(&c.eval(&vector(&[1.0])).unwrap()),
            (-6.0, 6.0)
        ));
        let s = HomogMap::sum(&[a.clone(), b.clone()]).unwrap();
        assert!(close(
            bounds(&s.eval(&vector(&[-1.0])).unwrap()),
            (-5.0, 5.0)
        ));
        assert!(!c.is_approximate() && !s.is_approximate());
    }

    #[test]
    fn cone_composition_matches_evaluation() {
        let t = half_line_example_map();
        let id = HomogMap::identity(1);
        let c = HomogMap::compose(&id, &t).unwrap();
        for w in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            let a = bounds(&c.eval(&vector(&[w])).unwrap());
            let b = bounds(&t.eval(&vector(&[w])).unwrap());
            assert!(close(a, b), "w={w}: {a:?} vs {b:?}");
        }
        // general lifted path: ball after cone
        let ball = HomogMap::ball(1, 1, 2.0).unwrap();
        let c2 = HomogMap::compose(&ball, &t).unwrap();
        assert!(close(
            bounds(&c2.eval(&vector(&[1.0])).unwrap()),
            (-2.0, 2.0)
        ));
        assert!(close(
            bounds(&c2.eval(&vector(&[-1.0])).unwrap()),
            (0.0, 0.0)
        ));
    }

    #[test]
    fn containment_examples() {
        let big = HomogMap::ball(1, 1, 2.0).unwrap();
        let small = HomogMap::ball(1, 1, 1.0).unwrap();
        assert!(HomogMap::contains(&big, &small, 8).unwrap().holds);
        assert!(!HomogMap::contains(&small, &big, 8).unwrap().holds);
        let t1 = HomogMap::identity(2);
        let t2 = HomogMap::linear(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let c = HomogMap::contains(&t2, &t1, 16).unwrap();
        assert!(!c.holds);
        assert_eq!(c.witness_direction, Some(vec![0.0, 1.0]));
        assert!(HomogMap::contains(&t1, &t1, 16).unwrap().holds);
    }

    #[test]
    fn intersection_of_linear_maps() {
        let t1 = HomogMap::identity(2);
        let t2 = HomogMap::linear(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let t = HomogMap::intersect(&t1, &t2).unwrap();
        assert!(t.eval(&vector(&[0.3, 1.0])).unwrap().is_empty());
        let v = t.eval(&vector(&[2.0, 0.0])).unwrap();
        assert!(v.contains(&vector(&[2.0, 0.0]), 1e-9));
    }

    #[test]
    fn json_forms() {
        let t: HomogMap = serde_json::from_str(r#"{"kind":"ball","kappa":2.5}"#).unwrap();
        assert_eq!(t.outer_norm().unwrap(), 2.5);
        let s = serde_json::to_string(&half_line_example_map()).unwrap();
        let back: HomogMap = serde_json::from_str(&s).unwrap();
        assert!(close(
            bounds(&back.eval(&vector(&[2.0])).unwrap()),
            (-2.0, 2.0)
        ));
        let b: HomogMap =
            serde_json::from_str(r#"{"kind":"matrix_bundle","matrices":[[[1.0]],[[-1.0]]]}"#)
                .unwrap();
        assert!(close(
            bounds(&b.eval(&vector(&[1.0])).unwrap()),
            (-1.0, 1.0)
        ));
    }

    #[test]
    fn dist_uses_exact_ball() {
        let t = HomogMap::ball(2, 2, 1.0).unwrap();
        let d = t
            .dist_to_value(&vector(&[1.0, 0.0]), &vector(&[0.0, 2.0]))
            .unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }
}

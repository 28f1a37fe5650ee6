//! Normal cones of finite unions of polyhedra, coderivatives of polyhedral
//! graphs and the derivative map `w -> kappa(w) B` read off from them.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geom::{complement, orth_basis, polyball, swap_blocks, unit_directions, Halfspace, Polyhedron, Region, Vector, EPS};
use crate::homog::{HomogMap, Matrix};
use crate::svmap::SVMap;

const ACTIVE_TOL: f64 = 1e-8;

/// Regular and limiting normal cones at a point of a finite union of
/// polyhedra. Both are stored as lists of polyhedral cones.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalCone {
    #[serde(with = "crate::geom::vec_serde")]
    pub at: Vector,
    /// The regular cone (a single convex cone).
    pub regular: Vec<Polyhedron>,
    /// The limiting cone as a union of regular cones at nearby points.
    pub general: Vec<Polyhedron>,
}

struct ActivePiece {
    normals: Vec<Vector>,
}

fn active_pieces(c: &Region, z: &Vector) -> Vec<ActivePiece> {
    c.pieces
        .iter()
        .filter(|p| p.contains(z, ACTIVE_TOL))
        .map(|p| ActivePiece {
            normals: p.active_set(z, ACTIVE_TOL).into_iter().map(|i| p.hrep()[i].normal.clone()).collect(),
        })
        .collect()
}

fn sign(x: f64) -> i8 {
    if x > EPS {
        1
    } else if x < -EPS {
        -1
    } else {
        0
    }
}

fn project_onto(basis: &[Vector], a: &Vector) -> Vector {
    basis.iter().fold(Vector::zeros(a.len()), |acc, b| acc + b * b.dot(a))
}

/// Relative-interior points of every face of the central arrangement
/// `{<a_i, d> = 0}` restricted to the flat spanned by `basis`.
fn face_points(normals: &[Vector], basis: &[Vector], d: usize, out: &mut Vec<Vector>) {
    let cutting: Vec<Vector> = normals
        .iter()
        .map(|a| project_onto(basis, a))
        .filter(|a| a.norm() > 1e-9)
        .collect();
    if basis.is_empty() {
        out.push(Vector::zeros(d));
        return;
    }
    if cutting.is_empty() {
        out.push(basis[0].clone());
        out.push(-&basis[0]);
        out.push(Vector::zeros(d));
        return;
    }
    for a in &cutting {
        let u = a / a.norm();
        let reduced: Vec<Vector> = basis.iter().map(|b| b - &u * u.dot(b)).collect();
        let sub = orth_basis(&reduced, 1e-9);
        let mut lower = Vec::new();
        face_points(normals, &sub, d, &mut lower);
        for p in lower {
            let scale = p.norm().max(1.0);
            let margin = cutting
                .iter()
                .map(|c| c.dot(&p).abs() / c.norm())
                .filter(|m| *m > 1e-9 * scale)
                .fold(scale, f64::min);
            let eps = 0.25 * margin;
            out.push(&p + &u * eps);
            out.push(&p - &u * eps);
            out.push(p);
        }
    }
}

fn cone_of(d: usize, rays: &[Vector]) -> Result<Polyhedron> {
    Polyhedron::cone(d, rays.to_vec())
}

/// Regular cone at `z + t dir` for small `t > 0` (at `z` itself when
/// `dir = 0`).
fn regular_in_direction(pieces: &[ActivePiece], dir: &Vector, d: usize) -> Result<Option<Polyhedron>> {
    let mut cone: Option<Polyhedron> = None;
    for p in pieces {
        if p.normals.iter().any(|a| sign(a.dot(dir)) > 0) {
            continue;
        }
        let act: Vec<Vector> = p.normals.iter().filter(|a| sign(a.dot(dir)) == 0).cloned().collect();
        let k = cone_of(d, &act)?;
        cone = Some(match cone {
            None => k,
            Some(c) => c.intersect(&k)?,
        });
    }
    Ok(cone)
}

/// Exact regular and limiting normal cones of `c` at `z`.
pub fn normal_cone(c: &Region, z: &Vector) -> Result<NormalCone> {
    check_dim(c.dim, z.len())?;
    let d = c.dim;
    let pieces = active_pieces(c, z);
    if pieces.is_empty() {
        return Err(Error::NotInSet);
    }
    let regular = regular_in_direction(&pieces, &Vector::zeros(d), d)?.expect("a piece contains z");
    let mut normals: Vec<Vector> = Vec::new();
    for p in &pieces {
        for a in &p.normals {
            if !normals.iter().any(|b| (b - a).amax() < 1e-12) {
                normals.push(a.clone());
            }
        }
    }
    let full: Vec<Vector> = complement(&[], d);
    let mut dirs = Vec::new();
    face_points(&normals, &full, d, &mut dirs);
    let mut seen: Vec<Vec<i8>> = Vec::new();
    let mut general: Vec<Polyhedron> = vec![regular.clone()];
    for dir in dirs {
        let sig: Vec<i8> = normals.iter().map(|a| sign(a.dot(&dir))).collect();
        if seen.contains(&sig) {
            continue;
        }
        seen.push(sig);
        if let Some(k) = regular_in_direction(&pieces, &dir, d)? {
            if !general.iter().any(|g| g.approx_eq(&k, 1e-9)) {
                general.push(k);
            }
        }
    }
    Ok(NormalCone { at: z.clone(), regular: vec![regular], general })
}

/// Coderivative of a polyhedral graph: `v in D*S(x|y)(z)` iff `(v, -z)` lies
/// in the limiting normal cone of the graph at `(x, y)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Coderivative {
    pub dim_in: usize,
    pub dim_out: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub graph_cones: Vec<Polyhedron>,
}

pub fn coderivative(s: &SVMap, x: &Vector, y: &Vector) -> Result<Coderivative> {
    let (n, m) = (s.dim_in(), s.dim_out());
    check_dim(n, x.len())?;
    check_dim(m, y.len())?;
    let pieces = s.graph_pieces().ok_or_else(|| Error::Invalid("coderivatives need a polyhedral graph".into()))?;
    let z = Vector::from_iterator(n + m, x.iter().chain(y.iter()).copied());
    let g = Region::new(n + m, pieces.to_vec())?;
    let nc = normal_cone(&g, &z).map_err(|e| if e == Error::NotInSet { Error::NotOnGraph } else { e })?;
    Ok(Coderivative {
        dim_in: n,
        dim_out: m,
        x: x.iter().copied().collect(),
        y: y.iter().copied().collect(),
        graph_cones: nc.general,
    })
}

/// `{(v, u) : |u| <= 1}` with the polyhedral ball for `m >= 2`.
fn unit_u_constraints(n: usize, m: usize) -> Result<(Vec<Halfspace>, bool)> {
    let ball = polyball(&Vector::zeros(m), 1.0)?;
    let hs = ball
        .hrep()
        .iter()
        .map(|h| {
            let mut a = Vector::zeros(n + m);
            a.rows_mut(n, m).copy_from(&h.normal);
            Halfspace::new(a, h.offset)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((hs, m >= 2))
}

impl Coderivative {
    /// `D*S(x|y)(z)`.
    pub fn eval(&self, z: &Vector) -> Result<Region> {
        check_dim(self.dim_out, z.len())?;
        let neg = -z;
        let slices = self
            .graph_cones
            .iter()
            .map(|k| swap_blocks(k, self.dim_in, self.dim_out)?.slice_prefix(&neg))
            .collect::<Result<Vec<_>>>()?;
        Region::new(self.dim_in, slices)
    }

    /// Slices `{(v, u) in K : |u| <= 1}` of every cone piece.
    fn unit_slices(&self) -> Result<(Vec<Polyhedron>, bool)> {
        let (hs, approx) = unit_u_constraints(self.dim_in, self.dim_out)?;
        let s = self.graph_cones.iter().map(|k| k.add_halfspaces(&hs)).collect::<Result<Vec<_>>>()?;
        Ok((s, approx))
    }

    /// Whether `D*S(x|y)(0) = {0}`.
    pub fn criterion_holds(&self) -> Result<bool> {
        Ok(self.unit_slices()?.0.iter().all(|p| p.rays().is_empty()))
    }

    /// Covectors `c = -v` over the vertices of the unit slices; `kappa(w)`
    /// is the largest `<c, w>` (and at least 0).
    fn kappa_covectors(&self) -> Result<Vec<Vector>> {
        let (slices, _) = self.unit_slices()?;
        if slices.iter().any(|p| !p.rays().is_empty()) {
            return Err(Error::CriterionFails);
        }
        let n = self.dim_in;
        let mut out: Vec<Vector> = vec![Vector::zeros(n)];
        for p in &slices {
            for v in p.vertices() {
                let c = -v.rows(0, n).into_owned();
                if !out.iter().any(|o| (o - &c).amax() < 1e-10) {
                    out.push(c);
                }
            }
        }
        Ok(out)
    }
}

/// Graphical derivative `DS(x|y)`: the tangent cone of a polyhedral graph at
/// `(x, y)`, one cone per piece through the point.
pub fn graphical_derivative(s: &SVMap, x: &Vector, y: &Vector) -> Result<HomogMap> {
    let (n, m) = (s.dim_in(), s.dim_out());
    check_dim(n, x.len())?;
    check_dim(m, y.len())?;
    let pieces = s.graph_pieces().ok_or_else(|| Error::Invalid("tangent cones need a polyhedral graph".into()))?;
    let z = Vector::from_iterator(n + m, x.iter().chain(y.iter()).copied());
    let cones = pieces
        .iter()
        .filter(|p| p.contains(&z, ACTIVE_TOL))
        .map(|p| {
            let hs = p
                .active_set(&z, ACTIVE_TOL)
                .into_iter()
                .map(|i| Halfspace { normal: p.hrep()[i].normal.clone(), offset: 0.0 })
                .collect();
            Polyhedron::from_hrep(n + m, hs)
        })
        .collect::<Result<Vec<_>>>()?;
    if cones.is_empty() {
        return Err(Error::NotOnGraph);
    }
    HomogMap::cone_graph(n, m, cones)
}

/// `kappa(w) = max{<-v, w> : v in D*S(x|y)(z), |z| <= 1}`; `+inf` when the
/// maximization is unbounded.
pub fn mord_kappa(d: &Coderivative, w: &Vector) -> Result<f64> {
    check_dim(d.dim_in, w.len())?;
    let (slices, _) = d.unit_slices()?;
    let mut dir = Vector::zeros(d.dim_in + d.dim_out);
    dir.rows_mut(0, d.dim_in).copy_from(&(-w));
    let mut best: f64 = 0.0;
    for p in &slices {
        if p.is_empty() {
            continue;
        }
        let s = p.support(&dir);
        if s.is_infinite() {
            return Ok(f64::INFINITY);
        }
        best = best.max(s);
    }
    Ok(best)
}

/// The derivative map `w -> kappa(w) B^m`, as a union over the maximizing
/// covectors `c` of the cones `{(w, y) : |y| <= <c, w>}`.
pub fn mord_t(d: &Coderivative) -> Result<HomogMap> {
    let (n, m) = (d.dim_in, d.dim_out);
    let covectors = d.kappa_covectors()?;
    let ball = polyball(&Vector::zeros(m), 1.0)?;
    let pieces = covectors
        .iter()
        .map(|c| {
            let hs = ball
                .hrep()
                .iter()
                .map(|h| {
                    let mut a = Vector::zeros(n + m);
                    a.rows_mut(0, n).copy_from(&(-c * h.offset));
                    a.rows_mut(n, m).copy_from(&h.normal);
                    Halfspace::new(a, 0.0)
                })
                .collect::<Result<Vec<_>>>()?;
            Polyhedron::from_hrep(n + m, hs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HomogMap::cone_graph(n, m, pieces)?.with_approximation(m >= 2))
}

/// `max_{|w| <= 1} kappa(w)`, the largest norm of a maximizing covector.
pub fn graphical_modulus(d: &Coderivative) -> Result<f64> {
    Ok(d.kappa_covectors()?.iter().map(|c| c.norm()).fold(0.0, f64::max))
}

/// A change of coordinates `y -> g y + f x` used on the directions `w` in
/// `cone` (a polyhedral cone in `R^n`).
#[derive(Clone, Debug)]
pub struct Transform {
    pub g: Matrix,
    pub f: Matrix,
    pub cone: Polyhedron,
}

/// Direction-wise derivative map: on each transform's cone of directions,
/// `T(w) = g^{-1}(T~(w) - f w)` where `T~` is the `kappa B` map of the graph
/// transformed by `(x, y) -> (x, g y + f x)`.
pub fn precise_t(s: &SVMap, x: &Vector, y: &Vector, transforms: &[Transform]) -> Result<HomogMap> {
    let (n, m) = (s.dim_in(), s.dim_out());
    if transforms.is_empty() {
        return Err(Error::PartitionGap);
    }
    for t in transforms {
        check_dim(m, t.g.nrows())?;
        check_dim(m, t.g.ncols())?;
        check_dim(m, t.f.nrows())?;
        check_dim(n, t.f.ncols())?;
        check_dim(n, t.cone.dim())?;
    }
    let covered = unit_directions(n, 64)
        .iter()
        .all(|w| transforms.iter().any(|t| t.cone.contains(w, 1e-9)));
    if !covered {
        return Err(Error::PartitionGap);
    }
    let pieces = s.graph_pieces().ok_or_else(|| Error::Invalid("precise_t needs a polyhedral graph".into()))?;
    let mut maps = Vec::with_capacity(transforms.len());
    for t in transforms {
        let ginv = t.g.clone().try_inverse().ok_or_else(|| Error::Invalid("transform matrix is singular".into()))?;
        let mut block = Matrix::identity(n + m, n + m);
        block.view_mut((n, 0), (m, n)).copy_from(&t.f);
        block.view_mut((n, n), (m, m)).copy_from(&t.g);
        let moved = pieces.iter().map(|p| p.linear_image(&block)).collect::<Result<Vec<_>>>()?;
        let st = SVMap::poly_graph(n, m, moved)?;
        let yt = &t.g * y + &t.f * x;
        let tt = mord_t(&coderivative(&st, x, &yt)?)?;
        let shifted = HomogMap::sum(&[tt, HomogMap::linear(-&t.f)])?;
        let back = HomogMap::compose(&HomogMap::linear(ginv), &shifted)?;
        let hs: Vec<Halfspace> = t.cone.lift_constraints(n + m, &(0..n).collect::<Vec<_>>());
        let window = HomogMap::cone_graph(n, m, vec![Polyhedron::from_hrep(n + m, hs)?])?;
        maps.push(HomogMap::intersect(&back, &window)?);
    }
    HomogMap::union(&maps)
}

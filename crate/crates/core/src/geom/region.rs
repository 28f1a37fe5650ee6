use serde::{Deserialize, Serialize};

use super::{check_exact_dim, Ball, Polyhedron, Vector, EPS};
use crate::error::{check_dim, Error, Result};

/// Finite union of convex polyhedra sharing one ambient dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Region {
    pub dim: usize,
    pub pieces: Vec<Polyhedron>,
}

impl Region {
    /// Empty pieces are dropped.
    pub fn new(dim: usize, pieces: Vec<Polyhedron>) -> Result<Self> {
        for p in &pieces {
            check_dim(dim, p.dim())?;
        }
        Ok(Region {
            dim,
            pieces: pieces.into_iter().filter(|p| !p.is_empty()).collect(),
        })
    }

    pub fn empty(dim: usize) -> Self {
        Region {
            dim,
            pieces: Vec::new(),
        }
    }

    pub fn single(p: Polyhedron) -> Self {
        let dim = p.dim();
        Region::new(dim, vec![p]).expect("single piece")
    }

    pub fn point(p: Vector) -> Result<Self> {
        Ok(Self::single(Polyhedron::point(p)?))
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn is_bounded(&self) -> bool {
        self.pieces.iter().all(|p| p.is_bounded())
    }

    pub fn contains(&self, p: &Vector, tol: f64) -> bool {
        self.pieces.iter().any(|q| q.contains(p, tol))
    }

    pub fn union(&self, other: &Region) -> Result<Region> {
        check_dim(self.dim, other.dim)?;
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        Ok(Region {
            dim: self.dim,
            pieces,
        })
    }

    /// Euclidean distance from `p` to the union.
    pub fn dist(&self, p: &Vector) -> Result<f64> {
        check_dim(self.dim, p.len())?;
        check_exact_dim(self.dim)?;
        if self.is_empty() {
            return Err(Error::EmptyRegion);
        }
        Ok(self
            .pieces
            .iter()
            .map(|q| q.dist(p))
            .fold(f64::INFINITY, f64::min))
    }

    /// Nearest point of the union to `p`.
    pub fn project(&self, p: &Vector) -> Result<Vector> {
        check_dim(self.dim, p.len())?;
        let mut best: Option<(f64, Vector)> = None;
        for q in &self.pieces {
            if let Some(x) = q.project(p) {
                let d = (&x - p).norm();
                if best.as_ref().is_none_or(|(b, _)| d < *b) {
                    best = Some((d, x));
                }
            }
        }
        best.map(|(_, x)| x).ok_or(Error::EmptyRegion)
    }

    pub fn support(&self, u: &Vector) -> Result<f64> {
        check_dim(self.dim, u.len())?;
        if self.is_empty() {
            return Err(Error::EmptyRegion);
        }
        Ok(self
            .pieces
            .iter()
            .map(|q| q.support(u))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn minkowski_sum(&self, other: &Region) -> Result<Region> {
        check_dim(self.dim, other.dim)?;
        let mut pieces = Vec::with_capacity(self.pieces.len() * other.pieces.len());
        for a in &self.pieces {
            for b in &other.pieces {
                pieces.push(a.minkowski(b)?);
            }
        }
        Region::new(self.dim, pieces)
    }

    pub fn translate(&self, t: &Vector) -> Result<Region> {
        let pieces = self
            .pieces
            .iter()
            .map(|p| p.translate(t))
            .collect::<Result<_>>()?;
        Ok(Region {
            dim: self.dim,
            pieces,
        })
    }

    pub fn negated(&self) -> Region {
        Region {
            dim: self.dim,
            pieces: self.pieces.iter().map(|p| p.negated()).collect(),
        }
    }

    pub fn linear_image(&self, m: &nalgebra::DMatrix<f64>) -> Result<Region> {
        let pieces = self
            .pieces
            .iter()
            .map(|p| p.linear_image(m))
            .collect::<Result<_>>()?;
        Region::new(m.nrows(), pieces)
    }

    pub fn truncate(&self, ball: &Ball) -> Result<Region> {
        let pieces = self
            .pieces
            .iter()
            .map(|p| p.truncate(ball))
            .collect::<Result<_>>()?;
        Region::new(self.dim, pieces)
    }

    /// Minkowski gauge `min{t >= 0 : w in tC}` of a single convex piece,
    /// read off exactly from the facet description.
    pub fn gauge(&self, w: &Vector) -> Result<f64> {
        check_dim(self.dim, w.len())?;
        let c = match self.pieces.as_slice() {
            [] => return Err(Error::EmptyRegion),
            [c] => c,
            _ => {
                return Err(Error::Invalid(
                    "gauge needs a convex (single-piece) set".into(),
                ))
            }
        };
        gauge_of(c, w)
    }

    /// Sample points covering every piece; pieces must be bounded.
    pub fn sample_points(&self, per_edge: usize) -> Result<Vec<Vector>> {
        if !self.is_bounded() {
            return Err(Error::UnboundedWithoutTruncation);
        }
        Ok(self
            .pieces
            .iter()
            .flat_map(|p| p.sample_points(per_edge))
            .collect())
    }

    /// Pompeiu-Hausdorff distance; unbounded inputs are truncated first.
    pub fn hausdorff(&self, other: &Region, truncation: Option<&Ball>) -> Result<f64> {
        check_dim(self.dim, other.dim)?;
        check_exact_dim(self.dim)?;
        if self.is_empty() || other.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let (a, b) = if self.is_bounded() && other.is_bounded() {
            (self.clone(), other.clone())
        } else {
            let ball = truncation.ok_or(Error::UnboundedWithoutTruncation)?;
            (self.truncate(ball)?, other.truncate(ball)?)
        };
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let one_sided = |from: &Region, to: &Region| -> Result<f64> {
            let mut worst: f64 = 0.0;
            for p in from.sample_points(6)? {
                worst = worst.max(to.dist(&p)?);
            }
            Ok(worst)
        };
        Ok(one_sided(&a, &b)?.max(one_sided(&b, &a)?))
    }
}

pub(crate) fn gauge_of(c: &Polyhedron, w: &Vector) -> Result<f64> {
    if c.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let scale = 1.0 + w.amax();
    if w.norm() <= EPS {
        return Ok(0.0);
    }
    // w in tC  <=>  <a_i, w> <= t b_i for every facet
    let mut lo: f64 = 0.0;
    let mut hi = f64::INFINITY;
    for h in c.hrep() {
        let aw = h.normal.dot(w);
        let b = h.offset;
        if b.abs() <= EPS {
            if aw > EPS * scale {
                return Err(Error::NotReachable);
            }
        } else if b > 0.0 {
            lo = lo.max(aw / b);
        } else {
            hi = hi.min(aw / b);
        }
    }
    if lo > hi + EPS * scale {
        return Err(Error::NotReachable);
    }
    if lo <= 0.0 {
        // only t > 0 is meaningful unless C contains w for arbitrarily small t
        if !c.rays().iter().any(|r| r.dot(w) > 0.0) && !c.contains(&Vector::zeros(c.dim()), EPS) {
            return Err(Error::NotReachable);
        }
    }
    Ok(lo)
}

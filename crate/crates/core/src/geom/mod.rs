//! Polyhedral geometry in low dimension.

mod graph;
mod linalg;
mod polyhedron;
mod region;

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

pub use graph::{compose_graphs, sum_graphs, swap_blocks};
pub(crate) use linalg::complement;
pub use polyhedron::{Halfspace, Polyhedron, MAX_LIFT_DIM};
pub use region::Region;

#[allow(unused_imports)]
pub(crate) use linalg::{orth_basis, Combinations};

use crate::error::{Error, Result};

pub type Vector = nalgebra::DVector<f64>;

/// Global tolerance for geometric predicates.
pub const EPS: f64 = 1e-9;

/// Largest ambient dimension accepted by the public exact operations.
pub const MAX_EXACT_DIM: usize = 4;

/// Facets per axis and sign used by the polyhedral ball in the plane.
pub const BALL_APPROX_LEVEL: usize = 8;

pub(crate) fn check_exact_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_EXACT_DIM {
        return Err(Error::UnsupportedDimension(d));
    }
    Ok(())
}

pub fn vector(coords: &[f64]) -> Vector {
    Vector::from_column_slice(coords)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    #[serde(with = "vec_serde")]
    pub center: Vector,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vector, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::Invalid(format!(
                "ball radius must be finite and nonnegative, got {radius}"
            )));
        }
        Ok(Ball { center, radius })
    }

    pub fn centered(dim: usize, radius: f64) -> Result<Self> {
        Self::new(Vector::zeros(dim), radius)
    }

    pub fn contains(&self, p: &Vector) -> bool {
        (p - &self.center).norm() <= self.radius + EPS
    }
}

pub(crate) mod vec_serde {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Ok(Vector::from_vec(v))
    }
}

fn ball_directions(dim: usize) -> Vec<Vector> {
    match dim {
        1 => vec![vector(&[1.0]), vector(&[-1.0])],
        2 => {
            let n = 4 * BALL_APPROX_LEVEL;
            (0..n)
                .map(|i| {
                    let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    vector(&[t.cos(), t.sin()])
                })
                .collect()
        }
        _ => {
            // nonzero points of {-1,0,1}^d, normalized
            let total = 3usize.pow(dim as u32);
            (0..total)
                .filter_map(|mut code| {
                    let mut v = Vector::zeros(dim);
                    for i in 0..dim {
                        v[i] = (code % 3) as f64 - 1.0;
                        code /= 3;
                    }
                    let n = v.norm();
                    (n > 0.0).then(|| v / n)
                })
                .collect()
        }
    }
}

fn unit_polyball(dim: usize) -> Result<(Polyhedron, f64)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Polyhedron, f64)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().expect("ball cache").get(&dim) {
        return Ok(hit.clone());
    }
    let hs = ball_directions(dim)
        .into_iter()
        .map(|u| Halfspace::new(u, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let p = Polyhedron::from_hrep(dim, hs)?;
    let factor = p.vertices().iter().map(|v| v.norm()).fold(1.0, f64::max);
    cache
        .lock()
        .expect("ball cache")
        .insert(dim, (p.clone(), factor));
    Ok((p, factor))
}

/// Deterministic unit directions: the signed coordinate axes first, then an
/// even spread (equally spaced angles in the plane, seeded samples above).
pub fn unit_directions(dim: usize, count: usize) -> Vec<Vector> {
    use rand::{Rng, SeedableRng};
    let mut out = Vec::with_capacity(count.max(2 * dim));
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = Vector::zeros(dim);
            e[i] = s;
            out.push(e);
        }
    }
    if dim == 1 {
        return out;
    }
    if dim == 2 {
        for k in 0..count {
            let t = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
            out.push(vector(&[t.cos(), t.sin()]));
        }
        return out;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_d1c7 + dim as u64);
    while out.len() < count.max(2 * dim) {
        let v = Vector::from_iterator(dim, (0..dim).map(|_| rng.gen_range(-1.0..=1.0)));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            out.push(v / n);
        }
    }
    out
}

/// Circumscribed polyhedral approximation of the closed ball `B(center, r)`.
/// Exact on the line; in the plane it is a regular 32-gon.
pub fn polyball(center: &Vector, radius: f64) -> Result<Polyhedron> {
    check_exact_dim(center.len())?;
    let (unit, _) = unit_polyball(center.len())?;
    if radius <= 0.0 {
        return Polyhedron::point(center.clone());
    }
    unit.scaled(radius)?.translate(center)
}

/// Ratio between the circumradius of the polyhedral ball and the true radius.
pub fn polyball_overshoot(dim: usize) -> Result<f64> {
    check_exact_dim(dim)?;
    Ok(unit_polyball(dim)?.1)
}

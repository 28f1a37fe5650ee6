//! Lifted constructions on graphs of set-valued maps given as unions of
//! polyhedra in a product space.

use nalgebra::DMatrix;

use super::{Polyhedron, MAX_LIFT_DIM};
use crate::error::{Error, Result};

/// Pieces of `{(x, z) : exists y, (x, y) in G1, (y, z) in G2}` where `G1`
/// lives in `R^(n+m)` and `G2` in `R^(m+p)`.
pub fn compose_graphs(g2: &[Polyhedron], g1: &[Polyhedron], n: usize, m: usize, p: usize) -> Result<Vec<Polyhedron>> {
    let total = n + m + p;
    if total > MAX_LIFT_DIM {
        return Err(Error::UnsupportedDimension(total));
    }
    let s1: Vec<usize> = (0..n + m).collect();
    let s2: Vec<usize> = (n..total).collect();
    let keep: Vec<usize> = (0..n).chain(n + m..total).collect();
    let mut out = Vec::new();
    for a in g1 {
        for b in g2 {
            let mut hs = a.lift_constraints(total, &s1);
            hs.extend(b.lift_constraints(total, &s2));
            let lifted = Polyhedron::from_hrep(total, hs)?;
            if !lifted.is_empty() {
                out.push(lifted.project_coords(&keep)?);
            }
        }
    }
    Ok(out)
}

/// Pieces of `{(x, y1 + y2) : (x, y1) in G1, (x, y2) in G2}` in `R^(n+m)`.
pub fn sum_graphs(g1: &[Polyhedron], g2: &[Polyhedron], n: usize, m: usize) -> Result<Vec<Polyhedron>> {
    let total = n + 2 * m;
    if total > MAX_LIFT_DIM {
        return Err(Error::UnsupportedDimension(total));
    }
    let s1: Vec<usize> = (0..n + m).collect();
    let s2: Vec<usize> = (0..n).chain(n + m..total).collect();
    let mut proj = DMatrix::zeros(n + m, total);
    for i in 0..n {
        proj[(i, i)] = 1.0;
    }
    for j in 0..m {
        proj[(n + j, n + j)] = 1.0;
        proj[(n + j, n + m + j)] = 1.0;
    }
    let mut out = Vec::new();
    for a in g1 {
        for b in g2 {
            let mut hs = a.lift_constraints(total, &s1);
            hs.extend(b.lift_constraints(total, &s2));
            let lifted = Polyhedron::from_hrep(total, hs)?;
            if !lifted.is_empty() {
                out.push(lifted.linear_image(&proj)?);
            }
        }
    }
    Ok(out)
}

/// Swaps the leading `n` coordinates with the trailing `m` ones.
pub fn swap_blocks(p: &Polyhedron, n: usize, m: usize) -> Result<Polyhedron> {
    let perm: Vec<usize> = (n..n + m).chain(0..n).collect();
    p.permute(&perm)
}

//! Small dense linear algebra used by the polyhedral kernel.
//!
//! Everything here works on dimensions below ten, so plain Gaussian
//! elimination with partial pivoting is used throughout.

use super::Vector;

const PIVOT_TOL: f64 = 1e-11;

/// Solves the square system `a x = b` (row-major `a`). Returns `None` when a
/// pivot falls below tolerance.
pub(crate) fn solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col * n + col].abs();
        for r in col + 1..n {
            let v = m[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < PIVOT_TOL {
            return None;
        }
        if piv != col {
            for c in 0..n {
                m.swap(col * n + c, piv * n + c);
            }
            rhs.swap(col, piv);
        }
        let d = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r * n + c] -= f * m[col * n + c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = rhs[r];
        for c in r + 1..n {
            s -= m[r * n + c] * x[c];
        }
        x[r] = s / m[r * n + r];
    }
    Some(x)
}

/// Determinant by elimination.
pub(crate) fn det(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    let mut sign = 1.0;
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col * n + col].abs();
        for r in col + 1..n {
            let v = m[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..n {
                m.swap(col * n + c, piv * n + c);
            }
            sign = -sign;
        }
        let d = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / d;
            for c in col..n {
                m[r * n + c] -= f * m[col * n + c];
            }
        }
    }
    let mut p = sign;
    for i in 0..n {
        p *= m[i * n + i];
    }
    p
}

/// Unit vector orthogonal to `d - 1` vectors in `R^d` (generalized cross
/// product). The rows are normalized first so the rank test is scale free.
/// Returns `None` if the rows are (numerically) dependent.
pub(crate) fn orthogonal_direction(rows: &[Vector], d: usize) -> Option<Vector> {
    debug_assert_eq!(rows.len() + 1, d);
    if d == 1 {
        return Some(Vector::from_element(1, 1.0));
    }
    let normed: Vec<Vector> = rows
        .iter()
        .map(|r| {
            let n = r.norm();
            if n > 0.0 {
                r / n
            } else {
                r.clone()
            }
        })
        .collect();
    let k = d - 1;
    let mut out = Vector::zeros(d);
    let mut minor = vec![0.0; k * k];
    for skip in 0..d {
        for (i, r) in normed.iter().enumerate() {
            let mut c = 0;
            for j in 0..d {
                if j == skip {
                    continue;
                }
                minor[i * k + c] = r[j];
                c += 1;
            }
        }
        let s = if skip % 2 == 0 { 1.0 } else { -1.0 };
        out[skip] = s * det(&minor, k);
    }
    let n = out.norm();
    if n < 1e-9 {
        return None;
    }
    Some(out / n)
}

/// Orthonormal basis of the span of `vectors` (modified Gram-Schmidt with
/// re-orthogonalization). Vectors whose residual norm is below `tol` times
/// their original norm are treated as dependent.
pub(crate) fn orth_basis(vectors: &[Vector], tol: f64) -> Vec<Vector> {
    let mut basis: Vec<Vector> = Vec::new();
    // largest first, so that the basis is dominated by well-conditioned directions
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.sort_by(|&a, &b| vectors[b].norm().total_cmp(&vectors[a].norm()));
    for i in order {
        let v = &vectors[i];
        let n0 = v.norm();
        if n0 <= tol {
            continue;
        }
        let mut r = v / n0;
        for _ in 0..2 {
            for b in &basis {
                let c = r.dot(b);
                r -= b * c;
            }
        }
        let n = r.norm();
        if n > tol.max(1e-9) {
            basis.push(r / n);
        }
    }
    basis
}

/// Orthonormal basis of the orthogonal complement of an orthonormal `basis`.
pub(crate) fn complement(basis: &[Vector], d: usize) -> Vec<Vector> {
    let mut all: Vec<Vector> = basis.to_vec();
    let mut out = Vec::new();
    for i in 0..d {
        let mut e = Vector::zeros(d);
        e[i] = 1.0;
        for _ in 0..2 {
            for b in &all {
                let c = e.dot(b);
                e -= b * c;
            }
        }
        let n = e.norm();
        if n > 1e-6 {
            let u = e / n;
            all.push(u.clone());
            out.push(u);
        }
        if all.len() == d {
            break;
        }
    }
    out
}

/// Iterator over all `k`-subsets of `0..n` in lexicographic order.
pub(crate) struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub(crate) fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_count() {
        assert_eq!(Combinations::new(5, 2).count(), 10);
        assert_eq!(Combinations::new(4, 0).count(), 1);
        assert_eq!(Combinations::new(2, 3).count(), 0);
    }

    #[test]
    fn cross_in_3d() {
        let a = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let b = Vector::from_vec(vec![0.0, 1.0, 0.0]);
        let c = orthogonal_direction(&[a, b], 3).unwrap();
        assert!((c[2].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solve_small() {
        let x = solve(&[2.0, 1.0, 1.0, 3.0], &[3.0, 5.0], 2).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(solve(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0], 2).is_none());
    }

    #[test]
    fn complement_dims() {
        let b = orth_basis(&[Vector::from_vec(vec![1.0, 1.0, 0.0])], 1e-12);
        let c = complement(&b, 3);
        assert_eq!(c.len(), 2);
        for v in &c {
            assert!(v.dot(&b[0]).abs() < 1e-12);
        }
    }
}

//! Named closed-form maps and functions.
//!
//! Everything here can be referenced from instance files by name, with an
//! optional JSON object of parameters.

use std::f64::consts::PI;
use std::sync::Arc;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::geom::{Polyhedron, Region, Vector};
use crate::homog::Matrix;
use crate::svmap::{DomainBox, Function, Oracle, SVMap, DEFAULT_RESOLUTION};

fn scalar_arg(x: &Vector) -> f64 {
    x[0]
}

/// `S(x)` for `x >= 0`: the arc `{(t, sqrt t) : 0 <= t <= x}` together with
/// the vertical half-line `{x} x [sqrt x, inf)`; mirrored for `x <= 0`.
/// The arc is a polyline in the parameter `s = sqrt|t|` with step `2 sqrt h`,
/// which keeps it within `h` of the curve.
pub struct SqrtHook;

impl Oracle for SqrtHook {
    fn name(&self) -> &str {
        "sqrt_hook"
    }
    fn dim_in(&self) -> usize {
        1
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn domain(&self) -> DomainBox {
        DomainBox::cube(1, 1.0)
    }
    fn eval(&self, x: &Vector, resolution: f64) -> Result<Region> {
        let x = scalar_arg(x);
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        let top = x.abs().sqrt();
        let mut pieces = Vec::new();
        let apex = Vector::from_vec(vec![x, top]);
        pieces.push(Polyhedron::from_vrep(2, vec![apex], vec![Vector::from_vec(vec![0.0, 1.0])])?);
        if top > 0.0 {
            let step = 2.0 * resolution.max(1e-12).sqrt();
            let count = ((top / step).ceil() as usize).max(1);
            let point = |s: f64| Vector::from_vec(vec![sign * s * s, s]);
            for i in 0..count {
                let s0 = top * i as f64 / count as f64;
                let s1 = top * (i + 1) as f64 / count as f64;
                pieces.push(Polyhedron::from_vrep(2, vec![point(s0), point(s1)], Vec::new())?);
            }
        }
        Region::new(2, pieces)
    }
}

/// `S(theta) = {(t cos theta, t sin theta) : t >= 0}`.
pub struct RayMap;

impl Oracle for RayMap {
    fn name(&self) -> &str {
        "ray_map"
    }
    fn dim_in(&self) -> usize {
        1
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn domain(&self) -> DomainBox {
        DomainBox::cube(1, 2.0 * PI)
    }
    fn eval(&self, x: &Vector, _resolution: f64) -> Result<Region> {
        let th = scalar_arg(x);
        let ray = Vector::from_vec(vec![th.cos(), th.sin()]);
        Ok(Region::single(Polyhedron::cone(2, vec![ray])?))
    }
}

/// `{sign x}` off the origin and `{1, -1}` at the origin.
pub struct SignMap;

impl Oracle for SignMap {
    fn name(&self) -> &str {
        "sign_map"
    }
    fn dim_in(&self) -> usize {
        1
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn domain(&self) -> DomainBox {
        DomainBox::cube(1, 10.0)
    }
    fn eval(&self, x: &Vector, _resolution: f64) -> Result<Region> {
        let x = scalar_arg(x);
        let vals: &[f64] = if x > 0.0 {
            &[1.0]
        } else if x < 0.0 {
            &[-1.0]
        } else {
            &[1.0, -1.0]
        };
        let pieces = vals
            .iter()
            .map(|v| Polyhedron::point(Vector::from_element(1, *v)))
            .collect::<Result<Vec<_>>>()?;
        Region::new(1, pieces)
    }
}

/// `S(x) = R^m` for every `x`.
pub struct WholeSpace {
    dim_in: usize,
    dim_out: usize,
}

impl Oracle for WholeSpace {
    fn name(&self) -> &str {
        "whole_space"
    }
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn domain(&self) -> DomainBox {
        DomainBox::cube(self.dim_in, 10.0)
    }
    fn eval(&self, _x: &Vector, _resolution: f64) -> Result<Region> {
        Ok(Region::single(Polyhedron::whole(self.dim_out)))
    }
    fn params(&self) -> Value {
        serde_json::json!({"dim_in": self.dim_in, "dim_out": self.dim_out})
    }
}

type Eval = fn(&Vector) -> Vector;
type Jac = fn(&Vector) -> Option<Matrix>;

/// A named closed-form function with an optional analytic Jacobian.
pub struct NamedFunction {
    name: &'static str,
    dim_in: usize,
    dim_out: usize,
    f: Eval,
    jac: Option<Jac>,
}

impl Function for NamedFunction {
    fn name(&self) -> &str {
        self.name
    }
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn eval(&self, x: &Vector) -> Result<Vector> {
        crate::error::check_dim(self.dim_in, x.len())?;
        Ok((self.f)(x))
    }
    fn jacobian(&self, x: &Vector) -> Option<Matrix> {
        self.jac.and_then(|j| j(x))
    }
}

fn s(v: f64) -> Vector {
    Vector::from_element(1, v)
}

fn row(vals: &[f64]) -> Option<Matrix> {
    Some(Matrix::from_row_slice(1, vals.len(), vals))
}

const FUNCTIONS: &[NamedFunction] = &[
    NamedFunction {
        name: "abs",
        dim_in: 1,
        dim_out: 1,
        f: |x| s(x[0].abs()),
        jac: Some(|x| if x[0] == 0.0 { None } else { row(&[x[0].signum()]) }),
    },
    NamedFunction {
        name: "neg_abs",
        dim_in: 1,
        dim_out: 1,
        f: |x| s(-x[0].abs()),
        jac: Some(|x| if x[0] == 0.0 { None } else { row(&[-x[0].signum()]) }),
    },
    NamedFunction {
        name: "square",
        dim_in: 1,
        dim_out: 1,
        f: |x| s(x[0] * x[0]),
        jac: Some(|x| row(&[2.0 * x[0]])),
    },
    NamedFunction {
        name: "x2_sin",
        dim_in: 1,
        dim_out: 1,
        f: |x| s(if x[0] == 0.0 { 0.0 } else { x[0] * x[0] * (1.0 / (x[0] * x[0])).sin() }),
        jac: None,
    },
    NamedFunction {
        name: "cube_root",
        dim_in: 1,
        dim_out: 1,
        f: |x| s(x[0].cbrt()),
        jac: None,
    },
    NamedFunction {
        name: "max2",
        dim_in: 2,
        dim_out: 1,
        f: |x| s(x[0].max(x[1])),
        jac: Some(|x| {
            if x[0] > x[1] {
                row(&[1.0, 0.0])
            } else if x[1] > x[0] {
                row(&[0.0, 1.0])
            } else {
                None
            }
        }),
    },
    NamedFunction {
        name: "abs_sum",
        dim_in: 2,
        dim_out: 1,
        f: |x| s(x[0].abs() + x[1].abs()),
        jac: Some(|x| {
            if x[0] == 0.0 || x[1] == 0.0 {
                None
            } else {
                row(&[x[0].signum(), x[1].signum()])
            }
        }),
    },
    NamedFunction {
        name: "smooth2",
        dim_in: 2,
        dim_out: 1,
        f: |x| s(x[0].sin() + x[1] * x[1]),
        jac: Some(|x| row(&[x[0].cos(), 2.0 * x[1]])),
    },
    NamedFunction {
        name: "abs_pair",
        dim_in: 1,
        dim_out: 2,
        f: |x| Vector::from_vec(vec![x[0].abs(), x[0]]),
        jac: Some(|x| {
            if x[0] == 0.0 {
                None
            } else {
                Some(Matrix::from_column_slice(2, 1, &[x[0].signum(), 1.0]))
            }
        }),
    },
];

/// Names of the registered single-valued functions.
pub fn function_names() -> Vec<&'static str> {
    FUNCTIONS.iter().map(|f| f.name).collect::<Vec<_>>().into_iter().chain(["linear"]).collect()
}

/// Names of the registered set-valued oracles.
pub fn oracle_names() -> Vec<&'static str> {
    vec!["sqrt_hook", "ray_map", "sign_map", "whole_space"]
}

/// `x -> A x + b`.
pub struct Affine {
    a: Matrix,
    b: Vector,
}

impl Affine {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        crate::error::check_dim(a.nrows(), b.len())?;
        Ok(Affine { a, b })
    }
}

impl Function for Affine {
    fn name(&self) -> &str {
        "linear"
    }
    fn dim_in(&self) -> usize {
        self.a.ncols()
    }
    fn dim_out(&self) -> usize {
        self.a.nrows()
    }
    fn eval(&self, x: &Vector) -> Result<Vector> {
        crate::error::check_dim(self.a.ncols(), x.len())?;
        Ok(&self.a * x + &self.b)
    }
    fn jacobian(&self, _x: &Vector) -> Option<Matrix> {
        Some(self.a.clone())
    }
    fn params(&self) -> Value {
        let rows: Vec<Vec<f64>> =
            (0..self.a.nrows()).map(|i| (0..self.a.ncols()).map(|j| self.a[(i, j)]).collect()).collect();
        serde_json::json!({"matrix": rows, "offset": self.b.iter().copied().collect::<Vec<_>>()})
    }
}

fn param_usize(params: &Value, key: &str, default: usize) -> Result<usize> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|u| u as usize)
            .ok_or_else(|| Error::Invalid(format!("parameter {key:?} must be a nonnegative integer"))),
    }
}

pub(crate) fn matrix_param(params: &Value, key: &str) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = serde_json::from_value(
        params.get(key).cloned().ok_or_else(|| Error::Invalid(format!("missing parameter {key:?}")))?,
    )
    .map_err(|e| Error::Invalid(format!("parameter {key:?}: {e}")))?;
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Invalid(format!("parameter {key:?} must be a nonempty rectangular matrix")));
    }
    Ok(Matrix::from_fn(m, n, |i, j| rows[i][j]))
}

/// Looks up a single-valued function.
pub fn function_by_name(name: &str, params: &Value) -> Result<Arc<dyn Function>> {
    if name == "linear" {
        let a = matrix_param(params, "matrix")?;
        let b = match params.get("offset") {
            None | Some(Value::Null) => Vector::zeros(a.nrows()),
            Some(v) => Vector::from_vec(
                serde_json::from_value(v.clone()).map_err(|e| Error::Invalid(format!("parameter \"offset\": {e}")))?,
            ),
        };
        return Ok(Arc::new(Affine::new(a, b)?));
    }
    FUNCTIONS
        .iter()
        .find(|f| f.name == name)
        .map(|f| {
            Arc::new(NamedFunction { name: f.name, dim_in: f.dim_in, dim_out: f.dim_out, f: f.f, jac: f.jac })
                as Arc<dyn Function>
        })
        .ok_or_else(|| Error::Invalid(format!("unknown function {name:?}")))
}

/// Looks up a set-valued oracle.
pub fn oracle_by_name(name: &str, params: &Value) -> Result<Arc<dyn Oracle>> {
    Ok(match name {
        "sqrt_hook" => Arc::new(SqrtHook),
        "ray_map" => Arc::new(RayMap),
        "sign_map" => Arc::new(SignMap),
        "whole_space" => Arc::new(WholeSpace {
            dim_in: param_usize(params, "dim_in", 1)?,
            dim_out: param_usize(params, "dim_out", 1)?,
        }),
        _ => return Err(Error::Invalid(format!("unknown oracle {name:?}"))),
    })
}

/// Resolves a name to a set-valued map: oracles first, then single-valued
/// functions wrapped as `x -> {f(x)}` on the box `[-domain, domain]^n`
/// (parameter `"domain"`, default 10).
pub fn map_by_name(name: &str, params: &Value) -> Result<SVMap> {
    let h = params.get("resolution").and_then(Value::as_f64).unwrap_or(DEFAULT_RESOLUTION);
    if let Ok(o) = oracle_by_name(name, params) {
        return Ok(SVMap::from_oracle(o, h));
    }
    let f = function_by_name(name, params)?;
    let half = params.get("domain").and_then(Value::as_f64).unwrap_or(10.0);
    let n = f.dim_in();
    Ok(SVMap::from_function(f, DomainBox::cube(n, half)))
}

//! Python bindings. Structured results cross the boundary as JSON and come
//! out as plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use tdiff_core::certify::{certify_ball, certify_pseudo, certify_setvalued, estimate_lip as lip, CertConfig, Notion};
use tdiff_core::coderiv::{coderivative as coderiv, graphical_derivative as graph_deriv, graphical_modulus, mord_t};
use tdiff_core::gallery::map_by_name;
use tdiff_core::geom::Vector;
use tdiff_core::instance::{all_instances, run_instance as run, RunFlags};

fn err(e: tdiff_core::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn vec_of(v: &[f64]) -> Vector {
    Vector::from_column_slice(v)
}

fn config(json: Option<&str>) -> PyResult<CertConfig> {
    json.map(from_json).transpose().map(Option::unwrap_or_default)
}

/// Positively homogeneous set-valued map between Euclidean spaces.
#[pyclass(name = "HomogMap", module = "tdiff", frozen)]
struct PyHomogMap(tdiff_core::HomogMap);

#[pymethods]
impl PyHomogMap {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self(from_json(text)?))
    }

    #[staticmethod]
    fn zero(dim_in: usize, dim_out: usize) -> Self {
        Self(tdiff_core::HomogMap::zero(dim_in, dim_out))
    }

    #[staticmethod]
    fn ball(dim_in: usize, dim_out: usize, kappa: f64) -> PyResult<Self> {
        tdiff_core::HomogMap::ball(dim_in, dim_out, kappa).map(Self).map_err(err)
    }

    /// Linear map given by its matrix rows.
    #[staticmethod]
    fn linear(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("rows have different lengths"));
        }
        let a = tdiff_core::homog::Matrix::from_fn(m, n, |i, j| rows[i][j]);
        Ok(Self(tdiff_core::HomogMap::linear(a)))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn dim_in(&self) -> usize {
        self.0.dim_in()
    }

    #[getter]
    fn dim_out(&self) -> usize {
        self.0.dim_out()
    }

    fn eval<'py>(&self, py: Python<'py>, w: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.eval(&vec_of(&w)).map_err(err)?)
    }

    fn outer_norm(&self) -> PyResult<f64> {
        self.0.outer_norm().map_err(err)
    }

    fn inflate(&self, delta: f64) -> PyResult<Self> {
        self.0.inflate(delta).map(Self).map_err(err)
    }

    /// The composition `other` after `self`.
    fn then(&self, other: &PyHomogMap) -> PyResult<Self> {
        tdiff_core::HomogMap::compose(&other.0, &self.0).map(Self).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("HomogMap(dim_in={}, dim_out={})", self.0.dim_in(), self.0.dim_out())
    }
}

/// Set-valued map with a polyhedral graph or an oracle backend.
#[pyclass(name = "SVMap", module = "tdiff", frozen)]
struct PySVMap(tdiff_core::SVMap);

#[pymethods]
impl PySVMap {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self(from_json(text)?))
    }

    /// A built-in map looked up by name, with optional JSON parameters.
    #[staticmethod]
    #[pyo3(signature = (name, params=None))]
    fn by_name(name: &str, params: Option<&str>) -> PyResult<Self> {
        let p = params.map(from_json).transpose()?.unwrap_or(serde_json::Value::Null);
        map_by_name(name, &p).map(Self).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn dim_in(&self) -> usize {
        self.0.dim_in()
    }

    #[getter]
    fn dim_out(&self) -> usize {
        self.0.dim_out()
    }

    fn eval<'py>(&self, py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.eval(&vec_of(&x)).map_err(err)?)
    }

    #[pyo3(signature = (x, y, tol=1e-9))]
    fn on_graph(&self, x: Vec<f64>, y: Vec<f64>, tol: f64) -> PyResult<bool> {
        self.0.on_graph(&vec_of(&x), &vec_of(&y), tol).map_err(err)
    }

    fn invert(&self) -> PyResult<Self> {
        self.0.invert().map(Self).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("SVMap(dim_in={}, dim_out={})", self.0.dim_in(), self.0.dim_out())
    }
}

/// Certify or refute a notion for `s` at `x` against `t`.
///
/// Calmness and the Aubin property take `kappa` in place of `t`. Pseudo
/// notions need the base value `y`. `config` is a partial JSON config.
#[pyfunction]
#[pyo3(signature = (s, x, notion, t=None, y=None, kappa=None, config=None))]
#[allow(clippy::too_many_arguments)]
fn certify<'py>(
    py: Python<'py>,
    s: &PySVMap,
    x: Vec<f64>,
    notion: &str,
    t: Option<&PyHomogMap>,
    y: Option<Vec<f64>>,
    kappa: Option<f64>,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let n: Notion = serde_json::from_value(serde_json::Value::String(notion.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown notion {notion:?}")))?;
    let cfg = self::config(config)?;
    let x = vec_of(&x);
    let y = y.map(|v| vec_of(&v));
    let need_y = || y.clone().ok_or_else(|| PyValueError::new_err(format!("{notion} needs y")));
    let cert = py.detach(|| -> PyResult<_> {
        match n {
            Notion::Calm | Notion::Aubin => {
                let k = kappa.ok_or_else(|| PyValueError::new_err(format!("{notion} needs kappa")))?;
                certify_ball(&s.0, &x, &need_y()?, k, n, &cfg).map_err(err)
            }
            _ => {
                let t = t.ok_or_else(|| PyValueError::new_err(format!("{notion} needs t")))?;
                if n.is_pseudo() {
                    certify_pseudo(&s.0, &x, &need_y()?, &t.0, n, &cfg).map_err(err)
                } else {
                    certify_setvalued(&s.0, &x, &t.0, n, &cfg).map_err(err)
                }
            }
        }
    })?;
    to_py(py, &cert)
}

/// Sampled Lipschitz-like modulus of `s` near `(x, y)`.
#[pyfunction]
#[pyo3(signature = (s, x, y=None, config=None))]
fn estimate_lip<'py>(
    py: Python<'py>,
    s: &PySVMap,
    x: Vec<f64>,
    y: Option<Vec<f64>>,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config)?;
    let y = y.map(|v| vec_of(&v));
    let m = lip(&s.0, &vec_of(&x), y.as_ref(), &cfg).map_err(err)?;
    to_py(py, &m)
}

/// Coderivative of a polyhedral map at a graph point, with its norm and the
/// verdict of the coderivative criterion.
#[pyfunction]
fn coderivative<'py>(py: Python<'py>, s: &PySVMap, x: Vec<f64>, y: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let d = coderiv(&s.0, &vec_of(&x), &vec_of(&y)).map_err(err)?;
    let out = serde_json::json!({
        "coderivative": d,
        "graphical_modulus": tdiff_core::num::to_json(graphical_modulus(&d).map_err(err)?),
        "criterion_holds": d.criterion_holds().map_err(err)?,
    });
    to_py(py, &out)
}

#[pyfunction]
fn graphical_derivative(s: &PySVMap, x: Vec<f64>, y: Vec<f64>) -> PyResult<PyHomogMap> {
    graph_deriv(&s.0, &vec_of(&x), &vec_of(&y)).map(PyHomogMap).map_err(err)
}

/// Ball map built from the coderivative at a graph point.
#[pyfunction]
fn coderivative_ball(s: &PySVMap, x: Vec<f64>, y: Vec<f64>) -> PyResult<PyHomogMap> {
    let d = coderiv(&s.0, &vec_of(&x), &vec_of(&y)).map_err(err)?;
    mord_t(&d).map(PyHomogMap).map_err(err)
}

/// Run an instance document and return `(report, exit_code)`.
#[pyfunction]
#[pyo3(signature = (text, seed=0, truncation=None))]
fn run_instance<'py>(
    py: Python<'py>,
    text: &str,
    seed: u64,
    truncation: Option<f64>,
) -> PyResult<(Bound<'py, PyAny>, i32)> {
    let flags = RunFlags { seed, truncation, ..RunFlags::default() };
    let out = py.detach(|| run(text, &flags)).map_err(err)?;
    Ok((to_py(py, &out.report)?, out.exit_code))
}

/// Built-in instance documents keyed by file name.
#[pyfunction]
fn gallery(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    let all: std::collections::BTreeMap<_, _> = all_instances().map_err(err)?.into_iter().collect();
    to_py(py, &all)
}

#[pymodule]
fn tdiff(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHomogMap>()?;
    m.add_class::<PySVMap>()?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_lip, m)?)?;
    m.add_function(wrap_pyfunction!(coderivative, m)?)?;
    m.add_function(wrap_pyfunction!(graphical_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(coderivative_ball, m)?)?;
    m.add_function(wrap_pyfunction!(run_instance, m)?)?;
    m.add_function(wrap_pyfunction!(gallery, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

use serde::{Deserialize, Serialize};

use super::engine::{run_layout, Layout};
use super::CertConfig;
use crate::error::Result;
use crate::geom::Vector;
use crate::homog::HomogMap;
use crate::svmap::SVMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusKind {
    /// Calmness modulus at a point.
    Clm,
    /// Lipschitz modulus at a point.
    Lip,
    /// Calmness modulus at `xbar` for `ybar`.
    ClmAtFor,
    /// Lipschitz-like (Aubin) modulus at `xbar` for `ybar`.
    LipAtFor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modulus {
    pub kind: ModulusKind,
    #[serde(with = "crate::num")]
    pub value: f64,
    /// Supremum of the sampled difference quotients per rung.
    #[serde(with = "crate::num::vec")]
    pub per_rung: Vec<f64>,
    pub radii: Vec<f64>,
    pub base_point: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_value: Option<Vec<f64>>,
}

fn estimate(s: &SVMap, xbar: &Vector, ybar: Option<&Vector>, layout: Layout, kind: ModulusKind, cfg: &CertConfig) -> Result<Modulus> {
    let zero = HomogMap::zero(s.dim_in(), s.dim_out());
    let slack = cfg.geometric_slack(s.resolution());
    let rungs = run_layout(s, xbar, ybar, &zero, layout, cfg)?;
    let per_rung: Vec<f64> = rungs
        .iter()
        .map(|r| {
            r.samples
                .iter()
                .filter(|x| x.scale > 0.0)
                .map(|x| (x.excess - slack).max(0.0) / x.scale)
                .fold(0.0, f64::max)
        })
        .collect();
    let first = per_rung[0];
    let last = *per_rung.last().unwrap();
    let value = if !last.is_finite() || (last > 2.0 * first && last > 1e-6) { f64::INFINITY } else { last };
    Ok(Modulus {
        kind,
        value,
        per_rung,
        radii: cfg.radius_ladder.clone(),
        base_point: xbar.iter().copied().collect(),
        base_value: ybar.map(|y| y.iter().copied().collect()),
    })
}

/// Sampled calmness modulus, at `xbar` or at `(xbar, ybar)` when `ybar` is
/// given. Growth of the quotients down the ladder is reported as `+inf`.
pub fn estimate_clm(s: &SVMap, xbar: &Vector, ybar: Option<&Vector>, cfg: &CertConfig) -> Result<Modulus> {
    let kind = if ybar.is_some() { ModulusKind::ClmAtFor } else { ModulusKind::Clm };
    estimate(s, xbar, ybar, Layout::Outer, kind, cfg)
}

/// Sampled Lipschitz modulus, at `xbar` or at `(xbar, ybar)`.
pub fn estimate_lip(s: &SVMap, xbar: &Vector, ybar: Option<&Vector>, cfg: &CertConfig) -> Result<Modulus> {
    let kind = if ybar.is_some() { ModulusKind::LipAtFor } else { ModulusKind::Lip };
    estimate(s, xbar, ybar, Layout::Strict, kind, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::function_by_name;
    use crate::geom::vector;
    use crate::homog::Matrix;
    use crate::svmap::DomainBox;

    #[test]
    fn linear_moduli() {
        let s = SVMap::linear(&Matrix::from_element(1, 1, 2.0)).unwrap();
        let cfg = CertConfig::default();
        let c = estimate_clm(&s, &vector(&[0.3]), None, &cfg).unwrap();
        assert!((c.value - 2.0).abs() < 1e-4, "{c:?}");
        let l = estimate_lip(&s, &vector(&[0.3]), None, &cfg).unwrap();
        assert!((l.value - 2.0).abs() < 1e-4);
    }

    #[test]
    fn cube_root_is_not_calm() {
        let f = function_by_name("cube_root", &serde_json::Value::Null).unwrap();
        let s = SVMap::from_function(f, DomainBox::cube(1, 2.0));
        let c = estimate_clm(&s, &vector(&[0.0]), None, &CertConfig::default()).unwrap();
        assert_eq!(c.value, f64::INFINITY);
        let a = function_by_name("abs", &serde_json::Value::Null).unwrap();
        let s = SVMap::from_function(a, DomainBox::cube(1, 2.0));
        let c = estimate_clm(&s, &vector(&[0.0]), None, &CertConfig::default()).unwrap();
        assert!((c.value - 1.0).abs() < 1e-4);
    }
}

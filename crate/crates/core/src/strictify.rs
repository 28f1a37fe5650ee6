//! Strict differentiability from outer certificates on a neighborhood, and
//! the identity between the Lipschitz modulus and the upper limit of nearby
//! calmness moduli.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::engine::grid_points;
use crate::certify::{certify_pseudo, estimate_clm, estimate_lip, CertConfig, Certificate, Notion, Verdict};
use crate::error::{check_dim, Error, Result};
use crate::geom::{Ball, Vector};
use crate::homog::HomogMap;
use crate::svmap::{GraphPoint, SVMap, DEFAULT_PROBE_LADDER};

#[derive(Clone, Debug, Serialize)]
pub struct Probe {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// Which form of the neighborhood hypothesis is probed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// Outer certificates at every net point, base point included.
    #[default]
    Standard,
    /// The base point is left out of the net; outer semicontinuity at the
    /// base point is probed instead.
    ExcludeBase,
}

#[derive(Clone, Debug, Serialize)]
pub struct StrictifyReport {
    pub predicted: Verdict,
    pub certificate: Certificate,
    pub consistent: bool,
    pub probes: Vec<Probe>,
    pub net: Vec<Certificate>,
}

/// Graph points `(x, proj_{S(x)} ybar)` over a small grid around `xbar`.
pub fn graph_net(s: &SVMap, xbar: &Vector, ybar: &Vector, radius: f64, per_axis: usize, seed: u64) -> Result<Vec<GraphPoint>> {
    check_dim(s.dim_in(), xbar.len())?;
    check_dim(s.dim_out(), ybar.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for x in grid_points(xbar, radius, per_axis, per_axis.pow(xbar.len() as u32), &mut rng) {
        if !s.in_domain(&x) {
            continue;
        }
        let v = s.eval(&x)?;
        if !v.is_empty() {
            out.push(GraphPoint { y: v.project(ybar)?, x });
        }
    }
    Ok(out)
}

fn fail(probes: &[Probe]) -> Option<Error> {
    probes
        .iter()
        .find(|p| !p.passed)
        .map(|p| Error::HypothesisFailure(format!("{}: {}", p.name, p.detail)))
}

/// Certifies pseudo outer differentiability on `net`, probes the remaining
/// hypotheses, and compares the predicted strict verdict with a direct run.
pub fn strict_from_outer(
    s: &SVMap,
    t: &HomogMap,
    xbar: &Vector,
    ybar: &Vector,
    cfg: &CertConfig,
    net: &[GraphPoint],
    mode: ProbeMode,
) -> Result<StrictifyReport> {
    check_dim(s.dim_in(), t.dim_in())?;
    check_dim(s.dim_out(), t.dim_out())?;
    if !s.on_graph(xbar, ybar, 1e-7)? {
        return Err(Error::NotOnGraph);
    }
    let mut probes = Vec::new();
    let norm = t.outer_norm()?;
    probes.push(Probe {
        name: "outer norm".into(),
        passed: norm.is_finite(),
        detail: format!("{norm}"),
    });
    let nonconvex = t.convexity_violation(32)?;
    probes.push(Probe {
        name: "convex values".into(),
        passed: nonconvex.is_none(),
        detail: nonconvex.map(|w| format!("midpoint test fails at {:?}", w.as_slice())).unwrap_or_default(),
    });
    if let Some(e) = fail(&probes) {
        return Err(e);
    }
    let points: Vec<&GraphPoint> = net
        .iter()
        .filter(|p| mode == ProbeMode::Standard || (&p.x - xbar).norm() + (&p.y - ybar).norm() > 0.0)
        .collect();
    let certs = points
        .par_iter()
        .map(|p| certify_pseudo(s, &p.x, &p.y, t, Notion::PseudoOuterT, cfg))
        .collect::<Result<Vec<_>>>()?;
    let bad: Vec<String> = points
        .iter()
        .zip(&certs)
        .filter(|(_, c)| !c.verified())
        .map(|(p, c)| format!("x = {:?} ({:?})", p.x.as_slice(), c.verdict))
        .collect();
    probes.push(Probe {
        name: "outer certificates on the net".into(),
        passed: bad.is_empty() && !certs.is_empty(),
        detail: if certs.is_empty() { "empty net".into() } else { bad.join(", ") },
    });
    let trunc = Ball::new(ybar.clone(), cfg.truncation.radius)?;
    let semi = s.semicontinuity_report(xbar, &trunc, &DEFAULT_PROBE_LADDER)?;
    probes.push(Probe {
        name: "inner semicontinuity".into(),
        passed: semi.inner.holds,
        detail: format!("gaps {:?}", semi.inner.gaps),
    });
    if mode == ProbeMode::ExcludeBase {
        probes.push(Probe {
            name: "outer semicontinuity".into(),
            passed: semi.outer.holds,
            detail: format!("gaps {:?}", semi.outer.gaps),
        });
    }
    if let Some(e) = fail(&probes) {
        return Err(e);
    }
    let mut measured = certify_pseudo(s, xbar, ybar, t, Notion::PseudoStrictT, cfg)?;
    let consistent = !measured.refuted();
    if !consistent {
        measured.notes.push("direct strict run refuted a predicted verification".into());
        measured.verdict = Verdict::Inconclusive;
    }
    Ok(StrictifyReport { predicted: Verdict::VerifiedAtScale, certificate: measured, consistent, probes, net: certs })
}

#[derive(Clone, Debug, Serialize)]
pub struct LimsupRecord {
    #[serde(with = "crate::num")]
    pub lip_est: f64,
    #[serde(with = "crate::num")]
    pub clm_sup_est: f64,
    #[serde(with = "crate::num")]
    pub gap: f64,
    pub tolerance: f64,
    pub net_radius: f64,
    pub net_size: usize,
    pub inner_semicontinuous: bool,
    /// `lip >= limsup clm` up to the tolerance.
    pub one_sided: bool,
    /// `|gap| <= tolerance`, asserted only under inner semicontinuity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equality: Option<bool>,
}

/// Compares the sampled Lipschitz modulus at `(xbar, ybar)` with the largest
/// calmness modulus over a punctured graph net around it.
pub fn lip_equals_limsup_clm(s: &SVMap, xbar: &Vector, ybar: &Vector, cfg: &CertConfig) -> Result<LimsupRecord> {
    if !s.on_graph(xbar, ybar, 1e-7)? {
        return Err(Error::NotOnGraph);
    }
    let lip = estimate_lip(s, xbar, Some(ybar), cfg)?.value;
    let net_radius = *cfg.radius_ladder.last().expect("validated ladder");
    let net: Vec<GraphPoint> = graph_net(s, xbar, ybar, net_radius, 5, cfg.seed)?
        .into_iter()
        .filter(|p| (&p.x - xbar).norm() + (&p.y - ybar).norm() > 0.0)
        .collect();
    if net.is_empty() {
        return Err(Error::CoverageGap("no graph points near the base point".into()));
    }
    let clms = net
        .par_iter()
        .map(|p| estimate_clm(s, &p.x, Some(&p.y), cfg).map(|m| m.value))
        .collect::<Result<Vec<_>>>()?;
    let clm_sup = clms.into_iter().fold(0.0, f64::max);
    let trunc = Ball::new(ybar.clone(), cfg.truncation.radius)?;
    let inner = s.semicontinuity_report(xbar, &trunc, &DEFAULT_PROBE_LADDER)?.inner.holds;
    let tolerance = 1e-3 + 0.02 * lip.min(clm_sup);
    let gap = lip - clm_sup;
    let one_sided = if lip.is_infinite() { true } else { gap >= -tolerance };
    let equality = inner.then(|| if lip.is_infinite() { clm_sup.is_infinite() } else { gap.abs() <= tolerance });
    Ok(LimsupRecord {
        lip_est: lip,
        clm_sup_est: clm_sup,
        gap,
        tolerance,
        net_radius,
        net_size: net.len(),
        inner_semicontinuous: inner,
        one_sided,
        equality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::function_by_name;
    use crate::geom::{vector, Halfspace, Polyhedron};
    use crate::homog::{half_line_example_map, Matrix};
    use crate::svmap::DomainBox;

    fn lower_half_line() -> SVMap {
        let g = Polyhedron::from_hrep(2, vec![Halfspace::new(vector(&[-1.0, 1.0]), 0.0).unwrap()]).unwrap();
        SVMap::poly_graph(1, 1, vec![g]).unwrap()
    }

    #[test]
    fn half_line_strict_from_outer() {
        let s = lower_half_line();
        let t = half_line_example_map();
        let cfg = CertConfig::default();
        let (x, y) = (vector(&[0.0]), vector(&[0.0]));
        let net = graph_net(&s, &x, &y, 0.05, 5, 0).unwrap();
        let r = strict_from_outer(&s, &t, &x, &y, &cfg, &net, ProbeMode::Standard).unwrap();
        assert!(r.consistent && r.certificate.verified(), "{:?}", r.probes);
        assert_eq!(r.net.len(), net.len());
    }

    #[test]
    fn abs_with_slope_one_fails_the_outer_hypothesis() {
        let f = function_by_name("abs", &serde_json::Value::Null).unwrap();
        let s = SVMap::from_function(f, DomainBox::cube(1, 2.0));
        let t = HomogMap::linear(Matrix::from_element(1, 1, 1.0));
        let (x, y) = (vector(&[0.0]), vector(&[0.0]));
        let net = graph_net(&s, &x, &y, 0.05, 5, 0).unwrap();
        let e = strict_from_outer(&s, &t, &x, &y, &CertConfig::default(), &net, ProbeMode::Standard).unwrap_err();
        assert!(matches!(e, Error::HypothesisFailure(ref m) if m.contains("net")), "{e}");
    }

    #[test]
    fn linear_map_passes_everything() {
        let s = SVMap::linear(&Matrix::from_element(1, 1, -3.0)).unwrap();
        let t = HomogMap::linear(Matrix::from_element(1, 1, -3.0));
        let (x, y) = (vector(&[1.0]), vector(&[-3.0]));
        let net = graph_net(&s, &x, &y, 0.05, 5, 0).unwrap();
        for mode in [ProbeMode::Standard, ProbeMode::ExcludeBase] {
            let r = strict_from_outer(&s, &t, &x, &y, &CertConfig::default(), &net, mode).unwrap();
            assert!(r.certificate.verified());
        }
    }

    #[test]
    fn lip_and_calm_moduli_agree() {
        let cfg = CertConfig::default();
        let s = SVMap::linear(&Matrix::from_element(1, 1, 2.0)).unwrap();
        let r = lip_equals_limsup_clm(&s, &vector(&[0.0]), &vector(&[0.0]), &cfg).unwrap();
        assert!((r.lip_est - 2.0).abs() < 1e-3 && (r.clm_sup_est - 2.0).abs() < 1e-3, "{r:?}");
        assert_eq!(r.equality, Some(true));
        let g = Polyhedron::from_hrep(
            2,
            vec![
                Halfspace::new(vector(&[1.0, -1.0]), 0.0).unwrap(),
                Halfspace::new(vector(&[-1.0, -1.0]), 0.0).unwrap(),
            ],
        )
        .unwrap();
        let epi = SVMap::poly_graph(1, 1, vec![g]).unwrap();
        let r = lip_equals_limsup_clm(&epi, &vector(&[0.0]), &vector(&[0.0]), &cfg).unwrap();
        assert!((r.lip_est - 1.0).abs() < 0.05 && (r.clm_sup_est - 1.0).abs() < 0.05, "{r:?}");
        assert!(r.one_sided);
        let sq = SVMap::from_function(function_by_name("square", &serde_json::Value::Null).unwrap(), DomainBox::cube(1, 3.0));
        let r = lip_equals_limsup_clm(&sq, &vector(&[1.0]), &vector(&[1.0]), &cfg).unwrap();
        assert!((r.lip_est - 2.0).abs() < 0.04, "{r:?}");
        assert!(r.one_sided && r.equality == Some(true), "{r:?}");
    }
}

//! Sampled certification and refutation of differentiability notions, and
//! estimates of calmness and Lipschitz moduli.
//!
//! A run walks a ladder of shrinking neighborhoods. For every pair of
//! sampled base points it measures how far the left-hand side of the
//! defining inclusion sticks out of the right-hand side; a `delta` passes at
//! a rung when every excess is covered by `delta |x - x'|` plus the
//! geometric slack `10 eps + h`.

pub(crate) mod engine;
mod moduli;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Vector, EPS};

pub use engine::{
    certify_ball, certify_pseudo, certify_setvalued, certify_single, globalize, recheck_witness,
};
pub(crate) use engine::Sample;
pub use moduli::{estimate_clm, estimate_lip, Modulus, ModulusKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Notion {
    #[serde(rename = "outerT")]
    OuterT,
    #[serde(rename = "innerT")]
    InnerT,
    #[serde(rename = "T")]
    T,
    #[serde(rename = "strictT")]
    StrictT,
    #[serde(rename = "pseudoOuterT")]
    PseudoOuterT,
    #[serde(rename = "pseudoInnerT")]
    PseudoInnerT,
    #[serde(rename = "pseudoT")]
    PseudoT,
    #[serde(rename = "pseudoStrictT")]
    PseudoStrictT,
    #[serde(rename = "calm")]
    Calm,
    #[serde(rename = "aubin")]
    Aubin,
    #[serde(rename = "singleT")]
    SingleT,
    #[serde(rename = "singleStrictT")]
    SingleStrictT,
    /// Metric regularity, open covering and subregularity; produced by the
    /// regularity module.
    #[serde(rename = "metricRegularity")]
    MetricRegularity,
    #[serde(rename = "openCovering")]
    OpenCovering,
    #[serde(rename = "metricSubregularity")]
    MetricSubregularity,
}

impl Notion {
    pub fn is_pseudo(self) -> bool {
        matches!(
            self,
            Notion::PseudoOuterT | Notion::PseudoInnerT | Notion::PseudoT | Notion::PseudoStrictT | Notion::Aubin
        )
    }

    pub fn is_strict(self) -> bool {
        matches!(self, Notion::StrictT | Notion::PseudoStrictT | Notion::Aubin | Notion::SingleStrictT)
    }

    /// The non-pseudo notion a family of pseudo certificates aggregates to.
    pub fn globalized(self) -> Option<Notion> {
        match self {
            Notion::PseudoOuterT => Some(Notion::OuterT),
            Notion::PseudoInnerT => Some(Notion::InnerT),
            Notion::PseudoT => Some(Notion::T),
            Notion::PseudoStrictT => Some(Notion::StrictT),
            _ => None,
        }
    }
}

impl std::str::FromStr for Notion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Invalid(format!("unknown notion {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    VerifiedAtScale,
    Refuted,
    Inconclusive,
}

/// Box used to cut unbounded values down to size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub radius: f64,
    /// Defaults to the point of the base value nearest the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertConfig {
    pub delta_ladder: Vec<f64>,
    /// Half-widths of the box neighborhoods `V`.
    pub radius_ladder: Vec<f64>,
    /// Half-widths of the windows `W` used by pseudo notions, paired with
    /// the rungs of `radius_ladder` (the last entry repeats).
    pub window_ladder: Vec<f64>,
    pub grid_per_axis: usize,
    /// Cap on lattice points per rung in dimension two and above.
    pub max_points: usize,
    /// Cap on sampled pairs per rung for strict notions.
    pub pair_budget: usize,
    pub truncation: Truncation,
    pub seed: u64,
    pub eps_geom: f64,
}

impl Default for CertConfig {
    fn default() -> Self {
        CertConfig {
            delta_ladder: vec![1e-1, 3e-2, 1e-2],
            radius_ladder: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            window_ladder: vec![0.5, 0.3, 0.2, 0.1, 0.05],
            grid_per_axis: 21,
            max_points: 121,
            pair_budget: 3000,
            truncation: Truncation { radius: 10.0, center: None },
            seed: 0,
            eps_geom: EPS,
        }
    }
}

fn check_ladder(name: &str, l: &[f64]) -> Result<()> {
    if l.is_empty() {
        return Err(Error::Invalid(format!("{name} is empty")));
    }
    if l.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Invalid(format!("{name} must be positive")));
    }
    if l.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid(format!("{name} must be strictly decreasing")));
    }
    Ok(())
}

impl CertConfig {
    pub fn validate(&self) -> Result<()> {
        check_ladder("delta_ladder", &self.delta_ladder)?;
        check_ladder("radius_ladder", &self.radius_ladder)?;
        if self.window_ladder.is_empty() || self.window_ladder.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Invalid("window_ladder must be nonempty and positive".into()));
        }
        if self.grid_per_axis < 2 {
            return Err(Error::Invalid("grid_per_axis must be at least 2".into()));
        }
        if !(self.truncation.radius > 0.0) {
            return Err(Error::Invalid("truncation radius must be positive".into()));
        }
        if !(self.eps_geom >= 0.0) {
            return Err(Error::Invalid("eps_geom must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn window(&self, rung: usize) -> f64 {
        self.window_ladder[rung.min(self.window_ladder.len() - 1)]
    }

    /// `10 eps + h`.
    pub fn geometric_slack(&self, resolution: f64) -> f64 {
        10.0 * self.eps_geom + resolution
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(with = "crate::num")]
    pub violation: f64,
    pub delta: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaOutcome {
    pub delta: f64,
    /// Largest rung radius at which every sampled pair passed.
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungRecord {
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    /// Smallest `delta` the sampled pairs of this rung would accept.
    #[serde(with = "crate::num")]
    pub required_delta: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slack {
    pub geometric: f64,
    pub resolution: f64,
    pub proportional: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub notion: Notion,
    pub verdict: Verdict,
    pub base_point: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_value: Option<Vec<f64>>,
    pub deltas: Vec<DeltaOutcome>,
    pub rungs: Vec<RungRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub slack: Slack,
    pub norm: String,
    /// Set when the derivative map carried a polyhedral ball approximation.
    pub approximate_t: bool,
    pub config: CertConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<Certificate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn verified(&self) -> bool {
        self.verdict == Verdict::VerifiedAtScale
    }
    pub fn refuted(&self) -> bool {
        self.verdict == Verdict::Refuted
    }
}

/// Samples of one rung, ready for aggregation.
pub(crate) struct RungSamples {
    pub radius: f64,
    pub window: Option<f64>,
    pub samples: Vec<Sample>,
}

/// Common description of the run that produced a set of rungs.
pub(crate) struct RunInfo<'a> {
    pub notion: Notion,
    pub base_point: &'a Vector,
    pub base_value: Option<&'a Vector>,
    pub resolution: f64,
    pub approximate_t: bool,
    pub cfg: &'a CertConfig,
}

fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Turns per-rung samples into a verdict.
pub(crate) fn decide(info: RunInfo<'_>, rungs: Vec<RungSamples>) -> Certificate {
    let cfg = info.cfg;
    let slack = cfg.geometric_slack(info.resolution);
    let mut records = Vec::with_capacity(rungs.len());
    // worst[k][d] = (violation, sample index)
    let mut worst: Vec<Vec<(f64, Option<usize>)>> = Vec::with_capacity(rungs.len());
    for r in &rungs {
        let mut req: f64 = f64::NEG_INFINITY;
        let mut per_delta = vec![(f64::NEG_INFINITY, None); cfg.delta_ladder.len()];
        for (i, s) in r.samples.iter().enumerate() {
            let q = if s.scale > 0.0 {
                (s.excess - slack) / s.scale
            } else if s.excess > slack {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            req = req.max(q);
            for (d, delta) in cfg.delta_ladder.iter().enumerate() {
                let v = s.excess - delta * s.scale;
                if v > per_delta[d].0 {
                    per_delta[d] = (v, Some(i));
                }
            }
        }
        records.push(RungRecord {
            radius: r.radius,
            window: r.window,
            required_delta: req.max(0.0),
            pairs: r.samples.len(),
        });
        worst.push(per_delta);
    }
    let mut deltas = Vec::with_capacity(cfg.delta_ladder.len());
    let mut verdict = Verdict::VerifiedAtScale;
    let mut witness = None;
    for (d, delta) in cfg.delta_ladder.iter().enumerate() {
        let pass = worst.iter().position(|w| w[d].0 <= slack);
        deltas.push(DeltaOutcome { delta: *delta, radius: pass.map(|k| rungs[k].radius) });
        if pass.is_some() {
            continue;
        }
        let last = rungs.len() - 1;
        let (v, idx) = worst[last][d];
        if v > 3.0 * slack && verdict != Verdict::Refuted {
            verdict = Verdict::Refuted;
            if let Some(i) = idx {
                let s = &rungs[last].samples[i];
                witness = Some(Witness {
                    x: to_vec(&s.x),
                    x_prime: to_vec(&s.x2),
                    y: to_vec(&s.y),
                    violation: v,
                    delta: *delta,
                    radius: rungs[last].radius,
                });
            }
        } else if verdict == Verdict::VerifiedAtScale {
            verdict = Verdict::Inconclusive;
        }
    }
    Certificate {
        notion: info.notion,
        verdict,
        base_point: to_vec(info.base_point),
        base_value: info.base_value.map(to_vec),
        deltas,
        rungs: records,
        witness,
        slack: Slack {
            geometric: 10.0 * cfg.eps_geom,
            resolution: info.resolution,
            proportional: "delta * |x - x'|".into(),
        },
        norm: "euclidean".into(),
        approximate_t: info.approximate_t,
        config: cfg.clone(),
        components: Vec::new(),
        notes: Vec::new(),
    }
}

/// Conjunction of two certificates for the same base point.
pub(crate) fn combine(notion: Notion, a: Certificate, b: Certificate) -> Certificate {
    let verdict = match (a.verdict, b.verdict) {
        (Verdict::Refuted, _) | (_, Verdict::Refuted) => Verdict::Refuted,
        (Verdict::VerifiedAtScale, Verdict::VerifiedAtScale) => Verdict::VerifiedAtScale,
        _ => Verdict::Inconclusive,
    };
    let witness = if a.refuted() { a.witness.clone() } else if b.refuted() { b.witness.clone() } else { None };
    let deltas = a
        .deltas
        .iter()
        .zip(&b.deltas)
        .map(|(x, y)| DeltaOutcome {
            delta: x.delta,
            radius: match (x.radius, y.radius) {
                (Some(p), Some(q)) => Some(p.min(q)),
                _ => None,
            },
        })
        .collect();
    let rungs = a
        .rungs
        .iter()
        .zip(&b.rungs)
        .map(|(x, y)| RungRecord {
            radius: x.radius,
            window: x.window,
            required_delta: x.required_delta.max(y.required_delta),
            pairs: x.pairs + y.pairs,
        })
        .collect();
    Certificate {
        notion,
        verdict,
        base_point: a.base_point.clone(),
        base_value: a.base_value.clone(),
        deltas,
        rungs,
        witness,
        slack: a.slack.clone(),
        norm: a.norm.clone(),
        approximate_t: a.approximate_t || b.approximate_t,
        config: a.config.clone(),
        components: vec![a, b],
        notes: Vec::new(),
    }
}

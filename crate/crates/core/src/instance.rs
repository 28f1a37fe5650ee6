//! Instance files, the task runner and its machine-readable report.
//!
//! An instance names maps and derivative maps once and then lists tasks.
//! Each task runs one operation and may declare the outcome it expects, so a
//! suite of deliberate failures still runs clean. See the repository README
//! for the schema.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::calculus::{chain_t, sum_t, ChainInstance, ChainLink, Decomposition, SumInstance};
use crate::certify::{
    certify_ball, certify_pseudo, certify_setvalued, certify_single, estimate_clm, estimate_lip, CertConfig,
    Certificate, Notion, Verdict,
};
use crate::clarke::{clarke_jacobian, jacobian_t, covector_check, ClarkeConfig, SmoothSampler};
use crate::coderiv::{coderivative, graphical_derivative, graphical_modulus, mord_t};
use crate::corpus;
use crate::error::{Error, Result};
use crate::gallery::{function_by_name, map_by_name};
use crate::geom::{Ball, Vector};
use crate::homog::HomogMap;
use crate::regcover::{alt_defs_check, equivalence_harness, subreg_harness, RegInstance};
use crate::strictify::{graph_net, lip_equals_limsup_clm, strict_from_outer, ProbeMode};
use crate::svmap::{GraphPoint, SVMap, DEFAULT_PROBE_LADDER};

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_MORD_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Op {
    Certify,
    Modulus,
    Coderiv,
    Mord,
    ComposeChain,
    ComposeSum,
    RegcoverHarness,
    Strictify,
    Clarke,
    Semicontinuity,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Certify => "certify",
            Op::Modulus => "modulus",
            Op::Coderiv => "coderiv",
            Op::Mord => "mord",
            Op::ComposeChain => "compose-chain",
            Op::ComposeSum => "compose-sum",
            Op::RegcoverHarness => "regcover-harness",
            Op::Strictify => "strictify",
            Op::Clarke => "clarke",
            Op::Semicontinuity => "semicontinuity",
        }
    }
}

/// What a task produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Verified,
    Refuted,
    Inconclusive,
    /// A hypothesis probe failed, so the operation made no prediction.
    HypothesisFailed,
    /// Estimates without a verdict.
    Computed,
}

impl From<Verdict> for Outcome {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::VerifiedAtScale => Outcome::Verified,
            Verdict::Refuted => Outcome::Refuted,
            Verdict::Inconclusive => Outcome::Inconclusive,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub op: Op,
    #[serde(default)]
    pub args: Value,
    /// Overrides merged into the instance-level certification config.
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub config: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Outcome>,
}

impl Task {
    pub fn new(name: &str, op: Op, args: Value, expect: Option<Outcome>) -> Self {
        Task { name: Some(name.to_string()), op, args, config: Value::Null, expect }
    }

    pub fn with_config(mut self, config: Value) -> Self {
        self.config = config;
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub maps: BTreeMap<String, SVMap>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tmaps: BTreeMap<String, HomogMap>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub config: Value,
    pub tasks: Vec<Task>,
}

impl InstanceFile {
    pub fn new(description: &str) -> Self {
        InstanceFile {
            version: SCHEMA_VERSION,
            description: Some(description.to_string()),
            maps: BTreeMap::new(),
            tmaps: BTreeMap::new(),
            config: Value::Null,
            tasks: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let inst: InstanceFile = serde_json::from_str(text)
            .map_err(|e| Error::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
        if inst.version != SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported instance version {} (expected {SCHEMA_VERSION})",
                inst.version
            )));
        }
        Ok(inst)
    }
}

/// Command-line overrides applied to every task.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunFlags {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    /// Tolerance overrides: `eps_geom`, `mord` (relative modulus gap) and
    /// `clarke` (hull stability).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub tol: BTreeMap<String, f64>,
    /// Only tasks with this op run when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub only: Option<Op>,
    /// Adds wall time to the report, which then stops being reproducible.
    #[serde(skip)]
    pub timing: bool,
}

impl RunFlags {
    fn validate(&self) -> Result<()> {
        for (k, v) in &self.tol {
            if !matches!(k.as_str(), "eps_geom" | "mord" | "clarke") {
                return Err(Error::Invalid(format!("unknown tolerance {k:?} (expected eps_geom, mord or clarke)")));
            }
            if !(*v >= 0.0) {
                return Err(Error::Invalid(format!("tolerance {k} must be nonnegative")));
            }
        }
        if let Some(r) = self.truncation {
            if !(r > 0.0) {
                return Err(Error::Invalid("truncation radius must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ExpectedRefutation,
    UnexpectedRefutation,
    ExpectationMismatch,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct TaskRecord {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub op: Op,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub record: Value,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub tasks: usize,
    pub ok: usize,
    pub expected_refutations: usize,
    pub unexpected_refutations: usize,
    pub mismatches: usize,
    pub errors: usize,
    pub exit_code: i32,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub instance_sha256: String,
    pub flags: RunFlags,
    pub config: CertConfig,
    pub tasks: Vec<TaskRecord>,
    pub summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

pub struct RunOutput {
    pub report: Report,
    pub exit_code: i32,
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, o) if !o.is_null() => *b = o.clone(),
        _ => {}
    }
}

fn parse_args<T: DeserializeOwned>(args: &Value) -> Result<T> {
    let v = if args.is_null() { Value::Object(Map::new()) } else { args.clone() };
    serde_json::from_value(v).map_err(|e| Error::Invalid(format!("arguments: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or_else(|e| json!({ "serialization_error": e.to_string() }))
}

fn vec_of(v: &[f64]) -> Vector {
    Vector::from_column_slice(v)
}

/// Everything a task needs besides its arguments.
struct Ctx<'a> {
    inst: &'a InstanceFile,
    cfg: CertConfig,
    flags: &'a RunFlags,
}

impl Ctx<'_> {
    fn map(&self, v: &Value) -> Result<SVMap> {
        match v {
            Value::String(name) => match self.inst.maps.get(name) {
                Some(s) => Ok(s.clone()),
                None => map_by_name(name, &Value::Null)
                    .map_err(|_| Error::Invalid(format!("map {name:?} is neither declared nor registered"))),
            },
            Value::Object(_) => serde_json::from_value(v.clone()).map_err(|e| Error::Invalid(format!("inline map: {e}"))),
            _ => Err(Error::Invalid("a map is a name or an inline definition".into())),
        }
    }

    /// Resolves a derivative map: a declared name, an inline definition, or
    /// `{"derive": "graphical" | "coderivative"}` taken from `source` at
    /// `(x, y)`.
    fn tmap(&self, v: &Value, source: Option<(&SVMap, &Vector, &Vector)>) -> Result<HomogMap> {
        match v {
            Value::String(name) => {
                self.inst.tmaps.get(name).cloned().ok_or_else(|| Error::Invalid(format!("unknown derivative map {name:?}")))
            }
            Value::Object(o) if o.contains_key("derive") => {
                let (s, x, y) =
                    source.ok_or_else(|| Error::Invalid("derived maps are not available for this argument".into()))?;
                match o["derive"].as_str() {
                    Some("graphical") => graphical_derivative(s, x, y),
                    Some("coderivative") => mord_t(&coderivative(s, x, y)?),
                    _ => Err(Error::Invalid("derive must be \"graphical\" or \"coderivative\"".into())),
                }
            }
            Value::Object(_) => {
                serde_json::from_value(v.clone()).map_err(|e| Error::Invalid(format!("inline derivative map: {e}")))
            }
            _ => Err(Error::Invalid("a derivative map is a name or an inline definition".into())),
        }
    }

    fn tol(&self, key: &str, default: f64) -> f64 {
        self.flags.tol.get(key).copied().unwrap_or(default)
    }
}

fn notions_outcome(certs: &[Certificate]) -> Outcome {
    if certs.iter().any(Certificate::refuted) {
        Outcome::Refuted
    } else if certs.iter().all(Certificate::verified) {
        Outcome::Verified
    } else {
        Outcome::Inconclusive
    }
}

fn default_notions() -> Vec<Notion> {
    vec![Notion::PseudoOuterT]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CertifyArgs {
    map: Value,
    x: Vec<f64>,
    #[serde(default)]
    y: Option<Vec<f64>>,
    #[serde(default)]
    t: Option<Value>,
    #[serde(default)]
    kappa: Option<f64>,
    notion: Notion,
}

fn run_certify(ctx: &Ctx, args: &Value) -> Result<(Outcome, Value)> {
    let a: CertifyArgs = parse_args(args)?;
    let s = ctx.map(&a.map)?;
    let x = vec_of(&a.x);
    let y = a.y.as_deref().map(vec_of);
    let need_y = || y.clone().ok_or_else(|| Error::Invalid(format!("notion {:?} needs a base value y", a.notion)));
    let cert = match a.notion {
        Notion::Calm | Notion::Aubin => {
            let kappa = a.kappa.ok_or_else(|| Error::Invalid("ball notions need kappa".into()))?;
            certify_ball(&s, &x, &need_y()?, kappa, a.notion, &ctx.cfg)?
        }
        n => {
            let tv = a.t.as_ref().ok_or_else(|| Error::Invalid("missing derivative map t".into()))?;
            let t = match &y {
                Some(yv) => ctx.tmap(tv, Some((&s, &x, yv)))?,
                None => ctx.tmap(tv, None)?,
            };
            if matches!(n, Notion::SingleT | Notion::SingleStrictT) {
                let f = s.function().ok_or_else(|| Error::Invalid("single-valued notions need a function".into()))?;
                certify_single(f.clone(), &x, &t, n, &ctx.cfg)?
            } else if n.is_pseudo() {
                certify_pseudo(&s, &x, &need_y()?, &t, n, &ctx.cfg)?
            } else {
                certify_setvalued(&s, &x, &t, n, &ctx.cfg)?
            }
        }
    };
    Ok((cert.verdict.into(), to_value(&cert)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModulusArgs {
    map: Value,
    x: Vec<f64>,
    #[serde(default)]
    y: Option<Vec<f64>>,
    kind: String,
}

fn run_modulus(ctx: &Ctx, args: &Value) -> Result<(Outcome, Value)> {
    let a: ModulusArgs = parse_args(args)?;
    let s = ctx.map(&a.map)?;
    let (x, y) = (vec_of(&a.x), a.y.as_deref().map(vec_of));
    let m = match a.kind.as_str() {
        "clm" => estimate_clm(&s, &x, y.as_ref(), &ctx.cfg)?,
        "lip" => estimate_lip(&s, &x, y.as_ref(), &ctx.cfg)?,
        k => return Err(Error::Invalid(format!("modulus kind {k:?} (expected clm or lip)"))),
    };
    Ok((Outcome::Computed, to_value(&m)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PointArgs {
    map: Value,
    x: Vec<f64>,
    y: Vec<f64>,
    #[serde(default)]
    directions: Vec<Vec<f64>>,
    #[serde(default)]
    tolerance: Option<f64>,
}

fn run_coderiv(ctx: &Ctx, args: &Value) -> Result<(Outcome, Value)> {
    let a: PointArgs = parse_args(args)?;
    let s = ctx.map(&a.map)?;
    let d = coderivative(&s, &vec_of(&a.x), &vec_of(&a.y))?;
    let holds = d.criterion_holds()?;
    let gm = graphical_modulus(&d)?;
    let values = a
        .directions
        .iter()
        .map(|z| Ok(json!({"z": z, "value": to_value(&d.eval(&vec_of(z))?)})))
        .collect::<Result<Vec<_>>>()?;
    let outcome = if holds { Outcome::Verified } else { Outcome::Refuted };
    Ok((
        outcome,
        json!({
            "coderivative": to_value(&d),
            "criterion_holds": holds,
            "graphical_modulus": crate::num::to_json(gm),
            "values": values,
        }),
    ))
}

fn run_mord(ctx: &Ctx, args: &Value) -> Result<(Outcome, Value)> {
    let a: PointArgs = parse_args(args)?;
    let s = ctx.map(&a.map)?;
    let (x, y) = (vec_of(&a.x), vec_of(&a.y));
    let d = coderivative(&s, &x, &y)?;
    let gm = graphical_modulus(&d)?;
    let lip = estimate_lip(&s, &x, Some(&y), &ctx.cfg)?;
    let tol = ctx.tol("mord", a.tolerance.unwrap_or(DEFAULT_MORD_TOL));
    let gap = if gm > 0.0 { (gm - lip.value).abs() / gm } else { (gm - lip.value).abs() };
    let t = mord_t(&d)?;
    let cert = certify_pseudo(&s, &x, &y, &t, Notion::PseudoStrictT, &ctx.cfg)?;
    let outcome = if cert.refuted() || !(gap <= tol) {
        Outcome::Refuted
    } else if cert.verified() {
        Outcome::Verified
    } else {
        Outcome::Inconclusive
    };
    Ok((
        outcome,
        json!({
            "graphical_modulus": crate::num::to_json(gm),
            "estimate_lip": to_value(&lip),
            "relative_gap": crate::num::to_json(gap),
            "tolerance": tol,
            "t": to_value(&t),
            "certificate": to_value(&cert),
        }),
    ))
}

fn certify_notions(ctx: &Ctx, s: &SVMap, x: &Vector, y: &Vector, t: &HomogMap, notions: &[Notion]) -> Result<Vec<Certificate>> {
    notions
        .iter()
        .map(|&n| {
            if !n.is_pseudo() {
                return Err(Error::Invalid(format!("composed maps are certified with pseudo notions, not {n:?}")));
            }
            certify_pseudo(s, x, y, t, n, &ctx.cfg)
        })
        .collect()
}

fn hypothesis_failure(e: Error) -> Result<(Outcome, Value)> {
    match e {
        Error::HypothesisFailure(m) | Error::CoverageGap(m) => {
            Ok((Outcome::HypothesisFailed, json!({ "hypothesis_failure": m })))
        }
        e => Err(e),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkArgs {
    y: Vec<f64>,
    t_in: Value,
    t_out: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainArgs {
    f: Value,
    g: Value,
    x: Vec<f64>,
    z: Vec<f64>,
    links: Vec<LinkArgs>,
    #[serde(default = "default_notions")]
    certify: Vec<Notion>,
}

fn run_chain(ctx: &Ctx, args: &Value) -> Result<(Outcome, Value)> {
    let a: ChainArgs = parse_args(args)?;
    let (f, g) = (ctx.map(&a.f)?, ctx.map(&a.g)?);
    let (x, z) = (vec_of(&a.x), vec_of(&a.z));
    let net = a
        .links
        .iter()
        .map(|l| {
            let y = vec_of(&l.y);
            Ok(ChainLink {
                t_in: ctx.tmap(&l.t_in, Some((&f, &x, &y)))?,
                t_out: ctx.tmap(&l.t_out, Some((&g, &y, &z)))?,
                y,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let inst = ChainInstance { f: f.clone(), g: g.clone(), xbar: x.clone(), zbar: z.clone(), net };
    let composed = match chain_t(&inst) {
        Ok(c) => c,
        Err(e) => return hypothesis_failure(e),
    };
    let gf = SVMap::compose(&g, &f)?;
    let certs = certify_notions(ctx, &gf, &x, &z, &composed.map, &a.certify)?;
    Ok((notions_outcome(&certs), json!({"composed": to_value(&composed), "certificates": to_value(&certs)})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecArgs {
    parts: Vec<Vec<f64>>,
    t: Vec<Value>,
}

fn default_resolution() -> f64 {
    1e-3
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SumArgs {
    maps: Vec<Value>,
    x: Vec<f64>,
    y: Vec<f64>,
    net: Vec<DecArgs>,
    #[serde(default = "default_resolution")]
    resolution: f64,
    #[serde(default = "default_notions")]
    certify: Vec<Notion>,
}

fn run_sum(ctx: &Ctx, args: &Value) -> Result<(Outcome, Value)> {
    let a: SumArgs = parse_args(args)?;
    let maps = a.maps.iter().map(|m| ctx.map(m)).collect::<Result<Vec<_>>>()?;
    let (x, y) = (vec_of(&a.x), vec_of(&a.y));
    let mut net = Vec::new();
    for d in &a.net {
        if d.parts.len() != maps.len() || d.t.len() != maps.len() {
            return Err(Error::Invalid("each decomposition needs one point and one map per summand".into()));
        }
        let parts: Vec<Vector> = d.parts.iter().map(|p| vec_of(p)).collect();
        let tmaps = d
            .t
            .iter()
            .zip(&maps)
            .zip(&parts)
            .map(|((t, s), yi)| ctx.tmap(t, Some((s, &x, yi))))
            .collect::<Result<Vec<_>>>()?;
        net.push(Decomposition { parts, tmaps });
    }
    let inst = SumInstance { maps: maps.clone(), xbar: x.clone(), ybar: y.clone(), net, resolution: a.resolution };
    let composed = match sum_t(&inst) {
        Ok(c) => c,
        Err(e) => return hypothesis_failure(e),
    };
    let total = SVMap::sum(&maps)?;
    let certs = certify_notions(ctx, &total, &x, &y, &composed.map, &a.certify)?;
    Ok((notions_outcome(&certs), json!({"composed": to_value(&composed), "certificates": to_value(&certs)})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegArgs {
    map: Value,
    x: Vec<f64>,
    y: Vec<f64>,
    t: Value,
    #[serde(default = "default_form")]
    form: String,
}

fn default_form() -> String {
    "equivalence".into()
}

fn run_regcover(ctx: &Ctx, args: &Value) -> Result<(Outcome, Value)> {
    let a: RegArgs = parse_args(args)?;
    let s = ctx.map(&a.map)?;
    let (x, y) = (vec_of(&a.x), vec_of(&a.y));
    let inv = s.invert()?;
    let t = ctx.tmap(&a.t, Some((&inv, &y, &x)))?;
    let inst = RegInstance { s, point: GraphPoint { x, y }, t, cfg: ctx.cfg.clone() };
    let (agree, record) = match a.form.as_str() {
        "equivalence" => {
            let r = equivalence_harness(&inst)?;
            (r.agree, to_value(&r))
        }
        "subregularity" => {
            let r = subreg_harness(&inst)?;
            (r.agree, to_value(&r))
        }
        "alternative" => match alt_defs_check(&inst) {
            Ok(r) => (r.agree, to_value(&r)),
            Err(e) => return hypothesis_failure(e),
        },
        f => return Err(Error::Invalid(format!("harness form {f:?} (expected equivalence, subregularity or alternative)"))),
    };
    Ok((if agree { Outcome::Verified } else { Outcome::Refuted }, record))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StrictifyArgs {
    map: Value,
    x: Vec<f64>,
    y: Vec<f64>,
    #[serde(default)]
    t: Option<Value>,
    #[serde(default = "default_check")]
    check: String,
    #[serde(default)]
    mode: ProbeMode,
    #[serde(default = "default_net_radius")]
    net_radius: f64,
    #[serde(default = "default_net_per_axis")]
    net_per_axis: usize,
}

fn default_check() -> String {
    "from_outer".into()
}
fn default_net_radius() -> f64 {
    0.05
}
fn default_net_per_axis() -> usize {
    5
}

fn run_strictify(ctx: &Ctx, args: &Value) -> Result<(Outcome, Value)> {
    let a: StrictifyArgs = parse_args(args)?;
    let s = ctx.map(&a.map)?;
    let (x, y) = (vec_of(&a.x), vec_of(&a.y));
    match a.check.as_str() {
        "from_outer" => {
            let tv = a.t.as_ref().ok_or_else(|| Error::Invalid("missing derivative map t".into()))?;
            let t = ctx.tmap(tv, Some((&s, &x, &y)))?;
            let net = graph_net(&s, &x, &y, a.net_radius, a.net_per_axis, ctx.cfg.seed)?;
            match strict_from_outer(&s, &t, &x, &y, &ctx.cfg, &net, a.mode) {
                Ok(r) => {
                    let outcome = if r.consistent { r.certificate.verdict.into() } else { Outcome::Refuted };
                    Ok((outcome, to_value(&r)))
                }
                Err(e) => hypothesis_failure(e),
            }
        }
        "limsup" => {
            let r = lip_equals_limsup_clm(&s, &x, &y, &ctx.cfg)?;
            let holds = r.one_sided && r.equality != Some(false);
            Ok((if holds { Outcome::Verified } else { Outcome::Refuted }, to_value(&r)))
        }
        c => Err(Error::Invalid(format!("strictify check {c:?} (expected from_outer or limsup)"))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClarkeArgs {
    function: String,
    #[serde(default)]
    params: Value,
    x: Vec<f64>,
    #[serde(default)]
    covectors: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    strict: bool,
}

fn run_clarke(ctx: &Ctx, args: &Value) -> Result<(Outcome, Value)> {
    let a: ClarkeArgs = parse_args(args)?;
    let f = function_by_name(&a.function, &a.params)?;
    let x = vec_of(&a.x);
    let ccfg = ClarkeConfig {
        seed: ctx.cfg.seed,
        stability_tol: ctx.tol("clarke", ClarkeConfig::default().stability_tol),
        ..ClarkeConfig::default()
    };
    if let Some(cov) = &a.covectors {
        let cov: Vec<Vector> = cov.iter().map(|c| vec_of(c)).collect();
        let r = covector_check(f, &cov, &x, &ctx.cfg, &ccfg, ccfg.stability_tol)?;
        let outcome = if r.strict.refuted() || !r.containment {
            Outcome::Refuted
        } else if r.strict.verified() {
            Outcome::Verified
        } else {
            Outcome::Inconclusive
        };
        return Ok((outcome, to_value(&r)));
    }
    let j = clarke_jacobian(&SmoothSampler::new(f.clone()), &x, &ccfg)?;
    let t = jacobian_t(&j)?;
    let notion = if a.strict { Notion::SingleStrictT } else { Notion::SingleT };
    let cert = certify_single(f, &x, &t, notion, &ctx.cfg)?;
    Ok((cert.verdict.into(), json!({"jacobian": to_value(&j), "t": to_value(&t), "certificate": to_value(&cert)})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SemiArgs {
    map: Value,
    x: Vec<f64>,
    property: String,
}

fn run_semicontinuity(ctx: &Ctx, args: &Value) -> Result<(Outcome, Value)> {
    let a: SemiArgs = parse_args(args)?;
    let s = ctx.map(&a.map)?;
    let ball = Ball::centered(s.dim_out(), ctx.cfg.truncation.radius)?;
    let r = s.semicontinuity_report(&vec_of(&a.x), &ball, &DEFAULT_PROBE_LADDER)?;
    let holds = match a.property.as_str() {
        "outer" => r.outer.holds,
        "inner" => r.inner.holds,
        p => return Err(Error::Invalid(format!("property {p:?} (expected outer or inner)"))),
    };
    Ok((if holds { Outcome::Verified } else { Outcome::Refuted }, to_value(&r)))
}

fn run_task(ctx: &Ctx, task: &Task) -> Result<(Outcome, Value)> {
    match task.op {
        Op::Certify => run_certify(ctx, &task.args),
        Op::Modulus => run_modulus(ctx, &task.args),
        Op::Coderiv => run_coderiv(ctx, &task.args),
        Op::Mord => run_mord(ctx, &task.args),
        Op::ComposeChain => run_chain(ctx, &task.args),
        Op::ComposeSum => run_sum(ctx, &task.args),
        Op::RegcoverHarness => run_regcover(ctx, &task.args),
        Op::Strictify => run_strictify(ctx, &task.args),
        Op::Clarke => run_clarke(ctx, &task.args),
        Op::Semicontinuity => run_semicontinuity(ctx, &task.args),
    }
}

fn config_for(base: &Value, task: &Task, flags: &RunFlags) -> Result<CertConfig> {
    let mut v = base.clone();
    merge(&mut v, &task.config);
    let mut cfg: CertConfig = serde_json::from_value(v).map_err(|e| Error::Invalid(format!("config: {e}")))?;
    cfg.seed = flags.seed;
    if let Some(r) = flags.truncation {
        cfg.truncation.radius = r;
    }
    if let Some(e) = flags.tol.get("eps_geom") {
        cfg.eps_geom = *e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn status_of(outcome: Outcome, expect: Option<Outcome>) -> Status {
    match (expect, outcome) {
        (Some(e), o) if e == o => {
            if o == Outcome::Refuted {
                Status::ExpectedRefutation
            } else {
                Status::Ok
            }
        }
        (Some(_), Outcome::Refuted) | (None, Outcome::Refuted) => Status::UnexpectedRefutation,
        (Some(_), _) => Status::ExpectationMismatch,
        (None, _) => Status::Ok,
    }
}

/// Runs an already parsed instance. `hash_source` is the text the hash is
/// taken over.
pub fn run_parsed(inst: &InstanceFile, hash_source: &str, flags: &RunFlags) -> Result<RunOutput> {
    flags.validate()?;
    let start = Instant::now();
    let mut base = serde_json::to_value(CertConfig::default()).map_err(|e| Error::Invalid(e.to_string()))?;
    merge(&mut base, &inst.config);
    let echo: CertConfig = config_for(&base, &Task::new("", Op::Certify, Value::Null, None), flags)?;
    let mut records = Vec::new();
    let mut summary = Summary::default();
    for (index, task) in inst.tasks.iter().enumerate() {
        if flags.only.is_some_and(|o| o != task.op) {
            continue;
        }
        let label = match &task.name {
            Some(n) => format!("task {index} ({n})"),
            None => format!("task {index}"),
        };
        let result = config_for(&base, task, flags).and_then(|cfg| run_task(&Ctx { inst, cfg, flags }, task));
        let rec = match result {
            Ok((outcome, record)) => TaskRecord {
                index,
                name: task.name.clone(),
                op: task.op,
                expect: task.expect,
                outcome: Some(outcome),
                status: status_of(outcome, task.expect),
                error: None,
                record,
            },
            Err(e) => TaskRecord {
                index,
                name: task.name.clone(),
                op: task.op,
                expect: task.expect,
                outcome: None,
                status: Status::Error,
                error: Some(format!("{label}: {e}")),
                record: Value::Null,
            },
        };
        summary.tasks += 1;
        match rec.status {
            Status::Ok => summary.ok += 1,
            Status::ExpectedRefutation => summary.expected_refutations += 1,
            Status::UnexpectedRefutation => summary.unexpected_refutations += 1,
            Status::ExpectationMismatch => summary.mismatches += 1,
            Status::Error => summary.errors += 1,
        }
        records.push(rec);
    }
    summary.exit_code = if summary.errors > 0 {
        1
    } else if summary.unexpected_refutations + summary.mismatches > 0 {
        2
    } else {
        0
    };
    let exit_code = summary.exit_code;
    let report = Report {
        tool: "tdiff".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        instance_sha256: sha256_hex(hash_source),
        flags: flags.clone(),
        config: echo,
        tasks: records,
        summary,
        wall_time_ms: flags.timing.then(|| start.elapsed().as_millis() as u64),
    };
    Ok(RunOutput { report, exit_code })
}

/// Parses and runs an instance file's text.
pub fn run_instance(text: &str, flags: &RunFlags) -> Result<RunOutput> {
    let inst = InstanceFile::parse(text)?;
    run_parsed(&inst, text, flags)
}

fn cone_rays(rays: &[&[[f64; 2]]]) -> Result<HomogMap> {
    let pieces: Vec<Vec<Vec<f64>>> = rays.iter().map(|p| p.iter().map(|r| r.to_vec()).collect()).collect();
    HomogMap::from_rays(1, 1, &pieces)
}

/// `w -> [l(w), inf)` with `l` linear on each side of the origin, given by
/// its values at `1` and `-1`.
pub fn upper_half_line_map(at_plus: f64, at_minus: f64) -> Result<HomogMap> {
    cone_rays(&[&[[1.0, at_plus], [0.0, 1.0]], &[[-1.0, at_minus], [0.0, 1.0]]])
}

fn point_task(name: &str, op: Op, map: &str, x: &[f64], y: &[f64], expect: Outcome) -> Task {
    Task::new(name, op, json!({"map": map, "x": x, "y": y}), Some(expect))
}

fn lower_half_line() -> Result<SVMap> {
    corpus::hrep_map(1, 1, &[(vec![-1.0, 1.0], 0.0)])
}

fn half_line_reflection() -> Result<InstanceFile> {
    let mut inst = InstanceFile::new("S(x) = (-inf, x] with the half-line derivative map and its reflection");
    inst.maps.insert("half_line".into(), lower_half_line()?);
    let t = crate::homog::half_line_example_map();
    inst.tmaps.insert("T_reflected".into(), t.reflect());
    inst.tmaps.insert("T".into(), t);
    for x in [-1.0, 0.0, 1.0] {
        inst.tasks.push(Task::new(
            &format!("strict at {x}"),
            Op::Certify,
            json!({"map": "half_line", "x": [x], "t": "T", "notion": "strictT"}),
            Some(Outcome::Verified),
        ));
    }
    inst.tasks.push(Task::new(
        "reflected outer at 0",
        Op::Certify,
        json!({"map": "half_line", "x": [0.0], "t": "T_reflected", "notion": "outerT"}),
        Some(Outcome::Refuted),
    ));
    Ok(inst)
}

fn vertical_line() -> Result<InstanceFile> {
    let mut inst = InstanceFile::new("vertical line map {x1} x R with two strict derivative maps and their intersection");
    inst.maps.insert("vertical_line".into(), corpus::hrep_map(2, 2, &[(vec![1.0, 0.0, -1.0, 0.0], 0.0), (vec![-1.0, 0.0, 1.0, 0.0], 0.0)])?);
    let t1 = HomogMap::identity(2);
    let t2 = HomogMap::linear(crate::homog::Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    inst.tmaps.insert("T1_and_T2".into(), HomogMap::intersect(&t1, &t2)?);
    inst.tmaps.insert("T1".into(), t1);
    inst.tmaps.insert("T2".into(), t2);
    inst.config = json!({"grid_per_axis": 7, "max_points": 49, "pair_budget": 800});
    for (t, expect) in [("T1", Outcome::Verified), ("T2", Outcome::Verified), ("T1_and_T2", Outcome::Refuted)] {
        inst.tasks.push(Task::new(
            &format!("strict with {t}"),
            Op::Certify,
            json!({"map": "vertical_line", "x": [0.2, -0.3], "t": t, "notion": "strictT"}),
            Some(expect),
        ));
    }
    Ok(inst)
}

fn sqrt_hook() -> Result<InstanceFile> {
    let mut inst = InstanceFile::new("square-root hook oracle with the cone derivative at the origin");
    inst.maps.insert("hook".into(), map_by_name("sqrt_hook", &Value::Null)?);
    inst.tmaps.insert(
        "DS".into(),
        HomogMap::from_rays(1, 2, &[vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]])?,
    );
    inst.config = json!({"radius_ladder": [0.1, 0.05, 0.02, 0.01], "window_ladder": [0.5, 0.4, 0.3, 0.25]});
    inst.tasks.push(Task::new(
        "pseudo strict at the origin",
        Op::Certify,
        json!({"map": "hook", "x": [0.0], "y": [0.0, 0.0], "t": "DS", "notion": "pseudoStrictT"}),
        Some(Outcome::Refuted),
    ));
    Ok(inst)
}

fn whole_space() -> Result<InstanceFile> {
    let mut inst = InstanceFile::new("constant whole-space map with the zero derivative map");
    inst.maps.insert("whole".into(), map_by_name("whole_space", &json!({"dim_in": 1, "dim_out": 1}))?);
    inst.tmaps.insert("zero".into(), HomogMap::zero(1, 1));
    for (x, y) in [(0.0, 0.0), (1.0, -3.0)] {
        inst.tasks.push(Task::new(
            &format!("pseudo at ({x}, {y})"),
            Op::Certify,
            json!({"map": "whole", "x": [x], "y": [y], "t": "zero", "notion": "pseudoT"}),
            Some(Outcome::Verified),
        ));
    }
    Ok(inst)
}

fn ray_map() -> Result<InstanceFile> {
    let mut inst = InstanceFile::new("rays in direction theta: outer and inner semicontinuous everywhere");
    inst.maps.insert("rays".into(), map_by_name("ray_map", &Value::Null)?);
    for th in [0.0, 1.0, std::f64::consts::FRAC_PI_2, -2.5] {
        for p in ["outer", "inner"] {
            inst.tasks.push(Task::new(
                &format!("{p} at {th}"),
                Op::Semicontinuity,
                json!({"map": "rays", "x": [th], "property": p}),
                Some(Outcome::Verified),
            ));
        }
    }
    Ok(inst)
}

fn half_line_tmaps() -> Result<InstanceFile> {
    let mut inst = InstanceFile::new("one-sided estimates for scalar functions through half-line derivative maps");
    let cases: [(&str, &str, f64, f64, f64, Outcome); 8] = [
        // name, function, l(1), l(-1), xbar, expected
        ("abs calm from below, kappa 0", "abs", 0.0, 0.0, 0.0, Outcome::Verified),
        ("neg_abs calm from below, kappa 1", "neg_abs", -1.0, -1.0, 0.0, Outcome::Verified),
        ("neg_abs calm from below, kappa 1/2", "neg_abs", -0.5, -0.5, 0.0, Outcome::Refuted),
        ("abs subgradient 1/2", "abs", 0.5, -0.5, 0.0, Outcome::Verified),
        ("abs subgradient 3/2", "abs", 1.5, -1.5, 0.0, Outcome::Refuted),
        ("abs subdifferential [-1, 1]", "abs", 1.0, 1.0, 0.0, Outcome::Verified),
        ("abs subdifferential [-1, 6/5]", "abs", 1.2, 1.0, 0.0, Outcome::Refuted),
        ("square subgradient 2 at 1", "square", 2.0, -2.0, 1.0, Outcome::Verified),
    ];
    for (i, (name, f, lp, lm, x, expect)) in cases.into_iter().enumerate() {
        let tname = format!("L{i}");
        inst.tmaps.insert(tname.clone(), upper_half_line_map(lp, lm)?);
        inst.tasks.push(Task::new(
            name,
            Op::Certify,
            json!({"map": {"backend": "oracle", "name": f}, "x": [x], "t": tname, "notion": "singleT"}),
            Some(expect),
        ));
    }
    Ok(inst)
}

fn clarke_suite() -> Result<InstanceFile> {
    let mut inst = InstanceFile::new("Clarke Jacobian derivative maps and covector sets");
    for (f, x) in corpus::clarke_corpus() {
        inst.tasks.push(Task::new(
            &format!("{f} at {x:?}"),
            Op::Clarke,
            json!({"function": f, "x": x}),
            Some(Outcome::Verified),
        ));
    }
    for (c, expect) in [(1.0, Outcome::Verified), (0.5, Outcome::Refuted)] {
        inst.tasks.push(Task::new(
            &format!("abs with covectors [-{c}, {c}]"),
            Op::Clarke,
            json!({"function": "abs", "x": [0.0], "covectors": [[-c], [c]]}),
            Some(expect),
        ));
    }
    Ok(inst)
}

/// The built-in example suite, as `(file name, instance)` pairs.
pub fn gallery_instances() -> Result<Vec<(String, InstanceFile)>> {
    Ok(vec![
        ("example_4_6.json".into(), vertical_line()?),
        ("example_4_7.json".into(), half_line_reflection()?),
        ("example_4_15.json".into(), sqrt_hook()?),
        ("example_4_16.json".into(), whole_space()?),
        ("ray_map.json".into(), ray_map()?),
        ("half_line_tmaps.json".into(), half_line_tmaps()?),
        ("clarke_corpus.json".into(), clarke_suite()?),
    ])
}

/// Coderivative corpus: one `mord` task per map.
pub fn mordukhovich_instance() -> Result<InstanceFile> {
    let mut inst = InstanceFile::new("polyhedral maps whose coderivative modulus matches the sampled Lipschitz modulus");
    for p in corpus::mordukhovich_corpus()? {
        let x: Vec<f64> = p.point.x.iter().copied().collect();
        let y: Vec<f64> = p.point.y.iter().copied().collect();
        inst.tasks.push(point_task(&p.name, Op::Mord, &p.name, &x, &y, Outcome::Verified));
        inst.maps.insert(p.name, p.map);
    }
    Ok(inst)
}

/// Calculus, regularity and strictification examples on small piecewise
/// linear maps.
pub fn calculus_instance() -> Result<InstanceFile> {
    let mut inst = InstanceFile::new("chain and sum rules, regularity harnesses and strictification");
    inst.maps.insert("kink".into(), corpus::pl_line(0.0, &[0.0], &[0.5, 2.0], 0.0)?);
    inst.maps.insert("double".into(), corpus::pl_line(0.0, &[], &[2.0], 0.0)?);
    inst.maps.insert("half_line".into(), lower_half_line()?);
    inst.tmaps.insert("half_line_T".into(), crate::homog::half_line_example_map());
    let derive = |d: &str| json!({"derive": d});
    inst.tasks.push(Task::new(
        "chain kink after doubling",
        Op::ComposeChain,
        json!({"f": "double", "g": "kink", "x": [0.0], "z": [0.0],
               "links": [{"y": [0.0], "t_in": derive("graphical"), "t_out": derive("graphical")}]}),
        Some(Outcome::Verified),
    ));
    inst.tasks.push(Task::new(
        "strict chain",
        Op::ComposeChain,
        json!({"f": "kink", "g": "double", "x": [0.0], "z": [0.0],
               "links": [{"y": [0.0], "t_in": derive("coderivative"), "t_out": derive("coderivative")}],
               "certify": ["pseudoOuterT", "pseudoStrictT"]}),
        Some(Outcome::Verified),
    ));
    inst.tasks.push(Task::new(
        "sum of kink and doubling",
        Op::ComposeSum,
        json!({"maps": ["kink", "double"], "x": [0.0], "y": [0.0],
               "net": [{"parts": [[0.0], [0.0]], "t": [derive("graphical"), derive("graphical")]}]}),
        Some(Outcome::Verified),
    ));
    for form in ["equivalence", "subregularity"] {
        inst.tasks.push(Task::new(
            &format!("{form} harness on the kink"),
            Op::RegcoverHarness,
            json!({"map": "kink", "x": [0.0], "y": [0.0], "t": derive("coderivative"), "form": form}),
            Some(Outcome::Verified),
        ));
    }
    inst.tasks.push(Task::new(
        "strict from outer on the half line",
        Op::Strictify,
        json!({"map": "half_line", "x": [0.0], "y": [0.0], "t": "half_line_T"}),
        Some(Outcome::Verified),
    ));
    inst.tasks.push(Task::new(
        "lip against calmness on the kink",
        Op::Strictify,
        json!({"map": "kink", "x": [0.0], "y": [0.0], "check": "limsup"}),
        Some(Outcome::Verified),
    ));
    inst.tasks.push(Task::new(
        "moduli of the kink",
        Op::Modulus,
        json!({"map": "kink", "x": [0.0], "y": [0.0], "kind": "lip"}),
        None,
    ));
    inst.tasks.push(Task::new(
        "coderivative of the kink",
        Op::Coderiv,
        json!({"map": "kink", "x": [0.0], "y": [0.0], "directions": [[1.0], [-1.0]]}),
        Some(Outcome::Verified),
    ));
    Ok(inst)
}

/// Every shipped instance file: the gallery plus the extra corpora.
pub fn all_instances() -> Result<Vec<(String, InstanceFile)>> {
    let mut v = gallery_instances()?;
    v.push(("mordukhovich.json".into(), mordukhovich_instance()?));
    v.push(("calculus.json".into(), calculus_instance()?));
    Ok(v)
}

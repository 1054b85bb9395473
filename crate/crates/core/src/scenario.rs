//! Scenario files and the drivers behind the command line: run a scenario
//! (solve, probe, recurrence cross-check), sweep it over a grid of keys,
//! run a recurrence directly and report on a domain.
//!
//! Scenario files are TOML:
//!
//! ```toml
//! name = "flat_arc"
//! [problem]
//! domain = "halfball"
//! operator = "linear:identity"
//! g = "harmonic:expsin"
//! h = "1/128"
//! [probe]
//! eta = 0.5
//! [ledger]
//! mode = "auto"
//! ```
//!
//! A `[lemmas]` table instead of `[problem]` makes a lemma-suite scenario.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{LabError, Result};
use crate::functions::{BoundFunction, FunctionSpec};
use crate::geometry::{check_conditions, grid_mask, ConditionReport, DomainKind, DomainSpec, Point};
use crate::ledger::{
    admissible_witness, run_bracket, run_one_sided, run_two_sided, Case, CaseOracle, Check, Recurrence,
    RecurrenceParams, SequenceTrace, DEFAULT_CBAR,
};
use crate::literal::{parse_number, split_top, Tagged};
use crate::moduli::{dini_classify, Modulus, DINI_TOL};
use crate::probe::{
    default_radii, extract_squeeze, fit_growth_exponent, lemma_scenarios, verdict, Differentiable, GrowthFit,
    LemmaConfig, LemmaRecord, NodalData, RegularityVerdict, SqueezeLedger, DEFAULT_ETA,
};
use crate::solver::{
    abp_check, solve_on, Discretization, Field, Method, OperatorSpec, SolveOptions, SolveReport, DEFAULT_TOL,
};

pub const DEFAULT_H: f64 = 1.0 / 128.0;
pub const DEFAULT_LEDGER_DEPTH: usize = 200;

/// How the growth fit picks its reference plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    /// Reference is the affine part of g at the origin (a = 0 when g vanishes there).
    Corner,
    /// Reference slope is the midpoint of the deepest squeeze level.
    Flat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSettings {
    pub enabled: bool,
    pub eta: f64,
    pub direction: Point,
    pub plane: Plane,
    /// Keep at most this many squeeze levels.
    pub levels: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerMode {
    Off,
    /// Constants from the admissible witness for the probed α₁.
    Auto,
    /// Constants from the file; constraint violations are errors.
    Strict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleChoice {
    Probe,
    Alternating,
    Lower,
    Upper,
}

/// Proof constants as written, validated only when a run needs them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParamInput {
    pub eta: f64,
    pub mu: f64,
    pub alpha1: f64,
    pub c0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LedgerSettings {
    pub mode: LedgerMode,
    pub recurrence: Recurrence,
    pub params: Option<ParamInput>,
    pub cbar: f64,
    pub sigma: Modulus,
    pub omega: Modulus,
    pub depth: usize,
    pub oracle: OracleChoice,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Preset(FunctionSpec),
    /// The continuum operator applied to the exact solution's Hessian.
    FromExact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveScenario {
    pub domain: DomainSpec,
    pub operator: OperatorSpec,
    pub f: Source,
    pub g: FunctionSpec,
    pub exact: Option<FunctionSpec>,
    pub h: f64,
    pub tol: f64,
    pub method: Method,
    /// Solver iteration cap; the solver's default when unset.
    pub max_iterations: Option<usize>,
    pub probe: ProbeSettings,
    pub ledger: LedgerSettings,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    Solve(Box<SolveScenario>),
    Lemmas(LemmaConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub body: Body,
    /// Directory that relative table paths resolve against.
    pub base: PathBuf,
}

fn key_of(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

/// Typed access to one TOML table, tracking which keys were read.
struct Section<'a> {
    name: &'a str,
    table: &'a Table,
    seen: std::cell::RefCell<BTreeSet<String>>,
}

impl<'a> Section<'a> {
    fn new(name: &'a str, table: &'a Table) -> Self {
        Self { name, table, seen: Default::default() }
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.seen.borrow_mut().insert(key.to_string());
        self.table.get(key)
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> LabError {
        LabError::config(key_of(self.name, key), msg)
    }

    fn text(&self, key: &str) -> Result<Option<String>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(Value::Integer(i)) => Ok(Some(i.to_string())),
            Some(other) => Err(self.err(key, format!("expected a string, found {}", other.type_str()))),
        }
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => number_value(v).map(Some).map_err(|m| self.err(key, m)),
        }
    }

    fn integer(&self, key: &str) -> Result<Option<u64>> {
        match self.number(key)? {
            None => Ok(None),
            Some(x) if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(53) => Ok(Some(x as u64)),
            Some(x) => Err(self.err(key, format!("expected a nonnegative integer, found {x}"))),
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(Value::String(s)) if s == "true" || s == "false" => Ok(Some(s == "true")),
            Some(other) => Err(self.err(key, format!("expected a boolean, found {}", other.type_str()))),
        }
    }

    fn literal<T: std::str::FromStr<Err = LabError>>(&self, key: &str) -> Result<Option<T>> {
        self.text(key)?.map(|s| s.parse::<T>().map_err(|e| self.err(key, e.to_string()))).transpose()
    }

    fn finish(&self) -> Result<()> {
        let seen = self.seen.borrow();
        match self.table.keys().find(|k| !seen.contains(k.as_str())) {
            Some(k) => Err(self.err(k, "unknown key")),
            None => Ok(()),
        }
    }
}

fn number_value(v: &Value) -> std::result::Result<f64, String> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        Value::String(s) => parse_number(s),
        other => Err(format!("expected a number, found {}", other.type_str())),
    }
}

fn sub_table<'a>(top: &'a Table, key: &str) -> Result<Option<&'a Table>> {
    match top.get(key) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(LabError::config(key, "expected a table")),
    }
}

/// Inward direction at the origin used for x_n.
pub fn inward_direction(d: &DomainSpec) -> Point {
    match &d.kind {
        DomainKind::Sector { bisector, .. } => [bisector.cos(), bisector.sin()],
        DomainKind::BallMinusCone { cone } => {
            let a = cone.axis();
            [-a[0], -a[1]]
        }
        DomainKind::Square { .. } => [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
        _ => [0.0, 1.0],
    }
}

fn default_plane(d: &DomainSpec) -> Plane {
    match d.kind {
        DomainKind::Sector { .. } | DomainKind::Square { .. } | DomainKind::BallMinusCone { .. } => Plane::Corner,
        _ => Plane::Flat,
    }
}

fn parse_recurrence(s: &str) -> Option<Recurrence> {
    match s {
        "31" | "one_sided" => Some(Recurrence::OneSided),
        "L41" | "l41" | "bracket" => Some(Recurrence::Bracket),
        "41" | "two_sided" => Some(Recurrence::TwoSided),
        _ => None,
    }
}

fn recurrence_name(r: Recurrence) -> &'static str {
    match r {
        Recurrence::OneSided => "31",
        Recurrence::Bracket => "L41",
        Recurrence::TwoSided => "41",
    }
}

fn parse_oracle(s: &str) -> Option<OracleChoice> {
    match s {
        "probe" => Some(OracleChoice::Probe),
        "alternating" => Some(OracleChoice::Alternating),
        "lower" => Some(OracleChoice::Lower),
        "upper" => Some(OracleChoice::Upper),
        _ => None,
    }
}

fn oracle_name(o: OracleChoice) -> &'static str {
    match o {
        OracleChoice::Probe => "probe",
        OracleChoice::Alternating => "alternating",
        OracleChoice::Lower => "lower",
        OracleChoice::Upper => "upper",
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Policy => "policy",
        Method::Jacobi => "jacobi",
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::config("file", format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| LabError::config("toml", e.message().to_string()))?;
        Self::from_table(&table, base)
    }

    /// Resolves every default; errors carry the scenario name and the key.
    pub fn from_table(table: &Table, base: &Path) -> Result<Self> {
        let name = match table.get("name") {
            Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
            _ => return Err(LabError::config("name", "scenario needs a nonempty `name`").in_scenario("<unnamed>")),
        };
        Self::resolve(table, base, &name).map_err(|e| e.in_scenario(&name))
    }

    fn resolve(table: &Table, base: &Path, name: &str) -> Result<Self> {
        let top = Section::new("", table);
        top.raw("name");
        let description = top.text("description")?.unwrap_or_default();
        let seed = top.integer("seed")?.unwrap_or(0);
        let has_problem = table.contains_key("problem");
        let kind = top.text("kind")?.unwrap_or_else(|| if has_problem || !table.contains_key("lemmas") { "solve" } else { "lemmas" }.into());
        for k in ["problem", "probe", "ledger", "lemmas"] {
            top.raw(k);
        }
        top.finish()?;
        let body = match kind.as_str() {
            "solve" => {
                if table.contains_key("lemmas") {
                    return Err(LabError::config("lemmas", "a solve scenario takes no [lemmas] table"));
                }
                Body::Solve(Box::new(resolve_solve(table, base)?))
            }
            "lemmas" => {
                for k in ["problem", "probe", "ledger"] {
                    if table.contains_key(k) {
                        return Err(LabError::config(k, "a lemma scenario takes only a [lemmas] table"));
                    }
                }
                Body::Lemmas(resolve_lemmas(sub_table(table, "lemmas")?)?)
            }
            other => return Err(LabError::config("kind", format!("unknown scenario kind `{other}`"))),
        };
        Ok(Scenario { name: name.to_string(), description, seed, body, base: base.to_path_buf() })
    }

    /// Every setting spelled out; parsing it gives back an equal scenario.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new();
        t.insert("name".into(), self.name.clone().into());
        if !self.description.is_empty() {
            t.insert("description".into(), self.description.clone().into());
        }
        t.insert("seed".into(), Value::Integer(self.seed as i64));
        match &self.body {
            Body::Solve(s) => {
                t.insert("kind".into(), "solve".into());
                let mut p = Table::new();
                p.insert("domain".into(), s.domain.to_string().into());
                p.insert("operator".into(), s.operator.to_string().into());
                p.insert("directions".into(), Value::Integer(s.operator.directions as i64));
                let f = match &s.f {
                    Source::Preset(f) => f.to_string(),
                    Source::FromExact => "auto".into(),
                };
                p.insert("f".into(), f.into());
                p.insert("g".into(), s.g.to_string().into());
                if let Some(e) = &s.exact {
                    p.insert("exact".into(), e.to_string().into());
                }
                p.insert("h".into(), s.h.into());
                p.insert("tol".into(), s.tol.into());
                p.insert("method".into(), method_name(s.method).into());
                if let Some(n) = s.max_iterations {
                    p.insert("max_iterations".into(), Value::Integer(n as i64));
                }
                t.insert("problem".into(), p.into());
                let mut q = Table::new();
                q.insert("enabled".into(), s.probe.enabled.into());
                q.insert("eta".into(), s.probe.eta.into());
                q.insert("direction".into(), Value::Array(s.probe.direction.iter().map(|v| Value::Float(*v)).collect()));
                q.insert("plane".into(), if s.probe.plane == Plane::Corner { "corner" } else { "flat" }.into());
                q.insert(
                    "levels".into(),
                    s.probe.levels.map_or(Value::String("all".into()), |n| Value::Integer(n as i64)),
                );
                t.insert("probe".into(), q.into());
                let l = &s.ledger;
                let mut r = Table::new();
                let mode = match l.mode {
                    LedgerMode::Off => "off",
                    LedgerMode::Auto => "auto",
                    LedgerMode::Strict => "strict",
                };
                r.insert("mode".into(), mode.into());
                r.insert("theorem".into(), recurrence_name(l.recurrence).into());
                if let Some(pi) = l.params {
                    r.insert("eta".into(), pi.eta.into());
                    r.insert("mu".into(), pi.mu.into());
                    r.insert("alpha1".into(), pi.alpha1.into());
                    r.insert("c0".into(), pi.c0.into());
                }
                r.insert("cbar".into(), l.cbar.into());
                r.insert("sigma".into(), l.sigma.to_string().into());
                r.insert("omega".into(), l.omega.to_string().into());
                r.insert("depth".into(), Value::Integer(l.depth as i64));
                r.insert("oracle".into(), oracle_name(l.oracle).into());
                t.insert("ledger".into(), r.into());
            }
            Body::Lemmas(c) => {
                t.insert("kind".into(), "lemmas".into());
                let mut m = Table::new();
                m.insert("h".into(), c.h.into());
                m.insert("operator".into(), c.operator.to_string().into());
                m.insert("delta0".into(), c.delta0.into());
                m.insert("forcing".into(), Value::Array(c.forcing.iter().map(|v| Value::Float(*v)).collect()));
                t.insert("lemmas".into(), m.into());
            }
        }
        t
    }

    pub fn canonical(&self) -> String {
        toml::to_string(&self.to_table()).expect("scenario tables serialize")
    }
}

fn resolve_solve(table: &Table, base: &Path) -> Result<SolveScenario> {
    let empty = Table::new();
    let pt = sub_table(table, "problem")?.ok_or_else(|| LabError::config("problem", "solve scenario needs [problem]"))?;
    let p = Section::new("problem", pt);
    let domain: DomainSpec = p.literal("domain")?.ok_or_else(|| p.err("domain", "missing"))?;
    let mut operator: OperatorSpec = p.literal("operator")?.unwrap_or_else(OperatorSpec::laplace);
    if let Some(k) = p.integer("directions")? {
        let literal_sets = p.text("operator")?.is_some_and(|s| s.contains("directions="));
        if literal_sets && operator.directions as u64 != k {
            return Err(p.err("directions", format!("conflicts with directions={} in operator", operator.directions)));
        }
        operator = operator.with_directions(k as usize).map_err(|e| p.err("directions", e.to_string()))?;
    }
    let f = match p.text("f")?.as_deref() {
        None => Source::Preset(FunctionSpec::Zero),
        Some("auto") => Source::FromExact,
        Some(s) => Source::Preset(s.parse().map_err(|e: LabError| p.err("f", e.to_string()))?),
    };
    let g: FunctionSpec = p.literal("g")?.unwrap_or(FunctionSpec::Zero);
    let exact: Option<FunctionSpec> = p.literal("exact")?;
    let h = p.number("h")?.unwrap_or(DEFAULT_H);
    if !(h > 0.0 && h <= domain.radius / 4.0) {
        return Err(p.err("h", format!("grid step {h} must lie in (0, radius/4]")));
    }
    let tol = p.number("tol")?.unwrap_or(DEFAULT_TOL);
    if !(tol >= 1e-10) {
        return Err(p.err("tol", format!("tolerance {tol} below 1e-10")));
    }
    let method = match p.text("method")?.as_deref() {
        None | Some("policy") => Method::Policy,
        Some("jacobi") => Method::Jacobi,
        Some(other) => return Err(p.err("method", format!("unknown method `{other}`"))),
    };
    let max_iterations = match p.integer("max_iterations")? {
        Some(0) => return Err(p.err("max_iterations", "must be positive")),
        n => n.map(|n| n as usize),
    };
    p.finish()?;
    // presets must bind now so missing tables or domain mismatches fail at load
    let bind_check = |key: &str, spec: &FunctionSpec| spec.bind(&domain, base).map(|_| ()).map_err(|e| p.err(key, e.to_string()));
    if let Source::Preset(spec) = &f {
        bind_check("f", spec)?;
    }
    bind_check("g", &g)?;
    if let Some(e) = &exact {
        bind_check("exact", e)?;
    }
    if f == Source::FromExact && !exact.as_ref().is_some_and(|e| e.has_hessian()) {
        return Err(p.err("f", "`auto` needs an `exact` preset with a closed-form Hessian"));
    }

    let q = Section::new("probe", sub_table(table, "probe")?.unwrap_or(&empty));
    let eta = q.number("eta")?.unwrap_or(DEFAULT_ETA);
    if !(eta > 0.0 && eta < 1.0) {
        return Err(q.err("eta", format!("ratio {eta} outside (0, 1)")));
    }
    let direction = match q.raw("direction") {
        None => inward_direction(&domain),
        Some(Value::String(s)) if s == "auto" => inward_direction(&domain),
        Some(v) => parse_point(v).map_err(|m| q.err("direction", m))?,
    };
    let plane = match q.text("plane")?.as_deref() {
        None | Some("auto") => default_plane(&domain),
        Some("corner") => Plane::Corner,
        Some("flat") => Plane::Flat,
        Some(other) => return Err(q.err("plane", format!("unknown plane `{other}`"))),
    };
    let levels = match q.raw("levels") {
        None => None,
        Some(Value::String(s)) if s == "all" => None,
        Some(_) => Some(q.integer("levels")?.expect("present") as usize),
    };
    let enabled = q.boolean("enabled")?.unwrap_or(true);
    q.finish()?;

    let l = Section::new("ledger", sub_table(table, "ledger")?.unwrap_or(&empty));
    let mode = match l.text("mode")?.as_deref() {
        None | Some("auto") => LedgerMode::Auto,
        Some("strict") => LedgerMode::Strict,
        Some("off") => LedgerMode::Off,
        Some(other) => return Err(l.err("mode", format!("unknown ledger mode `{other}`"))),
    };
    let recurrence = match l.text("theorem")? {
        None => Recurrence::TwoSided,
        Some(s) => parse_recurrence(&s).ok_or_else(|| l.err("theorem", format!("unknown recurrence `{s}`; use 31, L41 or 41")))?,
    };
    let given = [l.number("eta")?, l.number("mu")?, l.number("alpha1")?, l.number("c0")?];
    let params = match (mode, given) {
        (LedgerMode::Strict, [Some(eta), Some(mu), Some(alpha1), Some(c0)]) => Some(ParamInput { eta, mu, alpha1, c0 }),
        (LedgerMode::Strict, g) => {
            let missing = ["eta", "mu", "alpha1", "c0"][g.iter().position(Option::is_none).expect("one is missing")];
            return Err(l.err(missing, "strict mode needs eta, mu, alpha1 and c0"));
        }
        (_, g) => {
            if let Some(i) = g.iter().position(Option::is_some) {
                return Err(l.err(["eta", "mu", "alpha1", "c0"][i], "constants are only read in strict mode"));
            }
            None
        }
    };
    let cbar = l.number("cbar")?.unwrap_or(DEFAULT_CBAR);
    let sigma: Modulus = l.literal("sigma")?.unwrap_or_else(Modulus::zero);
    let omega: Modulus = l.literal("omega")?.unwrap_or_else(Modulus::zero);
    let depth = l.integer("depth")?.map_or(DEFAULT_LEDGER_DEPTH, |d| d as usize);
    let oracle = match l.text("oracle")? {
        None => OracleChoice::Probe,
        Some(s) => parse_oracle(&s).ok_or_else(|| l.err("oracle", format!("unknown case oracle `{s}`")))?,
    };
    l.finish()?;
    Ok(SolveScenario {
        domain,
        operator,
        f,
        g,
        exact,
        h,
        tol,
        method,
        max_iterations,
        probe: ProbeSettings { enabled, eta, direction, plane, levels },
        ledger: LedgerSettings { mode, recurrence, params, cbar, sigma, omega, depth, oracle },
    })
}

fn parse_point(v: &Value) -> std::result::Result<Point, String> {
    let parts: Vec<f64> = match v {
        Value::Array(a) => a.iter().map(number_value).collect::<std::result::Result<_, _>>()?,
        Value::String(s) => s.split(',').map(parse_number).collect::<std::result::Result<_, _>>()?,
        other => return Err(format!("expected [x, y], found {}", other.type_str())),
    };
    match parts.as_slice() {
        [x, y] if x.hypot(*y) > 0.0 => {
            let n = x.hypot(*y);
            Ok([x / n, y / n])
        }
        _ => Err("direction must be two numbers, not both zero".into()),
    }
}

fn resolve_lemmas(t: Option<&Table>) -> Result<LemmaConfig> {
    let empty = Table::new();
    let s = Section::new("lemmas", t.unwrap_or(&empty));
    let mut cfg = LemmaConfig::default();
    if let Some(h) = s.number("h")? {
        if !(h > 0.0 && h <= 0.125) {
            return Err(s.err("h", format!("grid step {h} must lie in (0, 1/8]")));
        }
        cfg.h = h;
    }
    if let Some(op) = s.literal::<OperatorSpec>("operator")? {
        cfg.operator = op;
    }
    if let Some(d) = s.number("delta0")? {
        if !(d > 0.0 && d < 1.0) {
            return Err(s.err("delta0", format!("{d} outside (0, 1)")));
        }
        cfg.delta0 = d;
    }
    match s.raw("forcing") {
        None => {}
        Some(Value::Array(a)) => {
            let v: Vec<f64> = a.iter().map(number_value).collect::<std::result::Result<_, _>>().map_err(|m| s.err("forcing", m))?;
            if v.len() < 2 || v.iter().any(|x| !(*x > 0.0)) {
                return Err(s.err("forcing", "need at least two positive magnitudes"));
            }
            cfg.forcing = v;
        }
        Some(_) => return Err(s.err("forcing", "expected an array of numbers")),
    }
    s.finish()?;
    Ok(cfg)
}

/// Headline numbers of a run; these are the sweep columns.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub interior_nodes: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub sup_error: Option<f64>,
    pub abp_constant: Option<f64>,
    pub exponent: Option<f64>,
    pub exponent_stderr: Option<f64>,
    pub levels: usize,
    pub gap_at_depth: Option<f64>,
    pub gap_factor: Option<f64>,
    pub verdict: Option<Differentiable>,
    pub gradient: Option<Point>,
    pub ledger_passed: Option<bool>,
    pub lemmas_passed: Option<bool>,
}

impl Metrics {
    pub const COLUMNS: [&'static str; 15] = [
        "interior_nodes",
        "iterations",
        "residual",
        "converged",
        "sup_error",
        "abp_constant",
        "exponent",
        "exponent_stderr",
        "levels",
        "gap_at_depth",
        "gap_factor",
        "verdict",
        "gradient_x",
        "gradient_y",
        "ledger_passed",
    ];

    pub fn cells(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or(String::new(), number_cell);
        let flag = |v: Option<bool>| v.map_or(String::new(), |x| x.to_string());
        let verdict = self.verdict.map_or(String::new(), |v| {
            match v {
                Differentiable::Yes => "yes",
                Differentiable::No => "no",
                Differentiable::Inconclusive => "inconclusive",
            }
            .to_string()
        });
        vec![
            self.interior_nodes.to_string(),
            self.iterations.to_string(),
            number_cell(self.residual),
            self.converged.to_string(),
            opt(self.sup_error),
            opt(self.abp_constant),
            opt(self.exponent),
            opt(self.exponent_stderr),
            self.levels.to_string(),
            opt(self.gap_at_depth),
            opt(self.gap_factor),
            verdict,
            opt(self.gradient.map(|g| g[0])),
            opt(self.gradient.map(|g| g[1])),
            flag(self.ledger_passed.or(self.lemmas_passed)),
        ]
    }
}

/// Shortest round-trip form, in scientific notation outside [1e-4, 1e6).
fn number_cell(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-4..1e6).contains(&x.abs()) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecurrenceOutcome {
    pub mode: LedgerMode,
    pub recurrence: Recurrence,
    pub params: RecurrenceParams,
    /// Where α₁ came from: the file, or the probe's growth exponent.
    pub alpha1_source: String,
    pub depth: usize,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub gap_constant: Option<f64>,
    pub final_gap: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub name: String,
    pub description: String,
    pub kind: &'static str,
    /// The fully resolved scenario.
    pub config: Table,
    pub metrics: Metrics,
    pub solve: Option<SolveReport>,
    pub conditions: Option<ConditionReport>,
    pub squeeze: Option<SqueezeLedger>,
    pub growth: Option<GrowthFit>,
    pub verdict: Option<RegularityVerdict>,
    /// Why the probe produced no measurements, when it did not.
    pub probe_error: Option<String>,
    pub recurrence: Option<RecurrenceOutcome>,
    pub lemmas: Option<Vec<LemmaRecord>>,
}

/// Everything a run produced, before anything is written.
pub struct RunOutput {
    pub report: Report,
    pub field: Field,
    pub ledger_csv: String,
    pub trace_csv: Option<String>,
}

struct ProbeResults {
    squeeze: SqueezeLedger,
    fit: GrowthFit,
    verdict: RegularityVerdict,
}

fn probe_field(s: &SolveScenario, data: &NodalData, g: &BoundFunction, conditions: &ConditionReport) -> Result<ProbeResults> {
    let mut squeeze = extract_squeeze(data, s.probe.eta, s.probe.direction)?;
    if let Some(n) = s.probe.levels {
        squeeze.levels.truncate(n.max(2));
    }
    let grad = g.gradient_at_origin();
    let radii = default_radii(data, s.domain.radius);
    let fit = match s.probe.plane {
        Plane::Corner => {
            // growth of u − g(0) − ∇g(0)·x, which is the prediction for the gradient at a corner
            let (g0, dg) = (g.value([0.0, 0.0]), grad.unwrap_or([0.0, 0.0]));
            let shifted = data.rescaled(1.0, 1.0, |p| g0 + dg[0] * p[0] + dg[1] * p[1]);
            fit_growth_exponent(&shifted, &radii, 0.0, s.probe.direction)?
        }
        Plane::Flat => {
            let deep = squeeze.deepest();
            let slope = 0.5 * (deep.upper_slope + deep.lower_slope);
            fit_growth_exponent(data, &radii, slope, s.probe.direction)?
        }
    };
    let v = verdict(&squeeze, data, &fit, conditions, grad.unwrap_or([f64::NAN, f64::NAN]));
    Ok(ProbeResults { squeeze, fit, verdict: v })
}

/// Estimated α₁ from a growth exponent, kept inside (0, 1).
fn alpha1_from(fit: Option<&GrowthFit>) -> (f64, String) {
    match fit {
        Some(f) if f.exponent.is_finite() => {
            ((f.exponent - 1.0).clamp(0.05, 0.95), format!("probe exponent {:.4} minus one, clamped to [0.05, 0.95]", f.exponent))
        }
        _ => (0.5, "no growth fit; default 0.5".into()),
    }
}

fn oracle_for(choice: OracleChoice, probed: Option<(&NodalData, &SqueezeLedger)>) -> CaseOracle {
    match (choice, probed) {
        (OracleChoice::Probe, Some((d, l))) => CaseOracle::from_probe(d, l),
        (OracleChoice::Probe, None) | (OracleChoice::Alternating, _) => CaseOracle::Alternating,
        (OracleChoice::Lower, _) => CaseOracle::Constant(Case::Lower),
        (OracleChoice::Upper, _) => CaseOracle::Constant(Case::Upper),
    }
}

/// Runs one of the three recurrences.
pub fn run_recurrence(
    kind: Recurrence,
    p: &RecurrenceParams,
    sigma: &Modulus,
    omega: &Modulus,
    depth: usize,
    oracle: &CaseOracle,
) -> Result<SequenceTrace> {
    match kind {
        Recurrence::OneSided => run_one_sided(p, sigma, depth),
        Recurrence::Bracket => run_bracket(p, omega, depth),
        Recurrence::TwoSided => run_two_sided(p, sigma, omega, depth, oracle),
    }
}

fn cross_check(
    l: &LedgerSettings,
    fit: Option<&GrowthFit>,
    probed: Option<(&NodalData, &SqueezeLedger)>,
) -> Result<Option<(RecurrenceOutcome, SequenceTrace)>> {
    let (params, source) = match (l.mode, l.params) {
        (LedgerMode::Off, _) => return Ok(None),
        (LedgerMode::Strict, Some(pi)) => {
            let p = RecurrenceParams::new(pi.eta, pi.mu, pi.alpha1, pi.c0, l.cbar)?;
            p.require(l.recurrence)?;
            (p, "scenario file".to_string())
        }
        (LedgerMode::Strict, None) => return Err(LabError::config("ledger.mode", "strict mode needs constants")),
        (LedgerMode::Auto, _) => {
            let (alpha1, source) = alpha1_from(fit);
            (admissible_witness(alpha1, l.cbar)?, source)
        }
    };
    let trace = run_recurrence(l.recurrence, &params, &l.sigma, &l.omega, l.depth, &oracle_for(l.oracle, probed))?;
    let outcome = RecurrenceOutcome {
        mode: l.mode,
        recurrence: l.recurrence,
        params,
        alpha1_source: source,
        depth: l.depth,
        passed: trace.passed(),
        checks: trace.checks.clone(),
        gap_constant: trace.gap_constant,
        final_gap: trace.gap(l.depth),
    };
    Ok(Some((outcome, trace)))
}

/// Source term of a solve scenario as a closure.
fn bind_source(s: &SolveScenario, base: &Path) -> Result<Box<dyn Fn(Point) -> f64 + Sync + Send>> {
    Ok(match &s.f {
        Source::Preset(spec) => {
            let b = spec.bind(&s.domain, base).map_err(|e| LabError::config("problem.f", e.to_string()))?;
            Box::new(move |p| b.value(p))
        }
        Source::FromExact => {
            let exact = s.exact.as_ref().expect("checked at load").bind(&s.domain, base)?;
            let op = s.operator.clone();
            Box::new(move |p| exact.hessian(p).and_then(|hs| op.continuum(p, &hs).ok()).unwrap_or(f64::NAN))
        }
    })
}

impl Scenario {
    /// Runs the scenario without touching the file system.
    pub fn execute(&self) -> Result<RunOutput> {
        self.execute_inner().map_err(|e| e.in_scenario(&self.name))
    }

    fn execute_inner(&self) -> Result<RunOutput> {
        match &self.body {
            Body::Solve(s) => self.execute_solve(s),
            Body::Lemmas(cfg) => self.execute_lemmas(cfg),
        }
    }

    fn execute_solve(&self, s: &SolveScenario) -> Result<RunOutput> {
        let disc = Discretization::new(&s.operator, &s.domain, s.h)?;
        let f = bind_source(s, &self.base)?;
        let g = s.g.bind(&s.domain, &self.base)?;
        let opts = SolveOptions { tol: s.tol, method: s.method, max_iterations: s.max_iterations };
        let (u, rep) = solve_on(&disc, &f, |p| g.value(p), &opts)?;
        if !rep.converged {
            return Err(LabError::NonConvergence { iterations: rep.iterations, residual: rep.residual });
        }
        let sup_error = match &s.exact {
            Some(e) => {
                let e = e.bind(&s.domain, &self.base)?;
                Some(u.max_error(|p| e.value(p)))
            }
            None => None,
        };
        let data = u.samples();
        let conditions = check_conditions(&s.domain);
        let (probed, probe_error) = if s.probe.enabled {
            match probe_field(s, &data, &g, &conditions) {
                Ok(r) => (Some(r), None),
                Err(e @ LabError::Resolution(_)) => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            }
        } else {
            (None, Some("probe disabled".into()))
        };
        let cross = cross_check(
            &s.ledger,
            probed.as_ref().map(|r| &r.fit),
            probed.as_ref().map(|r| (&data, &r.squeeze)),
        )?;
        let metrics = Metrics {
            interior_nodes: u.len(),
            iterations: rep.iterations,
            residual: rep.residual,
            converged: rep.converged,
            sup_error,
            abp_constant: Some(abp_check(&s.operator, &u, &f)),
            exponent: probed.as_ref().map(|r| r.fit.exponent),
            exponent_stderr: probed.as_ref().map(|r| r.fit.stderr),
            levels: probed.as_ref().map_or(0, |r| r.squeeze.levels.len()),
            gap_at_depth: probed.as_ref().map(|r| r.squeeze.deepest().gap()),
            gap_factor: probed.as_ref().and_then(|r| r.squeeze.gap_factor()),
            verdict: probed.as_ref().map(|r| r.verdict.differentiable),
            gradient: probed.as_ref().map(|r| r.verdict.gradient_estimate),
            ledger_passed: cross.as_ref().map(|(o, _)| o.passed),
            lemmas_passed: None,
        };
        let ledger_csv = probed.as_ref().map_or_else(|| "k,radius,a,b,A,B,probed,nodes\n".to_string(), |r| r.squeeze.to_csv());
        let (recurrence, trace_csv) = match cross {
            Some((o, t)) => (Some(o), Some(t.to_csv(Some(self.seed)))),
            None => (None, None),
        };
        let report = Report {
            name: self.name.clone(),
            description: self.description.clone(),
            kind: "solve",
            config: self.to_table(),
            metrics,
            solve: Some(rep),
            conditions: Some(conditions),
            squeeze: probed.as_ref().map(|r| r.squeeze.clone()),
            growth: probed.as_ref().map(|r| r.fit.clone()),
            verdict: probed.map(|r| r.verdict),
            probe_error,
            recurrence,
            lemmas: None,
        };
        Ok(RunOutput { report, field: u, ledger_csv, trace_csv })
    }

    fn execute_lemmas(&self, cfg: &LemmaConfig) -> Result<RunOutput> {
        let records = lemma_scenarios(cfg)?;
        // the exported field is the unforced positivity problem
        let dom = DomainSpec::half_ball(1.0)?;
        let disc = Discretization::new(&cfg.operator, &dom, cfg.h)?;
        let (u, rep) = solve_on(&disc, |_| 0.0, |p| p[1] * p[1], &SolveOptions::default())?;
        let mut csv = String::from("name,passed,c,constant,detail\n");
        for r in &records {
            let _ = writeln!(
                csv,
                "{},{},{},{},\"{}\"",
                r.name,
                r.passed,
                r.c,
                r.constant.map_or(String::new(), |v| v.to_string()),
                r.detail.replace('"', "'")
            );
        }
        let metrics = Metrics {
            interior_nodes: u.len(),
            iterations: rep.iterations,
            residual: rep.residual,
            converged: rep.converged,
            lemmas_passed: Some(records.iter().all(|r| r.passed)),
            ..Metrics::default()
        };
        let report = Report {
            name: self.name.clone(),
            description: self.description.clone(),
            kind: "lemmas",
            config: self.to_table(),
            metrics,
            solve: Some(rep),
            conditions: None,
            squeeze: None,
            growth: None,
            verdict: None,
            probe_error: None,
            recurrence: None,
            lemmas: Some(records),
        };
        Ok(RunOutput { report, field: u, ledger_csv: csv, trace_csv: None })
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Paths of the files a run wrote.
#[derive(Clone, Debug, PartialEq)]
pub struct BundlePaths {
    pub report: PathBuf,
    pub ledger: PathBuf,
    pub field: PathBuf,
    pub trace: Option<PathBuf>,
}

impl RunOutput {
    /// Writes `<name>.report.json`, `<name>.ledger.csv`, `<name>.field.csv`
    /// and, when a recurrence ran, `<name>.trace.csv`.
    pub fn write(&self, dir: &Path) -> Result<BundlePaths> {
        std::fs::create_dir_all(dir)?;
        let stem = file_stem(&self.report.name);
        let report = dir.join(format!("{stem}.report.json"));
        let ledger = dir.join(format!("{stem}.ledger.csv"));
        let field = dir.join(format!("{stem}.field.csv"));
        let json = serde_json::to_string_pretty(&self.report).map_err(|e| LabError::Numeric(e.to_string()))?;
        write_atomic(&report, json.as_bytes())?;
        write_atomic(&ledger, self.ledger_csv.as_bytes())?;
        let tmp = field.with_extension("tmp");
        self.field.write_csv(&tmp)?;
        std::fs::rename(&tmp, &field)?;
        let trace = match &self.trace_csv {
            Some(t) => {
                let p = dir.join(format!("{stem}.trace.csv"));
                write_atomic(&p, t.as_bytes())?;
                Some(p)
            }
            None => None,
        };
        Ok(BundlePaths { report, ledger, field, trace })
    }
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.=".contains(c) { c } else { '_' }).collect()
}

/// One `key=v1,v2,...` sweep axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Vary {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for Vary {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let (key, vals) = s.split_once('=').ok_or_else(|| LabError::config("vary", format!("`{s}` is not key=v1,v2,...")))?;
        let key = key.trim().to_string();
        let values: Vec<String> = split_top(vals, ',').into_iter().map(|v| v.trim().to_string()).collect();
        if key.is_empty() || values.iter().any(|v| v.is_empty()) {
            return Err(LabError::config("vary", format!("`{s}` has an empty key or value")));
        }
        for v in &values {
            parse_number(v).map_err(|e| LabError::config(format!("vary.{key}"), format!("`{v}` is not numeric: {e}")))?;
        }
        Ok(Vary { key, values })
    }
}

const PROBLEM_KEYS: [&str; 10] =
    ["h", "directions", "tol", "method", "max_iterations", "domain", "operator", "f", "g", "exact"];
const PROBE_KEYS: [&str; 4] = ["eta", "levels", "plane", "enabled"];
const LITERAL_KEYS: [&str; 8] = [
    "problem.domain",
    "problem.operator",
    "problem.f",
    "problem.g",
    "problem.exact",
    "ledger.sigma",
    "ledger.omega",
    "lemmas.operator",
];

/// Splits a sweep key into a table path and, for literal fields, an option name.
fn locate(key: &str) -> (Vec<String>, Option<String>) {
    let mut parts: Vec<String> = key.split('.').map(str::to_string).collect();
    if parts.len() <= 2 && !["problem", "probe", "ledger", "lemmas"].contains(&parts[0].as_str()) {
        if PROBLEM_KEYS.contains(&parts[0].as_str()) {
            parts.insert(0, "problem".into());
        } else if PROBE_KEYS.contains(&parts[0].as_str()) {
            parts.insert(0, "probe".into());
        }
    }
    if parts.len() == 3 && LITERAL_KEYS.contains(&format!("{}.{}", parts[0], parts[1]).as_str()) {
        let opt = parts.pop();
        return (parts, opt);
    }
    (parts, None)
}

/// Replaces or appends `key=value` in a colon literal.
pub fn with_option(literal: &str, key: &str, value: &str) -> String {
    let mut t = Tagged::parse(literal);
    match t.options.iter_mut().find(|(k, _)| k == key) {
        Some((_, v)) => *v = value.to_string(),
        None => t.options.push((key.to_string(), value.to_string())),
    }
    let mut out = t.head.clone();
    for p in &t.positional {
        out.push(':');
        out.push_str(p);
    }
    for (k, v) in &t.options {
        let _ = write!(out, ":{k}={v}");
    }
    out
}

fn set_key(table: &mut Table, key: &str, value: &str) -> Result<()> {
    let (path, option) = locate(key);
    let bad = || LabError::config(format!("vary.{key}"), "key does not name a scenario setting");
    let (leaf, sections) = path.split_last().ok_or_else(bad)?;
    let mut cur = table;
    for s in sections {
        let entry = cur.entry(s.clone()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(bad)?;
    }
    match option {
        Some(opt) => {
            let existing = match cur.get(leaf) {
                Some(Value::String(s)) => s.clone(),
                _ => return Err(LabError::config(format!("vary.{key}"), format!("`{leaf}` is not set in the scenario"))),
            };
            cur.insert(leaf.clone(), Value::String(with_option(&existing, &opt, value)));
        }
        None => {
            cur.insert(leaf.clone(), Value::String(value.to_string()));
        }
    }
    Ok(())
}

/// Result of a sweep: the merged CSV and how many members failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub csv: String,
    pub rows: usize,
    pub failures: usize,
    /// Exit code of the first failing member in row order.
    pub first_failure_code: Option<i32>,
}

/// Cartesian sweep with the first axis varying slowest. Members run in
/// parallel on `jobs` threads; rows come back in grid order. With `out` set,
/// each member's bundle is written under `<out>/<name>.sweep/`.
pub fn sweep(text: &str, base: &Path, vary: &[Vary], jobs: usize, out: Option<&Path>) -> Result<SweepOutcome> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| LabError::config("toml", e.message().to_string()))?;
    let base_scenario = Scenario::from_table(&table, base)?;
    let name = base_scenario.name.clone();
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in vary {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                axis.values.iter().map(move |v| {
                    let mut next = c.clone();
                    next.push((axis.key.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    let member_dir = out.map(|o| o.join(format!("{}.sweep", file_stem(&name))));
    let run_member = |combo: &Vec<(String, String)>| -> Result<Metrics> {
        let mut t = table.clone();
        for (k, v) in combo {
            set_key(&mut t, k, v).map_err(|e| e.in_scenario(&name))?;
        }
        if !combo.is_empty() {
            let label: Vec<String> = combo.iter().map(|(k, v)| format!("{k}={v}")).collect();
            t.insert("name".into(), Value::String(format!("{name}[{}]", label.join(","))));
        }
        let sc = Scenario::from_table(&t, base)?;
        let output = sc.execute()?;
        if let Some(dir) = &member_dir {
            output.write(dir)?;
        }
        Ok(output.report.metrics)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| LabError::Numeric(format!("thread pool: {e}")))?;
    let results: Vec<Result<Metrics>> = pool.install(|| combos.par_iter().map(run_member).collect());
    let failures = results.iter().filter(|r| r.is_err()).count();
    let first_failure_code = results.iter().find_map(|r| r.as_ref().err().map(LabError::exit_code));
    let mut csv = String::new();
    if failures > 0 {
        let _ = writeln!(csv, "# partial: {failures} of {} members failed", results.len());
    }
    let mut header: Vec<String> = vary.iter().map(|v| v.key.clone()).collect();
    header.push("status".into());
    header.extend(Metrics::COLUMNS.iter().map(|s| s.to_string()));
    let _ = writeln!(csv, "{}", header.join(","));
    for (combo, r) in combos.iter().zip(&results) {
        let mut row: Vec<String> = combo.iter().map(|(_, v)| v.clone()).collect();
        match r {
            Ok(m) => {
                row.push("ok".into());
                row.extend(m.cells());
            }
            Err(e) => {
                row.push(format!("\"failed: {}\"", e.to_string().replace('"', "'")));
                row.extend(std::iter::repeat(String::new()).take(Metrics::COLUMNS.len()));
            }
        }
        let _ = writeln!(csv, "{}", row.join(","));
    }
    if let Some(o) = out {
        std::fs::create_dir_all(o)?;
        write_atomic(&o.join(format!("{}.sweep.csv", file_stem(&name))), csv.as_bytes())?;
    }
    Ok(SweepOutcome { csv, rows: results.len(), failures, first_failure_code })
}

/// A direct recurrence run, as requested on the command line.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerRequest {
    pub recurrence: Recurrence,
    pub params: ParamInput,
    pub cbar: f64,
    pub sigma: Modulus,
    pub omega: Modulus,
    pub depth: usize,
    pub oracle: OracleChoice,
}

impl LedgerRequest {
    /// Parses `eta=..,mu=..,alpha1=..,c0=..[,cbar=..][,depth=..][,sigma=..][,omega=..][,oracle=..]`.
    pub fn parse(theorem: &str, params: &str) -> Result<Self> {
        let recurrence = parse_recurrence(theorem)
            .ok_or_else(|| LabError::config("theorem", format!("unknown recurrence `{theorem}`; use 31, L41 or 41")))?;
        let mut t = Table::new();
        for item in split_top(params, ',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let (k, v) = item.split_once('=').ok_or_else(|| LabError::config("params", format!("`{item}` is not key=value")))?;
            t.insert(k.trim().to_string(), Value::String(v.trim().to_string()));
        }
        let s = Section::new("params", &t);
        let need = |k: &str| -> Result<f64> { s.number(k)?.ok_or_else(|| s.err(k, "missing")) };
        let req = LedgerRequest {
            recurrence,
            params: ParamInput { eta: need("eta")?, mu: need("mu")?, alpha1: need("alpha1")?, c0: need("c0")? },
            cbar: s.number("cbar")?.unwrap_or(DEFAULT_CBAR),
            sigma: s.literal("sigma")?.unwrap_or_else(Modulus::zero),
            omega: s.literal("omega")?.unwrap_or_else(Modulus::zero),
            depth: s.integer("depth")?.map_or(DEFAULT_LEDGER_DEPTH, |d| d as usize),
            oracle: match s.text("oracle")? {
                None => OracleChoice::Alternating,
                Some(o) if o == "probe" => return Err(s.err("oracle", "no probed field outside a scenario")),
                Some(o) => parse_oracle(&o).ok_or_else(|| s.err("oracle", format!("unknown case oracle `{o}`")))?,
            },
        };
        s.finish()?;
        Ok(req)
    }

    pub fn run(&self) -> Result<SequenceTrace> {
        let pi = self.params;
        let p = RecurrenceParams::new(pi.eta, pi.mu, pi.alpha1, pi.c0, self.cbar)?;
        run_recurrence(self.recurrence, &p, &self.sigma, &self.omega, self.depth, &oracle_for(self.oracle, None))
    }
}

/// What `check-domain` reports.
#[derive(Clone, Debug, Serialize)]
pub struct DomainSummary {
    pub name: String,
    pub domain: String,
    pub h: f64,
    pub interior_nodes: usize,
    pub conditions: ConditionReport,
    pub inward_direction: Point,
    pub exterior_dini: Option<String>,
}

pub fn domain_summary(sc: &Scenario) -> Result<DomainSummary> {
    let (domain, h) = match &sc.body {
        Body::Solve(s) => (s.domain.clone(), s.h),
        Body::Lemmas(c) => (DomainSpec::half_ball(1.0)?, c.h),
    };
    let mask = grid_mask(&domain, h).map_err(|e| e.in_scenario(&sc.name))?;
    let conditions = check_conditions(&domain);
    let exterior_dini = conditions.exterior_witness.as_ref().map(|w| format!("{:?}", dini_classify(w, DINI_TOL).verdict));
    Ok(DomainSummary {
        name: sc.name.clone(),
        domain: domain.to_string(),
        h,
        interior_nodes: mask.len(),
        inward_direction: inward_direction(&domain),
        conditions,
        exterior_dini,
    })
}

/// Whitespace-separated columns with a `#` header, ready for gnuplot.
pub fn gnuplot_columns(csv: &str) -> String {
    let mut out = String::new();
    let mut header_done = false;
    for line in csv.lines() {
        if line.starts_with('#') {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let cells: Vec<String> = split_top(line, ',')
            .into_iter()
            .map(|c| {
                let c = c.trim().trim_matches('"').to_string();
                if c.is_empty() {
                    "NaN".into()
                } else {
                    c.replace(' ', "_")
                }
            })
            .collect();
        if !header_done {
            out.push_str("# ");
            header_done = true;
        }
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

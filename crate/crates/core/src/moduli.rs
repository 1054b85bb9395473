//! Moduli of continuity: evaluation, Dini classification and tail functionals.
//!
//! Every modulus is evaluated through the log variable t = ln(r0/r), so that
//! rescalings by tiny factors (ρ = e^{-1000}, say) stay representable.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::literal::{parse_number, split_top, unbracket, Tagged};
use crate::quad;

/// Default tolerance for Cauchy increments in the Dini classifier.
pub const DINI_TOL: f64 = 1e-3;

const DYADIC_LEVELS: usize = 60;
const CONDENSED_LEVELS: usize = 60;
const RUN_LENGTH: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModulusKind {
    /// r^β
    Power(f64),
    /// (1 + ln(r0/r))^{-p}
    LogPower(f64),
    /// r ↦ inner(ρ r). `rho` is kept as written when given directly and is
    /// 0 when only ln ρ is known.
    Scaled { inner: Box<Modulus>, rho: f64, log_rho: f64 },
    MaxOf(Vec<Modulus>),
    Zero,
    /// Samples (r, value) with increasing r, interpolated linearly through (0, 0).
    Tabulated(Vec<(f64, f64)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modulus {
    pub kind: ModulusKind,
    pub r0: f64,
}

impl Modulus {
    fn of(kind: ModulusKind) -> Self {
        Modulus { kind, r0: 1.0 }
    }

    pub fn power(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(LabError::Input(format!("power exponent must be positive, got {beta}")));
        }
        Ok(Self::of(ModulusKind::Power(beta)))
    }

    pub fn log_power(p: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(LabError::Input(format!("log-power exponent must be positive, got {p}")));
        }
        Ok(Self::of(ModulusKind::LogPower(p)))
    }

    pub fn zero() -> Self {
        Self::of(ModulusKind::Zero)
    }

    /// r ↦ inner(ρ r) for ρ ∈ (0, 1].
    pub fn scaled(inner: Modulus, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(LabError::Input(format!("scaling factor must lie in (0, 1], got {rho}")));
        }
        let r0 = inner.r0;
        Ok(Modulus { kind: ModulusKind::Scaled { inner: Box::new(inner), rho, log_rho: rho.ln() }, r0 })
    }

    /// Same as [`Modulus::scaled`] with ρ given through ln ρ.
    pub fn scaled_log(inner: Modulus, log_rho: f64) -> Result<Self> {
        if !(log_rho <= 0.0) || log_rho.is_nan() {
            return Err(LabError::Input(format!("ln of the scaling factor must be <= 0, got {log_rho}")));
        }
        let r0 = inner.r0;
        Ok(Modulus { kind: ModulusKind::Scaled { inner: Box::new(inner), rho: 0.0, log_rho }, r0 })
    }

    pub fn max_of(parts: Vec<Modulus>) -> Result<Self> {
        if parts.is_empty() {
            return Err(LabError::Input("max of an empty list".into()));
        }
        let r0 = parts[0].r0;
        Ok(Modulus { kind: ModulusKind::MaxOf(parts), r0 })
    }

    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(LabError::Input("tabulated modulus needs samples".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(LabError::Input("tabulated radii must increase".into()));
            }
            if w[1].1 < w[0].1 {
                return Err(LabError::Input("tabulated values must be nondecreasing".into()));
            }
        }
        if samples[0].0 <= 0.0 || samples[0].1 < 0.0 {
            return Err(LabError::Input("tabulated samples need r > 0 and values >= 0".into()));
        }
        let r0 = samples.last().map(|s| s.0).unwrap_or(1.0).max(1.0);
        Ok(Modulus { kind: ModulusKind::Tabulated(samples), r0 })
    }

    pub fn with_r0(mut self, r0: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(LabError::Input(format!("domain radius must be positive, got {r0}")));
        }
        self.r0 = r0;
        Ok(self)
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            ModulusKind::Zero => true,
            ModulusKind::Scaled { inner, .. } => inner.is_zero(),
            ModulusKind::MaxOf(parts) => parts.iter().all(Modulus::is_zero),
            ModulusKind::Tabulated(s) => s.iter().all(|p| p.1 == 0.0),
            _ => false,
        }
    }

    /// Value at r = r0·e^{-t}, t ≥ 0.
    pub fn eval_log(&self, t: f64) -> f64 {
        match &self.kind {
            ModulusKind::Power(b) => (b * (self.r0.ln() - t)).exp(),
            ModulusKind::LogPower(p) => (1.0 + t).powf(-p),
            ModulusKind::Scaled { inner, log_rho, .. } => {
                // inner(ρ r) with ln(r0/(ρ r)) = t - ln ρ, adjusting for a differing inner radius
                inner.eval_log(t - log_rho + (inner.r0 / self.r0).ln())
            }
            ModulusKind::MaxOf(parts) => parts
                .iter()
                .map(|m| m.eval_log(t + (m.r0 / self.r0).ln()))
                .fold(0.0, f64::max),
            ModulusKind::Zero => 0.0,
            ModulusKind::Tabulated(samples) => {
                let r = self.r0 * (-t).exp();
                interpolate(samples, r)
            }
        }
    }

    /// Checks nonnegativity, monotonicity on 64 log-spaced points and vanishing at 0.
    pub fn validate(&self) -> Result<()> {
        let mut prev = f64::INFINITY;
        // t runs from large (small r) to 0 (r = r0), values must not decrease
        let mut last = 0.0;
        for i in 0..64 {
            let t = 40.0 * (63 - i) as f64 / 63.0;
            let v = self.eval_log(t);
            if !(v >= 0.0) || !v.is_finite() {
                return Err(LabError::Input(format!("modulus value {v} at t = {t} is not a finite nonnegative number")));
            }
            if prev.is_finite() && v < prev - 1e-14 * prev.abs().max(1.0) {
                return Err(LabError::Input(format!("modulus decreases near r = r0·e^-{t}")));
            }
            prev = v;
            last = v;
        }
        let deep = self.eval_log(1e12);
        if last > 0.0 && deep > 0.1 * last {
            return Err(LabError::Input("modulus does not tend to zero at the origin".into()));
        }
        Ok(())
    }
}

fn interpolate(samples: &[(f64, f64)], r: f64) -> f64 {
    let first = samples[0];
    if r <= first.0 {
        return first.1 * r / first.0;
    }
    for w in samples.windows(2) {
        if r <= w[1].0 {
            let s = (r - w[0].0) / (w[1].0 - w[0].0);
            return w[0].1 + s * (w[1].1 - w[0].1);
        }
    }
    samples[samples.len() - 1].1
}

/// Value of the modulus at 0 < r ≤ r0.
pub fn eval(m: &Modulus, r: f64) -> Result<f64> {
    if !(r > 0.0 && r <= m.r0 * (1.0 + 1e-15)) {
        return Err(LabError::Input(format!("radius {r} outside (0, {}]", m.r0)));
    }
    Ok(m.eval_log((m.r0 / r).ln().max(0.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dini {
    Dini,
    NotDini,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiniVerdict {
    pub verdict: Dini,
    pub integral_estimate: Option<f64>,
    /// Partial sums of ∫_ε^{r0} m(r)/r dr for ε = r0·2^{-k}, k = 1..=60.
    pub evidence: Vec<f64>,
    /// Blocks ∫ over ε ∈ [r0·2^{-60·2^{j+1}}, r0·2^{-60·2^j}] beyond the dyadic range.
    pub condensed: Vec<f64>,
}

/// Classifies ∫_0^{r0} m(r)/r dr as convergent, divergent or undecided.
///
/// The dyadic partial sums are reported as evidence. Because some moduli
/// only reveal divergence far below 2^{-60} (log-powers rescaled by a tiny
/// factor), the verdict is taken on a continuation with doubly exponential
/// levels: Cauchy increments below `tol` over the last ten of them give
/// `Dini`, increments above `tol` that stop shrinking give `NotDini`.
pub fn dini_classify(m: &Modulus, tol: f64) -> DiniVerdict {
    let ln2 = std::f64::consts::LN_2;
    let f = |t: f64| m.eval_log(t);
    let mut evidence = Vec::with_capacity(DYADIC_LEVELS);
    let mut increments = Vec::with_capacity(DYADIC_LEVELS);
    let mut sum = 0.0;
    for k in 1..=DYADIC_LEVELS {
        let inc = block(&f, (k - 1) as f64 * ln2, k as f64 * ln2);
        sum += inc;
        increments.push(inc);
        evidence.push(sum);
    }
    let base = DYADIC_LEVELS as f64 * ln2;
    let mut condensed = Vec::with_capacity(CONDENSED_LEVELS);
    for j in 0..CONDENSED_LEVELS {
        let lo = base * 2f64.powi(j as i32);
        condensed.push(block_log(&f, lo, 2.0 * lo));
    }
    let run = &condensed[CONDENSED_LEVELS - RUN_LENGTH..];
    let all_small = run.iter().all(|v| v.is_finite() && *v < tol);
    let all_large = run.iter().all(|v| *v >= tol);
    let not_shrinking = run.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-3));
    let verdict = if all_small {
        Dini::Dini
    } else if all_large && not_shrinking {
        Dini::NotDini
    } else {
        Dini::Inconclusive
    };
    let integral_estimate = (verdict == Dini::Dini).then(|| {
        let total: f64 = sum + condensed.iter().sum::<f64>();
        total + geometric_tail(&condensed)
    });
    DiniVerdict { verdict, integral_estimate, evidence, condensed }
}

fn block<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    quad::integrate(f, a, b, 1e-10).unwrap_or(f64::NAN)
}

// ∫_a^b f(t) dt computed in s = ln t, suited to blocks spanning a doubling.
fn block_log<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    quad::integrate(|s: f64| f(s.exp()) * s.exp(), a.ln(), b.ln(), 1e-10).unwrap_or(f64::NAN)
}

// Tail beyond the last block, assuming geometric decay of the blocks.
fn geometric_tail(blocks: &[f64]) -> f64 {
    let n = blocks.len();
    if n < 2 || blocks[n - 1] == 0.0 {
        return 0.0;
    }
    let q = blocks[n - 1] / blocks[n - 2];
    if q > 0.0 && q < 1.0 {
        blocks[n - 1] * q / (1.0 - q)
    } else {
        0.0
    }
}

/// r^β ∫_r^{r0} m(t)/t^{1+β} dt.
pub fn tail_functional(m: &Modulus, r: f64, beta: f64) -> Result<f64> {
    if !(r > 0.0 && r < m.r0) {
        return Err(LabError::Input(format!("radius {r} outside (0, {})", m.r0)));
    }
    tail_functional_log(m, (m.r0 / r).ln(), beta)
}

/// Tail functional at r = r0·e^{-big_t}, usable when r underflows.
pub fn tail_functional_log(m: &Modulus, big_t: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(LabError::Input(format!("exponent must lie in (0, 1), got {beta}")));
    }
    if !(big_t >= 0.0) || !big_t.is_finite() {
        return Err(LabError::Input(format!("log radius {big_t} invalid")));
    }
    if m.is_zero() {
        return Ok(0.0);
    }
    // in τ = ln(r0/t) the r0 powers cancel: ∫_0^T m_log(τ) e^{-β(T-τ)} dτ
    let g = |tau: f64| m.eval_log(tau) * (-beta * (big_t - tau)).exp();
    let pieces = (big_t / 4.0).ceil().clamp(1.0, 4096.0) as usize;
    quad::integrate_split(g, 0.0, big_t, pieces, 1e-8).map_err(|e| {
        LabError::Numeric(format!("tail functional at ln(r0/r) = {big_t}, beta = {beta}: {e}"))
    })
}

/// ∫_0^r m(t)/t dt for a Dini modulus.
pub fn dini_tail(m: &Modulus, r: f64) -> Result<f64> {
    if !(r > 0.0 && r <= m.r0 * (1.0 + 1e-15)) {
        return Err(LabError::Input(format!("radius {r} outside (0, {}]", m.r0)));
    }
    dini_tail_log(m, (m.r0 / r).ln().max(0.0))
}

/// Dini tail from r = r0·e^{-t0} down to 0.
pub fn dini_tail_log(m: &Modulus, t0: f64) -> Result<f64> {
    let verdict = dini_classify(m, DINI_TOL);
    if verdict.verdict != Dini::Dini {
        return Err(LabError::Precondition(format!(
            "modulus {m} is not classified Dini ({:?})",
            verdict.verdict
        )));
    }
    dini_tail_unchecked(m, t0)
}

/// Dini tail without re-running the classifier.
pub fn dini_tail_unchecked(m: &Modulus, t0: f64) -> Result<f64> {
    if m.is_zero() {
        return Ok(0.0);
    }
    let f = |t: f64| m.eval_log(t);
    // blocks [t0 + 2^j - 1, t0 + 2^{j+1} - 1] of doubling length
    let mut total = 0.0;
    let mut blocks = Vec::new();
    for j in 0..200 {
        let lo = t0 + 2f64.powi(j) - 1.0;
        let hi = t0 + 2f64.powi(j + 1) - 1.0;
        let b = if j < 4 {
            quad::integrate(f, lo, hi, 1e-10)?
        } else {
            quad::integrate(|s: f64| f(s.exp()) * s.exp(), lo.ln(), hi.ln(), 1e-10)?
        };
        total += b;
        blocks.push(b);
        let n = blocks.len();
        if n >= 3 {
            let q1 = blocks[n - 1] / blocks[n - 2];
            let q0 = blocks[n - 2] / blocks[n - 3];
            let tail = geometric_tail(&blocks);
            let settled = (q1 - q0).abs() < 1e-3 || blocks[n - 1] < 1e-300;
            if b <= 1e-9 * total.max(f64::MIN_POSITIVE) && settled {
                return Ok(total + tail);
            }
            if b == 0.0 {
                return Ok(total);
            }
        }
    }
    Err(LabError::Numeric(format!("Dini tail of {m} did not settle")))
}

impl fmt::Display for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ModulusKind::Power(b) => write!(f, "power:{b}"),
            ModulusKind::LogPower(p) => write!(f, "logpow:{p}"),
            ModulusKind::Zero => write!(f, "zero"),
            ModulusKind::Scaled { inner, rho, log_rho } => {
                if *rho > 0.0 {
                    write!(f, "scaled:{rho}:{inner}")
                } else {
                    write!(f, "scaled:e^{log_rho}:{inner}")
                }
            }
            ModulusKind::MaxOf(parts) => {
                let items: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "max:[{}]", items.join(","))
            }
            ModulusKind::Tabulated(s) => {
                let items: Vec<String> = s.iter().map(|(r, v)| format!("{r}/{v}")).collect();
                write!(f, "table:[{}]", items.join(","))
            }
        }
    }
}

impl std::str::FromStr for Modulus {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        parse_modulus(s.trim())
    }
}

fn num(s: &str, what: &str) -> Result<f64> {
    parse_number(s).map_err(|e| LabError::config(what, e))
}

fn parse_modulus(s: &str) -> Result<Modulus> {
    let tagged = Tagged::parse(s);
    let pos = &tagged.positional;
    let bad = || LabError::config("modulus", format!("cannot parse modulus literal `{s}`"));
    match tagged.head.as_str() {
        "zero" => Ok(Modulus::zero()),
        "power" => Modulus::power(num(pos.first().ok_or_else(bad)?, "modulus")?),
        "logpow" => Modulus::log_power(num(pos.first().ok_or_else(bad)?, "modulus")?),
        "scaled" => {
            let (rho_text, rest) = s["scaled:".len()..].split_once(':').ok_or_else(bad)?;
            let rho_text = rho_text.trim();
            let inner = parse_modulus(rest)?;
            match rho_text.strip_prefix("e^") {
                Some(l) => Modulus::scaled_log(inner, num(l, "modulus")?),
                None => Modulus::scaled(inner, num(rho_text, "modulus")?),
            }
        }
        "max" => {
            let body = &s["max:".len()..];
            let inner = unbracket(body).ok_or_else(bad)?;
            let parts = split_top(inner, ',').iter().map(|p| parse_modulus(p.trim())).collect::<Result<Vec<_>>>()?;
            Modulus::max_of(parts)
        }
        "table" => {
            let inner = unbracket(&s["table:".len()..]).ok_or_else(bad)?;
            let mut samples = Vec::new();
            for item in split_top(inner, ',') {
                let (r, v) = item.split_once('/').ok_or_else(bad)?;
                samples.push((num(r, "modulus")?, num(v, "modulus")?));
            }
            Modulus::tabulated(samples)
        }
        _ => Err(bad()),
    }
}

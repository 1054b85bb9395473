//! Dyadic recurrences behind the boundary differentiability arguments: the
//! one-sided slope sequence with its summation majorant, the Dini-summable
//! bracket sequence, and the two-sided squeeze with its case split.
//!
//! Inequality updates are run as equalities, which is the worst case and
//! keeps traces deterministic.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::moduli::{dini_tail, Modulus};
use crate::probe::{NodalData, SqueezeLedger};
use crate::quad;

pub const DEFAULT_CBAR: f64 = 2.0;

/// Proof constants. `beta` is derived from 1 − μ = η^β.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceParams {
    pub eta: f64,
    pub mu: f64,
    pub alpha1: f64,
    pub c0: f64,
    pub cbar: f64,
    pub beta: f64,
}

pub const C0_BELOW_ETA: &str = "c0 <= eta";
pub const DECAY_BELOW_HALF_STEP: &str = "eta^(alpha1/2) <= (1-mu)/2";
pub const SUMMATION_FACTOR: &str = "(1-eta^(alpha1/2))(1-eta) >= 1/2";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recurrence {
    /// One-sided slope a_k with residual A_k.
    OneSided,
    /// Brackets ã_k ≥ 0 ≥ b̃_k with a Dini residual Ã_k.
    Bracket,
    /// Two-sided squeeze a_k ≥ b_k with residuals A_k, B_k.
    TwoSided,
}

impl RecurrenceParams {
    pub fn new(eta: f64, mu: f64, alpha1: f64, c0: f64, cbar: f64) -> Result<Self> {
        let open = |v: f64, hi: f64, name: &'static str| -> Result<()> {
            if v > 0.0 && v < hi {
                Ok(())
            } else {
                Err(LabError::Constraint { constraint: name, detail: format!("{v} outside (0, {hi})") })
            }
        };
        open(eta, 0.25, "0 < eta < 1/4")?;
        open(mu, 0.25, "0 < mu < 1/4")?;
        open(alpha1, 1.0, "0 < alpha1 < 1")?;
        open(c0, 0.25, "0 < c0 < 1/4")?;
        if !(cbar >= 1.0) {
            return Err(LabError::Constraint { constraint: "cbar >= 1", detail: format!("cbar = {cbar}") });
        }
        Ok(Self { eta, mu, alpha1, c0, cbar, beta: (1.0 - mu).ln() / eta.ln() })
    }

    /// η^{α₁/2}, the residual decay per level.
    pub fn decay(&self) -> f64 {
        self.eta.powf(self.alpha1 / 2.0)
    }

    fn violations(&self, kind: Recurrence) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let x = self.decay();
        if self.c0 > self.eta {
            out.push((C0_BELOW_ETA, format!("c0 = {} > eta = {}", self.c0, self.eta)));
        }
        if kind == Recurrence::OneSided && x > (1.0 - self.mu) / 2.0 {
            out.push((DECAY_BELOW_HALF_STEP, format!("{x:.6} > {:.6}", (1.0 - self.mu) / 2.0)));
        }
        if kind != Recurrence::OneSided && (1.0 - x) * (1.0 - self.eta) < 0.5 {
            out.push((SUMMATION_FACTOR, format!("{:.6} < 0.5", (1.0 - x) * (1.0 - self.eta))));
        }
        if kind == Recurrence::TwoSided && self.mu >= 0.125 {
            out.push(("0 < mu < 1/8", format!("mu = {}", self.mu)));
        }
        out
    }

    /// Fails with the first constraint the recurrence needs and `self` violates.
    pub fn require(&self, kind: Recurrence) -> Result<()> {
        match self.violations(kind).into_iter().next() {
            Some((constraint, detail)) => Err(LabError::Constraint { constraint, detail }),
            None => Ok(()),
        }
    }

    /// All three smallness constraints at once.
    pub fn is_admissible(&self) -> bool {
        self.violations(Recurrence::OneSided).is_empty() && self.violations(Recurrence::Bracket).is_empty()
    }
}

/// Which branch the two-sided squeeze takes at a level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// u(r e_n) ≥ (a + b) r/2: the lower slope improves.
    Lower,
    /// u(r e_n) ≤ (a + b) r/2: the upper slope improves.
    Upper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CaseOracle {
    Alternating,
    Constant(Case),
    /// Explicit cases, continued by alternation past the end.
    Sequence(Vec<Case>),
}

impl CaseOracle {
    pub fn case(&self, k: usize) -> Case {
        let alt = |k: usize| if k % 2 == 1 { Case::Lower } else { Case::Upper };
        match self {
            CaseOracle::Alternating => alt(k),
            CaseOracle::Constant(c) => *c,
            CaseOracle::Sequence(v) => v.get(k.wrapping_sub(1)).copied().unwrap_or_else(|| alt(k)),
        }
    }

    /// Cases read off a probed field: at level k, compare u(r e_n) with the
    /// midpoint plane at r = radius/2.
    pub fn from_probe(data: &NodalData, ledger: &SqueezeLedger) -> Self {
        let n = ledger.direction;
        let cases = ledger
            .levels
            .iter()
            .map(|l| {
                let r = 0.5 * l.radius;
                let target = [r * n[0], r * n[1]];
                let u = data
                    .points
                    .iter()
                    .zip(&data.values)
                    .take(data.interior)
                    .min_by(|a, b| dist(*a.0, target).total_cmp(&dist(*b.0, target)))
                    .map(|(_, v)| *v)
                    .unwrap_or(0.0);
                if u >= 0.5 * (l.upper_slope + l.lower_slope) * r {
                    Case::Lower
                } else {
                    Case::Upper
                }
            })
            .collect();
        CaseOracle::Sequence(cases)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Sequences indexed by level k = 0..=depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceTrace {
    pub kind: Recurrence,
    pub params: RecurrenceParams,
    pub depth: usize,
    /// a_k (or ã_k).
    pub upper: Vec<f64>,
    /// b_k (or b̃_k); empty for the one-sided recurrence.
    pub lower: Vec<f64>,
    /// A_k (or Ã_k).
    pub upper_residual: Vec<f64>,
    /// B_k; empty unless two-sided.
    pub lower_residual: Vec<f64>,
    pub cases: Vec<Option<Case>>,
    /// One-sided: the summation majorant of a_k. Bracket: partial sums of Ã.
    /// Two-sided: gap-law right-hand side with the fitted constant.
    pub bound: Vec<f64>,
    /// Two-sided only: smallest constant making the gap law hold.
    pub gap_constant: Option<f64>,
    pub checks: Vec<Check>,
}

impl SequenceTrace {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn gap(&self, k: usize) -> Option<f64> {
        Some(self.upper.get(k)? - self.lower.get(k)?)
    }

    /// CSV with a commented header carrying the parameters and `seed`.
    pub fn to_csv(&self, seed: Option<u64>) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# kind={:?} eta={} mu={} alpha1={} c0={} cbar={} beta={} seed={}",
            self.kind,
            p.eta,
            p.mu,
            p.alpha1,
            p.c0,
            p.cbar,
            p.beta,
            seed.map_or("none".to_string(), |v| v.to_string())
        );
        s.push_str("k,a,b,A,B,case,bound\n");
        let cell = |v: &Vec<f64>, k: usize| v.get(k).map_or(String::new(), |x| x.to_string());
        for k in 0..=self.depth {
            let case = match self.cases.get(k).copied().flatten() {
                Some(Case::Lower) => "lower",
                Some(Case::Upper) => "upper",
                None => "",
            };
            let _ = writeln!(
                s,
                "{k},{},{},{},{},{case},{}",
                cell(&self.upper, k),
                cell(&self.lower, k),
                cell(&self.upper_residual, k),
                cell(&self.lower_residual, k),
                cell(&self.bound, k)
            );
        }
        s
    }
}

fn sample_at_level(m: &Modulus, p: &RecurrenceParams, k: usize) -> f64 {
    // σ(η^k) with t = ln(r0/r)
    m.eval_log(m.r0.ln() - k as f64 * p.eta.ln())
}

/// A_k = max(σ(η^{k-1}), η^{α₁/2} A_{k-1}), A_0 = c0.
fn max_residuals(m: &Modulus, p: &RecurrenceParams, depth: usize) -> Vec<f64> {
    let x = p.decay();
    let mut out = vec![p.c0];
    for k in 1..=depth {
        out.push(sample_at_level(m, p, k - 1).max(x * out[k - 1]));
    }
    out
}

/// The one-sided slope recurrence and its summation majorant
/// C̄/(1−μ)·η^{kβ}(4c0 + 2/((1−μ)²(1−η))∫_{η^k}^1 σ(t)t^{-1-β}dt).
pub fn run_one_sided(p: &RecurrenceParams, sigma: &Modulus, depth: usize) -> Result<SequenceTrace> {
    p.require(Recurrence::OneSided)?;
    sigma.validate()?;
    let big_a = max_residuals(sigma, p, depth);
    let mut a = vec![0.0];
    for k in 1..=depth {
        a.push((1.0 - p.mu) * a[k - 1] + p.cbar * big_a[k - 1]);
    }
    // weighted[k] = η^{kβ}∫_{η^k}^1 σ(t)t^{-1-β}dt, accumulated level by level in s = ln(1/t)
    let step = -p.eta.ln();
    let shift = sigma.r0.ln();
    let mut weighted = vec![0.0];
    for k in 1..=depth {
        let (lo, hi) = ((k - 1) as f64 * step, k as f64 * step);
        let piece = quad::integrate(|s| sigma.eval_log(shift + s) * (-p.beta * (hi - s)).exp(), lo, hi, 1e-10)?;
        weighted.push((1.0 - p.mu) * weighted[k - 1] + piece);
    }
    let lead = p.cbar / (1.0 - p.mu);
    let mix = 2.0 / ((1.0 - p.mu).powi(2) * (1.0 - p.eta));
    let bound: Vec<f64> =
        (0..=depth).map(|k| lead * ((1.0 - p.mu).powi(k as i32) * 4.0 * p.c0 + mix * weighted[k])).collect();
    let worst = (0..=depth).map(|k| a[k] - bound[k]).fold(f64::NEG_INFINITY, f64::max);
    let checks = vec![
        Check {
            name: "slope below majorant".into(),
            pass: worst <= 1e-12 * (1.0 + p.cbar),
            detail: format!("max_k (a_k - bound_k) = {worst:.3e}"),
        },
        Check {
            name: "nonnegative".into(),
            pass: a.iter().chain(&big_a).all(|v| *v >= 0.0),
            detail: String::new(),
        },
    ];
    Ok(SequenceTrace {
        kind: Recurrence::OneSided,
        params: *p,
        depth,
        upper: a,
        lower: vec![],
        upper_residual: big_a,
        lower_residual: vec![],
        cases: vec![None; depth + 1],
        bound,
        gap_constant: None,
        checks,
    })
}

/// The bracket recurrence ã_k = ã_{k-1} + C̄Ã_{k-1}, b̃_k = b̃_{k-1} − C̄Ã_{k-1}
/// for a Dini modulus normalized by ω(1) ≤ c0 and ∫_0^1 ω(r)/r dr ≤ c0.
pub fn run_bracket(p: &RecurrenceParams, omega: &Modulus, depth: usize) -> Result<SequenceTrace> {
    p.require(Recurrence::Bracket)?;
    omega.validate()?;
    let at_one = omega.eval_log(omega.r0.ln());
    let tail = if omega.r0 < 1.0 {
        return Err(LabError::Precondition(format!("modulus reference radius {} below 1", omega.r0)));
    } else {
        dini_tail(omega, 1.0)?
    };
    let slack = 1e-9 * p.c0;
    if at_one > p.c0 + slack || tail > p.c0 + slack {
        return Err(LabError::Precondition(format!(
            "modulus normalization: omega(1) = {at_one:.6e}, Dini tail = {tail:.6e}, c0 = {}",
            p.c0
        )));
    }
    let big_a = max_residuals(omega, p, depth);
    let (mut a, mut b) = (vec![0.0], vec![0.0]);
    for k in 1..=depth {
        a.push(a[k - 1] + p.cbar * big_a[k - 1]);
        b.push(b[k - 1] - p.cbar * big_a[k - 1]);
    }
    let mut sums = Vec::with_capacity(depth + 1);
    let mut s = 0.0;
    for v in &big_a {
        s += v;
        sums.push(s);
    }
    let cap = 6.0 * p.c0;
    let worst = sums.iter().copied().fold(0.0, f64::max);
    let mut checks = vec![
        Check {
            name: "partial sums below 6 c0".into(),
            pass: worst <= cap * (1.0 + 1e-12),
            detail: format!("max partial sum {worst:.6e} against {cap:.6e}"),
        },
        Check {
            name: "brackets straddle zero".into(),
            pass: a.iter().zip(&b).all(|(x, y)| *x >= 0.0 && *y <= 0.0),
            detail: String::new(),
        },
    ];
    if p.cbar * cap <= 1.0 {
        checks.push(Check {
            name: "slopes within [-1, 1]".into(),
            pass: a.iter().zip(&b).all(|(x, y)| *x <= 1.0 && *y >= -1.0 && y <= x),
            detail: format!("cbar * 6 c0 = {:.4}", p.cbar * cap),
        });
    }
    Ok(SequenceTrace {
        kind: Recurrence::Bracket,
        params: *p,
        depth,
        upper: a,
        lower: b,
        upper_residual: big_a,
        lower_residual: vec![],
        cases: vec![None; depth + 1],
        bound: sums,
        gap_constant: None,
        checks,
    })
}

/// The two-sided squeeze with its per-level case split, clamped by the
/// bracket trace of `omega`; σ ≥ ω is checked on the dyadic radii.
pub fn run_two_sided(
    p: &RecurrenceParams,
    sigma: &Modulus,
    omega: &Modulus,
    depth: usize,
    oracle: &CaseOracle,
) -> Result<SequenceTrace> {
    p.require(Recurrence::TwoSided)?;
    sigma.validate()?;
    for k in 0..=depth.max(64) {
        let (s, w) = (sample_at_level(sigma, p, k), sample_at_level(omega, p, k));
        if s < w * (1.0 - 1e-12) {
            return Err(LabError::Precondition(format!("sigma < omega at radius eta^{k}: {s:.6e} < {w:.6e}")));
        }
    }
    let bracket = run_bracket(p, omega, depth)?;
    let x = p.decay();
    let (mut a, mut b) = (vec![0.0], vec![0.0]);
    let (mut big_a, mut big_b) = (vec![p.c0], vec![p.c0]);
    let mut cases = vec![None];
    for k in 1..=depth {
        let s = sample_at_level(sigma, p, k - 1);
        let gap = a[k - 1] - b[k - 1];
        let case = oracle.case(k);
        let (na, nb, ra, rb) = match case {
            Case::Lower => (
                a[k - 1] + p.cbar * big_a[k - 1],
                b[k - 1] + p.mu * gap - p.cbar * big_b[k - 1],
                s.max(x * big_a[k - 1]),
                2.0 * s + x * big_b[k - 1],
            ),
            Case::Upper => (
                a[k - 1] - p.mu * gap + p.cbar * big_a[k - 1],
                b[k - 1] - p.cbar * big_b[k - 1],
                2.0 * s + x * big_a[k - 1],
                s.max(x * big_b[k - 1]),
            ),
        };
        a.push(na.min(bracket.upper[k]));
        b.push(nb.max(bracket.lower[k]));
        big_a.push(ra);
        big_b.push(rb);
        cases.push(Some(case));
    }
    // excess below the rounding level of the slopes carries no information
    let roundoff = |k: usize| 8.0 * f64::EPSILON * (a[k].abs() + b[k].abs() + a[k - 1].abs() + b[k - 1].abs());
    let mut ctilde = 0.0f64;
    for k in 1..=depth {
        let excess = (a[k] - b[k]) - (1.0 - p.mu) * (a[k - 1] - b[k - 1]) - roundoff(k);
        let weight = big_a[k - 1] + big_b[k - 1];
        if weight > 0.0 && excess > 0.0 {
            ctilde = ctilde.max(excess / weight);
        }
    }
    let mut bound = vec![0.0];
    for k in 1..=depth {
        bound.push((1.0 - p.mu) * (a[k - 1] - b[k - 1]) + ctilde * (big_a[k - 1] + big_b[k - 1]));
    }
    let ordered = a.iter().zip(&b).all(|(x, y)| x >= y);
    let law = (1..=depth).all(|k| a[k] - b[k] <= bound[k] * (1.0 + 1e-12) + roundoff(k));
    let checks = vec![
        Check { name: "upper slope above lower".into(), pass: ordered, detail: String::new() },
        Check {
            name: "gap law".into(),
            pass: law && ctilde <= p.cbar * (1.0 + 1e-12),
            detail: format!("fitted constant {ctilde:.4} against cbar {}", p.cbar),
        },
        Check {
            name: "nonnegative residuals".into(),
            pass: big_a.iter().chain(&big_b).all(|v| *v >= 0.0),
            detail: String::new(),
        },
    ];
    Ok(SequenceTrace {
        kind: Recurrence::TwoSided,
        params: *p,
        depth,
        upper: a,
        lower: b,
        upper_residual: big_a,
        lower_residual: big_b,
        cases,
        bound,
        gap_constant: Some(ctilde),
        checks,
    })
}

/// Admissible draws from the box plus a deterministic witness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSet {
    pub draws: Vec<RecurrenceParams>,
    pub attempts: usize,
    pub witness: RecurrenceParams,
    pub seed: u64,
}

/// A point satisfying every constraint for the given α₁ with μ < 1/8.
pub fn admissible_witness(alpha1: f64, cbar: f64) -> Result<RecurrenceParams> {
    let mu: f64 = 0.1;
    // η^{α₁/2} = (1−μ)/4 leaves room in both η constraints
    let eta = ((1.0 - mu) / 4.0).powf(2.0 / alpha1).min(0.2);
    let p = RecurrenceParams::new(eta, mu, alpha1, eta / 2.0, cbar)?;
    debug_assert!(p.is_admissible());
    Ok(p)
}

/// Candidate `i` uses its own ChaCha stream, so results do not depend on
/// thread scheduling. (η, c0) are log-uniform on [1e-4, 1/4), μ uniform on
/// (0, `mu_max`).
fn candidate(alpha1: f64, cbar: f64, mu_max: f64, seed: u64, i: u64) -> Option<RecurrenceParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    let lo = 1e-4f64.ln();
    let hi = 0.25f64.ln();
    let eta = rng.gen_range(lo..hi).exp();
    let c0 = rng.gen_range(lo..hi).exp();
    let mu = rng.gen_range(0.0..mu_max);
    if mu <= 0.0 {
        return None;
    }
    RecurrenceParams::new(eta, mu, alpha1, c0, cbar).ok().filter(|p| p.is_admissible())
}

/// Rejection-samples `samples` candidates; accepted ones keep index order.
pub fn admissible_region(alpha1: f64, cbar: f64, samples: usize, seed: u64) -> Result<AdmissibleSet> {
    sample_region(alpha1, cbar, 0.25, samples, seed)
}

fn sample_region(alpha1: f64, cbar: f64, mu_max: f64, samples: usize, seed: u64) -> Result<AdmissibleSet> {
    if !(alpha1 > 0.0 && alpha1 < 1.0) {
        return Err(LabError::Input(format!("alpha1 = {alpha1} outside (0, 1)")));
    }
    let witness = admissible_witness(alpha1, cbar)?;
    let draws: Vec<RecurrenceParams> =
        (0..samples as u64).into_par_iter().filter_map(|i| candidate(alpha1, cbar, mu_max, seed, i)).collect();
    Ok(AdmissibleSet { draws, attempts: samples, witness, seed })
}

/// Draws until `count` admissible points are found, with μ below `mu_max`.
pub fn admissible_draws(alpha1: f64, cbar: f64, mu_max: f64, count: usize, seed: u64) -> Result<AdmissibleSet> {
    let mut n = count.max(1) * 4;
    loop {
        let mut set = sample_region(alpha1, cbar, mu_max, n, seed)?;
        if set.draws.len() >= count {
            set.draws.truncate(count);
            return Ok(set);
        }
        if n > 1 << 24 {
            return Err(LabError::Numeric(format!("only {} admissible draws in {n} attempts", set.draws.len())));
        }
        n *= 4;
    }
}

/// zero, power(α₁), power(1/2) and logpow(2), each rescaled in its argument
/// so that the Dini integral over (0, 1) equals c0.
pub fn normalized_family(alpha1: f64, c0: f64) -> Result<Vec<(String, Modulus)>> {
    // ∫_0^1 (ρr)^α/r dr = ρ^α/α and ∫_0^1 (1 + ln(1/(ρr)))^{-2}/r dr = 1/(1 + ln(1/ρ))
    let power = |alpha: f64| -> Result<Modulus> { Modulus::scaled(Modulus::power(alpha)?, (alpha * c0).powf(1.0 / alpha)) };
    Ok(vec![
        ("zero".to_string(), Modulus::zero()),
        (format!("power({alpha1})"), power(alpha1)?),
        ("scaled power(1/2)".to_string(), power(0.5)?),
        ("scaled logpow(2)".to_string(), Modulus::scaled_log(Modulus::log_power(2.0)?, 1.0 - 1.0 / c0)?),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constraint_names() {
        let p = RecurrenceParams::new(0.01, 0.2, 0.5, 0.01, 2.0).unwrap();
        assert!(p.is_admissible());
        let q = RecurrenceParams::new(0.2, 0.2, 0.5, 0.1, 2.0).unwrap();
        assert!(matches!(q.require(Recurrence::OneSided), Err(LabError::Constraint { constraint: DECAY_BELOW_HALF_STEP, .. })));
        let r = RecurrenceParams::new(0.01, 0.2, 0.5, 0.02, 2.0).unwrap();
        assert!(matches!(r.require(Recurrence::OneSided), Err(LabError::Constraint { constraint: C0_BELOW_ETA, .. })));
        assert!((p.beta - 0.8f64.ln() / 0.01f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_modulus_closed_form() {
        let p = RecurrenceParams::new(0.01, 0.2, 0.5, 0.01, 2.0).unwrap();
        let t = run_one_sided(&p, &Modulus::zero(), 40).unwrap();
        let x = p.decay();
        for k in 0..=40 {
            assert!((t.upper_residual[k] - p.c0 * x.powi(k as i32)).abs() < 1e-18);
            let closed: f64 = (0..k).map(|i| (1.0 - p.mu).powi((k - 1 - i) as i32) * x.powi(i as i32)).sum::<f64>() * p.cbar * p.c0;
            assert!((t.upper[k] - closed).abs() < 1e-15);
        }
        assert!(t.passed());
        assert_eq!(t.upper[1], p.cbar * p.c0);
    }

    #[test]
    fn power_modulus_stays_below_majorant() {
        let p = RecurrenceParams::new(0.01, 0.2, 0.5, 0.01, 2.0).unwrap();
        // σ(r) = (ρr)^{1/2} with σ(1) = c0
        let sigma = Modulus::scaled(Modulus::power(0.5).unwrap(), p.c0 * p.c0).unwrap();
        assert!((sigma.eval_log(0.0) - p.c0).abs() < 1e-15);
        let t = run_one_sided(&p, &sigma, 60).unwrap();
        assert!(t.passed(), "{:?}", t.checks);
        // the documented draw (eta, mu, c0) = (0.1, 0.2, 0.05) breaks the decay constraint
        let q = RecurrenceParams::new(0.1, 0.2, 0.5, 0.05, 2.0).unwrap();
        assert!(matches!(run_one_sided(&q, &sigma, 5), Err(LabError::Constraint { .. })));
    }

    #[test]
    fn bracket_sums() {
        let p = RecurrenceParams::new(0.01, 0.2, 0.5, 0.01, 2.0).unwrap();
        let t = run_bracket(&p, &Modulus::zero(), 200).unwrap();
        let limit = p.c0 / (1.0 - p.decay());
        assert!((t.bound[200] - limit).abs() < 1e-15);
        assert!(t.passed());
        let d0 = run_bracket(&p, &Modulus::zero(), 0).unwrap();
        assert_eq!(d0.bound, vec![p.c0]);
        for (_, m) in normalized_family(p.alpha1, p.c0).unwrap() {
            let t = run_bracket(&p, &m, 200).unwrap();
            assert!(t.passed(), "{m}: {:?}", t.checks);
        }
        let heavy = Modulus::power(0.5).unwrap();
        assert!(matches!(run_bracket(&p, &heavy, 10), Err(LabError::Precondition(_))));
    }

    #[test]
    fn family_is_normalized() {
        for (name, m) in normalized_family(0.5, 0.01).unwrap() {
            let tail = dini_tail(&m, 1.0).unwrap();
            if name != "zero" {
                assert!((tail - 0.01).abs() < 1e-9, "{name}: {tail}");
            }
            assert!(m.eval_log(0.0) <= 0.01);
        }
    }

    #[test]
    fn two_sided_zero_moduli_contract() {
        let p = RecurrenceParams::new(0.01, 0.1, 0.5, 0.01, 2.0).unwrap();
        let t = run_two_sided(&p, &Modulus::zero(), &Modulus::zero(), 200, &CaseOracle::Alternating).unwrap();
        assert!(t.passed(), "{:?}", t.checks);
        assert!(t.gap(200).unwrap() < t.gap(1).unwrap() * 0.9f64.powi(150));
    }

    #[test]
    fn two_sided_lower_case_raises_b() {
        let p = RecurrenceParams::new(0.01, 0.1, 0.5, 0.01, 2.0).unwrap();
        let sigma = Modulus::power(0.5).unwrap();
        let t = run_two_sided(&p, &sigma, &Modulus::zero(), 30, &CaseOracle::Constant(Case::Lower)).unwrap();
        for k in 2..=30 {
            assert!(t.upper[k] <= t.upper[k - 1] + p.cbar * t.upper_residual[k - 1] + 1e-15);
        }
        assert!(t.upper_residual[30] < 1e-10 && t.lower_residual[30] < 1e-10);
        assert!(t.passed(), "{:?}", t.checks);
        assert!(matches!(
            run_two_sided(&p, &Modulus::zero(), &sigma, 5, &CaseOracle::Alternating),
            Err(LabError::Precondition(_))
        ));
    }

    #[test]
    fn region_examples() {
        let set = admissible_region(0.5, 2.0, 2000, 7).unwrap();
        assert!(!set.draws.is_empty());
        assert!(set.draws.iter().all(|p| p.is_admissible()));
        assert!(set.witness.is_admissible());
        let again = admissible_region(0.5, 2.0, 2000, 7).unwrap();
        assert_eq!(set, again);
        for a in [0.01, 0.3, 0.99] {
            assert!(admissible_witness(a, 2.0).unwrap().is_admissible());
        }
    }

    #[test]
    fn csv_header_records_seed() {
        let p = RecurrenceParams::new(0.01, 0.1, 0.5, 0.01, 2.0).unwrap();
        let t = run_two_sided(&p, &Modulus::zero(), &Modulus::zero(), 3, &CaseOracle::Alternating).unwrap();
        let csv = t.to_csv(Some(42));
        assert!(csv.starts_with("# kind=TwoSided") && csv.contains("seed=42"));
        assert_eq!(csv.lines().count(), 2 + 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn larger_sigma_never_lowers_residuals(i in 0u64..1000, w in 1.0..4.0f64) {
            let Some(p) = candidate(0.5, 2.0, 0.25, 99, i) else { return Ok(()) };
            let small = Modulus::scaled(Modulus::power(0.5).unwrap(), 1e-6).unwrap();
            let large = Modulus::max_of(vec![small.clone(), Modulus::scaled(Modulus::power(0.5).unwrap(), 1e-6 * w * w).unwrap()]).unwrap();
            let a = run_one_sided(&p, &small, 50).unwrap();
            let b = run_one_sided(&p, &large, 50).unwrap();
            for k in 0..=50 {
                prop_assert!(b.upper_residual[k] >= a.upper_residual[k]);
                prop_assert!(b.upper[k] >= a.upper[k]);
            }
        }
    }
}

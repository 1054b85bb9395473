//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use std::collections::BinaryHeap;

use crate::error::{LabError, Result};

const NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights at NODES[1], NODES[3], NODES[5], NODES[7]
const GAUSS: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

const MAX_INTERVALS: usize = 4000;

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 15-point rule with the QUADPACK error heuristic.
fn rule<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> std::result::Result<Piece, f64> {
    let c = 0.5 * (a + b);
    let w = 0.5 * (b - a);
    let mut vals = [0.0; 15];
    for (i, x) in NODES.iter().enumerate() {
        let (lo, hi) = (f(c - w * x), f(c + w * x));
        if !lo.is_finite() || !hi.is_finite() {
            return Err(if lo.is_finite() { c + w * x } else { c - w * x });
        }
        vals[i] = lo;
        vals[14 - i] = hi;
    }
    let mut kronrod = KRONROD[7] * vals[7];
    let mut gauss = GAUSS[3] * vals[7];
    let mut absolute = KRONROD[7] * vals[7].abs();
    for i in 0..7 {
        kronrod += KRONROD[i] * (vals[i] + vals[14 - i]);
        absolute += KRONROD[i] * (vals[i].abs() + vals[14 - i].abs());
        if i % 2 == 1 {
            gauss += GAUSS[i / 2] * (vals[i] + vals[14 - i]);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = KRONROD[7] * (vals[7] - mean).abs();
    for i in 0..7 {
        asc += KRONROD[i] * ((vals[i] - mean).abs() + (vals[14 - i] - mean).abs());
    }
    let (kronrod, absolute, asc) = (kronrod * w, absolute * w.abs(), asc * w.abs());
    let mut error = (kronrod - gauss * w).abs();
    if asc != 0.0 && error != 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * absolute;
    Ok(Piece { a, b, value: kronrod, error: error.max(floor) })
}

/// Integrates `f` over [a, b] to the given relative accuracy.
///
/// Fails when the interval budget runs out before the error estimate meets
/// the target, which is how divergent or badly resolved integrands surface.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let nonfinite = |x: f64| LabError::Numeric(format!("integrand not finite at x = {x:e}"));
    let first = rule(&f, a, b).map_err(nonfinite)?;
    let (mut value, mut error) = (first.value, first.error);
    let mut heap = BinaryHeap::from([first]);
    while error > rel * value.abs() && error > 1e-300 {
        if heap.len() >= MAX_INTERVALS {
            return Err(LabError::Numeric(format!(
                "quadrature on [{a:e}, {b:e}] reached error {error:.3e} against target {:.3e} with {MAX_INTERVALS} intervals",
                rel * value.abs()
            )));
        }
        let worst = heap.pop().expect("heap holds the first piece");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            return Err(LabError::Numeric(format!("quadrature cannot split [{:e}, {:e}] further", worst.a, worst.b)));
        }
        let left = rule(&f, worst.a, m).map_err(nonfinite)?;
        let right = rule(&f, m, worst.b).map_err(nonfinite)?;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        if heap.len() % 64 == 0 {
            // resum to keep the running totals free of drift
            value = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    Ok(heap.iter().map(|p| p.value).sum())
}

/// Integrates over [a, b] split into `pieces` equal subintervals.
pub fn integrate_split<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize, rel: f64) -> Result<f64> {
    let n = pieces.max(1);
    let w = (b - a) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let lo = a + w * i as f64;
        let hi = if i + 1 == n { b } else { lo + w };
        total += integrate(&f, lo, hi, rel)?;
    }
    Ok(total)
}

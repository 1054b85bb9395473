//! Radial barrier families with exact Hessian spectra and sign certificates.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::pucci::{Ellipticity, SymMatrix};

/// Inner and outer radii of the inverse-power barrier around e_n/4.
pub const INNER_RADIUS: f64 = 1.0 / 8.0;
pub const OUTER_RADIUS: f64 = 1.0 / 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BarrierForm {
    /// c1·(r^{-α} - R^{-α})
    InversePower { c1: f64, alpha: f64, outer: f64 },
    /// 2·(1 - r^{-p})
    OneMinusInversePower { p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialBarrier {
    pub center: Vec<f64>,
    pub form: BarrierForm,
    pub annulus: (f64, f64),
}

/// Eigenvalues of the Hessian of a radial function g(|x - c|).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialSpectrum {
    /// g''(r), simple
    pub radial_eig: f64,
    /// g'(r)/r, multiplicity n - 1
    pub tangential_eig: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignCondition {
    /// M⁻(D²v) ≥ 0
    SupersolutionMinus,
    /// M⁺(D²v) ≤ 0
    SubsolutionPlus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignCertificate {
    pub pass: bool,
    /// Smallest slack found (≥ 0 on a pass).
    pub margin: f64,
    /// Radius where the slack is most negative, on a failure.
    pub witness_radius: Option<f64>,
    pub samples: usize,
    /// Why finitely many radii certify the whole annulus.
    pub argument: String,
}

impl RadialBarrier {
    /// c1·(|x - c|^{-α} - R^{-α}) on the annulus [R/2, R].
    pub fn inverse_power(center: Vec<f64>, c1: f64, alpha: f64, outer: f64) -> Result<Self> {
        if !(alpha > 0.0 && outer > 0.0 && c1 >= 0.0) {
            return Err(LabError::Input(format!("need alpha > 0, R > 0, c1 >= 0 (got {alpha}, {outer}, {c1})")));
        }
        Self::build(center, BarrierForm::InversePower { c1, alpha, outer }, (0.5 * outer, outer))
    }

    /// The barrier around e_n/4 vanishing at r = 1/4.
    pub fn lower_barrier(dim: usize, c1: f64, alpha: f64) -> Result<Self> {
        let mut c = vec![0.0; dim];
        c[dim - 1] = 0.25;
        Self::inverse_power(c, c1, alpha, OUTER_RADIUS)
    }

    /// 2·(1 - |x + e_n|^{-p}) on the annulus [1, 2].
    pub fn one_minus_inverse_power(dim: usize, p: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(LabError::Input(format!("exponent must be positive, got {p}")));
        }
        let mut c = vec![0.0; dim];
        c[dim - 1] = -1.0;
        Self::build(c, BarrierForm::OneMinusInversePower { p }, (1.0, 2.0))
    }

    /// The upper barrier with p = nΛ/λ.
    pub fn upper_barrier(e: &Ellipticity) -> Result<Self> {
        Self::one_minus_inverse_power(e.dim(), e.dim() as f64 * e.upper() / e.lower())
    }

    fn build(center: Vec<f64>, form: BarrierForm, annulus: (f64, f64)) -> Result<Self> {
        if !(2..=3).contains(&center.len()) {
            return Err(LabError::Input("barrier center must have dimension 2 or 3".into()));
        }
        if !(annulus.0 > 0.0 && annulus.0 < annulus.1) {
            return Err(LabError::Input("annulus needs 0 < r_inner < r_outer".into()));
        }
        Ok(Self { center, form, annulus })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn with_annulus(mut self, inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && inner < outer) {
            return Err(LabError::Input("annulus needs 0 < r_inner < r_outer".into()));
        }
        self.annulus = (inner, outer);
        Ok(self)
    }

    /// Radial profile g(r).
    pub fn profile(&self, r: f64) -> f64 {
        match self.form {
            BarrierForm::InversePower { c1, alpha, outer } => c1 * (r.powf(-alpha) - outer.powf(-alpha)),
            BarrierForm::OneMinusInversePower { p } => 2.0 * (1.0 - r.powf(-p)),
        }
    }

    fn radius_of(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.profile(self.radius_of(x))
    }

    /// Hessian assembled from the radial spectrum: g'' on ê êᵀ and g'/r on its complement.
    pub fn hessian(&self, x: &[f64]) -> Result<SymMatrix> {
        let r = self.radius_of(x);
        let s = self.spectrum_unchecked(r);
        let n = self.dim();
        let e: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| (a - c) / r).collect();
        let mut upper = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                let id = if i == j { 1.0 } else { 0.0 };
                upper.push(s.radial_eig * e[i] * e[j] + s.tangential_eig * (id - e[i] * e[j]));
            }
        }
        SymMatrix::new(n, &upper)
    }

    fn spectrum_unchecked(&self, r: f64) -> RadialSpectrum {
        match self.form {
            BarrierForm::InversePower { c1, alpha, .. } => {
                let base = c1 * alpha * r.powf(-alpha - 2.0);
                RadialSpectrum { radial_eig: base * (alpha + 1.0), tangential_eig: -base }
            }
            BarrierForm::OneMinusInversePower { p } => {
                let base = 2.0 * p * r.powf(-p - 2.0);
                RadialSpectrum { radial_eig: -base * (p + 1.0), tangential_eig: base }
            }
        }
    }
}

pub fn radial_spectrum(b: &RadialBarrier, r: f64) -> Result<RadialSpectrum> {
    let (lo, hi) = b.annulus;
    if !(r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12)) {
        return Err(LabError::Input(format!("radius {r} outside the annulus [{lo}, {hi}]")));
    }
    Ok(b.spectrum_unchecked(r))
}

/// α* = Λ(n-1)/λ - 1: the inverse-power barrier has M⁻(D²v) ≥ 0 iff α ≥ α*.
pub fn min_supersolution_exponent(e: &Ellipticity) -> f64 {
    e.upper() * (e.dim() as f64 - 1.0) / e.lower() - 1.0
}

fn pucci_on_radial(s: &RadialSpectrum, e: &Ellipticity, which: SignCondition) -> f64 {
    let (lo, hi) = (e.lower(), e.upper());
    let tang = (e.dim() - 1) as f64;
    let weigh = |v: f64, plus: bool| {
        let (pos, neg) = if plus { (hi, lo) } else { (lo, hi) };
        if v > 0.0 {
            pos * v
        } else {
            neg * v
        }
    };
    match which {
        SignCondition::SupersolutionMinus => weigh(s.radial_eig, false) + tang * weigh(s.tangential_eig, false),
        SignCondition::SubsolutionPlus => weigh(s.radial_eig, true) + tang * weigh(s.tangential_eig, true),
    }
}

/// Evaluates the requested Pucci sign on the exact spectrum at log-spaced radii.
pub fn verify_sign(b: &RadialBarrier, e: &Ellipticity, which: SignCondition, samples: usize) -> Result<SignCertificate> {
    if samples < 100 {
        return Err(LabError::Precondition(format!("need at least 100 samples, got {samples}")));
    }
    if b.dim() != e.dim() {
        return Err(LabError::Input("barrier and ellipticity dimensions differ".into()));
    }
    let (lo, hi) = b.annulus;
    let mut margin = f64::INFINITY;
    let mut witness = None;
    for k in 0..samples {
        let r = lo * (hi / lo).powf(k as f64 / (samples - 1) as f64);
        let s = b.spectrum_unchecked(r);
        let op = pucci_on_radial(&s, e, which);
        // slack is positive when the required sign holds
        let slack = match which {
            SignCondition::SupersolutionMinus => op,
            SignCondition::SubsolutionPlus => -op,
        };
        if slack < margin {
            margin = slack;
            witness = Some(r);
        }
    }
    let pass = margin >= 0.0;
    Ok(SignCertificate {
        pass,
        margin,
        witness_radius: if pass { None } else { witness },
        samples,
        argument: "both eigenvalues scale by the same power of r, so the sign of the Pucci value does not depend on the radius".into(),
    })
}

/// c1 making the inverse-power barrier equal `target` at r = 1/8 and 0 at r = 1/4.
pub fn choose_c1_for_boundary_data(e: &Ellipticity, alpha: f64, target: f64) -> Result<f64> {
    let threshold = min_supersolution_exponent(e);
    if alpha < threshold {
        return Err(LabError::Precondition(format!("alpha = {alpha} is below the threshold {threshold}")));
    }
    Ok(target / (INNER_RADIUS.powf(-alpha) - OUTER_RADIUS.powf(-alpha)))
}

/// Default exponent one above the threshold.
pub fn default_exponent(e: &Ellipticity) -> f64 {
    min_supersolution_exponent(e).max(0.0) + 1.0
}

/// min over the segment {x' = 0, r ∈ [1/8, 1/4]} below the center of v/x_n.
pub fn lower_barrier_slope(b: &RadialBarrier, samples: usize) -> f64 {
    let n = b.dim();
    let mut best = f64::INFINITY;
    for k in 1..=samples {
        // x_n = 1/4 - r runs over (0, 1/8]
        let xn = INNER_RADIUS * k as f64 / samples as f64;
        let mut x = vec![0.0; n];
        x[n - 1] = xn;
        best = best.min(b.value(&x) / xn);
    }
    best
}

/// max over {x' = 0, x_n ∈ (0, 1/2]} of v/x_n for the upper barrier.
pub fn upper_barrier_slope(b: &RadialBarrier, samples: usize) -> f64 {
    let n = b.dim();
    let mut best: f64 = 0.0;
    for k in 1..=samples {
        let xn = 0.5 * k as f64 / samples as f64;
        let mut x = vec![0.0; n];
        x[n - 1] = xn;
        best = best.max(b.value(&x) / xn);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pucci::spectrum;
    use proptest::prelude::*;

    fn el(l: f64, u: f64, n: usize) -> Ellipticity {
        Ellipticity::new(l, u, n).unwrap()
    }

    #[test]
    fn spectrum_examples() {
        let b = RadialBarrier::inverse_power(vec![0.0, 0.0], 1.0, 1.0, 1.0).unwrap();
        let s = radial_spectrum(&b, 0.5).unwrap();
        assert!((s.radial_eig - 16.0).abs() < 1e-12 && (s.tangential_eig + 8.0).abs() < 1e-12);
        let u = RadialBarrier::one_minus_inverse_power(2, 2.0).unwrap();
        let s = radial_spectrum(&u, 1.0).unwrap();
        assert!((s.radial_eig + 12.0).abs() < 1e-12 && (s.tangential_eig - 4.0).abs() < 1e-12);
        assert!(radial_spectrum(&u, 0.5).is_err());
    }

    #[test]
    fn thresholds() {
        assert_eq!(min_supersolution_exponent(&el(1.0, 1.0, 3)), 1.0);
        assert_eq!(min_supersolution_exponent(&el(1.0, 2.0, 2)), 1.0);
        assert_eq!(min_supersolution_exponent(&el(0.7, 0.7, 2)), 0.0);
    }

    #[test]
    fn sign_examples() {
        let e = el(1.0, 2.0, 2);
        let a = min_supersolution_exponent(&e);
        let pass = RadialBarrier::lower_barrier(2, 1.0, a + 0.5).unwrap();
        assert!(verify_sign(&pass, &e, SignCondition::SupersolutionMinus, 200).unwrap().pass);
        let fail = RadialBarrier::lower_barrier(2, 1.0, (a - 0.5).max(0.01)).unwrap();
        let c = verify_sign(&fail, &e, SignCondition::SupersolutionMinus, 200).unwrap();
        assert!(!c.pass && c.margin < 0.0 && c.witness_radius.is_some());
        for e in [el(1.0, 2.0, 2), el(0.3, 3.0, 3), el(1.0, 1.0, 2)] {
            let up = RadialBarrier::upper_barrier(&e).unwrap();
            assert!(verify_sign(&up, &e, SignCondition::SubsolutionPlus, 100).unwrap().pass);
        }
        assert!(verify_sign(&pass, &e, SignCondition::SupersolutionMinus, 10).is_err());
    }

    #[test]
    fn c1_examples() {
        let e = el(1.0, 1.0, 2);
        assert!((choose_c1_for_boundary_data(&e, 1.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(choose_c1_for_boundary_data(&e, 1.0, 0.0).unwrap(), 0.0);
        let e2 = el(1.0, 2.0, 2);
        let alpha = default_exponent(&e2);
        let c1 = choose_c1_for_boundary_data(&e2, alpha, 0.3).unwrap();
        let b = RadialBarrier::lower_barrier(2, c1, alpha).unwrap();
        assert!((b.profile(INNER_RADIUS) - 0.3).abs() < 1e-12);
        assert!(b.profile(OUTER_RADIUS).abs() < 1e-15);
        assert!(matches!(choose_c1_for_boundary_data(&e2, 0.5, 1.0), Err(LabError::Precondition(_))));
    }

    #[test]
    fn barrier_slopes() {
        let e = el(1.0, 2.0, 2);
        let alpha = default_exponent(&e);
        let c1 = choose_c1_for_boundary_data(&e, alpha, 1.0).unwrap();
        let b = RadialBarrier::lower_barrier(2, c1, alpha).unwrap();
        let c = lower_barrier_slope(&b, 1000);
        assert!(c > 0.0 && c.is_finite());
        let up = RadialBarrier::upper_barrier(&e).unwrap();
        let big = upper_barrier_slope(&up, 1000);
        // concave profile in x_n, so the ratio peaks at the boundary with value 2p
        assert!(big > 0.0 && big <= 2.0 * 4.0 + 1e-9);
    }

    // Central second differences of the barrier value.
    fn fd_hessian(b: &RadialBarrier, x: &[f64], step: f64) -> SymMatrix {
        let n = b.dim();
        let f = |dx: &[(usize, f64)]| {
            let mut y = x.to_vec();
            for (i, d) in dx {
                y[*i] += d;
            }
            b.value(&y)
        };
        let mut upper = Vec::new();
        for i in 0..n {
            for j in i..n {
                let v = if i == j {
                    (f(&[(i, step)]) - 2.0 * f(&[]) + f(&[(i, -step)])) / (step * step)
                } else {
                    (f(&[(i, step), (j, step)]) - f(&[(i, step), (j, -step)]) - f(&[(i, -step), (j, step)])
                        + f(&[(i, -step), (j, -step)]))
                        / (4.0 * step * step)
                };
                upper.push(v);
            }
        }
        SymMatrix::new(n, &upper).unwrap()
    }

    // Richardson combination of two step sizes, fourth order in the step.
    fn richardson_hessian(b: &RadialBarrier, x: &[f64], step: f64) -> SymMatrix {
        let coarse = fd_hessian(b, x, step);
        let fine = fd_hessian(b, x, step / 2.0);
        fine.scale(4.0 / 3.0).add(&coarse.scale(-1.0 / 3.0)).unwrap()
    }

    proptest! {
        #[test]
        fn radial_spectrum_matches_finite_differences(
            dim in 2usize..=3,
            alpha in 0.2..3.0f64,
            dir in prop::collection::vec(-1.0..1.0f64, 3),
            t in 0.0..1.0f64,
            upper_form in any::<bool>(),
        ) {
            let b = if upper_form {
                RadialBarrier::one_minus_inverse_power(dim, 1.0 + alpha).unwrap()
            } else {
                RadialBarrier::lower_barrier(dim, 0.3, alpha).unwrap()
            };
            let norm = dir[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(norm > 0.1);
            let (lo, hi) = b.annulus;
            let r = lo + t * (hi - lo);
            let x: Vec<f64> = (0..dim).map(|i| b.center[i] + r * dir[i] / norm).collect();
            let exact = spectrum(&b.hessian(&x).unwrap()).unwrap();
            let fd = spectrum(&richardson_hessian(&b, &x, 2e-3)).unwrap();
            let s = radial_spectrum(&b, r).unwrap();
            let scale = s.radial_eig.abs().max(s.tangential_eig.abs());
            for (a, c) in exact.eigenvalues.iter().zip(&fd.eigenvalues) {
                prop_assert!((a - c).abs() <= 1e-6 * scale, "{a} vs {c}");
            }
            let mut expect = vec![s.radial_eig];
            expect.extend(std::iter::repeat(s.tangential_eig).take(dim - 1));
            expect.sort_by(|p, q| q.total_cmp(p));
            for (a, c) in exact.eigenvalues.iter().zip(&expect) {
                prop_assert!((a - c).abs() <= 1e-9 * scale);
            }
        }
    }
}

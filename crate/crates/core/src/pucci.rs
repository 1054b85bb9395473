//! Symmetric matrices, spectra and the Pucci extremal operators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Relative size below which an eigenvalue counts as zero.
pub const EIGEN_ZERO_REL: f64 = 1e-12;

/// Pucci-class membership tolerance for quadratics.
pub const CLASS_TOL: f64 = 1e-10;

/// Uniform ellipticity constants together with the ambient dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipticity {
    lower: f64,
    upper: f64,
    dim: usize,
}

impl Ellipticity {
    pub fn new(lower: f64, upper: f64, dim: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower <= 0.0 || lower > upper {
            return Err(LabError::Input(format!(
                "ellipticity needs 0 < lambda <= Lambda, got ({lower}, {upper})"
            )));
        }
        if !(2..=3).contains(&dim) {
            return Err(LabError::Input(format!("dimension {dim} unsupported (2 or 3)")));
        }
        Ok(Self { lower, upper, dim })
    }

    /// Planar constants, the common case for the solver.
    pub fn planar(lower: f64, upper: f64) -> Result<Self> {
        Self::new(lower, upper, 2)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Symmetric n×n matrix stored as its upper triangle, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    entries: [f64; 6],
}

impl SymMatrix {
    /// Builds from the upper triangle (n(n+1)/2 entries, row-major).
    pub fn new(dim: usize, upper: &[f64]) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(LabError::Input(format!("dimension {dim} unsupported (2 or 3)")));
        }
        let len = dim * (dim + 1) / 2;
        if upper.len() != len {
            return Err(LabError::Input(format!(
                "expected {len} upper-triangle entries for n = {dim}, got {}",
                upper.len()
            )));
        }
        let mut entries = [0.0; 6];
        entries[..len].copy_from_slice(upper);
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!((2..=3).contains(&dim), "dimension must be 2 or 3");
        Self { dim, entries: [0.0; 6] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![1.0; dim]).expect("identity of supported size")
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let dim = values.len();
        if !(2..=3).contains(&dim) {
            return Err(LabError::Input(format!("dimension {dim} unsupported (2 or 3)")));
        }
        let mut m = Self { dim, entries: [0.0; 6] };
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        Ok(m)
    }

    /// Planar matrix [[a11, a12], [a12, a22]].
    pub fn planar(a11: f64, a12: f64, a22: f64) -> Self {
        Self { dim: 2, entries: [a11, a12, a22, 0.0, 0.0, 0.0] }
    }

    /// Builds from a full square array, failing if it is not symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut m = Self::new(dim, &vec![0.0; dim * (dim + 1) / 2])?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(LabError::Input("matrix rows must be square".into()));
            }
            for j in i..dim {
                let (a, b) = (row[j], rows[j][i]);
                if (a - b).abs() > 1e-14 * (1.0 + a.abs().max(b.abs())) {
                    return Err(LabError::Input(format!("entry ({i},{j}) not symmetric")));
                }
                m.set(i, j, a);
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Upper-triangle entries in row-major order.
    pub fn upper(&self) -> &[f64] {
        &self.entries[..self.dim * (self.dim + 1) / 2]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[self.row_offset(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.row_offset(i, j);
        self.entries[k] = v;
    }

    fn row_offset(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let mut start = 0;
        for r in 0..i {
            start += self.dim - r;
        }
        start + (j - i)
    }

    pub fn is_finite(&self) -> bool {
        self.upper().iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn det(&self) -> f64 {
        let g = |i, j| self.get(i, j);
        match self.dim {
            2 => g(0, 0) * g(1, 1) - g(0, 1) * g(0, 1),
            _ => {
                g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(1, 2))
                    - g(0, 1) * (g(0, 1) * g(2, 2) - g(1, 2) * g(0, 2))
                    + g(0, 2) * (g(0, 1) * g(1, 2) - g(1, 1) * g(0, 2))
            }
        }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.get(i, j).powi(2);
            }
        }
        s.sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = *self;
        out.entries.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(LabError::Input("dimension mismatch in matrix sum".into()));
        }
        let mut out = *self;
        for (a, b) in out.entries.iter_mut().zip(other.entries.iter()) {
            *a += b;
        }
        Ok(out)
    }

    /// Quadratic form xᵀMx.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += x[i] * self.get(i, j) * x[j];
            }
        }
        s
    }

    fn dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }
}

/// Eigenvalues of a symmetric matrix, sorted descending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
}

impl Spectrum {
    /// Sum of the eigenvalues that are positive beyond the zero threshold,
    /// and of those that are negative beyond it.
    pub fn signed_sums(&self, scale: f64) -> (f64, f64) {
        let cut = EIGEN_ZERO_REL * scale;
        let mut pos = 0.0;
        let mut neg = 0.0;
        for &e in &self.eigenvalues {
            if e > cut {
                pos += e;
            } else if e < -cut {
                neg += e;
            }
        }
        (pos, neg)
    }
}

pub fn spectrum(m: &SymMatrix) -> Result<Spectrum> {
    if !m.is_finite() {
        return Err(LabError::Input("matrix has non-finite entries".into()));
    }
    let mut eigenvalues: Vec<f64> = if m.dim == 2 {
        // closed form is exact enough and avoids the iterative path
        let (a, b, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 1));
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        vec![mean + rad, mean - rad]
    } else {
        m.dense().symmetric_eigenvalues().iter().copied().collect()
    };
    eigenvalues.sort_by(|x, y| y.total_cmp(x));
    Ok(Spectrum { eigenvalues })
}

fn check_dim(m: &SymMatrix, e: &Ellipticity) -> Result<()> {
    if m.dim != e.dim {
        return Err(LabError::Input(format!(
            "matrix dimension {} does not match ellipticity dimension {}",
            m.dim, e.dim
        )));
    }
    Ok(())
}

/// Maximal Pucci operator: Λ·(positive eigenvalues) + λ·(negative eigenvalues).
pub fn pucci_plus(m: &SymMatrix, e: &Ellipticity) -> Result<f64> {
    check_dim(m, e)?;
    let (pos, neg) = spectrum(m)?.signed_sums(m.norm());
    Ok(e.upper * pos + e.lower * neg)
}

/// Minimal Pucci operator: λ·(positive eigenvalues) + Λ·(negative eigenvalues).
pub fn pucci_minus(m: &SymMatrix, e: &Ellipticity) -> Result<f64> {
    check_dim(m, e)?;
    let (pos, neg) = spectrum(m)?.signed_sums(m.norm());
    Ok(e.lower * pos + e.upper * neg)
}

/// Whether ½xᵀHx is a subsolution (M⁺(H) ≥ f) and a supersolution (M⁻(H) ≤ f).
pub fn quadratic_in_pucci_class(h: &SymMatrix, fval: f64, e: &Ellipticity) -> Result<(bool, bool)> {
    let plus = pucci_plus(h, e)?;
    let minus = pucci_minus(h, e)?;
    Ok((plus >= fval - CLASS_TOL, minus <= fval + CLASS_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(l: f64, u: f64, n: usize) -> Ellipticity {
        Ellipticity::new(l, u, n).unwrap()
    }

    #[test]
    fn spectra_of_small_matrices() {
        let d = spectrum(&SymMatrix::diag(&[1.0, -1.0]).unwrap()).unwrap();
        assert_eq!(d.eigenvalues, vec![1.0, -1.0]);
        let i3 = spectrum(&SymMatrix::identity(3)).unwrap();
        for v in i3.eigenvalues {
            assert!((v - 1.0).abs() < 1e-14);
        }
        // t² - 1 = 0
        let s = spectrum(&SymMatrix::planar(0.0, 1.0, 0.0)).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-15 && (s.eigenvalues[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn packed_layout_is_row_major() {
        let m = SymMatrix::new(3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.get(0, 2), 3.0);
        assert_eq!(m.get(1, 1), 4.0);
        assert_eq!(m.get(2, 1), 5.0);
        assert_eq!(m.get(2, 2), 6.0);
    }

    #[test]
    fn non_finite_rejected() {
        let m = SymMatrix::planar(f64::NAN, 0.0, 1.0);
        assert!(matches!(spectrum(&m), Err(LabError::Input(_))));
    }

    #[test]
    fn pucci_values() {
        let el = e(1.0, 2.0, 2);
        let d = SymMatrix::diag(&[1.0, -1.0]).unwrap();
        assert_eq!(pucci_plus(&d, &el).unwrap(), 1.0);
        assert_eq!(pucci_minus(&d, &el).unwrap(), -1.0);
        assert!((pucci_plus(&SymMatrix::identity(3), &e(1.0, 2.0, 3)).unwrap() - 6.0).abs() < 1e-13);
        let off = SymMatrix::planar(0.0, 1.0, 0.0);
        assert!((pucci_plus(&off, &el).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(pucci_minus(&SymMatrix::zeros(2), &el).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let r = pucci_plus(&SymMatrix::identity(3), &e(1.0, 2.0, 2));
        assert!(matches!(r, Err(LabError::Input(_))));
    }

    #[test]
    fn class_membership_of_quadratics() {
        let el = e(1.0, 2.0, 2);
        assert_eq!(quadratic_in_pucci_class(&SymMatrix::zeros(2), 0.0, &el).unwrap(), (true, true));
        let h = SymMatrix::diag(&[2.0, -2.0]).unwrap();
        assert_eq!(quadratic_in_pucci_class(&h, 2.0, &el).unwrap(), (true, true));
        let neg = SymMatrix::identity(2).scale(-1.0);
        assert_eq!(quadratic_in_pucci_class(&neg, 0.0, &e(1.0, 1.0, 2)).unwrap(), (false, true));
    }

    #[test]
    fn invalid_ellipticity() {
        assert!(Ellipticity::new(2.0, 1.0, 2).is_err());
        assert!(Ellipticity::new(0.0, 1.0, 2).is_err());
        assert!(Ellipticity::new(1.0, 1.0, 4).is_err());
    }

    fn sym(dim: usize) -> impl Strategy<Value = SymMatrix> {
        prop::collection::vec(-10.0..10.0f64, dim * (dim + 1) / 2)
            .prop_map(move |v| SymMatrix::new(dim, &v).unwrap())
    }

    fn psd(dim: usize) -> impl Strategy<Value = SymMatrix> {
        // BᵀB is positive semidefinite
        prop::collection::vec(-3.0..3.0f64, dim * dim).prop_map(move |b| {
            let mut upper = Vec::new();
            for i in 0..dim {
                for j in i..dim {
                    upper.push((0..dim).map(|k| b[k * dim + i] * b[k * dim + j]).sum());
                }
            }
            SymMatrix::new(dim, &upper).unwrap()
        })
    }

    fn consts() -> impl Strategy<Value = (f64, f64)> {
        (0.1..5.0f64, 1.0..4.0f64).prop_map(|(l, k)| (l, l * k))
    }

    proptest! {
        #[test]
        fn spectrum_reproduces_trace_and_det(m in prop_oneof![sym(2), sym(3)]) {
            let s = spectrum(&m).unwrap();
            let tr: f64 = s.eigenvalues.iter().sum();
            let det: f64 = s.eigenvalues.iter().product();
            let scale = 1.0 + m.norm();
            prop_assert!((tr - m.trace()).abs() <= 1e-10 * scale);
            prop_assert!((det - m.det()).abs() <= 1e-10 * scale.powi(m.dim() as i32));
            prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn sign_symmetry(m in prop_oneof![sym(2), sym(3)], (l, u) in consts()) {
            let el = e(l, u, m.dim());
            let a = pucci_minus(&m, &el).unwrap();
            let b = -pucci_plus(&m.scale(-1.0), &el).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            prop_assert!(a <= pucci_plus(&m, &el).unwrap() + 1e-12);
        }

        #[test]
        fn subadditive(m in sym(3), n in sym(3), (l, u) in consts()) {
            let el = e(l, u, 3);
            let lhs = pucci_plus(&m.add(&n).unwrap(), &el).unwrap();
            let rhs = pucci_plus(&m, &el).unwrap() + pucci_plus(&n, &el).unwrap();
            prop_assert!(lhs <= rhs + 1e-10 * (1.0 + rhs.abs()));
        }

        #[test]
        fn uniform_ellipticity(m in sym(2), n in psd(2), (l, u) in consts()) {
            let el = e(l, u, 2);
            let diff = pucci_plus(&m.add(&n).unwrap(), &el).unwrap() - pucci_plus(&m, &el).unwrap();
            let tol = 1e-10 * (1.0 + m.norm() + n.norm()) * u;
            prop_assert!(l * n.trace() <= diff + tol);
            prop_assert!(diff <= u * n.trace() + tol);
        }

        #[test]
        fn equal_constants_give_scaled_trace(m in prop_oneof![sym(2), sym(3)], l in 0.1..5.0f64) {
            let el = e(l, l, m.dim());
            let t = l * m.trace();
            let tol = 1e-10 * (1.0 + m.norm()) * l;
            prop_assert!((pucci_plus(&m, &el).unwrap() - t).abs() <= tol);
            prop_assert!((pucci_minus(&m, &el).unwrap() - t).abs() <= tol);
        }
    }
}

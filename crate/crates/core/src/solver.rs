//! Monotone wide-stencil discretization of M⁺(D²u) = f, M⁻(D²u) = f and
//! tr(A D²u) = f with Dirichlet data, and its solvers.
//!
//! Second differences are taken along primitive lattice vectors with arms
//! shortened at the boundary (Shortley–Weller). The Pucci operators take the
//! extremum over orthogonal vector pairs; linear operators use a Selling
//! decomposition of A with nonnegative weights. Both are monotone.

use std::fmt;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{boundary_closure, grid_mask, ArmTarget, Closure, DomainSpec, GridMask, Point};
use crate::literal::Tagged;
use crate::pucci::{spectrum, Ellipticity, SymMatrix};

pub const DEFAULT_DIRECTIONS: usize = 16;
pub const DEFAULT_TOL: f64 = 1e-8;

/// Variable or constant coefficient matrix of a linear operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Coefficient {
    Constant(SymMatrix),
    /// Eigenvalues (Λ, λ) with the Λ-eigenvector at angle `rate`·π·x₁.
    Rotating { rate: f64 },
}

impl Coefficient {
    pub fn at(&self, x: Point, e: &Ellipticity) -> SymMatrix {
        match self {
            Coefficient::Constant(a) => *a,
            Coefficient::Rotating { rate } => {
                let t = rate * std::f64::consts::PI * x[0];
                let (c, s) = (t.cos(), t.sin());
                let (hi, lo) = (e.upper(), e.lower());
                SymMatrix::planar(hi * c * c + lo * s * s, (hi - lo) * c * s, hi * s * s + lo * c * c)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OperatorKind {
    PucciPlus,
    PucciMinus,
    Linear(Coefficient),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub ellipticity: Ellipticity,
    /// Number of stencil directions, a positive multiple of 4.
    pub directions: usize,
}

impl OperatorSpec {
    pub fn new(kind: OperatorKind, ellipticity: Ellipticity, directions: usize) -> Result<Self> {
        if directions == 0 || directions % 4 != 0 {
            return Err(LabError::Input(format!("direction count {directions} must be a positive multiple of 4")));
        }
        if ellipticity.dim() != 2 {
            return Err(LabError::Input("the solver is planar".into()));
        }
        if let OperatorKind::Linear(Coefficient::Constant(a)) = &kind {
            check_coefficient(a, &ellipticity)?;
        }
        Ok(Self { kind, ellipticity, directions })
    }

    pub fn pucci_plus(lower: f64, upper: f64) -> Result<Self> {
        Self::new(OperatorKind::PucciPlus, Ellipticity::planar(lower, upper)?, DEFAULT_DIRECTIONS)
    }

    pub fn pucci_minus(lower: f64, upper: f64) -> Result<Self> {
        Self::new(OperatorKind::PucciMinus, Ellipticity::planar(lower, upper)?, DEFAULT_DIRECTIONS)
    }

    pub fn laplace() -> Self {
        Self::new(
            OperatorKind::Linear(Coefficient::Constant(SymMatrix::identity(2))),
            Ellipticity::planar(1.0, 1.0).expect("unit constants"),
            DEFAULT_DIRECTIONS,
        )
        .expect("identity is admissible")
    }

    /// The continuum operator on a Hessian at x.
    pub fn continuum(&self, x: Point, hessian: &SymMatrix) -> Result<f64> {
        match &self.kind {
            OperatorKind::PucciPlus => crate::pucci::pucci_plus(hessian, &self.ellipticity),
            OperatorKind::PucciMinus => crate::pucci::pucci_minus(hessian, &self.ellipticity),
            OperatorKind::Linear(c) => {
                let a = c.at(x, &self.ellipticity);
                Ok(a.get(0, 0) * hessian.get(0, 0) + 2.0 * a.get(0, 1) * hessian.get(0, 1) + a.get(1, 1) * hessian.get(1, 1))
            }
        }
    }

    pub fn with_directions(mut self, k: usize) -> Result<Self> {
        if k == 0 || k % 4 != 0 {
            return Err(LabError::Input(format!("direction count {k} must be a positive multiple of 4")));
        }
        self.directions = k;
        Ok(self)
    }
}

fn check_coefficient(a: &SymMatrix, e: &Ellipticity) -> Result<()> {
    let s = spectrum(a)?;
    let tol = 1e-12 * e.upper();
    if s.eigenvalues.iter().any(|&v| v < e.lower() - tol || v > e.upper() + tol) {
        return Err(LabError::Input(format!(
            "coefficient eigenvalues {:?} leave [{}, {}]",
            s.eigenvalues,
            e.lower(),
            e.upper()
        )));
    }
    Ok(())
}

/// The first `k/2` primitive lattice vectors of angle in [0, π/2) by length,
/// each paired with its rotation by π/2.
pub fn direction_pairs(k: usize) -> Vec<([i32; 2], [i32; 2])> {
    let want = k / 2;
    let mut cands: Vec<[i32; 2]> = Vec::new();
    let mut m = 1;
    while cands.len() < want {
        cands.clear();
        for p in 1..=m {
            for q in 0..=m {
                if gcd(p, q) == 1 {
                    cands.push([p, q]);
                }
            }
        }
        cands.sort_by(|a, b| {
            let la = a[0] * a[0] + a[1] * a[1];
            let lb = b[0] * b[0] + b[1] * b[1];
            la.cmp(&lb).then((a[1] as f64).atan2(a[0] as f64).total_cmp(&(b[1] as f64).atan2(b[0] as f64)))
        });
        // only keep complete length shells that are certainly enumerated
        let limit = (m * m) as i32;
        cands.retain(|v| v[0] * v[0] + v[1] * v[1] <= limit);
        m *= 2;
    }
    cands.truncate(want);
    cands.into_iter().map(|v| (v, [-v[1], v[0]])).collect()
}

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Selling decomposition A = Σ w_k e_k e_kᵀ with w_k ≥ 0 and lattice e_k.
pub fn selling(a: &SymMatrix) -> Result<[([i32; 2], f64); 3]> {
    let q = |u: [i32; 2], v: [i32; 2]| {
        let (u0, u1, v0, v1) = (u[0] as f64, u[1] as f64, v[0] as f64, v[1] as f64);
        a.get(0, 0) * u0 * v0 + a.get(0, 1) * (u0 * v1 + u1 * v0) + a.get(1, 1) * u1 * v1
    };
    if a.det() <= 0.0 || a.get(0, 0) <= 0.0 {
        return Err(LabError::Input("Selling decomposition needs a positive definite matrix".into()));
    }
    let mut b = [[1, 0], [0, 1], [-1, -1]];
    for _ in 0..200 {
        let mut changed = false;
        for (i, j, k) in [(0, 1, 2), (0, 2, 1), (1, 2, 0)] {
            if q(b[i], b[j]) > 0.0 {
                let (bi, bj) = (b[i], b[j]);
                b[i] = [-bi[0], -bi[1]];
                b[k] = [bi[0] - bj[0], bi[1] - bj[1]];
                changed = true;
                break;
            }
        }
        if !changed {
            let mut out = [([0, 0], 0.0); 3];
            for (slot, (i, j, k)) in [(0, 1, 2), (0, 2, 1), (1, 2, 0)].into_iter().enumerate() {
                let e = [-b[k][1], b[k][0]];
                out[slot] = (e, (-q(b[i], b[j])).max(0.0));
            }
            return Ok(out);
        }
    }
    Err(LabError::Numeric("Selling reduction did not terminate".into()))
}

fn canonical(v: [i32; 2]) -> [i32; 2] {
    if v[0] < 0 || (v[0] == 0 && v[1] < 0) {
        [-v[0], -v[1]]
    } else {
        v
    }
}

/// Linear term c·D_k u with D_k the unit-direction second difference along vector k.
type Term = (u16, f64);

/// Grid, closure and operator terms shared by every field on one problem.
pub struct Discretization {
    pub op: OperatorSpec,
    pub mask: GridMask,
    pub closure: Closure,
    pairs: Vec<(u16, u16)>,
    linear: Vec<[Term; 3]>,
}

impl fmt::Debug for Discretization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Discretization")
            .field("op", &self.op)
            .field("h", &self.mask.h())
            .field("nodes", &self.mask.len())
            .field("vectors", &self.closure.vectors.len())
            .finish()
    }
}

impl Discretization {
    pub fn new(op: &OperatorSpec, domain: &DomainSpec, h: f64) -> Result<Arc<Self>> {
        let mask = grid_mask(domain, h)?;
        let e = op.ellipticity;
        let mut vectors: Vec<[i32; 2]> = Vec::new();
        let mut pairs = Vec::new();
        let mut linear = Vec::new();
        let index_of = |v: [i32; 2], vectors: &mut Vec<[i32; 2]>| -> u16 {
            let c = canonical(v);
            match vectors.iter().position(|w| *w == c) {
                Some(i) => i as u16,
                None => {
                    vectors.push(c);
                    (vectors.len() - 1) as u16
                }
            }
        };
        let collapse = e.lower() == e.upper();
        match &op.kind {
            OperatorKind::PucciPlus | OperatorKind::PucciMinus => {
                // with λ = Λ every pair gives the same linear operator; keep the axis pair
                let k = if collapse { 2 } else { op.directions };
                for (v, w) in direction_pairs(k) {
                    let a = index_of(v, &mut vectors);
                    let b = index_of(w, &mut vectors);
                    pairs.push((a, b));
                }
            }
            OperatorKind::Linear(coef) => {
                linear.reserve(mask.len());
                for x in &mask.positions {
                    let a = coef.at(*x, &e);
                    check_coefficient(&a, &e)?;
                    let dec = selling(&a)?;
                    let mut terms = [(0u16, 0.0); 3];
                    for (slot, (v, w)) in dec.iter().enumerate() {
                        let norm2 = (v[0] * v[0] + v[1] * v[1]) as f64;
                        terms[slot] = (index_of(*v, &mut vectors), w * norm2);
                    }
                    linear.push(terms);
                }
            }
        }
        let closure = boundary_closure(&mask, &vectors)?;
        Ok(Arc::new(Self { op: op.clone(), mask, closure, pairs, linear }))
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.mask.h()
    }

    /// Diagonal magnitude of the scheme at full-length arms.
    fn reference_diagonal(&self) -> f64 {
        let e = self.op.ellipticity;
        2.0 * (e.lower() + e.upper()) / (self.h() * self.h())
    }

    fn shortest_arm(&self) -> f64 {
        let n = self.len();
        let nv = self.closure.vectors.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            for k in 0..nv {
                for back in [false, true] {
                    best = best.min(self.closure.arm(i, k, back).length);
                }
            }
        }
        best
    }

    #[inline]
    fn end_value(values: &[f64], boundary: &[f64], t: ArmTarget) -> f64 {
        match t {
            ArmTarget::Node(j) => values[j as usize],
            ArmTarget::Crossing(c) => boundary[c as usize],
        }
    }

    /// Unit-direction second difference at node i along vector k.
    #[inline]
    fn second_diff(&self, values: &[f64], boundary: &[f64], i: usize, k: usize) -> f64 {
        let f = self.closure.arm(i, k, false);
        let b = self.closure.arm(i, k, true);
        let u0 = values[i];
        let uf = Self::end_value(values, boundary, f.target);
        let ub = Self::end_value(values, boundary, b.target);
        2.0 / (f.length + b.length) * ((uf - u0) / f.length + (ub - u0) / b.length)
    }

    /// Operator value at node i and the linear terms of the active branch.
    fn evaluate(&self, values: &[f64], boundary: &[f64], i: usize) -> (f64, [Term; 2], usize) {
        let e = self.op.ellipticity;
        let (lo, hi) = (e.lower(), e.upper());
        match &self.op.kind {
            OperatorKind::Linear(_) => {
                let terms = self.linear[i];
                let mut v = 0.0;
                for (k, c) in terms {
                    if c != 0.0 {
                        v += c * self.second_diff(values, boundary, i, k as usize);
                    }
                }
                (v, [(0, 0.0); 2], 0)
            }
            kind => {
                let plus = matches!(kind, OperatorKind::PucciPlus);
                // coefficient of a nonnegative / negative second difference
                let (cpos, cneg) = if plus { (hi, lo) } else { (lo, hi) };
                let mut best = if plus { f64::NEG_INFINITY } else { f64::INFINITY };
                let mut active = [(0u16, 0.0); 2];
                let mut which = 0;
                for (j, &(a, b)) in self.pairs.iter().enumerate() {
                    let t1 = self.second_diff(values, boundary, i, a as usize);
                    let t2 = self.second_diff(values, boundary, i, b as usize);
                    let c1 = if t1 >= 0.0 { cpos } else { cneg };
                    let c2 = if t2 >= 0.0 { cpos } else { cneg };
                    let v = c1 * t1 + c2 * t2;
                    let better = if plus { v > best } else { v < best };
                    if better {
                        best = v;
                        active = [(a, c1), (b, c2)];
                        which = j;
                    }
                }
                (best, active, which)
            }
        }
    }

    fn terms_for(&self, i: usize, active: [Term; 2]) -> Vec<Term> {
        match &self.op.kind {
            OperatorKind::Linear(_) => self.linear[i].iter().copied().filter(|t| t.1 != 0.0).collect(),
            _ => active.to_vec(),
        }
    }

    /// Diagonal magnitude of the linearization at node i.
    fn diagonal(&self, i: usize, terms: &[Term]) -> f64 {
        terms
            .iter()
            .map(|&(k, c)| {
                let a = self.closure.arm(i, k as usize, false).length;
                let b = self.closure.arm(i, k as usize, true).length;
                2.0 * c / (a * b)
            })
            .sum()
    }
}

/// Grid function: interior node values plus Dirichlet values at the crossings.
#[derive(Clone)]
pub struct Field {
    disc: Arc<Discretization>,
    pub values: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field").field("disc", &self.disc).field("values", &self.values.len()).finish()
    }
}

impl Field {
    /// Samples `u` at interior nodes and boundary crossings.
    pub fn from_fn(disc: &Arc<Discretization>, u: impl Fn(Point) -> f64 + Sync) -> Self {
        let values = disc.mask.positions.par_iter().map(|p| u(*p)).collect();
        let boundary = disc.closure.crossings.par_iter().map(|p| u(*p)).collect();
        Field { disc: disc.clone(), values, boundary }
    }

    /// Interior values from `init`, boundary values from `g`.
    pub fn with_data(
        disc: &Arc<Discretization>,
        init: impl Fn(Point) -> f64 + Sync,
        g: impl Fn(Point) -> f64 + Sync,
    ) -> Self {
        let values = disc.mask.positions.par_iter().map(|p| init(*p)).collect();
        let boundary = disc.closure.crossings.par_iter().map(|p| g(*p)).collect();
        Field { disc: disc.clone(), values, boundary }
    }

    pub fn from_parts(disc: &Arc<Discretization>, values: Vec<f64>, boundary: Vec<f64>) -> Result<Self> {
        if values.len() != disc.len() || boundary.len() != disc.closure.crossings.len() {
            return Err(LabError::Structure("value arrays do not match the discretization".into()));
        }
        Ok(Field { disc: disc.clone(), values, boundary })
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn h(&self) -> f64 {
        self.disc.h()
    }

    pub fn positions(&self) -> &[Point] {
        &self.disc.mask.positions
    }

    pub fn crossings(&self) -> &[Point] {
        &self.disc.closure.crossings
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Nodal samples for the probe: interior nodes followed by boundary crossings.
    pub fn samples(&self) -> crate::probe::NodalData {
        let mut points = self.positions().to_vec();
        points.extend_from_slice(self.crossings());
        let mut values = self.values.clone();
        values.extend_from_slice(&self.boundary);
        crate::probe::NodalData { h: self.h(), points, values, interior: self.len() }
    }

    /// sup over interior nodes of |u - exact|.
    pub fn max_error(&self, exact: impl Fn(Point) -> f64 + Sync) -> f64 {
        self.positions().par_iter().zip(self.values.par_iter()).map(|(p, v)| (v - exact(*p)).abs()).reduce(|| 0.0, f64::max)
    }

    pub fn same_structure(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.disc, &other.disc)
    }

    /// Writes `x,y,value` rows for interior nodes.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "x,y,value")?;
        for (p, v) in self.positions().iter().zip(&self.values) {
            writeln!(w, "{},{},{}", p[0], p[1], v)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Binary dump: h, bbox (xmin, ymin, xmax, ymax), node count, then
    /// (lattice index, value) records; little-endian throughout.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        let (lo, hi) = self.disc.mask.domain.bbox();
        for v in [self.h(), lo[0], lo[1], hi[0], hi[1]] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for (id, v) in self.disc.mask.interior.iter().zip(&self.values) {
            w.write_all(&(*id as u64).to_le_bytes())?;
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Contents of a binary field dump.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub h: f64,
    pub bbox: [f64; 4],
    pub records: Vec<(u64, f64)>,
}

pub fn read_binary(path: &Path) -> Result<FieldDump> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let word = |k: usize| -> Result<[u8; 8]> {
        bytes.get(8 * k..8 * k + 8).and_then(|s| s.try_into().ok()).ok_or_else(|| LabError::Input("truncated field dump".into()))
    };
    let h = f64::from_le_bytes(word(0)?);
    let mut bbox = [0.0; 4];
    for (i, b) in bbox.iter_mut().enumerate() {
        *b = f64::from_le_bytes(word(1 + i)?);
    }
    let count = u64::from_le_bytes(word(5)?) as usize;
    let mut records = Vec::with_capacity(count);
    for r in 0..count {
        records.push((u64::from_le_bytes(word(6 + 2 * r)?), f64::from_le_bytes(word(7 + 2 * r)?)));
    }
    Ok(FieldDump { h, bbox, records })
}

/// op_h[u] at every interior node, as a field sharing u's structure
/// (its boundary values are zero).
pub fn apply_operator(op: &OperatorSpec, u: &Field) -> Result<Field> {
    if &u.disc.op != op {
        return Err(LabError::Structure("field was built for a different operator".into()));
    }
    let values = operator_values(&u.disc, &u.values, &u.boundary);
    Ok(Field { disc: u.disc.clone(), values, boundary: vec![0.0; u.boundary.len()] })
}

fn operator_values(d: &Discretization, values: &[f64], boundary: &[f64]) -> Vec<f64> {
    (0..d.len()).into_par_iter().map(|i| d.evaluate(values, boundary, i).0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Policy (Howard) iteration with sparse direct solves.
    Policy,
    /// Damped simultaneous fixed-point updates.
    Jacobi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub method: Method,
    /// Iteration cap; by default 50 policy steps or 1000 sweeps per node.
    pub max_iterations: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, method: Method::Policy, max_iterations: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub iterations: usize,
    /// sup over nodes of |op_h[u] - f|, each scaled down by the node's
    /// diagonal relative to the full-arm diagonal when that is larger.
    pub residual: f64,
    /// Damping step for the fixed-point method (0 for policy iteration).
    pub step_size: f64,
    pub converged: bool,
    /// Number of nodes whose active branch changed, per policy step.
    pub policy_changes: Vec<usize>,
}

/// Solves op_h[u] = f in Ω with u = g on ∂Ω, starting from u ≡ 0.
pub fn solve(
    op: &OperatorSpec,
    f: impl Fn(Point) -> f64 + Sync,
    d: &DomainSpec,
    g: impl Fn(Point) -> f64 + Sync,
    h: f64,
    tol: f64,
) -> Result<(Field, SolveReport)> {
    let disc = Discretization::new(op, d, h)?;
    solve_on(&disc, f, g, &SolveOptions { tol, ..SolveOptions::default() })
}

/// Solves on an existing discretization.
pub fn solve_on(
    disc: &Arc<Discretization>,
    f: impl Fn(Point) -> f64 + Sync,
    g: impl Fn(Point) -> f64 + Sync,
    opts: &SolveOptions,
) -> Result<(Field, SolveReport)> {
    if !(opts.tol >= 1e-10) {
        return Err(LabError::Precondition(format!("tolerance {} below 1e-10", opts.tol)));
    }
    let rhs: Vec<f64> = disc.mask.positions.par_iter().map(|p| f(*p)).collect();
    let mut u = Field::with_data(disc, |_| 0.0, g);
    if rhs.iter().chain(u.boundary.iter()).any(|v| !v.is_finite()) {
        return Err(LabError::Numeric("non-finite source or boundary data".into()));
    }
    let report = match opts.method {
        Method::Policy => policy_iteration(disc, &mut u, &rhs, opts)?,
        Method::Jacobi => jacobi(disc, &mut u, &rhs, opts)?,
    };
    Ok((u, report))
}

fn scaled_residual(d: &Discretization, u: &Field, rhs: &[f64]) -> f64 {
    let dref = d.reference_diagonal();
    (0..d.len())
        .into_par_iter()
        .map(|i| {
            let (v, active, _) = d.evaluate(&u.values, &u.boundary, i);
            let terms = d.terms_for(i, active);
            let diag = d.diagonal(i, &terms);
            (v - rhs[i]).abs() / (diag / dref).max(1.0)
        })
        .reduce(|| 0.0, f64::max)
}

fn policy_iteration(d: &Discretization, u: &mut Field, rhs: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    let n = d.len();
    let cap = opts.max_iterations.unwrap_or(50);
    let mut previous: Option<Vec<(usize, [Term; 2])>> = None;
    let mut changes = Vec::new();
    let mut residual = scaled_residual(d, u, rhs);
    let mut iterations = 0;
    while iterations < cap {
        let policy: Vec<(usize, [Term; 2])> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (_, active, which) = d.evaluate(&u.values, &u.boundary, i);
                (which, active)
            })
            .collect();
        if let Some(prev) = &previous {
            let changed = prev.iter().zip(&policy).filter(|(a, b)| a != b).count();
            changes.push(changed);
            if changed == 0 {
                break;
            }
        }
        // rows of -L scaled to unit diagonal, with known boundary values moved right
        let rows: Vec<(Vec<(usize, f64)>, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let terms = d.terms_for(i, policy[i].1);
                let mut entries: Vec<(usize, f64)> = Vec::with_capacity(2 * terms.len() + 1);
                let mut diag = 0.0;
                let mut b = -rhs[i];
                for (k, c) in terms {
                    for back in [false, true] {
                        let arm = d.closure.arm(i, k as usize, back);
                        let other = d.closure.arm(i, k as usize, !back);
                        let w = 2.0 * c / (arm.length * (arm.length + other.length));
                        diag += w;
                        match arm.target {
                            ArmTarget::Node(j) => entries.push((j as usize, -w)),
                            ArmTarget::Crossing(cid) => b += w * u.boundary[cid as usize],
                        }
                    }
                }
                let scale = 1.0 / diag;
                let mut row: Vec<(usize, f64)> = entries.into_iter().map(|(j, w)| (j, w * scale)).collect();
                row.push((i, 1.0));
                (row, b * scale)
            })
            .collect();
        let mut triplets = Vec::with_capacity(rows.iter().map(|r| r.0.len()).sum());
        let mut b = Mat::<f64>::zeros(n, 1);
        for (i, (row, bi)) in rows.into_iter().enumerate() {
            for (j, w) in row {
                triplets.push(Triplet::new(i, j, w));
            }
            b[(i, 0)] = bi;
        }
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| LabError::Numeric(format!("sparse assembly failed: {e:?}")))?;
        // faer's default splits the factorisation over the current rayon pool, which makes the last
        // bits of the solution depend on the pool size; sweeps parallelise over members instead
        faer::set_global_parallelism(faer::Par::Seq);
        let lu = a.sp_lu().map_err(|e| LabError::Numeric(format!("sparse LU failed: {e:?}")))?;
        lu.solve_in_place(b.as_mut());
        for i in 0..n {
            u.values[i] = b[(i, 0)];
        }
        if u.values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Numeric("policy step produced non-finite values".into()));
        }
        iterations += 1;
        previous = Some(policy);
        residual = scaled_residual(d, u, rhs);
        if residual <= opts.tol && matches!(d.op.kind, OperatorKind::Linear(_)) {
            break;
        }
    }
    Ok(SolveReport {
        method: Method::Policy,
        iterations,
        residual,
        step_size: 0.0,
        converged: residual <= opts.tol,
        policy_changes: changes,
    })
}

fn jacobi(d: &Discretization, u: &mut Field, rhs: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    let e = d.op.ellipticity;
    let a = d.shortest_arm();
    let tau = a * a / (2.0 * (e.lower() + e.upper()) * 2.0);
    let cap = opts.max_iterations.unwrap_or(1000 * d.len().max(1));
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cap {
        let ops = operator_values(d, &u.values, &u.boundary);
        residual = 0.0;
        let mut next = u.values.clone();
        for i in 0..d.len() {
            let r = ops[i] - rhs[i];
            residual = f64::max(residual, r.abs());
            next[i] += tau * r;
        }
        if !residual.is_finite() {
            return Err(LabError::Numeric("fixed-point iteration produced non-finite values".into()));
        }
        if residual <= opts.tol {
            break;
        }
        u.values = next;
        iterations += 1;
    }
    residual = residual.min(scaled_residual(d, u, rhs));
    Ok(SolveReport {
        method: Method::Jacobi,
        iterations,
        residual,
        step_size: tau,
        converged: residual <= opts.tol,
        policy_changes: vec![],
    })
}

/// Whether op_h[u] ≥ op_h[v] and u ≤ v on the closure force u ≤ v inside.
pub fn discrete_comparison_check(op: &OperatorSpec, u: &Field, v: &Field) -> Result<bool> {
    if !u.same_structure(v) {
        return Err(LabError::Input("fields do not share a discretization".into()));
    }
    let fu = apply_operator(op, u)?;
    let fv = apply_operator(op, v)?;
    let d = &u.disc;
    let dref = d.reference_diagonal();
    let scale = u.values.iter().chain(&v.values).chain(&u.boundary).chain(&v.boundary).fold(0.0f64, |m, x| m.max(x.abs()));
    for i in 0..d.len() {
        let (_, active, _) = d.evaluate(&u.values, &u.boundary, i);
        let diag = d.diagonal(i, &d.terms_for(i, active)).max(dref);
        let tol = 1e-12 + 64.0 * f64::EPSILON * diag * scale;
        if fu.values[i] < fv.values[i] - tol {
            return Err(LabError::Precondition(format!("op_h[u] < op_h[v] at node {i}")));
        }
    }
    if u.boundary.iter().zip(&v.boundary).any(|(a, b)| *a > b + 1e-12 * (1.0 + scale)) {
        return Err(LabError::Precondition("u exceeds v on the closure".into()));
    }
    Ok(u.values.iter().zip(&v.values).all(|(a, b)| *a <= b + 1e-10 * scale.max(1.0)))
}

/// Empirical constant (sup u - sup_∂ u⁺)/(r‖f‖₂) with the discrete L² norm.
pub fn abp_check(_op: &OperatorSpec, u: &Field, f: impl Fn(Point) -> f64 + Sync) -> f64 {
    let h = u.h();
    let sup_in = u.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sup_bd = u.boundary.iter().copied().fold(0.0, f64::max);
    let norm = u.positions().iter().map(|p| h * h * f(*p).powi(2)).sum::<f64>().sqrt();
    let r = u.disc.mask.domain.radius;
    if norm == 0.0 {
        return 0.0;
    }
    (sup_in - sup_bd) / (r * norm)
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.ellipticity;
        match &self.kind {
            OperatorKind::PucciPlus => write!(f, "pucci_plus:lambda={}:Lambda={}", e.lower(), e.upper())?,
            OperatorKind::PucciMinus => write!(f, "pucci_minus:lambda={}:Lambda={}", e.lower(), e.upper())?,
            OperatorKind::Linear(Coefficient::Constant(a)) => {
                if *a == SymMatrix::identity(2) && e.lower() == 1.0 && e.upper() == 1.0 {
                    write!(f, "linear:identity")?
                } else {
                    write!(
                        f,
                        "linear:a11={}:a12={}:a22={}:lambda={}:Lambda={}",
                        a.get(0, 0),
                        a.get(0, 1),
                        a.get(1, 1),
                        e.lower(),
                        e.upper()
                    )?
                }
            }
            OperatorKind::Linear(Coefficient::Rotating { rate }) => {
                write!(f, "linear:rotating={rate}:lambda={}:Lambda={}", e.lower(), e.upper())?
            }
        }
        if self.directions != DEFAULT_DIRECTIONS {
            write!(f, ":directions={}", self.directions)?;
        }
        Ok(())
    }
}

impl std::str::FromStr for OperatorSpec {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let t = Tagged::parse(s);
        let dirs = t.number("directions")?.map(|v| v as usize).unwrap_or(DEFAULT_DIRECTIONS);
        let consts = || -> Result<Option<Ellipticity>> {
            match (t.number("lambda")?, t.number("Lambda")?) {
                (Some(l), Some(u)) => Ellipticity::planar(l, u).map(Some).map_err(|e| LabError::config("lambda", e.to_string())),
                (None, None) => Ok(None),
                _ => Err(LabError::config("lambda", "give both `lambda` and `Lambda`")),
            }
        };
        let wrap = |r: Result<OperatorSpec>| r.map_err(|e| LabError::config("operator", e.to_string()));
        match t.head.as_str() {
            "pucci_plus" | "pucci_minus" => {
                t.only(&["lambda", "Lambda", "directions"])?;
                let e = consts()?.ok_or_else(|| LabError::config("lambda", "Pucci operators need `lambda` and `Lambda`"))?;
                let kind = if t.head == "pucci_plus" { OperatorKind::PucciPlus } else { OperatorKind::PucciMinus };
                wrap(OperatorSpec::new(kind, e, dirs))
            }
            "linear" => {
                t.only(&["a11", "a12", "a22", "lambda", "Lambda", "directions", "rotating"])?;
                if t.positional.first().map(String::as_str) == Some("identity") {
                    let e = consts()?.unwrap_or(Ellipticity::planar(1.0, 1.0)?);
                    return wrap(OperatorSpec::new(OperatorKind::Linear(Coefficient::Constant(SymMatrix::identity(2))), e, dirs));
                }
                if let Some(rate) = t.number("rotating")? {
                    let e = consts()?.ok_or_else(|| LabError::config("lambda", "rotating coefficients need `lambda` and `Lambda`"))?;
                    return wrap(OperatorSpec::new(OperatorKind::Linear(Coefficient::Rotating { rate }), e, dirs));
                }
                let get = |k: &str| -> Result<f64> { t.number(k)?.ok_or_else(|| LabError::config(k, "missing coefficient entry")) };
                let a = SymMatrix::planar(get("a11")?, get("a12")?, get("a22")?);
                let e = match consts()? {
                    Some(e) => e,
                    None => {
                        let s = spectrum(&a)?;
                        Ellipticity::planar(s.eigenvalues[1], s.eigenvalues[0]).map_err(|e| LabError::config("a11", e.to_string()))?
                    }
                };
                wrap(OperatorSpec::new(OperatorKind::Linear(Coefficient::Constant(a)), e, dirs))
            }
            other => Err(LabError::config("operator", format!("unknown operator `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pucci::{pucci_plus, quadratic_in_pucci_class};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn half() -> DomainSpec {
        DomainSpec::half_ball(1.0).unwrap()
    }

    #[test]
    fn direction_sets() {
        let d4 = direction_pairs(4);
        assert_eq!(d4, vec![([1, 0], [0, 1]), ([1, 1], [-1, 1])]);
        let d16 = direction_pairs(16);
        assert_eq!(d16.len(), 8);
        for (v, w) in &d16 {
            assert_eq!(v[0] * w[0] + v[1] * w[1], 0);
            assert_eq!(gcd(v[0], v[1]), 1);
        }
        let d32 = direction_pairs(32);
        assert_eq!(&d32[..8], &d16[..]);
    }

    #[test]
    fn selling_reconstructs() {
        for a in [SymMatrix::identity(2), SymMatrix::planar(2.0, 0.9, 1.0), SymMatrix::planar(1.0, -0.95, 1.0), SymMatrix::planar(5.0, 0.0, 0.2)] {
            let dec = selling(&a).unwrap();
            let mut m = [0.0; 3];
            for (e, w) in dec {
                assert!(w >= 0.0);
                let (x, y) = (e[0] as f64, e[1] as f64);
                m[0] += w * x * x;
                m[1] += w * x * y;
                m[2] += w * y * y;
            }
            assert!((m[0] - a.get(0, 0)).abs() < 1e-12 && (m[1] - a.get(0, 1)).abs() < 1e-12 && (m[2] - a.get(1, 1)).abs() < 1e-12);
        }
        let id = selling(&SymMatrix::identity(2)).unwrap();
        let used: Vec<[i32; 2]> = id.iter().filter(|t| t.1 > 0.0).map(|t| canonical(t.0)).collect();
        assert_eq!(used.len(), 2);
        assert!(used.contains(&[1, 0]) && used.contains(&[0, 1]));
    }

    #[test]
    fn operator_on_polynomials() {
        let op = OperatorSpec::pucci_plus(1.0, 2.0).unwrap().with_directions(8).unwrap();
        let d = Discretization::new(&op, &half(), 1.0 / 32.0).unwrap();
        let affine = Field::from_fn(&d, |p| 0.3 * p[0] - 2.0 * p[1] + 1.0);
        assert!(apply_operator(&op, &affine).unwrap().values.iter().all(|v| v.abs() < 1e-9));
        let bowl = Field::from_fn(&d, |p| 0.5 * (p[0] * p[0] + p[1] * p[1]));
        assert!(apply_operator(&op, &bowl).unwrap().values.iter().all(|v| (v - 4.0).abs() < 1e-9));
        let saddle = Field::from_fn(&d, |p| p[0] * p[0] - p[1] * p[1]);
        assert!(apply_operator(&op, &saddle).unwrap().values.iter().all(|v| (v - 2.0).abs() < 1e-9));
    }

    #[test]
    fn wrong_operator_is_structural_error() {
        let op = OperatorSpec::pucci_plus(1.0, 2.0).unwrap();
        let d = Discretization::new(&op, &half(), 1.0 / 16.0).unwrap();
        let u = Field::from_fn(&d, |_| 0.0);
        assert!(matches!(apply_operator(&OperatorSpec::laplace(), &u), Err(LabError::Structure(_))));
    }

    #[test]
    fn harmonic_affine_is_reproduced() {
        let (u, rep) = solve(&OperatorSpec::laplace(), |_| 0.0, &half(), |p| p[1], 1.0 / 32.0, 1e-10).unwrap();
        assert!(rep.converged);
        assert!(u.max_error(|p| p[1]) < 1e-10);
    }

    #[test]
    fn quarter_sector_harmonic() {
        let d = DomainSpec::sector(PI / 2.0, PI / 4.0, 1.0).unwrap();
        let (u, rep) = solve(&OperatorSpec::laplace(), |_| 0.0, &d, |p| 2.0 * p[0] * p[1], 1.0 / 32.0, 1e-10).unwrap();
        assert!(rep.converged);
        assert!(u.max_error(|p| 2.0 * p[0] * p[1]) < 1e-9);
    }

    #[test]
    fn policy_and_jacobi_agree() {
        let op = OperatorSpec::pucci_plus(1.0, 2.0).unwrap().with_directions(8).unwrap();
        let d = Discretization::new(&op, &DomainSpec::square(1.0).unwrap(), 1.0 / 16.0).unwrap();
        let g = |p: Point| (p[0]).cosh() + (2.0 * p[1]).cos();
        let f = |p: Point| 2.0 * p[0].cosh() - 4.0 * (2.0 * p[1]).cos().abs();
        let (a, ra) = solve_on(&d, f, g, &SolveOptions::default()).unwrap();
        let (b, rb) = solve_on(&d, f, g, &SolveOptions { method: Method::Jacobi, ..SolveOptions::default() }).unwrap();
        assert!(ra.converged && rb.converged, "{ra:?} {rb:?}");
        assert!(rb.step_size > 0.0);
        let diff = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn jacobi_cap_reports_non_convergence() {
        let op = OperatorSpec::laplace();
        let d = Discretization::new(&op, &DomainSpec::square(1.0).unwrap(), 1.0 / 16.0).unwrap();
        let opts = SolveOptions { method: Method::Jacobi, max_iterations: Some(3), ..SolveOptions::default() };
        let (_, rep) = solve_on(&d, |_| 1.0, |_| 0.0, &opts).unwrap();
        assert!(!rep.converged && rep.iterations == 3);
    }

    #[test]
    fn tolerance_floor() {
        let r = solve(&OperatorSpec::laplace(), |_| 0.0, &half(), |_| 0.0, 1.0 / 16.0, 1e-12);
        assert!(matches!(r, Err(LabError::Precondition(_))));
    }

    #[test]
    fn maximum_principle_checks() {
        let op = OperatorSpec::laplace();
        let d = Discretization::new(&op, &half(), 1.0 / 32.0).unwrap();
        let g = |p: Point| 1.0 + p[0] * p[0];
        let (v, _) = solve_on(&d, |_| 0.0, g, &SolveOptions::default()).unwrap();
        let zero = Field::from_fn(&d, |_| 0.0);
        assert!(discrete_comparison_check(&op, &zero, &v).unwrap());
        assert!(discrete_comparison_check(&op, &v, &v).unwrap());
        assert!(abp_check(&op, &v, |_| 0.0) <= 0.0);
    }

    #[test]
    fn disk_abp_constant_is_stable() {
        let disk = DomainSpec::disk(1.0).unwrap();
        let mut consts = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
            let op = OperatorSpec::laplace();
            let (u, _) = solve(&op, |_| -1.0, &disk, |_| 0.0, h, 1e-10).unwrap();
            assert!(u.max_error(|p| 0.25 * (1.0 - p[0] * p[0] - p[1] * p[1])) < 0.02);
            consts.push(abp_check(&op, &u, |_| -1.0));
        }
        // 0.25 / sqrt(pi)
        for c in &consts {
            assert!((c - 0.25 / PI.sqrt()).abs() < 0.01, "{consts:?}");
        }
    }

    #[test]
    fn minus_with_positive_source_stays_below_zero() {
        let op = OperatorSpec::pucci_minus(1.0, 2.0).unwrap();
        let (u, rep) = solve(&op, |_| 1.0, &half(), |_| 0.0, 1.0 / 32.0, 1e-9).unwrap();
        assert!(rep.converged);
        let zero = Field::from_fn(u.discretization(), |_| 0.0);
        assert!(discrete_comparison_check(&op, &u, &zero).unwrap());
        assert!(u.values.iter().all(|v| *v <= 1e-12));
    }

    #[test]
    fn raising_boundary_data_raises_solution() {
        let op = OperatorSpec::pucci_plus(1.0, 3.0).unwrap();
        let d = Discretization::new(&op, &half(), 1.0 / 32.0).unwrap();
        let g = |p: Point| p[0] * p[1] + p[0].sin();
        let (a, _) = solve_on(&d, |_| 0.5, g, &SolveOptions::default()).unwrap();
        let bumped = |p: Point| g(p) + if p[1] < 1e-12 && p[0] > 0.2 && p[0] < 0.6 { 0.1 } else { 0.0 };
        let (b, _) = solve_on(&d, |_| 0.5, bumped, &SolveOptions::default()).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| *y >= x - 1e-10));
        assert!(a.values.iter().zip(&b.values).any(|(x, y)| *y > x + 1e-6));
    }

    #[test]
    fn sign_symmetry_of_solves() {
        let plus = OperatorSpec::pucci_plus(1.0, 2.0).unwrap();
        let minus = OperatorSpec::pucci_minus(1.0, 2.0).unwrap();
        let dom = half();
        let f = |p: Point| p[0] - 0.5;
        let g = |p: Point| (3.0 * p[0]).sin() * p[1];
        let (a, _) = solve(&plus, f, &dom, g, 1.0 / 32.0, 1e-10).unwrap();
        let (b, _) = solve(&minus, |p| -f(p), &dom, |p| -g(p), 1.0 / 32.0, 1e-10).unwrap();
        let diff = a.values.iter().zip(&b.values).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn equal_constants_collapse_to_laplace() {
        let dom = half();
        let h = 1.0 / 32.0;
        let lin = OperatorSpec::new(
            OperatorKind::Linear(Coefficient::Constant(SymMatrix::identity(2).scale(1.5))),
            Ellipticity::planar(1.5, 1.5).unwrap(),
            16,
        )
        .unwrap();
        let u = |p: Point| (2.0 * p[0]).exp() * (p[1] * 3.0).cos();
        let vals = |op: &OperatorSpec| {
            let d = Discretization::new(op, &dom, h).unwrap();
            apply_operator(op, &Field::from_fn(&d, u)).unwrap().values
        };
        let l = vals(&lin);
        for op in [OperatorSpec::pucci_plus(1.5, 1.5).unwrap(), OperatorSpec::pucci_minus(1.5, 1.5).unwrap()] {
            let v = vals(&op);
            assert!(l.iter().zip(&v).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs())));
        }
    }

    #[test]
    fn lemma_barrier_comparison_on_annulus() {
        use crate::barriers::{choose_c1_for_boundary_data, default_exponent, RadialBarrier};
        let op = OperatorSpec::pucci_minus(1.0, 2.0).unwrap();
        let e = op.ellipticity;
        let alpha = default_exponent(&e);
        let c0 = 0.3;
        let c1 = choose_c1_for_boundary_data(&e, alpha, c0).unwrap();
        let b = RadialBarrier::lower_barrier(2, c1, alpha).unwrap();
        let ann = DomainSpec::annulus([0.0, 0.25], 0.125, 0.25).unwrap();
        let d = Discretization::new(&op, &ann, 1.0 / 128.0).unwrap();
        // data at least the barrier: c0 on the inner circle, 0 on the outer one
        let g = |p: Point| if (p[0]).hypot(p[1] - 0.25) < 0.19 { c0 } else { 0.0 };
        let (u, rep) = solve_on(&d, |_| 0.0, g, &SolveOptions::default()).unwrap();
        assert!(rep.converged);
        let v = Field::from_fn(&d, |p| b.value(&p));
        assert!(discrete_comparison_check(&op, &v, &u).unwrap());
    }

    #[test]
    fn field_io_round_trip() {
        let op = OperatorSpec::laplace();
        let d = Discretization::new(&op, &half(), 1.0 / 16.0).unwrap();
        let u = Field::from_fn(&d, |p| p[0] + 2.0 * p[1]);
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("u.bin");
        u.write_binary(&bin).unwrap();
        let dump = read_binary(&bin).unwrap();
        assert_eq!(dump.h, 1.0 / 16.0);
        assert_eq!(dump.bbox, [-1.0, 0.0, 1.0, 1.0]);
        assert_eq!(dump.records.len(), u.len());
        for ((id, v), w) in dump.records.iter().zip(&u.values) {
            assert_eq!(*id as usize, d.mask.interior[dump.records.iter().position(|r| r.0 == *id).unwrap()]);
            assert_eq!(v, w);
        }
        let csv = dir.path().join("u.csv");
        u.write_csv(&csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), u.len() + 1);
    }

    #[test]
    fn literals_round_trip() {
        for lit in [
            "pucci_plus:lambda=1:Lambda=2",
            "pucci_minus:lambda=0.5:Lambda=2:directions=32",
            "linear:identity",
            "linear:a11=2:a12=0.5:a22=1:lambda=0.5:Lambda=2.5",
            "linear:rotating=1:lambda=1:Lambda=3",
        ] {
            assert_eq!(lit.parse::<OperatorSpec>().unwrap().to_string(), lit);
        }
        assert!(matches!("pucci_plus:lambda=1".parse::<OperatorSpec>(), Err(LabError::Config { .. })));
        assert!(matches!("linear:a11=1:a12=2:a22=1".parse::<OperatorSpec>(), Err(LabError::Config { .. })));
        assert!(matches!("pucci_plus:lambda=1:Lambda=2:directions=6".parse::<OperatorSpec>(), Err(LabError::Config { .. })));
    }

    #[test]
    fn rotating_coefficients_stay_elliptic() {
        let op: OperatorSpec = "linear:rotating=1:lambda=1:Lambda=3".parse().unwrap();
        let d = Discretization::new(&op, &half(), 1.0 / 32.0).unwrap();
        let q = Field::from_fn(&d, |p| 0.5 * (p[0] * p[0] + p[1] * p[1]));
        // tr(A) = λ + Λ
        assert!(apply_operator(&op, &q).unwrap().values.iter().all(|v| (v - 4.0).abs() < 1e-9));
    }

    fn quad_field(d: &Arc<Discretization>, h: [f64; 3]) -> Field {
        Field::from_fn(d, move |p| 0.5 * (h[0] * p[0] * p[0] + 2.0 * h[1] * p[0] * p[1] + h[2] * p[1] * p[1]))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn positive_quadratics_raise_the_operator(
            n in prop::collection::vec(-2.0..2.0f64, 4),
            base in prop::collection::vec(-3.0..3.0f64, 3),
            plus in any::<bool>(),
        ) {
            let op = if plus { OperatorSpec::pucci_plus(1.0, 2.0).unwrap() } else { OperatorSpec::pucci_minus(1.0, 2.0).unwrap() };
            let d = Discretization::new(&op, &half(), 1.0 / 16.0).unwrap();
            // N = BᵀB
            let nm = [n[0] * n[0] + n[2] * n[2], n[0] * n[1] + n[2] * n[3], n[1] * n[1] + n[3] * n[3]];
            let u = Field::from_fn(&d, |p| (3.0 * p[0]).sin() * p[1] + base[0] * p[0] * p[0] + base[1] * p[0] * p[1] + base[2] * p[1] * p[1]);
            let bump = quad_field(&d, nm);
            let mut w = u.clone();
            for (a, b) in w.values.iter_mut().zip(&bump.values) { *a += b; }
            for (a, b) in w.boundary.iter_mut().zip(&bump.boundary) { *a += b; }
            let fu = apply_operator(&op, &u).unwrap();
            let fw = apply_operator(&op, &w).unwrap();
            let tr = nm[0] + nm[2];
            for (a, b) in fu.values.iter().zip(&fw.values) {
                prop_assert!(b - a >= 1.0 * tr - 1e-7 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn quadratics_match_the_exact_operator(h in prop::collection::vec(-3.0..3.0f64, 3)) {
            // with the axis and diagonal pairs, axis-aligned or diagonal Hessians are exact;
            // in general the discrete value brackets against the exact one from the right side
            let op = OperatorSpec::pucci_plus(1.0, 2.0).unwrap();
            let d = Discretization::new(&op, &half(), 1.0 / 16.0).unwrap();
            let q = quad_field(&d, [h[0], h[1], h[2]]);
            let exact = pucci_plus(&SymMatrix::planar(h[0], h[1], h[2]), &op.ellipticity).unwrap();
            let (sub, _) = quadratic_in_pucci_class(&SymMatrix::planar(h[0], h[1], h[2]), exact, &op.ellipticity).unwrap();
            prop_assert!(sub);
            for v in apply_operator(&op, &q).unwrap().values {
                prop_assert!(v <= exact + 1e-8 * (1.0 + exact.abs()));
                prop_assert!(v >= exact - 0.1 * (h[0].abs() + h[1].abs() + h[2].abs()) - 1e-8);
            }
        }
    }
}

//! Named analytic presets for sources, boundary data and exact solutions in
//! scenario files: `zero`, `const:2`, `poly:x2-y2`, `harmonic:r2sin2t`,
//! `harmonic:expsin`, `cornermode`, `affine:c=0:gx=1:gy=0` and
//! `custom-table:<path>`.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{DomainKind, DomainSpec, Point};
use crate::literal::{parse_number, Tagged};
use crate::pucci::SymMatrix;

/// c·x^i·y^j
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub px: u32,
    pub py: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Harmonic {
    /// r² sin 2θ = 2xy
    R2Sin2t,
    /// r² cos 2θ = x² − y²
    R2Cos2t,
    /// e^x sin y
    ExpSin,
    /// e^x cos y
    ExpCos,
}

impl Harmonic {
    const NAMES: [(&'static str, Harmonic); 4] = [
        ("r2sin2t", Harmonic::R2Sin2t),
        ("r2cos2t", Harmonic::R2Cos2t),
        ("expsin", Harmonic::ExpSin),
        ("expcos", Harmonic::ExpCos),
    ];

    fn name(self) -> &'static str {
        Self::NAMES.iter().find(|(_, h)| *h == self).map(|(n, _)| *n).expect("every kind is named")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FunctionSpec {
    Zero,
    Const(f64),
    Poly(Vec<Monomial>),
    Harmonic(Harmonic),
    /// r^{π/β} sin(π(θ − start)/β); unset fields come from a sector domain.
    CornerMode { beta: Option<f64>, start: Option<f64> },
    Affine { c: f64, gx: f64, gy: f64 },
    /// CSV of x,y,value rows, evaluated at the nearest sample.
    Table(PathBuf),
}

/// A preset bound to its domain and, for tables, loaded from disk.
#[derive(Clone, Debug)]
pub struct BoundFunction {
    spec: FunctionSpec,
    corner: Option<(f64, f64)>,
    table: Option<Arc<Table>>,
}

impl FunctionSpec {
    /// Resolves domain-dependent parameters; table paths are taken relative to `base`.
    pub fn bind(&self, domain: &DomainSpec, base: &Path) -> Result<BoundFunction> {
        let mut out = BoundFunction { spec: self.clone(), corner: None, table: None };
        match self {
            FunctionSpec::CornerMode { beta, start } => {
                let (b0, s0) = match domain.kind {
                    DomainKind::Sector { opening, bisector } => (Some(opening), Some(bisector - opening / 2.0)),
                    _ => (None, None),
                };
                let beta = beta.or(b0).ok_or_else(|| {
                    LabError::config("cornermode", "needs `beta` unless the domain is a sector")
                })?;
                if !(beta > 0.0 && beta <= 2.0 * PI) {
                    return Err(LabError::config("cornermode", format!("opening {beta} outside (0, 2pi]")));
                }
                out.corner = Some((beta, start.or(s0).unwrap_or(0.0)));
            }
            FunctionSpec::Table(path) => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                out.table = Some(Arc::new(Table::load(&full)?));
            }
            _ => {}
        }
        Ok(out)
    }

    /// Whether the Hessian is available in closed form.
    pub fn has_hessian(&self) -> bool {
        !matches!(self, FunctionSpec::Table(_))
    }
}

impl BoundFunction {
    pub fn spec(&self) -> &FunctionSpec {
        &self.spec
    }

    pub fn value(&self, p: Point) -> f64 {
        let [x, y] = p;
        match &self.spec {
            FunctionSpec::Zero => 0.0,
            FunctionSpec::Const(c) => *c,
            FunctionSpec::Poly(terms) => terms.iter().map(|m| m.coef * x.powi(m.px as i32) * y.powi(m.py as i32)).sum(),
            FunctionSpec::Harmonic(h) => match h {
                Harmonic::R2Sin2t => 2.0 * x * y,
                Harmonic::R2Cos2t => x * x - y * y,
                Harmonic::ExpSin => x.exp() * y.sin(),
                Harmonic::ExpCos => x.exp() * y.cos(),
            },
            FunctionSpec::CornerMode { .. } => {
                let (beta, start) = self.corner.expect("bound");
                let (r, phi) = corner_polar(p, beta, start);
                if r == 0.0 {
                    return 0.0;
                }
                r.powf(PI / beta) * (PI * phi / beta).sin()
            }
            FunctionSpec::Affine { c, gx, gy } => c + gx * x + gy * y,
            FunctionSpec::Table(_) => self.table.as_ref().expect("bound").nearest(p),
        }
    }

    /// Closed-form Hessian, or `None` for tables and at a corner vertex.
    pub fn hessian(&self, p: Point) -> Option<SymMatrix> {
        let [x, y] = p;
        let m = |a, b, c| Some(SymMatrix::planar(a, b, c));
        match &self.spec {
            FunctionSpec::Zero | FunctionSpec::Const(_) | FunctionSpec::Affine { .. } => m(0.0, 0.0, 0.0),
            FunctionSpec::Poly(terms) => {
                let d = |c: u32, k: u32| if c < k { 0.0 } else { (c - k + 1..=c).map(f64::from).product::<f64>() };
                let part = |kx: u32, ky: u32| -> f64 {
                    terms
                        .iter()
                        .filter(|t| t.px >= kx && t.py >= ky)
                        .map(|t| t.coef * d(t.px, kx) * d(t.py, ky) * x.powi((t.px - kx) as i32) * y.powi((t.py - ky) as i32))
                        .sum()
                };
                m(part(2, 0), part(1, 1), part(0, 2))
            }
            FunctionSpec::Harmonic(h) => match h {
                Harmonic::R2Sin2t => m(0.0, 2.0, 0.0),
                Harmonic::R2Cos2t => m(2.0, 0.0, -2.0),
                Harmonic::ExpSin => m(x.exp() * y.sin(), x.exp() * y.cos(), -x.exp() * y.sin()),
                Harmonic::ExpCos => m(x.exp() * y.cos(), -x.exp() * y.sin(), -x.exp() * y.cos()),
            },
            FunctionSpec::CornerMode { .. } => {
                let (beta, start) = self.corner.expect("bound");
                let (r, phi) = corner_polar(p, beta, start);
                if r == 0.0 {
                    return None;
                }
                // u = Im ζ^a with ζ = z e^{-i start}; u_xx = Im(a(a−1)ζ^{a−2}e^{−2i start}), u_xy = Re(…)
                let a = PI / beta;
                let mag = a * (a - 1.0) * r.powf(a - 2.0);
                let ang = (a - 2.0) * phi - 2.0 * start;
                let (re, im) = (mag * ang.cos(), mag * ang.sin());
                m(im, re, -im)
            }
            FunctionSpec::Table(_) => None,
        }
    }

    /// ∇ at the origin when it exists in closed form.
    pub fn gradient_at_origin(&self) -> Option<Point> {
        match &self.spec {
            FunctionSpec::Zero | FunctionSpec::Const(_) => Some([0.0, 0.0]),
            FunctionSpec::Poly(terms) => {
                let grab = |px, py| terms.iter().filter(|t| t.px == px && t.py == py).map(|t| t.coef).sum::<f64>();
                Some([grab(1, 0), grab(0, 1)])
            }
            FunctionSpec::Harmonic(h) => Some(match h {
                Harmonic::R2Sin2t | Harmonic::R2Cos2t => [0.0, 0.0],
                Harmonic::ExpSin => [0.0, 1.0],
                Harmonic::ExpCos => [1.0, 0.0],
            }),
            FunctionSpec::CornerMode { .. } => {
                let (beta, start) = self.corner.expect("bound");
                let a = PI / beta;
                if a > 1.0 {
                    Some([0.0, 0.0])
                } else if a == 1.0 {
                    // the half-plane mode is the distance to its edge
                    Some([-start.sin(), start.cos()])
                } else {
                    None
                }
            }
            FunctionSpec::Affine { gx, gy, .. } => Some([*gx, *gy]),
            FunctionSpec::Table(_) => None,
        }
    }
}

/// Radius and angle measured from `start`, with the angle taken in [0, β]
/// by sending the exterior wedge to whichever edge is closer.
fn corner_polar(p: Point, beta: f64, start: f64) -> (f64, f64) {
    let r = p[0].hypot(p[1]);
    let mut phi = (p[1].atan2(p[0]) - start).rem_euclid(2.0 * PI);
    if phi > beta {
        phi = if phi - beta < 2.0 * PI - phi { beta } else { 0.0 };
    }
    (r, phi)
}

/// Scattered samples with a uniform bucket grid for nearest lookups.
#[derive(Debug)]
pub struct Table {
    points: Vec<(Point, f64)>,
    origin: Point,
    cell: f64,
    dims: (usize, usize),
    buckets: Vec<Vec<usize>>,
}

impl Table {
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| LabError::config("custom-table", format!("{}: {e}", path.display())))?;
        let mut points = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| LabError::config("custom-table", format!("{}: {e}", path.display())))?;
            let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(|c| c.parse::<f64>()).collect();
            match nums {
                Ok(v) if v.len() == 3 && v.iter().all(|x| x.is_finite()) => points.push(([v[0], v[1]], v[2])),
                // a header row
                Err(_) if line == 0 => continue,
                _ => {
                    return Err(LabError::config(
                        "custom-table",
                        format!("{} row {}: need three finite numbers x,y,value", path.display(), line + 1),
                    ))
                }
            }
        }
        Self::from_points(points)
    }

    pub fn from_points(points: Vec<(Point, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(LabError::config("custom-table", "table has no rows"));
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for (p, _) in &points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let cell = span / (points.len() as f64).sqrt().max(1.0);
        let dims = (((hi[0] - lo[0]) / cell) as usize + 1, ((hi[1] - lo[1]) / cell) as usize + 1);
        let mut buckets = vec![Vec::new(); dims.0 * dims.1];
        for (i, (p, _)) in points.iter().enumerate() {
            let (bx, by) = (((p[0] - lo[0]) / cell) as usize, ((p[1] - lo[1]) / cell) as usize);
            buckets[by.min(dims.1 - 1) * dims.0 + bx.min(dims.0 - 1)].push(i);
        }
        Ok(Self { points, origin: lo, cell, dims, buckets })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Value of the sample nearest to `p`, searching rings of buckets outward.
    pub fn nearest(&self, p: Point) -> f64 {
        let fx = ((p[0] - self.origin[0]) / self.cell).floor();
        let fy = ((p[1] - self.origin[1]) / self.cell).floor();
        let cx = fx.clamp(0.0, (self.dims.0 - 1) as f64) as i64;
        let cy = fy.clamp(0.0, (self.dims.1 - 1) as f64) as i64;
        let mut best = (f64::INFINITY, 0.0);
        for ring in 0.. {
            for by in (cy - ring).max(0)..=(cy + ring).min(self.dims.1 as i64 - 1) {
                for bx in (cx - ring).max(0)..=(cx + ring).min(self.dims.0 as i64 - 1) {
                    if (bx - cx).abs() != ring && (by - cy).abs() != ring {
                        continue;
                    }
                    for &i in &self.buckets[by as usize * self.dims.0 + bx as usize] {
                        let (q, v) = self.points[i];
                        let d = (q[0] - p[0]).hypot(q[1] - p[1]);
                        if d < best.0 {
                            best = (d, v);
                        }
                    }
                }
            }
            // unsearched samples lie beyond an interior side of the searched square
            let side = |c: i64| c as f64 * self.cell;
            let mut margin = f64::INFINITY;
            if cx - ring > 0 {
                margin = margin.min(p[0] - self.origin[0] - side(cx - ring));
            }
            if cx + ring < self.dims.0 as i64 - 1 {
                margin = margin.min(self.origin[0] + side(cx + ring + 1) - p[0]);
            }
            if cy - ring > 0 {
                margin = margin.min(p[1] - self.origin[1] - side(cy - ring));
            }
            if cy + ring < self.dims.1 as i64 - 1 {
                margin = margin.min(self.origin[1] + side(cy + ring + 1) - p[1]);
            }
            if margin == f64::INFINITY || best.0 <= margin {
                break;
            }
        }
        best.1
    }
}

fn parse_poly(text: &str) -> std::result::Result<Vec<Monomial>, String> {
    let s: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err("empty polynomial".into());
    }
    let mut terms = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let mut sign = 1.0;
        if s[i] == '+' || s[i] == '-' {
            if s[i] == '-' {
                sign = -1.0;
            }
            i += 1;
        } else if !terms.is_empty() {
            return Err(format!("expected `+` or `-` at position {i}"));
        }
        let start = i;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == '.' || (s[i] == 'e' && i > start)) {
            if s[i] == 'e' && i + 1 < s.len() && (s[i + 1] == '-' || s[i + 1] == '+') {
                i += 1;
            }
            i += 1;
        }
        let coef_text: String = s[start..i].iter().collect();
        let mut coef = if coef_text.is_empty() {
            1.0
        } else {
            coef_text.parse::<f64>().map_err(|_| format!("bad coefficient `{coef_text}`"))?
        };
        if i < s.len() && s[i] == '*' {
            i += 1;
        }
        let (mut px, mut py) = (0u32, 0u32);
        let mut vars = 0;
        while i < s.len() && (s[i] == 'x' || s[i] == 'y') {
            let var = s[i];
            i += 1;
            if i < s.len() && s[i] == '^' {
                i += 1;
            }
            let ds = i;
            while i < s.len() && s[i].is_ascii_digit() {
                i += 1;
            }
            let pow = if ds == i { 1 } else { s[ds..i].iter().collect::<String>().parse::<u32>().map_err(|e| e.to_string())? };
            if var == 'x' {
                px += pow;
            } else {
                py += pow;
            }
            vars += 1;
            if i < s.len() && s[i] == '*' {
                i += 1;
            }
        }
        if coef_text.is_empty() && vars == 0 {
            return Err(format!("empty term at position {start}"));
        }
        coef *= sign;
        terms.push(Monomial { coef, px, py });
        if i < s.len() && s[i] != '+' && s[i] != '-' {
            return Err(format!("unexpected `{}` at position {i}", s[i]));
        }
    }
    Ok(terms)
}

fn write_poly(f: &mut fmt::Formatter<'_>, terms: &[Monomial]) -> fmt::Result {
    for (n, t) in terms.iter().enumerate() {
        let vars = t.px + t.py > 0;
        let mag = t.coef.abs();
        if t.coef < 0.0 || t.coef.is_sign_negative() {
            write!(f, "-")?;
        } else if n > 0 {
            write!(f, "+")?;
        }
        if !vars || mag != 1.0 {
            write!(f, "{mag}")?;
        }
        for (v, p) in [('x', t.px), ('y', t.py)] {
            match p {
                0 => {}
                1 => write!(f, "{v}")?,
                _ => write!(f, "{v}{p}")?,
            }
        }
    }
    Ok(())
}

impl fmt::Display for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionSpec::Zero => write!(f, "zero"),
            FunctionSpec::Const(c) => write!(f, "const:{c}"),
            FunctionSpec::Poly(terms) => {
                write!(f, "poly:")?;
                write_poly(f, terms)
            }
            FunctionSpec::Harmonic(h) => write!(f, "harmonic:{}", h.name()),
            FunctionSpec::CornerMode { beta, start } => {
                write!(f, "cornermode")?;
                if let Some(b) = beta {
                    write!(f, ":beta={b}")?;
                }
                if let Some(s) = start {
                    write!(f, ":start={s}")?;
                }
                Ok(())
            }
            FunctionSpec::Affine { c, gx, gy } => write!(f, "affine:c={c}:gx={gx}:gy={gy}"),
            FunctionSpec::Table(p) => write!(f, "custom-table:{}", p.display()),
        }
    }
}

impl std::str::FromStr for FunctionSpec {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        // the path may itself contain colons
        if let Some(path) = s.strip_prefix("custom-table:") {
            if path.is_empty() {
                return Err(LabError::config("custom-table", "missing path"));
            }
            return Ok(FunctionSpec::Table(PathBuf::from(path)));
        }
        let t = Tagged::parse(s);
        let key = t.head.clone();
        let single = |t: &Tagged| -> Result<String> {
            match (t.positional.as_slice(), t.options.is_empty()) {
                ([one], true) => Ok(one.clone()),
                _ => Err(LabError::config(key.clone(), format!("`{s}` takes exactly one argument"))),
            }
        };
        match t.head.as_str() {
            "zero" if t.positional.is_empty() && t.options.is_empty() => Ok(FunctionSpec::Zero),
            "const" => Ok(FunctionSpec::Const(parse_number(&single(&t)?).map_err(|e| LabError::config("const", e))?)),
            "poly" => parse_poly(&single(&t)?).map(FunctionSpec::Poly).map_err(|e| LabError::config("poly", e)),
            "harmonic" => {
                let name = single(&t)?;
                Harmonic::NAMES
                    .iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, h)| FunctionSpec::Harmonic(*h))
                    .ok_or_else(|| LabError::config("harmonic", format!("unknown harmonic preset `{name}`")))
            }
            "cornermode" if t.positional.is_empty() => {
                t.only(&["beta", "start"])?;
                Ok(FunctionSpec::CornerMode { beta: t.number("beta")?, start: t.number("start")? })
            }
            "affine" if t.positional.is_empty() => {
                t.only(&["c", "gx", "gy"])?;
                Ok(FunctionSpec::Affine {
                    c: t.number("c")?.unwrap_or(0.0),
                    gx: t.number("gx")?.unwrap_or(0.0),
                    gy: t.number("gy")?.unwrap_or(0.0),
                })
            }
            _ => Err(LabError::config(key, format!("unknown function preset `{s}`"))),
        }
    }
}

impl Serialize for FunctionSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FunctionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bound(lit: &str, d: &DomainSpec) -> BoundFunction {
        lit.parse::<FunctionSpec>().unwrap().bind(d, Path::new(".")).unwrap()
    }

    fn half() -> DomainSpec {
        DomainSpec::half_ball(1.0).unwrap()
    }

    #[test]
    fn presets_evaluate() {
        let d = half();
        let p = [0.3, 0.7];
        assert_eq!(bound("zero", &d).value(p), 0.0);
        assert_eq!(bound("const:2", &d).value(p), 2.0);
        assert!((bound("poly:x2-y2", &d).value(p) - (0.09 - 0.49)).abs() < 1e-15);
        assert!((bound("harmonic:r2sin2t", &d).value(p) - 0.42).abs() < 1e-15);
        assert!((bound("harmonic:expsin", &d).value(p) - 0.3f64.exp() * 0.7f64.sin()).abs() < 1e-15);
        assert!((bound("affine:c=1:gx=2:gy=-1", &d).value(p) - 0.9).abs() < 1e-15);
        assert_eq!(bound("const:pi/2", &d).value(p), PI / 2.0);
    }

    #[test]
    fn polynomial_grammar() {
        let t = parse_poly("2xy - 0.5x^2y + 3 + y3").unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t[1], Monomial { coef: -0.5, px: 2, py: 1 });
        assert_eq!(t[2], Monomial { coef: 3.0, px: 0, py: 0 });
        assert!(parse_poly("").is_err());
        assert!(parse_poly("x2 y").is_ok());
        assert!(parse_poly("x2+").is_err());
        assert!(parse_poly("x2*z").is_err());
        assert!(parse_poly("1e-3x").unwrap()[0].coef == 1e-3);
    }

    #[test]
    fn hessians_match_finite_differences() {
        let d = DomainSpec::sector(PI / 3.0, 0.4, 1.0).unwrap();
        for lit in ["poly:x3y-2xy2+x2", "harmonic:r2sin2t", "harmonic:r2cos2t", "harmonic:expsin", "harmonic:expcos", "cornermode"] {
            let f = bound(lit, &d);
            let p = [0.5, 0.35];
            let e = 1e-4;
            let v = |dx: f64, dy: f64| f.value([p[0] + dx, p[1] + dy]);
            let hxx = (v(e, 0.0) - 2.0 * v(0.0, 0.0) + v(-e, 0.0)) / (e * e);
            let hyy = (v(0.0, e) - 2.0 * v(0.0, 0.0) + v(0.0, -e)) / (e * e);
            let hxy = (v(e, e) - v(e, -e) - v(-e, e) + v(-e, -e)) / (4.0 * e * e);
            let h = f.hessian(p).unwrap();
            for (a, b) in [(h.get(0, 0), hxx), (h.get(0, 1), hxy), (h.get(1, 1), hyy)] {
                assert!((a - b).abs() < 1e-5 * (1.0 + a.abs()), "{lit}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn corner_mode_vanishes_on_sector_edges() {
        for (beta, bis) in [(PI / 4.0, PI / 8.0), (1.5 * PI, 0.75 * PI), (PI / 2.0, 1.0)] {
            let d = DomainSpec::sector(beta, bis, 1.0).unwrap();
            let f = bound("cornermode", &d);
            let start = bis - beta / 2.0;
            for r in [0.1, 0.5, 1.0] {
                for th in [start, start + beta] {
                    assert!(f.value([r * th.cos(), r * th.sin()]).abs() < 1e-12);
                }
                let mid = f.value([r * bis.cos(), r * bis.sin()]);
                assert!((mid - r.powf(PI / beta)).abs() < 1e-12);
            }
        }
        let quarter = DomainSpec::sector(PI / 2.0, PI / 4.0, 1.0).unwrap();
        let m = bound("cornermode", &quarter);
        assert!((m.value([0.3, 0.6]) - 2.0 * 0.3 * 0.6).abs() < 1e-12);
        assert!("cornermode".parse::<FunctionSpec>().unwrap().bind(&half(), Path::new(".")).is_err());
    }

    #[test]
    fn gradients_at_origin() {
        let d = half();
        assert_eq!(bound("poly:3x-2y+xy", &d).gradient_at_origin(), Some([3.0, -2.0]));
        assert_eq!(bound("harmonic:expsin", &d).gradient_at_origin(), Some([0.0, 1.0]));
        let re = DomainSpec::sector(1.5 * PI, 0.75 * PI, 1.0).unwrap();
        assert_eq!(bound("cornermode", &re).gradient_at_origin(), None);
    }

    #[test]
    fn table_nearest_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut text = String::from("x,y,value\n");
        for i in 0..20 {
            for j in 0..20 {
                let (x, y) = (i as f64 / 19.0, j as f64 / 19.0);
                text.push_str(&format!("{x},{y},{}\n", x + 10.0 * y));
            }
        }
        std::fs::write(&path, text).unwrap();
        let f = "custom-table:t.csv".parse::<FunctionSpec>().unwrap().bind(&half(), dir.path()).unwrap();
        assert_eq!(f.value([3.0 / 19.0 + 0.01, 5.0 / 19.0 - 0.01]), 3.0 / 19.0 + 10.0 * (5.0 / 19.0));
        // far outside the table, the corner sample wins
        assert_eq!(f.value([5.0, 5.0]), 11.0);
        assert!(f.hessian([0.1, 0.1]).is_none());
        std::fs::write(&path, "1,2\n").unwrap();
        assert!("custom-table:t.csv".parse::<FunctionSpec>().unwrap().bind(&half(), dir.path()).is_err());
    }

    #[test]
    fn unknown_presets_name_the_key() {
        match "harmonic:nope".parse::<FunctionSpec>() {
            Err(LabError::Config { key, .. }) => assert_eq!(key, "harmonic"),
            other => panic!("{other:?}"),
        }
        assert!("wobble".parse::<FunctionSpec>().is_err());
        assert!("zero:1".parse::<FunctionSpec>().is_err());
    }

    proptest! {
        #[test]
        fn literals_round_trip(c in -5.0f64..5.0, px in 0u32..4, py in 0u32..4, gx in -3.0f64..3.0) {
            let specs = vec![
                FunctionSpec::Const(c),
                FunctionSpec::Poly(vec![Monomial { coef: c, px, py }, Monomial { coef: -1.0, px: 1, py: 0 }]),
                FunctionSpec::Affine { c, gx, gy: 0.5 },
                FunctionSpec::CornerMode { beta: Some(gx.abs() + 0.1), start: None },
            ];
            for spec in specs {
                let back: FunctionSpec = spec.to_string().parse().unwrap();
                prop_assert_eq!(back.to_string(), spec.to_string());
                let d = DomainSpec::half_ball(1.0).unwrap();
                let (a, b) = (spec.bind(&d, Path::new(".")).unwrap(), back.bind(&d, Path::new(".")).unwrap());
                prop_assert!((a.value([0.2, 0.3]) - b.value([0.2, 0.3])).abs() <= 1e-12 * (1.0 + a.value([0.2, 0.3]).abs()));
            }
        }
    }
}

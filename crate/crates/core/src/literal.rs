//! Tokenizing for the colon-separated literals used in scenario files,
//! e.g. `sector:beta=pi/2:bisector=pi/4` or `max:[power:1,power:0.5]`.

use crate::error::{LabError, Result};

/// Splits on `sep` at bracket depth zero.
pub fn split_top(s: &str, sep: char) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '[' | '(' => depth += 1,
            ']' | ')' => depth -= 1,
            _ => {}
        }
        if c == sep && depth == 0 {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    out.push(cur);
    out
}

/// Head word and `key=value` options of a literal such as `graph:lower=power:0.5`.
///
/// Segments without `=` are glued back onto the preceding value, so nested
/// colon literals survive as values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tagged {
    pub head: String,
    pub options: Vec<(String, String)>,
    pub positional: Vec<String>,
}

impl Tagged {
    pub fn parse(s: &str) -> Tagged {
        let parts = split_top(s.trim(), ':');
        let head = parts[0].trim().to_string();
        let mut options: Vec<(String, String)> = Vec::new();
        let mut positional = Vec::new();
        for p in parts.into_iter().skip(1) {
            let eq = top_level_eq(&p);
            match eq {
                Some(i) => options.push((p[..i].trim().to_string(), p[i + 1..].trim().to_string())),
                None => match options.last_mut() {
                    Some((_, v)) => {
                        v.push(':');
                        v.push_str(p.trim());
                    }
                    None => positional.push(p.trim().to_string()),
                },
            }
        }
        Tagged { head, options, positional }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.options.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_number(v).map_err(|e| LabError::config(key, e))).transpose()
    }

    /// Rejects any option key outside `allowed`.
    pub fn only(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.options {
            if !allowed.contains(&k.as_str()) {
                return Err(LabError::config(k.clone(), format!("unknown option for `{}`", self.head)));
            }
        }
        Ok(())
    }
}

fn top_level_eq(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '[' | '(' => depth += 1,
            ']' | ')' => depth -= 1,
            '=' if depth == 0 => return Some(i),
            _ => {}
        }
    }
    None
}

/// Strips one pair of enclosing brackets.
pub fn unbracket(s: &str) -> Option<&str> {
    let t = s.trim();
    t.strip_prefix('[').and_then(|r| r.strip_suffix(']'))
}

/// Parses a number that may be written with `pi`, products and one fraction,
/// e.g. `0.5`, `pi/4`, `3*pi/2`, `3pi/2`, `2/3`, `-1e-3`, `e^-40`.
pub fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    if let Some(exp) = t.strip_prefix("e^") {
        return parse_number(exp).map(f64::exp);
    }
    if let Ok(v) = t.parse::<f64>() {
        return Ok(v);
    }
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a, Some(b)),
        None => (t, None),
    };
    let product = |part: &str| -> std::result::Result<f64, String> {
        let mut v = 1.0;
        for factor in part.split('*') {
            let f = factor.trim();
            let (sign, f) = match f.strip_prefix('-') {
                Some(r) => (-1.0, r),
                None => (1.0, f),
            };
            let x = if let Some(coef) = f.strip_suffix("pi") {
                // "pi" or a coefficient written against it, as in "3pi"
                let c = if coef.is_empty() { 1.0 } else { coef.parse::<f64>().map_err(|_| format!("cannot parse number `{s}`"))? };
                c * std::f64::consts::PI
            } else {
                f.parse::<f64>().map_err(|_| format!("cannot parse number `{s}`"))?
            };
            v *= sign * x;
        }
        Ok(v)
    };
    let n = product(num)?;
    match den {
        Some(d) => {
            let dv = product(d)?;
            if dv == 0.0 {
                return Err(format!("division by zero in `{s}`"));
            }
            Ok(n / dv)
        }
        None => Ok(n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_values_survive() {
        let t = Tagged::parse("graph:lower=power:0.5:upper=scaled:0.1:logpow:2");
        assert_eq!(t.head, "graph");
        assert_eq!(t.get("lower"), Some("power:0.5"));
        assert_eq!(t.get("upper"), Some("scaled:0.1:logpow:2"));
        let c = Tagged::parse("composite:parts=[halfball;sector:beta=1:bisector=0]");
        assert_eq!(c.get("parts"), Some("[halfball;sector:beta=1:bisector=0]"));
        let p = Tagged::parse("scaled:0.01:power:0.5");
        assert_eq!(p.positional, vec!["0.01", "power", "0.5"]);
    }

    #[test]
    fn numbers() {
        let pi = std::f64::consts::PI;
        assert_eq!(parse_number("0.25").unwrap(), 0.25);
        assert_eq!(parse_number("pi/4").unwrap(), pi / 4.0);
        assert_eq!(parse_number("3*pi/2").unwrap(), 3.0 * pi / 2.0);
        assert_eq!(parse_number("3pi/2").unwrap(), 3.0 * pi / 2.0);
        assert!(parse_number("xpi").is_err());
        assert_eq!(parse_number("2/3").unwrap(), 2.0 / 3.0);
        assert_eq!(parse_number("-pi").unwrap(), -pi);
        assert!((parse_number("e^-2").unwrap() - (-2.0f64).exp()).abs() < 1e-16);
        assert!(parse_number("pie").is_err());
    }
}

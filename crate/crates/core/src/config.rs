//! Plain-text IFS description files.
//!
//! ```text
//! # Sierpinski triangle
//! dim = 2
//! map = 1/2  1 0 0 1  0 0
//! map = 1/2  1 0 0 1  1/2 0
//! map = 1/2  1 0 0 1  1/4 0.4330127018922193
//! probs = 1/3 1/3 1/3
//! osc_ball = 1/2 0.4330127018922193 0.21650635094610965
//! ```
//!
//! A `map` line lists the contraction ratio, the `d×d` orthogonal part in
//! row-major order and the translation. Numbers may be decimals or fractions
//! `a/b`; `#` starts a comment.

use std::path::Path;

use crate::error::{Error, Result};
use crate::ifs::{IfsSystem, Similitude};

pub fn parse_number(text: &str) -> Result<f64> {
    let bad = || Error::invalid(format!("not a number: {text:?}"));
    let value = match text.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            if b == 0.0 {
                return Err(bad());
            }
            a / b
        }
        None => text.trim().parse().map_err(|_| bad())?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

fn numbers(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|tok| parse_number(tok).map_err(|e| Error::invalid(format!("line {line}: {e}"))))
        .collect()
}

pub fn parse_config(text: &str) -> Result<IfsSystem> {
    let mut dim: Option<usize> = None;
    let mut maps = Vec::new();
    let mut probs: Option<Vec<f64>> = None;
    let mut osc: Option<(Vec<f64>, f64)> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("line {line_no}: expected `key = value`")))?;
        let key = key.trim();
        match key {
            "dim" => {
                if dim.is_some() {
                    return Err(Error::invalid(format!("line {line_no}: dim declared twice")));
                }
                let d: usize = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("line {line_no}: bad dimension")))?;
                if d == 0 {
                    return Err(Error::invalid(format!("line {line_no}: dimension must be >= 1")));
                }
                dim = Some(d);
            }
            "map" => {
                let d = dim.ok_or_else(|| Error::invalid(format!("line {line_no}: map before dim")))?;
                let v = numbers(value, line_no)?;
                if v.len() != 1 + d * d + d {
                    return Err(Error::invalid(format!(
                        "line {line_no}: map needs {} numbers in dimension {d}, got {}",
                        1 + d * d + d,
                        v.len()
                    )));
                }
                let map = Similitude::new(v[0], v[1..1 + d * d].to_vec(), v[1 + d * d..].to_vec())
                    .map_err(|e| Error::invalid(format!("line {line_no}: {e}")))?;
                maps.push(map);
            }
            "probs" => {
                if probs.is_some() {
                    return Err(Error::invalid(format!("line {line_no}: probs declared twice")));
                }
                probs = Some(numbers(value, line_no)?);
            }
            "osc_ball" => {
                let d = dim.ok_or_else(|| Error::invalid(format!("line {line_no}: osc_ball before dim")))?;
                let v = numbers(value, line_no)?;
                if v.len() != d + 1 {
                    return Err(Error::invalid(format!(
                        "line {line_no}: osc_ball needs {} numbers, got {}",
                        d + 1,
                        v.len()
                    )));
                }
                osc = Some((v[..d].to_vec(), v[d]));
            }
            other => {
                return Err(Error::invalid(format!("line {line_no}: unknown key {other:?}")));
            }
        }
    }

    if dim.is_none() {
        return Err(Error::invalid("config declares no dim"));
    }
    let probs = match probs {
        Some(p) => p,
        None => vec![1.0 / maps.len().max(1) as f64; maps.len()],
    };
    let system = IfsSystem::new(maps, probs)?;
    match osc {
        Some((center, radius)) => system.with_osc_witness(center, radius),
        None => Ok(system),
    }
}

pub fn load_config(path: &Path) -> Result<IfsSystem> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIERPINSKI: &str = "\
# Sierpinski triangle
dim = 2
map = 1/2  1 0 0 1  0 0
map = 1/2  1 0 0 1  1/2 0     # second vertex
map = 1/2  1 0 0 1  1/4 0.4330127018922193
probs = 1/3 1/3 1/3
osc_ball = 1/2 0.4330127018922193 0.21650635094610965
";

    #[test]
    fn fractions_and_decimals() {
        assert_eq!(parse_number("1/4").unwrap(), 0.25);
        assert_eq!(parse_number("0.5").unwrap(), 0.5);
        assert_eq!(parse_number("-3/2").unwrap(), -1.5);
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("x").is_err());
    }

    #[test]
    fn sierpinski_config_matches_builtin() {
        let sys = parse_config(SIERPINSKI).unwrap();
        let builtin = IfsSystem::sierpinski([1.0 / 3.0; 3]).unwrap();
        assert_eq!(sys.maps(), builtin.maps());
        assert_eq!(sys.probs(), builtin.probs());
        assert!(sys.osc_witness().is_some());
        assert!((sys.kappa().unwrap() - 0.5 * 0.21650635094610965).abs() < 1e-15);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_config("dim = 2\nmap = 1/2 1 0 0 1 0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_config("map = 1/2 1 0\n").is_err());
        assert!(parse_config("dim = 1\nmap = 1/2 1 0\nmap = 1/2 1 1/2\nprobs = 0.6 0.6\n").is_err());
        assert!(parse_config("dim = 1\nfoo = 3\n").is_err());
    }

    #[test]
    fn missing_probs_default_to_uniform() {
        let sys = parse_config("dim = 1\nmap = 1/2 1 0\nmap = 1/4 1 3/4\n").unwrap();
        assert_eq!(sys.probs(), &[0.5, 0.5]);
    }
}

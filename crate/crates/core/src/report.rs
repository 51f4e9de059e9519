//! Plain-text output helpers shared by the library and the CLI.

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Joins already formatted fields into one CSV line (no quoting needed for
/// the numeric and word fields this crate emits).
pub fn csv_line<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut line = String::new();
    for (i, f) in fields.into_iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str(f.as_ref());
    }
    line.push('\n');
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 3032.0, 1e-300, 6.02214076e23] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
            assert_eq!(mantissa.len(), 17);
        }
        assert_eq!(fmt17(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_joins() {
        assert_eq!(csv_line(["a", "b", "c"]), "a,b,c\n");
    }
}

//! `start:stop:count` ranges.

use thiserror::Error;

/// Largest accepted point count.
pub const MAX_POINTS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum RangeError {
    #[error("expected `start:stop:count`, got `{0}`")]
    Shape(String),
    #[error("bad number `{0}`")]
    Number(String),
    #[error("count must be between 1 and {MAX_POINTS}, got {0}")]
    Count(String),
    #[error("a single point needs start == stop")]
    Single,
}

/// Inclusive uniform grid. `"-213:213:4097"` gives 4097 points from −213 to 213.
pub fn parse_range(s: &str) -> Result<Vec<f64>, RangeError> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(RangeError::Shape(s.to_string()));
    };
    let num = |x: &str| -> Result<f64, RangeError> {
        x.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| RangeError::Number(x.trim().to_string()))
    };
    let (start, stop) = (num(a)?, num(b)?);
    let count: usize = n
        .trim()
        .parse()
        .ok()
        .filter(|&c| (1..=MAX_POINTS).contains(&c))
        .ok_or_else(|| RangeError::Count(n.trim().to_string()))?;
    if count == 1 {
        return if start == stop { Ok(vec![start]) } else { Err(RangeError::Single) };
    }
    let step = (stop - start) / (count - 1) as f64;
    let mut v: Vec<f64> = (0..count).map(|k| start + step * k as f64).collect();
    v[count - 1] = stop;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_exact() {
        let v = parse_range("-213:213:4097").unwrap();
        assert_eq!(v.len(), 4097);
        assert_eq!(v[0], -213.0);
        assert_eq!(v[4096], 213.0);
        assert!((v[2048]).abs() < 1e-12);
        assert_eq!(parse_range("2:2:1").unwrap(), vec![2.0]);
    }

    #[test]
    fn rejects() {
        for s in ["", "1:2", "1:2:3:4", "a:2:3", "1:2:0", "1:2:-1", "1:2:x", "1:2:1", "nan:1:3", "1:inf:2"] {
            assert!(parse_range(s).is_err(), "{s}");
        }
    }
}

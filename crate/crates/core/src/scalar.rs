//! Number types used by every solver in the crate.
//!
//! Graph metrics (circles, circle unions) are exact and use [`Rational`];
//! Euclidean nets carry irrational distances and use `f64` with an absolute
//! plus relative tolerance of [`FLOAT_TOL`]. A single solve never mixes the two.

use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

/// Exact rational with 128-bit numerator and denominator.
pub type Rational = Ratio<i128>;

/// Comparison tolerance for float spaces.
pub const FLOAT_TOL: f64 = 1e-9;

pub trait Scalar:
    Clone
    + Debug
    + Display
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    /// True for exact arithmetic; false when comparisons go through [`FLOAT_TOL`].
    const EXACT: bool;

    fn from_int(v: i64) -> Self;

    fn from_frac(num: i64, den: i64) -> Self;

    fn to_f64(&self) -> f64;

    fn abs_val(&self) -> Self;

    /// `self > other` beyond tolerance.
    fn gt_tol(&self, other: &Self) -> bool;

    /// `|self - other|` within tolerance.
    fn eq_tol(&self, other: &Self) -> bool;

    fn is_finite_value(&self) -> bool {
        true
    }

    fn is_pos(&self) -> bool {
        self.gt_tol(&Self::zero())
    }

    fn is_neg(&self) -> bool {
        Self::zero().gt_tol(self)
    }

    fn is_zero_tol(&self) -> bool {
        self.eq_tol(&Self::zero())
    }

    /// `self >= other` up to tolerance.
    fn ge_tol(&self, other: &Self) -> bool {
        !other.gt_tol(self)
    }

    /// Parses `"p"`, `"p/q"` (both types) or a decimal literal (floats only).
    fn parse_str(s: &str) -> Result<Self, String>;

    fn to_json(&self) -> serde_json::Value;

    fn from_json(v: &serde_json::Value) -> Result<Self, String>;

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_int(v: i64) -> Self {
        Ratio::from_integer(v as i128)
    }

    fn from_frac(num: i64, den: i64) -> Self {
        Ratio::new(num as i128, den as i128)
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }

    fn abs_val(&self) -> Self {
        self.abs()
    }

    fn gt_tol(&self, other: &Self) -> bool {
        self > other
    }

    fn eq_tol(&self, other: &Self) -> bool {
        self == other
    }

    fn parse_str(s: &str) -> Result<Self, String> {
        parse_rational(s)
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::String(self.to_string())
    }

    fn from_json(v: &serde_json::Value) -> Result<Self, String> {
        match v {
            serde_json::Value::String(s) => parse_rational(s),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) => Ok(Ratio::from_integer(i as i128)),
                None => Err(format!("non-integer number {n} in exact space; write it as \"p/q\"")),
            },
            other => Err(format!("expected rational string, found {other}")),
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_int(v: i64) -> Self {
        v as f64
    }

    fn from_frac(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs_val(&self) -> Self {
        self.abs()
    }

    fn gt_tol(&self, other: &Self) -> bool {
        self - other > tol(*self, *other)
    }

    fn eq_tol(&self, other: &Self) -> bool {
        (self - other).abs() <= tol(*self, *other)
    }

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }

    fn parse_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.contains('/') {
            let r = parse_rational(s)?;
            return Ok(r.to_f64());
        }
        s.parse::<f64>().map_err(|e| format!("invalid number {s:?}: {e}"))
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Number::from_f64(*self)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null)
    }

    fn from_json(v: &serde_json::Value) -> Result<Self, String> {
        match v {
            serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| format!("invalid number {n}")),
            serde_json::Value::String(s) => Self::parse_str(s),
            other => Err(format!("expected number, found {other}")),
        }
    }
}

fn tol(a: f64, b: f64) -> f64 {
    FLOAT_TOL * 1f64.max(a.abs()).max(b.abs())
}

/// Parses `"p"` or `"p/q"` into an exact rational. Decimal points are rejected.
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let num: i128 = num
        .parse()
        .map_err(|_| format!("invalid rational {s:?}: expected \"p\" or \"p/q\""))?;
    let den: i128 = den
        .parse()
        .map_err(|_| format!("invalid rational {s:?}: expected \"p\" or \"p/q\""))?;
    if den == 0 {
        return Err(format!("invalid rational {s:?}: zero denominator"));
    }
    Ok(Ratio::new(num, den))
}

/// Exact rational shorthand, mostly for tests and examples.
pub fn q(num: i64, den: i64) -> Rational {
    Rational::from_frac(num, den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_parse_roundtrip() {
        for s in ["3", "-7/4", "0", "12/5"] {
            let r = parse_rational(s).unwrap();
            assert_eq!(parse_rational(&r.to_string()).unwrap(), r);
        }
        assert_eq!(parse_rational("6/8").unwrap(), q(3, 4));
        assert!(parse_rational("0.75").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn float_tolerance() {
        assert!(1.0f64.eq_tol(&(1.0 + 1e-12)));
        assert!(!1.0f64.gt_tol(&(1.0 - 1e-12)));
        assert!(1.0f64.gt_tol(&0.999));
        assert_eq!(f64::parse_str("3/4").unwrap(), 0.75);
    }
}

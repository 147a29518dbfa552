//! Numeric backends for probabilities: `f64` everywhere, and exact
//! `BigRational` for tables whose entries are rational.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub trait Weight:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Send
    + Sync
{
    fn from_count(n: &BigUint) -> Self;

    /// Converts a model probability. Exact backends require `exact`.
    fn from_prob(value: f64, exact: Option<&BigRational>) -> Option<Self>;

    fn to_f64(&self) -> f64;

    fn abs_diff(&self, other: &Self) -> Self;

    fn powu(&self, n: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }
}

impl Weight for f64 {
    fn from_count(n: &BigUint) -> Self {
        n.to_f64().unwrap_or(f64::INFINITY)
    }

    fn from_prob(value: f64, _exact: Option<&BigRational>) -> Option<Self> {
        Some(value)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs_diff(&self, other: &Self) -> Self {
        (self - other).abs()
    }

    fn powu(&self, n: u32) -> Self {
        self.powi(n as i32)
    }
}

impl Weight for BigRational {
    fn from_count(n: &BigUint) -> Self {
        BigRational::from_integer(n.clone().into())
    }

    fn from_prob(_value: f64, exact: Option<&BigRational>) -> Option<Self> {
        exact.cloned()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn abs_diff(&self, other: &Self) -> Self {
        (self - other).abs()
    }
}

/// Parses `"p/q"`, a plain integer, or a decimal literal such as `"0.25"` or
/// `"1e-9"` into an exact rational.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let s = text.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: num_bigint::BigInt = num.trim().parse().ok()?;
        let d: num_bigint::BigInt = den.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(digits.parse().ok()?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigRational::from_integer(10.into());
    if scale >= 0 {
        value *= ten.pow(scale);
    } else {
        value /= ten.pow(-scale);
    }
    if negative {
        value = -value;
    }
    Some(value)
}

/// The decimal shown by `{}` for `x`, read back exactly.
pub fn rational_from_decimal_f64(x: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    parse_rational(&format!("{x:e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn parses_rationals_and_decimals() {
        assert_eq!(parse_rational("1/2"), Some(r(1, 2)));
        assert_eq!(parse_rational(" 3 / 9 "), Some(r(1, 3)));
        assert_eq!(parse_rational("0.25"), Some(r(1, 4)));
        assert_eq!(parse_rational("1e-9"), Some(r(1, 1_000_000_000)));
        assert_eq!(parse_rational("2"), Some(r(2, 1)));
        assert_eq!(parse_rational("-0.5"), Some(r(-1, 2)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(parse_rational("."), None);
    }

    #[test]
    fn decimal_floats_convert_to_their_printed_value() {
        assert_eq!(rational_from_decimal_f64(0.1), Some(r(1, 10)));
        assert_eq!(rational_from_decimal_f64(1.5), Some(r(3, 2)));
    }

    #[test]
    fn powu_matches_repeated_product() {
        assert_eq!(r(2, 3).powu(5), r(32, 243));
        assert_eq!(Weight::powu(&0.5f64, 3), 0.125);
        assert_eq!(r(7, 3).powu(0), r(1, 1));
    }
}

//! Scalar abstraction shared by the exact (rational) and floating-point paths.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};

/// Arithmetic needed by the finite-chain lab and the lattice measures.
///
/// Implemented for `f32`, `f64` and [`BigRational`]. Exact scalars report
/// `EXACT = true`; their zero tests and residuals are exact, so identities
/// hold with residual `0`.
pub trait Scalar:
    Clone + Debug + Display + PartialOrd + Num + Signed + Sum + Send + Sync + 'static
{
    /// Whether arithmetic is exact.
    const EXACT: bool;

    /// Converts an exact rational.
    fn from_rational(q: &BigRational) -> Self;

    /// Lossy conversion used for reporting and for pivot ranking.
    fn to_f64(&self) -> f64;

    fn from_i64(v: i64) -> Self {
        Self::from_rational(&BigRational::from_integer(BigInt::from(v)))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_rational(&BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// Whether `self` should be treated as zero relative to `scale`.
    ///
    /// Exact scalars only treat exact zero as zero.
    fn negligible(&self, scale: f64) -> bool;
}

macro_rules! float_scalar {
    ($t:ty, $eps:expr) => {
        impl Scalar for $t {
            const EXACT: bool = false;

            fn from_rational(q: &BigRational) -> Self {
                ToPrimitive::to_f64(q).unwrap_or(f64::NAN) as $t
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn from_i64(v: i64) -> Self {
                v as $t
            }

            fn from_ratio(num: i64, den: i64) -> Self {
                num as $t / den as $t
            }

            fn negligible(&self, scale: f64) -> bool {
                (self.abs() as f64) <= $eps * scale.max(f64::MIN_POSITIVE)
            }
        }
    };
}

float_scalar!(f64, 1e-13);
float_scalar!(f32, 1e-6);

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_rational(q: &BigRational) -> Self {
        q.clone()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn negligible(&self, _scale: f64) -> bool {
        self.is_zero()
    }
}

/// Sup-norm of `a - b`, reported as `f64`.
pub fn sup_distance<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.clone() - y.clone()).abs().to_f64())
        .fold(0.0, f64::max)
}

pub fn sum<S: Scalar>(v: &[S]) -> S {
    v.iter().cloned().sum()
}

pub fn is_one<S: Scalar>(v: &S) -> bool {
    v.is_one()
}

/// Parses `"2/3"`, `"-0.125"`, `"1e-3"` or `"7"` into an exact rational.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: BigInt = format!("{int_part}{frac_part}0").parse().ok()?;
    let all = all / BigInt::from(10);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut q = BigRational::from_integer(all);
    if scale >= 0 {
        q *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        q /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -q } else { q })
}

/// Exact rational from a finite `f64` via its shortest decimal representation.
///
/// `0.1` becomes `1/10`, not the binary expansion of the double.
pub fn rational_from_f64(x: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    parse_rational(&format!("{x:e}"))
}

pub fn gcd_rational(a: &BigRational, b: &BigRational) -> BigRational {
    // gcd(p1/q1, p2/q2) = gcd(p1*q2, p2*q1) / (q1*q2)
    let num = gcd(
        a.numer().clone() * b.denom().clone(),
        b.numer().clone() * a.denom().clone(),
    );
    BigRational::new(num, a.denom().clone() * b.denom().clone())
}

fn gcd(mut a: BigInt, mut b: BigInt) -> BigInt {
    a = a.abs();
    b = b.abs();
    while !b.is_zero() {
        let r = &a % &b;
        a = b;
        b = r;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn parses_rational_and_decimal_forms() {
        assert_eq!(parse_rational("2/3"), Some(q(2, 3)));
        assert_eq!(parse_rational(" -1/4 "), Some(q(-1, 4)));
        assert_eq!(parse_rational("0.125"), Some(q(1, 8)));
        assert_eq!(parse_rational("-.5"), Some(q(-1, 2)));
        assert_eq!(parse_rational("1e-3"), Some(q(1, 1000)));
        assert_eq!(parse_rational("2.5E2"), Some(q(250, 1)));
        assert_eq!(parse_rational("7"), Some(q(7, 1)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(parse_rational(""), None);
    }

    #[test]
    fn f64_goes_through_shortest_decimal() {
        assert_eq!(rational_from_f64(0.1), Some(q(1, 10)));
        assert_eq!(rational_from_f64(-2.0), Some(q(-2, 1)));
        assert_eq!(rational_from_f64(f64::NAN), None);
    }

    #[test]
    fn rational_gcd() {
        assert_eq!(gcd_rational(&q(1, 2), &q(3, 2)), q(1, 2));
        assert_eq!(gcd_rational(&q(-1, 1), &q(2, 1)), q(1, 1));
        assert_eq!(gcd_rational(&q(2, 3), &q(1, 2)), q(1, 6));
        assert_eq!(gcd_rational(&q(0, 1), &q(3, 4)), q(3, 4));
    }

    #[test]
    fn negligible_is_exact_for_rationals() {
        assert!(BigRational::zero().negligible(1.0));
        assert!(!q(1, 1_000_000_000).negligible(1.0));
        assert!(1e-15f64.negligible(1.0));
        assert!(!1e-10f64.negligible(1.0));
    }
}

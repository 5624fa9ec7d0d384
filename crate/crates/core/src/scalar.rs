//! Scalar backends.
//!
//! All map logic is written against [`Scalar`], which is implemented for the
//! exact big-rational type and for the machine floats. Exact backends are the
//! default for anything that decides singularity or builds partitions; floats
//! are accepted wherever an approximate answer is meaningful.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScalarError {
    #[error("malformed rational {0:?}: expected \"p/q\" with integer p and nonzero q")]
    Malformed(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
    #[error("non-finite value {0}")]
    NonFinite(String),
}

/// A number type the section maps can run on.
pub trait Scalar:
    Clone + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static + Num + Signed
{
    /// Whether comparisons are exact (no rounding).
    const EXACT: bool;

    fn from_ratio(numer: i64, denom: i64) -> Self;

    fn from_rational(r: &BigRational) -> Self;

    /// Exact value as a rational; `None` for NaN or infinities.
    fn to_rational(&self) -> Option<BigRational>;

    fn to_f64(&self) -> f64;

    fn floor(&self) -> Self;

    fn is_finite(&self) -> bool;

    fn from_i64(n: i64) -> Self {
        Self::from_ratio(n, 1)
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half(&self) -> Self {
        self.clone() / Self::two()
    }

    /// `self mod m` in `[0, m)`, for `m > 0`.
    fn modulo(&self, m: &Self) -> Self {
        let q = (self.clone() / m.clone()).floor();
        let r = self.clone() - q * m.clone();
        // float rounding can land exactly on m or a hair below zero
        if r >= *m || r < Self::zero() {
            if r >= *m {
                r - m.clone()
            } else {
                Self::zero()
            }
        } else {
            r
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_ratio(numer: i64, denom: i64) -> Self {
        BigRational::new(BigInt::from(numer), BigInt::from(denom))
    }

    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }

    fn to_rational(&self) -> Option<BigRational> {
        Some(self.clone())
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn floor(&self) -> Self {
        BigRational::floor(self)
    }

    fn is_finite(&self) -> bool {
        true
    }
}

macro_rules! impl_float_scalar {
    ($f:ty) => {
        impl Scalar for $f {
            const EXACT: bool = false;

            fn from_ratio(numer: i64, denom: i64) -> Self {
                numer as $f / denom as $f
            }

            fn from_rational(r: &BigRational) -> Self {
                ToPrimitive::to_f64(r).unwrap_or(f64::NAN) as $f
            }

            fn to_rational(&self) -> Option<BigRational> {
                BigRational::from_float(*self)
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn floor(&self) -> Self {
                <$f>::floor(*self)
            }

            fn is_finite(&self) -> bool {
                <$f>::is_finite(*self)
            }
        }
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

/// Parses `"p/q"` (or a bare integer `"p"`) into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational, ScalarError> {
    let t = text.trim();
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (t, "1"),
    };
    let n = BigInt::from_str_radix(num, 10).map_err(|_| ScalarError::Malformed(text.into()))?;
    let d = BigInt::from_str_radix(den, 10).map_err(|_| ScalarError::Malformed(text.into()))?;
    if d.is_zero() {
        return Err(ScalarError::ZeroDenominator(text.into()));
    }
    Ok(BigRational::new(n, d))
}

/// Formats a rational as `"p/q"`, always with an explicit denominator.
pub fn format_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Exact `"p/q"` rendering of any finite scalar.
pub fn scalar_to_string<S: Scalar>(x: &S) -> Result<String, ScalarError> {
    x.to_rational()
        .map(|r| format_rational(&r))
        .ok_or_else(|| ScalarError::NonFinite(format!("{x:?}")))
}

pub fn scalar_from_str<S: Scalar>(text: &str) -> Result<S, ScalarError> {
    parse_rational(text).map(|r| S::from_rational(&r))
}

/// Numerator and denominator strings of an exact rendering.
pub fn num_den<S: Scalar>(x: &S) -> (String, String) {
    match x.to_rational() {
        Some(r) => (r.numer().to_string(), r.denom().to_string()),
        None => ("NaN".into(), "1".into()),
    }
}

/// Least common multiple of the denominators of `values`.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a BigRational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// Best rational approximation of `x` with denominator at most `max_den`
/// (continued-fraction convergents and semiconvergents).
pub fn rational_approximation(x: f64, max_den: u64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    let exact = BigRational::from_float(x)?;
    let max_den = BigInt::from_u64(max_den.max(1))?;
    let (mut p0, mut q0, mut p1, mut q1) = (BigInt::zero(), BigInt::one(), BigInt::one(), BigInt::zero());
    let mut rem = exact.clone();
    loop {
        let a = rem.floor().to_integer();
        let q2 = &q0 + &a * &q1;
        if q2 > max_den {
            let k = (&max_den - &q0) / &q1;
            let cand = BigRational::new(&p0 + &k * &p1, &q0 + &k * &q1);
            let last = BigRational::new(p1.clone(), q1.clone());
            let best = if (&cand - &exact).abs() < (&last - &exact).abs() { cand } else { last };
            return Some(best);
        }
        let p2 = &p0 + &a * &p1;
        p0 = std::mem::replace(&mut p1, p2);
        q0 = std::mem::replace(&mut q1, q2);
        let frac = &rem - BigRational::from_integer(a);
        if frac.is_zero() {
            return Some(BigRational::new(p1, q1));
        }
        rem = frac.recip();
    }
}

/// Serde adapter storing a scalar as an exact `"p/q"` string.
pub mod as_rational_string {
    use super::*;

    pub fn serialize<S: Scalar, Ser: Serializer>(x: &S, ser: Ser) -> Result<Ser::Ok, Ser::Error> {
        let text = scalar_to_string(x).map_err(serde::ser::Error::custom)?;
        ser.serialize_str(&text)
    }

    pub fn deserialize<'de, S: Scalar, D: Deserializer<'de>>(de: D) -> Result<S, D::Error> {
        let text = String::deserialize(de)?;
        scalar_from_str(&text).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Vec<S>` as a list of `"p/q"` strings.
pub mod as_rational_strings {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Scalar, Ser: Serializer>(xs: &[S], ser: Ser) -> Result<Ser::Ok, Ser::Error> {
        let mut seq = ser.serialize_seq(Some(xs.len()))?;
        for x in xs {
            let text = scalar_to_string(x).map_err(serde::ser::Error::custom)?;
            seq.serialize_element(&text)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, S: Scalar, D: Deserializer<'de>>(de: D) -> Result<Vec<S>, D::Error> {
        let texts = Vec::<String>::deserialize(de)?;
        texts
            .iter()
            .map(|t| scalar_from_str(t).map_err(serde::de::Error::custom))
            .collect()
    }
}

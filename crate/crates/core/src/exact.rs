//! Exact scalars for exponent and weight bookkeeping.
//!
//! Exponents and stability weights are carried as Gaussian rationals whenever
//! the inputs are rational, so that integer-shift bookkeeping and slope
//! comparisons are decided exactly.  Residue linear algebra stays in floating
//! point; [`Scalar`] bridges the two worlds.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::Error;

/// Arbitrary-precision rational, re-exported for downstream signatures.
pub type Rational = BigRational;

/// Parse `"p/q"`, `"p"` or a decimal string into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, Error> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let num: BigInt = p
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("bad rational numerator in {s:?}")))?;
        let den: BigInt = q
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("bad rational denominator in {s:?}")))?;
        if den.is_zero() {
            return Err(Error::Validation(format!("zero denominator in {s:?}")));
        }
        Ok(BigRational::new(num, den))
    } else if let Ok(num) = s.parse::<BigInt>() {
        Ok(BigRational::from_integer(num))
    } else {
        Err(Error::Validation(format!("cannot parse {s:?} as a rational")))
    }
}

/// Format a rational as `p/q` (or `p` when integral).
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Floor of a rational as an exact integer.
pub fn rational_floor(r: &Rational) -> BigInt {
    r.floor().to_integer()
}

/// A Gaussian rational `re + im·i` with exact arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GaussRational {
    pub re: Rational,
    pub im: Rational,
}

impl GaussRational {
    pub fn new(re: Rational, im: Rational) -> Self {
        GaussRational { re, im }
    }

    pub fn from_integer(k: i64) -> Self {
        GaussRational { re: BigRational::from_integer(k.into()), im: BigRational::zero() }
    }

    pub fn zero() -> Self {
        Self::from_integer(0)
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    /// True iff this is an exact (real) integer.
    pub fn is_integer(&self) -> bool {
        self.is_real() && self.re.denom().is_one()
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::new(
            self.re.to_f64().unwrap_or(f64::NAN),
            self.im.to_f64().unwrap_or(f64::NAN),
        )
    }
}

impl fmt::Display for GaussRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", format_rational(&self.re))
        } else if self.im.is_negative() {
            write!(f, "{}{}i", format_rational(&self.re), format_rational(&self.im))
        } else {
            write!(f, "{}+{}i", format_rational(&self.re), format_rational(&self.im))
        }
    }
}

impl Add for GaussRational {
    type Output = GaussRational;
    fn add(self, rhs: Self) -> Self {
        GaussRational { re: self.re + rhs.re, im: self.im + rhs.im }
    }
}

impl Sub for GaussRational {
    type Output = GaussRational;
    fn sub(self, rhs: Self) -> Self {
        GaussRational { re: self.re - rhs.re, im: self.im - rhs.im }
    }
}

impl Neg for GaussRational {
    type Output = GaussRational;
    fn neg(self) -> Self {
        GaussRational { re: -self.re, im: -self.im }
    }
}

impl Mul for GaussRational {
    type Output = GaussRational;
    fn mul(self, rhs: Self) -> Self {
        GaussRational {
            re: self.re.clone() * rhs.re.clone() - self.im.clone() * rhs.im.clone(),
            im: self.re * rhs.im + self.im * rhs.re,
        }
    }
}

/// An exponent entry: exact when the input was rational, floating otherwise.
///
/// Arithmetic stays exact as long as both operands are exact and degrades to
/// floating point otherwise; `is_exact` tells callers which regime a value is
/// in so that integer decisions (windows, degree shifts) can be made honestly.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Exact(GaussRational),
    Approx(Complex64),
}

impl Scalar {
    pub fn from_f64(x: f64) -> Self {
        Scalar::Approx(Complex64::new(x, 0.0))
    }

    pub fn from_complex(z: Complex64) -> Self {
        Scalar::Approx(z)
    }

    pub fn from_rational(r: Rational) -> Self {
        Scalar::Exact(GaussRational::new(r, BigRational::zero()))
    }

    pub fn from_integer(k: i64) -> Self {
        Scalar::Exact(GaussRational::from_integer(k))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn value(&self) -> Complex64 {
        match self {
            Scalar::Exact(g) => g.to_complex(),
            Scalar::Approx(z) => *z,
        }
    }

    pub fn re(&self) -> f64 {
        self.value().re
    }

    /// Shift by an integer, exactly in exact mode.
    pub fn add_integer(&self, k: i64) -> Scalar {
        match self {
            Scalar::Exact(g) => Scalar::Exact(g.clone() + GaussRational::from_integer(k)),
            Scalar::Approx(z) => Scalar::Approx(z + Complex64::new(k as f64, 0.0)),
        }
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a.clone() + b.clone()),
            _ => Scalar::Approx(self.value() + other.value()),
        }
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a.clone() - b.clone()),
            _ => Scalar::Approx(self.value() - other.value()),
        }
    }

    /// Floor of the real part.  Exact in exact mode.
    pub fn re_floor(&self) -> i64 {
        match self {
            Scalar::Exact(g) => rational_floor(&g.re).to_i64().unwrap_or(0),
            Scalar::Approx(z) => z.re.floor() as i64,
        }
    }

    /// Distance to the nearest Gaussian integer, `None` when exactly integral.
    pub fn integer_distance(&self) -> f64 {
        match self {
            Scalar::Exact(g) => {
                if g.is_integer() {
                    0.0
                } else {
                    let z = g.to_complex();
                    (z.re - z.re.round()).hypot(z.im)
                }
            }
            Scalar::Approx(z) => (z.re - z.re.round()).hypot(z.im),
        }
    }

    /// True iff the value is an integer: exactly for exact scalars, within
    /// `tol` for approximate ones.
    pub fn is_integer_within(&self, tol: f64) -> bool {
        match self {
            Scalar::Exact(g) => g.is_integer(),
            Scalar::Approx(_) => self.integer_distance() <= tol,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(g) => write!(f, "{g}"),
            Scalar::Approx(z) => write!(f, "{z}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_formats_rationals() {
        let r = parse_rational("3/4").unwrap();
        assert_eq!(format_rational(&r), "3/4");
        let r = parse_rational("-2").unwrap();
        assert_eq!(format_rational(&r), "-2");
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn exact_integer_shift_is_exact() {
        let half = Scalar::from_rational(parse_rational("1/2").unwrap());
        let shifted = half.add_integer(3);
        match shifted {
            Scalar::Exact(g) => assert_eq!(format_rational(&g.re), "7/2"),
            _ => panic!("lost exactness"),
        }
    }

    #[test]
    fn floors_match_f64_on_floats() {
        let s = Scalar::from_f64(-1.25);
        assert_eq!(s.re_floor(), -2);
        let s = Scalar::from_rational(parse_rational("-5/4").unwrap());
        assert_eq!(s.re_floor(), -2);
    }

    #[test]
    fn integer_detection() {
        assert!(Scalar::from_integer(4).is_integer_within(0.0));
        assert!(!Scalar::from_rational(parse_rational("1/3").unwrap()).is_integer_within(1e-9));
        assert!(Scalar::from_f64(2.0 + 1e-12).is_integer_within(1e-9));
    }
}

//! Exact scalars of the base field and their canonical textual form.
//!
//! Every scalar is an arbitrary-precision rational. The canonical wire
//! form is base-10 `"num/den"` with `den > 0` and `gcd(num, den) = 1`;
//! this string appears verbatim in every JSON schema of the lab.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub type Scalar = BigRational;

pub fn rat_i64(n: i64, d: i64) -> Scalar {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Scalar {
    BigRational::from(BigInt::from(n))
}

/// Canonical form: always `"num/den"`, reduced, positive denominator.
pub fn format_rational(x: &Scalar) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// Accepts `"num/den"` or a bare integer `"num"`.
pub fn parse_rational(s: &str) -> Result<Scalar> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: BigInt = num
        .parse()
        .map_err(|_| Error::invalid_input(format!("bad rational numerator {num:?}")))?;
    let d: BigInt = den
        .parse()
        .map_err(|_| Error::invalid_input(format!("bad rational denominator {den:?}")))?;
    if d.is_zero() {
        return Err(Error::invalid_input("rational with zero denominator"));
    }
    Ok(BigRational::new(n, d))
}

/// p^exp as an exact rational, for any sign of `exp`.
pub fn prime_power(p: u32, exp: i64) -> Scalar {
    let base = BigInt::from(p);
    if exp >= 0 {
        BigRational::from(base.pow(exp as u32))
    } else {
        BigRational::new(BigInt::one(), base.pow((-exp) as u32))
    }
}

/// Exact square root of a nonnegative rational, if it is a perfect square.
pub fn exact_sqrt(x: &Scalar) -> Option<Scalar> {
    if x.is_negative() {
        return None;
    }
    let n = x.numer().sqrt();
    let d = x.denom().sqrt();
    if &(&n * &n) == x.numer() && &(&d * &d) == x.denom() {
        Some(BigRational::new(n, d))
    } else {
        None
    }
}

pub fn to_f64(x: &Scalar) -> f64 {
    num_traits::ToPrimitive::to_f64(x).unwrap_or(f64::NAN)
}

//! p-adic valuations and norms on exact rationals.
//!
//! The base field is the completion of ℚ under |x|_p = p^{-v_p(x)}; the
//! lab works in the dense subfield of rationals, where every valuation is
//! computed exactly by stripping prime factors. The ultrametric inequality
//! v(x + y) ≥ min(v(x), v(y)) is what makes ball geometry decidable.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::scalar::{prime_power, Scalar};

/// Validated prime context for the base field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prime(u32);

impl Prime {
    pub fn new(p: u32) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidPrime(p));
        }
        let mut d = 2u32;
        while d.saturating_mul(d) <= p {
            if p.is_multiple_of(d) {
                return Err(Error::InvalidPrime(p));
            }
            d += 1;
        }
        Ok(Prime(p))
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    pub fn same_as(self, other: Prime) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::PrimeMismatch {
                left: self.0,
                right: other.0,
            })
        }
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// v_p(x), with the zero scalar mapped to the +∞ sentinel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Valuation::Infinite)
    }

    /// True when v_p(x) ≥ bound, i.e. x lies in p^bound · Z_p.
    pub fn at_least(self, bound: i64) -> bool {
        match self {
            Valuation::Finite(v) => v >= bound,
            Valuation::Infinite => true,
        }
    }
}

impl PartialOrd for Valuation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Valuation {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Valuation::Infinite, Valuation::Infinite) => Ordering::Equal,
            (Valuation::Infinite, Valuation::Finite(_)) => Ordering::Greater,
            (Valuation::Finite(_), Valuation::Infinite) => Ordering::Less,
            (Valuation::Finite(a), Valuation::Finite(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinite => write!(f, "inf"),
        }
    }
}

fn int_valuation(p: u32, n: &BigInt) -> Option<i64> {
    if n.is_zero() {
        return None;
    }
    let p = BigInt::from(p);
    let mut v = 0i64;
    let mut cur = n.clone();
    loop {
        let (q, r) = cur.div_rem(&p);
        if r.is_zero() {
            v += 1;
            cur = q;
        } else {
            return Some(v);
        }
    }
}

/// Exact p-adic valuation of a rational.
pub fn valuation(p: Prime, x: &Scalar) -> Valuation {
    if x.is_zero() {
        return Valuation::Infinite;
    }
    let vn = int_valuation(p.get(), x.numer()).expect("nonzero numer");
    let vd = int_valuation(p.get(), x.denom()).expect("nonzero denom");
    Valuation::Finite(vn - vd)
}

/// |x|_p = p^{-v_p(x)} as an exact rational; |0|_p = 0.
pub fn norm(p: Prime, x: &Scalar) -> Scalar {
    match valuation(p, x) {
        Valuation::Infinite => Scalar::zero(),
        Valuation::Finite(v) => prime_power(p.get(), -v),
    }
}

fn mod_inverse(a: u64, p: u64) -> u64 {
    // Fermat: a^(p-2) mod p for prime p.
    let mut base = a % p;
    let mut exp = p - 2;
    let mut acc = 1u64;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % p;
        }
        base = base * base % p;
        exp >>= 1;
    }
    acc
}

fn big_mod_u64(x: &BigInt, p: u64) -> u64 {
    let m = x.mod_floor(&BigInt::from(p));
    m.to_u64().expect("mod_floor of positive modulus fits")
}

/// Leading digit of a p-adic unit u (v_p(u) = 0): u mod p ∈ {1, …, p−1}.
fn unit_digit(p: Prime, u: &Scalar) -> u64 {
    let pp = p.get() as u64;
    let a = big_mod_u64(u.numer(), pp);
    let b = big_mod_u64(u.denom(), pp);
    debug_assert!(a != 0 && b != 0, "unit_digit on non-unit");
    a * mod_inverse(b, pp) % pp
}

/// Truncate the p-adic digit expansion of `x` strictly below position
/// `cut`: returns r = Σ_{i < cut} d_i p^i with v_p(x − r) ≥ cut.
///
/// This is the canonical representative of x modulo p^cut · Z_p; ball
/// centers are stored in this form so that structural equality coincides
/// with ball equality.
pub fn truncate_digits(p: Prime, x: &Scalar, cut: i64) -> Scalar {
    let mut rest = x.clone();
    let mut out = Scalar::zero();
    loop {
        let v = match valuation(p, &rest) {
            Valuation::Infinite => break,
            Valuation::Finite(v) => v,
        };
        if v >= cut {
            break;
        }
        let unit = &rest / prime_power(p.get(), v);
        let d = unit_digit(p, &unit);
        let term = Scalar::from(BigInt::from(d)) * prime_power(p.get(), v);
        out += &term;
        rest -= term;
    }
    out
}

//! Exact rational arithmetic helpers.
//!
//! All probabilities in this crate are arbitrary-precision rationals.
//! `num_rational::BigRational` already keeps values in canonical reduced
//! form with a positive denominator, which is exactly the invariant we
//! need, so the crate re-exports it and adds the handful of constructors
//! and formatting routines used everywhere else.

use crate::{Error, Result};
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rat = num_rational::BigRational;

/// Rational from an integer pair. Panics on a zero denominator.
pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(num: i64) -> Rat {
    Rat::from_integer(BigInt::from(num))
}

pub fn zero() -> Rat {
    Rat::zero()
}

pub fn one() -> Rat {
    Rat::one()
}

pub fn half() -> Rat {
    rat(1, 2)
}

pub fn is_probability(r: &Rat) -> bool {
    !r.is_negative() && *r <= Rat::one()
}

pub fn pow(r: &Rat, k: usize) -> Rat {
    let mut acc = Rat::one();
    for _ in 0..k {
        acc *= r;
    }
    acc
}

/// Formats as `num/den`, the form used in reports and tree files.
pub fn format_ratio(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `num/den` or a bare integer.
pub fn parse_ratio(s: &str) -> Result<Rat> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let numer: BigInt = n
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational numerator {n:?}")))?;
    let denom: BigInt = d
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational denominator {d:?}")))?;
    if denom.is_zero() {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    Ok(Rat::new(numer, denom))
}

/// Decimal approximation with 12 significant digits, for CSV output only.
pub fn approx_decimal(r: &Rat) -> String {
    match r.to_f64() {
        Some(v) => format!("{v:.11e}"),
        None => {
            // Fall back to a scaled integer division for extreme values.
            let scaled = (r * Rat::from_integer(BigInt::from(10u64.pow(12)))).to_integer();
            format!("{scaled}e-12")
        }
    }
}

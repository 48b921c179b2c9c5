//! Exact rational helpers.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub type Q = BigRational;

pub fn q(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// `2^e` for any integer exponent.
pub fn pow2(e: i64) -> Q {
    let p = BigInt::one() << e.unsigned_abs();
    if e >= 0 {
        Q::from_integer(p)
    } else {
        Q::new(BigInt::one(), p)
    }
}

pub fn pow(x: &Q, e: u32) -> Q {
    num_traits::pow(x.clone(), e as usize)
}

/// Parse `"p/q"`, an integer, or a finite decimal such as `"0.7"`.
pub fn parse_q(s: &str) -> Result<Q> {
    let bad = || Error::BadRational(s.to_string());
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Q::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches('-'), frac);
        let n: BigInt = digits.parse().map_err(|_| bad())?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        let v = Q::new(n, d);
        return Ok(if neg { -v } else { v });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Q::from_integer(n))
}

pub fn from_parts(num: &str, den: &str) -> Result<Q> {
    let bad = || Error::BadRational(format!("{num}/{den}"));
    let n: BigInt = num.parse().map_err(|_| bad())?;
    let d: BigInt = den.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(Q::new(n, d))
}

pub fn to_wire(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Smallest `k >= 0` with `2^-k <= r`, i.e. `ceil(-log2 r)` clamped at zero.
/// `None` for `r <= 0`.
pub fn ceil_neg_log2(r: &Q) -> Option<u64> {
    if !r.is_positive() {
        return None;
    }
    if *r >= Q::one() {
        return Some(0);
    }
    // 2^-k <= n/d  <=>  d <= n * 2^k
    let n = r.numer();
    let d = r.denom();
    let mut k = d.bits().saturating_sub(n.bits()).saturating_sub(1);
    while (n << k) < *d {
        k += 1;
    }
    Some(k)
}

/// `floor(log2 x)` for positive `x`.
pub fn floor_log2(x: &Q) -> i64 {
    debug_assert!(x.is_positive());
    let n = x.numer();
    let d = x.denom();
    let mut e = n.bits() as i64 - d.bits() as i64;
    // 2^e <= x < 2^(e+1)
    loop {
        let p = pow2(e);
        if p > *x {
            e -= 1;
        } else if pow2(e + 1) <= *x {
            e += 1;
        } else {
            return e;
        }
    }
}

/// Serde adapter writing a rational as its `"p/q"` wire string.
pub mod q_str {
    use super::{parse_q, to_wire, Q};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_wire(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        let s = String::deserialize(d)?;
        parse_q(&s).map_err(serde::de::Error::custom)
    }
}

/// As [`q_str`] for vectors.
pub mod q_vec {
    use super::{parse_q, to_wire, Q};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(xs: &[Q], s: S) -> Result<S::Ok, S::Error> {
        xs.iter().map(to_wire).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Q>, D::Error> {
        Vec::<String>::deserialize(d)?.iter().map(|s| parse_q(s).map_err(serde::de::Error::custom)).collect()
    }
}

//! Outward-rounded interval arithmetic over dyadic rationals.
//!
//! Endpoints are exact rationals. After every operation they are rounded
//! outward to `prec` significant bits, so an interval always encloses the real
//! value it stands for. Comparisons return `None` when the enclosures overlap;
//! callers retry at higher precision through [`decide`].

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{floor_log2, pow2, to_wire, Q};

pub const DEFAULT_PREC: u32 = 256;
pub const MAX_PREC: u32 = 4096;

#[derive(Clone, PartialEq, Eq)]
pub struct Interval {
    lo: Q,
    hi: Q,
}

/// Round a rational down (`up = false`) or up to `prec` significant bits.
pub fn round_to(x: &Q, prec: u32, up: bool) -> Q {
    if x.is_zero() {
        return Q::zero();
    }
    if x.is_negative() {
        return -round_to(&-x, prec, !up);
    }
    let e = floor_log2(x);
    let shift = prec as i64 - 1 - e;
    let scaled = x * pow2(shift);
    let m = if up { scaled.ceil() } else { scaled.floor() };
    m * pow2(-shift)
}

fn root_bound(x: &Q, n: u32, prec: u32, up: bool) -> Q {
    if x.is_zero() {
        return Q::zero();
    }
    debug_assert!(x.is_positive());
    // result ~ 2^(e/n); keep prec bits after the binary point of that scale
    let e = floor_log2(x);
    let k = (prec as i64 - e.div_euclid(n as i64) + 2).max(0) as u64;
    // y = x * 2^(n k); root(y) / 2^k
    let y = x * pow2((n as u64 * k) as i64);
    let r = if up {
        let c = y.ceil().to_integer();
        let r = c.nth_root(n);
        if num_traits::pow(r.clone(), n as usize) < c {
            r + BigInt::one()
        } else {
            r
        }
    } else {
        y.floor().to_integer().nth_root(n)
    };
    Q::new(r, BigInt::one() << k)
}

fn log2_bound(x: &Q, bits: u32, prec: u32, up: bool) -> Q {
    debug_assert!(x.is_positive());
    let e = floor_log2(x);
    let mut y = x * pow2(-e);
    let two = Q::from_integer(BigInt::from(2));
    let mut acc = Q::from_integer(BigInt::from(e));
    let mut unit = Q::one();
    for _ in 0..bits {
        unit /= &two;
        y = round_to(&(&y * &y), prec, up);
        if y >= two {
            acc += &unit;
            y /= &two;
        }
    }
    if up {
        acc + unit
    } else {
        acc
    }
}

impl Interval {
    pub fn new(lo: Q, hi: Q) -> Self {
        assert!(lo <= hi, "interval endpoints out of order");
        Interval { lo, hi }
    }

    pub fn point(x: Q) -> Self {
        Interval { lo: x.clone(), hi: x }
    }

    pub fn zero() -> Self {
        Interval::point(Q::zero())
    }

    pub fn one() -> Self {
        Interval::point(Q::one())
    }

    pub fn lo(&self) -> &Q {
        &self.lo
    }

    pub fn hi(&self) -> &Q {
        &self.hi
    }

    pub fn width(&self) -> Q {
        &self.hi - &self.lo
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &Q) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn is_nonneg(&self) -> bool {
        !self.lo.is_negative()
    }

    fn rounded(lo: Q, hi: Q, prec: u32) -> Self {
        Interval { lo: round_to(&lo, prec, false), hi: round_to(&hi, prec, true) }
    }

    pub fn round(&self, prec: u32) -> Self {
        Interval::rounded(self.lo.clone(), self.hi.clone(), prec)
    }

    pub fn add(&self, o: &Interval, prec: u32) -> Self {
        Interval::rounded(&self.lo + &o.lo, &self.hi + &o.hi, prec)
    }

    pub fn sub(&self, o: &Interval, prec: u32) -> Self {
        Interval::rounded(&self.lo - &o.hi, &self.hi - &o.lo, prec)
    }

    pub fn neg(&self) -> Self {
        Interval { lo: -&self.hi, hi: -&self.lo }
    }

    pub fn mul(&self, o: &Interval, prec: u32) -> Self {
        if self.is_nonneg() && o.is_nonneg() {
            return Interval::rounded(&self.lo * &o.lo, &self.hi * &o.hi, prec);
        }
        let c = [&self.lo * &o.lo, &self.lo * &o.hi, &self.hi * &o.lo, &self.hi * &o.hi];
        let lo = c.iter().min().unwrap().clone();
        let hi = c.iter().max().unwrap().clone();
        Interval::rounded(lo, hi, prec)
    }

    pub fn mul_q(&self, k: &Q, prec: u32) -> Self {
        self.mul(&Interval::point(k.clone()), prec)
    }

    /// Division by an interval that excludes zero.
    pub fn div(&self, o: &Interval, prec: u32) -> Result<Self> {
        if o.contains(&Q::zero()) {
            return Err(Error::Certification("interval division by an enclosure of zero".into()));
        }
        let inv =
            Interval { lo: round_to(&(Q::one() / &o.hi), prec, false), hi: round_to(&(Q::one() / &o.lo), prec, true) };
        Ok(self.mul(&inv, prec))
    }

    pub fn square(&self, prec: u32) -> Self {
        if self.is_nonneg() {
            Interval::rounded(&self.lo * &self.lo, &self.hi * &self.hi, prec)
        } else if !self.hi.is_positive() {
            Interval::rounded(&self.hi * &self.hi, &self.lo * &self.lo, prec)
        } else {
            let m = std::cmp::max(-&self.lo, self.hi.clone());
            Interval::rounded(Q::zero(), &m * &m, prec)
        }
    }

    pub fn powi(&self, e: u32, prec: u32) -> Self {
        let mut acc = Interval::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base, prec);
            }
            base = base.mul(&base, prec);
            e >>= 1;
        }
        acc
    }

    /// Square root of a nonnegative interval; negative lower ends clamp to 0.
    pub fn sqrt(&self, prec: u32) -> Self {
        self.nth_root(2, prec)
    }

    pub fn nth_root(&self, n: u32, prec: u32) -> Self {
        assert!(n >= 1);
        assert!(!self.hi.is_negative(), "root of a negative interval");
        let lo = if self.lo.is_positive() { root_bound(&self.lo, n, prec, false) } else { Q::zero() };
        Interval { lo, hi: root_bound(&self.hi, n, prec, true) }
    }

    /// `x^(p/q)` for a nonnegative interval and positive rational exponent.
    pub fn pow_ratio(&self, p: u32, q: u32, prec: u32) -> Self {
        let num = self.powi(p, prec + 16);
        if q == 1 {
            num.round(prec)
        } else {
            num.nth_root(q, prec)
        }
    }

    pub fn log2(&self, bits: u32, prec: u32) -> Self {
        assert!(self.lo.is_positive(), "log2 of a non-positive interval");
        Interval { lo: log2_bound(&self.lo, bits, prec, false), hi: log2_bound(&self.hi, bits, prec, true) }
    }

    pub fn max(&self, o: &Interval) -> Self {
        Interval { lo: std::cmp::max(&self.lo, &o.lo).clone(), hi: std::cmp::max(&self.hi, &o.hi).clone() }
    }

    pub fn min(&self, o: &Interval) -> Self {
        Interval { lo: std::cmp::min(&self.lo, &o.lo).clone(), hi: std::cmp::min(&self.hi, &o.hi).clone() }
    }

    /// Smallest interval containing both.
    pub fn hull(&self, o: &Interval) -> Self {
        Interval { lo: std::cmp::min(&self.lo, &o.lo).clone(), hi: std::cmp::max(&self.hi, &o.hi).clone() }
    }

    /// `Some(true)` if certainly `self <= o`, `Some(false)` if certainly
    /// `self > o`, `None` when the enclosures overlap.
    pub fn le(&self, o: &Interval) -> Option<bool> {
        if self.hi <= o.lo {
            Some(true)
        } else if self.lo > o.hi {
            Some(false)
        } else {
            None
        }
    }

    /// Certainly-strict comparison: `Some(true)` if `self < o` surely.
    pub fn lt(&self, o: &Interval) -> Option<bool> {
        if self.hi < o.lo {
            Some(true)
        } else if self.lo >= o.hi {
            Some(false)
        } else {
            None
        }
    }

    pub fn cmp_q(&self, x: &Q) -> Option<Ordering> {
        if &self.hi < x {
            Some(Ordering::Less)
        } else if &self.lo > x {
            Some(Ordering::Greater)
        } else if self.is_point() {
            Some(Ordering::Equal)
        } else {
            None
        }
    }

    pub fn midpoint_f64(&self) -> f64 {
        use num_traits::ToPrimitive;
        ((&self.lo + &self.hi) / Q::from_integer(BigInt::from(2))).to_f64().unwrap_or(f64::NAN)
    }

    /// Split at the midpoint.
    pub fn bisect(&self) -> (Interval, Interval) {
        let mid = (&self.lo + &self.hi) / Q::from_integer(BigInt::from(2));
        (Interval { lo: self.lo.clone(), hi: mid.clone() }, Interval { lo: mid, hi: self.hi.clone() })
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use num_traits::ToPrimitive;
        write!(f, "[{:.17e}, {:.17e}]", self.lo.to_f64().unwrap_or(f64::NAN), self.hi.to_f64().unwrap_or(f64::NAN))
    }
}

/// Wire form: `[lo, hi]` as rational strings plus the rounding mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub lo: String,
    pub hi: String,
    pub rounding: String,
    pub approx: f64,
}

impl From<&Interval> for IntervalRecord {
    fn from(i: &Interval) -> Self {
        IntervalRecord {
            lo: to_wire(&i.lo),
            hi: to_wire(&i.hi),
            rounding: "outward".to_string(),
            approx: i.midpoint_f64(),
        }
    }
}

/// Shared constants, evaluated once per precision.
#[derive(Debug, Clone)]
pub struct Constants {
    pub prec: u32,
    pub sqrt2: Interval,
    pub inv_sqrt2: Interval,
}

impl Constants {
    pub fn new(prec: u32) -> Self {
        let two = Interval::point(Q::from_integer(BigInt::from(2)));
        let sqrt2 = two.sqrt(prec);
        let inv_sqrt2 = Interval::one().div(&sqrt2, prec).expect("sqrt 2 is positive");
        Constants { prec, sqrt2, inv_sqrt2 }
    }
}

/// Run `attempt` at doubling precision until it returns a decision.
pub fn decide<F>(start: u32, max: u32, what: &str, mut attempt: F) -> Result<bool>
where
    F: FnMut(u32) -> Option<bool>,
{
    let mut prec = start.max(8);
    loop {
        if let Some(d) = attempt(prec) {
            return Ok(d);
        }
        if prec >= max {
            return Err(Error::PrecisionExhausted { bits: prec, what: what.to_string() });
        }
        prec = (prec * 2).min(max);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{q, qi};

    #[test]
    fn rounding_is_outward() {
        let third = q(1, 3);
        let lo = round_to(&third, 20, false);
        let hi = round_to(&third, 20, true);
        assert!(lo < third && third < hi);
        assert!(&hi - &lo <= pow2(-21));
        assert_eq!(round_to(&q(3, 4), 20, true), q(3, 4));
        assert_eq!(round_to(&q(-1, 3), 20, false), -round_to(&q(1, 3), 20, true));
    }

    #[test]
    fn sqrt_encloses() {
        let two = Interval::point(qi(2));
        let s = two.sqrt(128);
        assert!(s.lo() * s.lo() <= qi(2));
        assert!(s.hi() * s.hi() >= qi(2));
        assert!(s.width() < pow2(-120));
        let four = Interval::point(qi(4)).sqrt(64);
        assert!(four.contains(&qi(2)));
        assert_eq!(Interval::zero().sqrt(64), Interval::zero());
    }

    #[test]
    fn cube_root_and_ratio_powers() {
        let x = Interval::point(q(1, 8));
        let r = x.nth_root(3, 96);
        assert!(r.contains(&q(1, 2)));
        // (7/8)^(3/2)
        let p = Interval::point(q(7, 8)).pow_ratio(3, 2, 128);
        let sq = p.square(200);
        assert!(sq.contains(&num_traits::pow(q(7, 8), 3)));
    }

    #[test]
    fn log2_brackets() {
        let x = Interval::point(q(1, 2));
        let l = x.log2(64, 128);
        assert!(l.contains(&qi(-1)));
        let y = Interval::point(q(3, 4)).log2(60, 160);
        // log2(0.75) = -0.41503749927884381...
        assert!(y.lo() < &q(-41503749927, 100000000000));
        assert!(y.hi() > &q(-41503749928, 100000000000));
        assert!(y.width() < pow2(-50));
    }

    #[test]
    fn comparisons() {
        let a = Interval::new(q(1, 3), q(1, 2));
        let b = Interval::new(q(2, 3), qi(1));
        assert_eq!(a.le(&b), Some(true));
        assert_eq!(b.le(&a), Some(false));
        let c = Interval::new(q(1, 4), q(3, 4));
        assert_eq!(a.le(&c), None);
    }

    #[test]
    fn escalation_gives_up() {
        let r = decide(16, 64, "never", |_| None);
        assert!(matches!(r, Err(Error::PrecisionExhausted { .. })));
        let r = decide(16, 64, "late", |p| if p >= 64 { Some(true) } else { None });
        assert!(r.unwrap());
    }

    #[test]
    fn division_rejects_zero() {
        let a = Interval::one();
        assert!(a.div(&Interval::new(q(-1, 2), q(1, 2)), 64).is_err());
        let d = a.div(&Interval::point(qi(3)), 64).unwrap();
        assert!(d.contains(&q(1, 3)));
    }
}

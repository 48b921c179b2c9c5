//! The mixed norms `oi` and `io`.
//!
//! For a one-dimensional vector both equal the single entry. Otherwise
//! `oi(u) = max(io(u-), io(u+))` and `io(u) = oi(u-) + oi(u+)` over the two
//! halves. They are the root values of the smallest even (`oi`) and odd
//! (`io`) online semimeasures above a leaf vector.

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::num::Q;

fn check_dim(len: usize) -> Result<()> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    Ok(())
}

fn fold_q(u: &[Q], max_first: bool) -> Q {
    if u.len() == 1 {
        return u[0].clone();
    }
    let (l, r) = u.split_at(u.len() / 2);
    let (a, b) = (fold_q(l, !max_first), fold_q(r, !max_first));
    if max_first {
        a.max(b)
    } else {
        a + b
    }
}

fn fold_iv(u: &[Interval], max_first: bool, prec: u32) -> Interval {
    if u.len() == 1 {
        return u[0].clone();
    }
    let (l, r) = u.split_at(u.len() / 2);
    let (a, b) = (fold_iv(l, !max_first, prec), fold_iv(r, !max_first, prec));
    if max_first {
        a.max(&b)
    } else {
        a.add(&b, prec)
    }
}

pub fn norm_oi(u: &[Q]) -> Result<Q> {
    check_dim(u.len())?;
    Ok(fold_q(u, true))
}

pub fn norm_io(u: &[Q]) -> Result<Q> {
    check_dim(u.len())?;
    Ok(fold_q(u, false))
}

pub fn norm_oi_iv(u: &[Interval], prec: u32) -> Result<Interval> {
    check_dim(u.len())?;
    Ok(fold_iv(u, true, prec))
}

pub fn norm_io_iv(u: &[Interval], prec: u32) -> Result<Interval> {
    check_dim(u.len())?;
    Ok(fold_iv(u, false, prec))
}

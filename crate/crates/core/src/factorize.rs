//! Splitting a computable semimeasure into an odd and an even online factor.
//!
//! Walking down two bits at a time from an even-depth node `x` with
//! `gamma = P(x)` and `alpha = P_ev(x)`:
//!
//! ```text
//! P_odd(x0) = P_odd(x00) = P_odd(x01) = P(x0) / alpha     (likewise for x1)
//! P_ev(x0)  = P_ev(x1)   = alpha
//! P_ev(xbc) = alpha * P(xbc) / P(xb)
//! ```
//!
//! so `P_odd * P_ev = P` at every even-depth node.

use num_traits::{One, Zero};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::num::Q;
use crate::semimeasure::{MassAssignment, OnlineConstraint, OnlineMassAssignment};

/// Odd and even online factors of a semimeasure.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub odd: OnlineMassAssignment,
    pub even: OnlineMassAssignment,
}

/// Factor `p` (absent nodes read as 0) on all strings up to the even `depth`.
pub fn factorize_computable(p: &MassAssignment, depth: usize) -> Result<Factorization> {
    if !depth.is_multiple_of(2) {
        return Err(Error::BadDepth(depth, "factorization depth must be even"));
    }
    if let Some(v) = p.validate().into_iter().next() {
        return Err(Error::BadParameter(format!("input is not a semimeasure: {v}")));
    }
    let mut odd = OnlineMassAssignment::new(OnlineConstraint::odd());
    let mut even = OnlineMassAssignment::new(OnlineConstraint::even());
    let root = BitString::empty();
    odd.set(root.clone(), p.get(&root));
    even.set(root, Q::one());

    let mut frontier = vec![BitString::empty()];
    for _ in 0..depth / 2 {
        let mut next = Vec::with_capacity(frontier.len() * 4);
        for x in frontier {
            let gamma = p.get(&x);
            let alpha = even.value(&x);
            let kids = [x.child(false), x.child(true)];
            let masses = [p.get(&kids[0]), p.get(&kids[1])];
            if gamma.is_zero() && masses.iter().any(|m| !m.is_zero()) {
                return Err(Error::ZeroParentMass(x));
            }
            for (b, xb) in kids.iter().enumerate() {
                let e = &masses[b];
                let po = if alpha.is_zero() { Q::zero() } else { e / &alpha };
                odd.set(xb.clone(), po.clone());
                even.set(xb.clone(), alpha.clone());
                for c in [false, true] {
                    let xbc = xb.child(c);
                    let m = p.get(&xbc);
                    if e.is_zero() && !m.is_zero() {
                        return Err(Error::ZeroParentMass(xb.clone()));
                    }
                    odd.set(xbc.clone(), po.clone());
                    let pe = if e.is_zero() { Q::zero() } else { &alpha * m / e };
                    even.set(xbc.clone(), pe);
                    next.push(xbc);
                }
            }
        }
        frontier = next;
    }
    Ok(Factorization { odd, even })
}

/// First even-depth node (up to `depth`) where `odd * even != p`.
pub fn product_mismatch(p: &MassAssignment, f: &Factorization, depth: usize) -> Option<BitString> {
    (0..=depth).step_by(2).flat_map(BitString::all_of_length).find(|x| f.odd.value(x) * f.even.value(x) != p.get(x))
}

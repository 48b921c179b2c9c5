//! Exact semimeasure trees and online constraints.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::num::{to_wire, Q};

/// Which depths carry the sum rule for an online semimeasure.
///
/// Children at depth `d` obey `P(x0) + P(x1) <= P(x)` when `d = residue (mod
/// modulus)` and copy their parent's value otherwise. Even is `(2, 2)`, odd is
/// `(2, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OnlineConstraint {
    modulus: usize,
    residue: usize,
}

impl OnlineConstraint {
    pub fn new(modulus: usize, residue: usize) -> Result<Self> {
        if modulus < 2 || residue == 0 || residue > modulus {
            return Err(Error::BadConstraint { modulus, residue });
        }
        Ok(OnlineConstraint { modulus, residue })
    }

    pub fn even() -> Self {
        OnlineConstraint { modulus: 2, residue: 2 }
    }

    pub fn odd() -> Self {
        OnlineConstraint { modulus: 2, residue: 1 }
    }

    pub fn modulus(&self) -> usize {
        self.modulus
    }

    pub fn residue(&self) -> usize {
        self.residue
    }

    pub fn is_even(&self) -> bool {
        *self == Self::even()
    }

    pub fn is_odd(&self) -> bool {
        *self == Self::odd()
    }

    /// Whether children at depth `depth` (>= 1) use the sum rule.
    pub fn is_sum_depth(&self, depth: usize) -> bool {
        depth % self.modulus == self.residue % self.modulus
    }

    /// The constraint seen by strings hanging below a fixed prefix of length
    /// `m`: relative depth `d` is absolute depth `m + d`.
    pub fn shifted(&self, m: usize) -> Self {
        let k = self.modulus;
        let r = (self.residue + k - m % k) % k;
        OnlineConstraint { modulus: k, residue: if r == 0 { k } else { r } }
    }
}

impl fmt::Display for OnlineConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_even() {
            write!(f, "even")
        } else if self.is_odd() {
            write!(f, "odd")
        } else {
            write!(f, "{} mod {}", self.residue, self.modulus)
        }
    }
}

impl FromStr for OnlineConstraint {
    type Err = Error;

    /// Accepts `even`, `odd` or `i mod k`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "even" => return Ok(Self::even()),
            "odd" => return Ok(Self::odd()),
            _ => {}
        }
        let bad = || Error::BadParameter(format!("online constraint {s:?}"));
        let (i, k) = s.split_once("mod").ok_or_else(bad)?;
        let i: usize = i.trim().parse().map_err(|_| bad())?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        Self::new(k, i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Negative,
    RootAboveOne,
    SumRule,
    CopyRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub node: BitString,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.rule, self.node, self.detail)
    }
}

/// Partial map from nodes to nonnegative rationals; absent nodes are 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MassAssignment {
    entries: BTreeMap<BitString, Q>,
}

impl MassAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (BitString, Q)>) -> Self {
        MassAssignment { entries: entries.into_iter().collect() }
    }

    /// `value(x) = 2^-|x|` on all strings up to `depth`.
    pub fn uniform(depth: usize) -> Self {
        let mut m = Self::new();
        for d in 0..=depth {
            let v = crate::num::pow2(-(d as i64));
            for x in BitString::all_of_length(d) {
                m.set(x, v.clone());
            }
        }
        m
    }

    pub fn get(&self, x: &BitString) -> Q {
        self.entries.get(x).cloned().unwrap_or_else(Q::zero)
    }

    pub fn explicit(&self, x: &BitString) -> Option<&Q> {
        self.entries.get(x)
    }

    pub fn set(&mut self, x: BitString, v: Q) {
        self.entries.insert(x, v);
    }

    pub fn remove(&mut self, x: &BitString) -> Option<Q> {
        self.entries.remove(x)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&BitString, &Q)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.entries.keys().map(BitString::len).max().unwrap_or(0)
    }

    /// Sum of the explicit values at strings of length `depth`.
    pub fn level_sum(&self, depth: usize) -> Q {
        self.entries.iter().filter(|(k, _)| k.len() == depth).map(|(_, v)| v).sum()
    }

    /// Populated nodes together with all their ancestors.
    fn support_closure(&self) -> BTreeSet<BitString> {
        let mut s = BTreeSet::new();
        s.insert(BitString::empty());
        for k in self.entries.keys() {
            for p in k.prefixes() {
                s.insert(p);
            }
        }
        s
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (k, v) in &self.entries {
            if v.is_negative() {
                out.push(Violation { node: k.clone(), rule: Rule::Negative, detail: to_wire(v) });
            }
        }
        let root = self.get(&BitString::empty());
        if root > Q::one() {
            out.push(Violation {
                node: BitString::empty(),
                rule: Rule::RootAboveOne,
                detail: format!("value {} > 1", to_wire(&root)),
            });
        }
        for y in self.support_closure() {
            let s = self.get(&y.child(false)) + self.get(&y.child(true));
            let v = self.get(&y);
            if s > v {
                out.push(Violation {
                    node: y,
                    rule: Rule::SumRule,
                    detail: format!("children sum {} > {}", to_wire(&s), to_wire(&v)),
                });
            }
        }
        out
    }
}

/// A mass assignment read under an online constraint.
///
/// Absent nodes take their *effective* value: a node at a copy depth inherits
/// its parent's effective value, a node at a sum depth (or the root) is 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnlineMassAssignment {
    base: MassAssignment,
    constraint: OnlineConstraint,
}

impl OnlineMassAssignment {
    pub fn new(constraint: OnlineConstraint) -> Self {
        OnlineMassAssignment { base: MassAssignment::new(), constraint }
    }

    /// The starting state of an enumerating player: root 1, everything else
    /// implied.
    pub fn with_unit_root(constraint: OnlineConstraint) -> Self {
        let mut a = Self::new(constraint);
        a.base.set(BitString::empty(), Q::one());
        a
    }

    pub fn from_base(base: MassAssignment, constraint: OnlineConstraint) -> Self {
        OnlineMassAssignment { base, constraint }
    }

    pub fn constraint(&self) -> OnlineConstraint {
        self.constraint
    }

    pub fn base(&self) -> &MassAssignment {
        &self.base
    }

    pub fn into_base(self) -> MassAssignment {
        self.base
    }

    /// The node whose explicit entry determines `x`'s effective value.
    pub fn resolve(&self, x: &BitString) -> BitString {
        let mut y = x.clone();
        while !y.is_empty() && self.base.explicit(&y).is_none() && !self.constraint.is_sum_depth(y.len()) {
            y = y.parent().expect("non-empty");
        }
        y
    }

    pub fn value(&self, x: &BitString) -> Q {
        self.base.get(&self.resolve(x))
    }

    pub fn set(&mut self, x: BitString, v: Q) {
        self.base.set(x, v);
    }

    /// Raise `x` to `v`; the new value must exceed the current effective value.
    pub fn raise(&mut self, x: BitString, v: Q, step: u64) -> Result<()> {
        if v.is_negative() {
            return Err(Error::Negative { node: x, value: to_wire(&v) });
        }
        if v <= self.value(&x) {
            return Err(Error::NonIncreasing { node: x, step });
        }
        self.base.set(x, v);
        Ok(())
    }

    pub fn root(&self) -> Q {
        self.base.get(&BitString::empty())
    }

    pub fn is_valid_semimeasure(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (k, v) in self.base.entries() {
            if v.is_negative() {
                out.push(Violation { node: k.clone(), rule: Rule::Negative, detail: to_wire(v) });
            }
        }
        let closure = self.base.support_closure();
        // BitString order is length-first, so parents are cached before children.
        let mut eff: HashMap<BitString, Q> = HashMap::new();
        let value = |x: &BitString, eff: &mut HashMap<BitString, Q>| -> Q {
            if let Some(v) = eff.get(x) {
                return v.clone();
            }
            let v = self.value(x);
            eff.insert(x.clone(), v.clone());
            v
        };
        let root = value(&BitString::empty(), &mut eff);
        if root > Q::one() {
            out.push(Violation {
                node: BitString::empty(),
                rule: Rule::RootAboveOne,
                detail: format!("value {} > 1", to_wire(&root)),
            });
        }
        for y in closure {
            let vy = value(&y, &mut eff);
            let d = y.len() + 1;
            let (c0, c1) = (y.child(false), y.child(true));
            if self.constraint.is_sum_depth(d) {
                let s = value(&c0, &mut eff) + value(&c1, &mut eff);
                if s > vy {
                    out.push(Violation {
                        node: y,
                        rule: Rule::SumRule,
                        detail: format!("children sum {} > {}", to_wire(&s), to_wire(&vy)),
                    });
                }
            } else {
                for c in [c0, c1] {
                    if let Some(vc) = self.base.explicit(&c) {
                        if *vc != vy {
                            out.push(Violation {
                                node: c,
                                rule: Rule::CopyRule,
                                detail: format!("value {} differs from parent {}", to_wire(vc), to_wire(&vy)),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Effective values on all strings of length `depth`, in index order.
    pub fn level(&self, depth: usize) -> Vec<Q> {
        BitString::all_of_length(depth).map(|x| self.value(&x)).collect()
    }
}

/// Pad a leaf vector with zeros up to the next power of two.
pub fn pad_to_power_of_two(leaves: &[Q]) -> Vec<Q> {
    let n = leaves.len().max(1).next_power_of_two();
    let mut v = leaves.to_vec();
    v.resize(n, Q::zero());
    v
}

pub fn log2_dim(len: usize) -> Result<usize> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    Ok(len.trailing_zeros() as usize)
}

/// The pointwise least online assignment whose values on `n`-bit strings
/// dominate `leaves` (length `2^n`).
///
/// Folding upwards takes sums at sum depths and maxima at copy depths; the
/// downward pass then copies parents into copy-depth children. The root may
/// exceed 1, in which case [`OnlineMassAssignment::is_valid_semimeasure`] is
/// false.
pub fn min_online_from_leaves(leaves: &[Q], constraint: OnlineConstraint) -> Result<OnlineMassAssignment> {
    let n = log2_dim(leaves.len())?;
    let mut up: Vec<Vec<Q>> = vec![Vec::new(); n + 1];
    up[n] = leaves.to_vec();
    for d in (1..=n).rev() {
        let sum = constraint.is_sum_depth(d);
        up[d - 1] =
            up[d].chunks(2).map(|c| if sum { &c[0] + &c[1] } else { std::cmp::max(&c[0], &c[1]).clone() }).collect();
    }
    let mut out = OnlineMassAssignment::new(constraint);
    let mut prev = up[0].clone();
    out.set(BitString::empty(), prev[0].clone());
    for (d, level) in up.iter().enumerate().skip(1) {
        let cur: Vec<Q> = if constraint.is_sum_depth(d) {
            level.clone()
        } else {
            (0..1usize << d).map(|j| prev[j / 2].clone()).collect()
        };
        for (j, v) in cur.iter().enumerate() {
            out.set(BitString::from_index(j, d), v.clone());
        }
        prev = cur;
    }
    Ok(out)
}

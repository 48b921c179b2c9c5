//! Chain-rule combinators on enumeration streams.
//!
//! [`chain_combine_forward`] turns an enumeration of a joint online
//! semimeasure into conditional ones `P(y | x, k) = joint(xy) * 2^k`, one for
//! every prefix `x` of length `m` and every `k`, frozen as soon as
//! `joint(x) > 2^-k`. [`chain_combine_backward`] glues a marginal and a family
//! of conditionals back together:
//!
//! ```text
//! P(z) = marginal(z)                                          |z| < m
//! P(xy) = sum over k <= k_max with 2^-k <= marginal(x) of 2^(-k-1) P(y | x, k)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::num::{ceil_neg_log2, from_parts, pow2, Q};
use crate::semimeasure::{OnlineConstraint, OnlineMassAssignment};
use crate::stream::{EnumerationStream, StreamUpdate};

pub const DEFAULT_K_MAX: u64 = 64;

/// One update of the conditional assignment indexed by `(x, k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionalUpdate {
    pub step: u64,
    pub x: BitString,
    pub k: u64,
    pub node: BitString,
    pub value: Q,
}

#[derive(Serialize, Deserialize)]
struct WireConditional {
    step: u64,
    x: String,
    k: u64,
    node: String,
    num: String,
    den: String,
}

/// A stream of conditional assignments for prefixes of length `m`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConditionalFamily {
    pub updates: Vec<ConditionalUpdate>,
    /// `(x, k)` pairs frozen during the forward pass, with the step at which
    /// the freeze happened.
    pub frozen: BTreeMap<(BitString, u64), u64>,
}

impl ConditionalFamily {
    pub fn push(&mut self, step: u64, x: BitString, k: u64, node: BitString, value: Q) {
        self.updates.push(ConditionalUpdate { step, x, k, node, value });
    }

    pub fn extend(&mut self, other: ConditionalFamily) {
        self.updates.extend(other.updates);
        self.updates.sort_by_key(|u| u.step);
        self.frozen.extend(other.frozen);
    }

    pub fn keys(&self) -> BTreeSet<(BitString, u64)> {
        self.updates.iter().map(|u| (u.x.clone(), u.k)).collect()
    }

    pub fn read_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut fam = ConditionalFamily::default();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let w: WireConditional = serde_json::from_str(&line)?;
            fam.push(w.step, w.x.parse()?, w.k, w.node.parse()?, from_parts(&w.num, &w.den)?);
        }
        Ok(fam)
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for u in &self.updates {
            let rec = WireConditional {
                step: u.step,
                x: u.x.to_wire(),
                k: u.k,
                node: u.node.to_wire(),
                num: u.value.numer().to_string(),
                den: u.value.denom().to_string(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Per-`(x, k)` streams.
    fn split(&self) -> BTreeMap<(BitString, u64), EnumerationStream> {
        let mut out: BTreeMap<(BitString, u64), EnumerationStream> = BTreeMap::new();
        for u in &self.updates {
            out.entry((u.x.clone(), u.k)).or_default().push(u.step, 0, u.node.clone(), u.value.clone());
        }
        out
    }

    /// Replay each member under `base` shifted by `m`, revalidating.
    pub fn replay(&self, base: OnlineConstraint, m: usize) -> Result<BTreeMap<(BitString, u64), OnlineMassAssignment>> {
        let c = base.shifted(m);
        self.split()
            .into_iter()
            .map(|(key, s)| {
                let mut a = s.replay_online(&[c], false)?;
                Ok((key, a.remove(0)))
            })
            .collect()
    }
}

/// Prefixes `x` of length `m` whose effective joint value is determined by
/// the entry at `z` (`|z| <= m`).
fn anchored_prefixes(z: &BitString, m: usize, c: OnlineConstraint) -> Vec<BitString> {
    if z.len() == m {
        return vec![z.clone()];
    }
    if ((z.len() + 1)..=m).any(|d| c.is_sum_depth(d)) {
        return Vec::new();
    }
    let extra = m - z.len();
    BitString::all_of_length(extra).map(|w| z.concat(&w)).collect()
}

/// Conditional streams for every prefix of length `m` and the given `k`.
///
/// `joint` is an enumeration of one online assignment under `constraint`
/// (root starting at 0).
pub fn chain_combine_forward(
    joint: &EnumerationStream,
    constraint: OnlineConstraint,
    m: usize,
    k: u64,
) -> Result<ConditionalFamily> {
    let mut replay = crate::stream::Replayer::new(&[constraint], false);
    let scale = pow2(k as i64);
    let mut fam = ConditionalFamily::default();
    let mut frozen: BTreeSet<BitString> = BTreeSet::new();
    let mut roots: BTreeMap<BitString, Q> = BTreeMap::new();
    let mut by_step: BTreeMap<u64, Vec<&StreamUpdate>> = BTreeMap::new();
    for u in joint.updates() {
        by_step.entry(u.step).or_default().push(u);
    }
    for (step, ups) in by_step {
        for u in &ups {
            replay.apply(u)?;
        }
        let state = &replay.state()[0];
        let mut touched: BTreeMap<BitString, Vec<&StreamUpdate>> = BTreeMap::new();
        for u in &ups {
            if u.node.len() > m {
                touched.entry(u.node.prefix(m)).or_default().push(u);
            } else {
                for x in anchored_prefixes(&u.node, m, constraint) {
                    touched.entry(x).or_default();
                }
            }
        }
        for (x, below) in touched {
            if frozen.contains(&x) {
                continue;
            }
            let root = state.value(&x) * &scale;
            if root > Q::one() {
                frozen.insert(x.clone());
                fam.frozen.insert((x, k), step);
                continue;
            }
            if roots.get(&x).map_or(!root.is_zero(), |r| &root > r) {
                roots.insert(x.clone(), root.clone());
                fam.push(step, x.clone(), k, BitString::empty(), root);
            }
            for u in below {
                fam.push(step, x.clone(), k, u.node.suffix_from(m), &u.value * &scale);
            }
        }
    }
    Ok(fam)
}

/// Result of gluing a marginal with conditionals.
#[derive(Debug, Clone)]
pub struct BackwardResult {
    pub stream: EnumerationStream,
    pub assignment: OnlineMassAssignment,
    /// Upper bound on the mass dropped by cutting the `k`-sum at `k_max`.
    pub truncation_error: Q,
}

/// Value of the combined assignment at `z` given the current marginal and
/// conditional states.
fn combined_value(
    z: &BitString,
    m: usize,
    k_max: u64,
    marginal: &OnlineMassAssignment,
    conds: &BTreeMap<(BitString, u64), OnlineMassAssignment>,
) -> Q {
    if z.len() < m {
        return marginal.value(z);
    }
    let x = z.prefix(m);
    let y = z.suffix_from(m);
    let mx = marginal.value(&x);
    let Some(k0) = ceil_neg_log2(&mx) else {
        return Q::zero();
    };
    conds.range((x.clone(), k0)..=(x.clone(), k_max)).map(|((_, k), a)| pow2(-(*k as i64) - 1) * a.value(&y)).sum()
}

/// Combine a marginal stream with a conditional family.
///
/// Depth `m` must be a sum depth of `constraint`; at a copy depth the value at
/// `x` would have to equal the marginal of its parent, which the weighted sum
/// cannot guarantee.
pub fn chain_combine_backward(
    marginal: &EnumerationStream,
    family: &ConditionalFamily,
    constraint: OnlineConstraint,
    m: usize,
    k_max: u64,
) -> Result<BackwardResult> {
    if m == 0 || !constraint.is_sum_depth(m) {
        return Err(Error::BadDepth(m, "the split depth must carry the sum rule"));
    }
    let shifted = constraint.shifted(m);
    // revalidate inputs
    marginal.replay_online(&[constraint], false)?;
    family.replay(constraint, m)?;

    let mut steps: BTreeSet<u64> = marginal.steps().into_iter().collect();
    steps.extend(family.updates.iter().map(|u| u.step));

    let mut m_replay = crate::stream::Replayer::new(&[constraint], false);
    let mut conds: BTreeMap<(BitString, u64), OnlineMassAssignment> = BTreeMap::new();
    let mut current = OnlineMassAssignment::new(constraint);
    let mut out = EnumerationStream::empty();
    let (mut mi, mut fi) = (0, 0);
    let mups = marginal.updates();
    let fups = &family.updates;
    // every node that has ever carried an explicit value in the output's inputs
    let mut nodes: BTreeSet<BitString> = BTreeSet::new();
    for step in steps {
        let mut touched: BTreeSet<BitString> = BTreeSet::new();
        while mi < mups.len() && mups[mi].step == step {
            m_replay.apply(&mups[mi])?;
            let z = mups[mi].node.clone();
            if z.len() == m {
                touched.extend(nodes.iter().filter(|n| z.is_prefix_of(n)).cloned());
            }
            if z.len() <= m {
                nodes.insert(z.clone());
                touched.insert(z);
            }
            mi += 1;
        }
        while fi < fups.len() && fups[fi].step == step {
            let u = &fups[fi];
            let a = conds.entry((u.x.clone(), u.k)).or_insert_with(|| OnlineMassAssignment::new(shifted));
            a.set(u.node.clone(), u.value.clone());
            let z = u.x.concat(&u.node);
            nodes.insert(z.clone());
            touched.extend(nodes.iter().filter(|n| z.is_prefix_of(n)).cloned());
            fi += 1;
        }
        let m_state = &m_replay.state()[0];
        for z in touched {
            let v = combined_value(&z, m, k_max, m_state, &conds);
            if v > current.value(&z) {
                current.set(z.clone(), v.clone());
                out.push(step, 0, z, v);
            }
        }
    }
    let assignment = out.replay_online(&[constraint], false)?.remove(0);
    Ok(BackwardResult { stream: out, assignment, truncation_error: pow2(-(k_max as i64) - 1) })
}

/// Check `output(xy) >= marginal(x) * cond(y | x, k*) / 4` with
/// `k* = ceil(-log2 marginal(x))` on every populated conditional node.
/// Returns the offending nodes.
pub fn check_quarter_bound(
    result: &BackwardResult,
    marginal: &OnlineMassAssignment,
    family: &ConditionalFamily,
    constraint: OnlineConstraint,
    m: usize,
    k_max: u64,
) -> Result<Vec<BitString>> {
    let conds = family.replay(constraint, m)?;
    let quarter = Q::new(1.into(), 4.into());
    let mut bad = Vec::new();
    for ((x, k), a) in &conds {
        let mx = marginal.value(x);
        match ceil_neg_log2(&mx) {
            Some(ks) if ks == *k && ks <= k_max => {}
            _ => continue,
        }
        let mut ys: Vec<BitString> = a.base().entries().map(|(y, _)| y.clone()).collect();
        ys.push(BitString::empty());
        for y in ys {
            let z = x.concat(&y);
            let lower = &quarter * &mx * a.value(&y);
            if result.assignment.value(&z) < lower {
                bad.push(z);
            }
        }
    }
    Ok(bad)
}

/// Replay of a forward family's final `(x, k)` roots: each must be at most 1.
pub fn max_conditional_root(family: &ConditionalFamily, base: OnlineConstraint, m: usize) -> Result<Q> {
    Ok(family.replay(base, m)?.values().map(|a| a.root()).max().unwrap_or_else(Q::zero))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{q, qi};

    fn b(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn ev() -> OnlineConstraint {
        OnlineConstraint::even()
    }

    #[test]
    fn forward_scales_until_threshold() {
        // even joint, m = 2, k = 1: joint(x) = 1/2 exactly
        let mut j = EnumerationStream::empty();
        j.push(0, 0, b(""), qi(1));
        j.push(1, 0, b("00"), q(1, 2));
        j.push(2, 0, b("0000"), q(1, 4));
        let fam = chain_combine_forward(&j, ev(), 2, 1).unwrap();
        assert!(fam.frozen.is_empty());
        let conds = fam.replay(ev(), 2).unwrap();
        let a = &conds[&(b("00"), 1)];
        assert_eq!(a.root(), qi(1));
        assert_eq!(a.value(&b("00")), q(1, 2));
        assert!(max_conditional_root(&fam, ev(), 2).unwrap() <= qi(1));
    }

    #[test]
    fn forward_freezes_on_jump() {
        let mut j = EnumerationStream::empty();
        j.push(0, 0, b(""), qi(1));
        j.push(1, 0, b("00"), q(1, 4));
        j.push(2, 0, b("0000"), q(1, 8));
        j.push(3, 0, b("00"), qi(1));
        j.push(4, 0, b("0000"), q(1, 2));
        let fam = chain_combine_forward(&j, ev(), 2, 1).unwrap();
        assert_eq!(fam.frozen.get(&(b("00"), 1)), Some(&3));
        let conds = fam.replay(ev(), 2).unwrap();
        let a = &conds[&(b("00"), 1)];
        assert_eq!(a.root(), q(1, 2));
        assert_eq!(a.value(&b("00")), q(1, 4));
    }

    #[test]
    fn backward_quarter_bound() {
        let mut marg = EnumerationStream::empty();
        marg.push(0, 0, b(""), qi(1));
        marg.push(1, 0, b("01"), q(1, 2));
        let mut fam = ConditionalFamily::default();
        fam.push(2, b("01"), 1, b(""), q(1, 2));
        fam.push(3, b("01"), 1, b("11"), q(1, 2));
        let r = chain_combine_backward(&marg, &fam, ev(), 2, DEFAULT_K_MAX).unwrap();
        assert!(r.assignment.value(&b("0111")) >= q(1, 16));
        assert!(r.assignment.validate().is_empty());
        let m = marg.replay_online(&[ev()], false).unwrap().remove(0);
        assert!(check_quarter_bound(&r, &m, &fam, ev(), 2, DEFAULT_K_MAX).unwrap().is_empty());
    }

    #[test]
    fn backward_single_term_and_empty() {
        let mut marg = EnumerationStream::empty();
        marg.push(0, 0, b(""), qi(1));
        marg.push(1, 0, b("00"), qi(1));
        let mut fam = ConditionalFamily::default();
        fam.push(2, b("00"), 0, b(""), qi(1));
        fam.push(2, b("00"), 0, b("10"), q(2, 3));
        let r = chain_combine_backward(&marg, &fam, ev(), 2, 8).unwrap();
        assert_eq!(r.assignment.value(&b("0010")), q(1, 3));
        assert_eq!(r.truncation_error, pow2(-9));

        let r = chain_combine_backward(&marg, &ConditionalFamily::default(), ev(), 2, 8).unwrap();
        assert_eq!(r.assignment.value(&b("0010")), qi(0));
        assert_eq!(r.assignment.value(&b("00")), qi(0));
        assert_eq!(r.assignment.value(&b("")), qi(1));
        assert!(chain_combine_backward(&marg, &fam, ev(), 1, 8).is_err());
    }

    #[test]
    fn family_jsonl_round_trip() {
        let mut fam = ConditionalFamily::default();
        fam.push(2, b("01"), 3, b("1"), q(1, 2));
        let mut buf = Vec::new();
        fam.write_jsonl(&mut buf).unwrap();
        let back = ConditionalFamily::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.updates, fam.updates);
    }
}

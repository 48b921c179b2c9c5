//! Inductive construction of omega against `k` enumerated online
//! semimeasures `Q_1, ..., Q_k` (`Q_i` is `i mod k`).
//!
//! At a block boundary `x` with thresholds `t_i >= Q_i(x)` Alice waits for the
//! first `i` with `Q_i(x 0^k) > eta * t_i`. If it happens the next block is
//! `x^i = 0^(i-1) 1 0^(k-i-1) 1` and `t_i` is multiplied by `gamma`; otherwise
//! the block is `0^k` and every threshold is multiplied by `eta`.
//!
//! * 3/4 variant (`k = 2`): `eta = gamma = 1/2`, `P(x) = (4/3)^n o e`.
//! * epsilon variant: `delta = (2k)^(-1/eps)`, `eta = delta^(1-eps) = 2k delta`,
//!   `gamma = (1 - 2 delta)^(k - k eps)` and
//!   `(1 - delta)^n P(x) = (prod_i t_i)^(1/(k - k eps))`.
//!
//! `gamma` may be irrational. Writing `k - k eps = p/q`, every threshold
//! satisfies `t_i^q = (1 - 2 delta)^(p a_i) eta^(q c)` with `a_i` the number of
//! `i`-events and `c` the number of quiet blocks so far, so all comparisons
//! against thresholds are decided exactly by raising both sides to the `q`-th
//! power.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::game::{EventKind, ThresholdEvent};
use crate::interval::{Interval, IntervalRecord};
use crate::num::{pow, q, to_wire, Q};
use crate::semimeasure::{MassAssignment, OnlineConstraint};
use crate::stream::{EnumerationStream, History};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OmegaParams {
    pub k: usize,
    /// `None` for the 3/4 variant.
    pub epsilon: Option<Q>,
    pub delta: Option<Q>,
    /// `gamma = base^(p/q)`.
    base: Q,
    p: u32,
    q: u32,
    eta: Q,
}

impl OmegaParams {
    pub fn three_quarters() -> Self {
        OmegaParams { k: 2, epsilon: None, delta: None, base: q(1, 2), p: 1, q: 1, eta: q(1, 2) }
    }

    pub fn epsilon(eps: Q) -> Result<Self> {
        Self::kmod(2, eps)
    }

    /// Requires `0 < eps < 1`, `k >= 2` and `(2k)^(-1/eps)` rational.
    pub fn kmod(k: usize, eps: Q) -> Result<Self> {
        if k < 2 {
            return Err(Error::BadParameter(format!("k = {k} must be at least 2")));
        }
        if eps <= Q::zero() || eps >= Q::one() {
            return Err(Error::BadParameter(format!("epsilon {} outside (0, 1)", to_wire(&eps))));
        }
        let a: u32 = eps.numer().try_into().map_err(|_| Error::BadParameter("epsilon numerator too large".into()))?;
        let b: u32 = eps.denom().try_into().map_err(|_| Error::BadParameter("epsilon denominator too large".into()))?;
        // delta = (2k)^(-b/a): need (2k)^b to be a perfect a-th power
        let pk = num_traits::pow(BigInt::from(2 * k), b as usize);
        let r = pk.nth_root(a);
        if num_traits::pow(r.clone(), a as usize) != pk {
            return Err(Error::BadParameter(format!(
                "delta = (2k)^(-1/epsilon) is irrational for k = {k}, epsilon = {}",
                to_wire(&eps)
            )));
        }
        let delta = Q::new(BigInt::one(), r);
        let expo = Q::from_integer(BigInt::from(k)) * (Q::one() - &eps);
        let p: u32 = expo.numer().try_into().map_err(|_| Error::BadParameter("exponent too large".into()))?;
        let qd: u32 = expo.denom().try_into().map_err(|_| Error::BadParameter("exponent too large".into()))?;
        let eta = Q::from_integer(BigInt::from(2 * k)) * &delta;
        let base = Q::one() - Q::from_integer(BigInt::from(2)) * &delta;
        Ok(OmegaParams { k, epsilon: Some(eps), delta: Some(delta), base, p, q: qd, eta })
    }

    pub fn is_three_quarters(&self) -> bool {
        self.epsilon.is_none()
    }

    pub fn name(&self) -> String {
        match &self.epsilon {
            None => "3-4".into(),
            Some(e) if self.k == 2 => format!("eps={}", to_wire(e)),
            Some(e) => format!("k={},eps={}", self.k, to_wire(e)),
        }
    }

    /// `eta`: the quiet-block factor and the event threshold factor.
    pub fn eta(&self) -> &Q {
        &self.eta
    }

    /// `(p, q)` with `gamma = base^(p/q)`.
    pub fn gamma_exponent(&self) -> (u32, u32) {
        (self.p, self.q)
    }

    pub fn gamma(&self, prec: u32) -> Interval {
        Interval::point(self.base.clone()).pow_ratio(self.p, self.q, prec)
    }

    /// `beta = (1 - 2 delta)^(2 - 2 eps)`, the event factor of the two-machine
    /// epsilon variant.
    pub fn beta(&self, prec: u32) -> Option<Interval> {
        (self.k == 2 && self.epsilon.is_some()).then(|| self.gamma(prec))
    }

    pub fn constraints(&self) -> Vec<OnlineConstraint> {
        (1..=self.k).map(|i| OnlineConstraint::new(self.k, i).expect("valid residue")).collect()
    }

    /// `x^i` for an event of index `i`, `0^k` for none.
    pub fn block(&self, event: Option<usize>) -> BitString {
        let k = self.k;
        match event {
            None => BitString::from_bits(vec![false; k]),
            Some(i) => BitString::from_bits((1..=k).map(|j| j == i || j == k)),
        }
    }

    /// Index of the event a block encodes; `Some(None)` for `0^k`, `None`
    /// for a block no construction writes.
    pub fn block_event(&self, block: &BitString) -> Option<Option<usize>> {
        if *block == self.block(None) {
            return Some(None);
        }
        (1..=self.k).find(|&i| self.block(Some(i)) == *block).map(Some)
    }

    /// `t_i^q` for the given counts.
    fn threshold_pow_q(&self, counts: &Counts, i: usize) -> Q {
        pow(&self.base, self.p * counts.events[i - 1]) * pow(&self.eta, self.q * counts.quiet)
    }

    /// Exact threshold when `gamma` is rational.
    pub fn threshold_exact(&self, counts: &Counts, i: usize) -> Option<Q> {
        (self.q == 1).then(|| self.threshold_pow_q(counts, i))
    }

    pub fn threshold_interval(&self, counts: &Counts, i: usize, prec: u32) -> Interval {
        let g = self.gamma(prec).powi(counts.events[i - 1], prec);
        g.mul_q(&pow(&self.eta, counts.quiet), prec)
    }

    /// `value > eta * t_i`.
    pub fn exceeds_event_threshold(&self, value: &Q, counts: &Counts, i: usize) -> bool {
        pow(value, self.q) > pow(&self.eta, self.q) * self.threshold_pow_q(counts, i)
    }

    /// `value <= t_i`.
    pub fn within_threshold(&self, value: &Q, counts: &Counts, i: usize) -> bool {
        pow(value, self.q) <= self.threshold_pow_q(counts, i)
    }

    /// `(prod t_i)^q`.
    fn threshold_product_pow_q(&self, counts: &Counts) -> Q {
        (1..=self.k).map(|i| self.threshold_pow_q(counts, i)).product()
    }

    /// Alice's value at a boundary node reached after `counts`.
    pub fn weight(&self, counts: &Counts) -> Q {
        let r = counts.rounds();
        let a: u32 = counts.events.iter().sum();
        match &self.delta {
            None => pow(&q(4, 3), r) * pow(&q(1, 2), a) * pow(&q(1, 4), counts.quiet),
            Some(d) => {
                let inv = Q::one() / (Q::one() - d);
                pow(&inv, r) * pow(&self.base, a) * pow(d, counts.quiet)
            }
        }
    }

    /// The defining identity between `P` and the thresholds.
    pub fn identity_holds(&self, counts: &Counts, p: &Q) -> bool {
        match &self.delta {
            None => {
                let prod: Q = (1..=self.k).map(|i| self.threshold_pow_q(counts, i)).product();
                *p == pow(&q(4, 3), counts.rounds()) * prod
            }
            Some(d) => {
                let lhs = pow(&(pow(&(Q::one() - d), counts.rounds()) * p), self.p);
                lhs == self.threshold_product_pow_q(counts)
            }
        }
    }

    fn event_kind(&self, i: usize) -> EventKind {
        match (self.k, i) {
            (2, 1) => EventKind::O,
            (2, 2) => EventKind::E,
            (_, i) => EventKind::Cross(i),
        }
    }
}

/// Event counts along a path: `events[i-1]` blocks `x^i` and `quiet` blocks
/// `0^k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Counts {
    pub events: Vec<u32>,
    pub quiet: u32,
}

impl Counts {
    pub fn new(k: usize) -> Self {
        Counts { events: vec![0; k], quiet: 0 }
    }

    pub fn rounds(&self) -> u32 {
        self.events.iter().sum::<u32>() + self.quiet
    }

    fn advance(&mut self, event: Option<usize>) {
        match event {
            Some(i) => self.events[i - 1] += 1,
            None => self.quiet += 1,
        }
    }
}

type Time = Option<u64>;
/// A block, the counts before it, and the event that fixed it.
type PathBlock = (BitString, Counts, Option<(usize, Time)>);

/// Event detection over a stream history, memoised per boundary node.
struct Detector<'a> {
    h: &'a History,
    params: &'a OmegaParams,
    memo: HashMap<BitString, Option<(usize, Time)>>,
}

impl<'a> Detector<'a> {
    fn new(h: &'a History, params: &'a OmegaParams) -> Self {
        Detector { h, params, memo: HashMap::new() }
    }

    /// First event at boundary node `x` over the whole stream: the earliest
    /// crossing, smaller index first among simultaneous ones.
    fn event(&mut self, x: &BitString, counts: &Counts) -> Option<(usize, Time)> {
        if let Some(e) = self.memo.get(x) {
            return *e;
        }
        let probe = x.concat(&self.params.block(None));
        let mut best: Option<(Time, usize)> = None;
        for i in 1..=self.params.k {
            let (init, series) = self.h.series(i - 1, &probe);
            let crossed = |v: &Q| self.params.exceeds_event_threshold(v, counts, i);
            let t = if crossed(&init) {
                Some(None)
            } else {
                series.iter().find(|(_, v)| crossed(v)).map(|(s, _)| Some(*s))
            };
            if let Some(t) = t {
                if best.as_ref().is_none_or(|(bt, _)| t < *bt) {
                    best = Some((t, i));
                }
            }
        }
        let e = best.map(|(t, i)| (i, t));
        self.memo.insert(x.clone(), e);
        e
    }

    /// The candidate omega at time `t`, block by block.
    fn path(&mut self, rounds: usize, t: Time) -> Vec<PathBlock> {
        let mut x = BitString::empty();
        let mut counts = Counts::new(self.params.k);
        let mut out = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let ev = self.event(&x, &counts).filter(|(_, te)| *te <= t);
            out.push((x.clone(), counts.clone(), ev));
            let i = ev.map(|(i, _)| i);
            x.extend(&self.params.block(i));
            counts.advance(i);
        }
        out.push((x, counts, None));
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub prefix: BitString,
    pub block: BitString,
    pub counts: Counts,
    pub event: Option<ThresholdEvent>,
}

/// Outcome of the certificate checks on a construction.
#[derive(Debug, Clone, Default, Serialize)]
pub struct OmegaChecks {
    pub thresholds_sound: bool,
    pub p_valid: bool,
    pub identity_holds: bool,
    pub final_inequality: bool,
    pub problems: Vec<String>,
}

impl OmegaChecks {
    pub fn all_pass(&self) -> bool {
        self.thresholds_sound && self.p_valid && self.identity_holds && self.final_inequality
    }
}

#[derive(Debug, Clone)]
pub struct OmegaConstruction {
    pub params: OmegaParams,
    pub rounds: usize,
    pub omega: BitString,
    pub log: Vec<RoundRecord>,
    /// Counts at the end of the last round.
    pub final_counts: Counts,
    pub p: MassAssignment,
    /// Stream fault that cut the construction short, if any.
    pub fault: Option<String>,
    pub history: History,
}

fn fault_step(e: &Error) -> Option<u64> {
    match e {
        Error::InvalidStream { step, .. } | Error::NonIncreasing { step, .. } | Error::StepOrder { step } => {
            Some(*step)
        }
        _ => None,
    }
}

/// Build omega for `rounds` blocks against the merged stream of Bob's `k`
/// assignments (assignment `i - 1` is `Q_i`). A stream fault truncates the
/// stream before the faulty step and is recorded.
pub fn build_omega(stream: &EnumerationStream, params: &OmegaParams, rounds: usize) -> Result<OmegaConstruction> {
    if rounds == 0 {
        return Err(Error::BadParameter("rounds must be at least 1".into()));
    }
    let constraints = params.constraints();
    let (history, fault) = match History::new(stream, &constraints, true) {
        Ok(h) => (h, None),
        Err(e) => {
            let Some(step) = fault_step(&e) else { return Err(e) };
            let kept: Vec<_> = stream.updates().iter().filter(|u| u.step < step).cloned().collect();
            let h = History::new(&EnumerationStream::new(kept), &constraints, true)?;
            (h, Some(e.to_string()))
        }
    };
    let mut det = Detector::new(&history, params);
    let mut times: Vec<Time> = vec![None];
    times.extend(history.steps().iter().map(|&s| Some(s)));

    let mut visited: BTreeMap<BitString, Counts> = BTreeMap::new();
    let mut final_path = Vec::new();
    for &t in &times {
        let path = det.path(rounds, t);
        for (x, c, _) in &path {
            visited.insert(x.clone(), c.clone());
        }
        final_path = path;
    }

    let k = params.k;
    let mut p = MassAssignment::new();
    for (x, c) in &visited {
        p.set(x.clone(), params.weight(c));
    }
    // inner nodes of a block carry the sum of the block ends below them
    let mut inner: BTreeMap<BitString, Q> = BTreeMap::new();
    for (x, _) in visited.iter().filter(|(x, _)| !x.is_empty()) {
        let v = p.get(x);
        let start = x.len() - k;
        for l in 1..k {
            *inner.entry(x.prefix(start + l)).or_insert_with(Q::zero) += &v;
        }
    }
    for (x, v) in inner {
        p.set(x, v);
    }

    let mut log = Vec::with_capacity(rounds);
    let mut omega = BitString::empty();
    for (r, (x, c, ev)) in final_path.iter().take(rounds).enumerate() {
        let i = ev.map(|(i, _)| i);
        let block = params.block(i);
        omega.extend(&block);
        log.push(RoundRecord {
            round: r,
            prefix: x.clone(),
            block,
            counts: c.clone(),
            event: ev.map(|(i, t)| ThresholdEvent {
                kind: params.event_kind(i),
                node: x.clone(),
                step: t.unwrap_or(0),
            }),
        });
    }
    let final_counts = final_path.last().map(|(_, c, _)| c.clone()).unwrap_or_else(|| Counts::new(k));
    Ok(OmegaConstruction { params: params.clone(), rounds, omega, log, final_counts, p, fault, history })
}

impl OmegaConstruction {
    /// Thresholds after round `j` (`j = 0` is the start).
    pub fn counts_at(&self, j: usize) -> &Counts {
        if j < self.log.len() {
            &self.log[j].counts
        } else {
            &self.final_counts
        }
    }

    pub fn events(&self) -> Vec<ThresholdEvent> {
        self.log.iter().filter_map(|r| r.event.clone()).collect()
    }

    /// Check threshold soundness at every round, validity of `P`, the
    /// defining identity of `P` along omega and the final product bound.
    pub fn verify(&self) -> OmegaChecks {
        let params = &self.params;
        let mut c = OmegaChecks {
            thresholds_sound: true,
            p_valid: true,
            identity_holds: true,
            final_inequality: true,
            problems: Vec::new(),
        };
        for j in 0..=self.rounds {
            let x = self.omega.prefix(j * params.k);
            let counts = self.counts_at(j);
            for i in 1..=params.k {
                let v = self.history.final_value(i - 1, &x);
                if !params.within_threshold(&v, counts, i) {
                    c.thresholds_sound = false;
                    c.problems.push(format!("Q_{i}({x}) = {} exceeds its threshold", to_wire(&v)));
                }
            }
            if !params.identity_holds(counts, &self.p.get(&x)) {
                c.identity_holds = false;
                c.problems.push(format!("P({x}) does not match the thresholds"));
            }
        }
        for v in self.p.validate() {
            c.p_valid = false;
            c.problems.push(format!("P: {v}"));
        }
        let n = self.rounds;
        let prod: Q = (1..=params.k).map(|i| self.history.final_value(i - 1, &self.omega)).product();
        let bound_q = params.threshold_product_pow_q(&self.final_counts);
        let ok = pow(&prod, params.q) <= bound_q;
        let ok = if params.is_three_quarters() {
            ok && prod <= pow(&q(3, 4), n as u32) * self.p.get(&self.omega)
        } else {
            ok
        };
        if !ok {
            c.final_inequality = false;
            c.problems.push(format!("product {} at omega exceeds the bound", to_wire(&prod)));
        }
        c
    }

    /// Recover the first `k - 1` bits of block `j + 1` from omega's first `j`
    /// blocks and the last bit of the block.
    pub fn decode_block(&self, prefix: &BitString, last_bit: bool) -> Result<BitString> {
        decode_block(&self.history, &self.params, prefix, last_bit)
    }

    pub fn to_json(&self, prec: u32) -> Value {
        let params = &self.params;
        let thresholds = |counts: &Counts| -> Value {
            (1..=params.k)
                .map(|i| match params.threshold_exact(counts, i) {
                    Some(t) => json!(to_wire(&t)),
                    None => serde_json::to_value(IntervalRecord::from(&params.threshold_interval(counts, i, prec)))
                        .expect("record"),
                })
                .collect()
        };
        let rounds: Vec<Value> = self
            .log
            .iter()
            .map(|r| {
                json!({
                    "round": r.round,
                    "prefix": r.prefix.to_wire(),
                    "block": r.block.to_wire(),
                    "thresholds": thresholds(&r.counts),
                    "event": r.event,
                })
            })
            .collect();
        let p: BTreeMap<String, String> = self.p.entries().map(|(k, v)| (k.to_wire(), to_wire(v))).collect();
        let checks = self.verify();
        json!({
            "variant": params.name(),
            "k": params.k,
            "epsilon": params.epsilon.as_ref().map(to_wire),
            "delta": params.delta.as_ref().map(to_wire),
            "eta": to_wire(&params.eta),
            "rounds": self.rounds,
            "omega": self.omega.to_wire(),
            "round_log": rounds,
            "final_thresholds": thresholds(&self.final_counts),
            "p": p,
            "p_omega": to_wire(&self.p.get(&self.omega)),
            "leaf_mass": to_wire(&self.p.level_sum(self.omega.len())),
            "checks": checks,
            "fault": self.fault,
        })
    }
}

/// Decode one block. The prefix must consist of whole blocks that some
/// approximation of omega could have written; each event block must match
/// the event replayed at its boundary.
pub fn decode_block(h: &History, params: &OmegaParams, prefix: &BitString, last_bit: bool) -> Result<BitString> {
    let k = params.k;
    if !prefix.len().is_multiple_of(k) {
        return Err(Error::Undefined(format!("prefix length {} is not a multiple of {k}", prefix.len())));
    }
    let mut det = Detector::new(h, params);
    let mut counts = Counts::new(k);
    let mut x = BitString::empty();
    for j in 0..prefix.len() / k {
        let block = prefix.suffix_from(j * k).prefix(k);
        let Some(ev) = params.block_event(&block) else {
            return Err(Error::Undefined(format!("block {block} at position {j} is never written")));
        };
        if let Some(i) = ev {
            if det.event(&x, &counts).map(|(e, _)| e) != Some(i) {
                return Err(Error::Undefined(format!("block {block} at position {j} contradicts the replayed events")));
            }
        }
        counts.advance(ev);
        x.extend(&block);
    }
    if !last_bit {
        return Ok(BitString::from_bits(vec![false; k - 1]));
    }
    match det.event(&x, &counts) {
        Some((i, _)) => Ok(params.block(Some(i)).prefix(k - 1)),
        None => Err(Error::Undefined(format!("no event at {x}, so the block cannot end in 1"))),
    }
}

/// The two-machine decoder: the odd bit following `prefix` given the even bit
/// after it.
pub fn decode_f(h: &History, params: &OmegaParams, prefix: &BitString, next_even_bit: bool) -> Result<bool> {
    if params.k != 2 {
        return Err(Error::BadParameter("decode_f is the two-machine decoder; use decode_block".into()));
    }
    Ok(decode_block(h, params, prefix, next_even_bit)?.bit(0))
}

/// Decode every block of a construction and compare with omega. Returns the
/// number of positions checked.
pub fn check_decoding(c: &OmegaConstruction) -> Result<usize> {
    let k = c.params.k;
    for j in 0..c.rounds {
        let prefix = c.omega.prefix(j * k);
        let last = c.omega.bit((j + 1) * k - 1);
        let got = c.decode_block(&prefix, last)?;
        let want = c.omega.suffix_from(j * k).prefix(k - 1);
        if got != want {
            return Err(Error::Certification(format!("decoding block {j} gave {got}, expected {want}")));
        }
    }
    Ok(c.rounds)
}

/// Nodes written by at least one approximation of omega.
pub fn visited_boundaries(c: &OmegaConstruction) -> BTreeSet<BitString> {
    c.p.entries().filter(|(x, _)| x.len() % c.params.k == 0).map(|(x, _)| x.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::qi;

    fn b(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn params() {
        let e = OmegaParams::epsilon(q(1, 2)).unwrap();
        assert_eq!(e.delta, Some(q(1, 16)));
        assert_eq!(e.eta(), &q(1, 4));
        assert_eq!(e.gamma_exponent(), (1, 1));
        assert!(e.beta(64).unwrap().contains(&q(7, 8)));
        let k4 = OmegaParams::kmod(4, q(1, 2)).unwrap();
        assert_eq!(k4.delta, Some(q(1, 64)));
        assert_eq!(k4.eta(), &q(1, 8));
        assert_eq!(k4.block(Some(2)), b("0101"));
        assert_eq!(k4.block(Some(4)), b("0001"));
        assert_eq!(k4.block(Some(1)), b("1001"));
        let k3 = OmegaParams::kmod(3, q(1, 2)).unwrap();
        assert_eq!(k3.delta, Some(q(1, 36)));
        assert_eq!(k3.gamma_exponent(), (3, 2));
        assert!(OmegaParams::kmod(3, q(1, 3)).is_ok());
        assert!(OmegaParams::kmod(3, q(2, 5)).is_err());
        assert!(OmegaParams::epsilon(q(2, 5)).is_ok());
        assert!(OmegaParams::epsilon(qi(1)).is_err());
        let two = OmegaParams::kmod(2, q(2, 3)).unwrap();
        assert_eq!(two, OmegaParams::epsilon(q(2, 3)).unwrap());
    }

    #[test]
    fn silent_three_quarters() {
        let c = build_omega(&EnumerationStream::empty(), &OmegaParams::three_quarters(), 3).unwrap();
        assert_eq!(c.omega, b("000000"));
        assert_eq!(c.params.threshold_exact(&c.final_counts, 1), Some(q(1, 8)));
        assert_eq!(c.params.threshold_exact(&c.final_counts, 2), Some(q(1, 8)));
        assert_eq!(c.p.get(&c.omega), q(1, 27));
        assert!(c.verify().all_pass());
    }

    #[test]
    fn odd_every_round() {
        // Q_odd(x0) crosses o/2 after each odd block
        let mut s = EnumerationStream::empty();
        s.push(0, 0, b("0"), q(3, 5));
        s.push(1, 0, b("1"), q(2, 5));
        s.push(1, 0, b("110"), q(3, 10));
        let c = build_omega(&s, &OmegaParams::three_quarters(), 2).unwrap();
        assert_eq!(c.omega, b("1111"));
        assert_eq!(c.params.threshold_exact(&c.final_counts, 1), Some(q(1, 4)));
        assert_eq!(c.params.threshold_exact(&c.final_counts, 2), Some(qi(1)));
        assert_eq!(c.p.get(&c.omega), q(4, 9));
        assert!(c.verify().all_pass(), "{:?}", c.verify());
        assert_eq!(check_decoding(&c).unwrap(), 2);
        assert!(c.decode_block(&b("11"), false).unwrap() == b("0"));
        assert!(c.decode_block(&b("10"), true).is_err());
        assert!(c.decode_block(&b("01"), true).is_err());
    }

    #[test]
    fn even_event_then_quiet() {
        let mut s = EnumerationStream::empty();
        s.push(0, 1, b("00"), q(3, 5));
        let c = build_omega(&s, &OmegaParams::three_quarters(), 2).unwrap();
        assert_eq!(c.omega, b("0100"));
        assert!(c.verify().all_pass());
        // the quiet approximation 00.. was visited before the event
        assert!(c.p.get(&b("00")) > qi(0));
        assert_eq!(check_decoding(&c).unwrap(), 2);
    }

    #[test]
    fn silent_epsilon() {
        let params = OmegaParams::epsilon(q(1, 2)).unwrap();
        let c = build_omega(&EnumerationStream::empty(), &params, 2).unwrap();
        assert_eq!(params.threshold_exact(&c.final_counts, 1), Some(q(1, 16)));
        let lhs = pow(&(Q::one() - q(1, 16)), 2) * c.p.get(&c.omega);
        assert_eq!(lhs, q(1, 256));
        assert!(c.verify().all_pass());
    }

    #[test]
    fn irrational_gamma_stays_exact() {
        let params = OmegaParams::kmod(3, q(1, 2)).unwrap();
        let mut s = EnumerationStream::empty();
        // Q_2 crosses 2k delta = 1/6 at 000 (anchor 00)
        s.push(0, 1, b("00"), q(1, 5));
        let c = build_omega(&s, &params, 3).unwrap();
        assert_eq!(c.omega.prefix(3), b("011"));
        let v = c.verify();
        assert!(v.all_pass(), "{v:?}");
        assert_eq!(check_decoding(&c).unwrap(), 3);
        let t = params.threshold_interval(&c.final_counts, 2, 128);
        assert!(t.lo() < t.hi());
    }

    #[test]
    fn fault_truncates() {
        let mut s = EnumerationStream::empty();
        s.push(0, 0, b("0"), q(3, 5));
        s.push(1, 0, b("1"), q(3, 5));
        let c = build_omega(&s, &OmegaParams::three_quarters(), 1).unwrap();
        assert!(c.fault.is_some());
        assert_eq!(c.omega, b("11"));
    }
}

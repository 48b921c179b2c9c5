//! The 2/3 construction: omega and thresholds `t_n` with
//! `(Q_odd Q_ev)(omega_1..2n) <= t_n`, a semimeasure `P = (3/2)^n t_n` on
//! visited prefixes, and a factorisation of the pair-swapped `P~` into an
//! odd and an even online semimeasure.
//!
//! At a boundary `x` with threshold `t`: `T00` is `(Q_odd Q_ev)(x00) > t/9`
//! and `T10` is `(Q_odd Q_ev)(x10) > t/9`.
//!
//! | events        | block | next threshold |
//! |---------------|-------|----------------|
//! | no `T00`      | `00`  | `t/9`          |
//! | `T00` only    | `10`  | `t/9`          |
//! | both, `Q_odd(x1) <= Q_odd(x0)` | `11` | `4t/9` |
//! | both, otherwise | `01` | `4t/9`        |
//!
//! `Q_odd` at `x0`, `x1` is read at the step where both events hold.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::game::{EventKind, ThresholdEvent};
use crate::num::{pow, q, to_wire, Q};
use crate::semimeasure::{MassAssignment, OnlineConstraint, OnlineMassAssignment};
use crate::stream::{EnumerationStream, History};

type Time = Option<u64>;

#[derive(Debug, Clone)]
struct Node23 {
    t00: Option<Time>,
    t10: Option<Time>,
    /// Block written once both events hold, with the snapshot `(Q_odd(x0), Q_odd(x1))`.
    late: Option<(bool, Q, Q)>,
}

impl Node23 {
    fn block_at(&self, t: Time) -> BitString {
        let fired = |s: Option<Time>| s.is_some_and(|s| s <= t);
        let bits = if !fired(self.t00) {
            [false, false]
        } else if !fired(self.t10) {
            [true, false]
        } else if self.late.as_ref().expect("both fired").0 {
            [true, true]
        } else {
            [false, true]
        };
        BitString::from_bits(bits)
    }
}

fn next_threshold(t: &Q, block: &BitString) -> Q {
    if block.bit(1) {
        t * q(4, 9)
    } else {
        t * q(1, 9)
    }
}

struct Detector23<'a> {
    h: &'a History,
    memo: HashMap<BitString, Node23>,
}

impl<'a> Detector23<'a> {
    fn node(&mut self, x: &BitString, t: &Q) -> Node23 {
        if let Some(n) = self.memo.get(x) {
            return n.clone();
        }
        let theta = t * q(1, 9);
        let probe = |a: bool| {
            let y = x.child(a).child(false);
            vec![(0, y.clone()), (1, y)]
        };
        let t00 = self.h.first_product_exceed(&probe(false), &theta);
        let t10 = self.h.first_product_exceed(&probe(true), &theta);
        let late = match (t00, t10) {
            (Some(a), Some(b)) => {
                let s = a.max(b);
                let p = self.h.value_at(0, &x.child(false), s);
                let r = self.h.value_at(0, &x.child(true), s);
                Some((r <= p, p, r))
            }
            _ => None,
        };
        let n = Node23 { t00, t10, late };
        self.memo.insert(x.clone(), n.clone());
        n
    }

    fn path(&mut self, rounds: usize, time: Time) -> Vec<(BitString, Q)> {
        let mut x = BitString::empty();
        let mut t = Q::one();
        let mut out = Vec::with_capacity(rounds + 1);
        for _ in 0..rounds {
            out.push((x.clone(), t.clone()));
            let block = self.node(&x, &t).block_at(time);
            t = next_threshold(&t, &block);
            x.extend(&block);
        }
        out.push((x, t));
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Round23 {
    pub round: usize,
    pub prefix: BitString,
    pub block: BitString,
    #[serde(with = "crate::num::q_str")]
    pub threshold: Q,
    pub events: Vec<ThresholdEvent>,
    /// `(Q_odd(x0), Q_odd(x1))` when both events hold.
    pub snapshot: Option<(String, String)>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Omega23Checks {
    pub thresholds_sound: bool,
    pub p_valid: bool,
    pub identity_holds: bool,
    pub final_inequality: bool,
    pub factors_valid: bool,
    pub product_identity: bool,
    pub problems: Vec<String>,
}

impl Omega23Checks {
    pub fn all_pass(&self) -> bool {
        self.thresholds_sound
            && self.p_valid
            && self.identity_holds
            && self.final_inequality
            && self.factors_valid
            && self.product_identity
    }
}

#[derive(Debug, Clone)]
pub struct Omega23 {
    pub rounds: usize,
    pub omega: BitString,
    /// `t_0, ..., t_n` along omega.
    pub thresholds: Vec<Q>,
    pub log: Vec<Round23>,
    pub p: MassAssignment,
    /// Factors of the pair-swapped `P~`.
    pub p_odd: OnlineMassAssignment,
    pub p_ev: OnlineMassAssignment,
    pub fault: Option<String>,
    pub history: History,
    visited: BTreeMap<BitString, Q>,
}

/// Swap the bits of every aligned pair.
pub fn swap_pairs(x: &BitString) -> BitString {
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() / 2 {
        out.push(x.bit(2 * j + 1));
        out.push(x.bit(2 * j));
    }
    if x.len() % 2 == 1 {
        out.push(x.bit(x.len() - 1));
    }
    BitString::from_bits(out)
}

pub fn build_omega_23(stream: &EnumerationStream, rounds: usize) -> Result<Omega23> {
    if rounds == 0 {
        return Err(Error::BadParameter("rounds must be at least 1".into()));
    }
    let constraints = [OnlineConstraint::odd(), OnlineConstraint::even()];
    let (history, fault) = match History::new(stream, &constraints, true) {
        Ok(h) => (h, None),
        Err(e) => {
            let step = match &e {
                Error::InvalidStream { step, .. } | Error::NonIncreasing { step, .. } | Error::StepOrder { step } => {
                    *step
                }
                _ => return Err(e),
            };
            let kept: Vec<_> = stream.updates().iter().filter(|u| u.step < step).cloned().collect();
            (History::new(&EnumerationStream::new(kept), &constraints, true)?, Some(e.to_string()))
        }
    };
    let mut det = Detector23 { h: &history, memo: HashMap::new() };
    let mut times: Vec<Time> = vec![None];
    times.extend(history.steps().iter().map(|&s| Some(s)));
    let mut visited: BTreeMap<BitString, Q> = BTreeMap::new();
    let mut final_path = Vec::new();
    for &t in &times {
        let path = det.path(rounds, t);
        for (x, th) in &path {
            visited.insert(x.clone(), th.clone());
        }
        final_path = path;
    }

    let three_halves = q(3, 2);
    let mut p = MassAssignment::new();
    for (x, t) in &visited {
        p.set(x.clone(), pow(&three_halves, (x.len() / 2) as u32) * t);
    }
    let mut inner: BTreeMap<BitString, Q> = BTreeMap::new();
    for x in visited.keys().filter(|x| !x.is_empty()) {
        *inner.entry(x.prefix(x.len() - 1)).or_insert_with(Q::zero) += p.get(x);
    }
    for (x, v) in inner {
        p.set(x, v);
    }

    // factor the swapped assignment pair by pair
    let mut p_odd = OnlineMassAssignment::new(OnlineConstraint::odd());
    let mut p_ev = OnlineMassAssignment::new(OnlineConstraint::even());
    p_odd.set(BitString::empty(), Q::one());
    p_ev.set(BitString::empty(), Q::one());
    for x in visited.keys().filter(|x| !x.is_empty()) {
        let y = swap_pairs(x);
        let parent = y.prefix(y.len() - 2);
        let (po, pe) = (p_odd.value(&parent), p_ev.value(&parent));
        let first = y.bit(y.len() - 2);
        p_odd.set(y.prefix(y.len() - 1), if first { q(2, 3) * &po } else { q(1, 3) * &po });
        p_ev.set(y, if first { pe } else { q(1, 2) * &pe });
    }

    let mut log = Vec::with_capacity(rounds);
    let mut omega = BitString::empty();
    let mut thresholds = Vec::with_capacity(rounds + 1);
    for (r, (x, t)) in final_path.iter().enumerate() {
        thresholds.push(t.clone());
        if r == rounds {
            break;
        }
        let n = det.node(x, t);
        let block = n.block_at(history.steps().last().copied());
        let mut events = Vec::new();
        for (kind, s) in [(EventKind::T00, n.t00), (EventKind::T10, n.t10)] {
            if let Some(s) = s {
                events.push(ThresholdEvent { kind, node: x.clone(), step: s.unwrap_or(0) });
            }
        }
        let snapshot = n.late.as_ref().map(|(_, a, b)| (to_wire(a), to_wire(b)));
        omega.extend(&block);
        log.push(Round23 { round: r, prefix: x.clone(), block, threshold: t.clone(), events, snapshot });
    }
    Ok(Omega23 { rounds, omega, thresholds, log, p, p_odd, p_ev, fault, history, visited })
}

impl Omega23 {
    pub fn events(&self) -> Vec<ThresholdEvent> {
        self.log.iter().flat_map(|r| r.events.iter().cloned()).collect()
    }

    pub fn verify(&self) -> Omega23Checks {
        let mut c = Omega23Checks {
            thresholds_sound: true,
            p_valid: true,
            identity_holds: true,
            final_inequality: true,
            factors_valid: true,
            product_identity: true,
            problems: Vec::new(),
        };
        let h = &self.history;
        let prod = |x: &BitString| h.final_value(0, x) * h.final_value(1, x);
        for (j, t) in self.thresholds.iter().enumerate() {
            let x = self.omega.prefix(2 * j);
            let v = prod(&x);
            if v > *t {
                c.thresholds_sound = false;
                c.problems.push(format!("(Q_odd Q_ev)({x}) = {} exceeds t_{j} = {}", to_wire(&v), to_wire(t)));
            }
            if self.p.get(&x) != pow(&q(3, 2), j as u32) * t {
                c.identity_holds = false;
                c.problems.push(format!("P({x}) is not (3/2)^{j} t_{j}"));
            }
        }
        for v in self.p.validate() {
            c.p_valid = false;
            c.problems.push(format!("P: {v}"));
        }
        let n = self.rounds as u32;
        if prod(&self.omega) > pow(&q(2, 3), n) * self.p.get(&self.omega) {
            c.final_inequality = false;
            c.problems.push("product at omega exceeds (2/3)^n P(omega)".into());
        }
        for (name, f) in [("P_odd", &self.p_odd), ("P_ev", &self.p_ev)] {
            for v in f.validate() {
                c.factors_valid = false;
                c.problems.push(format!("{name}: {v}"));
            }
        }
        for x in self.visited.keys() {
            let y = swap_pairs(x);
            if self.p_odd.value(&y) * self.p_ev.value(&y) != self.p.get(x) {
                c.product_identity = false;
                c.problems.push(format!("P_odd P_ev differs from P~ at {y}"));
            }
        }
        c
    }

    pub fn to_json(&self) -> Value {
        let p: BTreeMap<String, String> = self.p.entries().map(|(k, v)| (k.to_wire(), to_wire(v))).collect();
        let factor = |f: &OnlineMassAssignment| -> BTreeMap<String, String> {
            f.base().entries().map(|(k, v)| (k.to_wire(), to_wire(v))).collect()
        };
        json!({
            "variant": "2-3",
            "rounds": self.rounds,
            "omega": self.omega.to_wire(),
            "thresholds": self.thresholds.iter().map(to_wire).collect::<Vec<_>>(),
            "round_log": self.log,
            "p": p,
            "p_omega": to_wire(&self.p.get(&self.omega)),
            "p_odd": factor(&self.p_odd),
            "p_ev": factor(&self.p_ev),
            "checks": self.verify(),
            "fault": self.fault,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::qi;

    fn b(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn swap() {
        assert_eq!(swap_pairs(&b("100111")), b("011011"));
        assert_eq!(swap_pairs(&b("101")), b("011"));
    }

    #[test]
    fn silent_bob() {
        let c = build_omega_23(&EnumerationStream::empty(), 3).unwrap();
        assert_eq!(c.omega, b("000000"));
        assert_eq!(c.p.get(&c.omega), q(1, 216));
        assert!(c.verify().all_pass(), "{:?}", c.verify());
    }

    #[test]
    fn both_events_pick_small_branch() {
        let mut s = EnumerationStream::empty();
        // T00 at step 1, then T10 with Q_odd(1) < Q_odd(0)
        s.push(1, 0, b("0"), q(1, 2));
        s.push(1, 1, b("00"), q(1, 2));
        s.push(3, 0, b("1"), q(2, 5));
        s.push(3, 1, b("10"), q(1, 2));
        let c = build_omega_23(&s, 2).unwrap();
        assert_eq!(c.omega.prefix(2), b("11"));
        assert_eq!(c.thresholds[1], q(4, 9));
        let v = c.verify();
        assert!(v.all_pass(), "{v:?}");
        // the approximations 00 and 10 were visited as well
        assert_eq!(c.p.get(&b("00")), q(1, 6));
        assert_eq!(c.p.get(&b("10")), q(1, 6));
        assert_eq!(c.p.get(&b("11")), q(2, 3));
        assert_eq!(c.p.get(&BitString::empty()), qi(1));
        assert_eq!(c.events().len(), 2);
    }

    #[test]
    fn larger_right_odd_mass_picks_01() {
        let mut s = EnumerationStream::empty();
        s.push(1, 0, b("0"), q(2, 5));
        s.push(1, 1, b("00"), q(1, 2));
        s.push(1, 0, b("1"), q(1, 2));
        s.push(1, 1, b("10"), q(1, 2));
        let c = build_omega_23(&s, 1).unwrap();
        assert_eq!(c.omega, b("01"));
        assert!(c.verify().all_pass(), "{:?}", c.verify());
    }
}

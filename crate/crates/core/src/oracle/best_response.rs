//! Bob's best response to a fixed reactive Alice.
//!
//! A reactive Alice opens with a fixed assignment and replies once, the first
//! time Bob's state satisfies an upward-closed trigger. Each branch of her
//! play fixes her final assignment and the set of Bob end states that can
//! follow it; Bob's slack `min_x (Q_odd(x) Q_ev(x) - P(x))` is maximised over
//! that set one pair factor at a time. Bob beats Alice iff some branch has
//! positive slack. At least two Bob moves are assumed, so Bob can keep raising
//! after Alice's reply.

use std::collections::{BTreeMap, HashMap};

use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::{q, to_wire, Q};
use crate::strategies::{Alice23, Alice34};

use super::{grid_q, BobGrid, DiscreteGameSpec, LEAVES};

type PairPred = Box<dyn Fn((u32, u32), (u32, u32)) -> bool + Sync>;

pub struct Branch {
    pub name: String,
    /// Alice's final leaf values in this branch.
    pub alice: [Q; 4],
    /// Allowed final odd pair `(p, q)`.
    pub odd: Box<dyn Fn(u32, u32) -> bool + Sync>,
    /// Allowed `(u, v)` given `(p, q)`.
    pub left: PairPred,
    /// Allowed `(r, s)` given `(p, q)`.
    pub right: PairPred,
}

pub trait ReactiveAlice: Sync {
    fn label(&self) -> String;
    fn opening(&self) -> [Q; 4];
    /// Upward closed in Bob's state.
    fn triggered(&self, n: u32, b: &BobGrid) -> bool;
    /// Alice's full assignment after replying to `b`.
    fn reply(&self, n: u32, b: &BobGrid) -> [Q; 4];
    /// Branches covering every reachable end state.
    fn branches(&self, n: u32) -> Vec<Branch>;
}

fn yes2() -> PairPred {
    Box::new(|_, _| true)
}

impl ReactiveAlice for Alice34 {
    fn label(&self) -> String {
        "alice_34".into()
    }

    fn opening(&self) -> [Q; 4] {
        [q(1, 4), Q::zero(), Q::zero(), Q::zero()]
    }

    fn triggered(&self, n: u32, b: &BobGrid) -> bool {
        2 * b.p > n || 2 * b.u > n
    }

    fn reply(&self, n: u32, b: &BobGrid) -> [Q; 4] {
        let mut a = self.opening();
        if 2 * b.p > n {
            a[3] = q(1, 2);
        } else if 2 * b.u > n {
            a[1] = q(1, 2);
        }
        a
    }

    fn branches(&self, n: u32) -> Vec<Branch> {
        let mut odd_push = self.opening();
        odd_push[3] = q(1, 2);
        let mut even_push = self.opening();
        even_push[1] = q(1, 2);
        vec![
            Branch {
                name: "quiet".into(),
                alice: self.opening(),
                odd: Box::new(move |p, _| 2 * p <= n),
                left: Box::new(move |_, (u, _)| 2 * u <= n),
                right: yes2(),
            },
            Branch {
                name: "odd push, 11".into(),
                alice: odd_push,
                odd: Box::new(move |p, _| 2 * p > n),
                left: yes2(),
                right: yes2(),
            },
            Branch {
                name: "even push, 01".into(),
                alice: even_push,
                odd: Box::new(|_, _| true),
                left: Box::new(move |_, (u, _)| 2 * u > n),
                right: yes2(),
            },
        ]
    }
}

impl ReactiveAlice for Alice23 {
    fn label(&self) -> String {
        "alice_23".into()
    }

    fn opening(&self) -> [Q; 4] {
        [q(1, 9), Q::zero(), q(1, 9), Q::zero()]
    }

    fn triggered(&self, n: u32, b: &BobGrid) -> bool {
        let nn = (n * n) as u64;
        let pr = b.products();
        9 * pr[0] > nn && 9 * pr[2] > nn
    }

    fn reply(&self, _: u32, b: &BobGrid) -> [Q; 4] {
        let mut a = self.opening();
        let k = if b.p >= b.q { 3 } else { 1 };
        a[k] = q(4, 9);
        a
    }

    fn branches(&self, n: u32) -> Vec<Branch> {
        let nn = (n * n) as u64;
        let big = move |x: u32, y: u32| 9 * x as u64 * y as u64 > nn;
        let mut a11 = self.opening();
        a11[3] = q(4, 9);
        let mut a01 = self.opening();
        a01[1] = q(4, 9);
        vec![
            Branch {
                name: "quiet at 00".into(),
                alice: self.opening(),
                odd: Box::new(|_, _| true),
                left: Box::new(move |(p, _), (u, _)| !big(p, u)),
                right: yes2(),
            },
            Branch {
                name: "quiet at 10".into(),
                alice: self.opening(),
                odd: Box::new(|_, _| true),
                left: yes2(),
                right: Box::new(move |(_, q), (r, _)| !big(q, r)),
            },
            // Trigger seen with Q_odd(0) >= Q_odd(1): some earlier state
            // (p, min(p, q), u, r) triggers.
            Branch {
                name: "reply at 11".into(),
                alice: a11,
                odd: Box::new(|_, _| true),
                left: Box::new(move |(p, _), (u, _)| big(p, u)),
                right: Box::new(move |(p, q), (r, _)| big(p.min(q), r)),
            },
            // Trigger seen with Q_odd(0) < Q_odd(1): (min(p, q - 1), q, u, r).
            Branch {
                name: "reply at 01".into(),
                alice: a01,
                odd: Box::new(|_, q| q >= 1),
                left: Box::new(move |(p, q), (u, _)| q >= 1 && big(p.min(q - 1), u)),
                right: Box::new(move |(_, q), (r, _)| big(q, r)),
            },
        ]
    }
}

/// Plays `value` on one leaf at once and never again.
#[derive(Debug, Clone)]
pub struct AllAtOnce {
    pub leaf: usize,
    pub value: Q,
}

impl ReactiveAlice for AllAtOnce {
    fn label(&self) -> String {
        format!("all_at_once({}, {})", LEAVES[self.leaf], to_wire(&self.value))
    }

    fn opening(&self) -> [Q; 4] {
        let mut a: [Q; 4] = Default::default();
        a[self.leaf] = self.value.clone();
        a
    }

    fn triggered(&self, _: u32, _: &BobGrid) -> bool {
        false
    }

    fn reply(&self, _: u32, _: &BobGrid) -> [Q; 4] {
        self.opening()
    }

    fn branches(&self, _: u32) -> Vec<Branch> {
        vec![Branch {
            name: "quiet".into(),
            alice: self.opening(),
            odd: Box::new(|_, _| true),
            left: yes2(),
            right: yes2(),
        }]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchResult {
    pub name: String,
    pub alice: BTreeMap<String, String>,
    /// Bob's best end state, as numerators over the grid.
    pub bob: Option<BobGrid>,
    /// Largest min-over-leaves slack; absent if the branch is unreachable.
    pub slack: Option<String>,
    pub bob_beats: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BestResponse {
    pub strategy: String,
    pub grid: String,
    pub rounds: u32,
    pub branches: Vec<BranchResult>,
    pub worst_branch: Option<String>,
    pub best_slack: Option<String>,
    pub bob_beats: bool,
}

/// Alice's values as integers over a common denominator.
fn scale(a: &[Q; 4]) -> (i128, [i128; 4]) {
    let d = a.iter().fold(num_bigint::BigInt::from(1), |acc, x| acc.lcm(x.denom()));
    let nums = a.clone().map(|x| (x * Q::from_integer(d.clone())).to_integer().to_i128().expect("small numerator"));
    (d.to_i128().expect("small denominator"), nums)
}

fn pairs(n: u32) -> Vec<(u32, u32)> {
    (0..=n).flat_map(|a| (0..=n - a).map(move |b| (a, b))).collect()
}

/// Best `(slack, end state)` in one branch, slack in units of `1/(N^2 d)`.
fn branch_best(br: &Branch, n: u32) -> Option<(i128, BobGrid)> {
    let (d, a) = scale(&br.alice);
    let nn = (n * n) as i128;
    let ps = pairs(n);
    let side = |x: u32, pq: (u32, u32), pred: &PairPred, ka: usize| -> Option<(i128, (u32, u32))> {
        ps.iter()
            .filter(|&&yz| pred(pq, yz))
            .map(|&(y, z)| {
                let s1 = x as i128 * y as i128 * d - a[ka] * nn;
                let s2 = x as i128 * z as i128 * d - a[ka + 1] * nn;
                (s1.min(s2), (y, z))
            })
            .max_by_key(|(s, yz)| (*s, std::cmp::Reverse(*yz)))
    };
    ps.par_iter()
        .filter(|&&(p, q)| (br.odd)(p, q))
        .filter_map(|&(p, q)| {
            let (sl, (u, v)) = side(p, (p, q), &br.left, 0)?;
            let (sr, (r, s)) = side(q, (p, q), &br.right, 2)?;
            Some((sl.min(sr), BobGrid { p, q, u, v, r, s }))
        })
        .max_by_key(|(s, b)| (*s, std::cmp::Reverse((b.p, b.q, b.u, b.v, b.r, b.s))))
}

pub fn best_response(alice: &dyn ReactiveAlice, spec: &DiscreteGameSpec) -> Result<BestResponse> {
    spec.check()?;
    if spec.rounds < 2 {
        return Err(Error::BadParameter("best response needs at least two Bob moves".into()));
    }
    let n = spec.grid;
    let np = pairs(n).len() as u128;
    let branches = alice.branches(n);
    let size = np * np * 2 * branches.len() as u128;
    if size > spec.max_states {
        return Err(Error::StateSpace { size, bound: spec.max_states });
    }
    let mut results = Vec::new();
    let mut worst: Option<(Q, String)> = None;
    for br in &branches {
        let best = branch_best(br, n);
        let (d, _) = scale(&br.alice);
        let slack = best.as_ref().map(|(s, _)| Q::new((*s).into(), (d * (n * n) as i128).into()));
        if let Some(s) = &slack {
            if worst.as_ref().is_none_or(|(w, _)| s > w) {
                worst = Some((s.clone(), br.name.clone()));
            }
        }
        results.push(BranchResult {
            name: br.name.clone(),
            alice: LEAVES
                .iter()
                .zip(&br.alice)
                .filter(|(_, x)| !x.is_zero())
                .map(|(l, x)| (l.to_string(), to_wire(x)))
                .collect(),
            bob: best.map(|(_, b)| b),
            bob_beats: slack.as_ref().is_some_and(|s| s > &Q::zero()),
            slack: slack.as_ref().map(to_wire),
        });
    }
    Ok(BestResponse {
        strategy: alice.label(),
        grid: format!("1/{n}"),
        rounds: spec.rounds,
        bob_beats: results.iter().any(|r| r.bob_beats),
        worst_branch: worst.as_ref().map(|(_, name)| name.clone()),
        best_slack: worst.as_ref().map(|(s, _)| to_wire(s)),
        branches: results,
    })
}

/// Bob's best slack by exhaustion over all trigger states and all end states
/// above them, using only `triggered` and `reply`. Grids up to 12.
pub fn brute_force_value(alice: &dyn ReactiveAlice, n: u32) -> Result<Q> {
    if n == 0 || n > 12 {
        return Err(Error::BadParameter("brute force supports grids 1..=12".into()));
    }
    let ps = pairs(n);
    let np = ps.len();
    let index: HashMap<(u32, u32), usize> = ps.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let up: Vec<Vec<usize>> = ps
        .iter()
        .map(|&(a, b)| [(a + 1, b), (a, b + 1)].iter().filter_map(|p| index.get(p).copied()).collect())
        .collect();
    let states: Vec<BobGrid> = (0..np * np * np)
        .map(|i| {
            let ((p, q), (u, v), (r, s)) = (ps[i / (np * np)], ps[(i / np) % np], ps[i % np]);
            BobGrid { p, q, u, v, r, s }
        })
        .collect();
    let slack = |a: &[Q; 4], b: &BobGrid| -> Q {
        b.products().iter().zip(a).map(|(&pr, x)| grid_q(pr as u32, n * n) - x).min().expect("four leaves")
    };
    let opening = alice.opening();
    let mut best: Option<Q> = None;
    let mut groups: HashMap<Vec<Q>, Vec<usize>> = HashMap::new();
    for (i, b) in states.iter().enumerate() {
        if alice.triggered(n, b) {
            groups.entry(alice.reply(n, b).to_vec()).or_default().push(i);
        } else {
            let s = slack(&opening, b);
            if best.as_ref().is_none_or(|x| s > *x) {
                best = Some(s);
            }
        }
    }
    for (reply, members) in groups {
        let a: [Q; 4] = reply.try_into().expect("four leaves");
        let mut m: Vec<Q> = states.iter().map(|b| slack(&a, b)).collect();
        // Max over all states above, one factor at a time.
        for stride in [1, np, np * np] {
            for i in (0..m.len()).rev() {
                let k = (i / stride) % np;
                for &u in &up[k] {
                    let j = i - k * stride + u * stride;
                    if m[j] > m[i] {
                        m[i] = m[j].clone();
                    }
                }
            }
        }
        for i in members {
            if best.as_ref().is_none_or(|x| m[i] > *x) {
                best = Some(m[i].clone());
            }
        }
    }
    best.ok_or_else(|| Error::BadParameter("empty grid".into()))
}

/// Grids used for the refinement checks.
pub const REFINING_GRIDS: [u32; 11] = [4, 6, 8, 9, 12, 16, 18, 24, 27, 32, 36];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::parse_q;

    fn spec(n: u32) -> DiscreteGameSpec {
        DiscreteGameSpec::new(n, q(3, 4), 3).unwrap()
    }

    fn best_q(r: &BestResponse) -> Q {
        parse_q(r.best_slack.as_ref().unwrap()).unwrap()
    }

    #[test]
    fn shipped_strategies_hold_on_small_grids() {
        for n in [4, 6, 9] {
            let r34 = best_response(&Alice34::new(), &spec(n)).unwrap();
            assert!(!r34.bob_beats, "{r34:?}");
            let r23 = best_response(&Alice23::new(), &spec(n)).unwrap();
            assert!(!r23.bob_beats, "{r23:?}");
        }
    }

    #[test]
    fn branches_match_brute_force() {
        for n in [2, 3, 4, 6, 8, 9] {
            for alice in [&Alice34::new() as &dyn ReactiveAlice, &Alice23::new()] {
                let r = best_response(alice, &spec(n)).unwrap();
                assert_eq!(best_q(&r), brute_force_value(alice, n).unwrap(), "{} on 1/{n}", alice.label());
            }
        }
    }

    #[test]
    fn single_leaf_is_beaten() {
        let a = AllAtOnce { leaf: 0, value: q(1, 4) };
        let r = best_response(&a, &spec(4)).unwrap();
        assert!(r.bob_beats);
        assert_eq!(best_q(&r), brute_force_value(&a, 4).unwrap());
        let b = r.branches[0].bob.unwrap();
        assert!(b.products().iter().all(|&x| x > 0) && b.products()[0] > 4);
    }

    #[test]
    fn rejects_one_round() {
        let s = DiscreteGameSpec::new(4, q(3, 4), 1).unwrap();
        assert!(best_response(&Alice34::new(), &s).is_err());
    }
}

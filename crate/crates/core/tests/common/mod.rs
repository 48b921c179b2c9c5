#![allow(dead_code)]

use onlinek::num::q;
use onlinek::strategies::{build_omega, OmegaParams};
use onlinek::stream::EnumerationStream;
use onlinek::{BitString, MassAssignment, OnlineConstraint, OnlineMassAssignment, Q};
use rand::Rng;

/// Raise `node` by a random fraction of the room its parent and sibling leave.
fn raise<R: Rng>(
    rng: &mut R,
    st: &mut OnlineMassAssignment,
    s: &mut EnumerationStream,
    step: &mut u64,
    a: usize,
    node: BitString,
) {
    let (Some(parent), Some(sib)) = (node.parent(), node.sibling()) else { return };
    let cur = st.value(&node);
    let room = st.value(&parent) - st.value(&sib) - &cur;
    if room <= Q::from_integer(0.into()) {
        return;
    }
    let v = cur + room * q(rng.gen_range(3..=8), 8);
    st.set(node.clone(), v.clone());
    s.push(*step, a, node, v);
    *step += 1;
}

/// A Bob stream that keeps pushing along the path omega takes, plus some
/// off-path noise. Valid for unit-root replay by construction.
pub fn adaptive_stream<R: Rng>(rng: &mut R, params: &OmegaParams, rounds: usize) -> EnumerationStream {
    let k = params.k;
    let mut state: Vec<OnlineMassAssignment> =
        params.constraints().into_iter().map(OnlineMassAssignment::with_unit_root).collect();
    let mut s = EnumerationStream::empty();
    let mut step = 0u64;
    for j in 0..rounds {
        let x = if j == 0 { BitString::empty() } else { build_omega(&s, params, j).expect("valid stream").omega };
        for _ in 0..rng.gen_range(1..=3) {
            let a = rng.gen_range(0..k);
            let node = x.concat(&BitString::from_bits(vec![false; a + 1]));
            raise(rng, &mut state[a], &mut s, &mut step, a, node);
        }
        if rng.gen_bool(0.3) {
            let a = rng.gen_range(0..k);
            let node = x.concat(&BitString::from_bits((0..=a).map(|_| rng.gen_bool(0.5))));
            raise(rng, &mut state[a], &mut s, &mut step, a, node);
        }
    }
    s
}

/// A random semimeasure on all strings up to `depth`; some subtrees are empty.
pub fn random_semimeasure<R: Rng>(rng: &mut R, depth: usize) -> MassAssignment {
    let mut m = MassAssignment::new();
    let root = q(rng.gen_range(1..=8), 8);
    m.set(BitString::empty(), root);
    let mut frontier = vec![BitString::empty()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for x in frontier {
            let v = m.get(&x);
            let a = rng.gen_range(0..=6);
            let b = rng.gen_range(0..=(8 - a));
            for (bit, share) in [(false, a), (true, b)] {
                let y = x.child(bit);
                m.set(y.clone(), &v * q(share, 8));
                next.push(y);
            }
        }
        frontier = next;
    }
    m
}

/// Top-down feasibility: can the subtree at heap node `id` dominate its
/// leaves with value `budget`? A sum-depth child level splits the budget, a
/// copy-depth level hands it to both children.
struct Fits<'a> {
    leaves: &'a [u32],
    c: OnlineConstraint,
    width: usize,
    memo: Vec<Option<bool>>,
}

impl Fits<'_> {
    fn fits(&mut self, id: usize, budget: u32) -> bool {
        let n = self.leaves.len();
        if id >= n {
            return budget >= self.leaves[id - n];
        }
        let key = id * self.width + budget as usize;
        if let Some(v) = self.memo[key] {
            return v;
        }
        let depth = id.ilog2() as usize;
        let v = if self.c.is_sum_depth(depth + 1) {
            (0..=budget).any(|b| self.fits(2 * id, b) && self.fits(2 * id + 1, budget - b))
        } else {
            self.fits(2 * id, budget) && self.fits(2 * id + 1, budget)
        };
        self.memo[key] = Some(v);
        v
    }
}

/// Smallest root of an online assignment dominating the leaves (integer
/// units), by search over root budgets.
pub fn brute_min_root(leaves: &[u32], c: OnlineConstraint) -> u32 {
    let total: u32 = leaves.iter().sum();
    let width = total as usize + 1;
    let mut f = Fits { leaves, c, width, memo: vec![None; 2 * leaves.len() * width] };
    (0..=total).find(|&b| f.fits(1, b)).expect("the total always fits")
}

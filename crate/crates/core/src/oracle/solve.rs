//! Backward induction over the layered game `A0, B1, A1, ..., BR, AR`.
//!
//! Layer tables are indexed by `bob * alice_count + alice`. Alice's layer is
//! an upward OR-closure over her states, Bob's an upward AND-closure over his,
//! done one pair factor at a time.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use bitvec::prelude::*;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{GameView, Move, Placement, Player, Strategy};
use crate::num::to_wire;

use super::{alice_units_of, bob_grid_of, grid_q, leaf, BobGrid, DiscreteGameSpec, LEAVES};

#[derive(Debug, Clone)]
struct Lattice {
    n: u32,
    /// Pairs `(a, b)` with `a + b <= n`, by increasing sum.
    pairs: Vec<(u32, u32)>,
    pair_index: HashMap<(u32, u32), usize>,
    pair_up: Vec<Vec<usize>>,
    /// Alice's leaf vectors within budget, by increasing sum.
    alice: Vec<[u32; 4]>,
    alice_index: HashMap<[u32; 4], usize>,
    alice_up: Vec<Vec<usize>>,
}

impl Lattice {
    fn new(n: u32, budget: u32) -> Self {
        let mut pairs: Vec<(u32, u32)> = (0..=n).flat_map(|a| (0..=n - a).map(move |b| (a, b))).collect();
        pairs.sort_by_key(|&(a, b)| (a + b, a));
        let pair_index: HashMap<_, _> = pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let pair_up = pairs
            .iter()
            .map(|&(a, b)| [(a + 1, b), (a, b + 1)].iter().filter_map(|p| pair_index.get(p).copied()).collect())
            .collect();
        let mut alice = Vec::new();
        for a in 0..=budget {
            for b in 0..=budget - a {
                for c in 0..=budget - a - b {
                    for d in 0..=budget - a - b - c {
                        alice.push([a, b, c, d]);
                    }
                }
            }
        }
        alice.sort_by_key(|x| (x.iter().sum::<u32>(), *x));
        let alice_index: HashMap<_, _> = alice.iter().enumerate().map(|(i, &x)| (x, i)).collect();
        let alice_up = alice
            .iter()
            .map(|x| {
                (0..4)
                    .filter_map(|k| {
                        let mut y = *x;
                        y[k] += 1;
                        alice_index.get(&y).copied()
                    })
                    .collect()
            })
            .collect();
        Lattice { n, pairs, pair_index, pair_up, alice, alice_index, alice_up }
    }

    fn bob_count(&self) -> usize {
        self.pairs.len().pow(3)
    }

    fn bob(&self, idx: usize) -> BobGrid {
        let np = self.pairs.len();
        let (i1, i2, i3) = (idx / (np * np), (idx / np) % np, idx % np);
        let ((p, q), (u, v), (r, s)) = (self.pairs[i1], self.pairs[i2], self.pairs[i3]);
        BobGrid { p, q, u, v, r, s }
    }

    fn bob_index(&self, b: &BobGrid) -> Option<usize> {
        let np = self.pairs.len();
        let i1 = *self.pair_index.get(&(b.p, b.q))?;
        let i2 = *self.pair_index.get(&(b.u, b.v))?;
        let i3 = *self.pair_index.get(&(b.r, b.s))?;
        Some((i1 * np + i2) * np + i3)
    }

    fn covered(&self, a: &[u32; 4], prods: &[u64; 4]) -> bool {
        a.iter().zip(prods).any(|(&x, &p)| x as u64 * self.n as u64 >= p)
    }
}

/// AND-closure along one pair factor. `buf` holds `pairs.len()` slices of
/// length `len`, one per pair.
fn and_close_factor(buf: &mut [u8], len: usize, lat: &Lattice) {
    for i in (0..lat.pairs.len()).rev() {
        for &up in &lat.pair_up[i] {
            let (lo, hi) = buf.split_at_mut(up * len);
            let dst = &mut lo[i * len..(i + 1) * len];
            let src = &hi[..len];
            if len >= 1 << 16 {
                dst.par_iter_mut().zip(src.par_iter()).for_each(|(d, s)| *d &= *s);
            } else {
                dst.iter_mut().zip(src).for_each(|(d, s)| *d &= *s);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub spec: DiscreteGameSpec,
    lat: Lattice,
    /// `bob_layers[j - 1]`: Alice wins when Bob is about to make move `j`.
    bob_layers: Vec<BitVec<u64>>,
    pub alice_wins: bool,
    pub winning_openings: Vec<[u32; 4]>,
    pub state_space: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub grid: String,
    pub budget: String,
    pub rounds: u32,
    /// Winner of the discretized game.
    pub winner_under_discretization: Player,
    pub state_space: u128,
    pub alice_states: usize,
    pub bob_states: usize,
    pub winning_openings: Vec<BTreeMap<String, String>>,
    /// Alice's replies to a sample Bob play, when she wins.
    pub witness_play: Vec<BTreeMap<String, String>>,
}

pub fn solve_game(spec: &DiscreteGameSpec) -> Result<Solution> {
    spec.check()?;
    let lat = Lattice::new(spec.grid, spec.budget_units());
    let (na, nb) = (lat.alice.len(), lat.bob_count());
    let layers = 2 * spec.rounds as u128 + 1;
    let size = na as u128 * nb as u128 * layers;
    if size > spec.max_states {
        return Err(Error::StateSpace { size, bound: spec.max_states });
    }
    let np = lat.pairs.len();
    let rounds = spec.rounds as usize;
    let mut buf = vec![0u8; na * nb];
    let mut bob_layers: Vec<BitVec<u64>> = Vec::with_capacity(rounds);
    for j in (0..=rounds).rev() {
        let next = bob_layers.last();
        buf.par_chunks_mut(na).enumerate().for_each(|(b, chunk)| {
            let prods = lat.bob(b).products();
            for (a, cell) in chunk.iter_mut().enumerate() {
                let later = next.is_none_or(|w| w[b * na + a]);
                *cell = u8::from(later && lat.covered(&lat.alice[a], &prods));
            }
            for a in (0..na).rev() {
                let mut v = chunk[a];
                for &up in &lat.alice_up[a] {
                    v |= chunk[up];
                }
                chunk[a] = v;
            }
        });
        if j == 0 {
            break;
        }
        buf.par_chunks_mut(np * na).for_each(|c| and_close_factor(c, na, &lat));
        buf.par_chunks_mut(np * np * na).for_each(|c| and_close_factor(c, np * na, &lat));
        and_close_factor(&mut buf, np * np * na, &lat);
        bob_layers.push(buf.iter().map(|&x| x != 0).collect());
    }
    bob_layers.reverse();
    let alice_wins = buf[0] != 0;
    let winning_openings = (0..na).filter(|&a| bob_layers[0][a]).map(|a| lat.alice[a]).collect();
    Ok(Solution { spec: spec.clone(), lat, bob_layers, alice_wins, winning_openings, state_space: size })
}

impl Solution {
    pub fn winner(&self) -> Player {
        if self.alice_wins {
            Player::Alice
        } else {
            Player::Bob
        }
    }

    pub fn alice_states(&self) -> usize {
        self.lat.alice.len()
    }

    pub fn bob_states(&self) -> usize {
        self.lat.bob_count()
    }

    /// Whether Alice at `a` is safe to face Bob's move `j` (1-based) from `b`.
    pub fn alice_safe_before(&self, j: usize, a: &[u32; 4], b: &BobGrid) -> Option<bool> {
        let (ai, bi) = (*self.lat.alice_index.get(a)?, self.lat.bob_index(b)?);
        Some(self.bob_layers.get(j.checked_sub(1)?)?[bi * self.lat.alice.len() + ai])
    }

    fn good_after(&self, j: usize, ai: usize, b: &BobGrid, bi: usize) -> bool {
        if !self.lat.covered(&self.lat.alice[ai], &b.products()) {
            return false;
        }
        match self.bob_layers.get(j) {
            Some(w) => w[bi * self.lat.alice.len() + ai],
            None => true,
        }
    }

    /// Alice's reply as her `j`-th move (0-based): the smallest `a' >= a`
    /// that covers a leaf and stays winning.
    pub fn alice_reply(&self, j: usize, a: &[u32; 4], b: &BobGrid) -> Option<[u32; 4]> {
        let bi = self.lat.bob_index(b)?;
        self.lat
            .alice
            .iter()
            .enumerate()
            .filter(|(_, y)| y.iter().zip(a).all(|(p, q)| p >= q))
            .find(|&(ai, _)| self.good_after(j, ai, b, bi))
            .map(|(_, y)| *y)
    }

    /// Bob's move `j` (1-based) from `b` against Alice at `a`: some `b' >= b`
    /// from which no Alice reply stays winning.
    pub fn bob_reply(&self, j: usize, a: &[u32; 4], b: &BobGrid) -> Option<BobGrid> {
        let (ai, bi0) = (*self.lat.alice_index.get(a)?, self.lat.bob_index(b)?);
        if self.bob_layers.get(j.checked_sub(1)?)?[bi0 * self.lat.alice.len() + ai] {
            return None;
        }
        let a0 = self.lat.alice[ai];
        (0..self.lat.bob_count())
            .map(|bi| (bi, self.lat.bob(bi)))
            .filter(|(_, y)| y.dominates(b))
            .find(|(bi, y)| {
                !self
                    .lat
                    .alice
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| x.iter().zip(&a0).all(|(p, q)| p >= q))
                    .any(|(xi, _)| self.good_after(j, xi, y, *bi))
            })
            .map(|(_, y)| y)
    }

    pub fn report(&self) -> SolveReport {
        let n = self.spec.grid;
        let show = |a: &[u32; 4]| -> BTreeMap<String, String> {
            LEAVES
                .iter()
                .zip(a)
                .filter(|(_, &x)| x > 0)
                .map(|(l, &x)| (l.to_string(), to_wire(&grid_q(x, n))))
                .collect()
        };
        let mut witness_play = Vec::new();
        if self.alice_wins {
            // Bob raises one coordinate to the top each round.
            let mut a = [0; 4];
            let mut b = BobGrid::default();
            for j in 0..=self.spec.rounds as usize {
                if j > 0 {
                    let k = (j - 1) % 3;
                    match k {
                        0 => b.p = n - b.q,
                        1 => b.u = n - b.v,
                        _ => b.r = n - b.s,
                    }
                }
                match self.alice_reply(j, &a, &b) {
                    Some(next) => a = next,
                    None => break,
                }
                let mut m = show(&a);
                m.insert(
                    "bob".into(),
                    format!("p={} q={} u={} v={} r={} s={} (over {n})", b.p, b.q, b.u, b.v, b.r, b.s),
                );
                witness_play.push(m);
            }
        }
        SolveReport {
            grid: format!("1/{n}"),
            budget: to_wire(&self.spec.budget),
            rounds: self.spec.rounds,
            winner_under_discretization: self.winner(),
            state_space: self.state_space,
            alice_states: self.alice_states(),
            bob_states: self.bob_states(),
            winning_openings: self.winning_openings.iter().map(show).collect(),
            witness_play,
        }
    }
}

fn alice_move(a: &[u32; 4], next: &[u32; 4], n: u32) -> Move {
    LEAVES
        .iter()
        .zip(a.iter().zip(next))
        .filter(|(_, (x, y))| y > x)
        .map(|(l, (_, &y))| Placement::alice(leaf(l), grid_q(y, n)))
        .collect()
}

/// Alice following the solver's table.
#[derive(Debug, Clone)]
pub struct OracleAlice {
    solution: Arc<Solution>,
    moves: usize,
}

impl OracleAlice {
    pub fn new(solution: Arc<Solution>) -> Self {
        OracleAlice { solution, moves: 0 }
    }
}

impl Strategy for OracleAlice {
    fn name(&self) -> String {
        "oracle_alice".into()
    }

    fn respond(&mut self, view: &GameView<'_>) -> Move {
        let n = self.solution.spec.grid;
        let j = self.moves;
        self.moves += 1;
        let (Some(a), Some(b)) = (alice_units_of(view, n), bob_grid_of(view, n)) else { return Vec::new() };
        match self.solution.alice_reply(j, &a, &b) {
            Some(next) => alice_move(&a, &next, n),
            None => Vec::new(),
        }
    }
}

/// Bob following the solver's table; passes when he has no winning move.
#[derive(Debug, Clone)]
pub struct OracleBob {
    solution: Arc<Solution>,
    moves: usize,
}

impl OracleBob {
    pub fn new(solution: Arc<Solution>) -> Self {
        OracleBob { solution, moves: 0 }
    }
}

impl Strategy for OracleBob {
    fn name(&self) -> String {
        "oracle_bob".into()
    }

    fn respond(&mut self, view: &GameView<'_>) -> Move {
        let n = self.solution.spec.grid;
        self.moves += 1;
        let (Some(a), Some(b)) = (alice_units_of(view, n), bob_grid_of(view, n)) else { return Vec::new() };
        match self.solution.bob_reply(self.moves, &a, &b) {
            Some(next) => next.placements_from(&b, n),
            None => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{run_game, GameConfig, Scripted};
    use crate::num::q;
    use crate::oracle::GridBob;

    fn spec(n: u32, budget: crate::Q, rounds: u32) -> DiscreteGameSpec {
        DiscreteGameSpec::new(n, budget, rounds).unwrap()
    }

    #[test]
    fn lattice_sizes() {
        let l = Lattice::new(4, 3);
        assert_eq!(l.pairs.len(), 15);
        assert_eq!(l.alice.len(), 35);
        assert_eq!(l.bob_count(), 3375);
        let b = BobGrid { p: 1, q: 2, u: 0, v: 4, r: 3, s: 1 };
        assert_eq!(l.bob(l.bob_index(&b).unwrap()), b);
    }

    #[test]
    fn three_quarters_on_quarter_grid() {
        let s = solve_game(&spec(4, q(3, 4), 3)).unwrap();
        assert!(s.alice_wins);
        assert!(s.winning_openings.contains(&[1, 0, 0, 0]));
        let r = s.report();
        assert_eq!(r.winner_under_discretization, Player::Alice);
        assert_eq!(r.witness_play.len(), 4);
    }

    #[test]
    fn zero_budget_loses() {
        let s = solve_game(&spec(4, q(0, 1), 1)).unwrap();
        assert!(!s.alice_wins);
        assert!(s.winning_openings.is_empty());
    }

    #[test]
    fn one_round_needs_a_quarter() {
        // One Bob move: Alice replies with the smallest product, at most 1/4.
        assert!(solve_game(&spec(4, q(1, 4), 1)).unwrap().alice_wins);
        assert!(!solve_game(&spec(4, q(0, 1), 1)).unwrap().alice_wins);
    }

    #[test]
    fn state_bound() {
        let mut s = spec(9, q(2, 3), 3);
        s.max_states = 1000;
        assert!(matches!(solve_game(&s), Err(Error::StateSpace { bound: 1000, .. })));
    }

    #[test]
    fn oracle_alice_replays() {
        let sol = Arc::new(solve_game(&spec(4, q(3, 4), 3)).unwrap());
        for seed in 0..40 {
            let t = run_game(
                &mut OracleAlice::new(sol.clone()),
                &mut GridBob::new(4, seed),
                GameConfig::two_bit(q(3, 4), 7),
            )
            .unwrap();
            assert!(t.fault.is_none(), "{:?}", t.fault);
            for step in (0..7).step_by(2) {
                assert!(t.verdicts[step].alice_wins(), "seed {seed} step {step}");
            }
        }
    }

    #[test]
    fn oracle_bob_replays() {
        let sol = Arc::new(solve_game(&spec(4, q(1, 4), 2)).unwrap());
        assert!(!sol.alice_wins);
        let mut silent = Scripted::silent();
        let t = run_game(&mut silent, &mut OracleBob::new(sol.clone()), GameConfig::two_bit(q(1, 4), 5)).unwrap();
        assert!(t.fault.is_none());
        assert!((2..5).step_by(2).any(|s| !t.verdicts[s].alice_wins()));
    }
}

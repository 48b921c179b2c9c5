//! Brute-force solvers for discretized two-bit games.
//!
//! Bob's values and Alice's leaf values live on the grid `{0, 1/N, ..., 1}`.
//! Bob holds the odd pair `(p, q) = (Q_odd(0), Q_odd(1))` and the even pairs
//! `(u, v)` at `00, 01` and `(r, s)` at `10, 11`, so the leaf products are
//! `pu, pv, qr, qs`. Alice moves first and last. She must cover some leaf
//! (`P(x) >= product`) after every one of her replies; for a strategy that
//! eventually stops moving this is the limit winning condition.

mod best_response;
mod solve;

pub use best_response::{
    best_response, brute_force_value, AllAtOnce, BestResponse, Branch, BranchResult, ReactiveAlice, REFINING_GRIDS,
};
pub use solve::{solve_game, OracleAlice, OracleBob, Solution, SolveReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::game::{GameView, Move, Placement, Strategy};
use crate::num::{to_wire, Q};

pub const LEAVES: [&str; 4] = ["00", "01", "10", "11"];

/// Default bound on the number of solver states.
pub const DEFAULT_MAX_STATES: u128 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteGameSpec {
    /// Grid denominator `N`.
    pub grid: u32,
    pub budget: Q,
    /// Number of Bob moves; Alice replies to each.
    pub rounds: u32,
    pub max_states: u128,
}

impl DiscreteGameSpec {
    pub fn new(grid: u32, budget: Q, rounds: u32) -> Result<Self> {
        let s = DiscreteGameSpec { grid, budget, rounds, max_states: DEFAULT_MAX_STATES };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        if self.grid == 0 || self.grid > 64 {
            return Err(Error::BadParameter(format!("grid denominator {} outside 1..=64", self.grid)));
        }
        if self.rounds == 0 {
            return Err(Error::BadParameter("rounds must be at least 1".into()));
        }
        if self.budget < Q::from_integer(0.into()) || self.budget > Q::from_integer(1.into()) {
            return Err(Error::BadParameter(format!("budget {} outside [0, 1]", to_wire(&self.budget))));
        }
        Ok(())
    }

    /// Alice's budget in grid units, rounded down.
    pub fn budget_units(&self) -> u32 {
        let units = (&self.budget * Q::from_integer(self.grid.into())).floor().to_integer();
        u32::try_from(units).unwrap_or(0)
    }
}

/// Bob's six grid numerators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct BobGrid {
    pub p: u32,
    pub q: u32,
    pub u: u32,
    pub v: u32,
    pub r: u32,
    pub s: u32,
}

impl BobGrid {
    /// Leaf products in units of `1/N^2`, in leaf order.
    pub fn products(&self) -> [u64; 4] {
        let m = |a: u32, b: u32| a as u64 * b as u64;
        [m(self.p, self.u), m(self.p, self.v), m(self.q, self.r), m(self.q, self.s)]
    }

    pub fn is_valid(&self, n: u32) -> bool {
        self.p + self.q <= n && self.u + self.v <= n && self.r + self.s <= n
    }

    pub fn dominates(&self, o: &BobGrid) -> bool {
        self.p >= o.p && self.q >= o.q && self.u >= o.u && self.v >= o.v && self.r >= o.r && self.s >= o.s
    }

    /// Placements that raise Bob from `from` to `self`.
    pub fn placements_from(&self, from: &BobGrid, n: u32) -> Move {
        let mut mv = Vec::new();
        let coords = [
            (0, "0", self.p, from.p),
            (0, "1", self.q, from.q),
            (1, "00", self.u, from.u),
            (1, "01", self.v, from.v),
            (1, "10", self.r, from.r),
            (1, "11", self.s, from.s),
        ];
        for (a, node, new, old) in coords {
            if new > old {
                mv.push(Placement::new(a, leaf(node), grid_q(new, n)));
            }
        }
        mv
    }
}

pub(crate) fn leaf(s: &str) -> BitString {
    s.parse().expect("static node")
}

pub(crate) fn grid_q(k: u32, n: u32) -> Q {
    Q::new((k as i64).into(), (n as i64).into())
}

fn to_units(x: &Q, n: u32) -> Option<u32> {
    let scaled = x * Q::from_integer(n.into());
    if !scaled.is_integer() {
        return None;
    }
    u32::try_from(scaled.to_integer()).ok()
}

/// Bob's values as grid numerators, if they lie on the grid.
pub fn bob_grid_of(view: &GameView<'_>, n: u32) -> Option<BobGrid> {
    let g = |a: usize, node: &str| to_units(&view.bob_value(a, &leaf(node)), n);
    Some(BobGrid { p: g(0, "0")?, q: g(0, "1")?, u: g(1, "00")?, v: g(1, "01")?, r: g(1, "10")?, s: g(1, "11")? })
}

/// Alice's leaf values as grid numerators, if they lie on the grid.
pub fn alice_units_of(view: &GameView<'_>, n: u32) -> Option<[u32; 4]> {
    let mut out = [0; 4];
    for (o, x) in out.iter_mut().zip(LEAVES) {
        *o = to_units(&view.alice.get(&leaf(x)), n)?;
    }
    Some(out)
}

/// Random monotone Bob on the grid: each turn raises a random coordinate, or
/// passes.
#[derive(Debug, Clone)]
pub struct GridBob {
    n: u32,
    rng: ChaCha8Rng,
}

impl GridBob {
    pub fn new(n: u32, seed: u64) -> Self {
        GridBob { n, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Strategy for GridBob {
    fn name(&self) -> String {
        "grid_bob".into()
    }

    fn respond(&mut self, view: &GameView<'_>) -> Move {
        let Some(cur) = bob_grid_of(view, self.n) else { return Vec::new() };
        let mut next = cur;
        for _ in 0..self.rng.gen_range(0..=3) {
            let k = self.rng.gen_range(0..6);
            let (a, b) = match k {
                0 => (&mut next.p, next.q),
                1 => (&mut next.q, next.p),
                2 => (&mut next.u, next.v),
                3 => (&mut next.v, next.u),
                4 => (&mut next.r, next.s),
                _ => (&mut next.s, next.r),
            };
            let room = self.n - *a - b;
            if room > 0 {
                *a += self.rng.gen_range(1..=room);
            }
        }
        next.placements_from(&cur, self.n)
    }
}

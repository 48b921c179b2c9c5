//! One-round strategies for the two-bit game (leaves `00, 01, 10, 11`).

use crate::bits::BitString;
use crate::game::{GameView, Move, Placement, Strategy};
use crate::num::{q, Q};

fn leaf(s: &str) -> BitString {
    s.parse().expect("static leaf")
}

/// Budget 3/4: put 1/4 on `00`; if `Q_odd(0) > 1/2` put 1/2 on `11`, else if
/// `Q_ev(00) > 1/2` put 1/2 on `01`; then pass forever.
#[derive(Debug, Clone, Default)]
pub struct Alice34 {
    opened: bool,
    done: bool,
}

impl Alice34 {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Strategy for Alice34 {
    fn name(&self) -> String {
        "alice_34".into()
    }

    fn respond(&mut self, view: &GameView<'_>) -> Move {
        if !self.opened {
            self.opened = true;
            return vec![Placement::alice(leaf("00"), q(1, 4))];
        }
        if self.done {
            return Vec::new();
        }
        let half = q(1, 2);
        if view.bob_value(0, &leaf("0")) > half {
            self.done = true;
            vec![Placement::alice(leaf("11"), half)]
        } else if view.bob_value(1, &leaf("00")) > half {
            self.done = true;
            vec![Placement::alice(leaf("01"), half)]
        } else {
            Vec::new()
        }
    }
}

/// Budget 2/3: open with 1/9 on `00` and `10`; once both products there
/// exceed 1/9, put 4/9 on `11` if `Q_odd(0) >= Q_odd(1)` and on `01`
/// otherwise.
#[derive(Debug, Clone, Default)]
pub struct Alice23 {
    opened: bool,
    done: bool,
    /// `(Q_odd(0), Q_odd(1))` at the moment of the last move.
    pub snapshot: Option<(Q, Q)>,
}

impl Alice23 {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Strategy for Alice23 {
    fn name(&self) -> String {
        "alice_23".into()
    }

    fn respond(&mut self, view: &GameView<'_>) -> Move {
        if !self.opened {
            self.opened = true;
            return vec![Placement::alice(leaf("00"), q(1, 9)), Placement::alice(leaf("10"), q(1, 9))];
        }
        if self.done {
            return Vec::new();
        }
        let ninth = q(1, 9);
        if view.product(&leaf("00")) > ninth && view.product(&leaf("10")) > ninth {
            self.done = true;
            let p = view.bob_value(0, &leaf("0"));
            let qv = view.bob_value(0, &leaf("1"));
            let target = if p >= qv { "11" } else { "01" };
            self.snapshot = Some((p, qv));
            vec![Placement::alice(leaf(target), q(4, 9))]
        } else {
            Vec::new()
        }
    }
}

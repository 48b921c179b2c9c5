//! Referee for the Alice-vs-Bob enumeration games.
//!
//! Alice enumerates a semimeasure on leaves under a mass budget, Bob
//! enumerates one online semimeasure per constraint. Players alternate,
//! Alice first, and either may pass. Alice is winning at a moment if some leaf
//! carries at least the product of Bob's values there.

pub mod events;

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::num::{parse_q, to_wire, Q};
use crate::semimeasure::{MassAssignment, OnlineConstraint, OnlineMassAssignment};
use crate::stream::{StreamUpdate, WireUpdate};

pub use events::{detect_events, EventKind, Probe, ThresholdEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Alice,
    Bob,
}

/// One value written by a player. Alice always writes assignment 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub assignment: usize,
    pub node: BitString,
    pub value: Q,
}

impl Placement {
    pub fn new(assignment: usize, node: BitString, value: Q) -> Self {
        Placement { assignment, node, value }
    }

    pub fn alice(node: BitString, value: Q) -> Self {
        Placement { assignment: 0, node, value }
    }
}

/// A move; empty means pass.
pub type Move = Vec<Placement>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameConfig {
    /// Number of blocks; leaves have `depth * block` bits.
    pub depth: usize,
    pub block: usize,
    #[serde(with = "crate::num::q_str")]
    pub budget: Q,
    pub constraints: Vec<OnlineConstraint>,
    pub max_steps: u64,
}

impl GameConfig {
    /// The one-round two-bit game against odd and even Bob assignments.
    pub fn two_bit(budget: Q, max_steps: u64) -> Self {
        GameConfig {
            depth: 1,
            block: 2,
            budget,
            constraints: vec![OnlineConstraint::odd(), OnlineConstraint::even()],
            max_steps,
        }
    }

    pub fn leaf_len(&self) -> usize {
        self.depth * self.block
    }

    pub fn check(&self) -> Result<()> {
        if !self.budget.is_positive() || self.budget > Q::one() {
            return Err(Error::BadParameter(format!("budget {} outside (0, 1]", to_wire(&self.budget))));
        }
        if self.max_steps == 0 {
            return Err(Error::BadParameter("max_steps must be at least 1".into()));
        }
        if self.constraints.is_empty() {
            return Err(Error::BadParameter("Bob needs at least one assignment".into()));
        }
        if self.leaf_len() > 20 {
            return Err(Error::BadParameter("leaf length above 20 bits is not supported".into()));
        }
        Ok(())
    }
}

/// Current state as seen by a strategy.
pub struct GameView<'a> {
    pub step: u64,
    pub config: &'a GameConfig,
    pub alice: &'a MassAssignment,
    pub bob: &'a [OnlineMassAssignment],
}

impl GameView<'_> {
    pub fn bob_value(&self, assignment: usize, x: &BitString) -> Q {
        self.bob[assignment].value(x)
    }

    pub fn product(&self, x: &BitString) -> Q {
        self.bob.iter().map(|a| a.value(x)).product()
    }
}

pub trait Strategy {
    fn name(&self) -> String;
    fn respond(&mut self, view: &GameView<'_>) -> Move;
}

/// Plays a fixed list of moves, then passes.
#[derive(Debug, Clone, Default)]
pub struct Scripted {
    moves: VecDeque<Move>,
}

impl Scripted {
    pub fn new(moves: Vec<Move>) -> Self {
        Scripted { moves: moves.into() }
    }

    pub fn silent() -> Self {
        Self::default()
    }
}

impl Strategy for Scripted {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn respond(&mut self, _: &GameView<'_>) -> Move {
        self.moves.pop_front().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    AliceWinning { witness: BitString },
    BobWinning,
    Undecided,
}

impl Verdict {
    pub fn alice_wins(&self) -> bool {
        matches!(self, Verdict::AliceWinning { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoveRecord {
    pub step: u64,
    pub player: Player,
    pub placements: Move,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub step: u64,
    pub player: Player,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameTranscript {
    pub config: GameConfig,
    pub moves: Vec<MoveRecord>,
    /// Verdict after each accepted step.
    pub verdicts: Vec<Verdict>,
    pub events: Vec<ThresholdEvent>,
    pub fault: Option<Fault>,
}

impl GameTranscript {
    pub fn final_verdict(&self) -> Verdict {
        if self.fault.is_some() {
            return Verdict::Undecided;
        }
        self.verdicts.last().cloned().unwrap_or(Verdict::Undecided)
    }
}

/// Game state plus the legality checks.
#[derive(Debug, Clone)]
pub struct Referee {
    config: GameConfig,
    alice: MassAssignment,
    bob: Vec<OnlineMassAssignment>,
}

impl Referee {
    pub fn new(config: GameConfig) -> Result<Self> {
        config.check()?;
        let bob = config.constraints.iter().map(|&c| OnlineMassAssignment::with_unit_root(c)).collect();
        Ok(Referee { config, alice: MassAssignment::new(), bob })
    }

    pub fn alice(&self) -> &MassAssignment {
        &self.alice
    }

    pub fn bob(&self) -> &[OnlineMassAssignment] {
        &self.bob
    }

    pub fn view(&self, step: u64) -> GameView<'_> {
        GameView { step, config: &self.config, alice: &self.alice, bob: &self.bob }
    }

    /// Apply a move; on failure the state is left unchanged and the reason
    /// returned.
    pub fn apply(&mut self, player: Player, mv: &[Placement], step: u64) -> std::result::Result<(), String> {
        match player {
            Player::Alice => {
                let mut next = self.alice.clone();
                for p in mv {
                    if p.assignment != 0 {
                        return Err("Alice has a single assignment".into());
                    }
                    if p.node.len() != self.config.leaf_len() {
                        return Err(format!("Alice wrote {} which is not a leaf", p.node));
                    }
                    if p.value <= next.get(&p.node) {
                        return Err(format!("value at {} does not increase", p.node));
                    }
                    next.set(p.node.clone(), p.value.clone());
                }
                let total = next.level_sum(self.config.leaf_len());
                if total > self.config.budget {
                    return Err(format!(
                        "leaf sum {} exceeds budget {}",
                        to_wire(&total),
                        to_wire(&self.config.budget)
                    ));
                }
                self.alice = next;
            }
            Player::Bob => {
                let mut next = self.bob.clone();
                for p in mv {
                    let a = next.get_mut(p.assignment).ok_or_else(|| format!("no assignment {}", p.assignment))?;
                    if p.node.len() > self.config.leaf_len() {
                        return Err(format!("{} is below the leaves", p.node));
                    }
                    a.raise(p.node.clone(), p.value.clone(), step).map_err(|e| e.to_string())?;
                }
                for (i, a) in next.iter().enumerate() {
                    if let Some(v) = a.validate().into_iter().next() {
                        return Err(format!("assignment {i}: {v}"));
                    }
                }
                self.bob = next;
            }
        }
        Ok(())
    }

    pub fn verdict(&self) -> Verdict {
        evaluate_win(&self.alice, &self.bob, self.config.leaf_len())
    }
}

/// Alice wins iff some leaf has `P(x) >= prod_i Q_i(x)`. The witness is the
/// leaf with the largest slack, ties broken by the first leaf in order.
pub fn evaluate_win(alice: &MassAssignment, bob: &[OnlineMassAssignment], leaf_len: usize) -> Verdict {
    let mut best: Option<(Q, BitString)> = None;
    for x in BitString::all_of_length(leaf_len) {
        let prod: Q = bob.iter().map(|a| a.value(&x)).product();
        let slack = alice.get(&x) - prod;
        if slack.is_negative() {
            continue;
        }
        if best.as_ref().is_none_or(|(s, _)| slack > *s) {
            best = Some((slack, x));
        }
    }
    match best {
        Some((_, witness)) => Verdict::AliceWinning { witness },
        None => Verdict::BobWinning,
    }
}

/// Play until `max_steps` moves have been made or a player faults.
pub fn run_game(alice: &mut dyn Strategy, bob: &mut dyn Strategy, config: GameConfig) -> Result<GameTranscript> {
    let mut referee = Referee::new(config.clone())?;
    let mut t = GameTranscript { config, moves: Vec::new(), verdicts: Vec::new(), events: Vec::new(), fault: None };
    for step in 0..t.config.max_steps {
        let player = if step % 2 == 0 { Player::Alice } else { Player::Bob };
        let mv = {
            let view = referee.view(step);
            match player {
                Player::Alice => alice.respond(&view),
                Player::Bob => bob.respond(&view),
            }
        };
        if let Err(reason) = referee.apply(player, &mv, step) {
            t.moves.push(MoveRecord { step, player, placements: mv });
            t.fault = Some(Fault { step, player, reason });
            break;
        }
        t.moves.push(MoveRecord { step, player, placements: mv });
        t.verdicts.push(referee.verdict());
    }
    Ok(t)
}

/// Re-run the recorded moves through a fresh referee.
pub fn replay_transcript(t: &GameTranscript) -> Result<GameTranscript> {
    let alice_moves = t.moves.iter().filter(|m| m.player == Player::Alice).map(|m| m.placements.clone()).collect();
    let bob_moves = t.moves.iter().filter(|m| m.player == Player::Bob).map(|m| m.placements.clone()).collect();
    let mut cfg = t.config.clone();
    cfg.max_steps = cfg.max_steps.min(t.moves.len() as u64).max(1);
    let mut out = run_game(&mut Scripted::new(alice_moves), &mut Scripted::new(bob_moves), cfg)?;
    out.config = t.config.clone();
    out.events = t.events.clone();
    Ok(out)
}

fn player_name(p: Player) -> &'static str {
    match p {
        Player::Alice => "alice",
        Player::Bob => "bob",
    }
}

fn parse_player(s: &str) -> Result<Player> {
    match s {
        "alice" => Ok(Player::Alice),
        "bob" => Ok(Player::Bob),
        _ => Err(Error::BadParameter(format!("unknown player {s:?}"))),
    }
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::BadParameter(format!("transcript record lacks {key:?}")))
}

fn field_u64(v: &Value, key: &str) -> Result<u64> {
    field(v, key)?.as_u64().ok_or_else(|| Error::BadParameter(format!("{key:?} must be an integer")))
}

fn field_str<'a>(v: &'a Value, key: &str) -> Result<&'a str> {
    field(v, key)?.as_str().ok_or_else(|| Error::BadParameter(format!("{key:?} must be a string")))
}

impl GameTranscript {
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        let mut line = |v: Value| -> Result<()> {
            serde_json::to_writer(&mut w, &v)?;
            writeln!(w)?;
            Ok(())
        };
        let mut cfg = serde_json::to_value(&self.config)?;
        cfg["kind"] = json!("config");
        line(cfg)?;
        for (i, m) in self.moves.iter().enumerate() {
            if m.placements.is_empty() {
                line(json!({"kind": "pass", "player": player_name(m.player), "step": m.step}))?;
            }
            for p in &m.placements {
                let mut w = WireUpdate::from_update(&StreamUpdate {
                    step: m.step,
                    assignment: p.assignment,
                    node: p.node.clone(),
                    value: p.value.clone(),
                });
                w.kind = Some("update".into());
                w.player = Some(player_name(m.player).into());
                line(serde_json::to_value(&w)?)?;
            }
            if let Some(v) = self.verdicts.get(i) {
                let mut rec = serde_json::to_value(v)?;
                rec["kind"] = json!("verdict");
                rec["step"] = json!(m.step);
                line(rec)?;
            }
        }
        for e in &self.events {
            let mut rec = serde_json::to_value(e)?;
            rec["kind"] = json!("event");
            line(rec)?;
        }
        if let Some(f) = &self.fault {
            let mut rec = serde_json::to_value(f)?;
            rec["kind"] = json!("fault");
            line(rec)?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Parse a transcript. Records are checked for shape only; use
    /// [`replay_transcript`] to re-referee the moves.
    pub fn read_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut config: Option<GameConfig> = None;
        let mut moves: Vec<MoveRecord> = Vec::new();
        let mut verdicts = Vec::new();
        let mut events = Vec::new();
        let mut fault = None;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(&line)?;
            let kind = field_str(&v, "kind")?.to_string();
            match kind.as_str() {
                "config" => config = Some(serde_json::from_value(v)?),
                "pass" | "update" => {
                    let step = field_u64(&v, "step")?;
                    let player = parse_player(field_str(&v, "player")?)?;
                    if moves.last().is_none_or(|m| m.step != step) {
                        moves.push(MoveRecord { step, player, placements: Vec::new() });
                    }
                    if kind == "update" {
                        let w: WireUpdate = serde_json::from_value(v)?;
                        let u = w.to_update()?;
                        let last = moves.last_mut().expect("pushed above");
                        last.placements.push(Placement::new(u.assignment, u.node, u.value));
                    }
                }
                "verdict" => verdicts.push(serde_json::from_value(v)?),
                "event" => events.push(serde_json::from_value(v)?),
                "fault" => fault = Some(serde_json::from_value(v)?),
                other => return Err(Error::BadParameter(format!("unknown record kind {other:?}"))),
            }
        }
        let config = config.ok_or_else(|| Error::BadParameter("transcript has no config record".into()))?;
        Ok(GameTranscript { config, moves, verdicts, events, fault })
    }
}

/// Parse `"node=value"` pairs such as `"0=3/5"` into a Bob placement.
pub fn parse_placement(assignment: usize, spec: &str) -> Result<Placement> {
    let (n, v) = spec.split_once('=').ok_or_else(|| Error::BadParameter(format!("placement {spec:?}")))?;
    Ok(Placement::new(assignment, n.trim().parse()?, parse_q(v)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{q, qi};

    fn b(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn silent_game_alice_wins_at_zero_products() {
        let mut alice = Scripted::new(vec![vec![Placement::alice(b("00"), q(1, 4))]]);
        let t = run_game(&mut alice, &mut Scripted::silent(), GameConfig::two_bit(q(3, 4), 6)).unwrap();
        assert!(t.verdicts.iter().all(Verdict::alice_wins));
        assert_eq!(t.final_verdict(), Verdict::AliceWinning { witness: b("00") });
    }

    #[test]
    fn root_overflow_is_a_fault() {
        let bob = vec![vec![Placement::new(0, b("0"), q(7, 10))], vec![Placement::new(0, b("1"), q(2, 5))]];
        let t = run_game(&mut Scripted::silent(), &mut Scripted::new(bob), GameConfig::two_bit(q(3, 4), 10)).unwrap();
        let f = t.fault.unwrap();
        assert_eq!(f.player, Player::Bob);
        assert_eq!(f.step, 3);
        assert!(f.reason.contains("sum"));
    }

    #[test]
    fn budget_is_enforced() {
        let alice = vec![vec![Placement::alice(b("00"), q(1, 2)), Placement::alice(b("11"), q(1, 2))]];
        let t = run_game(&mut Scripted::new(alice), &mut Scripted::silent(), GameConfig::two_bit(q(3, 4), 4)).unwrap();
        assert_eq!(t.fault.unwrap().player, Player::Alice);
    }

    #[test]
    fn equality_counts_for_alice() {
        let mut alice = MassAssignment::new();
        alice.set(b("00"), q(1, 4));
        let mut odd = OnlineMassAssignment::with_unit_root(OnlineConstraint::odd());
        odd.set(b("0"), q(1, 2));
        let mut even = OnlineMassAssignment::with_unit_root(OnlineConstraint::even());
        even.set(b("00"), q(1, 2));
        // Bob also covers the other leaves
        odd.set(b("1"), q(1, 2));
        even.set(b("01"), q(1, 2));
        even.set(b("10"), q(1, 2));
        even.set(b("11"), q(1, 2));
        assert_eq!(evaluate_win(&alice, &[odd, even], 2), Verdict::AliceWinning { witness: b("00") });
    }

    #[test]
    fn bob_beats_small_mass() {
        let mut alice = MassAssignment::new();
        alice.set(b("00"), q(1, 9));
        let mut odd = OnlineMassAssignment::with_unit_root(OnlineConstraint::odd());
        odd.set(b("0"), q(1, 2));
        odd.set(b("1"), q(1, 2));
        let mut even = OnlineMassAssignment::with_unit_root(OnlineConstraint::even());
        for x in ["00", "01", "10", "11"] {
            even.set(b(x), q(1, 2));
        }
        assert_eq!(evaluate_win(&alice, &[odd, even], 2), Verdict::BobWinning);
        let _ = qi(0);
    }

    #[test]
    fn transcript_round_trip_and_replay() {
        let alice = vec![vec![Placement::alice(b("00"), q(1, 4))]];
        let bob = vec![vec![Placement::new(0, b("0"), q(3, 5))], vec![Placement::new(1, b("11"), q(1, 3))]];
        let t = run_game(&mut Scripted::new(alice), &mut Scripted::new(bob), GameConfig::two_bit(q(3, 4), 6)).unwrap();
        let text = t.to_jsonl_string();
        let back = GameTranscript::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(replay_transcript(&back).unwrap(), t);
    }
}

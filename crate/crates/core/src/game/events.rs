//! Threshold events: the first step at which a probe of Bob's values
//! strictly exceeds a threshold.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::num::Q;

use super::{GameTranscript, Player, Referee};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    /// The odd assignment crossed at `x0`.
    O,
    /// The even assignment crossed at `x00` while the odd condition did not
    /// hold.
    E,
    /// The product crossed at `x00`.
    T00,
    /// The product crossed at `x10`.
    T10,
    /// Assignment `i` (1-based) crossed.
    Cross(usize),
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::O => f.write_str("O"),
            EventKind::E => f.write_str("E"),
            EventKind::T00 => f.write_str("T00"),
            EventKind::T10 => f.write_str("T10"),
            EventKind::Cross(i) => write!(f, "cross:{i}"),
        }
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "O" => EventKind::O,
            "E" => EventKind::E,
            "T00" => EventKind::T00,
            "T10" => EventKind::T10,
            _ => {
                let i = s
                    .strip_prefix("cross:")
                    .and_then(|i| i.parse().ok())
                    .ok_or_else(|| Error::BadParameter(format!("event kind {s:?}")))?;
                EventKind::Cross(i)
            }
        })
    }
}

impl Serialize for EventKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EventKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdEvent {
    #[serde(rename = "event")]
    pub kind: EventKind,
    pub node: BitString,
    pub step: u64,
}

/// A condition `prod_i Q_{a_i}(y_i) > threshold` attached to node `node`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub kind: EventKind,
    pub node: BitString,
    pub factors: Vec<(usize, BitString)>,
    pub threshold: Q,
}

impl Probe {
    /// The `O_x` and `E_x` probes of the two-bit game with thresholds `o/2`
    /// and `e/2` (odd assignment 0, even assignment 1).
    pub fn pair_34(x: &BitString, o: &Q, e: &Q) -> [Probe; 2] {
        let half = Q::new(1.into(), 2.into());
        let x0 = x.child(false);
        let x00 = x0.child(false);
        [
            Probe { kind: EventKind::O, node: x.clone(), factors: vec![(0, x0)], threshold: o * &half },
            Probe { kind: EventKind::E, node: x.clone(), factors: vec![(1, x00)], threshold: e * &half },
        ]
    }

    /// The `T00` and `T10` probes with threshold `t/9`.
    pub fn pair_23(x: &BitString, t: &Q) -> [Probe; 2] {
        let ninth = t * Q::new(1.into(), 9.into());
        let mk = |kind, a: bool| {
            let y = x.child(a).child(false);
            Probe { kind, node: x.clone(), factors: vec![(0, y.clone()), (1, y)], threshold: ninth.clone() }
        };
        [mk(EventKind::T00, false), mk(EventKind::T10, true)]
    }
}

/// Given first-crossing times of the odd and even conditions at one node,
/// decide which event fires. The odd one wins ties: the even event requires
/// the odd condition to be false at its own update.
pub fn resolve_pair<T: Ord + Copy>(odd: Option<T>, even: Option<T>) -> Option<(bool, T)> {
    match (odd, even) {
        (Some(o), Some(e)) if o <= e => Some((true, o)),
        (Some(o), None) => Some((true, o)),
        (_, Some(e)) => Some((false, e)),
        (None, None) => None,
    }
}

/// Replay a transcript and report the first crossing of every probe, in
/// firing order. `O` and `E` probes at the same node are mutually exclusive.
pub fn detect_events(transcript: &GameTranscript, probes: &[Probe]) -> Result<Vec<ThresholdEvent>> {
    let mut referee = Referee::new(transcript.config.clone())?;
    let mut first: Vec<Option<u64>> = vec![None; probes.len()];
    for m in &transcript.moves {
        if transcript.fault.as_ref().is_some_and(|f| f.step == m.step) {
            break;
        }
        referee
            .apply(m.player, &m.placements, m.step)
            .map_err(|reason| Error::InvalidStream { step: m.step, detail: reason })?;
        if m.player == Player::Alice {
            continue;
        }
        for (i, p) in probes.iter().enumerate() {
            if first[i].is_some() {
                continue;
            }
            let v: Q = p.factors.iter().map(|(a, y)| referee.bob()[*a].value(y)).product();
            if v > p.threshold {
                first[i] = Some(m.step);
            }
        }
    }
    let mut by_node: BTreeMap<BitString, (Option<u64>, Option<u64>)> = BTreeMap::new();
    let mut out = Vec::new();
    for (p, s) in probes.iter().zip(&first) {
        match p.kind {
            EventKind::O => by_node.entry(p.node.clone()).or_default().0 = *s,
            EventKind::E => by_node.entry(p.node.clone()).or_default().1 = *s,
            kind => {
                if let Some(step) = s {
                    out.push(ThresholdEvent { kind, node: p.node.clone(), step: *step });
                }
            }
        }
    }
    for (node, (o, e)) in by_node {
        if let Some((is_o, step)) = resolve_pair(o, e) {
            out.push(ThresholdEvent { kind: if is_o { EventKind::O } else { EventKind::E }, node, step });
        }
    }
    out.sort_by(|a, b| (a.step, a.kind, &a.node).cmp(&(b.step, b.kind, &b.node)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{run_game, GameConfig, Placement, Scripted};
    use crate::num::{q, qi};

    fn b(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn play(bob: Vec<Vec<Placement>>) -> GameTranscript {
        run_game(&mut Scripted::silent(), &mut Scripted::new(bob), GameConfig::two_bit(q(3, 4), 20)).unwrap()
    }

    fn odd(v: Q) -> Vec<Placement> {
        vec![Placement::new(0, b("0"), v)]
    }

    fn even(v: Q) -> Vec<Placement> {
        vec![Placement::new(1, b("00"), v)]
    }

    #[test]
    fn resolve_rules() {
        assert_eq!(resolve_pair(Some(5), Some(9)), Some((true, 5)));
        assert_eq!(resolve_pair(Some(9), Some(5)), Some((false, 5)));
        assert_eq!(resolve_pair(Some(5), Some(5)), Some((true, 5)));
        assert_eq!(resolve_pair::<u64>(None, None), None);
    }

    #[test]
    fn odd_then_even() {
        // Bob moves at odd steps 1, 3, 5, ...
        let t = play(vec![vec![], vec![], odd(q(3, 5)), vec![], even(q(3, 5))]);
        let probes = Probe::pair_34(&BitString::empty(), &qi(1), &qi(1));
        let ev = detect_events(&t, &probes).unwrap();
        assert_eq!(ev, vec![ThresholdEvent { kind: EventKind::O, node: b(""), step: 5 }]);
    }

    #[test]
    fn even_then_odd() {
        let t = play(vec![vec![], vec![], even(q(3, 5)), vec![], odd(q(3, 5))]);
        let probes = Probe::pair_34(&BitString::empty(), &qi(1), &qi(1));
        let ev = detect_events(&t, &probes).unwrap();
        assert_eq!(ev, vec![ThresholdEvent { kind: EventKind::E, node: b(""), step: 5 }]);
    }

    #[test]
    fn simultaneous_favours_odd() {
        let both = vec![Placement::new(0, b("0"), q(3, 5)), Placement::new(1, b("00"), q(3, 5))];
        let t = play(vec![vec![], vec![], both]);
        let probes = Probe::pair_34(&BitString::empty(), &qi(1), &qi(1));
        let ev = detect_events(&t, &probes).unwrap();
        assert_eq!(ev, vec![ThresholdEvent { kind: EventKind::O, node: b(""), step: 5 }]);
    }

    #[test]
    fn product_events() {
        let mv = vec![Placement::new(0, b("0"), q(1, 2)), Placement::new(1, b("00"), q(1, 2))];
        let t = play(vec![mv]);
        let ev = detect_events(&t, &Probe::pair_23(&BitString::empty(), &qi(1))).unwrap();
        assert_eq!(ev, vec![ThresholdEvent { kind: EventKind::T00, node: b(""), step: 1 }]);
        assert_eq!("cross:3".parse::<EventKind>().unwrap(), EventKind::Cross(3));
    }
}

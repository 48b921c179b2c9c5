//! Enumeration streams: finite, replayable surrogates for lower
//! semicomputable (online) semimeasures.
//!
//! Wire format, one update per line:
//!
//! ```text
//! {"step": 3, "node": "01", "num": "1", "den": "4", "assignment": 1}
//! ```
//!
//! `assignment` selects which of several simultaneously enumerated
//! assignments is updated and defaults to 0. Lines carrying a `kind` other
//! than `"update"` are ignored by the stream reader, so game transcripts can be
//! read as streams.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::num::{from_parts, q, Q};
use crate::semimeasure::{MassAssignment, OnlineConstraint, OnlineMassAssignment};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamUpdate {
    pub step: u64,
    pub assignment: usize,
    pub node: BitString,
    pub value: Q,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct WireUpdate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub player: Option<String>,
    pub step: u64,
    pub node: String,
    pub num: String,
    pub den: String,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub assignment: usize,
}

fn is_zero(a: &usize) -> bool {
    *a == 0
}

impl WireUpdate {
    pub(crate) fn from_update(u: &StreamUpdate) -> Self {
        WireUpdate {
            kind: None,
            player: None,
            step: u.step,
            node: u.node.to_wire(),
            num: u.value.numer().to_string(),
            den: u.value.denom().to_string(),
            assignment: u.assignment,
        }
    }

    pub(crate) fn to_update(&self) -> Result<StreamUpdate> {
        Ok(StreamUpdate {
            step: self.step,
            assignment: self.assignment,
            node: self.node.parse()?,
            value: from_parts(&self.num, &self.den)?,
        })
    }
}

/// An ordered list of monotone updates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnumerationStream {
    updates: Vec<StreamUpdate>,
}

impl EnumerationStream {
    pub fn new(updates: Vec<StreamUpdate>) -> Self {
        EnumerationStream { updates }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn updates(&self) -> &[StreamUpdate] {
        &self.updates
    }

    pub fn push(&mut self, step: u64, assignment: usize, node: BitString, value: Q) {
        self.updates.push(StreamUpdate { step, assignment, node, value });
    }

    pub fn len(&self) -> usize {
        self.updates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.updates.is_empty()
    }

    /// Interleave single-assignment streams, tagging the `i`-th with
    /// assignment index `i`. Ordering is by step, stable within a step.
    pub fn merge(streams: &[EnumerationStream]) -> Self {
        let mut all: Vec<StreamUpdate> = streams
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.updates.iter().map(move |u| StreamUpdate { assignment: i, ..u.clone() }))
            .collect();
        all.sort_by_key(|u| u.step);
        EnumerationStream { updates: all }
    }

    /// Parse the line format without semantic checks.
    pub fn read_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut updates = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(&line)?;
            match v.get("kind").and_then(|k| k.as_str()) {
                None | Some("update") => {}
                Some(_) => continue,
            }
            let w: WireUpdate = serde_json::from_value(v)?;
            updates.push(w.to_update()?);
        }
        Ok(EnumerationStream { updates })
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for u in &self.updates {
            serde_json::to_writer(&mut w, &WireUpdate::from_update(u))?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Distinct step indices in increasing order.
    pub fn steps(&self) -> Vec<u64> {
        self.updates.iter().map(|u| u.step).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Replay against online constraints, one assignment per constraint.
    ///
    /// Values must strictly increase, steps must be non-decreasing, and every
    /// assignment must be valid at each step boundary.
    pub fn replay_online(
        &self,
        constraints: &[OnlineConstraint],
        unit_root: bool,
    ) -> Result<Vec<OnlineMassAssignment>> {
        let mut r = Replayer::new(constraints, unit_root);
        for u in &self.updates {
            r.apply(u)?;
        }
        r.finish()
    }

    /// Replay as a plain semimeasure (single assignment, index 0).
    pub fn replay_plain(&self) -> Result<MassAssignment> {
        let mut m = MassAssignment::new();
        let mut last: Option<u64> = None;
        let check = |m: &MassAssignment, step: u64| -> Result<()> {
            if let Some(v) = m.validate().into_iter().next() {
                return Err(Error::InvalidStream { step, detail: v.to_string() });
            }
            Ok(())
        };
        for u in &self.updates {
            if u.assignment != 0 {
                return Err(Error::InvalidStream { step: u.step, detail: "assignment index out of range".into() });
            }
            if let Some(l) = last {
                if u.step < l {
                    return Err(Error::StepOrder { step: u.step });
                }
                if u.step > l {
                    check(&m, l)?;
                }
            }
            if u.value <= m.get(&u.node) {
                return Err(Error::NonIncreasing { node: u.node.clone(), step: u.step });
            }
            m.set(u.node.clone(), u.value.clone());
            last = Some(u.step);
        }
        if let Some(l) = last {
            check(&m, l)?;
        }
        Ok(m)
    }
}

/// Incremental checked replay of a multi-assignment online stream.
#[derive(Debug, Clone)]
pub struct Replayer {
    state: Vec<OnlineMassAssignment>,
    last: Option<u64>,
    dirty: bool,
}

impl Replayer {
    pub fn new(constraints: &[OnlineConstraint], unit_root: bool) -> Self {
        let state = constraints
            .iter()
            .map(|&c| if unit_root { OnlineMassAssignment::with_unit_root(c) } else { OnlineMassAssignment::new(c) })
            .collect();
        Replayer { state, last: None, dirty: false }
    }

    pub fn state(&self) -> &[OnlineMassAssignment] {
        &self.state
    }

    fn check(&self, step: u64) -> Result<()> {
        for (i, a) in self.state.iter().enumerate() {
            if let Some(v) = a.validate().into_iter().next() {
                return Err(Error::InvalidStream { step, detail: format!("assignment {i}: {v}") });
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, u: &StreamUpdate) -> Result<()> {
        if let Some(l) = self.last {
            if u.step < l {
                return Err(Error::StepOrder { step: u.step });
            }
            if u.step > l && self.dirty {
                self.check(l)?;
                self.dirty = false;
            }
        }
        let a = self
            .state
            .get_mut(u.assignment)
            .ok_or_else(|| Error::InvalidStream { step: u.step, detail: format!("no assignment {}", u.assignment) })?;
        a.raise(u.node.clone(), u.value.clone(), u.step)?;
        self.last = Some(u.step);
        self.dirty = true;
        Ok(())
    }

    pub fn finish(self) -> Result<Vec<OnlineMassAssignment>> {
        if let (Some(l), true) = (self.last, self.dirty) {
            self.check(l)?;
        }
        Ok(self.state)
    }
}

/// Time-indexed view of a validated online stream.
///
/// Times are `None` (before any update) or a step index; a value "at step
/// `t`" includes every update with step `<= t`.
#[derive(Debug, Clone)]
pub struct History {
    constraints: Vec<OnlineConstraint>,
    unit_root: bool,
    series: HashMap<(usize, BitString), Vec<(u64, Q)>>,
    finals: Vec<OnlineMassAssignment>,
    steps: Vec<u64>,
}

impl History {
    pub fn new(stream: &EnumerationStream, constraints: &[OnlineConstraint], unit_root: bool) -> Result<Self> {
        let finals = stream.replay_online(constraints, unit_root)?;
        let mut series: HashMap<(usize, BitString), Vec<(u64, Q)>> = HashMap::new();
        for u in stream.updates() {
            series.entry((u.assignment, u.node.clone())).or_default().push((u.step, u.value.clone()));
        }
        Ok(History { constraints: constraints.to_vec(), unit_root, series, finals, steps: stream.steps() })
    }

    pub fn constraints(&self) -> &[OnlineConstraint] {
        &self.constraints
    }

    pub fn finals(&self) -> &[OnlineMassAssignment] {
        &self.finals
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    /// The sum-depth ancestor (or root) whose entries determine `x`.
    fn anchor(&self, a: usize, x: &BitString) -> BitString {
        let c = self.constraints[a];
        let mut y = x.clone();
        while !y.is_empty() && !c.is_sum_depth(y.len()) {
            y = y.parent().expect("non-empty");
        }
        y
    }

    fn initial(&self, x: &BitString) -> Q {
        if x.is_empty() && self.unit_root {
            Q::one()
        } else {
            Q::zero()
        }
    }

    /// Piecewise-constant effective value of `x`: initial value and changes.
    pub fn series(&self, a: usize, x: &BitString) -> (Q, &[(u64, Q)]) {
        let y = self.anchor(a, x);
        let init = self.initial(&y);
        let s = self.series.get(&(a, y)).map(|v| v.as_slice()).unwrap_or(&[]);
        (init, s)
    }

    pub fn value_at(&self, a: usize, x: &BitString, t: Option<u64>) -> Q {
        let (init, s) = self.series(a, x);
        match t {
            None => init,
            Some(t) => s.iter().take_while(|(st, _)| *st <= t).last().map(|(_, v)| v.clone()).unwrap_or(init),
        }
    }

    pub fn final_value(&self, a: usize, x: &BitString) -> Q {
        self.finals[a].value(x)
    }

    /// First time at which the effective value of `x` exceeds `theta`.
    pub fn first_exceed(&self, a: usize, x: &BitString, theta: &Q) -> Option<Option<u64>> {
        let (init, s) = self.series(a, x);
        if &init > theta {
            return Some(None);
        }
        s.iter().find(|(_, v)| v > theta).map(|(t, _)| Some(*t))
    }

    /// First time the product of the listed effective values exceeds `theta`.
    pub fn first_product_exceed(&self, probes: &[(usize, BitString)], theta: &Q) -> Option<Option<u64>> {
        let mut times: BTreeSet<u64> = BTreeSet::new();
        for (a, x) in probes {
            times.extend(self.series(*a, x).1.iter().map(|(t, _)| *t));
        }
        let prod = |t: Option<u64>| -> Q { probes.iter().map(|(a, x)| self.value_at(*a, x, t)).product() };
        if &prod(None) > theta {
            return Some(None);
        }
        times.into_iter().find(|&t| &prod(Some(t)) > theta).map(Some)
    }
}

/// Shape of randomly generated online streams.
#[derive(Debug, Clone)]
pub struct RandomStreamConfig {
    pub max_depth: usize,
    pub updates: usize,
    /// Bits are drawn in blocks of this size.
    pub block: usize,
    /// Probability that a block is all zeros.
    pub zero_bias: f64,
    /// Increments are multiples of `1/granularity` of the available slack.
    pub granularity: i64,
}

impl Default for RandomStreamConfig {
    fn default() -> Self {
        RandomStreamConfig { max_depth: 8, updates: 40, block: 2, zero_bias: 0.5, granularity: 8 }
    }
}

/// A random valid stream for online assignments with unit roots.
///
/// Every update raises one sum-depth node by a fraction of the slack left by
/// its parent and sibling, so the stream is valid by construction.
pub fn random_online_stream<R: Rng>(
    rng: &mut R,
    constraints: &[OnlineConstraint],
    cfg: &RandomStreamConfig,
) -> EnumerationStream {
    let mut state: Vec<OnlineMassAssignment> =
        constraints.iter().map(|&c| OnlineMassAssignment::with_unit_root(c)).collect();
    let mut out = EnumerationStream::empty();
    let mut step = 0u64;
    let mut attempts = 0usize;
    while out.len() < cfg.updates && attempts < cfg.updates * 50 {
        attempts += 1;
        let a = rng.gen_range(0..constraints.len());
        let c = constraints[a];
        let depths: Vec<usize> = (1..=cfg.max_depth).filter(|&d| c.is_sum_depth(d)).collect();
        if depths.is_empty() {
            break;
        }
        let d = depths[rng.gen_range(0..depths.len())];
        let mut bits = Vec::with_capacity(d);
        while bits.len() < d {
            let zero = rng.gen_bool(cfg.zero_bias);
            for _ in 0..cfg.block.max(1) {
                bits.push(!zero && rng.gen_bool(0.5));
            }
        }
        bits.truncate(d);
        let x = BitString::from_bits(bits);
        let st = &mut state[a];
        let parent = st.value(&x.parent().expect("depth >= 1"));
        let sib = st.value(&x.sibling().expect("depth >= 1"));
        let cur = st.value(&x);
        let slack = parent - sib - &cur;
        if slack <= Q::zero() {
            continue;
        }
        let j = rng.gen_range(1..=cfg.granularity);
        let v = cur + slack * q(j, cfg.granularity);
        st.set(x.clone(), v.clone());
        out.push(step, a, x, v);
        step += 1;
    }
    out
}

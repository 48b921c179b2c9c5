use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A finite binary string addressing a node of the infinite binary tree.
///
/// The empty string is the root. Ordering is by length first and then
/// lexicographic, so iterating a `BTreeMap<BitString, _>` visits the tree level
/// by level.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn empty() -> Self {
        BitString(Vec::new())
    }

    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        BitString(bits.into_iter().collect())
    }

    /// The `len`-bit binary expansion of `index`, most significant bit first.
    pub fn from_index(index: usize, len: usize) -> Self {
        BitString((0..len).rev().map(|i| (index >> i) & 1 == 1).collect())
    }

    pub fn to_index(&self) -> usize {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn child(&self, bit: bool) -> Self {
        let mut v = self.0.clone();
        v.push(bit);
        BitString(v)
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn extend(&mut self, other: &BitString) {
        self.0.extend_from_slice(&other.0);
    }

    pub fn concat(&self, other: &BitString) -> Self {
        let mut v = self.clone();
        v.extend(other);
        v
    }

    pub fn parent(&self) -> Option<Self> {
        if self.0.is_empty() {
            None
        } else {
            Some(BitString(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn sibling(&self) -> Option<Self> {
        let mut v = self.0.clone();
        let last = v.last_mut()?;
        *last = !*last;
        Some(BitString(v))
    }

    pub fn prefix(&self, len: usize) -> Self {
        BitString(self.0[..len].to_vec())
    }

    pub fn suffix_from(&self, start: usize) -> Self {
        BitString(self.0[start..].to_vec())
    }

    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }

    /// All prefixes, from the root down to `self` inclusive.
    pub fn prefixes(&self) -> impl Iterator<Item = BitString> + '_ {
        (0..=self.0.len()).map(move |l| self.prefix(l))
    }

    /// Every string of length `len`, in lexicographic order.
    pub fn all_of_length(len: usize) -> impl Iterator<Item = BitString> {
        (0..1usize << len).map(move |i| BitString::from_index(i, len))
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BitString {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("ε");
        }
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{}\"", self.to_wire())
    }
}

impl BitString {
    /// Wire form: a plain string of `0`/`1` characters, empty for the root.
    pub fn to_wire(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if s == "ε" {
            return Ok(BitString::empty());
        }
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::BadBits(s.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitString)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_wire())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

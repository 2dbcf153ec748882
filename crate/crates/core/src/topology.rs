//! String-state algebra.
//!
//! A string of `N` modules is described by `N` connection elements. Element
//! `i < N-1` (zero based) joins module `i` to module `i+1`; the last element
//! is the connection to the output terminals and sets the polarity of the
//! first group. A `Parallel` element merges two neighbours into one group,
//! any other element opens a new group and sets its polarity.
//!
//! ```
//! use mmspc_core::topology::{decompose_groups, StringState};
//!
//! let s: StringState = "PPS+PS+".parse().unwrap();
//! let layout = decompose_groups(s);
//! assert_eq!(layout.level(), 2);
//! assert_eq!(layout.groups().len(), 2);
//! ```

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use arrayvec::ArrayVec;

use crate::{Error, Result, MAX_MODULES};

/// Connection between two neighbouring modules, or between the string and
/// its output terminals.
///
/// The discriminant order is the canonical ordering of states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum ConnectionElement {
    /// Neighbours share a group.
    Parallel = 0,
    /// Opens a group inserted with positive polarity.
    SeriesPlus = 1,
    /// Opens a group inserted with negative polarity.
    SeriesMinus = 2,
    /// Opens a group that is bypassed.
    Bypass = 3,
}

impl ConnectionElement {
    /// All kinds in canonical order.
    pub const ALL: [ConnectionElement; 4] = [
        ConnectionElement::Parallel,
        ConnectionElement::SeriesPlus,
        ConnectionElement::SeriesMinus,
        ConnectionElement::Bypass,
    ];

    fn from_code(code: u32) -> Self {
        Self::ALL[(code & 3) as usize]
    }

    /// Polarity of the group this element opens. `Parallel` at the terminal
    /// position shorts the output and counts as a bypass.
    pub fn polarity(self) -> i8 {
        match self {
            ConnectionElement::SeriesPlus => 1,
            ConnectionElement::SeriesMinus => -1,
            ConnectionElement::Parallel | ConnectionElement::Bypass => 0,
        }
    }

    /// Notation token.
    pub fn token(self) -> &'static str {
        match self {
            ConnectionElement::Parallel => "P",
            ConnectionElement::SeriesPlus => "S+",
            ConnectionElement::SeriesMinus => "S-",
            ConnectionElement::Bypass => "B",
        }
    }

    /// Mirror image under output polarity reversal.
    pub fn mirrored(self) -> Self {
        match self {
            ConnectionElement::SeriesPlus => ConnectionElement::SeriesMinus,
            ConnectionElement::SeriesMinus => ConnectionElement::SeriesPlus,
            other => other,
        }
    }
}

/// Connection configuration of one phase string.
///
/// Packed two bits per element with element 0 in the most significant
/// position, so the derived ordering is lexicographic over element kinds.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StringState {
    len: u8,
    bits: u32,
}

impl StringState {
    /// Builds a state from its elements. `2 <= len <= MAX_MODULES`.
    pub fn new(elements: &[ConnectionElement]) -> Result<Self> {
        check_len(elements.len())?;
        let bits = elements.iter().fold(0u32, |acc, &e| (acc << 2) | e as u32);
        Ok(Self {
            len: elements.len() as u8,
            bits,
        })
    }

    /// State with every element set to `kind`.
    pub fn uniform(n: usize, kind: ConnectionElement) -> Result<Self> {
        check_len(n)?;
        let mut bits = 0u32;
        for _ in 0..n {
            bits = (bits << 2) | kind as u32;
        }
        Ok(Self { len: n as u8, bits })
    }

    /// All modules paralleled and the terminals bypassed; the level-0 rest
    /// state.
    pub fn rest(n: usize) -> Result<Self> {
        let mut s = Self::uniform(n, ConnectionElement::Parallel)?;
        s.set(n - 1, ConnectionElement::Bypass);
        Ok(s)
    }

    pub(crate) fn from_index(n: usize, index: u32) -> Self {
        Self {
            len: n as u8,
            bits: index,
        }
    }

    /// Dense index in `0..4^N`; equal to the canonical rank of the state.
    pub fn index(self) -> usize {
        self.bits as usize
    }

    /// Number of modules.
    pub fn len(self) -> usize {
        self.len as usize
    }

    /// Always false; a string has at least two modules.
    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    /// Element at position `i`.
    pub fn get(self, i: usize) -> ConnectionElement {
        debug_assert!(i < self.len());
        let shift = 2 * (self.len() - 1 - i);
        ConnectionElement::from_code(self.bits >> shift)
    }

    /// Replaces element `i`.
    pub fn set(&mut self, i: usize, kind: ConnectionElement) {
        debug_assert!(i < self.len());
        let shift = 2 * (self.len() - 1 - i);
        self.bits = (self.bits & !(3 << shift)) | ((kind as u32) << shift);
    }

    /// Copy with element `i` replaced.
    pub fn with(mut self, i: usize, kind: ConnectionElement) -> Self {
        self.set(i, kind);
        self
    }

    /// Elements in order.
    pub fn elements(self) -> impl Iterator<Item = ConnectionElement> {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// The terminal connection (last element).
    pub fn terminal(self) -> ConnectionElement {
        self.get(self.len() - 1)
    }

    /// Number of positions at which two equal-length states differ.
    pub fn toggles_from(self, other: StringState) -> usize {
        debug_assert_eq!(self.len, other.len);
        let x = self.bits ^ other.bits;
        (0..self.len()).filter(|i| (x >> (2 * i)) & 3 != 0).count()
    }

    /// State with S+ and S- exchanged.
    pub fn mirrored(self) -> Self {
        let mut out = self;
        for i in 0..self.len() {
            out.set(i, self.get(i).mirrored());
        }
        out
    }

    /// Output level without materializing the group layout.
    pub fn level(self) -> i32 {
        let n = self.len();
        let mut level = self.terminal().polarity() as i32;
        for i in 0..n - 1 {
            level += self.get(i).polarity() as i32;
        }
        level
    }

    /// Indices of the two connection elements that touch module `m`: the
    /// element towards the previous module (the terminal element for module
    /// 0) and the element towards the next module (the terminal element for
    /// the last module).
    pub fn adjacent_elements(self, m: usize) -> [usize; 2] {
        let n = self.len();
        let before = if m == 0 { n - 1 } else { m - 1 };
        [before, m]
    }
}

fn check_len(n: usize) -> Result<()> {
    if (2..=MAX_MODULES).contains(&n) {
        Ok(())
    } else {
        Err(Error::ModuleCount(n))
    }
}

impl fmt::Display for StringState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in self.elements() {
            f.write_str(e.token())?;
        }
        Ok(())
    }
}

impl fmt::Debug for StringState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StringState({self})")
    }
}

impl FromStr for StringState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut elements: ArrayVec<ConnectionElement, MAX_MODULES> = ArrayVec::new();
        let bytes = s.trim().as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let (kind, width) = match (bytes[i], bytes.get(i + 1)) {
                (b'P', _) => (ConnectionElement::Parallel, 1),
                (b'B', _) => (ConnectionElement::Bypass, 1),
                (b'S', Some(b'+')) => (ConnectionElement::SeriesPlus, 2),
                (b'S', Some(b'-')) => (ConnectionElement::SeriesMinus, 2),
                _ => return Err(Error::ParseState(String::from(s))),
            };
            elements
                .try_push(kind)
                .map_err(|_| Error::ParseState(String::from(s)))?;
            i += width;
        }
        StringState::new(&elements).map_err(|_| Error::ParseState(String::from(s)))
    }
}

/// A contiguous run of paralleled modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Group {
    /// First module index (zero based).
    pub start: usize,
    /// Number of modules.
    pub len: usize,
    /// +1 / -1 when inserted, 0 when bypassed.
    pub polarity: i8,
}

impl Group {
    /// Member module indices.
    pub fn members(&self) -> core::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Decomposition of a state into parallel groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    groups: ArrayVec<Group, MAX_MODULES>,
    level: i32,
    modules: usize,
}

impl GroupLayout {
    /// Groups in module order.
    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    /// Signed output level (sum of group polarities).
    pub fn level(&self) -> i32 {
        self.level
    }

    /// Number of modules covered.
    pub fn modules(&self) -> usize {
        self.modules
    }

    /// Groups that are inserted into the string.
    pub fn active_groups(&self) -> impl Iterator<Item = &Group> {
        self.groups.iter().filter(|g| g.polarity != 0)
    }

    /// Group index of every module.
    pub fn group_of(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.modules);
        for (k, g) in self.groups.iter().enumerate() {
            out.extend(core::iter::repeat_n(k, g.len));
        }
        out
    }

    /// Polarity seen by every module.
    pub fn module_polarity(&self) -> Vec<i8> {
        let mut out = Vec::with_capacity(self.modules);
        for g in &self.groups {
            out.extend(core::iter::repeat_n(g.polarity, g.len));
        }
        out
    }
}

/// Splits `state` into maximal runs joined by `Parallel` elements.
pub fn decompose_groups(state: StringState) -> GroupLayout {
    let n = state.len();
    let mut groups = ArrayVec::new();
    let mut current = Group {
        start: 0,
        len: 1,
        polarity: state.terminal().polarity(),
    };
    for i in 0..n - 1 {
        let e = state.get(i);
        if e == ConnectionElement::Parallel {
            current.len += 1;
        } else {
            groups.push(current);
            current = Group {
                start: i + 1,
                len: 1,
                polarity: e.polarity(),
            };
        }
    }
    groups.push(current);
    let level = groups.iter().map(|g: &Group| g.polarity as i32).sum();
    GroupLayout {
        groups,
        level,
        modules: n,
    }
}

/// Whether changing one element from `old` to `new` is allowed for a level
/// change in direction `delta`. Raising the level inserts positive series
/// connections or withdraws negative ones; lowering mirrors that. A zero
/// delta allows any reconfiguration.
fn direction_allows(old: ConnectionElement, new: ConnectionElement, delta: i32) -> bool {
    use ConnectionElement::*;
    let idle = |e| matches!(e, Parallel | Bypass);
    match delta.signum() {
        0 => true,
        1 => (idle(old) && new == SeriesPlus) || (old == SeriesMinus && idle(new)),
        _ => (idle(old) && new == SeriesMinus) || (old == SeriesPlus && idle(new)),
    }
}

/// All states reachable from `state` by changing at most `toggle_limit`
/// elements, obeying the direction rule, whose level is `state.level() +
/// level_delta`. Sorted canonically; empty if nothing qualifies.
pub fn enumerate_transitions(
    state: StringState,
    level_delta: i32,
    toggle_limit: usize,
) -> Vec<StringState> {
    let mut out = Vec::new();
    let target = state.level() + level_delta;
    if target.unsigned_abs() as usize > state.len() {
        return out;
    }
    collect_transitions(state, state, 0, toggle_limit, level_delta, target, &mut out);
    out.sort_unstable();
    out
}

fn collect_transitions(
    origin: StringState,
    current: StringState,
    from: usize,
    budget: usize,
    delta: i32,
    target: i32,
    out: &mut Vec<StringState>,
) {
    if current.level() == target {
        out.push(current);
    }
    if budget == 0 {
        return;
    }
    for i in from..origin.len() {
        let old = origin.get(i);
        for new in ConnectionElement::ALL {
            if new != old && direction_allows(old, new, delta) {
                collect_transitions(
                    origin,
                    current.with(i, new),
                    i + 1,
                    budget - 1,
                    delta,
                    target,
                    out,
                );
            }
        }
    }
}

/// Every state of `n` modules, in canonical order.
pub fn all_states(n: usize) -> Result<impl Iterator<Item = StringState>> {
    check_len(n)?;
    Ok((0..1u32 << (2 * n)).map(move |i| StringState::from_index(n, i)))
}

/// Every state of `n` modules realizing `level`, in canonical order.
pub fn all_states_for_level(n: usize, level: i32) -> Result<Vec<StringState>> {
    if level.unsigned_abs() as usize > n {
        return Err(Error::LevelOutOfRange { level, modules: n });
    }
    Ok(all_states(n)?.filter(|s| s.level() == level).collect())
}

use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scalar::{Cx, Scalar};

/// One of the three phases, encoded a = 0, b = 1, c = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A = 0,
    B = 1,
    C = 2,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        ['a', 'b', 'c'][self.index()]
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "0" => Ok(Phase::A),
            "b" | "1" => Ok(Phase::B),
            "c" | "2" => Ok(Phase::C),
            other => Err(Error::Parse(format!("unknown phase '{other}'"))),
        }
    }
}

/// Membership flags for phases a, b, c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);
    pub const EMPTY: PhaseSet = PhaseSet(0);

    pub fn single(p: Phase) -> Self {
        PhaseSet(1 << p.index())
    }

    pub fn from_phases<I: IntoIterator<Item = Phase>>(it: I) -> Self {
        PhaseSet(it.into_iter().fold(0, |acc, p| acc | (1 << p.index())))
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Position of `p` within the ordered members of this set.
    pub fn position(self, p: Phase) -> Option<usize> {
        self.iter().position(|q| q == p)
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for PhaseSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let phases = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| c.to_string().parse::<Phase>())
            .collect::<Result<Vec<_>, _>>()?;
        let set = PhaseSet::from_phases(phases);
        if set.is_empty() {
            return Err(Error::Phase(format!("empty phase set '{s}'")));
        }
        Ok(set)
    }
}

/// 3×3 complex matrix indexed by phase (absent phases hold zero).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseMatrix<T>(pub [[Cx<T>; 3]; 3]);

impl<T: Scalar> PhaseMatrix<T> {
    pub fn zero() -> Self {
        PhaseMatrix([[Cx::new(T::zero(), T::zero()); 3]; 3])
    }

    #[inline]
    pub fn get(&self, row: Phase, col: Phase) -> Cx<T> {
        self.0[row.index()][col.index()]
    }

    #[inline]
    pub fn set(&mut self, row: Phase, col: Phase, v: Cx<T>) {
        self.0[row.index()][col.index()] = v;
    }

    /// Same-phase matrix with `diag` on every phase in `phases`.
    pub fn diagonal(phases: PhaseSet, diag: Cx<T>) -> Self {
        let mut m = Self::zero();
        for p in phases.iter() {
            m.set(p, p, diag);
        }
        m
    }

    pub fn cast<U: Scalar>(&self) -> PhaseMatrix<U> {
        let mut out = PhaseMatrix::<U>::zero();
        for r in 0..3 {
            for c in 0..3 {
                let z = self.0[r][c];
                out.0[r][c] = Cx::new(U::of(z.re.as_f64()), U::of(z.im.as_f64()));
            }
        }
        out
    }

    /// Matrix times vector restricted to the phases in `phases`.
    pub fn mul_vec(&self, phases: PhaseSet, v: &[Cx<T>; 3]) -> [Cx<T>; 3] {
        let mut out = [Cx::new(T::zero(), T::zero()); 3];
        for r in phases.iter() {
            for c in phases.iter() {
                out[r.index()] += self.get(r, c) * v[c.index()];
            }
        }
        out
    }

    /// Zero out cross-phase entries.
    pub fn diagonal_part(&self) -> Self {
        let mut m = Self::zero();
        for p in Phase::ALL {
            m.set(p, p, self.get(p, p));
        }
        m
    }
}

impl<T: Scalar> Add for PhaseMatrix<T> {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<T: Scalar> AddAssign for PhaseMatrix<T> {
    fn add_assign(&mut self, rhs: Self) {
        for r in 0..3 {
            for c in 0..3 {
                self.0[r][c] += rhs.0[r][c];
            }
        }
    }
}

/// Per-phase optional values, serialized as a `{phase: value}` map.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerPhase<V>(pub [Option<V>; 3]);

impl<V: Copy> PerPhase<V> {
    pub fn empty() -> Self {
        PerPhase([None, None, None])
    }

    pub fn get(&self, p: Phase) -> Option<V> {
        self.0[p.index()]
    }

    pub fn set(&mut self, p: Phase, v: V) {
        self.0[p.index()] = Some(v);
    }

    pub fn iter(&self) -> impl Iterator<Item = (Phase, V)> + '_ {
        Phase::ALL
            .into_iter()
            .filter_map(move |p| self.0[p.index()].map(|v| (p, v)))
    }
}

impl<V: Serialize + Copy> Serialize for PerPhase<V> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(self.iter().count()))?;
        for (p, v) in self.iter() {
            m.serialize_entry(&p, &v)?;
        }
        m.end()
    }
}

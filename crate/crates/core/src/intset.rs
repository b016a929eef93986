//! Canonical sets of integers stored as sorted, disjoint, non-adjacent
//! closed intervals. Used for variable domains and reduction deltas.

use std::fmt;
use std::str::FromStr;

use smallvec::SmallVec;
use thiserror::Error;

/// Largest value a domain may hold (2^28 - 1).
pub const MAX_INT: i64 = 268_435_455;

type Intervals = SmallVec<[(i64, i64); 4]>;

/// A canonical integer set. Intervals are closed, sorted, pairwise
/// disjoint and never adjacent (`hi + 1 < next.lo`).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct IntSet {
    ivs: Intervals,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid interval set {text:?}: {reason}")]
pub struct IntSetParseError {
    pub text: String,
    pub reason: &'static str,
}

impl IntSet {
    pub fn empty() -> Self {
        IntSet::default()
    }

    /// The closed interval `lo..=hi`; empty when `lo > hi`.
    pub fn range(lo: i64, hi: i64) -> Self {
        let mut ivs = Intervals::new();
        if lo <= hi {
            ivs.push((lo, hi));
        }
        IntSet { ivs }
    }

    pub fn full() -> Self {
        IntSet::range(0, MAX_INT)
    }

    pub fn singleton(v: i64) -> Self {
        IntSet::range(v, v)
    }

    pub fn from_values<I: IntoIterator<Item = i64>>(values: I) -> Self {
        let mut vals: Vec<i64> = values.into_iter().collect();
        vals.sort_unstable();
        vals.dedup();
        let mut ivs = Intervals::new();
        for v in vals {
            match ivs.last_mut() {
                Some(last) if last.1 + 1 == v => last.1 = v,
                _ => ivs.push((v, v)),
            }
        }
        IntSet { ivs }
    }

    /// Builds a set from arbitrary (possibly overlapping, unsorted)
    /// intervals.
    pub fn from_intervals<I: IntoIterator<Item = (i64, i64)>>(intervals: I) -> Self {
        let mut raw: Vec<(i64, i64)> = intervals.into_iter().filter(|(l, h)| l <= h).collect();
        raw.sort_unstable();
        let mut ivs = Intervals::new();
        for (lo, hi) in raw {
            match ivs.last_mut() {
                Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
                _ => ivs.push((lo, hi)),
            }
        }
        IntSet { ivs }
    }

    pub fn intervals(&self) -> &[(i64, i64)] {
        &self.ivs
    }

    pub fn is_empty(&self) -> bool {
        self.ivs.is_empty()
    }

    pub fn len(&self) -> u64 {
        self.ivs.iter().map(|&(l, h)| (h - l + 1) as u64).sum()
    }

    pub fn min(&self) -> Option<i64> {
        self.ivs.first().map(|iv| iv.0)
    }

    pub fn max(&self) -> Option<i64> {
        self.ivs.last().map(|iv| iv.1)
    }

    /// The single value of a singleton set.
    pub fn value(&self) -> Option<i64> {
        match self.ivs.as_slice() {
            [(l, h)] if l == h => Some(*l),
            _ => None,
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        // Domains are short; a linear scan beats binary search here.
        for &(lo, hi) in &self.ivs {
            if v < lo {
                return false;
            }
            if v <= hi {
                return true;
            }
        }
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> + '_ {
        self.ivs.iter().flat_map(|&(l, h)| l..=h)
    }

    pub fn intersect(&self, other: &IntSet) -> IntSet {
        let mut out = Intervals::new();
        let (mut i, mut j) = (0, 0);
        while i < self.ivs.len() && j < other.ivs.len() {
            let (a, b) = (self.ivs[i], other.ivs[j]);
            let lo = a.0.max(b.0);
            let hi = a.1.min(b.1);
            if lo <= hi {
                out.push((lo, hi));
            }
            if a.1 < b.1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntSet { ivs: out }
    }

    pub fn union(&self, other: &IntSet) -> IntSet {
        IntSet::from_intervals(self.ivs.iter().chain(other.ivs.iter()).copied())
    }

    pub fn difference(&self, other: &IntSet) -> IntSet {
        let mut out = Intervals::new();
        let mut j = 0;
        for &(lo, hi) in &self.ivs {
            let mut cur = lo;
            while j < other.ivs.len() && other.ivs[j].1 < cur {
                j += 1;
            }
            let mut k = j;
            while cur <= hi {
                match other.ivs.get(k) {
                    Some(&(olo, ohi)) if olo <= hi => {
                        if olo > cur {
                            out.push((cur, olo - 1));
                        }
                        cur = cur.max(ohi.saturating_add(1));
                        k += 1;
                    }
                    _ => {
                        out.push((cur, hi));
                        break;
                    }
                }
            }
        }
        IntSet { ivs: out }
    }

    /// Restricts the set to `lo..=hi`.
    pub fn clamp(&self, lo: i64, hi: i64) -> IntSet {
        self.intersect(&IntSet::range(lo, hi))
    }

    pub fn is_subset(&self, other: &IntSet) -> bool {
        self.difference(other).is_empty()
    }

    /// Checks the canonical-form invariant.
    pub fn is_canonical(&self) -> bool {
        self.ivs.iter().all(|&(l, h)| l <= h) && self.ivs.windows(2).all(|w| w[0].1 + 1 < w[1].0)
    }

    /// Renders the set enumerating every value (`2,5,7`); only sensible for
    /// small sets.
    pub fn to_value_list(&self) -> String {
        let mut s = String::new();
        for (i, v) in self.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&v.to_string());
        }
        s
    }
}

/// Removes `removed` from `domain`, returning the new domain and the set of
/// values actually taken out.
pub fn remove_values(domain: &IntSet, removed: &IntSet) -> (IntSet, IntSet) {
    let delta = domain.intersect(removed);
    if delta.is_empty() {
        return (domain.clone(), delta);
    }
    (domain.difference(&delta), delta)
}

/// Interval rendering: `0,4-268435455`. The empty set renders as `""`.
impl fmt::Display for IntSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &(lo, hi)) in self.ivs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if lo == hi {
                write!(f, "{lo}")?;
            } else {
                write!(f, "{lo}-{hi}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for IntSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}")
    }
}

impl FromStr for IntSet {
    type Err = IntSetParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason| IntSetParseError {
            text: s.to_string(),
            reason,
        };
        let s = s.trim();
        if s.is_empty() {
            return Ok(IntSet::empty());
        }
        let mut ivs = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            let (lo, hi) = match part.split_once('-') {
                Some((a, b)) => (a.trim(), b.trim()),
                None => (part, part),
            };
            let lo: i64 = lo.parse().map_err(|_| err("bad integer"))?;
            let hi: i64 = hi.parse().map_err(|_| err("bad integer"))?;
            if lo > hi {
                return Err(err("interval bounds out of order"));
            }
            ivs.push((lo, hi));
        }
        let set = IntSet::from_intervals(ivs.iter().copied());
        // Only the canonical spelling is accepted.
        if set.intervals() != ivs.as_slice() {
            return Err(err("intervals not canonical"));
        }
        Ok(set)
    }
}

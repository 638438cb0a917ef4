//! Word-level Levenshtein distance, word error rate and threshold neighbor search.
//!
//! The threshold test `δ(ref, hyp) < ε` is evaluated as `edits / |ref| < ε`
//! in `f64`. [`EditBudget::k_max`] is the largest edit count that passes that
//! exact comparison, so the banded kernel and the plain formula never disagree
//! at the boundary.

mod index;
mod search;

pub use index::NearIndex;
pub(crate) use index::{PairRule, PrefixIndex, TokenTable};
pub use search::{
    find_neighbors, find_neighbors_with, write_pairs_tsv, NeighborPair, NeighborSet, Orientation, SearchOptions,
};

use std::fmt;

use crate::corpus::WordSequence;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistanceError {
    #[error("word error rate is undefined for an empty reference and a non-empty hypothesis")]
    EmptyReference,
    #[error("epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),
}

/// Similarity threshold: two samples are near when `δ < ε`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Epsilon(f64);

impl Epsilon {
    pub const DEFAULT: Epsilon = Epsilon(0.25);

    pub fn new(value: f64) -> Result<Self, DistanceError> {
        if value > 0.0 && value <= 1.0 {
            Ok(Epsilon(value))
        } else {
            Err(DistanceError::InvalidEpsilon(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Whether `edits` changes against a `ref_len`-word reference stay strictly below ε.
    pub fn admits(self, edits: usize, ref_len: usize) -> bool {
        ref_len > 0 && (edits as f64) / (ref_len as f64) < self.0
    }

    pub fn budget(self, ref_len: usize) -> EditBudget {
        EditBudget::new(self, ref_len)
    }

    /// Largest admissible edit count for a reference of `ref_len` words.
    pub(crate) fn k_max(self, ref_len: usize) -> Option<usize> {
        if ref_len == 0 {
            return None;
        }
        let mut k = ((self.0 * ref_len as f64).floor() as usize).min(ref_len);
        while k > 0 && !self.admits(k, ref_len) {
            k -= 1;
        }
        while k < ref_len && self.admits(k + 1, ref_len) {
            k += 1;
        }
        Some(k)
    }

    /// Upper bound on the budget of any pair `(x, y)` where `y` normalizes and
    /// the pair survives the length filter, given `|x| = len`.
    ///
    /// Saturates at `len`, which already means "use every element of x".
    pub(crate) fn partner_bound(self, len: usize) -> usize {
        let mut best = self.k_max(len).unwrap_or(0);
        let mut other = len.max(1);
        loop {
            let k = self.k_max(other).unwrap_or(0);
            if other - k > len {
                break;
            }
            best = best.max(k);
            if best >= len {
                return len;
            }
            other += 1;
        }
        best
    }
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::DEFAULT
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The edit allowance that a reference of a given length grants under ε.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EditBudget {
    pub epsilon: Epsilon,
    pub ref_len: usize,
    /// Largest integer `k` with `k / ref_len < ε`; `None` for an empty reference.
    pub k_max: Option<usize>,
}

impl EditBudget {
    pub fn new(epsilon: Epsilon, ref_len: usize) -> Self {
        EditBudget {
            epsilon,
            ref_len,
            k_max: epsilon.k_max(ref_len),
        }
    }
}

/// Edit count over reference length, kept as an exact fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordErrorRate {
    pub edits: usize,
    pub ref_words: usize,
}

impl WordErrorRate {
    pub fn value(self) -> f64 {
        if self.ref_words == 0 {
            0.0
        } else {
            self.edits as f64 / self.ref_words as f64
        }
    }
}

/// Unit-cost Levenshtein distance between two token slices (Wagner–Fischer, two rows).
pub fn levenshtein_slices<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = strip_affixes(a, b);
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance if it is at most `k`, else `None`.
///
/// Only the `2k + 1` diagonals around the main one are filled, and the scan
/// stops as soon as a whole band row exceeds `k`.
pub fn bounded_levenshtein<T: PartialEq>(a: &[T], b: &[T], k: usize) -> Option<usize> {
    let (a, b) = strip_affixes(a, b);
    let (n, m) = (a.len(), b.len());
    if n.abs_diff(m) > k {
        return None;
    }
    if n == 0 || m == 0 {
        return Some(n.max(m));
    }
    let inf = k + 1;
    let mut prev = vec![inf; m + 1];
    let mut cur = vec![inf; m + 1];
    for (j, cell) in prev.iter_mut().enumerate().take(k.min(m) + 1) {
        *cell = j;
    }
    for i in 1..=n {
        let lo = i.saturating_sub(k);
        let hi = (i + k).min(m);
        let mut row_min = inf;
        if lo == 0 {
            cur[0] = i;
            row_min = i;
        } else {
            cur[lo - 1] = inf;
        }
        let x = &a[i - 1];
        for j in lo.max(1)..=hi {
            let sub = prev[j - 1] + usize::from(*x != b[j - 1]);
            let v = sub.min(prev[j] + 1).min(cur[j - 1] + 1).min(inf);
            cur[j] = v;
            row_min = row_min.min(v);
        }
        if hi < m {
            cur[hi + 1] = inf;
        }
        if row_min > k {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[m];
    (d <= k).then_some(d)
}

fn strip_affixes<'a, T: PartialEq>(mut a: &'a [T], mut b: &'a [T]) -> (&'a [T], &'a [T]) {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    a = &a[prefix..];
    b = &b[prefix..];
    let suffix = a.iter().rev().zip(b.iter().rev()).take_while(|(x, y)| x == y).count();
    (&a[..a.len() - suffix], &b[..b.len() - suffix])
}

/// Total insertions, deletions and substitutions turning `reference` into `hypothesis`.
pub fn levenshtein(reference: &WordSequence, hypothesis: &WordSequence) -> usize {
    levenshtein_slices(reference.tokens(), hypothesis.tokens())
}

/// Word error rate of `hypothesis` against `reference`.
pub fn wer(reference: &WordSequence, hypothesis: &WordSequence) -> Result<WordErrorRate, DistanceError> {
    if reference.is_empty() && !hypothesis.is_empty() {
        return Err(DistanceError::EmptyReference);
    }
    Ok(WordErrorRate {
        edits: levenshtein(reference, hypothesis),
        ref_words: reference.len(),
    })
}

/// `wer(reference, hypothesis) < epsilon`, decided with the banded kernel.
pub fn within_threshold(
    reference: &WordSequence,
    hypothesis: &WordSequence,
    epsilon: Epsilon,
) -> Result<bool, DistanceError> {
    match epsilon.k_max(reference.len()) {
        None if hypothesis.is_empty() => Ok(true),
        None => Err(DistanceError::EmptyReference),
        Some(k) => Ok(bounded_levenshtein(reference.tokens(), hypothesis.tokens(), k).is_some()),
    }
}

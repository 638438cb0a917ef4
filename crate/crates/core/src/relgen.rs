//! Relation-extraction samples built by marking one entity pair per sample.
//!
//! Each unordered entity pair of an annotated text yields one candidate in
//! which the pair's mentions become `MARKER-A` / `MARKER-B`. Candidates from
//! one text differ only in marker placement, which makes them near
//! duplicates of each other: same-label candidates are h-affable, and
//! moving the markers off a positive pair gives h-adversarial negatives.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, Sample, TransformKind, NEGATIVE_LABEL, POSITIVE_LABEL};
use crate::par::{self, Parallelism};

pub const MARKER_A: &str = "MARKER-A";
pub const MARKER_B: &str = "MARKER-B";

#[derive(Debug, thiserror::Error)]
pub enum RelgenError {
    #[error("text {id:?}: entity {entity:?} does not occur as a whole token")]
    EntityNotFound { id: String, entity: String },
    #[error("text {id:?}: entity {entity:?} is listed twice")]
    DuplicateEntity { id: String, entity: String },
    #[error("text {id:?}: entity {inner:?} overlaps entity {outer:?}")]
    OverlappingEntities { id: String, inner: String, outer: String },
    #[error("text {id:?}: positive pair ({a:?}, {b:?}) is not a pair of distinct listed entities")]
    BadPair { id: String, a: String, b: String },
    #[error("text {id:?}: an entity cannot be paired with itself ({entity:?})")]
    SameEntity { id: String, entity: String },
    #[error("text {id:?}: no negative entity pair to move the markers onto")]
    NoAlternativePair { id: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// A text with its entity mentions and the pairs that hold the target relation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedText {
    pub id: String,
    pub text: String,
    pub entities: Vec<String>,
    #[serde(default)]
    pub positive_pairs: Vec<(String, String)>,
}

impl AnnotatedText {
    pub fn validate(&self) -> Result<(), RelgenError> {
        let id = || self.id.clone();
        let mut seen = BTreeSet::new();
        for e in &self.entities {
            if !seen.insert(e.as_str()) {
                return Err(RelgenError::DuplicateEntity { id: id(), entity: e.clone() });
            }
            if mentions(&self.text, e).is_empty() {
                return Err(RelgenError::EntityNotFound { id: id(), entity: e.clone() });
            }
        }
        for inner in &self.entities {
            for outer in &self.entities {
                if inner != outer && outer.contains(inner.as_str()) {
                    return Err(RelgenError::OverlappingEntities {
                        id: id(),
                        inner: inner.clone(),
                        outer: outer.clone(),
                    });
                }
            }
        }
        for (a, b) in &self.positive_pairs {
            if a == b || !seen.contains(a.as_str()) || !seen.contains(b.as_str()) {
                return Err(RelgenError::BadPair { id: id(), a: a.clone(), b: b.clone() });
            }
        }
        Ok(())
    }

    fn is_positive(&self, a: &str, b: &str) -> bool {
        self.positive_pairs
            .iter()
            .any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    }

    /// Unordered pairs in enumeration order: `(i, j)` with `i < j` over `entities`.
    fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.entities.len();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    }

    fn pair_sample(&self, index: usize, i: usize, j: usize) -> Result<Sample, RelgenError> {
        let (a, b) = (&self.entities[i], &self.entities[j]);
        let text = insert_markers(self, a, b)?;
        let label = if self.is_positive(a, b) {
            POSITIVE_LABEL
        } else {
            NEGATIVE_LABEL
        };
        let mut s = Sample::new(format!("{}-{}", self.id, index), text, label);
        s.source_id = Some(self.id.clone());
        s.transform = Some(TransformKind::MarkerPair);
        Ok(s)
    }
}

/// Byte spans of whole-token occurrences: not preceded or followed by an
/// alphanumeric character.
fn mentions(text: &str, entity: &str) -> Vec<(usize, usize)> {
    if entity.is_empty() {
        return Vec::new();
    }
    text.match_indices(entity)
        .map(|(start, m)| (start, start + m.len()))
        .filter(|&(start, end)| {
            let before = text[..start].chars().next_back();
            let after = text[end..].chars().next();
            !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
        })
        .collect()
}

/// Replaces every mention of `a` and `b`: the entity mentioned first becomes
/// `MARKER-A`, the other `MARKER-B`. Other entities are left alone.
pub fn insert_markers(annotated: &AnnotatedText, a: &str, b: &str) -> Result<String, RelgenError> {
    if a == b {
        return Err(RelgenError::SameEntity {
            id: annotated.id.clone(),
            entity: a.to_owned(),
        });
    }
    let found = |e: &str| {
        let spans = mentions(&annotated.text, e);
        if spans.is_empty() {
            Err(RelgenError::EntityNotFound {
                id: annotated.id.clone(),
                entity: e.to_owned(),
            })
        } else {
            Ok(spans)
        }
    };
    let (sa, sb) = (found(a)?, found(b)?);
    let (first, second) = if sa[0].0 <= sb[0].0 { (sa, sb) } else { (sb, sa) };
    let mut spans: Vec<(usize, usize, &str)> = first
        .into_iter()
        .map(|(s, e)| (s, e, MARKER_A))
        .chain(second.into_iter().map(|(s, e)| (s, e, MARKER_B)))
        .collect();
    spans.sort_unstable();
    let mut out = String::with_capacity(annotated.text.len());
    let mut at = 0;
    for (start, end, marker) in spans {
        out.push_str(&annotated.text[at..start]);
        out.push_str(marker);
        at = end;
    }
    out.push_str(&annotated.text[at..]);
    Ok(out)
}

/// One sample per unordered entity pair, id `<source>-<pair index>`.
pub fn enumerate_pair_samples(annotated: &AnnotatedText) -> Result<Vec<Sample>, RelgenError> {
    annotated.validate()?;
    if annotated.entities.len() < 2 {
        log::warn!("text {:?} has fewer than two entities; no pairs generated", annotated.id);
        return Ok(Vec::new());
    }
    annotated
        .pairs()
        .into_iter()
        .enumerate()
        .map(|(k, (i, j))| annotated.pair_sample(k, i, j))
        .collect()
}

/// Enumerates every text, preserving input order.
pub fn enumerate_all(texts: &[AnnotatedText], parallelism: Parallelism) -> Result<Vec<Sample>, RelgenError> {
    par::map(texts, parallelism, enumerate_pair_samples)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map(|v| v.into_iter().flatten().collect())
}

/// Moves the markers of `positive_pair` onto a random non-positive pair.
///
/// The result is the enumerated sample for that pair, relabelled as an
/// adversarial derived from the positive pair's sample.
pub fn shuffle_marker_adversarial<R: Rng + ?Sized>(
    annotated: &AnnotatedText,
    positive_pair: (&str, &str),
    rng: &mut R,
) -> Result<Sample, RelgenError> {
    annotated.validate()?;
    let (pa, pb) = positive_pair;
    let pairs = annotated.pairs();
    let source_index = pairs.iter().position(|&(i, j)| {
        let (x, y) = (&annotated.entities[i], &annotated.entities[j]);
        (x == pa && y == pb) || (x == pb && y == pa)
    });
    let source_index = match source_index {
        Some(k) if annotated.is_positive(pa, pb) => k,
        _ => {
            return Err(RelgenError::BadPair {
                id: annotated.id.clone(),
                a: pa.to_owned(),
                b: pb.to_owned(),
            })
        }
    };
    let candidates: Vec<(usize, (usize, usize))> = pairs
        .into_iter()
        .enumerate()
        .filter(|&(_, (i, j))| !annotated.is_positive(&annotated.entities[i], &annotated.entities[j]))
        .collect();
    let &(k, (i, j)) = candidates.choose(rng).ok_or_else(|| RelgenError::NoAlternativePair {
        id: annotated.id.clone(),
    })?;
    let mut s = annotated.pair_sample(k, i, j)?;
    s.source_id = Some(format!("{}-{}", annotated.id, source_index));
    s.transform = Some(TransformKind::Adversarial);
    Ok(s)
}

/// Reads JSONL `{"id", "text", "entities", "positive_pairs"}` records and validates each.
pub fn load_annotated(path: impl AsRef<Path>) -> Result<Vec<AnnotatedText>, RelgenError> {
    let path = path.as_ref();
    let io_err = |e| CorpusError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let a: AnnotatedText = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        a.validate()?;
        out.push(a);
    }
    Ok(out)
}

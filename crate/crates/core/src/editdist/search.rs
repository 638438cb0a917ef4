use std::io::{self, Write};

use super::{Epsilon, PairRule, PrefixIndex, TokenTable};
use crate::corpus::Sample;
use crate::par::{self, Parallelism};

/// Which side of a query/reference pair is the δ reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Orientation {
    /// `δ(ref, query)`: the reference sample normalizes.
    #[default]
    Reference,
    /// `δ(query, ref)`: the flagged query normalizes.
    Query,
}

impl Orientation {
    pub(crate) fn rule(self) -> PairRule {
        match self {
            Orientation::Reference => PairRule::IndexedNormalizes,
            Orientation::Query => PairRule::QueryNormalizes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchOptions {
    pub epsilon: Epsilon,
    pub orientation: Orientation,
    pub collect_pairs: bool,
    pub parallelism: Parallelism,
}

impl SearchOptions {
    pub fn new(epsilon: Epsilon) -> Self {
        SearchOptions {
            epsilon,
            orientation: Orientation::default(),
            collect_pairs: false,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborPair {
    pub query_id: String,
    pub ref_id: String,
    pub edits: usize,
    /// Length of whichever side normalized δ.
    pub norm_words: usize,
}

impl NeighborPair {
    pub fn delta(&self) -> f64 {
        self.edits as f64 / self.norm_words as f64
    }
}

/// Per-query "has a near reference" flags, plus every near pair when requested.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NeighborSet {
    pub flags: Vec<bool>,
    pub pairs: Option<Vec<NeighborPair>>,
}

impl NeighborSet {
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

pub fn find_neighbors(queries: &[Sample], refs: &[Sample], epsilon: Epsilon, collect_pairs: bool) -> NeighborSet {
    let opts = SearchOptions {
        collect_pairs,
        ..SearchOptions::new(epsilon)
    };
    find_neighbors_with(queries, refs, &opts)
}

/// For every query, whether some reference with a different id lies within ε.
///
/// Empty references are skipped with a warning when they would normalize δ.
pub fn find_neighbors_with(queries: &[Sample], refs: &[Sample], opts: &SearchOptions) -> NeighborSet {
    let table = TokenTable::from_texts(queries.iter().chain(refs).map(|s| s.text.as_str()));
    let offset = queries.len() as u32;
    let members: Vec<u32> = (0..refs.len() as u32).map(|i| i + offset).collect();
    if opts.orientation == Orientation::Reference {
        let empty = members.iter().filter(|&&r| table.doc(r).is_empty()).count();
        if empty > 0 {
            log::warn!("skipping {empty} empty reference sample(s)");
        }
    }
    let index = PrefixIndex::build(&table, &members, opts.epsilon, opts.orientation.rule());
    let query_ids: Vec<u32> = (0..offset).collect();
    let hits = par::map(&query_ids, opts.parallelism, |&q| {
        let qid = &queries[q as usize].id;
        index.neighbors(q, |r| refs[(r - offset) as usize].id != *qid, !opts.collect_pairs)
    });
    let flags = hits.iter().map(|h| !h.is_empty()).collect();
    let table = &table;
    let pairs = opts.collect_pairs.then(|| {
        let mut pairs: Vec<NeighborPair> = hits
            .iter()
            .enumerate()
            .flat_map(|(q, h)| {
                h.iter().map(move |&(r, edits)| {
                    let query = &queries[q];
                    let reference = &refs[(r - offset) as usize];
                    let norm = match opts.orientation {
                        Orientation::Reference => table.doc(r).len(),
                        Orientation::Query => table.doc(q as u32).len(),
                    };
                    NeighborPair {
                        query_id: query.id.clone(),
                        ref_id: reference.id.clone(),
                        edits,
                        norm_words: norm,
                    }
                })
            })
            .collect();
        pairs.sort_by(|a, b| (&a.query_id, &a.ref_id).cmp(&(&b.query_id, &b.ref_id)));
        pairs
    });
    NeighborSet { flags, pairs }
}

/// `query_id<TAB>ref_id<TAB>delta` with a header line, in the order given.
pub fn write_pairs_tsv<W: Write>(pairs: &[NeighborPair], out: &mut W) -> io::Result<()> {
    writeln!(out, "query_id\tref_id\tdelta")?;
    for p in pairs {
        writeln!(out, "{}\t{}\t{:.6}", p.query_id, p.ref_id, p.delta())?;
    }
    Ok(())
}

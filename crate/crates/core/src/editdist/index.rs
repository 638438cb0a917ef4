//! Exact candidate generation for threshold edit-distance search.
//!
//! Two word sequences within `k` edits share at least
//! `max(|a|, |b|) - q + 1 - k·q` word q-grams, counted as multisets. Each text
//! is reduced to its q-gram multiset, the i-th occurrence of a gram becoming
//! a distinct element, and the elements are sorted in one global order
//! (rarest words first). If two sets must share `t ≥ 1` elements, their
//! prefixes of length `|set| - t + 1` intersect, so only pairs that collide
//! on a prefix element need a distance computation. With `q = 2` this prefix
//! is `2K + 1` grams and with `q = 1` it is `K + 1` words, where `K` bounds the
//! budget of any admissible pair involving the text. Bigrams are used whenever
//! the overlap bound for them is positive, unigrams otherwise (for unigrams it
//! is always at least one).
//!
//! Hash collisions between element keys can only add candidates, never drop
//! them: every candidate is confirmed with the banded kernel.

use std::collections::HashMap;

use super::{bounded_levenshtein, Epsilon};

/// Which side of a pair normalizes the edit count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum PairRule {
    /// The indexed text is the reference.
    IndexedNormalizes,
    /// The probing text is the reference.
    QueryNormalizes,
    /// Near in either orientation: budget of the longer reference.
    Larger,
}

/// Interned token sequences with word frequencies frozen at construction.
///
/// Tokens interned afterwards rank as frequency zero; the element order only
/// has to be fixed, not accurate.
#[derive(Debug, Default)]
pub(crate) struct TokenTable {
    vocab: HashMap<String, u32>,
    docs: Vec<Vec<u32>>,
    freq: Vec<u32>,
}

impl TokenTable {
    pub(crate) fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut table = TokenTable::default();
        for t in texts {
            table.push(t);
        }
        let mut freq = vec![0u32; table.vocab.len()];
        for doc in &table.docs {
            for &tok in doc {
                freq[tok as usize] += 1;
            }
        }
        table.freq = freq;
        table
    }

    pub(crate) fn push(&mut self, text: &str) -> u32 {
        let mut doc = Vec::new();
        for w in text.split_whitespace() {
            let next = self.vocab.len() as u32;
            let id = *self.vocab.entry(w.to_owned()).or_insert(next);
            doc.push(id);
        }
        self.docs.push(doc);
        (self.docs.len() - 1) as u32
    }

    pub(crate) fn doc(&self, id: u32) -> &[u32] {
        &self.docs[id as usize]
    }

    fn freq(&self, tok: u32) -> u32 {
        self.freq.get(tok as usize).copied().unwrap_or(0)
    }
}

const UNIGRAM_TAG: u64 = 0x9e37_79b9_7f4a_7c15;
const BIGRAM_TAG: u64 = 0xc2b2_ae3d_27d4_eb4f;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Prefix keys of a text for one gram size, given its budget bound `bound`.
struct Prefixes {
    unigrams: Vec<u64>,
    bigrams: Vec<u64>,
    /// Whether bigram overlap is guaranteed for every admissible partner.
    bigram_filter: bool,
}

fn prefixes(table: &TokenTable, tokens: &[u32], bound: usize) -> Prefixes {
    let len = tokens.len();

    let mut uni: Vec<(u32, u32, u32)> = tokens.iter().map(|&t| (table.freq(t), t, 0)).collect();
    uni.sort_unstable();
    number_occurrences(&mut uni, |e| (e.0, e.1), |e, occ| e.2 = occ);
    let take = (bound + 1).min(len);
    let unigrams = uni[..take]
        .iter()
        .map(|&(_, t, occ)| mix(((t as u64) << 32 | occ as u64) ^ UNIGRAM_TAG))
        .collect();

    let grams = len.saturating_sub(1);
    let mut bi: Vec<(u32, u32, u64, u32)> = tokens
        .windows(2)
        .map(|w| {
            let (fa, fb) = (table.freq(w[0]), table.freq(w[1]));
            (fa.min(fb), fa.max(fb), (w[0] as u64) << 32 | w[1] as u64, 0)
        })
        .collect();
    bi.sort_unstable();
    number_occurrences(&mut bi, |e| (e.0, e.1, e.2), |e, occ| e.3 = occ);
    let take = (2 * bound + 1).min(grams);
    let bigrams = bi[..take]
        .iter()
        .map(|&(_, _, pair, occ)| mix(mix(pair ^ BIGRAM_TAG) ^ occ as u64))
        .collect();

    Prefixes {
        unigrams,
        bigrams,
        bigram_filter: len as i64 - 1 - 2 * bound as i64 >= 1,
    }
}

/// Numbers repeated items of a sorted run 0, 1, 2, ...
fn number_occurrences<T, K: PartialEq>(items: &mut [T], key: impl Fn(&T) -> K, mut set: impl FnMut(&mut T, u32)) {
    let mut run = 0u32;
    for i in 0..items.len() {
        if i > 0 && key(&items[i]) == key(&items[i - 1]) {
            run += 1;
        } else {
            run = 0;
        }
        set(&mut items[i], run);
    }
}

fn pair_budget(eps: Epsilon, rule: PairRule, query_len: usize, indexed_len: usize) -> Option<usize> {
    match rule {
        PairRule::IndexedNormalizes => eps.k_max(indexed_len),
        PairRule::QueryNormalizes => eps.k_max(query_len),
        PairRule::Larger => match (eps.k_max(query_len), eps.k_max(indexed_len)) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        },
    }
}

fn indexed_bound(eps: Epsilon, rule: PairRule, len: usize) -> usize {
    match rule {
        PairRule::IndexedNormalizes => eps.k_max(len).unwrap_or(0),
        PairRule::QueryNormalizes | PairRule::Larger => eps.partner_bound(len),
    }
}

fn query_bound(eps: Epsilon, rule: PairRule, len: usize) -> usize {
    match rule {
        PairRule::QueryNormalizes => eps.k_max(len).unwrap_or(0),
        PairRule::IndexedNormalizes | PairRule::Larger => eps.partner_bound(len),
    }
}

/// Exact distance check for one candidate pair under `rule`.
fn confirm(eps: Epsilon, rule: PairRule, query: &[u32], indexed: &[u32]) -> Option<usize> {
    let k = pair_budget(eps, rule, query.len(), indexed.len())?;
    if query.len().abs_diff(indexed.len()) > k {
        return None;
    }
    match rule {
        PairRule::QueryNormalizes => bounded_levenshtein(query, indexed, k),
        _ => bounded_levenshtein(indexed, query, k),
    }
}

/// Immutable posting lists: keys sorted, one document per entry.
#[derive(Debug, Default)]
struct Postings {
    keys: Vec<u64>,
    docs: Vec<u32>,
}

impl Postings {
    fn from_entries(mut entries: Vec<(u64, u32)>) -> Self {
        entries.sort_unstable();
        let (keys, docs) = entries.into_iter().unzip();
        Postings { keys, docs }
    }

    fn get(&self, key: u64) -> &[u32] {
        let lo = self.keys.partition_point(|&k| k < key);
        let hi = lo + self.keys[lo..].partition_point(|&k| k == key);
        &self.docs[lo..hi]
    }
}

/// Read-only index over a subset of a [`TokenTable`].
pub(crate) struct PrefixIndex<'t> {
    table: &'t TokenTable,
    eps: Epsilon,
    rule: PairRule,
    unigrams: Postings,
    bigrams: Postings,
}

impl<'t> PrefixIndex<'t> {
    pub(crate) fn build(table: &'t TokenTable, members: &[u32], eps: Epsilon, rule: PairRule) -> Self {
        let mut uni = Vec::new();
        let mut bi = Vec::new();
        for &doc in members {
            let tokens = table.doc(doc);
            if eps.k_max(tokens.len()).is_none() && rule == PairRule::IndexedNormalizes {
                continue;
            }
            let p = prefixes(table, tokens, indexed_bound(eps, rule, tokens.len()));
            uni.extend(p.unigrams.into_iter().map(|k| (k, doc)));
            bi.extend(p.bigrams.into_iter().map(|k| (k, doc)));
        }
        PrefixIndex {
            table,
            eps,
            rule,
            unigrams: Postings::from_entries(uni),
            bigrams: Postings::from_entries(bi),
        }
    }

    /// Indexed documents near `query_doc` and accepted by `accept`, with
    /// their edit distance. Stops after the first hit when `first_only`.
    pub(crate) fn neighbors(
        &self,
        query_doc: u32,
        accept: impl Fn(u32) -> bool,
        first_only: bool,
    ) -> Vec<(u32, usize)> {
        let query = self.table.doc(query_doc);
        let p = prefixes(self.table, query, query_bound(self.eps, self.rule, query.len()));
        let mut cands = Vec::new();
        if p.bigram_filter {
            for key in p.bigrams {
                cands.extend_from_slice(self.bigrams.get(key));
            }
        } else {
            for key in p.unigrams {
                cands.extend_from_slice(self.unigrams.get(key));
            }
        }
        cands.sort_unstable();
        cands.dedup();
        let mut out = Vec::new();
        for doc in cands {
            if !accept(doc) {
                continue;
            }
            if let Some(d) = confirm(self.eps, self.rule, query, self.table.doc(doc)) {
                out.push((doc, d));
                if first_only {
                    break;
                }
            }
        }
        out
    }
}

/// Growable set of texts supporting "is anything already here near this?"
/// queries in either orientation. Used to keep randomly drawn fill samples
/// clear of everything a curated dataset already contains.
#[derive(Debug)]
pub struct NearIndex {
    table: TokenTable,
    eps: Epsilon,
    unigrams: HashMap<u64, Vec<u32>>,
    bigrams: HashMap<u64, Vec<u32>>,
    members: Vec<u32>,
}

impl NearIndex {
    /// Interns `texts` (document ids follow their order) and freezes word
    /// frequencies from them. No text is a member until [`NearIndex::insert`].
    pub fn new<'a>(eps: Epsilon, texts: impl IntoIterator<Item = &'a str>) -> Self {
        NearIndex {
            table: TokenTable::from_texts(texts),
            eps,
            unigrams: HashMap::new(),
            bigrams: HashMap::new(),
            members: Vec::new(),
        }
    }

    /// Interns an additional text and returns its document id.
    pub fn push_text(&mut self, text: &str) -> u32 {
        self.table.push(text)
    }

    pub fn insert(&mut self, doc: u32) {
        let tokens = self.table.doc(doc);
        let p = prefixes(&self.table, tokens, indexed_bound(self.eps, PairRule::Larger, tokens.len()));
        for k in p.unigrams {
            self.unigrams.entry(k).or_default().push(doc);
        }
        for k in p.bigrams {
            self.bigrams.entry(k).or_default().push(doc);
        }
        self.members.push(doc);
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members `m` with `δ(m, doc) < ε` or `δ(doc, m) < ε`, in ascending id order.
    pub fn near_members(&self, doc: u32) -> Vec<u32> {
        self.probe(doc, false)
    }

    pub fn is_far(&self, doc: u32) -> bool {
        self.probe(doc, true).is_empty()
    }

    fn probe(&self, doc: u32, first_only: bool) -> Vec<u32> {
        let query = self.table.doc(doc);
        let p = prefixes(&self.table, query, query_bound(self.eps, PairRule::Larger, query.len()));
        let (keys, lists) = if p.bigram_filter {
            (p.bigrams, &self.bigrams)
        } else {
            (p.unigrams, &self.unigrams)
        };
        let mut cands: Vec<u32> = keys.iter().filter_map(|k| lists.get(k)).flatten().copied().collect();
        cands.sort_unstable();
        cands.dedup();
        let mut out = Vec::new();
        for c in cands {
            if c != doc && confirm(self.eps, PairRule::Larger, query, self.table.doc(c)).is_some() {
                out.push(c);
                if first_only {
                    break;
                }
            }
        }
        out
    }
}

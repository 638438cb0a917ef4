//! Seeded synthetic corpora.
//!
//! Texts are drawn from a Zipf-distributed pseudo-word vocabulary, so two
//! independent texts of 100+ words are nowhere near each other and every
//! near pair in a generated corpus is one that was planted.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::corpus::{Dataset, Sample, NEGATIVE_LABEL, POSITIVE_LABEL};
use crate::editdist::Epsilon;
use crate::kdao::KdaoConfig;

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "nu", "po", "ra", "si", "tu", "vo", "za", "bo", "du", "fi", "ko", "ha", "ju",
];

/// Pseudo-words `w_0, w_1, …` drawn with probability ∝ `1 / (rank + 1)^exponent`.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    words: Vec<String>,
    dist: WeightedIndex<f64>,
}

impl Vocabulary {
    /// Words never contain a default KDAO keyword.
    pub fn zipf(size: usize, exponent: f64) -> Self {
        assert!(size > 0, "vocabulary must be non-empty");
        let keywords = KdaoConfig::default();
        let words: Vec<String> = (0..)
            .map(pseudo_word)
            .filter(|w| {
                !keywords
                    .trigger_keywords
                    .iter()
                    .chain(&keywords.entity_keywords)
                    .any(|k| w.contains(k.as_str()))
            })
            .take(size)
            .collect();
        let weights = (0..size).map(|r| 1.0 / ((r + 1) as f64).powf(exponent));
        Vocabulary {
            words,
            dist: WeightedIndex::new(weights).expect("positive weights"),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        &self.words[self.dist.sample(rng)]
    }

    pub fn words<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Vec<String> {
        (0..len).map(|_| self.word(rng).to_owned()).collect()
    }
}

/// Base-16 syllable spelling of `i`, at least two syllables long.
fn pseudo_word(i: usize) -> String {
    let mut n = i;
    let mut out = String::new();
    loop {
        out.push_str(SYLLABLES[n % 16]);
        n /= 16;
        if n == 0 && out.len() >= 4 {
            break out;
        }
    }
}

fn insert_random<R: Rng + ?Sized>(words: &mut Vec<String>, word: &str, rng: &mut R) {
    let at = rng.gen_range(0..=words.len());
    words.insert(at, word.to_owned());
}

/// Labelled KDAO-style pool: every positive satisfies the default keyword
/// rule, every negative fails it.
#[derive(Clone, Debug)]
pub struct PoolSpec {
    pub positives: usize,
    pub negatives: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub vocab_size: usize,
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec {
            positives: 1000,
            negatives: 3000,
            min_words: 100,
            max_words: 250,
            vocab_size: 20_000,
        }
    }
}

pub fn kdao_pool<R: Rng + ?Sized>(spec: &PoolSpec, rng: &mut R) -> Dataset {
    let vocab = Vocabulary::zipf(spec.vocab_size, 1.0);
    let kw = KdaoConfig::default();
    let mut samples = Vec::with_capacity(spec.positives + spec.negatives);
    for i in 0..spec.positives {
        let len = rng.gen_range(spec.min_words..=spec.max_words);
        let mut words = vocab.words(rng, len.saturating_sub(3));
        let trigger = kw.trigger_keywords.choose(rng).expect("non-empty");
        insert_random(&mut words, trigger, rng);
        for e in index::sample(rng, kw.entity_keywords.len(), 2) {
            insert_random(&mut words, &kw.entity_keywords[e], rng);
        }
        samples.push(Sample::new(format!("pos-{i}"), words.join(" "), POSITIVE_LABEL));
    }
    for i in 0..spec.negatives {
        let len = rng.gen_range(spec.min_words..=spec.max_words);
        let mut words = vocab.words(rng, len.saturating_sub(1));
        // At most one entity keyword, so the rule can never fire.
        match rng.gen_range(0..3) {
            0 => insert_random(&mut words, kw.trigger_keywords.choose(rng).expect("non-empty"), rng),
            1 => insert_random(&mut words, kw.entity_keywords.choose(rng).expect("non-empty"), rng),
            _ => words.push(vocab.word(rng).to_owned()),
        }
        samples.push(Sample::new(format!("neg-{i}"), words.join(" "), NEGATIVE_LABEL));
    }
    samples.shuffle(rng);
    Dataset::new(samples, POSITIVE_LABEL).expect("generated ids are unique")
}

/// Large corpus with a known number of planted near-duplicate pairs.
#[derive(Clone, Debug)]
pub struct PlantedSpec {
    pub docs: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub vocab_size: usize,
    /// Fraction of `docs` that are planted copies.
    pub duplicate_fraction: f64,
    /// Fraction of planted copies whose label differs from their source.
    pub adversarial_share: f64,
    pub pos_rate: f64,
    pub epsilon: Epsilon,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            docs: 100_000,
            min_words: 100,
            max_words: 250,
            vocab_size: 50_000,
            duplicate_fraction: 0.01,
            adversarial_share: 0.5,
            pos_rate: 0.25,
            epsilon: Epsilon::DEFAULT,
        }
    }
}

/// A generated corpus and the rate counts its planted pairs produce.
#[derive(Clone, Debug)]
pub struct PlantedCorpus {
    pub dataset: Dataset,
    pub adversarial: BTreeMap<(String, String), usize>,
    pub affable: BTreeMap<String, usize>,
}

/// Every planted copy substitutes a few words of a distinct original, so
/// each pair is near in both orientations and contributes exactly one count
/// to the affected rates.
pub fn planted_corpus<R: Rng + ?Sized>(spec: &PlantedSpec, rng: &mut R) -> PlantedCorpus {
    let vocab = Vocabulary::zipf(spec.vocab_size, 1.0);
    let copies = crate::round_half_even(spec.docs as f64 * spec.duplicate_fraction).min(spec.docs / 2);
    let originals = spec.docs - copies;
    let label = |rng: &mut R| {
        if rng.gen_bool(spec.pos_rate) {
            POSITIVE_LABEL
        } else {
            NEGATIVE_LABEL
        }
    };
    let flip = |l: &str| if l == POSITIVE_LABEL { NEGATIVE_LABEL } else { POSITIVE_LABEL };
    let mut samples: Vec<Sample> = (0..originals)
        .map(|i| {
            let len = rng.gen_range(spec.min_words..=spec.max_words);
            Sample::new(format!("doc-{i}"), vocab.words(rng, len).join(" "), label(rng))
        })
        .collect();
    let mut adversarial = BTreeMap::new();
    let mut affable = BTreeMap::new();
    for l in [POSITIVE_LABEL, NEGATIVE_LABEL] {
        affable.insert(l.to_owned(), 0);
        adversarial.insert((l.to_owned(), flip(l).to_owned()), 0);
    }
    for (c, src) in index::sample(rng, originals, copies).into_iter().enumerate() {
        let source = &samples[src];
        let mut words = source.tokens().into_inner();
        let k = spec.epsilon.k_max(words.len()).unwrap_or(0).min(3);
        for pos in index::sample(rng, words.len(), k) {
            let mut w = vocab.word(rng).to_owned();
            while w == words[pos] {
                w = vocab.word(rng).to_owned();
            }
            words[pos] = w;
        }
        let copy_label = if rng.gen_bool(spec.adversarial_share) {
            flip(&source.label)
        } else {
            source.label.as_str()
        };
        if copy_label == source.label {
            *affable.get_mut(copy_label).expect("binary labels") += 1;
        } else {
            *adversarial
                .get_mut(&(source.label.clone(), copy_label.to_owned()))
                .expect("binary labels") += 1;
            *adversarial
                .get_mut(&(copy_label.to_owned(), source.label.clone()))
                .expect("binary labels") += 1;
        }
        let copy = Sample::new(format!("copy-{c}"), words.join(" "), copy_label);
        samples.push(copy);
    }
    samples.shuffle(rng);
    PlantedCorpus {
        dataset: Dataset::new(samples, POSITIVE_LABEL).expect("generated ids are unique"),
        adversarial,
        affable,
    }
}

/// Short texts over a small vocabulary with planted cliques and chains, for
/// exercising near-pair counting where many pairs sit close to the threshold.
pub fn clustered_corpus<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Dataset {
    let vocab = Vocabulary::zipf(40, 0.8);
    let mut texts: Vec<Vec<String>> = Vec::with_capacity(n);
    while texts.len() < n {
        let base_len = rng.gen_range(4..=24);
        let base = vocab.words(rng, base_len);
        match rng.gen_range(0..10) {
            0..=5 => texts.push(base),
            6..=7 => {
                let size = rng.gen_range(2..=5);
                texts.push(base.clone());
                for _ in 1..size {
                    let mut copy = base.clone();
                    random_edit(&mut copy, &vocab, rng);
                    texts.push(copy);
                }
            }
            _ => {
                let len = rng.gen_range(3..=5);
                let mut cur = base;
                for _ in 0..len {
                    texts.push(cur.clone());
                    for _ in 0..rng.gen_range(1..=2) {
                        random_edit(&mut cur, &vocab, rng);
                    }
                }
            }
        }
    }
    texts.truncate(n);
    let mut samples: Vec<Sample> = texts
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            let l = if rng.gen_bool(0.4) {
                POSITIVE_LABEL
            } else {
                NEGATIVE_LABEL
            };
            Sample::new(format!("c{i}"), w.join(" "), l)
        })
        .collect();
    // Partial shuffle: keeps some chains in order, reverses others.
    for i in 0..samples.len() {
        if rng.gen_bool(0.3) {
            let j = rng.gen_range(0..samples.len());
            samples.swap(i, j);
        }
    }
    Dataset::new(samples, POSITIVE_LABEL).expect("generated ids are unique")
}

fn random_edit<R: Rng + ?Sized>(words: &mut Vec<String>, vocab: &Vocabulary, rng: &mut R) {
    match rng.gen_range(0..3) {
        0 if words.len() > 1 => {
            words.remove(rng.gen_range(0..words.len()));
        }
        1 => {
            let w = vocab.word(rng).to_owned();
            insert_random(words, &w, rng);
        }
        _ => {
            let at = rng.gen_range(0..words.len());
            words[at] = vocab.word(rng).to_owned();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kdao::{kdao_label, KdaoLabel};
    use crate::seeded_rng;

    #[test]
    fn pseudo_words_are_distinct() {
        let v = Vocabulary::zipf(5000, 1.0);
        let set: std::collections::HashSet<&String> = v.words.iter().collect();
        assert_eq!(set.len(), 5000);
    }

    #[test]
    fn pool_labels_follow_the_keyword_rule() {
        let spec = PoolSpec {
            positives: 50,
            negatives: 150,
            ..PoolSpec::default()
        };
        let pool = kdao_pool(&spec, &mut seeded_rng(1));
        let cfg = KdaoConfig::default();
        for s in pool.samples() {
            let want = if s.label == POSITIVE_LABEL {
                KdaoLabel::Positive
            } else {
                KdaoLabel::Negative
            };
            assert_eq!(kdao_label(&s.text, &cfg), want, "{}", s.id);
            assert!((100..=250).contains(&s.tokens().len()));
        }
        assert_eq!(pool.class_size("P"), 50);
    }

    #[test]
    fn planted_truth_is_symmetric_for_adversarial_pairs() {
        let spec = PlantedSpec {
            docs: 2000,
            vocab_size: 5000,
            ..PlantedSpec::default()
        };
        let c = planted_corpus(&spec, &mut seeded_rng(4));
        assert_eq!(c.dataset.len(), 2000);
        assert_eq!(c.adversarial[&("P".into(), "N".into())], c.adversarial[&("N".into(), "P".into())]);
        let total: usize = c.affable.values().sum::<usize>() + c.adversarial[&("P".into(), "N".into())];
        assert_eq!(total, 20);
    }

    #[test]
    fn clustered_corpus_is_deterministic() {
        let a = clustered_corpus(300, &mut seeded_rng(8));
        let b = clustered_corpus(300, &mut seeded_rng(8));
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
    }
}

//! Keywords And-Or detection (KDAO): a binary task whose labels follow from a
//! rule, so h-adversarial and h-affable variants can be generated exactly.
//!
//! A text is positive when, after lowercasing, it contains at least one
//! trigger keyword and at least two *distinct* entity keywords, matched as
//! substrings ("interaction" contains "interact", "genes" contains "gene").
//! The body variant swaps the roles: two distinct triggers and one entity.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, CorpusError, Dataset, Sample, TransformKind, NEGATIVE_LABEL, POSITIVE_LABEL};
use crate::editdist::{wer, Epsilon};
use crate::par::{self, Parallelism};
use crate::round_half_even;

#[derive(Debug, thiserror::Error)]
pub enum KdaoError {
    #[error("invalid keyword configuration: {0}")]
    InvalidConfig(String),
    #[error("sample {0:?} is not labelled positive by the keyword rule")]
    NotPositive(String),
    #[error("sample {0:?} is not labelled negative by the keyword rule")]
    NotNegative(String),
    #[error("sample {0:?} has no non-keyword word to substitute with")]
    EmptyPool(String),
    #[error("sample {id:?} has {words} word(s), at least {needed} needed")]
    TooShort { id: String, words: usize, needed: usize },
    #[error("internal error: transform of {0:?} did not produce the intended label")]
    Inconsistent(String),
    #[error("positive rate must lie in [0, 1], got {0}")]
    InvalidRate(f64),
    #[error(
        "corpus too small: need {positives_needed} positives ({positives_available} available) \
         and {negatives_needed} negatives ({negatives_available} available)"
    )]
    InsufficientCorpus {
        positives_needed: usize,
        positives_available: usize,
        negatives_needed: usize,
        negatives_available: usize,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdaoConfig {
    pub trigger_keywords: Vec<String>,
    pub entity_keywords: Vec<String>,
    pub min_words: usize,
    pub max_words: usize,
    /// Two distinct triggers and one entity instead of one trigger and two entities.
    pub body_variant: bool,
}

impl Default for KdaoConfig {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        KdaoConfig {
            trigger_keywords: words(&["activation", "trigger", "interact", "inhibit", "regulate", "suppress"]),
            entity_keywords: words(&["gene", "protein", "chemical"]),
            min_words: 100,
            max_words: 250,
            body_variant: false,
        }
    }
}

impl KdaoConfig {
    /// Lowercases the keywords and checks that no keyword contains another.
    pub fn validated(mut self) -> Result<Self, KdaoError> {
        for list in [&mut self.trigger_keywords, &mut self.entity_keywords] {
            for k in list.iter_mut() {
                *k = k.to_lowercase();
            }
        }
        let (pair_set, single_set) = if self.body_variant {
            ("trigger", &self.trigger_keywords)
        } else {
            ("entity", &self.entity_keywords)
        };
        if single_set.len() < 2 {
            return Err(KdaoError::InvalidConfig(format!("at least two {pair_set} keywords are required")));
        }
        if self.trigger_keywords.is_empty() || self.entity_keywords.is_empty() {
            return Err(KdaoError::InvalidConfig("keyword sets must be non-empty".into()));
        }
        let all: Vec<&String> = self.trigger_keywords.iter().chain(&self.entity_keywords).collect();
        for (i, a) in all.iter().enumerate() {
            if a.is_empty() || a.chars().any(char::is_whitespace) {
                return Err(KdaoError::InvalidConfig(format!("keyword {a:?} is empty or contains whitespace")));
            }
            for (j, b) in all.iter().enumerate() {
                if i != j && b.contains(a.as_str()) {
                    return Err(KdaoError::InvalidConfig(format!("keyword {a:?} occurs inside {b:?}")));
                }
            }
        }
        if self.min_words > self.max_words {
            return Err(KdaoError::InvalidConfig("min_words exceeds max_words".into()));
        }
        Ok(self)
    }

    fn is_keyword_word(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        self.trigger_keywords.iter().chain(&self.entity_keywords).any(|k| w.contains(k.as_str()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KdaoLabel {
    Positive,
    Negative,
}

impl KdaoLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            KdaoLabel::Positive => POSITIVE_LABEL,
            KdaoLabel::Negative => NEGATIVE_LABEL,
        }
    }
}

pub fn kdao_label(text: &str, config: &KdaoConfig) -> KdaoLabel {
    let lower = text.to_lowercase();
    let distinct = |set: &[String]| set.iter().filter(|k| lower.contains(k.as_str())).count();
    let positive = if config.body_variant {
        distinct(&config.trigger_keywords) >= 2 && distinct(&config.entity_keywords) >= 1
    } else {
        distinct(&config.trigger_keywords) >= 1 && distinct(&config.entity_keywords) >= 2
    };
    if positive {
        KdaoLabel::Positive
    } else {
        KdaoLabel::Negative
    }
}

/// Which keyword family an adversarial negative erases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeywordSide {
    Trigger,
    Entity,
}

/// Flips a fair coin for the side, then erases it with [`substitute_keywords`].
pub fn make_adversarial_negative<R: Rng + ?Sized>(
    sample: &Sample,
    rng: &mut R,
    config: &KdaoConfig,
) -> Result<Sample, KdaoError> {
    let side = if rng.gen_bool(0.5) {
        KeywordSide::Trigger
    } else {
        KeywordSide::Entity
    };
    substitute_keywords(sample, side, rng, config)
}

/// Replaces every word containing a keyword of `side` with a word drawn
/// uniformly from the sample's own non-keyword words.
pub fn substitute_keywords<R: Rng + ?Sized>(
    sample: &Sample,
    side: KeywordSide,
    rng: &mut R,
    config: &KdaoConfig,
) -> Result<Sample, KdaoError> {
    if kdao_label(&sample.text, config) != KdaoLabel::Positive {
        return Err(KdaoError::NotPositive(sample.id.clone()));
    }
    let words = tokenize(&sample.text).into_inner();
    let pool: Vec<&String> = words.iter().filter(|w| !config.is_keyword_word(w)).collect();
    if pool.is_empty() {
        return Err(KdaoError::EmptyPool(sample.id.clone()));
    }
    let targets = match side {
        KeywordSide::Trigger => &config.trigger_keywords,
        KeywordSide::Entity => &config.entity_keywords,
    };
    let out: Vec<String> = words
        .iter()
        .map(|w| {
            let lw = w.to_lowercase();
            if targets.iter().any(|k| lw.contains(k.as_str())) {
                pool[rng.gen_range(0..pool.len())].clone()
            } else {
                w.clone()
            }
        })
        .collect();
    finish(sample, out, KdaoLabel::Negative, TransformKind::Adversarial, config)
}

/// Inserts one trigger and two distinct entity keywords (two distinct
/// triggers and one entity under the body variant) at random positions.
pub fn make_adversarial_positive<R: Rng + ?Sized>(
    sample: &Sample,
    rng: &mut R,
    config: &KdaoConfig,
) -> Result<Sample, KdaoError> {
    if kdao_label(&sample.text, config) != KdaoLabel::Negative {
        return Err(KdaoError::NotNegative(sample.id.clone()));
    }
    let mut words = tokenize(&sample.text).into_inner();
    if words.is_empty() {
        return Err(KdaoError::TooShort {
            id: sample.id.clone(),
            words: 0,
            needed: 1,
        });
    }
    let (single, pair) = if config.body_variant {
        (&config.entity_keywords, &config.trigger_keywords)
    } else {
        (&config.trigger_keywords, &config.entity_keywords)
    };
    let first = single[rng.gen_range(0..single.len())].clone();
    let two = index::sample(rng, pair.len(), 2);
    for kw in [first, pair[two.index(0)].clone(), pair[two.index(1)].clone()] {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, kw);
    }
    finish(sample, words, KdaoLabel::Positive, TransformKind::Adversarial, config)
}

/// Inserts copies of three existing words (chosen with replacement) at random positions.
pub fn make_affable<R: Rng + ?Sized>(sample: &Sample, rng: &mut R) -> Result<Sample, KdaoError> {
    let mut words = tokenize(&sample.text).into_inner();
    if words.len() < 2 {
        return Err(KdaoError::TooShort {
            id: sample.id.clone(),
            words: words.len(),
            needed: 2,
        });
    }
    for _ in 0..3 {
        let copy = words[rng.gen_range(0..words.len())].clone();
        let at = rng.gen_range(0..=words.len());
        words.insert(at, copy);
    }
    let out = Sample::derived(
        format!("{}-aff", sample.id),
        words.join(" "),
        sample.label.clone(),
        sample,
        TransformKind::Affable,
    );
    warn_if_far(sample, &out);
    Ok(out)
}

fn finish(
    source: &Sample,
    words: Vec<String>,
    want: KdaoLabel,
    kind: TransformKind,
    config: &KdaoConfig,
) -> Result<Sample, KdaoError> {
    let text = words.join(" ");
    if kdao_label(&text, config) != want {
        return Err(KdaoError::Inconsistent(source.id.clone()));
    }
    let out = Sample::derived(format!("{}-adv", source.id), text, want.as_str(), source, kind);
    warn_if_far(source, &out);
    Ok(out)
}

fn warn_if_far(source: &Sample, out: &Sample) {
    if !within_default_threshold(source, out) {
        log::warn!(
            "generated sample {:?} is not within the default threshold of its source {:?}",
            out.id,
            source.id
        );
    }
}

/// Whether `generated` lies strictly within ε = 0.25 of `source`, δ measured from the source.
pub fn within_default_threshold(source: &Sample, generated: &Sample) -> bool {
    wer(&source.tokens(), &generated.tokens())
        .map(|d| Epsilon::DEFAULT.admits(d.edits, d.ref_words))
        .unwrap_or(false)
}

/// A raw, unlabelled document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDoc {
    pub id: String,
    pub text: String,
}

/// Reads JSONL `{"id", "text"}` records, or plain text with one document per
/// line (ids `line-<n>`). The format is chosen from the first non-blank line.
pub fn load_raw_corpus(path: impl AsRef<Path>) -> Result<Vec<RawDoc>, KdaoError> {
    let path = path.as_ref();
    let io_err = |e| CorpusError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut docs = Vec::new();
    let mut jsonl = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let is_json = *jsonl.get_or_insert_with(|| line.trim_start().starts_with('{'));
        if is_json {
            let doc: RawDoc = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            docs.push(doc);
        } else {
            docs.push(RawDoc {
                id: format!("line-{}", i + 1),
                text: line,
            });
        }
    }
    Ok(docs)
}

/// Auto-labels every document.
pub fn label_corpus(docs: &[RawDoc], config: &KdaoConfig, parallelism: Parallelism) -> Vec<Sample> {
    par::map(docs, parallelism, |d| {
        Sample::new(d.id.clone(), d.text.clone(), kdao_label(&d.text, config).as_str())
    })
}

/// Samples exactly `round(n · pos_rate)` positives and the rest negatives,
/// without replacement, from the length-filtered and auto-labelled corpus.
pub fn build_kdao_dataset<R: Rng + ?Sized>(
    corpus: &[RawDoc],
    n: usize,
    pos_rate: f64,
    config: &KdaoConfig,
    rng: &mut R,
    parallelism: Parallelism,
) -> Result<Dataset, KdaoError> {
    if !(0.0..=1.0).contains(&pos_rate) {
        return Err(KdaoError::InvalidRate(pos_rate));
    }
    let filtered: Vec<RawDoc> = corpus
        .iter()
        .filter(|d| {
            let words = d.text.split_whitespace().count();
            (config.min_words..=config.max_words).contains(&words)
        })
        .cloned()
        .collect();
    let labelled = label_corpus(&filtered, config, parallelism);
    let (pos, neg): (Vec<Sample>, Vec<Sample>) = labelled.into_iter().partition(|s| s.label == POSITIVE_LABEL);
    let want_pos = round_half_even(n as f64 * pos_rate).min(n);
    let want_neg = n - want_pos;
    if pos.len() < want_pos || neg.len() < want_neg {
        return Err(KdaoError::InsufficientCorpus {
            positives_needed: want_pos,
            positives_available: pos.len(),
            negatives_needed: want_neg,
            negatives_available: neg.len(),
        });
    }
    let mut picked: Vec<Sample> = index::sample(rng, pos.len(), want_pos)
        .into_iter()
        .map(|i| pos[i].clone())
        .chain(index::sample(rng, neg.len(), want_neg).into_iter().map(|i| neg[i].clone()))
        .collect();
    rand::seq::SliceRandom::shuffle(picked.as_mut_slice(), rng);
    Ok(Dataset::new(picked, POSITIVE_LABEL)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dataset_stats;
    use crate::seeded_rng;

    fn cfg() -> KdaoConfig {
        KdaoConfig::default().validated().unwrap()
    }

    fn filler(n: usize) -> String {
        (0..n).map(|i| format!("word{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn label_examples() {
        let c = cfg();
        assert_eq!(
            kdao_label("The gene binds this protein via interaction", &c),
            KdaoLabel::Positive
        );
        assert_eq!(kdao_label("gene gene gene inhibits", &c), KdaoLabel::Negative);
        assert_eq!(kdao_label("", &c), KdaoLabel::Negative);
        assert_eq!(kdao_label("GENES and PROTEINS are INHIBITED", &c), KdaoLabel::Positive);
    }

    #[test]
    fn body_variant_swaps_roles() {
        let c = KdaoConfig {
            body_variant: true,
            ..KdaoConfig::default()
        }
        .validated()
        .unwrap();
        assert_eq!(kdao_label("gene protein inhibits", &c), KdaoLabel::Negative);
        assert_eq!(kdao_label("gene inhibits and regulates", &c), KdaoLabel::Positive);
        let mut rng = seeded_rng(3);
        let neg = Sample::new("n", filler(20), "N");
        let out = make_adversarial_positive(&neg, &mut rng, &c).unwrap();
        assert_eq!(kdao_label(&out.text, &c), KdaoLabel::Positive);
    }

    #[test]
    fn config_rejects_overlaps() {
        let bad = KdaoConfig {
            entity_keywords: vec!["gene".into(), "genetic".into()],
            ..KdaoConfig::default()
        };
        assert!(matches!(bad.validated(), Err(KdaoError::InvalidConfig(_))));
        let shared = KdaoConfig {
            entity_keywords: vec!["gene".into(), "inhibit".into()],
            ..KdaoConfig::default()
        };
        assert!(shared.validated().is_err());
    }

    #[test]
    fn substitution_on_trigger_side() {
        let c = cfg();
        let text = format!("{} inhibits the gene and a protein {}", filler(70), filler(3));
        let s = Sample::new("p", text.clone(), "P");
        let out = substitute_keywords(&s, KeywordSide::Trigger, &mut seeded_rng(1), &c).unwrap();
        assert!(!out.text.contains("inhibits"));
        assert!(out.text.contains("gene") && out.text.contains("protein"));
        assert_eq!(out.label, NEGATIVE_LABEL);
        assert_eq!(out.source_id.as_deref(), Some("p"));
        assert_eq!(out.transform, Some(TransformKind::Adversarial));
        let d = wer(&s.tokens(), &out.tokens()).unwrap();
        assert!(d.edits <= 1);
    }

    #[test]
    fn three_keyword_substitutions_in_150_words() {
        let c = cfg();
        let mut words: Vec<String> = filler(147).split(' ').map(str::to_owned).collect();
        words.insert(10, "gene".into());
        words.insert(50, "protein".into());
        words.insert(90, "chemical".into());
        words.push("inhibits".into());
        words.remove(0);
        let s = Sample::new("p", words.join(" "), "P");
        assert_eq!(s.tokens().len(), 150);
        let out = substitute_keywords(&s, KeywordSide::Entity, &mut seeded_rng(9), &c).unwrap();
        let d = wer(&s.tokens(), &out.tokens()).unwrap();
        assert_eq!(d.ref_words, 150);
        assert!(d.edits <= 3);
        assert!(Epsilon::DEFAULT.admits(d.edits, d.ref_words));
    }

    #[test]
    fn empty_pool_is_an_error() {
        let s = Sample::new("p", "gene protein inhibits", "P");
        assert!(matches!(
            substitute_keywords(&s, KeywordSide::Trigger, &mut seeded_rng(0), &cfg()),
            Err(KdaoError::EmptyPool(_))
        ));
    }

    #[test]
    fn wrong_input_label_is_rejected() {
        let neg = Sample::new("n", filler(10), "N");
        assert!(matches!(
            make_adversarial_negative(&neg, &mut seeded_rng(0), &cfg()),
            Err(KdaoError::NotPositive(_))
        ));
        let pos = Sample::new("p", "gene protein inhibit x", "P");
        assert!(matches!(
            make_adversarial_positive(&pos, &mut seeded_rng(0), &cfg()),
            Err(KdaoError::NotNegative(_))
        ));
    }

    #[test]
    fn adversarial_positive_inserts_three_keywords() {
        let c = cfg();
        let s = Sample::new("n", filler(100), "N");
        let out = make_adversarial_positive(&s, &mut seeded_rng(5), &c).unwrap();
        assert_eq!(out.tokens().len(), 103);
        assert_eq!(kdao_label(&out.text, &c), KdaoLabel::Positive);
        let d = wer(&s.tokens(), &out.tokens()).unwrap();
        assert_eq!((d.edits, d.ref_words), (3, 100));
        let entities = c.entity_keywords.iter().filter(|k| out.text.contains(k.as_str())).count();
        assert_eq!(entities, 2);
    }

    #[test]
    fn affable_adds_three_words() {
        let s = Sample::new("x", filler(100), "P");
        let once = make_affable(&s, &mut seeded_rng(2)).unwrap();
        assert_eq!(once.tokens().len(), 103);
        assert_eq!(wer(&s.tokens(), &once.tokens()).unwrap().edits, 3);
        let twice = make_affable(&once, &mut seeded_rng(3)).unwrap();
        assert_eq!(wer(&s.tokens(), &twice.tokens()).unwrap().edits, 6);
        assert_eq!(once.label, "P");
        assert_eq!(once.transform, Some(TransformKind::Affable));
        assert!(matches!(
            make_affable(&Sample::new("y", "one", "N"), &mut seeded_rng(0)),
            Err(KdaoError::TooShort { .. })
        ));
    }

    fn corpus(pos: usize, neg: usize) -> Vec<RawDoc> {
        let mut docs = Vec::new();
        for i in 0..pos {
            docs.push(RawDoc {
                id: format!("p{i}"),
                text: format!("{} gene protein regulates", filler(100)),
            });
        }
        for i in 0..neg {
            docs.push(RawDoc {
                id: format!("n{i}"),
                text: filler(100 + i % 50),
            });
        }
        docs.push(RawDoc {
            id: "short".into(),
            text: "gene protein regulates".into(),
        });
        docs
    }

    #[test]
    fn build_hits_exact_positive_count() {
        let c = cfg();
        let docs = corpus(600, 1600);
        let d = build_kdao_dataset(&docs, 2000, 0.25, &c, &mut seeded_rng(42), Parallelism::default()).unwrap();
        let stats = dataset_stats(&d);
        assert_eq!(stats.size, 2000);
        assert_eq!(stats.per_label["P"], 500);
        assert_eq!(stats.positive_rate, Some(0.25));
        assert!(d.samples().iter().all(|s| s.id != "short"));
        let again = build_kdao_dataset(&docs, 2000, 0.25, &c, &mut seeded_rng(42), Parallelism::Sequential).unwrap();
        assert_eq!(d, again);

        let empty = build_kdao_dataset(&docs, 0, 0.25, &c, &mut seeded_rng(1), Parallelism::default()).unwrap();
        assert!(empty.is_empty());
        let all_pos = build_kdao_dataset(&docs, 100, 1.0, &c, &mut seeded_rng(1), Parallelism::default()).unwrap();
        assert_eq!(all_pos.class_size("P"), 100);
    }

    #[test]
    fn build_reports_shortfall() {
        let err = build_kdao_dataset(&corpus(10, 10), 100, 0.5, &cfg(), &mut seeded_rng(0), Parallelism::default())
            .unwrap_err();
        match err {
            KdaoError::InsufficientCorpus {
                positives_needed,
                positives_available,
                ..
            } => assert_eq!((positives_needed, positives_available), (50, 10)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn raw_corpus_formats() {
        let dir = tempfile::tempdir().unwrap();
        let jsonl = dir.path().join("c.jsonl");
        std::fs::write(&jsonl, "{\"id\":\"a\",\"text\":\"x y\"}\n\n{\"id\":\"b\",\"text\":\"z\"}\n").unwrap();
        let docs = load_raw_corpus(&jsonl).unwrap();
        assert_eq!(docs.len(), 2);
        let txt = dir.path().join("c.txt");
        std::fs::write(&txt, "first doc\nsecond doc\n").unwrap();
        let docs = load_raw_corpus(&txt).unwrap();
        assert_eq!(docs[1].id, "line-2");
    }
}

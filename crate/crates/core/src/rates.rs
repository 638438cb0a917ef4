//! h-adversarial and h-affable rates.
//!
//! For labels `l ≠ l'`, `ñ_{l'}` counts the class-`l'` samples that have some
//! class-`l` sample `s` with `δ(s, ·) < ε`, and `r_hv^{ll'} = ñ_{l'} / |S_l|`.
//! For one label, `ñ_l` counts the class-`l` samples with a *later* sample
//! of the same class within ε (δ measured from the earlier one), and
//! `r_hf^l = ñ_l / |S_l|`. "Later" is dataset order.

use std::collections::BTreeMap;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::corpus::Dataset;
use crate::editdist::{Epsilon, Orientation, PairRule, PrefixIndex, TokenTable};
use crate::par::{self, Parallelism};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RateError {
    #[error("rate undefined: class {0:?} has no samples")]
    EmptyClass(String),
    #[error("label {0:?} is not in the label alphabet")]
    UnknownLabel(String),
    #[error("an h-adversarial rate needs two different labels, got {0:?} twice")]
    SameLabel(String),
}

/// Which sample of a same-label pair is the δ reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AffableReference {
    #[default]
    Earlier,
    Later,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateOptions {
    pub epsilon: Epsilon,
    /// `Reference` measures δ from the class-`l` sample.
    pub adversarial_reference: Orientation,
    pub affable_reference: AffableReference,
    pub parallelism: Parallelism,
}

impl RateOptions {
    pub fn new(epsilon: Epsilon) -> Self {
        RateOptions {
            epsilon,
            adversarial_reference: Orientation::Reference,
            affable_reference: AffableReference::Earlier,
            parallelism: Parallelism::default(),
        }
    }
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions::new(Epsilon::DEFAULT)
    }
}

/// A count over a class size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rate {
    pub n_tilde: usize,
    pub denominator: usize,
}

impl Rate {
    pub fn value(self) -> f64 {
        self.n_tilde as f64 / self.denominator as f64
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rate = RawValue::from_string(format!("{:.6}", self.value())).map_err(serde::ser::Error::custom)?;
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("n", &self.n_tilde)?;
        map.serialize_entry("rate", &rate)?;
        map.end()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DatasetFingerprint {
    pub size: usize,
    pub per_label: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub epsilon: Epsilon,
    /// Keyed by `(l, l')`.
    pub h_adversarial: BTreeMap<(String, String), Rate>,
    pub h_affable: BTreeMap<String, Rate>,
    pub dataset: DatasetFingerprint,
}

impl RateReport {
    pub fn adversarial(&self, l: &str, l_prime: &str) -> Option<Rate> {
        self.h_adversarial.get(&(l.to_owned(), l_prime.to_owned())).copied()
    }

    pub fn affable(&self, l: &str) -> Option<Rate> {
        self.h_affable.get(l).copied()
    }

    /// One line per ordered label pair and per label, e.g. `P->N: 1.000000`.
    pub fn summary_lines(&self) -> Vec<String> {
        let adv = self
            .h_adversarial
            .iter()
            .map(|((l, lp), r)| format!("{l}->{lp}: {:.6} ({}/{})", r.value(), r.n_tilde, r.denominator));
        let aff = self
            .h_affable
            .iter()
            .map(|(l, r)| format!("{l}: {:.6} ({}/{}) affable", r.value(), r.n_tilde, r.denominator));
        adv.chain(aff).collect()
    }
}

impl Serialize for RateReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let adv: BTreeMap<String, Rate> = self
            .h_adversarial
            .iter()
            .map(|((l, lp), r)| (format!("{l}->{lp}"), *r))
            .collect();
        let mut map = serializer.serialize_map(Some(4))?;
        map.serialize_entry("epsilon", &self.epsilon.value())?;
        map.serialize_entry("h_adversarial", &adv)?;
        map.serialize_entry("h_affable", &self.h_affable)?;
        map.serialize_entry("dataset", &self.dataset)?;
        map.end()
    }
}

/// Interned dataset plus per-class document ids, shared by every rate query.
struct RateEngine<'d> {
    dataset: &'d Dataset,
    table: TokenTable,
    opts: RateOptions,
}

impl<'d> RateEngine<'d> {
    fn new(dataset: &'d Dataset, opts: RateOptions) -> Self {
        RateEngine {
            dataset,
            table: TokenTable::from_texts(dataset.samples().iter().map(|s| s.text.as_str())),
            opts,
        }
    }

    fn class(&self, label: &str) -> Result<Vec<u32>, RateError> {
        if !self.dataset.labels().contains(label) {
            return Err(RateError::UnknownLabel(label.to_owned()));
        }
        Ok(self.dataset.class_indices(label).into_iter().map(|i| i as u32).collect())
    }

    fn non_empty_class(&self, label: &str) -> Result<Vec<u32>, RateError> {
        let class = self.class(label)?;
        if class.is_empty() {
            return Err(RateError::EmptyClass(label.to_owned()));
        }
        Ok(class)
    }

    fn count_flagged(&self, index: &PrefixIndex<'_>, queries: &[u32], later_only: bool) -> usize {
        par::map(queries, self.opts.parallelism, |&q| {
            !index.neighbors(q, |r| if later_only { r > q } else { r != q }, true).is_empty()
        })
        .into_iter()
        .filter(|&f| f)
        .count()
    }

    /// `ñ_{l'}` for every `l'` in `targets`, from one index over `S_l`.
    fn adversarial_from(&self, source: &[u32], targets: &[(String, Vec<u32>)]) -> Vec<usize> {
        let index = PrefixIndex::build(&self.table, source, self.opts.epsilon, self.opts.adversarial_reference.rule());
        targets.iter().map(|(_, q)| self.count_flagged(&index, q, false)).collect()
    }

    fn affable(&self, class: &[u32]) -> usize {
        let rule = match self.opts.affable_reference {
            AffableReference::Earlier => PairRule::QueryNormalizes,
            AffableReference::Later => PairRule::IndexedNormalizes,
        };
        let index = PrefixIndex::build(&self.table, class, self.opts.epsilon, rule);
        self.count_flagged(&index, class, true)
    }
}

/// `r_hv^{ll'}`: class-`l'` samples with a near class-`l` sample, over `|S_l|`.
pub fn h_adversarial_rate(dataset: &Dataset, l: &str, l_prime: &str, opts: &RateOptions) -> Result<Rate, RateError> {
    if l == l_prime {
        return Err(RateError::SameLabel(l.to_owned()));
    }
    let engine = RateEngine::new(dataset, *opts);
    let source = engine.non_empty_class(l)?;
    let target = engine.class(l_prime)?;
    let n = engine.adversarial_from(&source, &[(l_prime.to_owned(), target)])[0];
    Ok(Rate {
        n_tilde: n,
        denominator: source.len(),
    })
}

/// `r_hf^l`: class-`l` samples with a later near sample of the same class, over `|S_l|`.
pub fn h_affable_rate(dataset: &Dataset, l: &str, opts: &RateOptions) -> Result<Rate, RateError> {
    let engine = RateEngine::new(dataset, *opts);
    let class = engine.non_empty_class(l)?;
    Ok(Rate {
        n_tilde: engine.affable(&class),
        denominator: class.len(),
    })
}

/// Every ordered-pair h-adversarial rate and every per-label h-affable rate.
pub fn full_report(dataset: &Dataset, opts: &RateOptions) -> Result<RateReport, RateError> {
    let engine = RateEngine::new(dataset, *opts);
    let mut classes = Vec::new();
    for label in dataset.labels() {
        classes.push((label.clone(), engine.non_empty_class(label)?));
    }
    let mut h_adversarial = BTreeMap::new();
    let mut h_affable = BTreeMap::new();
    for (l, source) in &classes {
        let targets: Vec<(String, Vec<u32>)> = classes.iter().filter(|(lp, _)| lp != l).cloned().collect();
        let counts = engine.adversarial_from(source, &targets);
        for ((lp, _), n) in targets.iter().zip(counts) {
            h_adversarial.insert(
                (l.clone(), lp.clone()),
                Rate {
                    n_tilde: n,
                    denominator: source.len(),
                },
            );
        }
        h_affable.insert(
            l.clone(),
            Rate {
                n_tilde: engine.affable(source),
                denominator: source.len(),
            },
        );
    }
    Ok(RateReport {
        epsilon: opts.epsilon,
        h_adversarial,
        h_affable,
        dataset: DatasetFingerprint {
            size: dataset.len(),
            per_label: dataset.label_counts(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sample;

    fn ds(rows: &[(&str, &str, &str)]) -> Dataset {
        Dataset::new(rows.iter().map(|(id, l, t)| Sample::new(*id, *t, *l)).collect(), "P").unwrap()
    }

    fn opts() -> RateOptions {
        RateOptions::default()
    }

    const P1: &str = "a b c d e f g h i j";
    const N1: &str = "a b X d e f Y h i j";
    const N2: &str = "q r s t u v w x y z";

    #[test]
    fn adversarial_is_direction_sensitive() {
        let d = ds(&[("p1", "P", P1), ("n1", "N", N1), ("n2", "N", N2)]);
        let pn = h_adversarial_rate(&d, "P", "N", &opts()).unwrap();
        assert_eq!((pn.n_tilde, pn.denominator), (1, 1));
        assert_eq!(pn.value(), 1.0);
        let np = h_adversarial_rate(&d, "N", "P", &opts()).unwrap();
        assert_eq!((np.n_tilde, np.denominator), (1, 2));
        assert_eq!(np.value(), 0.5);
    }

    #[test]
    fn no_near_pairs_gives_zero() {
        let d = ds(&[("p1", "P", P1), ("n2", "N", N2)]);
        assert_eq!(h_adversarial_rate(&d, "P", "N", &opts()).unwrap().n_tilde, 0);
        assert_eq!(h_affable_rate(&d, "P", &opts()).unwrap().n_tilde, 0);
    }

    #[test]
    fn affable_counts_later_neighbors_only() {
        let d = ds(&[
            ("a", "P", "one two three four five six seven eight"),
            ("b", "P", "one two three four extra five six seven eight"),
            ("c", "P", "nothing in common with the others at all"),
        ]);
        let r = h_affable_rate(&d, "P", &opts()).unwrap();
        assert_eq!((r.n_tilde, r.denominator), (1, 3));
    }

    #[test]
    fn identical_copies_form_a_clique() {
        for k in 1..6 {
            let rows: Vec<(String, &str, &str)> = (0..k).map(|i| (format!("c{i}"), "P", P1)).collect();
            let rows: Vec<(&str, &str, &str)> = rows.iter().map(|(a, b, c)| (a.as_str(), *b, *c)).collect();
            let r = h_affable_rate(&ds(&rows), "P", &opts()).unwrap();
            assert_eq!(r.n_tilde, k - 1);
        }
    }

    #[test]
    fn chain_is_order_sensitive() {
        // a~b and b~c but a≁c
        let a = "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10";
        let b = "w1 w2 w3 w4 w5 X6 X7 w8 w9 w10";
        let c = "w1 w2 w3 Y4 Y5 X6 X7 w8 w9 w10";
        let abc = h_affable_rate(&ds(&[("a", "P", a), ("b", "P", b), ("c", "P", c)]), "P", &opts()).unwrap();
        let bac = h_affable_rate(&ds(&[("b", "P", b), ("a", "P", a), ("c", "P", c)]), "P", &opts()).unwrap();
        assert_eq!(abc.n_tilde, 2);
        assert_eq!(bac.n_tilde, 1);
    }

    #[test]
    fn empty_class_is_an_error() {
        let d = ds(&[("n1", "N", N1)]);
        assert_eq!(
            h_adversarial_rate(&d, "P", "N", &opts()),
            Err(RateError::EmptyClass("P".into()))
        );
        assert_eq!(full_report(&d, &opts()), Err(RateError::EmptyClass("P".into())));
        assert!(matches!(h_affable_rate(&d, "Z", &opts()), Err(RateError::UnknownLabel(_))));
        assert!(matches!(h_adversarial_rate(&d, "N", "N", &opts()), Err(RateError::SameLabel(_))));
    }

    #[test]
    fn single_label_report_has_only_affable() {
        let d = ds(&[("p1", "P", P1), ("p2", "P", N1)]);
        let r = full_report(&d, &opts()).unwrap();
        assert!(r.h_adversarial.is_empty());
        assert_eq!(r.affable("P").unwrap().n_tilde, 1);
    }

    #[test]
    fn report_matches_individual_operations_and_serializes() {
        let d = ds(&[("p1", "P", P1), ("n1", "N", N1), ("n2", "N", N2), ("p2", "P", N2)]);
        let r = full_report(&d, &opts()).unwrap();
        assert_eq!(r.adversarial("P", "N"), Some(h_adversarial_rate(&d, "P", "N", &opts()).unwrap()));
        assert_eq!(r.adversarial("N", "P"), Some(h_adversarial_rate(&d, "N", "P", &opts()).unwrap()));
        assert_eq!(r.affable("N"), Some(h_affable_rate(&d, "N", &opts()).unwrap()));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains(r#""P->N":{"n":2,"rate":1.000000}"#), "{json}");
        assert!(json.contains(r#""epsilon":0.25"#));
        assert!(json.contains(r#""dataset":{"size":4,"per_label":{"N":2,"P":2}}"#), "{json}");
    }

    #[test]
    fn flipped_orientation_changes_normalization() {
        // 4 edits: 4/20 < 0.25 against the long text, 4/16 = 0.25 against the short one.
        let long = "a b c d e f g h i j k l m n o p q r s t";
        let short = "a b c d e f g h i j k l m n o p";
        let d = ds(&[("p", "P", long), ("n", "N", short)]);
        let mut o = opts();
        assert_eq!(h_adversarial_rate(&d, "P", "N", &o).unwrap().n_tilde, 1);
        o.adversarial_reference = Orientation::Query;
        assert_eq!(h_adversarial_rate(&d, "P", "N", &o).unwrap().n_tilde, 0);
    }
}

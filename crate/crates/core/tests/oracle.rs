//! Rate and neighbor-search results against an all-pairs reimplementation.

use std::collections::BTreeMap;

use hadv_core::corpus::Sample;
use hadv_core::editdist::{find_neighbors_with, levenshtein_slices, Orientation, SearchOptions};
use hadv_core::rates::{full_report, AffableReference, RateOptions};
use hadv_core::relgen::{enumerate_pair_samples, AnnotatedText};
use hadv_core::synth::clustered_corpus;
use hadv_core::{seeded_rng, Dataset, Epsilon, Parallelism};

fn near(reference: &Sample, other: &Sample, eps: f64) -> bool {
    let r: Vec<&str> = reference.text.split_whitespace().collect();
    let o: Vec<&str> = other.text.split_whitespace().collect();
    if r.is_empty() {
        return false;
    }
    (levenshtein_slices(&r, &o) as f64) / (r.len() as f64) < eps
}

struct Brute {
    adversarial: BTreeMap<(String, String), usize>,
    affable: BTreeMap<String, usize>,
}

fn brute(ds: &Dataset, eps: f64, adv_query_ref: bool, affable_later_ref: bool) -> Brute {
    let s = ds.samples();
    let mut adversarial = BTreeMap::new();
    let mut affable = BTreeMap::new();
    for l in ds.labels() {
        for lp in ds.labels().iter().filter(|x| *x != l) {
            let n = s
                .iter()
                .filter(|t| &t.label == lp)
                .filter(|t| {
                    s.iter().any(|src| {
                        &src.label == l
                            && src.id != t.id
                            && if adv_query_ref { near(t, src, eps) } else { near(src, t, eps) }
                    })
                })
                .count();
            adversarial.insert((l.clone(), lp.clone()), n);
        }
        let n = (0..s.len())
            .filter(|&i| &s[i].label == l)
            .filter(|&i| {
                (i + 1..s.len()).any(|j| {
                    &s[j].label == l
                        && if affable_later_ref {
                            near(&s[j], &s[i], eps)
                        } else {
                            near(&s[i], &s[j], eps)
                        }
                })
            })
            .count();
        affable.insert(l.clone(), n);
    }
    Brute { adversarial, affable }
}

fn assert_report_matches(ds: &Dataset, eps: f64, orientation: Orientation, affable: AffableReference) {
    let opts = RateOptions {
        adversarial_reference: orientation,
        affable_reference: affable,
        ..RateOptions::new(Epsilon::new(eps).unwrap())
    };
    let report = full_report(ds, &opts).unwrap();
    let want = brute(ds, eps, orientation == Orientation::Query, affable == AffableReference::Later);
    for ((l, lp), n) in &want.adversarial {
        assert_eq!(report.adversarial(l, lp).unwrap().n_tilde, *n, "{l}->{lp} at ε={eps}");
    }
    for (l, n) in &want.affable {
        assert_eq!(report.affable(l).unwrap().n_tilde, *n, "{l} at ε={eps}");
    }
}

#[test]
fn clustered_corpora_match_brute_force() {
    for seed in 0..6 {
        let ds = clustered_corpus(300, &mut seeded_rng(seed));
        for eps in [0.1, 0.25, 0.4] {
            assert_report_matches(&ds, eps, Orientation::Reference, AffableReference::Earlier);
        }
    }
}

#[test]
fn flipped_orientations_match_brute_force() {
    for seed in 10..13 {
        let ds = clustered_corpus(250, &mut seeded_rng(seed));
        assert_report_matches(&ds, 0.25, Orientation::Query, AffableReference::Later);
        assert_report_matches(&ds, 0.25, Orientation::Reference, AffableReference::Later);
        assert_report_matches(&ds, 0.25, Orientation::Query, AffableReference::Earlier);
    }
}

#[test]
fn neighbor_pairs_match_brute_force() {
    let ds = clustered_corpus(500, &mut seeded_rng(99));
    let (q, r) = ds.samples().split_at(200);
    let mut opts = SearchOptions::new(Epsilon::DEFAULT);
    opts.collect_pairs = true;
    for parallelism in [Parallelism::Sequential, Parallelism::default()] {
        opts.parallelism = parallelism;
        let got = find_neighbors_with(q, r, &opts);
        let mut want = Vec::new();
        for a in q {
            for b in r {
                if near(b, a, 0.25) {
                    want.push((a.id.clone(), b.id.clone()));
                }
            }
        }
        want.sort();
        let pairs: Vec<(String, String)> = got
            .pairs
            .unwrap()
            .into_iter()
            .inspect(|p| assert!(p.delta() < 0.25))
            .map(|p| (p.query_id, p.ref_id))
            .collect();
        assert_eq!(pairs, want);
        let flagged: Vec<bool> = q.iter().map(|a| r.iter().any(|b| near(b, a, 0.25))).collect();
        assert_eq!(got.flags, flagged);
    }
}

#[test]
fn marker_example_rates() {
    let text = AnnotatedText {
        id: "rel".into(),
        text: "Gene NLCR inhibits KLK3 and EFGR, but has no effect on MAPK.".into(),
        entities: vec!["NLCR".into(), "KLK3".into(), "EFGR".into(), "MAPK".into()],
        positive_pairs: vec![("NLCR".into(), "KLK3".into()), ("NLCR".into(), "EFGR".into())],
    };
    let all = enumerate_pair_samples(&text).unwrap();
    // (NLCR,KLK3) P, (NLCR,MAPK) N, (KLK3,MAPK) N, (NLCR,EFGR) P.
    let pick = |a: usize| all[a].clone();
    let ds = Dataset::new(vec![pick(0), pick(2), pick(4), pick(1)], "P").unwrap();
    let report = full_report(&ds, &RateOptions::new(Epsilon::new(0.30).unwrap())).unwrap();
    assert_eq!(report.adversarial("P", "N").unwrap().n_tilde, 2);
    assert_eq!(report.adversarial("P", "N").unwrap().value(), 1.0);
    assert_eq!(report.affable("P").unwrap().value(), 0.5);
    assert_eq!(report.affable("N").unwrap().value(), 0.5);
    assert_report_matches(&ds, 0.30, Orientation::Reference, AffableReference::Earlier);
}

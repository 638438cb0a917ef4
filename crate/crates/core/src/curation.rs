//! Fixed-size datasets with exact target h-adversarial / h-affable rates,
//! and nested learning-curve series.
//!
//! Every build follows the same recipe: draw pool samples in a seeded random
//! order, keep a [`NearIndex`] over everything kept so far, and only admit a
//! sample when its near set is exactly what the plan intends (empty for
//! fill samples, its source for an adversarial, its group for an affable
//! copy). The finished dataset is then re-measured with [`full_report`] and
//! compared count-for-count against the plan.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, Dataset, Sample, TransformKind};
use crate::editdist::{wer, Epsilon, NearIndex};
use crate::kdao::{make_adversarial_negative, make_affable, KdaoConfig};
use crate::par::Parallelism;
use crate::rates::{full_report, RateError, RateOptions, RateReport};
use crate::{round_half_even, seeded_rng, SeededRng};

/// Consecutive rejections allowed while filling one slot.
pub const MAX_REJECTIONS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum CurationError {
    #[error("invalid curation spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible target: {0}")]
    Infeasible(String),
    #[error("pool exhausted: needed {needed} more {label:?} samples, none left")]
    PoolExhausted { label: String, needed: usize },
    #[error("{MAX_REJECTIONS} consecutive {label:?} pool samples were near an already kept sample")]
    TooManyRejections { label: String },
    #[error("transform of {id:?} failed: {message}")]
    Transform { id: String, message: String },
    #[error("transform output for {id:?} is not within ε of its source")]
    TransformTooFar { id: String },
    #[error("could not generate a variant of {id:?} that is near only its intended partners")]
    GenerationConflict { id: String },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("standard error needs at least two values, got {0}")]
    TooFewValues(usize),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurationMode {
    Adversarial,
    AffablePositive,
    AffableNegative,
    CurveRandom,
    CurveAffable,
    CurveAdversarialMix,
}

impl CurationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CurationMode::Adversarial => "adversarial",
            CurationMode::AffablePositive => "affable-positive",
            CurationMode::AffableNegative => "affable-negative",
            CurationMode::CurveRandom => "curve-random",
            CurationMode::CurveAffable => "curve-affable",
            CurationMode::CurveAdversarialMix => "curve-adversarial-mix",
        }
    }

    pub fn is_curve(self) -> bool {
        matches!(
            self,
            CurationMode::CurveRandom | CurationMode::CurveAffable | CurationMode::CurveAdversarialMix
        )
    }
}

impl fmt::Display for CurationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CurationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            CurationMode::Adversarial,
            CurationMode::AffablePositive,
            CurationMode::AffableNegative,
            CurationMode::CurveRandom,
            CurationMode::CurveAffable,
            CurationMode::CurveAdversarialMix,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| format!("unknown curation mode {s:?}"))
    }
}

/// How affable copies are arranged when the target needs more than half the class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AffableLayout {
    /// Pairs while `2m ≤ class size`, otherwise cliques of one source and several copies.
    #[default]
    Auto,
    /// One copy per source; `2m > class size` is infeasible.
    PairsOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurationSpec {
    pub mode: CurationMode,
    pub size: usize,
    pub pos_rate: f64,
    pub target_rate: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub far_check: bool,
    pub affable_layout: AffableLayout,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl CurationSpec {
    pub fn new(mode: CurationMode, size: usize, pos_rate: f64, target_rate: f64) -> Self {
        CurationSpec {
            mode,
            size,
            pos_rate,
            target_rate,
            epsilon: Epsilon::DEFAULT.value(),
            seed: 0,
            far_check: true,
            affable_layout: AffableLayout::Auto,
            parallelism: Parallelism::default(),
        }
    }

    fn eps(&self) -> Result<Epsilon, CurationError> {
        Epsilon::new(self.epsilon).map_err(|e| CurationError::InvalidSpec(e.to_string()))
    }

    fn check(&self) -> Result<(), CurationError> {
        self.eps()?;
        if !(self.pos_rate > 0.0 && self.pos_rate < 1.0) {
            return Err(CurationError::InvalidSpec(format!(
                "positive rate must lie in (0, 1), got {}",
                self.pos_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.target_rate) {
            return Err(CurationError::InvalidSpec(format!(
                "target rate must lie in [0, 1], got {}",
                self.target_rate
            )));
        }
        Ok(())
    }
}

/// Where the samples of one bucket come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BucketKind {
    /// Random pool samples far from everything else.
    Pool,
    /// Pool samples that seed generated variants.
    Source,
    Adversarial,
    Affable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Bucket {
    pub label: String,
    pub kind: BucketKind,
    pub count: usize,
}

/// Counts per bucket and the rate counts the finished dataset must show.
///
/// `expected` is keyed like a rate report: `"P->N"` for h-adversarial,
/// `"P"` for h-affable. Keys absent from it are not constrained.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurationPlan {
    pub mode: CurationMode,
    pub size: usize,
    pub positives: usize,
    pub negatives: usize,
    pub target_rate: f64,
    pub target_count: usize,
    pub achieved_rate: f64,
    pub buckets: Vec<Bucket>,
    pub expected: BTreeMap<String, usize>,
}

impl CurationPlan {
    fn count(&self, label: &str, kind: BucketKind) -> usize {
        self.buckets
            .iter()
            .filter(|b| b.label == label && b.kind == kind)
            .map(|b| b.count)
            .sum()
    }
}

fn adversarial_key(l: &str, lp: &str) -> String {
    format!("{l}->{lp}")
}

fn class_split(size: usize, pos_rate: f64) -> Result<(usize, usize), CurationError> {
    let p = round_half_even(size as f64 * pos_rate).min(size);
    let n = size - p;
    if p == 0 || n == 0 {
        return Err(CurationError::InvalidSpec(format!(
            "size {size} at positive rate {pos_rate} leaves a class empty"
        )));
    }
    Ok((p, n))
}

/// `(sources, copies, fill)` for `m` affable counts in a class of `class` samples.
fn affable_layout(class: usize, m: usize, layout: AffableLayout) -> Result<(usize, usize, usize), CurationError> {
    if 2 * m <= class {
        return Ok((m, m, class - 2 * m));
    }
    match layout {
        AffableLayout::PairsOnly => Err(CurationError::Infeasible(format!(
            "{m} source/copy pairs need {} samples but the class holds {class}",
            2 * m
        ))),
        AffableLayout::Auto if m >= class => Err(CurationError::Infeasible(format!(
            "at most {} of {class} samples can have a later near neighbor",
            class - 1
        ))),
        AffableLayout::Auto => Ok((class - m, m, 0)),
    }
}

/// Counts for a single (non-curve) build, or the last step of a curve.
pub fn plan(spec: &CurationSpec, positive: &str, negative: &str) -> Result<CurationPlan, CurationError> {
    spec.check()?;
    if spec.mode == CurationMode::CurveAffable {
        return Err(CurationError::InvalidSpec(
            "curve-affable is planned per series with plan_learning_curve".into(),
        ));
    }
    let (p, n) = class_split(spec.size, spec.pos_rate)?;
    let bucket = |label: &str, kind, count| Bucket {
        label: label.to_owned(),
        kind,
        count,
    };
    let mut expected = BTreeMap::new();
    let zero_all = |expected: &mut BTreeMap<String, usize>| {
        expected.insert(adversarial_key(positive, negative), 0);
        expected.insert(adversarial_key(negative, positive), 0);
        expected.insert(positive.to_owned(), 0);
        expected.insert(negative.to_owned(), 0);
    };
    zero_all(&mut expected);
    let (m, class, buckets) = match spec.mode {
        CurationMode::Adversarial | CurationMode::CurveAdversarialMix => {
            let m = round_half_even(spec.target_rate * p as f64);
            if m > n {
                return Err(CurationError::Infeasible(format!(
                    "{m} generated negatives exceed the {n} negative slots"
                )));
            }
            expected.remove(&adversarial_key(negative, positive));
            expected.insert(adversarial_key(positive, negative), m);
            let b = vec![
                bucket(positive, BucketKind::Source, m),
                bucket(positive, BucketKind::Pool, p - m),
                bucket(negative, BucketKind::Adversarial, m),
                bucket(negative, BucketKind::Pool, n - m),
            ];
            (m, p, b)
        }
        CurationMode::AffablePositive | CurationMode::AffableNegative => {
            let (lab, other, class, other_size) = if spec.mode == CurationMode::AffablePositive {
                (positive, negative, p, n)
            } else {
                (negative, positive, n, p)
            };
            let m = round_half_even(spec.target_rate * class as f64);
            let (s, c, fill) = affable_layout(class, m, spec.affable_layout)?;
            expected.insert(lab.to_owned(), m);
            let b = vec![
                bucket(lab, BucketKind::Source, s),
                bucket(lab, BucketKind::Affable, c),
                bucket(lab, BucketKind::Pool, fill),
                bucket(other, BucketKind::Pool, other_size),
            ];
            (m, class, b)
        }
        CurationMode::CurveRandom => {
            let b = vec![
                bucket(positive, BucketKind::Pool, p),
                bucket(negative, BucketKind::Pool, n),
            ];
            (0, p, b)
        }
        CurationMode::CurveAffable => unreachable!("rejected above"),
    };
    Ok(CurationPlan {
        mode: spec.mode,
        size: spec.size,
        positives: p,
        negatives: n,
        target_rate: spec.target_rate,
        target_count: m,
        achieved_rate: m as f64 / class as f64,
        buckets,
        expected,
    })
}

/// One plan per size. Sizes must be strictly increasing and every bucket
/// must be non-decreasing along the series, since each dataset extends the
/// previous one.
pub fn plan_learning_curve(
    spec: &CurationSpec,
    sizes: &[usize],
    positive: &str,
    negative: &str,
) -> Result<Vec<CurationPlan>, CurationError> {
    if !spec.mode.is_curve() {
        return Err(CurationError::InvalidSpec(format!("{} is not a learning-curve mode", spec.mode)));
    }
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CurationError::InvalidSpec("sizes must be non-empty and strictly increasing".into()));
    }
    let plans: Vec<CurationPlan> = if spec.mode == CurationMode::CurveAffable {
        let (p0, n0) = class_split(sizes[0], spec.pos_rate)?;
        sizes
            .iter()
            .map(|&size| {
                let (p, n) = class_split(size, spec.pos_rate)?;
                let (cp, cn) = (p.checked_sub(p0), n.checked_sub(n0));
                let (cp, cn) = cp.zip(cn).ok_or_else(|| {
                    CurationError::Infeasible(format!("class sizes at {size} shrink below the first dataset"))
                })?;
                let mut expected = BTreeMap::new();
                expected.insert(adversarial_key(positive, negative), 0);
                expected.insert(adversarial_key(negative, positive), 0);
                expected.insert(positive.to_owned(), cp);
                expected.insert(negative.to_owned(), cn);
                Ok(CurationPlan {
                    mode: spec.mode,
                    size,
                    positives: p,
                    negatives: n,
                    target_rate: spec.target_rate,
                    target_count: cp + cn,
                    achieved_rate: (cp + cn) as f64 / size as f64,
                    buckets: vec![
                        Bucket {
                            label: positive.to_owned(),
                            kind: BucketKind::Source,
                            count: p0,
                        },
                        Bucket {
                            label: positive.to_owned(),
                            kind: BucketKind::Affable,
                            count: cp,
                        },
                        Bucket {
                            label: negative.to_owned(),
                            kind: BucketKind::Source,
                            count: n0,
                        },
                        Bucket {
                            label: negative.to_owned(),
                            kind: BucketKind::Affable,
                            count: cn,
                        },
                    ],
                    expected,
                })
            })
            .collect::<Result<_, CurationError>>()?
    } else {
        sizes
            .iter()
            .map(|&size| plan(&CurationSpec { size, ..spec.clone() }, positive, negative))
            .collect::<Result<_, _>>()?
    };
    for w in plans.windows(2) {
        let shrinks = w[0]
            .buckets
            .iter()
            .any(|b| w[1].count(&b.label, b.kind) < b.count);
        if shrinks {
            return Err(CurationError::Infeasible(format!(
                "going from size {} to {} would remove samples",
                w[0].size, w[1].size
            )));
        }
    }
    Ok(plans)
}

/// Sample-to-sample generator used by the builders.
pub trait Transform: Sync {
    fn apply(&self, sample: &Sample, rng: &mut SeededRng) -> Result<Sample, String>;
}

impl<F> Transform for F
where
    F: Fn(&Sample, &mut SeededRng) -> Result<Sample, String> + Sync,
{
    fn apply(&self, sample: &Sample, rng: &mut SeededRng) -> Result<Sample, String> {
        self(sample, rng)
    }
}

/// Keyword-erasing adversarial negatives for KDAO positives.
pub struct KdaoAdversarial(pub KdaoConfig);

impl Transform for KdaoAdversarial {
    fn apply(&self, sample: &Sample, rng: &mut SeededRng) -> Result<Sample, String> {
        make_adversarial_negative(sample, rng, &self.0).map_err(|e| e.to_string())
    }
}

/// Word-duplicating affable copies.
pub struct KdaoAffable;

impl Transform for KdaoAffable {
    fn apply(&self, sample: &Sample, rng: &mut SeededRng) -> Result<Sample, String> {
        make_affable(sample, rng).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateCheck {
    pub rate: String,
    pub expected_n: usize,
    pub achieved_n: usize,
    pub denominator: usize,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub size: usize,
    pub positives: usize,
    pub checks: Vec<RateCheck>,
    pub report: RateReport,
}

#[derive(Clone, Debug)]
pub struct CurationOutput {
    pub dataset: Dataset,
    pub plan: CurationPlan,
    pub verification: VerificationReport,
}

/// Recomputes every rate of `dataset` and compares it with `plan.expected`.
pub fn verify(
    dataset: &Dataset,
    plan: &CurationPlan,
    epsilon: Epsilon,
    parallelism: Parallelism,
) -> Result<VerificationReport, CurationError> {
    let opts = RateOptions {
        parallelism,
        ..RateOptions::new(epsilon)
    };
    let report = full_report(dataset, &opts)?;
    let positives = dataset.class_size(dataset.positive_label());
    let mut checks = Vec::new();
    for (key, &expected_n) in &plan.expected {
        let rate = match key.split_once("->") {
            Some((l, lp)) => report.adversarial(l, lp),
            None => report.affable(key),
        }
        .ok_or_else(|| CurationError::Verification(format!("rate {key} missing from report")))?;
        checks.push(RateCheck {
            rate: key.clone(),
            expected_n,
            achieved_n: rate.n_tilde,
            denominator: rate.denominator,
            ok: rate.n_tilde == expected_n,
        });
    }
    let passed = checks.iter().all(|c| c.ok) && dataset.len() == plan.size && positives == plan.positives;
    Ok(VerificationReport {
        passed,
        size: dataset.len(),
        positives,
        checks,
        report,
    })
}

struct Group {
    members: Vec<Sample>,
    docs: Vec<u32>,
}

struct Builder<'a> {
    pool: &'a Dataset,
    positive: String,
    negative: String,
    eps: Epsilon,
    far_check: bool,
    rng: SeededRng,
    index: NearIndex,
    queues: BTreeMap<String, Vec<usize>>,
    kept: Vec<Sample>,
    kept_sources: BTreeMap<String, usize>,
}

impl<'a> Builder<'a> {
    fn new(pool: &'a Dataset, spec: &CurationSpec) -> Result<Self, CurationError> {
        let positive = pool.positive_label().to_owned();
        let negative = pool
            .negative_label()
            .ok_or_else(|| CurationError::InvalidSpec("the pool must have exactly two labels".into()))?
            .to_owned();
        let mut rng = seeded_rng(spec.seed);
        let mut queues = BTreeMap::new();
        for label in [&positive, &negative] {
            let mut idx = pool.class_indices(label);
            idx.shuffle(&mut rng);
            // Drawn from the back.
            idx.reverse();
            queues.insert(label.clone(), idx);
        }
        let index = NearIndex::new(spec.eps()?, pool.samples().iter().map(|s| s.text.as_str()));
        Ok(Builder {
            pool,
            positive,
            negative,
            eps: spec.eps()?,
            far_check: spec.far_check,
            rng,
            index,
            queues,
            kept: Vec::new(),
            kept_sources: BTreeMap::new(),
        })
    }

    /// Draws `count` pool samples of `label` that are far from everything kept.
    fn fill(&mut self, label: &str, count: usize) -> Result<Vec<(Sample, u32)>, CurationError> {
        let mut out = Vec::with_capacity(count);
        let queue = self.queues.get_mut(label).expect("binary pool");
        while out.len() < count {
            let mut rejections = 0;
            loop {
                let i = queue.pop().ok_or_else(|| CurationError::PoolExhausted {
                    label: label.to_owned(),
                    needed: count - out.len(),
                })?;
                let doc = i as u32;
                if !self.far_check || self.index.is_far(doc) {
                    self.index.insert(doc);
                    out.push((self.pool.samples()[i].clone(), doc));
                    break;
                }
                rejections += 1;
                if rejections >= MAX_REJECTIONS {
                    return Err(CurationError::TooManyRejections { label: label.to_owned() });
                }
            }
        }
        Ok(out)
    }

    fn transform(&mut self, t: &dyn Transform, source: &Sample) -> Result<Sample, CurationError> {
        t.apply(source, &mut self.rng).map_err(|message| CurationError::Transform {
            id: source.id.clone(),
            message,
        })
    }

    fn near(&self, reference: &Sample, other: &Sample) -> bool {
        wer(&reference.tokens(), &other.tokens())
            .map(|d| self.eps.admits(d.edits, d.ref_words))
            .unwrap_or(false)
    }

    /// A negative near `source` (δ measured from the source) and near nothing else kept.
    fn adversarial(&mut self, t: &dyn Transform, source: &Sample, doc: u32) -> Result<Sample, CurationError> {
        for _ in 0..MAX_REJECTIONS {
            let mut g = self.transform(t, source)?;
            if !self.near(source, &g) {
                return Err(CurationError::TransformTooFar { id: source.id.clone() });
            }
            let gdoc = self.index.push_text(&g.text);
            if self.far_check && self.index.near_members(gdoc) != [doc] {
                continue;
            }
            self.index.insert(gdoc);
            g.id = format!("{}-adv", source.id);
            g.label = self.negative.clone();
            g.source_id = Some(source.id.clone());
            g.transform = Some(TransformKind::Adversarial);
            return Ok(g);
        }
        Err(CurationError::GenerationConflict { id: source.id.clone() })
    }

    /// A copy near every group member in both orientations and near nothing else kept.
    fn affable_copy(&mut self, t: &dyn Transform, group: &mut Group) -> Result<Sample, CurationError> {
        let source = group.members[0].clone();
        for _ in 0..MAX_REJECTIONS {
            let mut c = self.transform(t, &source)?;
            if !self.near(&source, &c) {
                return Err(CurationError::TransformTooFar { id: source.id.clone() });
            }
            if !group.members.iter().all(|m| self.near(m, &c) && self.near(&c, m)) {
                continue;
            }
            let cdoc = self.index.push_text(&c.text);
            if self.far_check {
                let mut near = self.index.near_members(cdoc);
                near.sort_unstable();
                let mut want = group.docs.clone();
                want.sort_unstable();
                if near != want {
                    continue;
                }
            }
            self.index.insert(cdoc);
            c.id = format!("{}-aff{}", source.id, group.members.len());
            c.label = source.label.clone();
            c.source_id = Some(source.id.clone());
            c.transform = Some(TransformKind::Affable);
            group.members.push(c.clone());
            group.docs.push(cdoc);
            return Ok(c);
        }
        Err(CurationError::GenerationConflict { id: source.id.clone() })
    }

    /// Appends `batch` in a random order.
    fn append(&mut self, mut batch: Vec<Sample>) {
        batch.shuffle(&mut self.rng);
        self.kept.extend(batch);
    }

    fn dataset(&self) -> Result<Dataset, CurationError> {
        Ok(Dataset::with_labels(
            self.kept.clone(),
            self.pool.labels().clone(),
            self.positive.clone(),
        )?)
    }
}

fn finish(
    builder: &Builder<'_>,
    plan: CurationPlan,
    spec: &CurationSpec,
) -> Result<CurationOutput, CurationError> {
    let dataset = builder.dataset()?;
    let verification = verify(&dataset, &plan, builder.eps, spec.parallelism)?;
    if !verification.passed {
        let failed: Vec<String> = verification
            .checks
            .iter()
            .filter(|c| !c.ok)
            .map(|c| format!("{} expected {} got {}", c.rate, c.expected_n, c.achieved_n))
            .collect();
        let msg = format!("size {} rates off target: {}", plan.size, failed.join(", "));
        if spec.far_check {
            return Err(CurationError::Verification(msg));
        }
        log::warn!("{msg} (far check disabled)");
    }
    Ok(CurationOutput {
        dataset,
        plan,
        verification,
    })
}

fn adversarial_step(
    b: &mut Builder<'_>,
    t: &dyn Transform,
    new_pos: usize,
    new_gen: usize,
    new_neg: usize,
    sources: &mut Vec<(Sample, u32)>,
) -> Result<(), CurationError> {
    let positive = b.positive.clone();
    let negative = b.negative.clone();
    let mut batch = Vec::new();
    let drawn = b.fill(&positive, new_pos)?;
    batch.extend(drawn.iter().map(|(s, _)| s.clone()));
    sources.extend(drawn);
    for _ in 0..new_gen {
        let used = b.kept_sources.entry(positive.clone()).or_insert(0);
        let (src, doc) = sources[*used].clone();
        *used += 1;
        batch.push(b.adversarial(t, &src, doc)?);
    }
    batch.extend(b.fill(&negative, new_neg)?.into_iter().map(|(s, _)| s));
    b.append(batch);
    Ok(())
}

/// Positives drawn at random; `m` of them each get one generated negative;
/// the remaining negative slots are far pool negatives.
pub fn build_adversarial_mix(
    pool: &Dataset,
    spec: &CurationSpec,
    transform: &dyn Transform,
) -> Result<CurationOutput, CurationError> {
    if spec.mode != CurationMode::Adversarial {
        return Err(CurationError::InvalidSpec(format!("expected adversarial mode, got {}", spec.mode)));
    }
    let mut b = Builder::new(pool, spec)?;
    let plan = plan(spec, &b.positive, &b.negative)?;
    let m = plan.target_count;
    let mut sources = Vec::new();
    adversarial_step(&mut b, transform, plan.positives, m, plan.negatives - m, &mut sources)?;
    finish(&b, plan, spec)
}

/// Affable groups of one class and the round-robin copy counter across them.
struct AffableClass {
    label: String,
    groups: Vec<Group>,
    copies: usize,
}

impl AffableClass {
    fn new(label: &str) -> Self {
        AffableClass {
            label: label.to_owned(),
            groups: Vec::new(),
            copies: 0,
        }
    }

    fn grow(
        &mut self,
        b: &mut Builder<'_>,
        t: &dyn Transform,
        new_sources: usize,
        new_copies: usize,
        batch: &mut Vec<Sample>,
    ) -> Result<(), CurationError> {
        for (s, doc) in b.fill(&self.label, new_sources)? {
            batch.push(s.clone());
            self.groups.push(Group {
                members: vec![s],
                docs: vec![doc],
            });
        }
        if new_copies > 0 && self.groups.is_empty() {
            return Err(CurationError::Infeasible(format!("no {:?} sources to copy", self.label)));
        }
        for _ in 0..new_copies {
            let g = self.copies % self.groups.len();
            self.copies += 1;
            batch.push(b.affable_copy(t, &mut self.groups[g])?);
        }
        Ok(())
    }
}

/// Sources plus affable copies (one per source while `2m` fits, otherwise
/// cliques), then far pool samples for the rest of the class and all of
/// the other class.
pub fn build_affable_mix(
    pool: &Dataset,
    spec: &CurationSpec,
    transform: &dyn Transform,
) -> Result<CurationOutput, CurationError> {
    if !matches!(spec.mode, CurationMode::AffablePositive | CurationMode::AffableNegative) {
        return Err(CurationError::InvalidSpec(format!("expected an affable mode, got {}", spec.mode)));
    }
    let mut b = Builder::new(pool, spec)?;
    let plan = plan(spec, &b.positive, &b.negative)?;
    let (lab, other) = if spec.mode == CurationMode::AffablePositive {
        (b.positive.clone(), b.negative.clone())
    } else {
        (b.negative.clone(), b.positive.clone())
    };
    let mut batch = Vec::new();
    AffableClass::new(&lab).grow(
        &mut b,
        transform,
        plan.count(&lab, BucketKind::Source),
        plan.count(&lab, BucketKind::Affable),
        &mut batch,
    )?;
    batch.extend(b.fill(&lab, plan.count(&lab, BucketKind::Pool))?.into_iter().map(|(s, _)| s));
    batch.extend(b.fill(&other, plan.count(&other, BucketKind::Pool))?.into_iter().map(|(s, _)| s));
    b.append(batch);
    finish(&b, plan, spec)
}

/// Dispatches single builds on `spec.mode`.
pub fn build(
    pool: &Dataset,
    spec: &CurationSpec,
    adversarial: &dyn Transform,
    affable: &dyn Transform,
) -> Result<CurationOutput, CurationError> {
    match spec.mode {
        CurationMode::Adversarial => build_adversarial_mix(pool, spec, adversarial),
        CurationMode::AffablePositive | CurationMode::AffableNegative => build_affable_mix(pool, spec, affable),
        m => Err(CurationError::InvalidSpec(format!("{m} builds a series; use build_learning_curve"))),
    }
}

/// Nested series: each dataset is the previous one with new samples appended.
///
/// `curve-random` only adds far pool samples, `curve-adversarial-mix` keeps
/// `round(target · positives)` generated negatives at every size, and
/// `curve-affable` grows past the first size with affable copies of the
/// first dataset's samples only.
pub fn build_learning_curve(
    pool: &Dataset,
    sizes: &[usize],
    spec: &CurationSpec,
    adversarial: &dyn Transform,
    affable: &dyn Transform,
) -> Result<Vec<CurationOutput>, CurationError> {
    let mut b = Builder::new(pool, spec)?;
    let plans = plan_learning_curve(spec, sizes, &b.positive, &b.negative)?;
    let (pos, neg) = (b.positive.clone(), b.negative.clone());
    let mut outputs = Vec::with_capacity(plans.len());
    let mut prev: Option<CurationPlan> = None;
    let mut sources = Vec::new();
    let mut pos_class = AffableClass::new(&pos);
    let mut neg_class = AffableClass::new(&neg);
    for plan in plans {
        let delta = |label: &str, kind| plan.count(label, kind) - prev.as_ref().map_or(0, |p| p.count(label, kind));
        match spec.mode {
            CurationMode::CurveRandom => {
                let (dp, dn) = (delta(&pos, BucketKind::Pool), delta(&neg, BucketKind::Pool));
                let mut batch: Vec<Sample> = b.fill(&pos, dp)?.into_iter().map(|(s, _)| s).collect();
                batch.extend(b.fill(&neg, dn)?.into_iter().map(|(s, _)| s));
                b.append(batch);
            }
            CurationMode::CurveAdversarialMix => {
                let dp = delta(&pos, BucketKind::Source) + delta(&pos, BucketKind::Pool);
                let dg = delta(&neg, BucketKind::Adversarial);
                let dn = delta(&neg, BucketKind::Pool);
                adversarial_step(&mut b, adversarial, dp, dg, dn, &mut sources)?;
            }
            CurationMode::CurveAffable => {
                let mut batch = Vec::new();
                for (class, label) in [(&mut pos_class, &pos), (&mut neg_class, &neg)] {
                    let (ds, dc) = (delta(label, BucketKind::Source), delta(label, BucketKind::Affable));
                    class.grow(&mut b, affable, ds, dc, &mut batch)?;
                }
                b.append(batch);
            }
            m => return Err(CurationError::InvalidSpec(format!("{m} is not a learning-curve mode"))),
        }
        let out = finish(&b, plan.clone(), spec)?;
        log::info!("curve step {}: {} samples verified", plan.size, out.dataset.len());
        outputs.push(out);
        prev = Some(plan);
    }
    Ok(outputs)
}

/// `σ / √n` with the sample (n − 1) standard deviation.
pub fn standard_error(values: &[f64]) -> Result<f64, CurationError> {
    let n = values.len();
    if n < 2 {
        return Err(CurationError::TooFewValues(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(var.sqrt() / (n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{kdao_pool, PoolSpec};

    fn pool(pos: usize, neg: usize) -> Dataset {
        let spec = PoolSpec {
            positives: pos,
            negatives: neg,
            vocab_size: 5000,
            ..PoolSpec::default()
        };
        kdao_pool(&spec, &mut seeded_rng(77))
    }

    fn adv() -> KdaoAdversarial {
        KdaoAdversarial(KdaoConfig::default().validated().unwrap())
    }

    #[test]
    fn standard_error_examples() {
        assert!((standard_error(&[1.0, 2.0, 3.0]).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(standard_error(&[5.0; 4]).unwrap(), 0.0);
        assert!((standard_error(&[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(standard_error(&[1.0]), Err(CurationError::TooFewValues(1))));
    }

    #[test]
    fn plan_arithmetic() {
        let spec = CurationSpec::new(CurationMode::Adversarial, 100, 0.25, 0.2);
        let p = plan(&spec, "P", "N").unwrap();
        assert_eq!((p.positives, p.negatives, p.target_count), (25, 75, 5));
        assert_eq!(p.count("N", BucketKind::Pool), 70);

        let spec = CurationSpec::new(CurationMode::Adversarial, 100, 0.25, 0.9);
        let p = plan(&spec, "P", "N").unwrap();
        assert_eq!(p.target_count, 22);
        assert!((p.achieved_rate - 0.88).abs() < 1e-12);

        let spec = CurationSpec::new(CurationMode::AffablePositive, 2000, 0.25, 0.3);
        let p = plan(&spec, "P", "N").unwrap();
        assert_eq!(p.count("P", BucketKind::Source), 150);
        assert_eq!(p.count("P", BucketKind::Pool), 200);

        let mut spec = CurationSpec::new(CurationMode::AffableNegative, 2000, 0.25, 0.6);
        spec.affable_layout = AffableLayout::PairsOnly;
        assert!(matches!(plan(&spec, "P", "N"), Err(CurationError::Infeasible(_))));
        spec.affable_layout = AffableLayout::Auto;
        let p = plan(&spec, "P", "N").unwrap();
        assert_eq!(p.target_count, 900);
        assert_eq!(p.count("N", BucketKind::Source), 600);

        let spec = CurationSpec::new(CurationMode::AffablePositive, 100, 0.25, 1.0);
        assert!(matches!(plan(&spec, "P", "N"), Err(CurationError::Infeasible(_))));

        let spec = CurationSpec::new(CurationMode::CurveAdversarialMix, 4000, 0.25, 0.1);
        let p = plan(&spec, "P", "N").unwrap();
        assert_eq!(p.count("N", BucketKind::Adversarial), 100);
        assert_eq!(p.count("N", BucketKind::Pool), 2900);
    }

    #[test]
    fn adversarial_mix_hits_target() {
        let pool = pool(100, 300);
        let spec = CurationSpec::new(CurationMode::Adversarial, 100, 0.25, 0.2);
        let out = build_adversarial_mix(&pool, &spec, &adv()).unwrap();
        assert!(out.verification.passed);
        assert_eq!(out.dataset.len(), 100);
        assert_eq!(out.dataset.class_size("P"), 25);
        let rate = out.verification.report.adversarial("P", "N").unwrap();
        assert_eq!((rate.n_tilde, rate.denominator), (5, 25));
        let generated: Vec<&Sample> = out.dataset.samples().iter().filter(|s| s.transform.is_some()).collect();
        assert_eq!(generated.len(), 5);
        assert!(generated.iter().all(|s| s.source_id.is_some() && s.label == "N"));

        let again = build_adversarial_mix(&pool, &spec, &adv()).unwrap();
        assert_eq!(out.dataset, again.dataset);
    }

    #[test]
    fn affable_mix_pairs_and_cliques() {
        let pool = pool(200, 300);
        for target in [0.0, 0.3, 0.9] {
            let spec = CurationSpec::new(CurationMode::AffablePositive, 200, 0.25, target);
            let out = build_affable_mix(&pool, &spec, &KdaoAffable).unwrap();
            let r = out.verification.report.affable("P").unwrap();
            assert_eq!(r.n_tilde, round_half_even(target * 50.0), "target {target}");
            assert_eq!(out.verification.report.adversarial("P", "N").unwrap().n_tilde, 0);
        }
    }

    #[test]
    fn exhausted_pool_reports_counts() {
        let pool = pool(10, 300);
        let spec = CurationSpec::new(CurationMode::Adversarial, 100, 0.25, 0.2);
        assert!(matches!(
            build_adversarial_mix(&pool, &spec, &adv()),
            Err(CurationError::PoolExhausted { needed: 15, .. })
        ));
    }

    #[test]
    fn too_far_transform_is_named() {
        let pool = pool(50, 100);
        let spec = CurationSpec::new(CurationMode::Adversarial, 100, 0.25, 0.2);
        let rewrite = |s: &Sample, _: &mut SeededRng| -> Result<Sample, String> {
            Ok(Sample::derived("x", "completely different", "N", s, TransformKind::Adversarial))
        };
        assert!(matches!(
            build_adversarial_mix(&pool, &spec, &rewrite),
            Err(CurationError::TransformTooFar { .. })
        ));
    }

    #[test]
    fn curves_are_nested() {
        let pool = pool(200, 600);
        for mode in [CurationMode::CurveRandom, CurationMode::CurveAdversarialMix, CurationMode::CurveAffable] {
            let spec = CurationSpec::new(mode, 0, 0.25, 0.1);
            let outs = build_learning_curve(&pool, &[200, 400, 600], &spec, &adv(), &KdaoAffable).unwrap();
            for w in outs.windows(2) {
                let (a, b) = (w[0].dataset.samples(), w[1].dataset.samples());
                assert_eq!(&b[..a.len()], a);
            }
            let last = &outs[2];
            assert_eq!(last.dataset.class_size("P"), 150);
            assert!(last.verification.passed);
            if mode == CurationMode::CurveAffable {
                assert_eq!(last.verification.report.affable("P").unwrap().n_tilde, 100);
            }
        }
    }
}

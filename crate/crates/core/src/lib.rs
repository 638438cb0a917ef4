//! Training-data quality tooling built around two pairwise statistics:
//! h-adversarial rates (near-identical samples with different labels) and
//! h-affable rates (near-identical samples sharing a label), with
//! word-error-rate nearness.
//!
//! * [`corpus`]: samples, datasets, tokenization and I/O
//! * [`editdist`]: word-level edit distance and exact threshold neighbor search
//! * [`rates`]: h-adversarial / h-affable rate reports
//! * [`kdao`]: the self-labelled keywords and-or task and its sample generators
//! * [`relgen`]: entity-marker relation samples and marker-shuffle adversarials
//! * [`curation`]: fixed-size datasets with exact target rates, and learning curves
//! * [`synth`]: seeded synthetic corpora for tests and benchmarks

pub mod corpus;
pub mod curation;
pub mod editdist;
pub mod kdao;
pub mod par;
pub mod rates;
pub mod relgen;
pub mod synth;

pub use corpus::{Dataset, Sample, TransformKind, WordSequence};
pub use editdist::Epsilon;
pub use par::Parallelism;

/// Deterministic random stream used by every seeded operation.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the random stream for `seed`.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}

/// Round half to even, used for every target-count computation.
pub fn round_half_even(x: f64) -> usize {
    let r = x.round_ties_even();
    if r <= 0.0 {
        0
    } else {
        r as usize
    }
}

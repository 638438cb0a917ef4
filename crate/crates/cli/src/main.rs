mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use settings::{Failure, Settings};

/// Measure and control near-duplicate structure in labelled text datasets.
///
/// Exit codes: 0 success, 2 bad input, 3 semantic error (e.g. an undefined
/// rate), 4 infeasible target.
#[derive(Parser, Debug)]
#[command(name = "hadv", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Nearness threshold: samples are near when δ < ε [default: 0.25]
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Seed for every randomized step [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for neighbor search [default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Input dataset format: jsonl or tsv [default: jsonl]
    #[arg(long, global = true)]
    format: Option<String>,
    /// Label treated as positive [default: P]
    #[arg(long, global = true)]
    positive_label: Option<String>,
    /// JSON object whose keys mirror the long flags; flags win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More logging (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Every h-adversarial and h-affable rate of a dataset
    Rates(RatesArgs),
    /// List near (query, reference) pairs as TSV
    Pairs(PairsArgs),
    /// Label a raw corpus with the keyword rule
    KdaoLabel(KdaoLabelArgs),
    /// Sample a keyword-task dataset with an exact positive rate
    KdaoBuild(KdaoBuildArgs),
    /// Generate adversarial or affable variants of every sample
    KdaoTransform(KdaoTransformArgs),
    /// Entity-marker relation samples from annotated texts
    Relgen(RelgenArgs),
    /// Build a dataset with an exact target rate
    #[command(subcommand)]
    Curate(CurateKind),
    /// Build a nested learning-curve series
    Curve(CurveArgs),
    /// Size and label counts of a dataset
    Stats(StatsArgs),
    /// Write a seeded synthetic corpus
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct RatesArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Report JSON
    #[arg(long)]
    output: Option<PathBuf>,
    /// Which side of a cross-label pair normalizes δ
    #[arg(long, value_enum)]
    adversarial_reference: Option<OrientationArg>,
    /// Which sample of a same-label pair normalizes δ
    #[arg(long, value_enum)]
    affable_reference: Option<AffableRefArg>,
}

#[derive(Args, Debug)]
struct PairsArgs {
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Defaults to the query file (self-join, identical ids excluded)
    #[arg(long)]
    refs: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    orientation: Option<OrientationArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
enum OrientationArg {
    Reference,
    Query,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
enum AffableRefArg {
    Earlier,
    Later,
}

#[derive(Args, Debug, Default)]
struct KeywordArgs {
    /// Comma-separated trigger keywords
    #[arg(long, value_delimiter = ',')]
    trigger_keywords: Option<Vec<String>>,
    /// Comma-separated entity keywords
    #[arg(long, value_delimiter = ',')]
    entity_keywords: Option<Vec<String>>,
    #[arg(long)]
    min_words: Option<usize>,
    #[arg(long)]
    max_words: Option<usize>,
    /// Two distinct triggers and one entity instead of one trigger and two entities
    #[arg(long)]
    body_variant: bool,
}

#[derive(Args, Debug)]
struct KdaoLabelArgs {
    /// Raw corpus: JSONL {"id","text"} or one document per line
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    keywords: KeywordArgs,
}

#[derive(Args, Debug)]
struct KdaoBuildArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    pos_rate: Option<f64>,
    #[command(flatten)]
    keywords: KeywordArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
enum TransformArg {
    /// Flip the keyword label with minimal edits
    Adversarial,
    /// Keep the label, duplicate three words
    Affable,
}

#[derive(Args, Debug)]
struct KdaoTransformArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<TransformArg>,
    #[command(flatten)]
    keywords: KeywordArgs,
}

#[derive(Args, Debug)]
struct RelgenArgs {
    /// JSONL {"id","text","entities","positive_pairs"}
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Emit each positive pair plus one marker-shuffled negative instead of all pairs
    #[arg(long)]
    shuffle: bool,
}

#[derive(Subcommand, Debug)]
enum CurateKind {
    /// Fixed h-adversarial rate: positives paired with generated negatives
    Adversarial(CurateArgs),
    /// Fixed h-affable rate for one class
    Affable(CurateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ClassArg {
    Positive,
    Negative,
}

#[derive(Args, Debug)]
struct CurateArgs {
    /// Labelled pool to draw from
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    pos_rate: Option<f64>,
    /// Target rate (h-adversarial P->N, or h-affable of --class)
    #[arg(long)]
    target: Option<f64>,
    /// Class whose h-affable rate is targeted [default: positive]
    #[arg(long, value_enum)]
    class: Option<ClassArg>,
    /// Also write the bucket plan here before building
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Stop after writing the plan
    #[arg(long)]
    plan_only: bool,
    /// Skip the check that random fill samples are far from everything kept
    #[arg(long)]
    no_far_check: bool,
    /// Only one affable copy per source (targets above 0.5 become infeasible)
    #[arg(long)]
    pairs_only: bool,
    #[command(flatten)]
    keywords: KeywordArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
enum CurveModeArg {
    Random,
    Affable,
    AdversarialMix,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory receiving size-<T>.jsonl and size-<T>.meta.json
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<CurveModeArg>,
    /// Comma-separated, strictly increasing
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    pos_rate: Option<f64>,
    /// h-adversarial target for adversarial-mix [default: 0.1]
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    no_far_check: bool,
    #[command(flatten)]
    keywords: KeywordArgs,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Stats JSON; standard output when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SynthKind {
    /// Labelled keyword-task pool
    Pool,
    /// Unlabelled raw corpus
    Raw,
    /// Corpus with planted near-duplicate pairs
    Planted,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: Option<SynthKind>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Positives for pool/raw
    #[arg(long)]
    positives: Option<usize>,
    /// Negatives for pool/raw
    #[arg(long)]
    negatives: Option<usize>,
    /// Documents for planted
    #[arg(long)]
    docs: Option<usize>,
    /// Planted copies as a fraction of all documents
    #[arg(long)]
    duplicate_fraction: Option<f64>,
    #[arg(long)]
    vocab_size: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

/// Resolves global options against the config file.
pub(crate) struct Global {
    pub settings: Settings,
    pub epsilon: hadv_core::Epsilon,
    pub seed: u64,
    pub format: hadv_core::corpus::DatasetFormat,
    pub positive_label: String,
}

impl Global {
    fn resolve(args: &GlobalArgs) -> Result<Self, Failure> {
        let settings = Settings::load(args.config.as_deref())?;
        let epsilon = hadv_core::Epsilon::new(settings.get("epsilon", args.epsilon, 0.25)?)?;
        let seed = settings.get("seed", args.seed, 0)?;
        let format: String = settings.get("format", args.format.clone(), "jsonl".to_owned())?;
        let format = format.parse().map_err(|e: String| Failure::input(anyhow::anyhow!(e)))?;
        let positive_label = settings.get("positive-label", args.positive_label.clone(), "P".to_owned())?;
        let threads: Option<usize> = settings.opt("threads", args.threads)?;
        configure_threads(threads)?;
        Ok(Global {
            settings,
            epsilon,
            seed,
            format,
            positive_label,
        })
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::input(anyhow::anyhow!("cannot start {n} worker threads: {e}")))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) -> Result<(), Failure> {
    if threads.is_some_and(|n| n > 1) {
        log::warn!("built without the parallel feature; --threads is ignored");
    }
    Ok(())
}

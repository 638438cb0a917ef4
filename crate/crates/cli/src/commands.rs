use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use serde::Serialize;
use serde_json::json;

use hadv_core::corpus::{dataset_stats, load_dataset, write_dataset, DatasetFormat, POSITIVE_LABEL};
use hadv_core::curation::{
    self, build_learning_curve, AffableLayout, CurationMode, CurationOutput, CurationSpec, KdaoAdversarial,
    KdaoAffable,
};
use hadv_core::editdist::{find_neighbors_with, wer, write_pairs_tsv, Orientation, SearchOptions};
use hadv_core::kdao::{
    build_kdao_dataset, kdao_label, label_corpus, load_raw_corpus, make_adversarial_negative,
    make_adversarial_positive, make_affable, KdaoConfig, KdaoLabel, RawDoc,
};
use hadv_core::rates::{full_report, AffableReference, RateOptions};
use hadv_core::relgen::{enumerate_all, enumerate_pair_samples, load_annotated, shuffle_marker_adversarial, RelgenError};
use hadv_core::synth::{kdao_pool, planted_corpus, PlantedSpec, PoolSpec};
use hadv_core::{seeded_rng, Dataset, Parallelism, Sample};

use crate::settings::{CmdResult, Failure};
use crate::{
    AffableRefArg, ClassArg, Cli, Command, CurateArgs, CurateKind, CurveArgs, CurveModeArg, Global, KdaoBuildArgs,
    KdaoLabelArgs, KdaoTransformArgs, KeywordArgs, OrientationArg, PairsArgs, RatesArgs, RelgenArgs, StatsArgs,
    SynthArgs, SynthKind, TransformArg,
};

pub fn run(cli: Cli) -> CmdResult {
    let g = Global::resolve(&cli.global)?;
    match cli.command {
        Command::Rates(a) => rates(&g, a),
        Command::Pairs(a) => pairs(&g, a),
        Command::KdaoLabel(a) => kdao_label_cmd(&g, a),
        Command::KdaoBuild(a) => kdao_build(&g, a),
        Command::KdaoTransform(a) => kdao_transform(&g, a),
        Command::Relgen(a) => relgen(&g, a),
        Command::Curate(CurateKind::Adversarial(a)) => curate(&g, a, false),
        Command::Curate(CurateKind::Affable(a)) => curate(&g, a, true),
        Command::Curve(a) => curve(&g, a),
        Command::Stats(a) => stats(&g, a),
        Command::Synth(a) => synth(&g, a),
    }
}

/// `d.jsonl` → `d.meta.json`.
fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::semantic)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::input(anyhow!("cannot write {}: {e}", path.display())))
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> CmdResult {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(Failure::semantic)?;
    writeln!(out)?;
    Ok(())
}

fn write_samples(path: &Path, samples: Vec<Sample>, positive: &str) -> CmdResult<Dataset> {
    let ds = Dataset::new(samples, positive)?;
    write_dataset(&ds, path, DatasetFormat::Jsonl)?;
    Ok(ds)
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn keyword_config(g: &Global, k: &KeywordArgs) -> CmdResult<KdaoConfig> {
    let s = &g.settings;
    let d = KdaoConfig::default();
    let cfg = KdaoConfig {
        trigger_keywords: s.get("trigger-keywords", k.trigger_keywords.clone(), d.trigger_keywords)?,
        entity_keywords: s.get("entity-keywords", k.entity_keywords.clone(), d.entity_keywords)?,
        min_words: s.get("min-words", k.min_words, d.min_words)?,
        max_words: s.get("max-words", k.max_words, d.max_words)?,
        body_variant: s.switch("body-variant", k.body_variant)?,
    };
    Ok(cfg.validated()?)
}

fn orientation(o: OrientationArg) -> Orientation {
    match o {
        OrientationArg::Reference => Orientation::Reference,
        OrientationArg::Query => Orientation::Query,
    }
}

fn rates(g: &Global, a: RatesArgs) -> CmdResult {
    let s = &g.settings;
    let input = s.path("input", a.input)?;
    let ds = load_dataset(&input, g.format, &g.positive_label)?;
    if ds.labels().len() < 2 {
        return Err(Failure::semantic(anyhow!(
            "h-adversarial rates undefined: {} holds a single class",
            input.display()
        )));
    }
    let adv = s.get("adversarial-reference", a.adversarial_reference, OrientationArg::Reference)?;
    let aff = match s.get("affable-reference", a.affable_reference, AffableRefArg::Earlier)? {
        AffableRefArg::Earlier => AffableReference::Earlier,
        AffableRefArg::Later => AffableReference::Later,
    };
    let opts = RateOptions {
        adversarial_reference: orientation(adv),
        affable_reference: aff,
        ..RateOptions::new(g.epsilon)
    };
    let report = full_report(&ds, &opts)?;
    for line in report.summary_lines() {
        eprintln!("{line}");
    }
    match s.opt("output", a.output)? {
        Some(out) => write_json(&out, &report),
        None => print_json(&report),
    }
}

fn pairs(g: &Global, a: PairsArgs) -> CmdResult {
    let s = &g.settings;
    let qpath = s.path("queries", a.queries)?;
    let queries = load_dataset(&qpath, g.format, &g.positive_label)?;
    let refs = match s.opt("refs", a.refs)? {
        Some(r) => load_dataset(&r, g.format, &g.positive_label)?,
        None => queries.clone(),
    };
    let output = s.path("output", a.output)?;
    let opts = SearchOptions {
        orientation: orientation(s.get("orientation", a.orientation, OrientationArg::Reference)?),
        collect_pairs: true,
        ..SearchOptions::new(g.epsilon)
    };
    let found = find_neighbors_with(queries.samples(), refs.samples(), &opts);
    let flagged = found.count();
    let pairs = found.pairs.unwrap_or_default();
    let mut out = BufWriter::new(File::create(&output)?);
    write_pairs_tsv(&pairs, &mut out)?;
    out.flush()?;
    eprintln!(
        "{} of {} queries have a near reference; {} pairs",
        flagged,
        queries.len(),
        pairs.len()
    );
    Ok(())
}

fn kdao_label_cmd(g: &Global, a: KdaoLabelArgs) -> CmdResult {
    let s = &g.settings;
    let cfg = keyword_config(g, &a.keywords)?;
    let docs = load_raw_corpus(s.path("input", a.input)?)?;
    let output = s.path("output", a.output)?;
    let ds = write_samples(&output, label_corpus(&docs, &cfg, Parallelism::default()), POSITIVE_LABEL)?;
    let st = dataset_stats(&ds);
    eprintln!("labelled {} documents, {} positive", st.size, ds.class_size(POSITIVE_LABEL));
    Ok(())
}

fn kdao_build(g: &Global, a: KdaoBuildArgs) -> CmdResult {
    let s = &g.settings;
    let cfg = keyword_config(g, &a.keywords)?;
    let input = s.path("input", a.input)?;
    let output = s.path("output", a.output)?;
    let size: usize = s.req("size", a.size)?;
    let pos_rate: f64 = s.get("pos-rate", a.pos_rate, 0.25)?;
    let docs = load_raw_corpus(&input)?;
    let mut rng = seeded_rng(g.seed);
    let ds = build_kdao_dataset(&docs, size, pos_rate, &cfg, &mut rng, Parallelism::default())?;
    write_dataset(&ds, &output, DatasetFormat::Jsonl)?;
    let st = dataset_stats(&ds);
    write_json(
        &sidecar(&output),
        &json!({
            "command": "kdao-build",
            "input": display(&input),
            "seed": g.seed,
            "size": size,
            "pos_rate": pos_rate,
            "keywords": cfg,
            "stats": st,
        }),
    )?;
    eprintln!("{} samples, {} positive", st.size, ds.class_size(POSITIVE_LABEL));
    Ok(())
}

fn kdao_transform(g: &Global, a: KdaoTransformArgs) -> CmdResult {
    let s = &g.settings;
    let cfg = keyword_config(g, &a.keywords)?;
    let input = s.path("input", a.input)?;
    let output = s.path("output", a.output)?;
    let kind: TransformArg = s.req("kind", a.kind)?;
    let ds = load_dataset(&input, g.format, &g.positive_label)?;
    let mut rng = seeded_rng(g.seed);
    let mut generated = Vec::new();
    let mut skipped = Vec::new();
    let mut beyond = 0usize;
    for src in ds.samples() {
        let out = match kind {
            TransformArg::Affable => make_affable(src, &mut rng),
            TransformArg::Adversarial => match kdao_label(&src.text, &cfg) {
                KdaoLabel::Positive => make_adversarial_negative(src, &mut rng, &cfg),
                KdaoLabel::Negative => make_adversarial_positive(src, &mut rng, &cfg),
            },
        };
        match out {
            Ok(t) => {
                let near = wer(&src.tokens(), &t.tokens())
                    .map(|d| g.epsilon.admits(d.edits, d.ref_words))
                    .unwrap_or(false);
                if !near {
                    beyond += 1;
                }
                generated.push(t);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", src.id);
                skipped.push(json!({"id": src.id, "reason": e.to_string()}));
            }
        }
    }
    let n = generated.len();
    write_samples(&output, generated, &g.positive_label)?;
    write_json(
        &sidecar(&output),
        &json!({
            "command": "kdao-transform",
            "input": display(&input),
            "seed": g.seed,
            "epsilon": g.epsilon.value(),
            "kind": format!("{kind:?}").to_lowercase(),
            "keywords": cfg,
            "generated": n,
            "beyond_threshold": beyond,
            "skipped": skipped,
        }),
    )?;
    eprintln!("generated {n}, skipped {}, {beyond} not within ε of their source", skipped.len());
    Ok(())
}

fn relgen(g: &Global, a: RelgenArgs) -> CmdResult {
    let s = &g.settings;
    let input = s.path("input", a.input)?;
    let output = s.path("output", a.output)?;
    let shuffle = s.switch("shuffle", a.shuffle)?;
    let texts = load_annotated(&input)?;
    let samples = if shuffle {
        let mut rng = seeded_rng(g.seed);
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for t in &texts {
            let rows = enumerate_pair_samples(t)?;
            out.extend(rows.into_iter().filter(|r| r.label == POSITIVE_LABEL));
            for (x, y) in &t.positive_pairs {
                match shuffle_marker_adversarial(t, (x, y), &mut rng) {
                    // Two positive pairs can shuffle onto the same negative row.
                    Ok(adv) => {
                        if seen.insert(adv.id.clone()) {
                            out.push(adv);
                        }
                    }
                    Err(e @ RelgenError::NoAlternativePair { .. }) => log::warn!("{e}"),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        out
    } else {
        enumerate_all(&texts, Parallelism::default())?
    };
    let ds = write_samples(&output, samples, POSITIVE_LABEL)?;
    write_json(
        &sidecar(&output),
        &json!({
            "command": "relgen",
            "input": display(&input),
            "seed": g.seed,
            "shuffle": shuffle,
            "texts": texts.len(),
            "stats": dataset_stats(&ds),
        }),
    )?;
    eprintln!("{} texts -> {} samples", texts.len(), ds.len());
    Ok(())
}

fn summarize(out: &CurationOutput) {
    for c in &out.verification.checks {
        eprintln!(
            "size {} {}: {}/{} (expected {}) {}",
            out.plan.size,
            c.rate,
            c.achieved_n,
            c.denominator,
            c.expected_n,
            if c.ok { "ok" } else { "MISMATCH" }
        );
    }
}

fn curate(g: &Global, a: CurateArgs, affable: bool) -> CmdResult {
    let s = &g.settings;
    let input = s.path("input", a.input)?;
    let pool = load_dataset(&input, g.format, &g.positive_label)?;
    let negative = pool
        .negative_label()
        .ok_or_else(|| Failure::input(anyhow!("the pool must hold exactly two labels")))?
        .to_owned();
    let mode = if affable {
        match s.get("class", a.class, ClassArg::Positive)? {
            ClassArg::Positive => CurationMode::AffablePositive,
            ClassArg::Negative => CurationMode::AffableNegative,
        }
    } else {
        CurationMode::Adversarial
    };
    let spec = CurationSpec {
        mode,
        size: s.req("size", a.size)?,
        pos_rate: s.get("pos-rate", a.pos_rate, 0.25)?,
        target_rate: s.req("target", a.target)?,
        epsilon: g.epsilon.value(),
        seed: g.seed,
        far_check: !s.switch("no-far-check", a.no_far_check)?,
        affable_layout: if s.switch("pairs-only", a.pairs_only)? {
            AffableLayout::PairsOnly
        } else {
            AffableLayout::Auto
        },
        parallelism: Parallelism::default(),
    };
    let plan = curation::plan(&spec, pool.positive_label(), &negative)?;
    eprintln!(
        "plan: {} positives, {} negatives, target count {} (rate {:.6})",
        plan.positives, plan.negatives, plan.target_count, plan.achieved_rate
    );
    if let Some(p) = s.opt::<PathBuf>("plan", a.plan)? {
        write_json(&p, &plan)?;
    } else if s.switch("plan-only", a.plan_only)? {
        print_json(&plan)?;
    }
    if s.switch("plan-only", a.plan_only)? {
        return Ok(());
    }
    let output = s.path("output", a.output)?;
    let cfg = keyword_config(g, &a.keywords)?;
    let out = curation::build(&pool, &spec, &KdaoAdversarial(cfg.clone()), &KdaoAffable)?;
    write_dataset(&out.dataset, &output, DatasetFormat::Jsonl)?;
    write_json(
        &sidecar(&output),
        &json!({
            "command": "curate",
            "input": display(&input),
            "spec": spec,
            "keywords": cfg,
            "plan": out.plan,
            "verification": out.verification,
        }),
    )?;
    summarize(&out);
    Ok(())
}

fn curve(g: &Global, a: CurveArgs) -> CmdResult {
    let s = &g.settings;
    let input = s.path("input", a.input)?;
    let dir = s.path("output-dir", a.output_dir)?;
    let sizes: Vec<usize> = s.req("sizes", a.sizes)?;
    let mode = match s.req("mode", a.mode)? {
        CurveModeArg::Random => CurationMode::CurveRandom,
        CurveModeArg::Affable => CurationMode::CurveAffable,
        CurveModeArg::AdversarialMix => CurationMode::CurveAdversarialMix,
    };
    let pool = load_dataset(&input, g.format, &g.positive_label)?;
    let cfg = keyword_config(g, &a.keywords)?;
    let spec = CurationSpec {
        mode,
        size: sizes.last().copied().unwrap_or(0),
        pos_rate: s.get("pos-rate", a.pos_rate, 0.25)?,
        target_rate: s.get("target", a.target, 0.1)?,
        epsilon: g.epsilon.value(),
        seed: g.seed,
        far_check: !s.switch("no-far-check", a.no_far_check)?,
        affable_layout: AffableLayout::Auto,
        parallelism: Parallelism::default(),
    };
    let outs = build_learning_curve(&pool, &sizes, &spec, &KdaoAdversarial(cfg.clone()), &KdaoAffable)?;
    fs::create_dir_all(&dir)?;
    for out in &outs {
        let path = dir.join(format!("size-{}.jsonl", out.plan.size));
        write_dataset(&out.dataset, &path, DatasetFormat::Jsonl)?;
        write_json(
            &sidecar(&path),
            &json!({
                "command": "curve",
                "input": display(&input),
                "spec": spec,
                "sizes": sizes,
                "keywords": cfg,
                "plan": out.plan,
                "verification": out.verification,
            }),
        )?;
        summarize(out);
    }
    Ok(())
}

fn stats(g: &Global, a: StatsArgs) -> CmdResult {
    let s = &g.settings;
    let ds = load_dataset(s.path("input", a.input)?, g.format, &g.positive_label)?;
    let st = dataset_stats(&ds);
    match st.positive_rate {
        Some(r) => eprintln!("{} samples, positive rate {:.1}%", st.size, r * 100.0),
        None => eprintln!("empty dataset, positive rate undefined"),
    }
    match s.opt::<PathBuf>("output", a.output)? {
        Some(out) => write_json(&out, &st),
        None => print_json(&st),
    }
}

fn synth(g: &Global, a: SynthArgs) -> CmdResult {
    let s = &g.settings;
    let kind: SynthKind = s.req("kind", a.kind)?;
    let output = s.path("output", a.output)?;
    let mut rng = seeded_rng(g.seed);
    match kind {
        SynthKind::Pool | SynthKind::Raw => {
            let d = PoolSpec::default();
            let spec = PoolSpec {
                positives: s.get("positives", a.positives, d.positives)?,
                negatives: s.get("negatives", a.negatives, d.negatives)?,
                vocab_size: s.get("vocab-size", a.vocab_size, d.vocab_size)?,
                ..d
            };
            let pool = kdao_pool(&spec, &mut rng);
            if matches!(kind, SynthKind::Pool) {
                write_dataset(&pool, &output, DatasetFormat::Jsonl)?;
            } else {
                let mut out = BufWriter::new(File::create(&output)?);
                for smp in pool.samples() {
                    let doc = RawDoc {
                        id: smp.id.clone(),
                        text: smp.text.clone(),
                    };
                    serde_json::to_writer(&mut out, &doc).map_err(Failure::semantic)?;
                    out.write_all(b"\n")?;
                }
                out.flush()?;
            }
            eprintln!("wrote {} documents", pool.len());
        }
        SynthKind::Planted => {
            let d = PlantedSpec::default();
            let spec = PlantedSpec {
                docs: s.get("docs", a.docs, d.docs)?,
                duplicate_fraction: s.get("duplicate-fraction", a.duplicate_fraction, d.duplicate_fraction)?,
                vocab_size: s.get("vocab-size", a.vocab_size, d.vocab_size)?,
                epsilon: g.epsilon,
                ..d
            };
            if !(0.0..=0.5).contains(&spec.duplicate_fraction) {
                return Err(Failure::input(anyhow!("--duplicate-fraction must lie in [0, 0.5]")));
            }
            let c = planted_corpus(&spec, &mut rng);
            write_dataset(&c.dataset, &output, DatasetFormat::Jsonl)?;
            let adversarial: serde_json::Map<String, serde_json::Value> = c
                .adversarial
                .iter()
                .map(|((l, lp), n)| (format!("{l}->{lp}"), json!(n)))
                .collect();
            write_json(
                &sidecar(&output),
                &json!({
                    "command": "synth",
                    "kind": "planted",
                    "seed": g.seed,
                    "docs": spec.docs,
                    "expected": {"h_adversarial": adversarial, "h_affable": c.affable},
                }),
            )?;
            eprintln!("wrote {} documents", c.dataset.len());
        }
    }
    Ok(())
}

//! Samples, datasets, whitespace tokenization and JSONL/TSV dataset I/O.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("sample with empty id")]
    EmptyId,
    #[error("sample {id:?} has label {label:?}, which is not in the label alphabet")]
    UnknownLabel { id: String, label: String },
    #[error("sample {0:?} records a transform but no source_id")]
    MissingSource(String),
    #[error("writing {0} is not supported, use jsonl")]
    WriteUnsupported(DatasetFormat),
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Label used for positives by every generator in this crate.
pub const POSITIVE_LABEL: &str = "P";
/// Label used for negatives by every generator in this crate.
pub const NEGATIVE_LABEL: &str = "N";

/// How a sample was derived from its source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Adversarial,
    Affable,
    MarkerPair,
}

impl TransformKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Adversarial => "adversarial",
            TransformKind::Affable => "affable",
            TransformKind::MarkerPair => "marker-pair",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labelled text with provenance.
///
/// Keys of a JSONL record that are not part of the schema land in `extra`
/// and are written back unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub label: String,
    #[serde(default)]
    pub source_id: Option<String>,
    #[serde(default)]
    pub transform: Option<TransformKind>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        Sample {
            id: id.into(),
            text: text.into(),
            label: label.into(),
            source_id: None,
            transform: None,
            extra: Map::new(),
        }
    }

    /// A sample generated from `source` by `kind`.
    pub fn derived(
        id: impl Into<String>,
        text: impl Into<String>,
        label: impl Into<String>,
        source: &Sample,
        kind: TransformKind,
    ) -> Self {
        Sample {
            source_id: Some(source.id.clone()),
            transform: Some(kind),
            ..Sample::new(id, text, label)
        }
    }

    pub fn tokens(&self) -> WordSequence {
        tokenize(&self.text)
    }
}

/// An ordered, validated collection of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    labels: BTreeSet<String>,
    positive_label: String,
}

impl Dataset {
    /// Builds a dataset whose alphabet is the observed labels plus `positive_label`.
    pub fn new(samples: Vec<Sample>, positive_label: impl Into<String>) -> Result<Self, CorpusError> {
        let positive_label = positive_label.into();
        let mut labels: BTreeSet<String> = samples.iter().map(|s| s.label.clone()).collect();
        labels.insert(positive_label.clone());
        Self::with_labels(samples, labels, positive_label)
    }

    pub fn with_labels(
        samples: Vec<Sample>,
        mut labels: BTreeSet<String>,
        positive_label: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let positive_label = positive_label.into();
        labels.insert(positive_label.clone());
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.id.is_empty() {
                return Err(CorpusError::EmptyId);
            }
            if !seen.insert(s.id.as_str()) {
                return Err(CorpusError::DuplicateId(s.id.clone()));
            }
            if !labels.contains(&s.label) {
                return Err(CorpusError::UnknownLabel {
                    id: s.id.clone(),
                    label: s.label.clone(),
                });
            }
            if s.transform.is_some() && s.source_id.is_none() {
                return Err(CorpusError::MissingSource(s.id.clone()));
            }
        }
        Ok(Dataset {
            samples,
            labels,
            positive_label,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn labels(&self) -> &BTreeSet<String> {
        &self.labels
    }

    pub fn positive_label(&self) -> &str {
        &self.positive_label
    }

    /// The single non-positive label of a binary dataset.
    pub fn negative_label(&self) -> Option<&str> {
        let mut others = self.labels.iter().filter(|l| **l != self.positive_label);
        match (others.next(), others.next()) {
            (Some(l), None) => Some(l.as_str()),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Positions of the samples labelled `label`, in dataset order.
    pub fn class_indices(&self, label: &str) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn class_size(&self, label: &str) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    pub fn label_counts(&self) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> = self.labels.iter().map(|l| (l.clone(), 0)).collect();
        for s in &self.samples {
            *counts.entry(s.label.clone()).or_default() += 1;
        }
        counts
    }
}

/// Whitespace-delimited words of a text.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct WordSequence(Vec<String>);

impl WordSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

/// Splits on runs of Unicode whitespace. Punctuation stays attached to its word.
pub fn tokenize(text: &str) -> WordSequence {
    WordSequence(text.split_whitespace().map(str::to_owned).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    Jsonl,
    /// `id<TAB>label<TAB>text`, optionally with that header line. Ingestion only.
    Tsv,
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Jsonl => "jsonl",
            DatasetFormat::Tsv => "tsv",
        })
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(DatasetFormat::Jsonl),
            "tsv" => Ok(DatasetFormat::Tsv),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    format: DatasetFormat,
    positive_label: &str,
) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_dataset(BufReader::new(file), format, positive_label).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::io(path, source),
        other => other,
    })
}

pub fn read_dataset<R: Read>(
    reader: R,
    format: DatasetFormat,
    positive_label: &str,
) -> Result<Dataset, CorpusError> {
    let reader = BufReader::new(reader);
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::io(Path::new("<input>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = match format {
            DatasetFormat::Jsonl => serde_json::from_str::<Sample>(&line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?,
            DatasetFormat::Tsv => {
                let mut fields = line.splitn(3, '\t');
                match (fields.next(), fields.next(), fields.next()) {
                    (Some("id"), Some("label"), Some("text")) if samples.is_empty() => continue,
                    (Some(id), Some(label), Some(text)) if !label.is_empty() => Sample::new(id, text, label),
                    _ => {
                        return Err(CorpusError::Malformed {
                            line: line_no,
                            message: "expected id<TAB>label<TAB>text".into(),
                        })
                    }
                }
            }
        };
        if !seen.insert(sample.id.clone()) {
            return Err(CorpusError::DuplicateId(sample.id));
        }
        samples.push(sample);
    }
    if !samples.is_empty() && !samples.iter().any(|s| s.label == positive_label) {
        log::warn!("positive label {positive_label:?} does not occur in the input");
    }
    Dataset::new(samples, positive_label)
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>, format: DatasetFormat) -> Result<(), CorpusError> {
    let path = path.as_ref();
    if format != DatasetFormat::Jsonl {
        return Err(CorpusError::WriteUnsupported(format));
    }
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_jsonl(dataset, &mut out).map_err(|e| CorpusError::io(path, e))?;
    out.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn write_jsonl<W: Write>(dataset: &Dataset, out: &mut W) -> io::Result<()> {
    for s in dataset.samples() {
        serde_json::to_writer(&mut *out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub size: usize,
    pub per_label: BTreeMap<String, usize>,
    pub positive_label: String,
    /// `None` for an empty dataset.
    pub positive_rate: Option<f64>,
}

pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let per_label = dataset.label_counts();
    let size = dataset.len();
    let positives = per_label.get(dataset.positive_label()).copied().unwrap_or(0);
    DatasetStats {
        size,
        positive_rate: (size > 0).then(|| positives as f64 / size as f64),
        per_label,
        positive_label: dataset.positive_label().to_owned(),
    }
}

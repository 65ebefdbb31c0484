//! Corpus ingestion driven by descriptor files, the canonical JSONL pair
//! format, balanced training-set sampling, and annotation-sheet generation
//! and scoring.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::eval::{confusion_stats, ConfusionMatrix, EvalError, EvalSummary};
use crate::text::{char_len, ParaphrasePair, TaskLabel};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid descriptor {path}: {message}")]
    Descriptor { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    ParseError {
        path: String,
        line: usize,
        message: String,
    },
    #[error("field mapping cannot be satisfied: {message}")]
    MappingError { message: String },
    #[error("insufficient data for task {task}: need {need} labeled pairs, found {have}")]
    InsufficientData {
        task: String,
        need: usize,
        have: usize,
    },
    #[error(
        "insufficient data in dataset {dataset}, length bin {bin} ({lo:.0}..{hi:.0} chars): \
         need {need} pairs, found {have}; widen the length window, reduce the bin count, \
         or lower the per-task quota"
    )]
    InsufficientBin {
        dataset: String,
        bin: usize,
        lo: f64,
        hi: f64,
        need: usize,
        have: usize,
    },
    #[error("invalid sheet configuration: {0}")]
    InvalidConfig(String),
    #[error("sheet references unknown blinded id {id}")]
    UnknownSheetId { id: String },
    #[error("blinded id {id} appears more than once")]
    DuplicateSheetId { id: String },
    #[error("annotation for {id} is not a task label: {given:?}")]
    BadAnnotation { id: String, given: String },
    #[error(transparent)]
    Score(#[from] EvalError),
}

fn io_error(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Input file layout of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
    Csv,
}

/// A record field named either by JSON key / header name or by 0-based
/// column index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldRef {
    Index(usize),
    Name(String),
}

impl std::fmt::Display for FieldRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldRef::Index(i) => write!(f, "column {i}"),
            FieldRef::Name(n) => write!(f, "field {n:?}"),
        }
    }
}

/// Where each pair field comes from in a source record.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMap {
    pub text_a: FieldRef,
    pub text_b: FieldRef,
    pub task: Option<FieldRef>,
}

/// Keep only records whose `field` equals `equals` exactly.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordFilter {
    pub field: FieldRef,
    pub equals: String,
}

fn de_fixed_task<'de, D>(d: D) -> Result<Option<TaskLabel>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let raw: Option<String> = Option::deserialize(d)?;
    raw.map(|s| TaskLabel::from_str(&s).map_err(serde::de::Error::custom))
        .transpose()
}

/// A TOML document declaring how to read one corpus: its name, files,
/// format, field mapping, and optional gold-task source or record filter.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusDescriptor {
    pub version: u32,
    pub name: String,
    pub format: CorpusFormat,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub paths: Vec<String>,
    #[serde(default)]
    pub has_header: bool,
    pub fields: FieldMap,
    /// Gold task applied to every record; mutually exclusive with a
    /// per-record `fields.task` source.
    #[serde(default, deserialize_with = "de_fixed_task")]
    pub fixed_task: Option<TaskLabel>,
    #[serde(default)]
    pub filter: Option<RecordFilter>,
    /// Directory relative paths resolve against; set by `load`.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl CorpusDescriptor {
    /// Parses and validates a descriptor file. Relative input paths resolve
    /// against the descriptor's own directory.
    pub fn load(path: &Path) -> Result<CorpusDescriptor, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let mut descriptor: CorpusDescriptor =
            toml::from_str(&text).map_err(|e| CorpusError::Descriptor {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        descriptor.base_dir = path.parent().unwrap_or(Path::new("")).to_path_buf();
        descriptor.validate(&path.display().to_string())?;
        Ok(descriptor)
    }

    /// Checks the structural invariants that TOML deserialization alone
    /// cannot: exactly one gold-task source, a mapping style the format can
    /// satisfy, and at least one input file.
    pub fn validate(&self, origin: &str) -> Result<(), CorpusError> {
        let fail = |message: String| {
            Err(CorpusError::Descriptor {
                path: origin.to_string(),
                message,
            })
        };
        if self.version != 1 {
            return fail(format!("unsupported version {}, expected 1", self.version));
        }
        if self.name.is_empty() || self.name.contains(':') {
            return fail(format!(
                "name {:?} must be non-empty and contain no ':'",
                self.name
            ));
        }
        if self.path.is_none() && self.paths.is_empty() {
            return fail("no input files: set path or paths".into());
        }
        if self.fixed_task == Some(TaskLabel::Unknown) {
            return fail("fixed_task cannot be Unknown".into());
        }
        if self.fixed_task.is_some() && self.fields.task.is_some() {
            return fail("declare either fields.task or fixed_task, not both".into());
        }
        let mut refs: Vec<&FieldRef> = vec![&self.fields.text_a, &self.fields.text_b];
        refs.extend(&self.fields.task);
        refs.extend(self.filter.as_ref().map(|f| &f.field));
        for r in refs {
            match (self.format, r) {
                (CorpusFormat::Jsonl, FieldRef::Index(i)) => {
                    return fail(format!("jsonl records have no column {i}; use field names"));
                }
                (CorpusFormat::Tsv | CorpusFormat::Csv, FieldRef::Name(n))
                    if !self.has_header =>
                {
                    return fail(format!(
                        "mapping by name ({n:?}) requires has_header = true"
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Input files with relative paths resolved against `base_dir`.
    pub fn input_paths(&self) -> Vec<PathBuf> {
        self.path
            .iter()
            .chain(&self.paths)
            .map(|p| {
                let pb = PathBuf::from(p);
                if pb.is_absolute() {
                    pb
                } else {
                    self.base_dir.join(pb)
                }
            })
            .collect()
    }
}

/// Record-level accounting of one ingest run. Every record read is either
/// kept, dropped (unusable), or filtered (rejected by the record filter),
/// so `kept + dropped + filtered == read`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub read: usize,
    pub kept: usize,
    pub dropped: usize,
    pub filtered: usize,
}

/// Pairs produced by an ingest run plus its accounting.
#[derive(Debug)]
pub struct IngestOutcome {
    pub pairs: Vec<ParaphrasePair>,
    pub report: IngestReport,
}

/// One source record reduced to the fields the mapping selected.
struct Extracted {
    text_a: Option<String>,
    text_b: Option<String>,
    task: Option<String>,
    filter_value: Option<String>,
}

/// Reads every input file of `descriptor`, applies filter and mapping, and
/// returns normalized pairs with ids `<name>:<record-number>` (1-based over
/// all records read, in file order). Records that cannot produce a pair
/// (missing field, empty text after normalization, unparseable task label)
/// are dropped and counted, never silently lost.
pub fn ingest(descriptor: &CorpusDescriptor) -> Result<IngestOutcome, CorpusError> {
    let mut report = IngestReport::default();
    let mut pairs = Vec::new();
    for path in descriptor.input_paths() {
        match descriptor.format {
            CorpusFormat::Jsonl => {
                ingest_jsonl(descriptor, &path, &mut report, &mut pairs)?;
            }
            CorpusFormat::Tsv | CorpusFormat::Csv => {
                ingest_delimited(descriptor, &path, &mut report, &mut pairs)?;
            }
        }
    }
    log::info!(
        "{}: read {} records, kept {}, dropped {}, filtered {}",
        descriptor.name,
        report.read,
        report.kept,
        report.dropped,
        report.filtered
    );
    Ok(IngestOutcome { pairs, report })
}

/// Folds one extracted record into the running outcome.
fn absorb_record(
    descriptor: &CorpusDescriptor,
    extracted: Extracted,
    report: &mut IngestReport,
    pairs: &mut Vec<ParaphrasePair>,
) {
    report.read += 1;
    let record_no = report.read;
    if let Some(filter) = &descriptor.filter {
        if extracted.filter_value.as_deref() != Some(filter.equals.as_str()) {
            report.filtered += 1;
            return;
        }
    }
    let (Some(text_a), Some(text_b)) = (extracted.text_a, extracted.text_b) else {
        report.dropped += 1;
        return;
    };
    let task = match (descriptor.fixed_task, extracted.task) {
        (Some(t), _) => Some(t),
        (None, Some(raw)) => match TaskLabel::from_str(&raw) {
            Ok(t) => Some(t),
            Err(_) => {
                log::debug!("{}:{record_no}: unparseable task {raw:?}", descriptor.name);
                report.dropped += 1;
                return;
            }
        },
        (None, None) => None,
    };
    let id = format!("{}:{record_no}", descriptor.name);
    match ParaphrasePair::new(id, &text_a, &text_b, task, descriptor.name.as_str()) {
        Ok(pair) => {
            report.kept += 1;
            pairs.push(pair);
        }
        Err(_) => report.dropped += 1,
    }
}

fn json_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn ingest_jsonl(
    descriptor: &CorpusDescriptor,
    path: &Path,
    report: &mut IngestReport,
    pairs: &mut Vec<ParaphrasePair>,
) -> Result<(), CorpusError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let text_field = |obj: &serde_json::Map<String, Value>, r: &FieldRef| match r {
        FieldRef::Name(n) => obj.get(n).and_then(Value::as_str).map(str::to_string),
        FieldRef::Index(_) => None,
    };
    let any_field = |obj: &serde_json::Map<String, Value>, r: &FieldRef| match r {
        FieldRef::Name(n) => obj.get(n).and_then(json_string),
        FieldRef::Index(_) => None,
    };
    for (lineno0, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CorpusError::ParseError {
            path: path.display().to_string(),
            line: lineno0 + 1,
            message,
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err("record is not a JSON object".into()))?;
        let extracted = Extracted {
            text_a: text_field(obj, &descriptor.fields.text_a),
            text_b: text_field(obj, &descriptor.fields.text_b),
            task: descriptor
                .fields
                .task
                .as_ref()
                .and_then(|r| any_field(obj, r)),
            filter_value: descriptor
                .filter
                .as_ref()
                .and_then(|f| any_field(obj, &f.field)),
        };
        absorb_record(descriptor, extracted, report, pairs);
    }
    Ok(())
}

fn ingest_delimited(
    descriptor: &CorpusDescriptor,
    path: &Path,
    report: &mut IngestReport,
    pairs: &mut Vec<ParaphrasePair>,
) -> Result<(), CorpusError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(if descriptor.format == CorpusFormat::Tsv {
            b'\t'
        } else {
            b','
        })
        // Plain TSV carries no quoting convention; quotes are data.
        .quoting(descriptor.format == CorpusFormat::Csv)
        .flexible(true)
        .has_headers(descriptor.has_header)
        .from_reader(file);
    // Resolved per file: headers may differ between input files.
    let resolve = |r: &FieldRef, headers: Option<&csv::StringRecord>| -> Result<usize, CorpusError> {
        match r {
            FieldRef::Index(i) => Ok(*i),
            FieldRef::Name(n) => headers
                .and_then(|h| h.iter().position(|c| c.trim() == n))
                .ok_or_else(|| CorpusError::MappingError {
                    message: format!("{} has no header column {n:?}", path.display()),
                }),
        }
    };
    let headers = if descriptor.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| CorpusError::ParseError {
                    path: path.display().to_string(),
                    line: 1,
                    message: e.to_string(),
                })?
                .clone(),
        )
    } else {
        None
    };
    let col_a = resolve(&descriptor.fields.text_a, headers.as_ref())?;
    let col_b = resolve(&descriptor.fields.text_b, headers.as_ref())?;
    let col_task = descriptor
        .fields
        .task
        .as_ref()
        .map(|r| resolve(r, headers.as_ref()))
        .transpose()?;
    let col_filter = descriptor
        .filter
        .as_ref()
        .map(|f| resolve(&f.field, headers.as_ref()))
        .transpose()?;
    for (recno0, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CorpusError::ParseError {
            path: path.display().to_string(),
            line: e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(recno0 + 1),
            message: e.to_string(),
        })?;
        let cell = |col: usize| record.get(col).map(str::to_string);
        let extracted = Extracted {
            text_a: cell(col_a),
            text_b: cell(col_b),
            task: col_task.and_then(&cell),
            filter_value: col_filter.and_then(&cell),
        };
        absorb_record(descriptor, extracted, report, pairs);
    }
    Ok(())
}

/// Writes pairs in the canonical interchange format: one JSON object per
/// line with fields id, text_a, text_b, optional task, dataset.
pub fn write_pairs_jsonl(path: &Path, pairs: &[ParaphrasePair]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut out = BufWriter::new(file);
    for pair in pairs {
        serde_json::to_writer(&mut out, pair).map_err(|e| CorpusError::ParseError {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(out).map_err(|e| io_error(path, e))?;
    }
    out.flush().map_err(|e| io_error(path, e))
}

/// Reads pairs written by [`write_pairs_jsonl`], re-checking the pair
/// invariants so hand-edited files cannot smuggle in empty texts.
pub fn read_pairs_jsonl(path: &Path) -> Result<Vec<ParaphrasePair>, CorpusError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut pairs = Vec::new();
    for (lineno0, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CorpusError::ParseError {
            path: path.display().to_string(),
            line: lineno0 + 1,
            message,
        };
        let raw: ParaphrasePair =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let pair = ParaphrasePair::new(raw.id, &raw.text_a, &raw.text_b, raw.task, raw.dataset)
            .map_err(|e| parse_err(e.to_string()))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Draws `per_task` labeled pairs for each of the five tasks, split as
/// evenly as possible across that task's source datasets in dataset name
/// order, with any odd remainder going to the earlier names. When a dataset
/// cannot fill its even share, the shortfall moves to the task's other
/// datasets. Unlabeled pairs are ignored. Deterministic in `seed`.
pub fn sample_training_set(
    pairs: &[ParaphrasePair],
    per_task: usize,
    seed: u64,
) -> Result<Vec<ParaphrasePair>, CorpusError> {
    let mut grouped: BTreeMap<u8, BTreeMap<&str, Vec<&ParaphrasePair>>> = BTreeMap::new();
    for pair in pairs {
        if let Some(task) = pair.task {
            if task != TaskLabel::Unknown {
                grouped
                    .entry(task.code())
                    .or_default()
                    .entry(&pair.dataset)
                    .or_default()
                    .push(pair);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_task * TaskLabel::CLASSES.len());
    for label in TaskLabel::CLASSES {
        let insufficient = |have: usize| CorpusError::InsufficientData {
            task: label.name().to_string(),
            need: per_task,
            have,
        };
        let datasets = grouped.get(&label.code()).ok_or_else(|| insufficient(0))?;
        let total: usize = datasets.values().map(Vec::len).sum();
        if total < per_task {
            return Err(insufficient(total));
        }
        let avail: Vec<usize> = datasets.values().map(Vec::len).collect();
        let quotas = split_evenly(per_task, &avail);
        for (members, quota) in datasets.values().zip(quotas) {
            let mut chosen: Vec<&ParaphrasePair> = members.clone();
            chosen.shuffle(&mut rng);
            out.extend(chosen[..quota].iter().map(|&p| p.clone()));
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Splits `total` into one quota per bucket: an even share with the
/// remainder on the earliest buckets, then any amount a bucket cannot hold
/// reassigned to later (then earlier) buckets with spare capacity. The
/// caller guarantees capacities sum to at least `total`.
fn split_evenly(total: usize, capacity: &[usize]) -> Vec<usize> {
    let n = capacity.len();
    let base = total / n;
    let rem = total % n;
    let mut quotas: Vec<usize> = (0..n).map(|i| base + usize::from(i < rem)).collect();
    let mut deficit = 0;
    for (q, &cap) in quotas.iter_mut().zip(capacity) {
        if *q > cap {
            deficit += *q - cap;
            *q = cap;
        }
    }
    for (q, &cap) in quotas.iter_mut().zip(capacity) {
        if deficit == 0 {
            break;
        }
        let add = (cap - *q).min(deficit);
        *q += add;
        deficit -= add;
    }
    debug_assert_eq!(deficit, 0, "capacities cover the total");
    quotas
}

/// Shape of an annotation sheet: how many pairs per task, the per-text
/// character window, and the number of equal-width length bins sampled
/// uniformly within each dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetConfig {
    pub per_task: usize,
    pub min_chars: usize,
    pub max_chars: usize,
    pub bins: usize,
}

impl Default for SheetConfig {
    fn default() -> Self {
        SheetConfig {
            per_task: 100,
            min_chars: 100,
            max_chars: 180,
            bins: 8,
        }
    }
}

/// One visible row of an annotation sheet. Carries no gold information.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetRow {
    pub blinded_id: String,
    pub text_a: String,
    pub text_b: String,
}

/// One row of the hidden key, aligned with the visible sheet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRow {
    pub blinded_id: String,
    pub task: TaskLabel,
    pub dataset: String,
}

/// A blinded, shuffled annotation sheet plus its hidden key and the
/// generation record needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSheet {
    pub rows: Vec<SheetRow>,
    pub key: Vec<KeyRow>,
    pub seed: u64,
    pub config: SheetConfig,
}

impl AnnotationSheet {
    /// The visible CSV: columns blinded_id, text_a, text_b, and an empty
    /// annotation column for the human to fill.
    pub fn sheet_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["blinded_id", "text_a", "text_b", "annotation"])
            .expect("write to Vec cannot fail");
        for row in &self.rows {
            wtr.write_record([row.blinded_id.as_str(), &row.text_a, &row.text_b, ""])
                .expect("write to Vec cannot fail");
        }
        String::from_utf8(wtr.into_inner().expect("flush to Vec cannot fail"))
            .expect("csv output is UTF-8")
    }

    /// The hidden key CSV: columns blinded_id, task, dataset.
    pub fn key_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["blinded_id", "task", "dataset"])
            .expect("write to Vec cannot fail");
        for row in &self.key {
            wtr.write_record([row.blinded_id.as_str(), row.task.name(), &row.dataset])
                .expect("write to Vec cannot fail");
        }
        String::from_utf8(wtr.into_inner().expect("flush to Vec cannot fail"))
            .expect("csv output is UTF-8")
    }
}

/// Builds a blinded annotation sheet: per task, pairs are drawn evenly from
/// that task's datasets; within each dataset the length window is split
/// into `config.bins` equal-width bins over the pair's mean text length and
/// filled uniformly (±1), remainder on the shortest bins. Both texts of
/// every chosen pair lie within the window. The final order is
/// seed-shuffled and blinded ids are assigned only after shuffling.
pub fn make_annotation_sheet(
    pairs: &[ParaphrasePair],
    config: &SheetConfig,
    seed: u64,
) -> Result<AnnotationSheet, CorpusError> {
    if config.bins == 0 || config.per_task == 0 {
        return Err(CorpusError::InvalidConfig(
            "bins and per_task must be positive".into(),
        ));
    }
    if config.min_chars >= config.max_chars {
        return Err(CorpusError::InvalidConfig(format!(
            "empty length window [{}, {}]",
            config.min_chars, config.max_chars
        )));
    }
    let in_window = |text: &str| {
        let n = char_len(text);
        n >= config.min_chars && n <= config.max_chars
    };
    let mut grouped: BTreeMap<u8, BTreeMap<&str, Vec<&ParaphrasePair>>> = BTreeMap::new();
    for pair in pairs {
        if let Some(task) = pair.task {
            if task != TaskLabel::Unknown && in_window(&pair.text_a) && in_window(&pair.text_b) {
                grouped
                    .entry(task.code())
                    .or_default()
                    .entry(&pair.dataset)
                    .or_default()
                    .push(pair);
            }
        }
    }
    let width = (config.max_chars - config.min_chars) as f64 / config.bins as f64;
    let bin_of = |pair: &ParaphrasePair| {
        let mean = (char_len(&pair.text_a) + char_len(&pair.text_b)) as f64 / 2.0;
        (((mean - config.min_chars as f64) / width) as usize).min(config.bins - 1)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected: Vec<&ParaphrasePair> = Vec::new();
    for label in TaskLabel::CLASSES {
        let datasets = grouped
            .get(&label.code())
            .ok_or_else(|| CorpusError::InsufficientData {
                task: label.name().to_string(),
                need: config.per_task,
                have: 0,
            })?;
        let dataset_quotas = {
            let d = datasets.len();
            let base = config.per_task / d;
            let rem = config.per_task % d;
            (0..d).map(|i| base + usize::from(i < rem)).collect::<Vec<_>>()
        };
        for ((dataset, members), quota) in datasets.iter().zip(dataset_quotas) {
            let mut bins: Vec<Vec<&ParaphrasePair>> = vec![Vec::new(); config.bins];
            for &pair in members {
                bins[bin_of(pair)].push(pair);
            }
            let per_bin_base = quota / config.bins;
            let per_bin_rem = quota % config.bins;
            for (b, bin_members) in bins.iter_mut().enumerate() {
                let need = per_bin_base + usize::from(b < per_bin_rem);
                if bin_members.len() < need {
                    return Err(CorpusError::InsufficientBin {
                        dataset: dataset.to_string(),
                        bin: b,
                        lo: config.min_chars as f64 + b as f64 * width,
                        hi: config.min_chars as f64 + (b + 1) as f64 * width,
                        need,
                        have: bin_members.len(),
                    });
                }
                bin_members.shuffle(&mut rng);
                selected.extend(&bin_members[..need]);
            }
        }
    }
    selected.shuffle(&mut rng);
    let id_width = selected.len().to_string().len().max(3);
    let mut rows = Vec::with_capacity(selected.len());
    let mut key = Vec::with_capacity(selected.len());
    for (i, pair) in selected.iter().enumerate() {
        let blinded_id = format!("p{:0id_width$}", i + 1);
        rows.push(SheetRow {
            blinded_id: blinded_id.clone(),
            text_a: pair.text_a.clone(),
            text_b: pair.text_b.clone(),
        });
        key.push(KeyRow {
            blinded_id,
            task: pair.task.expect("selected pairs are labeled"),
            dataset: pair.dataset.clone(),
        });
    }
    Ok(AnnotationSheet {
        rows,
        key,
        seed,
        config: *config,
    })
}

/// A sheet row as returned by the annotator: blinded id plus their answer,
/// `None` when the annotation cell was left empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilledRow {
    pub blinded_id: String,
    pub annotation: Option<TaskLabel>,
}

/// Parses a filled annotation sheet CSV. Requires blinded_id and annotation
/// columns; any other columns (the visible texts) are ignored. Empty
/// annotation cells become `None`; non-label answers are an error naming
/// the row.
pub fn parse_filled_sheet(csv_text: &str, source: &str) -> Result<Vec<FilledRow>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let parse_err = |line: usize, message: String| CorpusError::ParseError {
        path: source.to_string(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("blinded_id")
        .ok_or_else(|| parse_err(1, "missing blinded_id column".into()))?;
    let ann_col = col("annotation")
        .ok_or_else(|| parse_err(1, "missing annotation column".into()))?;
    let mut rows = Vec::new();
    for (recno0, record) in reader.records().enumerate() {
        let line = recno0 + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        let blinded_id = record
            .get(id_col)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| parse_err(line, "missing blinded_id".into()))?
            .to_string();
        let raw = record.get(ann_col).map(str::trim).unwrap_or("");
        let annotation = if raw.is_empty() {
            None
        } else {
            Some(
                TaskLabel::from_str(raw).map_err(|_| CorpusError::BadAnnotation {
                    id: blinded_id.clone(),
                    given: raw.to_string(),
                })?,
            )
        };
        rows.push(FilledRow {
            blinded_id,
            annotation,
        });
    }
    Ok(rows)
}

/// Parses a key CSV written by [`AnnotationSheet::key_csv`].
pub fn parse_key_csv(csv_text: &str, source: &str) -> Result<Vec<KeyRow>, CorpusError> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let parse_err = |line: usize, message: String| CorpusError::ParseError {
        path: source.to_string(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(1, format!("missing {name} column")))
    };
    let (id_col, task_col, ds_col) = (col("blinded_id")?, col("task")?, col("dataset")?);
    let mut rows = Vec::new();
    for (recno0, record) in reader.records().enumerate() {
        let line = recno0 + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        let field = |c: usize, what: &str| {
            record
                .get(c)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| parse_err(line, format!("missing {what}")))
        };
        let task = TaskLabel::from_str(field(task_col, "task")?)
            .map_err(|e| parse_err(line, e.to_string()))?;
        rows.push(KeyRow {
            blinded_id: field(id_col, "blinded_id")?.to_string(),
            task,
            dataset: field(ds_col, "dataset")?.to_string(),
        });
    }
    Ok(rows)
}

/// Outcome of scoring a filled sheet against its key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SheetScore {
    pub matrix: ConfusionMatrix,
    pub summary: EvalSummary,
    pub scored: usize,
    /// Blinded ids excluded because the annotation cell was empty or the
    /// row was absent from the filled sheet.
    pub missing: Vec<String>,
}

/// Scores a filled annotation sheet: rows pair the key's gold task (matrix
/// row) with the annotator's answer (matrix column, Unknown allowed).
/// Unanswered rows are excluded and reported; ids not present in the key
/// are fatal.
pub fn score_annotation_sheet(
    key: &[KeyRow],
    filled: &[FilledRow],
) -> Result<SheetScore, CorpusError> {
    let mut by_id: HashMap<&str, &KeyRow> = HashMap::with_capacity(key.len());
    for row in key {
        if by_id.insert(&row.blinded_id, row).is_some() {
            return Err(CorpusError::DuplicateSheetId {
                id: row.blinded_id.clone(),
            });
        }
    }
    let mut answers: HashMap<&str, Option<TaskLabel>> = HashMap::with_capacity(filled.len());
    let mut seen: HashSet<&str> = HashSet::with_capacity(filled.len());
    for row in filled {
        if !by_id.contains_key(row.blinded_id.as_str()) {
            return Err(CorpusError::UnknownSheetId {
                id: row.blinded_id.clone(),
            });
        }
        if !seen.insert(&row.blinded_id) {
            return Err(CorpusError::DuplicateSheetId {
                id: row.blinded_id.clone(),
            });
        }
        answers.insert(&row.blinded_id, row.annotation);
    }
    let mut actual = Vec::new();
    let mut predicted = Vec::new();
    let mut missing = Vec::new();
    for row in key {
        match answers.get(row.blinded_id.as_str()) {
            Some(Some(answer)) => {
                actual.push(row.task);
                predicted.push(*answer);
            }
            Some(None) | None => missing.push(row.blinded_id.clone()),
        }
    }
    let (matrix, summary) = confusion_stats(&actual, &predicted)?;
    Ok(SheetScore {
        matrix,
        summary,
        scored: actual.len(),
        missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    use TaskLabel::*;

    fn write_file(dir: &TempDir, name: &str, content: &str) -> PathBuf {
        let path = dir.path().join(name);
        fs::write(&path, content).unwrap();
        path
    }

    const JSONL_DESCRIPTOR: &str = r#"
version = 1
name = "caps"
format = "jsonl"
path = "caps.jsonl"

[fields]
text_a = "first"
text_b = "second"
"#;

    /// Inserts a top-level key line above the [fields] table, where TOML
    /// requires top-level keys to sit.
    fn with_top(line: &str) -> String {
        JSONL_DESCRIPTOR.replace("[fields]", &format!("{line}\n[fields]"))
    }

    #[test]
    fn descriptor_loads_and_resolves_paths() {
        let dir = TempDir::new().unwrap();
        write_file(&dir, "caps.jsonl", "");
        let path = write_file(
            &dir,
            "caps.toml",
            &with_top("fixed_task = \"image recaptioning\""),
        );
        let d = CorpusDescriptor::load(&path).unwrap();
        assert_eq!(d.name, "caps");
        assert_eq!(d.format, CorpusFormat::Jsonl);
        assert_eq!(d.fixed_task, Some(ImageRecaptioning));
        assert_eq!(d.input_paths(), vec![dir.path().join("caps.jsonl")]);
    }

    #[test]
    fn descriptor_rejections() {
        let dir = TempDir::new().unwrap();
        let cases: &[(&str, &str)] = &[
            ("version", &JSONL_DESCRIPTOR.replace("version = 1", "version = 2")),
            (
                "no ':'",
                &JSONL_DESCRIPTOR.replace("name = \"caps\"", "name = \"ca:ps\""),
            ),
            (
                "no input files",
                &JSONL_DESCRIPTOR.replace("path = \"caps.jsonl\"", ""),
            ),
            (
                "use field names",
                &JSONL_DESCRIPTOR.replace("text_a = \"first\"", "text_a = 0"),
            ),
            (
                "not both",
                &format!("{}task = \"kind\"\n", with_top("fixed_task = \"StyleTransfer\"")),
            ),
            (
                "requires has_header",
                &JSONL_DESCRIPTOR.replace("format = \"jsonl\"", "format = \"tsv\""),
            ),
            ("cannot be Unknown", &with_top("fixed_task = \"unknown\"")),
        ];
        for (expect, toml_text) in cases {
            let path = write_file(&dir, "d.toml", toml_text);
            let err = CorpusDescriptor::load(&path).unwrap_err();
            let msg = err.to_string();
            assert!(
                matches!(err, CorpusError::Descriptor { .. }) && msg.contains(expect),
                "case {expect:?} produced: {msg}"
            );
        }
        // Unknown TOML keys and bad label names fail at parse time.
        let path = write_file(&dir, "d.toml", &with_top("bogus = 1"));
        assert!(CorpusDescriptor::load(&path).is_err());
        let path = write_file(&dir, "d.toml", &with_top("fixed_task = \"Pastiche\""));
        assert!(CorpusDescriptor::load(&path).is_err());
    }

    #[test]
    fn ingest_jsonl_assigns_sequential_ids() {
        let dir = TempDir::new().unwrap();
        write_file(
            &dir,
            "caps.jsonl",
            concat!(
                "{\"first\": \"A  cat   sits.\", \"second\": \"A cat is sitting.\"}\n",
                "{\"first\": \"Two dogs.\", \"second\": \"A pair of dogs.\"}\n",
                "\n",
                "{\"first\": \"Sunset.\", \"second\": \"The sun sets.\"}\n",
            ),
        );
        let path = write_file(&dir, "caps.toml", JSONL_DESCRIPTOR);
        let d = CorpusDescriptor::load(&path).unwrap();
        let outcome = ingest(&d).unwrap();
        assert_eq!(outcome.report.read, 3);
        assert_eq!(outcome.report.kept, 3);
        let ids: Vec<&str> = outcome.pairs.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["caps:1", "caps:2", "caps:3"]);
        assert_eq!(outcome.pairs[0].text_a, "A cat sits.");
        assert_eq!(outcome.pairs[0].dataset, "caps");
        assert_eq!(outcome.pairs[0].task, None);
    }

    #[test]
    fn ingest_drops_unusable_records_and_counts_them() {
        let dir = TempDir::new().unwrap();
        write_file(
            &dir,
            "caps.jsonl",
            concat!(
                "{\"first\": \"ok one\", \"second\": \"ok two\"}\n",
                "{\"first\": \"   \", \"second\": \"ok\"}\n",
                "{\"first\": \"no second field\"}\n",
                "{\"first\": \"ok three\", \"second\": \"ok four\"}\n",
            ),
        );
        let path = write_file(&dir, "caps.toml", JSONL_DESCRIPTOR);
        let outcome = ingest(&CorpusDescriptor::load(&path).unwrap()).unwrap();
        assert_eq!(outcome.report.read, 4);
        assert_eq!(outcome.report.kept, 2);
        assert_eq!(outcome.report.dropped, 2);
        let ids: Vec<&str> = outcome.pairs.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["caps:1", "caps:4"], "ids follow source positions");
        let r = outcome.report;
        assert_eq!(r.kept + r.dropped + r.filtered, r.read);
    }

    #[test]
    fn ingest_jsonl_parse_error_names_line() {
        let dir = TempDir::new().unwrap();
        write_file(
            &dir,
            "caps.jsonl",
            "{\"first\": \"a\", \"second\": \"b\"}\nnot json\n",
        );
        let path = write_file(&dir, "caps.toml", JSONL_DESCRIPTOR);
        let err = ingest(&CorpusDescriptor::load(&path).unwrap()).unwrap_err();
        match err {
            CorpusError::ParseError { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    const TSV_DESCRIPTOR: &str = r#"
version = 1
name = "press"
format = "tsv"
path = "press.tsv"

[fields]
text_a = 0
text_b = 1
"#;

    #[test]
    fn ingest_tsv_short_row_dropped_and_quotes_kept() {
        let dir = TempDir::new().unwrap();
        write_file(
            &dir,
            "press.tsv",
            "He said \"hi\" there.\tA \"hi\" was said.\nonly one column\nx\ty\n",
        );
        let path = write_file(&dir, "press.toml", TSV_DESCRIPTOR);
        let outcome = ingest(&CorpusDescriptor::load(&path).unwrap()).unwrap();
        assert_eq!(outcome.report.read, 3);
        assert_eq!(outcome.report.kept, 2);
        assert_eq!(outcome.report.dropped, 1);
        assert_eq!(outcome.pairs[0].text_a, "He said \"hi\" there.");
        assert_eq!(outcome.pairs[0].id, "press:1");
        assert_eq!(outcome.pairs[1].id, "press:3");
    }

    const CSV_DESCRIPTOR: &str = r#"
version = 1
name = "entail"
format = "csv"
path = "entail.csv"
has_header = true
fixed_task = "TextualEntailment"

[fields]
text_a = "premise"
text_b = "hypothesis"

[filter]
field = "label"
equals = "entailment"
"#;

    #[test]
    fn ingest_csv_filter_keeps_only_matching_rows() {
        let dir = TempDir::new().unwrap();
        write_file(
            &dir,
            "entail.csv",
            concat!(
                "premise,hypothesis,label\n",
                "A man eats.,Someone is eating.,entailment\n",
                "A man eats.,A woman sleeps.,contradiction\n",
                "Kids play.,Children are playing.,entailment\n",
            ),
        );
        let path = write_file(&dir, "entail.toml", CSV_DESCRIPTOR);
        let outcome = ingest(&CorpusDescriptor::load(&path).unwrap()).unwrap();
        assert_eq!(outcome.report.read, 3);
        assert_eq!(outcome.report.kept, 2);
        assert_eq!(outcome.report.filtered, 1);
        assert!(outcome
            .pairs
            .iter()
            .all(|p| p.task == Some(TextualEntailment)));
        assert_eq!(outcome.pairs[1].id, "entail:3");
    }

    #[test]
    fn ingest_csv_missing_header_column_is_mapping_error() {
        let dir = TempDir::new().unwrap();
        write_file(&dir, "entail.csv", "premise,conclusion,label\na,b,entailment\n");
        let path = write_file(&dir, "entail.toml", CSV_DESCRIPTOR);
        let err = ingest(&CorpusDescriptor::load(&path).unwrap()).unwrap_err();
        assert!(matches!(err, CorpusError::MappingError { .. }), "{err}");
        assert!(err.to_string().contains("hypothesis"));
    }

    #[test]
    fn ingest_task_field_parses_folded_names() {
        let dir = TempDir::new().unwrap();
        write_file(
            &dir,
            "caps.jsonl",
            concat!(
                "{\"first\": \"a\", \"second\": \"b\", \"kind\": \"sentence compression\"}\n",
                "{\"first\": \"c\", \"second\": \"d\", \"kind\": \"no-such-task\"}\n",
            ),
        );
        let toml_text = JSONL_DESCRIPTOR.replace(
            "text_b = \"second\"\n",
            "text_b = \"second\"\ntask = \"kind\"\n",
        );
        let path = write_file(&dir, "caps.toml", &toml_text);
        let outcome = ingest(&CorpusDescriptor::load(&path).unwrap()).unwrap();
        assert_eq!(outcome.pairs.len(), 1);
        assert_eq!(outcome.pairs[0].task, Some(SentenceCompression));
        assert_eq!(outcome.report.dropped, 1, "unparseable task label drops");
    }

    #[test]
    fn jsonl_roundtrip_preserves_pairs() {
        let dir = TempDir::new().unwrap();
        let pairs = vec![
            ParaphrasePair::new("d:1", "A cat, sitting.", "A cat sits.", Some(StyleTransfer), "d")
                .unwrap(),
            ParaphrasePair::new("d:2", "Unlabeled \"text\"", "with quotes", None, "d").unwrap(),
        ];
        let path = dir.path().join("pairs.jsonl");
        write_pairs_jsonl(&path, &pairs).unwrap();
        assert_eq!(read_pairs_jsonl(&path).unwrap(), pairs);
    }

    #[test]
    fn jsonl_read_rejects_empty_texts() {
        let dir = TempDir::new().unwrap();
        let path = write_file(
            &dir,
            "bad.jsonl",
            "{\"id\": \"d:1\", \"text_a\": \"  \", \"text_b\": \"x\", \"dataset\": \"d\"}\n",
        );
        let err = read_pairs_jsonl(&path).unwrap_err();
        assert!(matches!(err, CorpusError::ParseError { line: 1, .. }), "{err}");
    }

    /// `n` labeled pairs per (task, dataset) with datasets `<task>-a` and
    /// `<task>-b`.
    fn labeled_corpus(n: usize) -> Vec<ParaphrasePair> {
        let mut pairs = Vec::new();
        for label in TaskLabel::CLASSES {
            for suffix in ["a", "b"] {
                let dataset = format!("{}-{suffix}", label.name().to_lowercase());
                for i in 0..n {
                    pairs.push(
                        ParaphrasePair::new(
                            format!("{dataset}:{}", i + 1),
                            &format!("first text {i} of {dataset}"),
                            &format!("second text {i} of {dataset}"),
                            Some(label),
                            dataset.as_str(),
                        )
                        .unwrap(),
                    );
                }
            }
        }
        pairs
    }

    fn count_by<F: Fn(&ParaphrasePair) -> String>(
        pairs: &[ParaphrasePair],
        f: F,
    ) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for p in pairs {
            *counts.entry(f(p)).or_insert(0) += 1;
        }
        counts
    }

    #[test]
    fn sample_splits_evenly_with_remainder_to_first_dataset() {
        let corpus = labeled_corpus(5);
        let sample = sample_training_set(&corpus, 2, 7).unwrap();
        assert_eq!(sample.len(), 10);
        for (_, n) in count_by(&sample, |p| p.dataset.clone()) {
            assert_eq!(n, 1, "per_task 2 over two datasets takes one from each");
        }
        let sample = sample_training_set(&corpus, 3, 7).unwrap();
        assert_eq!(sample.len(), 15);
        let by_dataset = count_by(&sample, |p| p.dataset.clone());
        for label in TaskLabel::CLASSES {
            let base = label.name().to_lowercase();
            assert_eq!(by_dataset[&format!("{base}-a")], 2, "remainder to first name");
            assert_eq!(by_dataset[&format!("{base}-b")], 1);
        }
    }

    #[test]
    fn sample_is_deterministic_and_duplicate_free() {
        let corpus = labeled_corpus(20);
        let a = sample_training_set(&corpus, 10, 3).unwrap();
        let b = sample_training_set(&corpus, 10, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_training_set(&corpus, 10, 4).unwrap();
        assert_ne!(a, c);
        let ids: HashSet<&str> = a.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids.len(), a.len());
    }

    #[test]
    fn sample_redistributes_dataset_shortfall() {
        let mut corpus = labeled_corpus(5);
        // Leave only one pair in every `<task>-a` dataset.
        corpus.retain(|p| !(p.dataset.ends_with("-a") && !p.id.ends_with(":1")));
        let sample = sample_training_set(&corpus, 4, 1).unwrap();
        let by_dataset = count_by(&sample, |p| p.dataset.clone());
        for label in TaskLabel::CLASSES {
            let base = label.name().to_lowercase();
            assert_eq!(by_dataset[&format!("{base}-a")], 1);
            assert_eq!(by_dataset[&format!("{base}-b")], 3);
        }
    }

    #[test]
    fn sample_insufficient_names_the_task() {
        let mut corpus = labeled_corpus(3);
        corpus.retain(|p| p.task != Some(StyleTransfer));
        let err = sample_training_set(&corpus, 2, 0).unwrap_err();
        match err {
            CorpusError::InsufficientData { task, need, have } => {
                assert_eq!(task, "StyleTransfer");
                assert_eq!(need, 2);
                assert_eq!(have, 0);
            }
            other => panic!("unexpected error {other}"),
        }
        let corpus = labeled_corpus(3);
        let err = sample_training_set(&corpus, 7, 0).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::InsufficientData { need: 7, have: 6, .. }
        ));
    }

    /// 10 in-window pairs per (task, dataset, bin): both texts share length
    /// 101 + 10·bin, so the pair mean falls strictly inside bin `bin` of
    /// the default window.
    fn sheet_corpus() -> Vec<ParaphrasePair> {
        let mut pairs = Vec::new();
        for label in TaskLabel::CLASSES {
            for suffix in ["a", "b"] {
                let dataset = format!("{}-{suffix}", label.name().to_lowercase());
                let mut n = 0;
                for bin in 0..8usize {
                    let len = 101 + 10 * bin;
                    for _ in 0..10 {
                        n += 1;
                        pairs.push(
                            ParaphrasePair::new(
                                format!("{dataset}:{n}"),
                                &"q".repeat(len),
                                &"w".repeat(len),
                                Some(label),
                                dataset.as_str(),
                            )
                            .unwrap(),
                        );
                    }
                }
            }
        }
        pairs
    }

    #[test]
    fn sheet_defaults_produce_five_hundred_balanced_rows() {
        let sheet = make_annotation_sheet(&sheet_corpus(), &SheetConfig::default(), 5).unwrap();
        assert_eq!(sheet.rows.len(), 500);
        assert_eq!(sheet.key.len(), 500);
        let mut per_task: BTreeMap<TaskLabel, usize> = BTreeMap::new();
        let mut per_dataset: BTreeMap<&str, usize> = BTreeMap::new();
        for row in &sheet.key {
            *per_task.entry(row.task).or_insert(0) += 1;
            *per_dataset.entry(&row.dataset).or_insert(0) += 1;
        }
        assert!(per_task.values().all(|&n| n == 100));
        assert_eq!(per_dataset.len(), 10);
        assert!(per_dataset.values().all(|&n| n == 50));
        for (row, key) in sheet.rows.iter().zip(&sheet.key) {
            assert_eq!(row.blinded_id, key.blinded_id, "key aligns with rows");
            for text in [&row.text_a, &row.text_b] {
                let n = char_len(text);
                assert!((100..=180).contains(&n), "length {n} out of window");
            }
        }
        let ids: HashSet<&str> = sheet.rows.iter().map(|r| r.blinded_id.as_str()).collect();
        assert_eq!(ids.len(), 500);
        assert_eq!(sheet.rows[0].blinded_id, "p001");
        assert_eq!(sheet.rows[499].blinded_id, "p500");
    }

    #[test]
    fn sheet_bin_marginals_are_uniform_within_one() {
        let sheet = make_annotation_sheet(&sheet_corpus(), &SheetConfig::default(), 5).unwrap();
        let mut per_bin: BTreeMap<(String, usize), usize> = BTreeMap::new();
        for (row, key) in sheet.rows.iter().zip(&sheet.key) {
            let mean = (char_len(&row.text_a) + char_len(&row.text_b)) as f64 / 2.0;
            let bin = (((mean - 100.0) / 10.0) as usize).min(7);
            *per_bin.entry((key.dataset.clone(), bin)).or_insert(0) += 1;
        }
        for ((dataset, bin), n) in per_bin {
            // 50 pairs over 8 bins: bins 0 and 1 take 7, the rest 6.
            let expect = if bin < 2 { 7 } else { 6 };
            assert_eq!(n, expect, "dataset {dataset} bin {bin}");
        }
    }

    #[test]
    fn sheet_is_seed_deterministic_with_stable_marginals() {
        let corpus = sheet_corpus();
        let a = make_annotation_sheet(&corpus, &SheetConfig::default(), 5).unwrap();
        let b = make_annotation_sheet(&corpus, &SheetConfig::default(), 5).unwrap();
        assert_eq!(a, b);
        let c = make_annotation_sheet(&corpus, &SheetConfig::default(), 6).unwrap();
        assert_ne!(a.rows, c.rows);
        let marginals = |s: &AnnotationSheet| {
            let mut m: Vec<(TaskLabel, String)> =
                s.key.iter().map(|k| (k.task, k.dataset.clone())).collect();
            m.sort();
            m
        };
        assert_eq!(marginals(&a), marginals(&c));
    }

    #[test]
    fn sheet_insufficient_bin_reports_dataset_bin_and_hint() {
        let mut corpus = sheet_corpus();
        // Starve bin 0 of one dataset below its quota of 7.
        let victim = "styletransfer-b";
        let mut removed = 0;
        corpus.retain(|p| {
            let starve =
                p.dataset == victim && char_len(&p.text_a) == 101 && removed < 4 && {
                    removed += 1;
                    true
                };
            !starve
        });
        let err = make_annotation_sheet(&corpus, &SheetConfig::default(), 5).unwrap_err();
        match &err {
            CorpusError::InsufficientBin {
                dataset,
                bin,
                need,
                have,
                ..
            } => {
                assert_eq!(dataset, victim);
                assert_eq!(*bin, 0);
                assert_eq!(*need, 7);
                assert_eq!(*have, 6);
            }
            other => panic!("unexpected error {other}"),
        }
        assert!(err.to_string().contains("widen the length window"));
    }

    #[test]
    fn sheet_visible_part_leaks_no_gold_information() {
        let sheet = make_annotation_sheet(&sheet_corpus(), &SheetConfig::default(), 5).unwrap();
        let visible = sheet.sheet_csv();
        let mut lines = visible.lines();
        assert_eq!(lines.next(), Some("blinded_id,text_a,text_b,annotation"));
        assert_eq!(visible.lines().count(), 501);
        let lower = visible.to_lowercase();
        for key in &sheet.key {
            assert!(!lower.contains(&key.dataset), "dataset name leaked");
        }
        for label in TaskLabel::CLASSES {
            assert!(!lower.contains(&label.name().to_lowercase()), "label leaked");
        }
        let key_csv = sheet.key_csv();
        assert_eq!(key_csv.lines().next(), Some("blinded_id,task,dataset"));
        let parsed = parse_key_csv(&key_csv, "key").unwrap();
        assert_eq!(parsed, sheet.key);
    }

    fn small_key() -> Vec<KeyRow> {
        let mut key = Vec::new();
        for (i, label) in TaskLabel::CLASSES.iter().enumerate() {
            for j in 0..2 {
                key.push(KeyRow {
                    blinded_id: format!("p{:03}", i * 2 + j + 1),
                    task: *label,
                    dataset: format!("ds-{j}"),
                });
            }
        }
        key
    }

    #[test]
    fn perfect_sheet_scores_diagonal() {
        let key = small_key();
        let filled: Vec<FilledRow> = key
            .iter()
            .map(|k| FilledRow {
                blinded_id: k.blinded_id.clone(),
                annotation: Some(k.task),
            })
            .collect();
        let score = score_annotation_sheet(&key, &filled).unwrap();
        assert_eq!(score.scored, 10);
        assert!(score.missing.is_empty());
        assert!(!score.matrix.has_unknown_column);
        assert_eq!(score.matrix.trace(), 10);
        assert_eq!(score.summary.micro_f1, 1.0);
    }

    #[test]
    fn unanswered_rows_are_excluded_and_reported() {
        let key = small_key();
        let mut filled: Vec<FilledRow> = key
            .iter()
            .map(|k| FilledRow {
                blinded_id: k.blinded_id.clone(),
                annotation: Some(k.task),
            })
            .collect();
        filled[3].annotation = None;
        filled.remove(7);
        filled[0].annotation = Some(Unknown);
        let score = score_annotation_sheet(&key, &filled).unwrap();
        assert_eq!(score.scored, 8);
        assert_eq!(score.missing, vec!["p004".to_string(), "p008".to_string()]);
        assert!(score.matrix.has_unknown_column);
        assert_eq!(score.matrix.rows[0][5], 1, "Unknown answer tallied");
        assert_eq!(score.matrix.trace(), 7);
    }

    #[test]
    fn sheet_scoring_rejects_unknown_and_duplicate_ids() {
        let key = small_key();
        let stray = FilledRow {
            blinded_id: "p999".into(),
            annotation: Some(ImageRecaptioning),
        };
        assert!(matches!(
            score_annotation_sheet(&key, &[stray]).unwrap_err(),
            CorpusError::UnknownSheetId { .. }
        ));
        let dup = FilledRow {
            blinded_id: "p001".into(),
            annotation: Some(ImageRecaptioning),
        };
        assert!(matches!(
            score_annotation_sheet(&key, &[dup.clone(), dup]).unwrap_err(),
            CorpusError::DuplicateSheetId { .. }
        ));
    }

    #[test]
    fn filled_sheet_parsing_handles_blanks_unknown_and_garbage() {
        let csv_text = concat!(
            "blinded_id,text_a,text_b,annotation\n",
            "p001,some text,other text,style transfer\n",
            "p002,some text,other text,\n",
            "p003,some text,other text,Unknown\n",
        );
        let rows = parse_filled_sheet(csv_text, "sheet").unwrap();
        assert_eq!(rows[0].annotation, Some(StyleTransfer));
        assert_eq!(rows[1].annotation, None);
        assert_eq!(rows[2].annotation, Some(Unknown));
        let bad = "blinded_id,annotation\np001,paraphrasey\n";
        assert!(matches!(
            parse_filled_sheet(bad, "sheet").unwrap_err(),
            CorpusError::BadAnnotation { .. }
        ));
        let headerless = "p001,StyleTransfer\n";
        assert!(parse_filled_sheet(headerless, "sheet").is_err());
    }

    #[test]
    fn generated_sheet_roundtrips_through_csv_and_scores_clean() {
        let sheet = make_annotation_sheet(&sheet_corpus(), &SheetConfig::default(), 11).unwrap();
        let parsed = parse_filled_sheet(&sheet.sheet_csv(), "sheet").unwrap();
        assert_eq!(parsed.len(), 500);
        assert!(parsed.iter().all(|r| r.annotation.is_none()));
        let filled: Vec<FilledRow> = sheet
            .key
            .iter()
            .map(|k| FilledRow {
                blinded_id: k.blinded_id.clone(),
                annotation: Some(k.task),
            })
            .collect();
        let score = score_annotation_sheet(&sheet.key, &filled).unwrap();
        assert_eq!(score.matrix.trace(), 500);
    }
}

//! Text normalization, tokenization, task labels, and the task taxonomy.
//!
//! Everything else in the crate consumes text through [`normalize`] and
//! [`tokenize`], so their exact behavior is part of the pipeline contract:
//! changing either invalidates stored feature schemas and models.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    /// A pair text was empty (or whitespace-only) after normalization.
    #[error("{which} is empty after normalization")]
    EmptyText { which: &'static str },
    /// A task name or code did not match any known label.
    #[error("unknown task label: {given}")]
    UnknownLabel { given: String },
}

/// Canonicalizes raw text: Unicode NFC, every whitespace run collapsed to a
/// single space, non-whitespace control characters stripped, ends trimmed.
///
/// The function is idempotent, and all length-based statistics downstream
/// (compression ratio, annotation length windows) count the characters of
/// this normalized form.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.nfc() {
        if ch.is_whitespace() {
            pending_space = true;
            continue;
        }
        if ch.is_control() {
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        out.push(ch);
    }
    out
}

/// Number of Unicode scalar values in a string. The unit used everywhere a
/// "character length" is reported or compared.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// A single token: its lowercased form plus the `[start, end)` character
/// offsets of the original slice in the normalized source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    pub start: usize,
    pub end: usize,
}

/// Tokens of one normalized text, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token forms as borrowed strings, for the metric functions.
    pub fn forms(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.form.as_str()).collect()
    }
}

/// True for characters that split tokens: neither alphanumeric nor
/// whitespace.
fn is_punct(ch: char) -> bool {
    !ch.is_alphanumeric() && !ch.is_whitespace()
}

/// Keep a punctuation character inside a token? Apostrophes and hyphens
/// stay when flanked by alphanumerics ("nation's", "well-known"); periods
/// and commas stay between digits ("3.5", "1,000"). Everything else splits.
fn keep_inside(ch: char, prev: Option<char>, next: Option<char>) -> bool {
    match ch {
        '\'' | '\u{2019}' | '-' => {
            prev.is_some_and(|c| c.is_alphanumeric()) && next.is_some_and(|c| c.is_alphanumeric())
        }
        '.' | ',' => {
            prev.is_some_and(|c| c.is_ascii_digit()) && next.is_some_and(|c| c.is_ascii_digit())
        }
        _ => false,
    }
}

/// Splits normalized text into lowercased tokens with character spans.
///
/// Tokens are maximal runs of non-whitespace further divided at punctuation,
/// except for the interior characters [`keep_inside`] allows. Each split-off
/// punctuation mark is its own single-character token. The span always
/// satisfies `normalized[start..end].to_lowercase() == form` when sliced by
/// character index.
pub fn tokenize(text: &str) -> TokenSequence {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut cur_start = 0usize;

    let flush = |cur: &mut String, start: usize, end: usize, tokens: &mut Vec<Token>| {
        if !cur.is_empty() {
            tokens.push(Token {
                form: cur.to_lowercase(),
                start,
                end,
            });
            cur.clear();
        }
    };

    for (i, &ch) in chars.iter().enumerate() {
        if ch.is_whitespace() {
            flush(&mut cur, cur_start, i, &mut tokens);
            continue;
        }
        if is_punct(ch) {
            let prev = if i > 0 { Some(chars[i - 1]) } else { None };
            let next = chars.get(i + 1).copied();
            let prev = prev.filter(|c| !c.is_whitespace());
            let next = next.filter(|c| !c.is_whitespace());
            if !keep_inside(ch, prev, next) {
                flush(&mut cur, cur_start, i, &mut tokens);
                tokens.push(Token {
                    form: ch.to_lowercase().to_string(),
                    start: i,
                    end: i + 1,
                });
                cur_start = i + 1;
                continue;
            }
        }
        if cur.is_empty() {
            cur_start = i;
        }
        cur.push(ch);
    }
    flush(&mut cur, cur_start, chars.len(), &mut tokens);
    TokenSequence { tokens }
}

/// The five classification targets plus an annotation-only `Unknown`.
///
/// The numeric codes are fixed: they order tie-breaking in the forest,
/// appear in model files, and index confusion-matrix rows. `Unknown` never
/// occurs as training data or as a prediction; it exists so annotation
/// sheets can record an undecided judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskLabel {
    ImageRecaptioning,
    SentenceCompression,
    SentenceSimplification,
    StyleTransfer,
    TextualEntailment,
    Unknown,
}

impl TaskLabel {
    /// The five labels a classifier may emit, in code order.
    pub const CLASSES: [TaskLabel; 5] = [
        TaskLabel::ImageRecaptioning,
        TaskLabel::SentenceCompression,
        TaskLabel::SentenceSimplification,
        TaskLabel::StyleTransfer,
        TaskLabel::TextualEntailment,
    ];

    pub fn code(self) -> u8 {
        match self {
            TaskLabel::ImageRecaptioning => 0,
            TaskLabel::SentenceCompression => 1,
            TaskLabel::SentenceSimplification => 2,
            TaskLabel::StyleTransfer => 3,
            TaskLabel::TextualEntailment => 4,
            TaskLabel::Unknown => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<TaskLabel> {
        match code {
            0 => Some(TaskLabel::ImageRecaptioning),
            1 => Some(TaskLabel::SentenceCompression),
            2 => Some(TaskLabel::SentenceSimplification),
            3 => Some(TaskLabel::StyleTransfer),
            4 => Some(TaskLabel::TextualEntailment),
            5 => Some(TaskLabel::Unknown),
            _ => None,
        }
    }

    /// Human-readable name, also the serialized form.
    pub fn name(self) -> &'static str {
        match self {
            TaskLabel::ImageRecaptioning => "ImageRecaptioning",
            TaskLabel::SentenceCompression => "SentenceCompression",
            TaskLabel::SentenceSimplification => "SentenceSimplification",
            TaskLabel::StyleTransfer => "StyleTransfer",
            TaskLabel::TextualEntailment => "TextualEntailment",
            TaskLabel::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for TaskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Name comparison key: lowercased with spaces, hyphens, and underscores
/// removed. Shared by the task-label parser and taxonomy lookup.
fn fold_name(s: &str) -> String {
    s.chars()
        .filter(|c| !matches!(c, ' ' | '-' | '_'))
        .flat_map(char::to_lowercase)
        .collect()
}

impl FromStr for TaskLabel {
    type Err = TextError;

    /// Accepts the canonical names plus forgiving variants: matching is
    /// case-insensitive and ignores spaces, hyphens, and underscores, so
    /// corpus descriptors can map values like "sentence_compression".
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded = fold_name(s);
        let label = match folded.as_str() {
            "imagerecaptioning" | "recaptioning" | "imagerecaption" => {
                TaskLabel::ImageRecaptioning
            }
            "sentencecompression" | "compression" => TaskLabel::SentenceCompression,
            "sentencesimplification" | "simplification" | "textsimplification" => {
                TaskLabel::SentenceSimplification
            }
            "styletransfer" => TaskLabel::StyleTransfer,
            "textualentailment" | "entailment" | "textualentailmentgeneration" => {
                TaskLabel::TextualEntailment
            }
            "unknown" => TaskLabel::Unknown,
            _ => {
                return Err(TextError::UnknownLabel {
                    given: s.to_string(),
                })
            }
        };
        Ok(label)
    }
}

/// One classification instance: two normalized texts with provenance and,
/// when the source corpus provides it, a gold task label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphrasePair {
    pub id: String,
    pub text_a: String,
    pub text_b: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskLabel>,
    pub dataset: String,
}

impl ParaphrasePair {
    /// Normalizes both texts and rejects pairs where either side ends up
    /// empty.
    pub fn new(
        id: impl Into<String>,
        text_a: &str,
        text_b: &str,
        task: Option<TaskLabel>,
        dataset: impl Into<String>,
    ) -> Result<Self, TextError> {
        let a = normalize(text_a);
        let b = normalize(text_b);
        if a.is_empty() {
            return Err(TextError::EmptyText { which: "text_a" });
        }
        if b.is_empty() {
            return Err(TextError::EmptyText { which: "text_b" });
        }
        Ok(ParaphrasePair {
            id: id.into(),
            text_a: a,
            text_b: b,
            task,
            dataset: dataset.into(),
        })
    }

    /// The same pair with the two texts exchanged. Feature extraction is
    /// invariant under this operation.
    pub fn swapped(&self) -> ParaphrasePair {
        ParaphrasePair {
            id: self.id.clone(),
            text_a: self.text_b.clone(),
            text_b: self.text_a.clone(),
            task: self.task,
            dataset: self.dataset.clone(),
        }
    }
}

/// Whether a task's rewrites preserve meaning exactly or only approximately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquivalenceClass {
    SemanticallyEquivalent,
    SemanticallySimilar,
}

impl fmt::Display for EquivalenceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EquivalenceClass::SemanticallyEquivalent => f.write_str("equivalent"),
            EquivalenceClass::SemanticallySimilar => f.write_str("similar"),
        }
    }
}

/// One registered paraphrasing task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub name: String,
    pub class: EquivalenceClass,
    /// Grouping for tasks that only occur inside a larger activity, e.g.
    /// the conversational tasks. Empty for stand-alone tasks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub definition: String,
    pub citations: Vec<String>,
}

/// The registry of known paraphrasing tasks, loaded from a versioned table
/// bundled into the binary.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    version: u32,
    entries: Vec<TaxonomyEntry>,
    by_name: HashMap<String, usize>,
}

const TAXONOMY_TSV: &str = include_str!("../data/taxonomy.tsv");

impl Taxonomy {
    /// The registry bundled with the crate.
    pub fn bundled() -> &'static Taxonomy {
        static TAXONOMY: OnceLock<Taxonomy> = OnceLock::new();
        TAXONOMY.get_or_init(|| {
            Taxonomy::parse(TAXONOMY_TSV).expect("bundled taxonomy table must parse")
        })
    }

    /// Parses a registry table. Lines starting with `#` are comments except
    /// for the mandatory `#version=N` line.
    pub fn parse(tsv: &str) -> Result<Taxonomy, String> {
        let mut version = None;
        let mut entries = Vec::new();
        let mut by_name = HashMap::new();
        for (lineno, line) in tsv.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            if let Some(v) = line.strip_prefix("#version=") {
                version = Some(
                    v.trim()
                        .parse::<u32>()
                        .map_err(|_| format!("line {}: bad version", lineno + 1))?,
                );
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 4 {
                return Err(format!(
                    "line {}: expected at least 4 columns, got {}",
                    lineno + 1,
                    cols.len()
                ));
            }
            let class = match cols[1] {
                "equivalent" => EquivalenceClass::SemanticallyEquivalent,
                "similar" => EquivalenceClass::SemanticallySimilar,
                other => return Err(format!("line {}: unknown class {other:?}", lineno + 1)),
            };
            let parent = if cols[2].is_empty() {
                None
            } else {
                Some(cols[2].to_string())
            };
            let citations = cols
                .get(4)
                .map(|c| {
                    c.split(';')
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect()
                })
                .unwrap_or_default();
            let entry = TaxonomyEntry {
                name: cols[0].to_string(),
                class,
                parent,
                definition: cols[3].to_string(),
                citations,
            };
            if by_name
                .insert(fold_name(&entry.name), entries.len())
                .is_some()
            {
                return Err(format!("line {}: duplicate task {:?}", lineno + 1, cols[0]));
            }
            entries.push(entry);
        }
        let version = version.ok_or("missing #version line")?;
        Ok(Taxonomy {
            version,
            entries,
            by_name,
        })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn entries(&self) -> &[TaxonomyEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lookup by task name, ignoring case, spaces, hyphens, and
    /// underscores, with the same folding the task-label parser uses.
    pub fn lookup(&self, name: &str) -> Option<&TaxonomyEntry> {
        self.by_name.get(&fold_name(name)).map(|&i| &self.entries[i])
    }

    /// All entries of one equivalence class, in registry order.
    pub fn filter(&self, class: EquivalenceClass) -> Vec<&TaxonomyEntry> {
        self.entries.iter().filter(|e| e.class == class).collect()
    }
}

//! Deterministic part-of-speech tagging and POS n-gram profiles.
//!
//! The bundled tagger is a rule cascade over a closed 12-tag set: it is not
//! meant to compete with trained taggers, only to give the classifier a
//! consistent syntactic signal that is identical across runs and platforms.
//! The tagger version participates in feature-schema hashing, so editing the
//! bundled tables must bump the version constants next to the includes.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::text::TokenSequence;

/// Coarse universal-style tagset. The integer codes are stable: they order
/// n-gram vocabularies inside feature schemas and appear in serialized
/// n-gram strings only via the names, never renumber them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum PosTag {
    Noun = 0,
    Verb = 1,
    Adj = 2,
    Adv = 3,
    Pron = 4,
    Det = 5,
    Adp = 6,
    Num = 7,
    Conj = 8,
    Prt = 9,
    Punct = 10,
    X = 11,
}

impl PosTag {
    pub const ALL: [PosTag; 12] = [
        PosTag::Noun,
        PosTag::Verb,
        PosTag::Adj,
        PosTag::Adv,
        PosTag::Pron,
        PosTag::Det,
        PosTag::Adp,
        PosTag::Num,
        PosTag::Conj,
        PosTag::Prt,
        PosTag::Punct,
        PosTag::X,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<PosTag> {
        PosTag::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Pron => "PRON",
            PosTag::Det => "DET",
            PosTag::Adp => "ADP",
            PosTag::Num => "NUM",
            PosTag::Conj => "CONJ",
            PosTag::Prt => "PRT",
            PosTag::Punct => "PUNCT",
            PosTag::X => "X",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PosTag::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown POS tag {s:?}"))
    }
}

/// A contiguous POS tag sequence of order 1 to 4.
///
/// Stored inline with padding so it is `Copy`; ordering is (order, then tag
/// codes left to right), which fixes vocabulary order in feature schemas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PosNgram {
    len: u8,
    tags: [PosTag; 4],
}

impl PosNgram {
    /// Builds an n-gram from 1 to 4 tags.
    pub fn new(tags: &[PosTag]) -> PosNgram {
        assert!(
            (1..=4).contains(&tags.len()),
            "POS n-gram order must be 1..=4, got {}",
            tags.len()
        );
        let mut arr = [PosTag::Noun; 4];
        arr[..tags.len()].copy_from_slice(tags);
        PosNgram {
            len: tags.len() as u8,
            tags: arr,
        }
    }

    pub fn order(&self) -> usize {
        self.len as usize
    }

    pub fn tags(&self) -> &[PosTag] {
        &self.tags[..self.len as usize]
    }
}

impl fmt::Display for PosNgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, tag) in self.tags().iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            f.write_str(tag.name())?;
        }
        Ok(())
    }
}

impl FromStr for PosNgram {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tags: Vec<PosTag> = s
            .split('+')
            .map(PosTag::from_str)
            .collect::<Result<_, _>>()?;
        if !(1..=4).contains(&tags.len()) {
            return Err(format!("POS n-gram order must be 1..=4: {s:?}"));
        }
        Ok(PosNgram::new(&tags))
    }
}

impl Serialize for PosNgram {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PosNgram {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Relative frequencies of contiguous POS n-grams, one map per order 1..=4.
///
/// For any order with at least one n-gram the frequencies sum to 1; orders
/// longer than the tag sequence stay empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PosNgramProfile {
    orders: [std::collections::BTreeMap<PosNgram, f64>; 4],
}

impl PosNgramProfile {
    /// The frequency map for order `n` in 1..=4.
    pub fn order(&self, n: usize) -> &std::collections::BTreeMap<PosNgram, f64> {
        &self.orders[n - 1]
    }

    /// Frequency of one n-gram, 0.0 when absent.
    pub fn frequency(&self, gram: &PosNgram) -> f64 {
        self.orders[gram.order() - 1]
            .get(gram)
            .copied()
            .unwrap_or(0.0)
    }
}

/// Counts contiguous n-grams per order and normalizes by that order's total.
pub fn pos_ngram_profile(tags: &[PosTag]) -> PosNgramProfile {
    let mut profile = PosNgramProfile::default();
    for n in 1..=4usize {
        if tags.len() < n {
            break;
        }
        let map = &mut profile.orders[n - 1];
        for window in tags.windows(n) {
            *map.entry(PosNgram::new(window)).or_insert(0.0) += 1.0;
        }
        let total = (tags.len() - n + 1) as f64;
        for v in map.values_mut() {
            *v /= total;
        }
    }
    profile
}

/// A part-of-speech tagger: one tag per token, deterministically.
pub trait Tagger: Send + Sync {
    fn tag_tokens(&self, tokens: &TokenSequence) -> Vec<PosTag>;

    /// Version string recorded in feature schemas; must change whenever the
    /// tagger's output could change.
    fn version(&self) -> &str;
}

const LEXICON_TSV: &str = include_str!("../data/pos_lexicon.tsv");
const SUFFIXES_TSV: &str = include_str!("../data/pos_suffixes.tsv");

/// Rule-cascade tagger: punctuation pattern, numeric pattern, closed-class
/// lexicon, suffix rules (first match wins, with a minimum stem length),
/// then NOUN as the default open-class guess.
pub struct CascadeTagger {
    lexicon: HashMap<String, PosTag>,
    suffixes: Vec<(String, PosTag)>,
    version: String,
}

/// A suffix rule fires only when the token has at least this many more
/// characters than the suffix, so short words cannot match ("red" vs "-ed").
const MIN_STEM_CHARS: usize = 3;

impl CascadeTagger {
    /// The tagger built from the bundled tables.
    pub fn bundled() -> &'static CascadeTagger {
        static TAGGER: OnceLock<CascadeTagger> = OnceLock::new();
        TAGGER.get_or_init(|| {
            CascadeTagger::from_tables(LEXICON_TSV, SUFFIXES_TSV)
                .expect("bundled tagger tables must parse")
        })
    }

    /// Parses lexicon and suffix tables. Each is TSV with `#` comments and a
    /// mandatory `#version=N` line; rule order in the suffix file is kept.
    pub fn from_tables(lexicon_tsv: &str, suffixes_tsv: &str) -> Result<CascadeTagger, String> {
        let (lex_version, lex_rows) = parse_table(lexicon_tsv, "lexicon")?;
        let (suf_version, suf_rows) = parse_table(suffixes_tsv, "suffixes")?;
        let mut lexicon = HashMap::with_capacity(lex_rows.len());
        for (word, tag) in lex_rows {
            if lexicon.insert(word.clone(), tag).is_some() {
                return Err(format!("lexicon: duplicate word {word:?}"));
            }
        }
        Ok(CascadeTagger {
            lexicon,
            suffixes: suf_rows,
            version: format!("cascade-1.{lex_version}.{suf_version}"),
        })
    }

    fn tag_form(&self, form: &str) -> PosTag {
        let all_punct = form
            .chars()
            .all(|c| !c.is_alphanumeric() && !c.is_whitespace());
        if all_punct && !form.is_empty() {
            return PosTag::Punct;
        }
        let numeric = form.chars().any(|c| c.is_ascii_digit())
            && form
                .chars()
                .all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | '-'));
        if numeric {
            return PosTag::Num;
        }
        if let Some(&tag) = self.lexicon.get(form) {
            return tag;
        }
        let len = form.chars().count();
        for (suffix, tag) in &self.suffixes {
            let suf_len = suffix.chars().count();
            if len >= suf_len + MIN_STEM_CHARS && form.ends_with(suffix.as_str()) {
                return *tag;
            }
        }
        PosTag::Noun
    }
}

impl Tagger for CascadeTagger {
    fn tag_tokens(&self, tokens: &TokenSequence) -> Vec<PosTag> {
        tokens.tokens.iter().map(|t| self.tag_form(&t.form)).collect()
    }

    fn version(&self) -> &str {
        &self.version
    }
}

/// Shared parser for the two bundled tables: skips comments, extracts the
/// `#version=` line, and reads `value <TAB> TAG` rows.
fn parse_table(tsv: &str, what: &str) -> Result<(u32, Vec<(String, PosTag)>), String> {
    let mut version = None;
    let mut rows = Vec::new();
    for (lineno, line) in tsv.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        if let Some(v) = line.strip_prefix("#version=") {
            version = Some(
                v.trim()
                    .parse::<u32>()
                    .map_err(|_| format!("{what} line {}: bad version", lineno + 1))?,
            );
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let (value, tag) = line
            .split_once('\t')
            .ok_or_else(|| format!("{what} line {}: expected two columns", lineno + 1))?;
        let tag: PosTag = tag
            .trim()
            .parse()
            .map_err(|e| format!("{what} line {}: {e}", lineno + 1))?;
        rows.push((value.to_string(), tag));
    }
    let version = version.ok_or_else(|| format!("{what}: missing #version line"))?;
    Ok((version, rows))
}

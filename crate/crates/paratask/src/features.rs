//! Feature vectors for pairs under a versioned, hash-identified schema.
//!
//! A vector is `[compression_ratio, rouge1_f, bleu_sym, cosine_sim]`
//! followed by two blocks over the schema's POS n-gram vocabulary: the
//! absolute difference of the two texts' relative frequencies, then their
//! mean. Both blocks are symmetric in the texts, so the whole vector is
//! invariant under swapping text_a and text_b.
//!
//! The schema hash pins every ingredient that could change a vector's
//! meaning (vocabulary, thresholds, tagger version, embedding provider);
//! models refuse inputs whose hash differs from their training hash.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::Embedding;
use crate::metrics::{MetricError, SimilarityScores};
use crate::pos::{pos_ngram_profile, PosNgram, PosNgramProfile, Tagger};
use crate::text::{tokenize, ParaphrasePair, TaskLabel};
use crate::util::{sha256_hex, ChecksumReader, ChecksumWriter, FrameError};

/// Current schema JSON layout version and feature-file format version.
pub const SCHEMA_VERSION: u32 = 1;
const FEATURE_FILE_MAGIC: &[u8; 8] = b"PTKFEAT1";
const FEATURE_FILE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("cannot build a schema from an empty corpus")]
    EmptyCorpus,
    #[error("schema mismatch: expected {expected}, got {got}")]
    SchemaMismatch { expected: String, got: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid schema file: {0}")]
    InvalidSchema(String),
    #[error("feature file version {found} unsupported (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt feature file: {0}")]
    CorruptData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<FrameError> for FeatureError {
    fn from(e: FrameError) -> Self {
        FeatureError::CorruptData(e.to_string())
    }
}

/// Everything that determines the meaning of a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub format_version: u32,
    pub scalar_names: Vec<String>,
    /// Per order 1..=4, the kept n-grams, sorted by (order, tag codes).
    pub vocabularies: [Vec<PosNgram>; 4],
    pub min_count: u32,
    pub tagger_version: String,
    pub embedder_id: String,
    /// SHA-256 over the canonical rendering of all fields above.
    pub hash: String,
}

impl FeatureSchema {
    /// Total vector width: the four scalars plus diff and mean blocks.
    pub fn width(&self) -> usize {
        4 + 2 * self.vocabularies.iter().map(Vec::len).sum::<usize>()
    }

    /// The canonical string the schema hash is computed over. Every field
    /// that affects vector semantics appears here exactly once.
    fn canonical_string(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("version:{}\n", self.format_version));
        s.push_str(&format!("scalars:{}\n", self.scalar_names.join(",")));
        s.push_str(&format!("min_count:{}\n", self.min_count));
        s.push_str(&format!("tagger:{}\n", self.tagger_version));
        s.push_str(&format!("embedder:{}\n", self.embedder_id));
        for (i, vocab) in self.vocabularies.iter().enumerate() {
            let grams: Vec<String> = vocab.iter().map(PosNgram::to_string).collect();
            s.push_str(&format!("vocab{}:{}\n", i + 1, grams.join(",")));
        }
        s
    }

    fn compute_hash(&self) -> String {
        sha256_hex(self.canonical_string().as_bytes())
    }

    /// Serializes the schema as stable, human-readable JSON.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schema serializes");
        s.push('\n');
        s
    }

    /// Parses a schema, verifying both the layout version and that the
    /// embedded hash matches the recomputed one.
    pub fn from_json(json: &str) -> Result<FeatureSchema, FeatureError> {
        let schema: FeatureSchema =
            serde_json::from_str(json).map_err(|e| FeatureError::InvalidSchema(e.to_string()))?;
        if schema.format_version != SCHEMA_VERSION {
            return Err(FeatureError::VersionMismatch {
                found: schema.format_version,
                supported: SCHEMA_VERSION,
            });
        }
        let expect = schema.compute_hash();
        if schema.hash != expect {
            return Err(FeatureError::InvalidSchema(format!(
                "stored hash {} does not match content hash {}",
                schema.hash, expect
            )));
        }
        for vocab in &schema.vocabularies {
            if vocab.windows(2).any(|w| w[0] >= w[1]) {
                return Err(FeatureError::InvalidSchema(
                    "vocabulary not strictly sorted".into(),
                ));
            }
        }
        Ok(schema)
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FeatureSchema, FeatureError> {
        let json = std::fs::read_to_string(path)?;
        FeatureSchema::from_json(&json)
    }
}

/// Builds a schema from training pairs: tags every text, counts in how many
/// pairs each POS n-gram occurs (a pair counts once per n-gram no matter how
/// often it repeats), keeps those with document frequency ≥ `min_count`, and
/// sorts each order's vocabulary by tag codes.
pub fn build_schema(
    pairs: &[ParaphrasePair],
    min_count: u32,
    tagger: &dyn Tagger,
    embedder_id: &str,
) -> Result<FeatureSchema, FeatureError> {
    if pairs.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut doc_freq: HashMap<PosNgram, u32> = HashMap::new();
    for pair in pairs {
        let pa = profile_text(&pair.text_a, tagger);
        let pb = profile_text(&pair.text_b, tagger);
        let mut seen: Vec<PosNgram> = Vec::new();
        for n in 1..=4 {
            seen.extend(pa.order(n).keys());
            seen.extend(pb.order(n).keys());
        }
        seen.sort_unstable();
        seen.dedup();
        for gram in seen {
            *doc_freq.entry(gram).or_insert(0) += 1;
        }
    }
    let mut vocabularies: [Vec<PosNgram>; 4] = Default::default();
    for (&gram, &df) in &doc_freq {
        if df >= min_count {
            vocabularies[gram.order() - 1].push(gram);
        }
    }
    for vocab in &mut vocabularies {
        vocab.sort_unstable();
    }
    let mut schema = FeatureSchema {
        format_version: SCHEMA_VERSION,
        scalar_names: SimilarityScores::NAMES.iter().map(|s| s.to_string()).collect(),
        vocabularies,
        min_count,
        tagger_version: tagger.version().to_string(),
        embedder_id: embedder_id.to_string(),
        hash: String::new(),
    };
    schema.hash = schema.compute_hash();
    Ok(schema)
}

fn profile_text(text: &str, tagger: &dyn Tagger) -> PosNgramProfile {
    let tokens = tokenize(text);
    let tags = tagger.tag_tokens(&tokens);
    pos_ngram_profile(&tags)
}

/// A pair's feature values plus the hash of the schema that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema_hash: String,
}

/// Computes the feature vector of one pair under a schema.
///
/// The embeddings must come from the schema's provider, and the tagger must
/// match the schema's tagger version; vocabulary n-grams absent from a text
/// contribute frequency 0, and out-of-vocabulary n-grams are dropped without
/// renormalizing the remaining frequencies.
pub fn vectorize_pair(
    schema: &FeatureSchema,
    pair: &ParaphrasePair,
    emb_a: &Embedding,
    emb_b: &Embedding,
    tagger: &dyn Tagger,
) -> Result<FeatureVector, FeatureError> {
    for emb in [emb_a, emb_b] {
        if emb.provider != schema.embedder_id {
            return Err(FeatureError::SchemaMismatch {
                expected: schema.embedder_id.clone(),
                got: emb.provider.clone(),
            });
        }
    }
    if tagger.version() != schema.tagger_version {
        return Err(FeatureError::SchemaMismatch {
            expected: schema.tagger_version.clone(),
            got: tagger.version().to_string(),
        });
    }
    let scores = SimilarityScores::for_pair(pair, &emb_a.values, &emb_b.values)?;
    let pa = profile_text(&pair.text_a, tagger);
    let pb = profile_text(&pair.text_b, tagger);

    let mut values = Vec::with_capacity(schema.width());
    values.extend([
        scores.compression_ratio,
        scores.rouge1_f,
        scores.bleu_sym,
        scores.cosine_sim,
    ]);
    for vocab in &schema.vocabularies {
        for gram in vocab {
            values.push((pa.frequency(gram) - pb.frequency(gram)).abs());
        }
    }
    for vocab in &schema.vocabularies {
        for gram in vocab {
            values.push((pa.frequency(gram) + pb.frequency(gram)) / 2.0);
        }
    }
    debug_assert_eq!(values.len(), schema.width());
    Ok(FeatureVector {
        values,
        schema_hash: schema.hash.clone(),
    })
}

/// Row-major matrix of feature vectors that all share one schema hash.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    width: usize,
    schema_hash: String,
    data: Vec<f64>,
}

impl FeatureMatrix {
    /// Collects vectors into a matrix, insisting on a single schema hash and
    /// a uniform width.
    pub fn from_vectors(vectors: &[FeatureVector]) -> Result<FeatureMatrix, FeatureError> {
        let first = vectors.first().ok_or(FeatureError::EmptyCorpus)?;
        let width = first.values.len();
        let schema_hash = first.schema_hash.clone();
        let mut data = Vec::with_capacity(width * vectors.len());
        for v in vectors {
            if v.schema_hash != schema_hash {
                return Err(FeatureError::SchemaMismatch {
                    expected: schema_hash,
                    got: v.schema_hash.clone(),
                });
            }
            if v.values.len() != width {
                return Err(FeatureError::SchemaMismatch {
                    expected: format!("width {width}"),
                    got: format!("width {}", v.values.len()),
                });
            }
            data.extend_from_slice(&v.values);
        }
        Ok(FeatureMatrix {
            width,
            schema_hash,
            data,
        })
    }

    /// Builds a matrix from raw row-major data, for synthetic inputs.
    pub fn from_raw(width: usize, schema_hash: &str, data: Vec<f64>) -> FeatureMatrix {
        assert!(width > 0 && data.len() % width == 0, "ragged matrix data");
        FeatureMatrix {
            width,
            schema_hash: schema_hash.to_string(),
            data,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn schema_hash(&self) -> &str {
        &self.schema_hash
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    /// A new matrix containing the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.width);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            width: self.width,
            schema_hash: self.schema_hash.clone(),
            data,
        }
    }
}

/// A featurized corpus: the matrix plus per-row id, dataset, and optional
/// gold label. This is what the `featurize` stage writes and the `train`
/// and `evaluate` stages read.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub ids: Vec<String>,
    pub datasets: Vec<String>,
    pub labels: Vec<Option<TaskLabel>>,
    pub matrix: FeatureMatrix,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gold labels for all rows, or an error naming the first unlabeled row.
    pub fn require_labels(&self) -> Result<Vec<TaskLabel>, FeatureError> {
        self.labels
            .iter()
            .zip(&self.ids)
            .map(|(l, id)| {
                l.ok_or_else(|| FeatureError::CorruptData(format!("row {id} has no gold label")))
            })
            .collect()
    }

    /// Writes the set as a checksummed binary file.
    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let n = self.len();
        assert_eq!(self.ids.len(), n);
        assert_eq!(self.datasets.len(), n);
        assert_eq!(self.labels.len(), n);
        let mut w = ChecksumWriter::new();
        w.bytes(FEATURE_FILE_MAGIC);
        w.u32(FEATURE_FILE_VERSION);
        w.str(self.matrix.schema_hash());
        w.u32(n as u32);
        w.u32(self.matrix.width() as u32);
        for i in 0..n {
            w.str(&self.ids[i]);
            w.str(&self.datasets[i]);
            w.u8(self.labels[i].map(|l| l.code()).unwrap_or(u8::MAX));
            for &v in self.matrix.row(i) {
                w.f64(v);
            }
        }
        std::fs::write(path, w.finish())?;
        Ok(())
    }

    /// Reads a file written by [`FeatureSet::save`], verifying magic,
    /// version, and checksum.
    pub fn load(path: &Path) -> Result<FeatureSet, FeatureError> {
        let raw = std::fs::read(path)?;
        let mut r = ChecksumReader::verify(&raw)?;
        let magic = r.bytes(8)?;
        if magic != FEATURE_FILE_MAGIC {
            return Err(FeatureError::CorruptData("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FEATURE_FILE_VERSION {
            return Err(FeatureError::VersionMismatch {
                found: version,
                supported: FEATURE_FILE_VERSION,
            });
        }
        let schema_hash = r.str()?;
        let n = r.u32()? as usize;
        let width = r.u32()? as usize;
        if width == 0 {
            return Err(FeatureError::CorruptData("zero width".into()));
        }
        let mut ids = Vec::with_capacity(n);
        let mut datasets = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * width);
        for _ in 0..n {
            ids.push(r.str()?);
            datasets.push(r.str()?);
            let code = r.u8()?;
            if code == u8::MAX {
                labels.push(None);
            } else {
                let label = TaskLabel::from_code(code)
                    .filter(|l| *l != TaskLabel::Unknown)
                    .ok_or_else(|| {
                        FeatureError::CorruptData(format!("invalid label code {code}"))
                    })?;
                labels.push(Some(label));
            }
            for _ in 0..width {
                data.push(r.f64()?);
            }
        }
        if !r.at_end() {
            return Err(FeatureError::CorruptData("trailing bytes".into()));
        }
        Ok(FeatureSet {
            ids,
            datasets,
            labels,
            matrix: FeatureMatrix::from_raw(width, &schema_hash, data),
        })
    }
}

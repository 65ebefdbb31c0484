//! Sentence embeddings behind a provider contract.
//!
//! Three providers share one interface: a deterministic builtin based on
//! hashed character n-grams, an exact-lookup store of precomputed vectors,
//! and an HTTP client for an external embedding service. The builtin keeps
//! the pipeline self-contained; the other two exist so a real sentence
//! encoder can be substituted without touching any downstream code.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::text::normalize;
use crate::util::fnv1a64;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("remote embedding service unavailable: {reason}")]
    RemoteUnavailable { reason: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("precomputed store has no embedding for {text:?}")]
    MissingEmbedding { text: String },
    #[error("cannot parse embedding store {path}, line {line}: {reason}")]
    ParseError {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("reading embedding store: {0}")]
    Io(#[from] std::io::Error),
}

/// A dense embedding vector tagged with the provider that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub provider: String,
}

impl Embedding {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// Uniform contract over embedding backends. One call embeds many texts,
/// order-preserving, and every vector in a provider's lifetime shares one
/// dimension.
pub trait EmbeddingProvider: Send + Sync {
    /// Identifier recorded in feature schemas, e.g. "builtin/256/3-5".
    fn id(&self) -> String;

    /// The provider's dimension, when known before the first call.
    fn dimension(&self) -> Option<usize>;

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError>;
}

/// Settings for the builtin hashed char-n-gram embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltinConfig {
    pub dimension: usize,
    pub min_ngram: usize,
    pub max_ngram: usize,
}

impl Default for BuiltinConfig {
    fn default() -> Self {
        BuiltinConfig {
            dimension: 256,
            min_ngram: 3,
            max_ngram: 5,
        }
    }
}

/// Deterministic embedder: character n-grams (orders `min_ngram..=max_ngram`)
/// are FNV-1a-hashed into `dimension` buckets as term frequencies, then the
/// vector is L2-normalized.
///
/// Texts shorter than `min_ngram` characters are wrapped in `^`/`$` boundary
/// marks so at least one minimum-order n-gram exists; an empty text yields
/// the zero vector, which downstream cosine reports as ZeroVector.
pub struct BuiltinProvider {
    cfg: BuiltinConfig,
}

impl BuiltinProvider {
    pub fn new(cfg: BuiltinConfig) -> BuiltinProvider {
        assert!(cfg.dimension > 0, "dimension must be positive");
        assert!(
            cfg.min_ngram >= 1 && cfg.min_ngram <= cfg.max_ngram,
            "invalid n-gram range"
        );
        BuiltinProvider { cfg }
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut values = vec![0.0; self.cfg.dimension];
        let chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            return values;
        }
        let chars = if chars.len() < self.cfg.min_ngram {
            let mut padded = Vec::with_capacity(chars.len() + 2);
            padded.push('^');
            padded.extend(chars);
            padded.push('$');
            padded
        } else {
            chars
        };
        let mut buf = String::new();
        for n in self.cfg.min_ngram..=self.cfg.max_ngram {
            if chars.len() < n {
                break;
            }
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window.iter());
                let bucket = (fnv1a64(buf.as_bytes()) % self.cfg.dimension as u64) as usize;
                values[bucket] += 1.0;
            }
        }
        let norm: f64 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        values
    }
}

impl EmbeddingProvider for BuiltinProvider {
    fn id(&self) -> String {
        format!(
            "builtin/{}/{}-{}",
            self.cfg.dimension, self.cfg.min_ngram, self.cfg.max_ngram
        )
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.cfg.dimension)
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        let id = self.id();
        Ok(texts
            .iter()
            .map(|t| Embedding {
                values: self.embed_one(t),
                provider: id.clone(),
            })
            .collect())
    }
}

/// In-memory store of vectors keyed by exact normalized text.
pub struct PrecomputedProvider {
    map: HashMap<String, Vec<f64>>,
    dimension: usize,
    id: String,
}

/// Loads a precomputed store: one record per line, tab-separated, the text
/// followed by its vector entries. All vectors must share one dimension.
pub fn load_precomputed(path: &Path) -> Result<PrecomputedProvider, EmbedError> {
    let raw = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut map = HashMap::new();
    let mut dimension = None;
    for (lineno, line) in raw.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let text = parts.next().unwrap_or_default();
        if text.is_empty() {
            return Err(EmbedError::ParseError {
                path: display,
                line: lineno + 1,
                reason: "empty text field".into(),
            });
        }
        let values: Vec<f64> = parts
            .enumerate()
            .map(|(i, p)| {
                p.parse::<f64>().map_err(|_| EmbedError::ParseError {
                    path: display.clone(),
                    line: lineno + 1,
                    reason: format!("bad number in column {}", i + 2),
                })
            })
            .collect::<Result<_, _>>()?;
        if values.is_empty() {
            return Err(EmbedError::ParseError {
                path: display,
                line: lineno + 1,
                reason: "record has no vector entries".into(),
            });
        }
        match dimension {
            None => dimension = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(EmbedError::DimensionMismatch {
                    expected: d,
                    got: values.len(),
                })
            }
            _ => {}
        }
        map.insert(normalize(text), values);
    }
    let dimension = dimension.unwrap_or(0);
    if dimension == 0 {
        return Err(EmbedError::ParseError {
            path: display,
            line: 0,
            reason: "store is empty".into(),
        });
    }
    Ok(PrecomputedProvider {
        map,
        dimension,
        id: format!("precomputed/{dimension}"),
    })
}

impl PrecomputedProvider {
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl EmbeddingProvider for PrecomputedProvider {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        texts
            .iter()
            .map(|&t| {
                self.map
                    .get(t)
                    .map(|v| Embedding {
                        values: v.clone(),
                        provider: self.id.clone(),
                    })
                    .ok_or_else(|| EmbedError::MissingEmbedding {
                        text: t.to_string(),
                    })
            })
            .collect()
    }
}

/// Settings for the remote embedding client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    /// Per-request timeout.
    pub timeout: Duration,
    /// Texts per HTTP request.
    pub batch_size: usize,
    /// Additional attempts after a failed request before giving up.
    pub max_retries: u32,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> RemoteConfig {
        RemoteConfig {
            url: url.into(),
            timeout: Duration::from_secs(10),
            batch_size: 64,
            max_retries: 1,
        }
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RemoteResponse {
    embeddings: Vec<Vec<f64>>,
    dim: usize,
}

/// HTTP client for an embedding service.
///
/// Protocol: POST with body `{"texts": [...]}`; the service answers 200 with
/// `{"embeddings": [[...], ...], "dim": N}`. Any non-200 status, transport
/// failure, or timeout counts as one failed attempt; after `max_retries`
/// further attempts the call surfaces RemoteUnavailable. Vector counts and
/// dimensions are validated against the response's own `dim` and against
/// the first dimension ever seen from the service.
pub struct RemoteProvider {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    seen_dim: OnceLock<usize>,
}

impl RemoteProvider {
    pub fn new(cfg: RemoteConfig) -> RemoteProvider {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteProvider {
            cfg,
            agent,
            seen_dim: OnceLock::new(),
        }
    }

    fn request_batch(&self, batch: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut last_reason = String::new();
        for _attempt in 0..=self.cfg.max_retries {
            match self.try_once(batch) {
                Ok(vectors) => return Ok(vectors),
                Err(EmbedError::RemoteUnavailable { reason }) => last_reason = reason,
                Err(other) => return Err(other),
            }
        }
        Err(EmbedError::RemoteUnavailable {
            reason: last_reason,
        })
    }

    fn try_once(&self, batch: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut response = self
            .agent
            .post(&self.cfg.url)
            .send_json(RemoteRequest { texts: batch })
            .map_err(|e| EmbedError::RemoteUnavailable {
                reason: e.to_string(),
            })?;
        if response.status() != 200 {
            return Err(EmbedError::RemoteUnavailable {
                reason: format!("status {}", response.status()),
            });
        }
        let parsed: RemoteResponse =
            response
                .body_mut()
                .read_json()
                .map_err(|e| EmbedError::RemoteUnavailable {
                    reason: format!("malformed response: {e}"),
                })?;
        if parsed.embeddings.len() != batch.len() {
            return Err(EmbedError::RemoteUnavailable {
                reason: format!(
                    "response has {} embeddings for {} texts",
                    parsed.embeddings.len(),
                    batch.len()
                ),
            });
        }
        let expected = *self.seen_dim.get_or_init(|| parsed.dim);
        if parsed.dim != expected {
            return Err(EmbedError::DimensionMismatch {
                expected,
                got: parsed.dim,
            });
        }
        for v in &parsed.embeddings {
            if v.len() != expected {
                return Err(EmbedError::DimensionMismatch {
                    expected,
                    got: v.len(),
                });
            }
        }
        Ok(parsed.embeddings)
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn id(&self) -> String {
        format!("remote/{}", self.cfg.url)
    }

    fn dimension(&self) -> Option<usize> {
        self.seen_dim.get().copied()
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        let id = self.id();
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.cfg.batch_size.max(1)) {
            for values in self.request_batch(batch)? {
                out.push(Embedding {
                    values,
                    provider: id.clone(),
                });
            }
        }
        Ok(out)
    }
}

/// Configuration for exactly one provider kind; what the CLI's `--embedder`
/// flag parses into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProviderConfig {
    Builtin(BuiltinConfig),
    Precomputed { path: PathBuf },
    Remote(RemoteConfig),
}

impl ProviderConfig {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
        match self {
            ProviderConfig::Builtin(cfg) => Ok(Box::new(BuiltinProvider::new(cfg.clone()))),
            ProviderConfig::Precomputed { path } => Ok(Box::new(load_precomputed(path)?)),
            ProviderConfig::Remote(cfg) => Ok(Box::new(RemoteProvider::new(cfg.clone()))),
        }
    }
}

impl fmt::Display for ProviderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderConfig::Builtin(c) => {
                write!(f, "builtin/{}/{}-{}", c.dimension, c.min_ngram, c.max_ngram)
            }
            ProviderConfig::Precomputed { path } => write!(f, "precomputed:{}", path.display()),
            ProviderConfig::Remote(c) => write!(f, "remote:{}", c.url),
        }
    }
}

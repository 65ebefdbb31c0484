//! From-scratch CART-style decision trees and a Random Forest classifier.
//!
//! Training is deterministic down to the byte: every tree derives its own
//! RNG from `seed XOR tree_index`, node expansion is depth-first in a fixed
//! order, and all ties (equal split scores, equal leaf counts, equal votes)
//! break toward the lowest feature index, threshold, or label code. The
//! result is independent of how many threads train the trees.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureMatrix, FeatureVector};
use crate::text::TaskLabel;
use crate::util::{ChecksumReader, ChecksumWriter, FrameError};

const MODEL_MAGIC: &[u8; 8] = b"PTKMODL1";
const MODEL_VERSION: u32 = 1;
/// Number of classes a leaf histogram covers.
const N_CLASSES: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("schema mismatch: model trained on {expected}, input has {got}")]
    SchemaMismatch { expected: String, got: String },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("feature and label counts differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("row {index} is labeled Unknown, which cannot be trained on")]
    UnknownLabel { index: usize },
    #[error("model file version {found} unsupported (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<FrameError> for ForestError {
    fn from(e: FrameError) -> Self {
        ForestError::CorruptModel(e.to_string())
    }
}

/// How many features each node considers for its split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSubsample {
    /// ceil(sqrt(width)) features, the usual Random Forest rule.
    Sqrt,
    /// Every feature at every node (turns a tree into plain CART).
    All,
    /// A fixed count, capped at the width.
    Fixed(u32),
}

impl FeatureSubsample {
    fn count(self, width: usize) -> usize {
        let m = match self {
            FeatureSubsample::Sqrt => (width as f64).sqrt().ceil() as usize,
            FeatureSubsample::All => width,
            FeatureSubsample::Fixed(k) => k as usize,
        };
        m.clamp(1, width)
    }
}

/// Training parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub num_trees: u32,
    /// Maximum edges from root to any leaf.
    pub max_depth: u32,
    /// Nodes smaller than this become leaves.
    pub min_samples_split: u32,
    pub features_per_split: FeatureSubsample,
    /// Resample n points with replacement per tree. Off, every tree sees
    /// the full training set.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            num_trees: 100,
            max_depth: 15,
            min_samples_split: 2,
            features_per_split: FeatureSubsample::Sqrt,
            bootstrap: true,
        }
    }
}

/// One node of an array-encoded tree. Children are indices into the tree's
/// node vector; rows with `value <= threshold` descend left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        counts: [u32; N_CLASSES],
    },
}

/// A single decision tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// The class code this tree votes for: the leaf's highest count, lowest
    /// code on ties.
    fn predict_code(&self, row: &[f64]) -> u8 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
                Node::Leaf { counts } => return argmax_lowest(&counts),
            }
        }
    }

    /// Longest root-to-leaf path in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Index of the largest count, preferring the lowest index on ties.
fn argmax_lowest(counts: &[u32; N_CLASSES]) -> u8 {
    let mut best = 0usize;
    for i in 1..N_CLASSES {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    best as u8
}

/// A trained Random Forest bound to the feature schema it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub params: ForestParams,
    pub seed: u64,
    pub schema_hash: String,
    trees: Vec<Tree>,
}

/// Gini impurity of a class-count histogram: 1 − Σ (cᵢ/n)².
pub fn gini_impurity(counts: &[u32; N_CLASSES]) -> f64 {
    let n: u32 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let mut sum = 0.0;
    for &c in counts {
        let p = c as f64 / n;
        sum += p * p;
    }
    1.0 - sum
}

/// Size-weighted impurity of a candidate split: n_l·G(left) + n_r·G(right).
/// Comparing this against n·G(parent) decides whether a split helps.
fn split_score(left: &[u32; N_CLASSES], right: &[u32; N_CLASSES]) -> f64 {
    let nl: u32 = left.iter().sum();
    let nr: u32 = right.iter().sum();
    nl as f64 * gini_impurity(left) + nr as f64 * gini_impurity(right)
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    codes: &'a [u8],
    max_depth: usize,
    min_samples_split: usize,
    n_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl<'a> TreeBuilder<'a> {
    fn histogram(&self, idx: &[u32]) -> [u32; N_CLASSES] {
        let mut counts = [0u32; N_CLASSES];
        for &i in idx {
            counts[self.codes[i as usize] as usize] += 1;
        }
        counts
    }

    /// Finds the best (feature, threshold) among the sampled features.
    ///
    /// Candidate thresholds are midpoints between consecutive distinct
    /// sorted values. Scores compare strictly, and features and thresholds
    /// are visited in ascending order, so equal scores resolve to the
    /// lowest feature index, then the lowest threshold.
    fn best_split(&mut self, idx: &[u32]) -> Option<(usize, f64, f64)> {
        let m = self.n_features;
        let mut feats = rand::seq::index::sample(&mut self.rng, self.x.width(), m).into_vec();
        feats.sort_unstable();

        let mut best: Option<(f64, usize, f64)> = None;
        let mut vals: Vec<(f64, u8)> = Vec::with_capacity(idx.len());
        for feat in feats {
            vals.clear();
            for &i in idx {
                vals.push((self.x.row(i as usize)[feat], self.codes[i as usize]));
            }
            vals.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            let mut left = [0u32; N_CLASSES];
            let mut right = self.histogram(idx);
            for w in 0..vals.len() - 1 {
                let class = vals[w].1 as usize;
                left[class] += 1;
                right[class] -= 1;
                let (a, b) = (vals[w].0, vals[w + 1].0);
                if a < b {
                    // Midpoint, nudged back to the left value if rounding
                    // lands it on b, so rows equal to b always go right.
                    let mut threshold = (a + b) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    let score = split_score(&left, &right);
                    if best.map_or(true, |(s, _, _)| score < s) {
                        best = Some((score, feat, threshold));
                    }
                }
            }
        }
        best.map(|(s, f, t)| (f, t, s))
    }

    /// Grows the subtree over `idx` and returns its node index.
    fn grow(&mut self, idx: &[u32], depth: usize) -> u32 {
        let counts = self.histogram(idx);
        let parent_gini = gini_impurity(&counts);
        let splittable = depth < self.max_depth
            && idx.len() >= self.min_samples_split
            && parent_gini > 0.0;
        if !splittable {
            self.nodes.push(Node::Leaf { counts });
            return (self.nodes.len() - 1) as u32;
        }
        let parent_score = idx.len() as f64 * parent_gini;
        let split = self
            .best_split(idx)
            .filter(|&(_, _, score)| score < parent_score);
        let Some((feature, threshold, _)) = split else {
            self.nodes.push(Node::Leaf { counts });
            return (self.nodes.len() - 1) as u32;
        };

        let (left_idx, right_idx): (Vec<u32>, Vec<u32>) = idx
            .iter()
            .partition(|&&i| self.x.row(i as usize)[feature] <= threshold);
        debug_assert!(!left_idx.is_empty() && !right_idx.is_empty());

        let at = self.nodes.len();
        // Placeholder, patched once the children exist.
        self.nodes.push(Node::Leaf { counts });
        let left = self.grow(&left_idx, depth + 1);
        let right = self.grow(&right_idx, depth + 1);
        self.nodes[at] = Node::Split {
            feature: feature as u32,
            threshold,
            left,
            right,
        };
        at as u32
    }
}

fn train_tree(
    x: &FeatureMatrix,
    codes: &[u8],
    params: &ForestParams,
    sub_seed: u64,
) -> Tree {
    let n = x.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
    let indices: Vec<u32> = if params.bootstrap {
        (0..n).map(|_| rng.gen_range(0..n) as u32).collect()
    } else {
        (0..n as u32).collect()
    };
    let mut builder = TreeBuilder {
        x,
        codes,
        max_depth: params.max_depth as usize,
        min_samples_split: (params.min_samples_split as usize).max(2),
        n_features: params.features_per_split.count(x.width()),
        rng,
        nodes: Vec::new(),
    };
    let root = builder.grow(&indices, 0);
    debug_assert_eq!(root, 0);
    Tree {
        nodes: builder.nodes,
    }
}

/// Trains a forest on a feature matrix. Tree `t` draws all its randomness
/// from `seed XOR t`, so the result is a pure function of (data, params,
/// seed) no matter how training is scheduled across threads.
pub fn train_forest_matrix(
    x: &FeatureMatrix,
    y: &[TaskLabel],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, ForestError> {
    let n = x.n_rows();
    if n == 0 {
        return Err(ForestError::EmptyTrainingSet);
    }
    if y.len() != n {
        return Err(ForestError::LengthMismatch { x: n, y: y.len() });
    }
    let codes: Vec<u8> = y
        .iter()
        .enumerate()
        .map(|(index, label)| {
            if *label == TaskLabel::Unknown {
                Err(ForestError::UnknownLabel { index })
            } else {
                Ok(label.code())
            }
        })
        .collect::<Result<_, _>>()?;
    let num_trees = params.num_trees.max(1);
    let trees: Vec<Tree> = (0..num_trees as u64)
        .into_par_iter()
        .map(|t| train_tree(x, &codes, params, seed ^ t))
        .collect();
    Ok(ForestModel {
        params: *params,
        seed,
        schema_hash: x.schema_hash().to_string(),
        trees,
    })
}

/// [`train_forest_matrix`] over a slice of feature vectors.
pub fn train_forest(
    x: &[FeatureVector],
    y: &[TaskLabel],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, ForestError> {
    let matrix = FeatureMatrix::from_vectors(x).map_err(|_| ForestError::EmptyTrainingSet)?;
    train_forest_matrix(&matrix, y, params, seed)
}

impl ForestModel {
    /// Assembles a model from parts; used by tests and the oracle harness.
    pub fn from_parts(
        params: ForestParams,
        seed: u64,
        schema_hash: &str,
        trees: Vec<Tree>,
    ) -> ForestModel {
        assert!(!trees.is_empty(), "a forest needs at least one tree");
        ForestModel {
            params,
            seed,
            schema_hash: schema_hash.to_string(),
            trees,
        }
    }

    /// Builds a tree from raw nodes; pairs with [`ForestModel::from_parts`].
    pub fn tree_from_nodes(nodes: Vec<Node>) -> Tree {
        assert!(!nodes.is_empty());
        Tree { nodes }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Deepest path over all trees, in edges.
    pub fn max_tree_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    fn check_hash(&self, got: &str) -> Result<(), ForestError> {
        if got != self.schema_hash {
            return Err(ForestError::SchemaMismatch {
                expected: self.schema_hash.clone(),
                got: got.to_string(),
            });
        }
        Ok(())
    }

    fn predict_row(&self, row: &[f64]) -> TaskLabel {
        let mut votes = [0u32; N_CLASSES];
        for tree in &self.trees {
            votes[tree.predict_code(row) as usize] += 1;
        }
        TaskLabel::from_code(argmax_lowest(&votes)).expect("codes 0..5 are the five classes")
    }

    /// Predicts every row of a matrix. Majority vote over trees; vote ties
    /// resolve to the lowest label code.
    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<TaskLabel>, ForestError> {
        self.check_hash(x.schema_hash())?;
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|i| self.predict_row(x.row(i)))
            .collect())
    }

    /// Saves the model as a versioned, checksummed binary file.
    pub fn save(&self, path: &Path) -> Result<(), ForestError> {
        let mut w = ChecksumWriter::new();
        w.bytes(MODEL_MAGIC);
        w.u32(MODEL_VERSION);
        w.u64(self.seed);
        w.u32(self.params.num_trees);
        w.u32(self.params.max_depth);
        w.u32(self.params.min_samples_split);
        let (tag, k) = match self.params.features_per_split {
            FeatureSubsample::Sqrt => (0u8, 0u32),
            FeatureSubsample::All => (1, 0),
            FeatureSubsample::Fixed(k) => (2, k),
        };
        w.u8(tag);
        w.u32(k);
        w.u8(self.params.bootstrap as u8);
        w.str(&self.schema_hash);
        w.u8(N_CLASSES as u8);
        for label in TaskLabel::CLASSES {
            w.u8(label.code());
        }
        w.u32(self.trees.len() as u32);
        for tree in &self.trees {
            w.u32(tree.nodes.len() as u32);
            for node in &tree.nodes {
                match *node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        w.u8(0);
                        w.u32(feature);
                        w.f64(threshold);
                        w.u32(left);
                        w.u32(right);
                    }
                    Node::Leaf { counts } => {
                        w.u8(1);
                        for c in counts {
                            w.u32(c);
                        }
                    }
                }
            }
        }
        std::fs::write(path, w.finish())?;
        Ok(())
    }

    /// Loads a model saved by [`ForestModel::save`], verifying magic,
    /// version, and checksum.
    pub fn load(path: &Path) -> Result<ForestModel, ForestError> {
        let raw = std::fs::read(path)?;
        let mut r = ChecksumReader::verify(&raw)?;
        if r.bytes(8)? != MODEL_MAGIC {
            return Err(ForestError::CorruptModel("bad magic".into()));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(ForestError::VersionMismatch {
                found: version,
                supported: MODEL_VERSION,
            });
        }
        let seed = r.u64()?;
        let num_trees = r.u32()?;
        let max_depth = r.u32()?;
        let min_samples_split = r.u32()?;
        let tag = r.u8()?;
        let k = r.u32()?;
        let features_per_split = match tag {
            0 => FeatureSubsample::Sqrt,
            1 => FeatureSubsample::All,
            2 => FeatureSubsample::Fixed(k),
            other => {
                return Err(ForestError::CorruptModel(format!(
                    "unknown feature-subsample tag {other}"
                )))
            }
        };
        let bootstrap = r.u8()? != 0;
        let schema_hash = r.str()?;
        let n_classes = r.u8()? as usize;
        if n_classes != N_CLASSES {
            return Err(ForestError::CorruptModel(format!(
                "expected {N_CLASSES} classes, file has {n_classes}"
            )));
        }
        for label in TaskLabel::CLASSES {
            if r.u8()? != label.code() {
                return Err(ForestError::CorruptModel("label codes differ".into()));
            }
        }
        let tree_count = r.u32()? as usize;
        if tree_count == 0 {
            return Err(ForestError::CorruptModel("no trees".into()));
        }
        let mut trees = Vec::with_capacity(tree_count);
        for _ in 0..tree_count {
            let node_count = r.u32()? as usize;
            if node_count == 0 {
                return Err(ForestError::CorruptModel("empty tree".into()));
            }
            let mut nodes = Vec::with_capacity(node_count);
            for _ in 0..node_count {
                let node = match r.u8()? {
                    0 => {
                        let feature = r.u32()?;
                        let threshold = r.f64()?;
                        let left = r.u32()?;
                        let right = r.u32()?;
                        if left as usize >= node_count || right as usize >= node_count {
                            return Err(ForestError::CorruptModel(
                                "child index out of range".into(),
                            ));
                        }
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        }
                    }
                    1 => {
                        let mut counts = [0u32; N_CLASSES];
                        for c in &mut counts {
                            *c = r.u32()?;
                        }
                        Node::Leaf { counts }
                    }
                    other => {
                        return Err(ForestError::CorruptModel(format!(
                            "unknown node tag {other}"
                        )))
                    }
                };
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        if !r.at_end() {
            return Err(ForestError::CorruptModel("trailing bytes".into()));
        }
        Ok(ForestModel {
            params: ForestParams {
                num_trees,
                max_depth,
                min_samples_split,
                features_per_split,
                bootstrap,
            },
            seed,
            schema_hash,
            trees,
        })
    }
}

/// Predicts labels for a slice of feature vectors.
pub fn predict_batch(
    model: &ForestModel,
    x: &[FeatureVector],
) -> Result<Vec<TaskLabel>, ForestError> {
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let matrix = FeatureMatrix::from_vectors(x).map_err(|e| ForestError::SchemaMismatch {
        expected: model.schema_hash.clone(),
        got: e.to_string(),
    })?;
    model.predict_matrix(&matrix)
}

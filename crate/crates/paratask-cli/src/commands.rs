//! One function per subcommand. Each artifact-producing command creates its
//! output directory, refuses to overwrite without --force, and writes a
//! manifest alongside its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use paratask::corpus::{
    ingest, make_annotation_sheet, parse_filled_sheet, parse_key_csv, read_pairs_jsonl,
    sample_training_set, score_annotation_sheet, write_pairs_jsonl, CorpusDescriptor, SheetConfig,
};
use paratask::embed::EmbeddingProvider;
use paratask::eval::{
    cross_validate, distribution_report, holdout_evaluate, ConfusionMatrix, DistributionRow,
    EvalSummary, FoldResult,
};
use paratask::features::{build_schema, vectorize_pair, FeatureMatrix, FeatureSet, FeatureVector};
use paratask::forest::train_forest_matrix;
use paratask::pos::{CascadeTagger, Tagger};
use paratask::text::EquivalenceClass;
use paratask::{FeatureSchema, ForestModel, ForestParams, ParaphrasePair, Taxonomy};

use crate::manifest::{guard_overwrite, Manifest};
use crate::{
    AnnotateSampleArgs, AnnotateScoreArgs, ClassFilter, EvaluateArgs, FeaturizeArgs, IngestArgs,
    ProfileArgs, ReportArgs, ReportFormat, SampleArgs, TaxonomyArgs, TrainArgs,
};

/// The band a full-protocol replication run is expected to land in.
const REPLICATION_BAND: (f64, f64) = (0.70, 0.90);

/// Evaluation results as written to evaluation.json.
#[derive(Debug, Serialize, Deserialize)]
struct EvaluationArtifact {
    kind: String,
    mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    folds: Option<Vec<FoldResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_size: Option<usize>,
    matrix: ConfusionMatrix,
    summary: EvalSummary,
}

/// Per-dataset task distribution as written to distribution.json.
#[derive(Debug, Serialize, Deserialize)]
struct DistributionArtifact {
    kind: String,
    rows: Vec<DistributionRow>,
    totals: DistributionRow,
}

/// Annotation-sheet score as written to score.json.
#[derive(Debug, Serialize, Deserialize)]
struct ScoreArtifact {
    kind: String,
    scored: usize,
    missing: Vec<String>,
    matrix: ConfusionMatrix,
    summary: EvalSummary,
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_artifact(path: &Path, content: &str, force: bool) -> Result<()> {
    guard_overwrite(path, force)?;
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn to_pretty_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("artifacts serialize") + "\n"
}

fn path_strings(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

/// Reads and merges one or more canonical pair files.
fn read_pair_files(paths: &[PathBuf]) -> Result<Vec<ParaphrasePair>> {
    let mut pairs = Vec::new();
    for path in paths {
        pairs.extend(
            read_pairs_jsonl(path).with_context(|| format!("reading {}", path.display()))?,
        );
    }
    if pairs.is_empty() {
        bail!("no pairs found in the input files");
    }
    Ok(pairs)
}

/// Embeds both texts of every pair in one provider call, then vectorizes in
/// parallel. Row order follows the input order regardless of thread count.
fn vectorize_corpus(
    schema: &FeatureSchema,
    pairs: &[ParaphrasePair],
    tagger: &dyn Tagger,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<FeatureVector>> {
    let texts: Vec<&str> = pairs
        .iter()
        .flat_map(|p| [p.text_a.as_str(), p.text_b.as_str()])
        .collect();
    let embeddings = provider
        .embed_texts(&texts)
        .context("embedding the corpus")?;
    let vectors = (0..pairs.len())
        .into_par_iter()
        .map(|i| {
            vectorize_pair(
                schema,
                &pairs[i],
                &embeddings[2 * i],
                &embeddings[2 * i + 1],
                tagger,
            )
        })
        .collect::<Result<Vec<_>, _>>()
        .context("vectorizing pairs")?;
    Ok(vectors)
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let mut manifest = Manifest::new(
        "ingest",
        json!({
            "descriptors": path_strings(&args.descriptors),
            "out": args.out.display().to_string(),
        }),
    );
    let mut all_pairs = Vec::new();
    let mut reports = Vec::new();
    for descriptor_path in &args.descriptors {
        let descriptor = CorpusDescriptor::load(descriptor_path)?;
        manifest.input(descriptor_path)?;
        for input in descriptor.input_paths() {
            manifest.input(&input)?;
        }
        let outcome = ingest(&descriptor)?;
        println!(
            "{}: read {}, kept {}, dropped {}, filtered {}",
            descriptor.name,
            outcome.report.read,
            outcome.report.kept,
            outcome.report.dropped,
            outcome.report.filtered
        );
        reports.push(json!({
            "dataset": descriptor.name,
            "read": outcome.report.read,
            "kept": outcome.report.kept,
            "dropped": outcome.report.dropped,
            "filtered": outcome.report.filtered,
        }));
        all_pairs.extend(outcome.pairs);
    }
    if all_pairs.is_empty() {
        bail!("ingest produced no pairs");
    }
    let pairs_path = args.out.join("pairs.jsonl");
    guard_overwrite(&pairs_path, args.force)?;
    write_pairs_jsonl(&pairs_path, &all_pairs)?;
    manifest.output(&pairs_path)?;
    manifest.detail("datasets", Value::Array(reports));
    manifest.detail("total_pairs", all_pairs.len());
    manifest.write(&args.out, args.force)?;
    println!("wrote {} pairs to {}", all_pairs.len(), pairs_path.display());
    Ok(())
}

pub fn cmd_sample(args: &SampleArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let mut manifest = Manifest::new(
        "sample",
        json!({
            "inputs": path_strings(&args.inputs),
            "out": args.out.display().to_string(),
            "per_task": args.per_task,
        }),
    )
    .seed(args.seed);
    for path in &args.inputs {
        manifest.input(path)?;
    }
    let pairs = read_pair_files(&args.inputs)?;
    let sample = sample_training_set(&pairs, args.per_task, args.seed)?;
    let sample_path = args.out.join("sample.jsonl");
    guard_overwrite(&sample_path, args.force)?;
    write_pairs_jsonl(&sample_path, &sample)?;
    manifest.output(&sample_path)?;
    manifest.detail("pool_size", pairs.len());
    manifest.detail("sample_size", sample.len());
    manifest.write(&args.out, args.force)?;
    println!(
        "sampled {} pairs ({} per task) to {}",
        sample.len(),
        args.per_task,
        sample_path.display()
    );
    Ok(())
}

pub fn cmd_featurize(args: &FeaturizeArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let provider_config = &args.embedder.0;
    let mut manifest = Manifest::new(
        "featurize",
        json!({
            "input": args.input.display().to_string(),
            "out": args.out.display().to_string(),
            "min_count": args.min_count,
            "embedder": provider_config.to_string(),
        }),
    );
    manifest.input(&args.input)?;
    let pairs = read_pair_files(std::slice::from_ref(&args.input))?;
    let tagger = CascadeTagger::bundled();
    let provider = provider_config.build()?;
    let schema = build_schema(&pairs, args.min_count, tagger, &provider.id())?;
    let vectors = vectorize_corpus(&schema, &pairs, tagger, provider.as_ref())?;
    let set = FeatureSet {
        ids: pairs.iter().map(|p| p.id.clone()).collect(),
        datasets: pairs.iter().map(|p| p.dataset.clone()).collect(),
        labels: pairs.iter().map(|p| p.task).collect(),
        matrix: FeatureMatrix::from_vectors(&vectors)?,
    };
    let schema_path = args.out.join("schema.json");
    guard_overwrite(&schema_path, args.force)?;
    schema.save(&schema_path)?;
    let features_path = args.out.join("features.bin");
    guard_overwrite(&features_path, args.force)?;
    set.save(&features_path)?;
    manifest.output(&schema_path)?;
    manifest.output(&features_path)?;
    manifest.detail("rows", set.len());
    manifest.detail("width", schema.width());
    manifest.detail("schema_hash", schema.hash.clone());
    manifest.detail(
        "vocabulary_sizes",
        schema
            .vocabularies
            .iter()
            .map(|v| v.len())
            .collect::<Vec<_>>(),
    );
    manifest.write(&args.out, args.force)?;
    println!(
        "featurized {} pairs into {}-wide vectors ({})",
        set.len(),
        schema.width(),
        features_path.display()
    );
    Ok(())
}

fn forest_params(trees: u32, max_depth: u32) -> ForestParams {
    ForestParams {
        num_trees: trees,
        max_depth,
        ..ForestParams::default()
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let mut manifest = Manifest::new(
        "train",
        json!({
            "input": args.input.display().to_string(),
            "schema": args.schema.as_ref().map(|p| p.display().to_string()),
            "out": args.out.display().to_string(),
            "trees": args.trees,
            "max_depth": args.max_depth,
        }),
    )
    .seed(args.seed);
    manifest.input(&args.input)?;
    let set = FeatureSet::load(&args.input)?;
    if let Some(schema_path) = &args.schema {
        manifest.input(schema_path)?;
        let schema = FeatureSchema::load(schema_path)?;
        if schema.hash != set.matrix.schema_hash() {
            bail!(
                "SchemaMismatch: schema {} has hash {} but the feature file was built under {}",
                schema_path.display(),
                schema.hash,
                set.matrix.schema_hash()
            );
        }
    }
    let labels = set.require_labels()?;
    let params = forest_params(args.trees, args.max_depth);
    let model = train_forest_matrix(&set.matrix, &labels, &params, args.seed)?;
    let model_path = args.out.join("model.bin");
    guard_overwrite(&model_path, args.force)?;
    model.save(&model_path)?;
    manifest.output(&model_path)?;
    manifest.detail("rows", set.len());
    manifest.detail("max_tree_depth", model.max_tree_depth());
    manifest.detail("schema_hash", set.matrix.schema_hash());
    manifest.write(&args.out, args.force)?;
    println!(
        "trained {} trees (max depth {}) on {} rows -> {}",
        args.trees,
        args.max_depth,
        set.len(),
        model_path.display()
    );
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let mut manifest = Manifest::new(
        "evaluate",
        json!({
            "input": args.input.display().to_string(),
            "out": args.out.display().to_string(),
            "trees": args.trees,
            "max_depth": args.max_depth,
            "cv": args.cv,
            "replication_band": args.replication_band,
        }),
    )
    .seed(args.seed);
    manifest.input(&args.input)?;
    let set = FeatureSet::load(&args.input)?;
    let labels = set.require_labels()?;
    let params = forest_params(args.trees, args.max_depth);
    let artifact = match args.cv {
        Some(k) => {
            let report = cross_validate(&set.matrix, &labels, &params, k, args.seed)?;
            EvaluationArtifact {
                kind: "evaluation".into(),
                mode: "cross-validation".into(),
                k: Some(report.k),
                folds: Some(report.folds),
                train_size: None,
                test_size: None,
                matrix: report.matrix,
                summary: report.summary,
            }
        }
        None => {
            let report = holdout_evaluate(&set.matrix, &labels, &params, args.seed)?;
            EvaluationArtifact {
                kind: "evaluation".into(),
                mode: "holdout".into(),
                k: None,
                folds: None,
                train_size: Some(report.train_size),
                test_size: Some(report.test_size),
                matrix: report.matrix,
                summary: report.summary,
            }
        }
    };
    let json_path = args.out.join("evaluation.json");
    write_artifact(&json_path, &to_pretty_json(&artifact), args.force)?;
    let csv_path = args.out.join("confusion.csv");
    write_artifact(&csv_path, &artifact.matrix.to_csv(), args.force)?;
    let text = format!(
        "{}\n{}",
        artifact.summary.render_text(),
        artifact.matrix.render_text()
    );
    let text_path = args.out.join("evaluation.txt");
    write_artifact(&text_path, &text, args.force)?;
    for path in [&json_path, &csv_path, &text_path] {
        manifest.output(path)?;
    }
    manifest.detail("micro_f1", artifact.summary.micro_f1);
    manifest.detail("macro_f1", artifact.summary.macro_f1);
    if args.replication_band {
        let (lo, hi) = REPLICATION_BAND;
        let micro = artifact.summary.micro_f1;
        manifest.detail("replication_band", [lo, hi]);
        manifest.detail("replication_deviation", micro < lo || micro > hi);
    }
    manifest.write(&args.out, args.force)?;
    print!("{text}");
    Ok(())
}

pub fn cmd_profile(args: &ProfileArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let provider_config = &args.embedder.0;
    let mut manifest = Manifest::new(
        "profile",
        json!({
            "input": args.input.display().to_string(),
            "model": args.model.display().to_string(),
            "schema": args.schema.display().to_string(),
            "out": args.out.display().to_string(),
            "embedder": provider_config.to_string(),
        }),
    );
    for path in [&args.input, &args.model, &args.schema] {
        manifest.input(path)?;
    }
    let pairs = read_pair_files(std::slice::from_ref(&args.input))?;
    let schema = FeatureSchema::load(&args.schema)?;
    let model = ForestModel::load(&args.model)?;
    let tagger = CascadeTagger::bundled();
    let provider = provider_config.build()?;
    let vectors = vectorize_corpus(&schema, &pairs, tagger, provider.as_ref())?;
    let matrix = FeatureMatrix::from_vectors(&vectors)?;
    let predictions = model.predict_matrix(&matrix)?;
    let items: Vec<(String, paratask::TaskLabel)> = pairs
        .iter()
        .zip(&predictions)
        .map(|(p, &label)| (p.dataset.clone(), label))
        .collect();
    let report = distribution_report(&items)?;
    let artifact = DistributionArtifact {
        kind: "distribution".into(),
        rows: report.rows.clone(),
        totals: report.totals.clone(),
    };
    let json_path = args.out.join("distribution.json");
    write_artifact(&json_path, &to_pretty_json(&artifact), args.force)?;
    let csv_path = args.out.join("distribution.csv");
    write_artifact(&csv_path, &report.to_csv(), args.force)?;
    let mut predictions_csv = String::from("id,dataset,predicted\n");
    for (pair, label) in pairs.iter().zip(&predictions) {
        predictions_csv.push_str(&format!("{},{},{}\n", pair.id, pair.dataset, label.name()));
    }
    let predictions_path = args.out.join("predictions.csv");
    write_artifact(&predictions_path, &predictions_csv, args.force)?;
    for path in [&json_path, &csv_path, &predictions_path] {
        manifest.output(path)?;
    }
    manifest.detail("pairs", pairs.len());
    manifest.write(&args.out, args.force)?;
    print!("{}", report.render_text());
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let raw = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let value: Value =
        serde_json::from_str(&raw).with_context(|| format!("parsing {}", args.input.display()))?;
    let kind = value
        .get("kind")
        .and_then(Value::as_str)
        .with_context(|| format!("{} has no \"kind\" field", args.input.display()))?
        .to_string();
    let rendered = match kind.as_str() {
        "evaluation" => {
            let artifact: EvaluationArtifact = serde_json::from_value(value)?;
            match args.format {
                ReportFormat::Text => format!(
                    "{}\n{}",
                    artifact.summary.render_text(),
                    artifact.matrix.render_text()
                ),
                ReportFormat::Csv => artifact.matrix.to_csv(),
            }
        }
        "distribution" => {
            let artifact: DistributionArtifact = serde_json::from_value(value)?;
            let report = paratask::eval::DistributionReport {
                rows: artifact.rows,
                totals: artifact.totals,
            };
            match args.format {
                ReportFormat::Text => report.render_text(),
                ReportFormat::Csv => report.to_csv(),
            }
        }
        "annotation-score" => {
            let artifact: ScoreArtifact = serde_json::from_value(value)?;
            match args.format {
                ReportFormat::Text => format!(
                    "scored {} rows, {} unanswered\n\n{}\n{}",
                    artifact.scored,
                    artifact.missing.len(),
                    artifact.summary.render_text(),
                    artifact.matrix.render_text()
                ),
                ReportFormat::Csv => artifact.matrix.to_csv(),
            }
        }
        other => bail!("unknown artifact kind {other:?} in {}", args.input.display()),
    };
    match &args.out {
        None => print!("{rendered}"),
        Some(out_dir) => {
            ensure_out_dir(out_dir)?;
            let extension = match args.format {
                ReportFormat::Text => "txt",
                ReportFormat::Csv => "csv",
            };
            let out_path = out_dir.join(format!("report.{extension}"));
            write_artifact(&out_path, &rendered, args.force)?;
            let mut manifest = Manifest::new(
                "report",
                json!({
                    "input": args.input.display().to_string(),
                    "format": extension,
                    "out": out_dir.display().to_string(),
                }),
            );
            manifest.input(&args.input)?;
            manifest.output(&out_path)?;
            manifest.detail("kind", kind);
            manifest.write(out_dir, args.force)?;
            println!("wrote {}", out_path.display());
        }
    }
    Ok(())
}

pub fn cmd_annotate_sample(args: &AnnotateSampleArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let config = SheetConfig {
        per_task: args.per_task,
        min_chars: args.min_chars,
        max_chars: args.max_chars,
        bins: args.bins,
    };
    let mut manifest = Manifest::new(
        "annotate-sample",
        json!({
            "inputs": path_strings(&args.inputs),
            "out": args.out.display().to_string(),
            "per_task": config.per_task,
            "min_chars": config.min_chars,
            "max_chars": config.max_chars,
            "bins": config.bins,
        }),
    )
    .seed(args.seed);
    for path in &args.inputs {
        manifest.input(path)?;
    }
    let pairs = read_pair_files(&args.inputs)?;
    let sheet = make_annotation_sheet(&pairs, &config, args.seed)?;
    let sheet_path = args.out.join("sheet.csv");
    write_artifact(&sheet_path, &sheet.sheet_csv(), args.force)?;
    let key_path = args.out.join("key.csv");
    write_artifact(&key_path, &sheet.key_csv(), args.force)?;
    manifest.output(&sheet_path)?;
    manifest.output(&key_path)?;
    let mut per_dataset: std::collections::BTreeMap<&str, usize> = Default::default();
    for row in &sheet.key {
        *per_dataset.entry(row.dataset.as_str()).or_insert(0) += 1;
    }
    manifest.detail("rows", sheet.rows.len());
    manifest.detail("per_dataset", per_dataset);
    manifest.write(&args.out, args.force)?;
    println!(
        "wrote {} blinded rows to {} (key: {})",
        sheet.rows.len(),
        sheet_path.display(),
        key_path.display()
    );
    Ok(())
}

pub fn cmd_annotate_score(args: &AnnotateScoreArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let mut manifest = Manifest::new(
        "annotate-score",
        json!({
            "sheet": args.sheet.display().to_string(),
            "key": args.key.display().to_string(),
            "out": args.out.display().to_string(),
        }),
    );
    manifest.input(&args.sheet)?;
    manifest.input(&args.key)?;
    let sheet_text = fs::read_to_string(&args.sheet)
        .with_context(|| format!("reading {}", args.sheet.display()))?;
    let key_text =
        fs::read_to_string(&args.key).with_context(|| format!("reading {}", args.key.display()))?;
    let filled = parse_filled_sheet(&sheet_text, &args.sheet.display().to_string())?;
    let key = parse_key_csv(&key_text, &args.key.display().to_string())?;
    let score = score_annotation_sheet(&key, &filled)?;
    let artifact = ScoreArtifact {
        kind: "annotation-score".into(),
        scored: score.scored,
        missing: score.missing.clone(),
        matrix: score.matrix.clone(),
        summary: score.summary.clone(),
    };
    let json_path = args.out.join("score.json");
    write_artifact(&json_path, &to_pretty_json(&artifact), args.force)?;
    let csv_path = args.out.join("confusion.csv");
    write_artifact(&csv_path, &score.matrix.to_csv(), args.force)?;
    manifest.output(&json_path)?;
    manifest.output(&csv_path)?;
    manifest.detail("scored", score.scored);
    manifest.detail("missing", score.missing.clone());
    manifest.write(&args.out, args.force)?;
    if !score.missing.is_empty() {
        println!(
            "excluded {} unanswered rows: {}",
            score.missing.len(),
            score.missing.join(", ")
        );
    }
    print!(
        "{}\n{}",
        score.summary.render_text(),
        score.matrix.render_text()
    );
    Ok(())
}

pub fn cmd_taxonomy(args: &TaxonomyArgs) -> Result<()> {
    let taxonomy = Taxonomy::bundled();
    if let Some(name) = &args.name {
        let entry = taxonomy
            .lookup(name)
            .with_context(|| format!("no taxonomy entry named {name:?}"))?;
        println!("{} [{}]", entry.name, entry.class);
        if let Some(parent) = &entry.parent {
            println!("  part of: {parent}");
        }
        println!("  {}", entry.definition);
        if !entry.citations.is_empty() {
            println!("  sources: {}", entry.citations.join(", "));
        }
        return Ok(());
    }
    let wanted = args.class.map(|c| match c {
        ClassFilter::Equivalent => EquivalenceClass::SemanticallyEquivalent,
        ClassFilter::Similar => EquivalenceClass::SemanticallySimilar,
    });
    let name_width = taxonomy
        .entries()
        .iter()
        .map(|e| e.name.len())
        .max()
        .unwrap_or(4);
    println!("taxonomy version {}", taxonomy.version());
    for entry in taxonomy.entries() {
        if wanted.is_some_and(|w| w != entry.class) {
            continue;
        }
        let parent = entry
            .parent
            .as_deref()
            .map(|p| format!(" (part of {p})"))
            .unwrap_or_default();
        println!(
            "{:<name_width$}  {:<10}  {}{parent}",
            entry.name,
            entry.class.to_string(),
            entry.definition
        );
    }
    Ok(())
}

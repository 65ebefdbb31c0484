//! Deterministic generator of small task-specific demo corpora, one pair of
//! datasets per task, for exercising the full pipeline at desk scale without
//! any third-party data.
//!
//! Each task has a distinct surface pattern (captions, aggressive shortening,
//! word simplification, archaic-to-casual rewrites, premise-to-generic
//! hypothesis), and each dataset of a task draws from a different topic pool.
//! A fixed share of every dataset is padded into the annotation length
//! window so the default annotation protocol is always satisfiable.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::CorpusError;
use crate::text::{char_len, ParaphrasePair, TaskLabel};
use crate::util::derive_seed;

/// One generated dataset on disk, ready for `ingest`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoCorpus {
    pub dataset: String,
    pub task: TaskLabel,
    pub descriptor_path: PathBuf,
}

struct Topic {
    name: &'static str,
    /// (specific wording, generic or synonymous wording)
    subjects: &'static [(&'static str, &'static str)],
    /// (progressive, simple present, simple past)
    actions: &'static [(&'static str, &'static str, &'static str)],
    objects: &'static [(&'static str, &'static str)],
    places: &'static [(&'static str, &'static str)],
}

const CITY: Topic = Topic {
    name: "city",
    subjects: &[
        ("a man", "someone"),
        ("a woman", "a person"),
        ("the driver", "the worker"),
        ("two children", "the kids"),
        ("an old vendor", "a seller"),
    ],
    actions: &[
        ("is riding", "rides", "rode"),
        ("is crossing", "crosses", "crossed"),
        ("is painting", "paints", "painted"),
        ("is fixing", "fixes", "fixed"),
        ("is watching", "watches", "watched"),
    ],
    objects: &[
        ("a bicycle", "a bike"),
        ("the busy street", "the road"),
        ("a large mural", "a wall"),
        ("a streetlight", "a lamp"),
        ("the market stall", "the stand"),
    ],
    places: &[
        ("near the station", "by the station"),
        ("in the square", "at the plaza"),
        ("on the bridge", "over the bridge"),
        ("outside the cafe", "by the cafe"),
        ("along the avenue", "down the avenue"),
    ],
};

const NATURE: Topic = Topic {
    name: "nature",
    subjects: &[
        ("a hiker", "someone"),
        ("a grey heron", "a bird"),
        ("the ranger", "a person"),
        ("three goats", "some animals"),
        ("an otter", "an animal"),
    ],
    actions: &[
        ("is climbing", "climbs", "climbed"),
        ("is wading", "wades", "waded"),
        ("is grazing", "grazes", "grazed"),
        ("is resting", "rests", "rested"),
        ("is drifting", "drifts", "drifted"),
    ],
    objects: &[
        ("a steep trail", "a path"),
        ("the shallow creek", "the stream"),
        ("the high meadow", "the field"),
        ("a fallen log", "a log"),
        ("the quiet lake", "the water"),
    ],
    places: &[
        ("near the ridge", "by the ridge"),
        ("in the valley", "down the valley"),
        ("under the pines", "beneath the trees"),
        ("by the waterfall", "near the falls"),
        ("at the clearing", "in the open"),
    ],
};

const ADVERBS: &[&str] = &["slowly", "carefully", "quietly", "briskly", "calmly"];

const TRAILING_CLAUSES: &[&str] = &[
    ", pausing every few steps",
    ", without any hurry",
    ", as the light faded",
    ", while the crowd thinned",
    ", taking in the view",
];

/// (elaborate phrasing, plain phrasing)
const SIMPLIFICATIONS: &[(&str, &str)] = &[
    ("endeavoured to repair", "tried to fix"),
    ("proceeded to examine", "started to check"),
    ("was obliged to abandon", "had to leave"),
    ("attempted to ascertain", "tried to learn"),
    ("commenced constructing", "began building"),
];

/// (archaic template, casual template); slots: {s} subject, {o} object,
/// {p} place, primed forms use the generic wording.
const STYLE_FRAMES: &[(&str, &str)] = &[
    (
        "Verily {s} doth linger {p}, and thou shalt witness {o}.",
        "Honestly {s'} just hangs around {p'}, and you will see {o'}.",
    ),
    (
        "Hark, {s} hath beheld {o} {p}.",
        "Wow, {s'} saw {o'} {p'}.",
    ),
    (
        "{s} doth tarry {p}, whilst minding {o}.",
        "{s'} keeps waiting {p'}, watching {o'}.",
    ),
    (
        "Thou shalt find {o} {p}, quoth {s}.",
        "You will find {o'} {p'}, said {s'}.",
    ),
];

const GENERIC_STATES: &[&str] = &["outside", "busy", "moving around", "nearby", "out and about"];

/// Short neutral words (each at most 5 chars) used to pad a text into a
/// narrow length bracket.
const FILLERS: &[&str] = &[
    "now", "too", "here", "then", "soon", "also", "still", "again", "today", "twice",
];

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

fn pick<'a, T>(pool: &'a [T], rng: &mut ChaCha8Rng) -> &'a T {
    pool.choose(rng).expect("pools are non-empty")
}

/// One raw (text_a, text_b) pair in the task's characteristic shape.
fn gen_pair(task: TaskLabel, topic: &Topic, rng: &mut ChaCha8Rng) -> (String, String) {
    let subject = pick(topic.subjects, rng);
    let action = pick(topic.actions, rng);
    let object = pick(topic.objects, rng);
    let place = pick(topic.places, rng);
    match task {
        TaskLabel::ImageRecaptioning => {
            let a = format!("{} {} {} {}.", subject.0, action.0, object.0, place.0);
            let b = format!("{} {} {} {}.", subject.1, action.1, object.1, place.1);
            (capitalize(&a), capitalize(&b))
        }
        TaskLabel::SentenceCompression => {
            let adverb = pick(ADVERBS, rng);
            let clause = pick(TRAILING_CLAUSES, rng);
            let a = format!(
                "{} {} {} {} {}{}.",
                subject.0, adverb, action.2, object.0, place.0, clause
            );
            let b = format!("{} {} {}.", subject.0, action.2, object.1);
            (capitalize(&a), capitalize(&b))
        }
        TaskLabel::SentenceSimplification => {
            let wording = pick(SIMPLIFICATIONS, rng);
            let a = format!("{} {} {} {}.", subject.0, wording.0, object.0, place.0);
            let b = format!("{} {} {} {}.", subject.0, wording.1, object.1, place.1);
            (capitalize(&a), capitalize(&b))
        }
        TaskLabel::StyleTransfer => {
            let frame = pick(STYLE_FRAMES, rng);
            let fill = |template: &str| {
                template
                    .replace("{s'}", subject.1)
                    .replace("{o'}", object.1)
                    .replace("{p'}", place.1)
                    .replace("{s}", subject.0)
                    .replace("{o}", object.0)
                    .replace("{p}", place.0)
            };
            (capitalize(&fill(frame.0)), capitalize(&fill(frame.1)))
        }
        TaskLabel::TextualEntailment => {
            let state = pick(GENERIC_STATES, rng);
            let a = format!("{} {} {} {}.", subject.0, action.0, object.0, place.0);
            let b = format!("{} is {state}.", subject.1);
            (capitalize(&a), capitalize(&b))
        }
        TaskLabel::Unknown => unreachable!("demo corpora cover the five classes"),
    }
}

/// Pads `text` so its character count lands in `[lo, lo + 6]`. The base
/// text must be shorter than `lo`; fillers add at most 6 chars per step.
fn pad_to_bracket(text: &str, lo: usize, rng: &mut ChaCha8Rng) -> String {
    let mut body = text.trim_end_matches('.').to_string();
    while char_len(&body) + 1 < lo {
        body.push(' ');
        body.push_str(pick(FILLERS, rng));
    }
    body.push('.');
    body
}

/// Generates one dataset of `n` labeled pairs named `<slug>-<topic>`. Pair
/// ids are `<dataset>:<k>`, 1-based, matching what `ingest` assigns when the
/// dataset is written to disk and read back. One in twenty pairs per length
/// bin (of the default annotation window 100..180, 8 bins) is padded so both
/// texts fall inside that bin.
fn generate_dataset(
    task: TaskLabel,
    topic: &Topic,
    n: usize,
    seed: u64,
) -> (String, Vec<ParaphrasePair>) {
    let dataset = format!("{}-{}", task_slug(task), topic.name);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &dataset));
    let per_bin = n / 20;
    let mut texts: Vec<(String, String)> = Vec::with_capacity(n);
    for bin in 0..8 {
        let lo = 101 + 10 * bin;
        for _ in 0..per_bin {
            let (a, b) = gen_pair(task, topic, &mut rng);
            texts.push((pad_to_bracket(&a, lo, &mut rng), pad_to_bracket(&b, lo, &mut rng)));
        }
    }
    while texts.len() < n {
        texts.push(gen_pair(task, topic, &mut rng));
    }
    let pairs = texts
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| {
            ParaphrasePair::new(
                format!("{dataset}:{}", i + 1),
                &a,
                &b,
                Some(task),
                dataset.as_str(),
            )
            .expect("generated texts are non-empty")
        })
        .collect();
    (dataset, pairs)
}

fn task_slug(task: TaskLabel) -> &'static str {
    match task {
        TaskLabel::ImageRecaptioning => "recap",
        TaskLabel::SentenceCompression => "compress",
        TaskLabel::SentenceSimplification => "simplify",
        TaskLabel::StyleTransfer => "style",
        TaskLabel::TextualEntailment => "entail",
        TaskLabel::Unknown => unreachable!("demo corpora cover the five classes"),
    }
}

/// All ten demo datasets (five tasks × two topics) as in-memory labeled
/// pairs, `per_dataset` pairs each. Deterministic in `seed`.
pub fn demo_pairs(per_dataset: usize, seed: u64) -> Vec<ParaphrasePair> {
    let mut out = Vec::with_capacity(per_dataset * 10);
    for task in TaskLabel::CLASSES {
        for topic in [&CITY, &NATURE] {
            out.extend(generate_dataset(task, topic, per_dataset, seed).1);
        }
    }
    out
}

fn io_error(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes the ten demo datasets into `dir`, cycling through the three
/// supported file formats, each with a ready-to-use descriptor carrying the
/// dataset's fixed task. Returns one entry per dataset in generation order.
/// `per_dataset` of at least 140 keeps the default annotation protocol
/// satisfiable (each length bin holds at least seven pairs).
pub fn write_demo_corpora(
    dir: &Path,
    per_dataset: usize,
    seed: u64,
) -> Result<Vec<DemoCorpus>, CorpusError> {
    let formats = ["jsonl", "csv", "tsv"];
    let mut corpora = Vec::with_capacity(10);
    let mut format_cycle = 0;
    for task in TaskLabel::CLASSES {
        for topic in [&CITY, &NATURE] {
            let (dataset, pairs) = generate_dataset(task, topic, per_dataset, seed);
            let format = formats[format_cycle % formats.len()];
            format_cycle += 1;
            let data_path = dir.join(format!("{dataset}.{format}"));
            let mut content = String::new();
            match format {
                "jsonl" => {
                    for p in &pairs {
                        content.push_str(
                            &serde_json::json!({"a": p.text_a, "b": p.text_b}).to_string(),
                        );
                        content.push('\n');
                    }
                }
                "csv" => {
                    let mut wtr = csv::Writer::from_writer(Vec::new());
                    wtr.write_record(["a", "b"]).expect("write to Vec");
                    for p in &pairs {
                        wtr.write_record([p.text_a.as_str(), &p.text_b])
                            .expect("write to Vec");
                    }
                    content = String::from_utf8(wtr.into_inner().expect("flush to Vec"))
                        .expect("csv output is UTF-8");
                }
                _ => {
                    for p in &pairs {
                        debug_assert!(!p.text_a.contains('\t') && !p.text_b.contains('\t'));
                        content.push_str(&format!("{}\t{}\n", p.text_a, p.text_b));
                    }
                }
            }
            fs::write(&data_path, content).map_err(|e| io_error(&data_path, e))?;
            let mapping = match format {
                "tsv" => "[fields]\ntext_a = 0\ntext_b = 1\n".to_string(),
                _ => "[fields]\ntext_a = \"a\"\ntext_b = \"b\"\n".to_string(),
            };
            let header_line = if format == "csv" { "has_header = true\n" } else { "" };
            let descriptor = format!(
                "version = 1\nname = \"{dataset}\"\nformat = \"{format}\"\n\
                 path = \"{dataset}.{format}\"\n{header_line}fixed_task = \"{}\"\n\n{mapping}",
                task.name()
            );
            let descriptor_path = dir.join(format!("{dataset}.toml"));
            fs::write(&descriptor_path, descriptor).map_err(|e| io_error(&descriptor_path, e))?;
            corpora.push(DemoCorpus {
                dataset,
                task,
                descriptor_path,
            });
        }
    }
    Ok(corpora)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest, CorpusDescriptor};
    use std::collections::BTreeMap;
    use tempfile::TempDir;

    #[test]
    fn demo_pairs_have_the_expected_shape() {
        let pairs = demo_pairs(40, 1);
        assert_eq!(pairs.len(), 400);
        let mut per_dataset: BTreeMap<&str, usize> = BTreeMap::new();
        let mut per_task: BTreeMap<TaskLabel, usize> = BTreeMap::new();
        for p in &pairs {
            *per_dataset.entry(&p.dataset).or_insert(0) += 1;
            *per_task.entry(p.task.unwrap()).or_insert(0) += 1;
        }
        assert_eq!(per_dataset.len(), 10);
        assert!(per_dataset.values().all(|&n| n == 40));
        assert!(per_task.values().all(|&n| n == 80));
        let ids: std::collections::HashSet<&str> =
            pairs.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids.len(), 400);
    }

    #[test]
    fn demo_pairs_are_seed_deterministic() {
        assert_eq!(demo_pairs(30, 7), demo_pairs(30, 7));
        assert_ne!(demo_pairs(30, 7), demo_pairs(30, 8));
    }

    #[test]
    fn every_length_bin_holds_the_padded_share() {
        let per_dataset = 160;
        let pairs = demo_pairs(per_dataset, 3);
        let mut bins: BTreeMap<(String, usize), usize> = BTreeMap::new();
        for p in &pairs {
            let la = char_len(&p.text_a);
            let lb = char_len(&p.text_b);
            if (100..=180).contains(&la) && (100..=180).contains(&lb) {
                let mean = (la + lb) as f64 / 2.0;
                let bin = (((mean - 100.0) / 10.0) as usize).min(7);
                *bins.entry((p.dataset.clone(), bin)).or_insert(0) += 1;
            }
        }
        for dataset in ["recap-city", "style-nature", "entail-city"] {
            for bin in 0..8 {
                let n = bins.get(&(dataset.to_string(), bin)).copied().unwrap_or(0);
                assert!(
                    n >= per_dataset / 20,
                    "dataset {dataset} bin {bin} holds only {n}"
                );
            }
        }
    }

    #[test]
    fn padding_lands_inside_the_requested_bracket() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for bin in 0..8 {
            let lo = 101 + 10 * bin;
            for _ in 0..20 {
                let (a, _) = gen_pair(TaskLabel::StyleTransfer, &CITY, &mut rng);
                let padded = pad_to_bracket(&a, lo, &mut rng);
                let n = char_len(&padded);
                assert!(
                    n >= lo && n <= lo + 6,
                    "length {n} outside [{lo}, {}]",
                    lo + 6
                );
            }
        }
    }

    #[test]
    fn base_sentences_stay_below_the_first_bracket() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for task in TaskLabel::CLASSES {
            for topic in [&CITY, &NATURE] {
                for _ in 0..50 {
                    let (a, b) = gen_pair(task, topic, &mut rng);
                    assert!(char_len(&a) < 101, "{task}: {a:?} is {} chars", char_len(&a));
                    assert!(char_len(&b) < 101, "{task}: {b:?} is {} chars", char_len(&b));
                }
            }
        }
    }

    #[test]
    fn written_corpora_ingest_back_identically() {
        let dir = TempDir::new().unwrap();
        let corpora = write_demo_corpora(dir.path(), 40, 11).unwrap();
        assert_eq!(corpora.len(), 10);
        let formats: std::collections::HashSet<String> = corpora
            .iter()
            .map(|c| {
                CorpusDescriptor::load(&c.descriptor_path)
                    .unwrap()
                    .input_paths()[0]
                    .extension()
                    .unwrap()
                    .to_string_lossy()
                    .into_owned()
            })
            .collect();
        assert_eq!(formats.len(), 3, "all three formats are exercised");
        let expected = demo_pairs(40, 11);
        let mut ingested = Vec::new();
        for c in &corpora {
            let descriptor = CorpusDescriptor::load(&c.descriptor_path).unwrap();
            let outcome = ingest(&descriptor).unwrap();
            assert_eq!(outcome.report.kept, 40);
            assert_eq!(outcome.report.dropped, 0);
            assert!(outcome.pairs.iter().all(|p| p.task == Some(c.task)));
            ingested.extend(outcome.pairs);
        }
        assert_eq!(ingested, expected);
    }
}

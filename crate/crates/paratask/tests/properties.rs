//! Randomized invariant checks: metric symmetry and ranges, tokenizer span
//! soundness, fold partition guarantees, confusion-matrix identities, and
//! feature-vector swap invariance.

use std::collections::BTreeSet;

use proptest::prelude::*;

use paratask::embed::{BuiltinConfig, BuiltinProvider};
use paratask::eval::{confusion_stats, distribution_report, stratified_kfold};
use paratask::features::{build_schema, vectorize_pair};
use paratask::metrics::{bleu_sym_tokens, compression_ratio, rouge1_f_tokens};
use paratask::pos::CascadeTagger;
use paratask::text::{char_len, normalize, tokenize};
use paratask::{EmbeddingProvider, ParaphrasePair, TaskLabel};

fn token() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-z]{1,6}").unwrap()
}

fn token_seq() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(token(), 1..=20)
}

fn label() -> impl Strategy<Value = TaskLabel> {
    (0u8..5).prop_map(|c| TaskLabel::from_code(c).unwrap())
}

/// Messy but tokenizable text: words, digits, punctuation, stray unicode,
/// and whitespace runs.
fn rough_text() -> impl Strategy<Value = String> {
    proptest::string::string_regex(
        "([a-zA-Z]{1,8}|[0-9]{1,4}|[.,;:!?'\\-\"()]|\u{e9}|\u{fc}|\u{4e16}|  |\t| ){1,30}",
    )
    .unwrap()
}

proptest! {
    #[test]
    fn rouge_and_bleu_are_symmetric_bounded_and_one_on_self(
        a in token_seq(),
        b in token_seq(),
    ) {
        let ar: Vec<&str> = a.iter().map(String::as_str).collect();
        let br: Vec<&str> = b.iter().map(String::as_str).collect();

        let r_ab = rouge1_f_tokens(&ar, &br).unwrap();
        let r_ba = rouge1_f_tokens(&br, &ar).unwrap();
        prop_assert_eq!(r_ab.to_bits(), r_ba.to_bits(), "rouge not symmetric");
        prop_assert!((0.0..=1.0).contains(&r_ab));

        let b_ab = bleu_sym_tokens(&ar, &br).unwrap();
        let b_ba = bleu_sym_tokens(&br, &ar).unwrap();
        prop_assert_eq!(b_ab.to_bits(), b_ba.to_bits(), "bleu not symmetric");
        prop_assert!((0.0..=1.0).contains(&b_ab));

        prop_assert_eq!(rouge1_f_tokens(&ar, &ar).unwrap(), 1.0);
        prop_assert_eq!(bleu_sym_tokens(&ar, &ar).unwrap(), 1.0);
    }

    #[test]
    fn compression_ratio_is_symmetric_and_in_unit_interval(
        a in rough_text(),
        b in rough_text(),
    ) {
        prop_assume!(!normalize(&a).is_empty() && !normalize(&b).is_empty());
        let pair = ParaphrasePair::new("p:1", &a, &b, None, "p").unwrap();
        let ratio = compression_ratio(&pair).unwrap();
        let swapped = compression_ratio(&pair.swapped()).unwrap();
        prop_assert_eq!(ratio.to_bits(), swapped.to_bits());
        prop_assert!(ratio > 0.0 && ratio <= 1.0);
        let (la, lb) = (char_len(&pair.text_a), char_len(&pair.text_b));
        prop_assert_eq!(ratio, la.min(lb) as f64 / la.max(lb) as f64);
    }

    #[test]
    fn tokenizer_spans_are_sound(raw in rough_text()) {
        // The tokenizer's contract is normalized input; spans index the
        // normalized text by character.
        let normalized = normalize(&raw);
        let chars: Vec<char> = normalized.chars().collect();
        let seq = tokenize(&normalized);

        let mut covered = BTreeSet::new();
        let mut previous_end = 0usize;
        for tok in &seq.tokens {
            prop_assert!(!tok.form.is_empty());
            prop_assert!(tok.start < tok.end, "empty span");
            prop_assert!(tok.end <= chars.len(), "span past the text");
            prop_assert!(tok.start >= previous_end, "spans overlap or regress");
            previous_end = tok.end;
            let slice: String = chars[tok.start..tok.end].iter().collect();
            prop_assert_eq!(&slice.to_lowercase(), &tok.form,
                "span does not reconstruct the form in {:?}", normalized);
            covered.extend(tok.start..tok.end);
        }
        // Tokens cover exactly the non-whitespace positions.
        let expected: BTreeSet<usize> = chars
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_whitespace())
            .map(|(i, _)| i)
            .collect();
        prop_assert_eq!(covered, expected);
    }

    #[test]
    fn stratified_folds_partition_and_balance(
        class_sizes in proptest::collection::vec(0usize..25, 5),
        k in 2usize..=8,
        seed in any::<u64>(),
    ) {
        let mut labels = Vec::new();
        for (code, extra) in class_sizes.iter().enumerate() {
            let n = k + extra;
            labels.extend(std::iter::repeat(TaskLabel::from_code(code as u8).unwrap()).take(n));
        }
        let folds = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);

        let mut seen = BTreeSet::new();
        for fold in &folds {
            for &i in fold {
                prop_assert!(i < labels.len());
                prop_assert!(seen.insert(i), "index {} in two folds", i);
            }
        }
        prop_assert_eq!(seen.len(), labels.len(), "folds do not cover the data");

        for code in 0..5u8 {
            let label = TaskLabel::from_code(code).unwrap();
            let per_fold: Vec<usize> = folds
                .iter()
                .map(|f| f.iter().filter(|&&i| labels[i] == label).count())
                .collect();
            let lo = per_fold.iter().min().unwrap();
            let hi = per_fold.iter().max().unwrap();
            prop_assert!(hi - lo <= 1,
                "class {label} spreads {per_fold:?} across folds");
        }
    }

    #[test]
    fn micro_f1_equals_accuracy_without_unknown(
        pairs in proptest::collection::vec((label(), label()), 1..200),
    ) {
        let actual: Vec<TaskLabel> = pairs.iter().map(|p| p.0).collect();
        let predicted: Vec<TaskLabel> = pairs.iter().map(|p| p.1).collect();
        let (matrix, summary) = confusion_stats(&actual, &predicted).unwrap();
        let expected = matrix.trace() as f64 / matrix.total as f64;
        prop_assert_eq!(summary.micro_f1.to_bits(), expected.to_bits());
        prop_assert_eq!(summary.accuracy.to_bits(), expected.to_bits());
        prop_assert!(!matrix.has_unknown_column);
        let cell_sum: u64 = matrix.rows.iter().flatten().sum();
        prop_assert_eq!(cell_sum, matrix.total);
    }

    #[test]
    fn distribution_rows_and_totals_are_consistent(
        items in proptest::collection::vec(("[ab c]{1,2}", label()), 1..150),
    ) {
        let assignments: Vec<(String, TaskLabel)> = items;
        let report = distribution_report(&assignments).unwrap();
        let mut grand = [0u64; 5];
        for row in &report.rows {
            let row_sum: u64 = row.counts.iter().sum();
            prop_assert_eq!(row_sum, row.total);
            let pct_sum: f64 = (0..5).map(|c| row.percentage(c)).sum();
            prop_assert!((pct_sum - 100.0).abs() < 1e-6,
                "row {} percentages sum to {pct_sum}", row.dataset);
            for (g, c) in grand.iter_mut().zip(row.counts) {
                *g += c;
            }
        }
        prop_assert_eq!(grand, report.totals.counts);
        prop_assert_eq!(report.totals.total, assignments.len() as u64);
        let names: Vec<&String> = report.rows.iter().map(|r| &r.dataset).collect();
        prop_assert!(names.windows(2).all(|w| w[0] < w[1]), "rows not sorted");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn feature_vectors_are_swap_invariant(
        a in proptest::collection::vec(token(), 3..12),
        b in proptest::collection::vec(token(), 3..12),
    ) {
        let text_a = format!("{}.", a.join(" "));
        let text_b = format!("{}.", b.join(" "));
        let pair = ParaphrasePair::new("p:1", &text_a, &text_b, None, "p").unwrap();

        let tagger = CascadeTagger::bundled();
        let provider = BuiltinProvider::new(BuiltinConfig::default());
        // A minimal schema built from the pair itself keeps every observed
        // n-gram in the vocabulary.
        let schema = build_schema(
            std::slice::from_ref(&pair),
            1,
            tagger,
            &provider.id(),
        ).unwrap();
        let emb = provider.embed_texts(&[&pair.text_a, &pair.text_b]).unwrap();

        let forward = vectorize_pair(&schema, &pair, &emb[0], &emb[1], tagger).unwrap();
        let swapped = vectorize_pair(&schema, &pair.swapped(), &emb[1], &emb[0], tagger).unwrap();
        prop_assert_eq!(forward.values.len(), swapped.values.len());
        for (i, (x, y)) in forward.values.iter().zip(&swapped.values).enumerate() {
            prop_assert_eq!(x.to_bits(), y.to_bits(), "component {} differs", i);
        }
    }
}

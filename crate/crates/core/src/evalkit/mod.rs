//! Task metrics and multi-run aggregation.
//!
//! All scores are percentages. Span scoring follows conlleval: exact match
//! on type, start and end, with an `I-X` that does not continue an `X`
//! entity opening a new one.

mod aggregate;
mod data;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};

pub use aggregate::{average_runs, render_results_table, AggregateReport, MetricReport, ModelFamily, TableEntry};
pub use data::{read_classification_data, read_classification_predictions, read_conll_predictions, read_tagged_sentences, TaggedSentence};

fn pct(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        100.0 * num / den
    }
}

/// Harmonic mean of two percentages; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationScores {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class_f1: BTreeMap<String, f64>,
}

/// Micro F1 over pooled counts and the unweighted mean of per-class F1.
/// A class with neither gold nor predicted instances scores 0.
pub fn micro_macro_f1<S: AsRef<str>>(gold: &[S], predicted: &[S], classes: &[S]) -> Result<ClassificationScores> {
    if gold.is_empty() {
        return Err(Error::Input("no labels to score".into()));
    }
    if gold.len() != predicted.len() {
        return Err(Error::Input(format!("{} gold labels but {} predictions", gold.len(), predicted.len())));
    }
    let class_set: BTreeSet<&str> = classes.iter().map(AsRef::as_ref).collect();
    let mut tp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fn_: BTreeMap<&str, usize> = BTreeMap::new();
    for (g, p) in gold.iter().zip(predicted) {
        let (g, p) = (g.as_ref(), p.as_ref());
        for l in [g, p] {
            if !class_set.contains(l) {
                return Err(Error::Input(format!("label {l:?} not in class set")));
            }
        }
        if g == p {
            *tp.entry(g).or_default() += 1;
        } else {
            *fp.entry(p).or_default() += 1;
            *fn_.entry(g).or_default() += 1;
        }
    }
    let get = |m: &BTreeMap<&str, usize>, c: &str| m.get(c).copied().unwrap_or(0) as f64;
    let mut per_class_f1 = BTreeMap::new();
    for &c in &class_set {
        let (t, p, n) = (get(&tp, c), get(&fp, c), get(&fn_, c));
        per_class_f1.insert(c.to_string(), pct(2.0 * t, 2.0 * t + p + n));
    }
    let t: f64 = tp.values().sum::<usize>() as f64;
    let errors = (gold.len() as f64) - t;
    Ok(ClassificationScores {
        micro_f1: pct(2.0 * t, 2.0 * t + 2.0 * errors),
        macro_f1: per_class_f1.values().sum::<f64>() / per_class_f1.len() as f64,
        per_class_f1,
    })
}

/// Percentage of tokens tagged correctly, pooled over all sentences.
pub fn word_accuracy<S: AsRef<str>>(gold: &[Vec<S>], predicted: &[Vec<S>]) -> Result<f64> {
    if gold.len() != predicted.len() {
        return Err(Error::Input(format!("{} gold sentences but {} predicted", gold.len(), predicted.len())));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Input(format!("sentence {i}: {} gold tags but {} predicted", g.len(), p.len())));
        }
        total += g.len();
        correct += g.iter().zip(p).filter(|(a, b)| a.as_ref() == b.as_ref()).count();
    }
    Ok(pct(correct as f64, total as f64))
}

/// Entity span over token indices `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SpanEntity {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(tag: &str) -> Result<Tag<'_>> {
    if tag == "O" {
        return Ok(Tag::Outside);
    }
    match tag.split_once('-') {
        Some(("B", t)) if !t.is_empty() => Ok(Tag::Begin(t)),
        Some(("I", t)) if !t.is_empty() => Ok(Tag::Inside(t)),
        _ => Err(Error::Input(format!("malformed BIO tag {tag:?}"))),
    }
}

/// Entities of one BIO-tagged sentence, conlleval style.
pub fn bio_spans<S: AsRef<str>>(tags: &[S]) -> Result<Vec<SpanEntity>> {
    let mut spans = Vec::new();
    let mut open: Option<(&str, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = parse_tag(tag.as_ref())?;
        let continues = matches!((&tag, open), (Tag::Inside(t), Some((o, _))) if *t == o);
        if continues {
            continue;
        }
        if let Some((label, start)) = open.take() {
            spans.push(SpanEntity { label: label.to_string(), start, end: i });
        }
        match tag {
            Tag::Begin(t) | Tag::Inside(t) => open = Some((t, i)),
            Tag::Outside => {}
        }
    }
    if let Some((label, start)) = open {
        spans.push(SpanEntity { label: label.to_string(), start, end: tags.len() });
    }
    Ok(spans)
}

/// Renders non-overlapping spans as BIO tags over `len` tokens.
pub fn spans_to_bio(spans: &[SpanEntity], len: usize) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    for s in spans {
        for (k, tag) in tags[s.start..s.end].iter_mut().enumerate() {
            *tag = format!("{}-{}", if k == 0 { "B" } else { "I" }, s.label);
        }
    }
    tags
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpanScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

/// Exact-match entity precision, recall and F1 over aligned sentences.
pub fn conll_prf<S: AsRef<str>>(gold: &[Vec<S>], predicted: &[Vec<S>]) -> Result<SpanScores> {
    if gold.len() != predicted.len() {
        return Err(Error::Input(format!("{} gold sentences but {} predicted", gold.len(), predicted.len())));
    }
    let (mut correct, mut n_pred, mut n_gold) = (0, 0, 0);
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Input(format!("sentence {i}: {} gold tags but {} predicted", g.len(), p.len())));
        }
        let gs: BTreeSet<SpanEntity> = bio_spans(g)?.into_iter().collect();
        let ps: BTreeSet<SpanEntity> = bio_spans(p)?.into_iter().collect();
        correct += gs.intersection(&ps).count();
        n_gold += gs.len();
        n_pred += ps.len();
    }
    let precision = pct(correct as f64, n_pred as f64);
    let recall = pct(correct as f64, n_gold as f64);
    Ok(SpanScores { precision, recall, f1: f1(precision, recall), correct, predicted: n_pred, gold: n_gold })
}

/// Rounds to the two decimals used in reports.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn hand_computed_confusion() {
        let s = micro_macro_f1(&v("A A B C"), &v("A B B C"), &v("A B C")).unwrap();
        assert_eq!(round2(s.micro_f1), 75.00);
        assert_eq!(round2(s.per_class_f1["A"]), 66.67);
        assert_eq!(round2(s.per_class_f1["B"]), 66.67);
        assert_eq!(round2(s.macro_f1), 77.78);

        let all = micro_macro_f1(&v("A B"), &v("A B"), &v("A B")).unwrap();
        assert_eq!((all.micro_f1, all.macro_f1), (100.0, 100.0));
    }

    #[test]
    fn absent_class_contributes_zero() {
        let s = micro_macro_f1(&v("A B"), &v("A B"), &v("A B Z")).unwrap();
        assert_eq!(s.per_class_f1["Z"], 0.0);
        assert!((s.macro_f1 - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn classification_errors() {
        assert!(micro_macro_f1::<String>(&[], &[], &v("A")).is_err());
        assert!(micro_macro_f1(&v("A"), &v("Q"), &v("A")).is_err());
    }

    #[test]
    fn accuracy_pooling() {
        let g = vec![v("a a a a a a a a a a"), v("a a a a a a a a a a")];
        let p = vec![v("a a a a a a a a a b"), v("a a a a a b b b b b")];
        assert_eq!(word_accuracy(&g, &p).unwrap(), 70.0);
        assert_eq!(word_accuracy(&g[..1], &g[..1]).unwrap(), 100.0);
        assert_eq!(word_accuracy(&g[..1], &p[..1]).unwrap(), 90.0);
        assert!(word_accuracy(&[v("a b")], &[v("a")]).is_err());
    }

    #[test]
    fn span_parsing() {
        let s = bio_spans(&v("B-LOC O B-ORG I-ORG")).unwrap();
        assert_eq!(
            s,
            vec![
                SpanEntity { label: "LOC".into(), start: 0, end: 1 },
                SpanEntity { label: "ORG".into(), start: 2, end: 4 }
            ]
        );
        assert_eq!(bio_spans(&v("O I-PER")).unwrap(), vec![SpanEntity { label: "PER".into(), start: 1, end: 2 }]);
        assert_eq!(bio_spans(&v("B-LOC I-ORG")).unwrap().len(), 2);
        assert_eq!(bio_spans(&v("B-X B-X")).unwrap().len(), 2);
        assert!(bio_spans(&v("O O")).unwrap().is_empty());
        let err = bio_spans(&v("O X-LOC")).unwrap_err();
        assert!(err.to_string().contains("X-LOC"));
    }

    #[test]
    fn boundary_off_by_one_is_wrong() {
        let s = conll_prf(&[v("B-PER I-PER O")], &[v("B-PER O O")]).unwrap();
        assert_eq!((s.correct, s.predicted, s.gold), (0, 1, 1));
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn empty_denominators() {
        let s = conll_prf(&[v("O O")], &[v("O O")]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    fn spans_strategy() -> impl Strategy<Value = (Vec<SpanEntity>, usize)> {
        prop::collection::vec((0usize..3, 1usize..4, 0usize..3), 0..5).prop_map(|parts| {
            let mut spans = Vec::new();
            let mut pos = 0;
            for (gap, len, label) in parts {
                pos += gap;
                spans.push(SpanEntity { label: ["LOC", "ORG", "PER"][label].into(), start: pos, end: pos + len });
                pos += len;
            }
            (spans, pos + 1)
        })
    }

    proptest! {
        #[test]
        fn bio_roundtrip((spans, len) in spans_strategy()) {
            prop_assert_eq!(bio_spans(&spans_to_bio(&spans, len)).unwrap(), spans);
        }

        #[test]
        fn self_score_is_perfect((spans, len) in spans_strategy()) {
            let tags = spans_to_bio(&spans, len);
            let s = conll_prf(&[tags.clone()], &[tags]).unwrap();
            if !spans.is_empty() {
                prop_assert_eq!((s.precision, s.recall, s.f1), (100.0, 100.0, 100.0));
            }
        }

        #[test]
        fn micro_f1_is_accuracy(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40)) {
            let names = ["a", "b", "c", "d"];
            let gold: Vec<&str> = pairs.iter().map(|p| names[p.0]).collect();
            let pred: Vec<&str> = pairs.iter().map(|p| names[p.1]).collect();
            let s = micro_macro_f1(&gold, &pred, &names).unwrap();
            let acc = 100.0 * pairs.iter().filter(|p| p.0 == p.1).count() as f64 / pairs.len() as f64;
            prop_assert!((s.micro_f1 - acc).abs() < 1e-9);
        }

        #[test]
        fn f1_between_p_and_r(p in 0.01f64..100.0, r in 0.01f64..100.0) {
            let f = f1(p, r);
            prop_assert!((f - f1(r, p)).abs() < 1e-12);
            prop_assert!(f <= p.max(r) + 1e-12 && f >= p.min(r) - 1e-12);
        }
    }
}

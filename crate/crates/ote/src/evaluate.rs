//! Exact-span evaluation of opinion targets.
//!
//! A predicted span counts only if its sentence id and character offsets
//! both match a gold span. Duplicate spans collapse per sentence on both
//! sides; precision, recall and F1 are micro-averaged over the corpus.
//! The report keeps the false-positive and false-negative span
//! inventories and ranks the most frequent error surfaces.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::corpus_io::{Label, Sentence};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct TargetSpan {
    pub sentence_id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fp_spans: Vec<TargetSpan>,
    pub fn_spans: Vec<TargetSpan>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Extracts one span per maximal B(I)* run.
pub fn spans_of(sent: &Sentence) -> Result<BTreeSet<TargetSpan>> {
    if !sent.valid_bio() {
        return Err(Error::Invalid(format!(
            "sentence {}: invalid BIO sequence",
            sent.id
        )));
    }
    let mut spans = BTreeSet::new();
    let mut run: Option<(usize, usize)> = None; // (first token, last token)
    let flush = |run: &mut Option<(usize, usize)>, spans: &mut BTreeSet<TargetSpan>| {
        if let Some((a, b)) = run.take() {
            let surface = sent.tokens[a..=b]
                .iter()
                .map(|t| t.surface.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            spans.insert(TargetSpan {
                sentence_id: sent.id.clone(),
                start: sent.tokens[a].start,
                end: sent.tokens[b].end,
                surface,
            });
        }
    };
    for (i, &l) in sent.labels.iter().enumerate() {
        match l {
            Label::B => {
                flush(&mut run, &mut spans);
                run = Some((i, i));
            }
            Label::I => {
                if let Some((_, b)) = &mut run {
                    *b = i;
                }
            }
            Label::O => flush(&mut run, &mut spans),
        }
    }
    flush(&mut run, &mut spans);
    Ok(spans)
}

/// Micro-averaged exact-span P/R/F1 between two corpora over the same
/// sentences.
pub fn evaluate(gold: &[Sentence], pred: &[Sentence]) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::Invalid(format!(
            "corpus size mismatch: gold {} vs pred {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut tp = 0;
    let mut fp_spans = Vec::new();
    let mut fn_spans = Vec::new();
    for (g, p) in gold.iter().zip(pred) {
        if g.id != p.id {
            return Err(Error::IdMismatch {
                gold: g.id.clone(),
                pred: p.id.clone(),
            });
        }
        let gs = spans_of(g)?;
        let ps = spans_of(p)?;
        let key = |s: &TargetSpan| (s.start, s.end);
        let gkeys: BTreeSet<_> = gs.iter().map(key).collect();
        let pkeys: BTreeSet<_> = ps.iter().map(key).collect();
        tp += gkeys.intersection(&pkeys).count();
        fp_spans.extend(ps.iter().filter(|s| !gkeys.contains(&key(s))).cloned());
        fn_spans.extend(gs.iter().filter(|s| !pkeys.contains(&key(s))).cloned());
    }
    let fp = fp_spans.len();
    let fn_ = fn_spans.len();
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EvalReport {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
        fp_spans,
        fn_spans,
    })
}

/// Top-k error surfaces by count, lowercased for grouping, ties broken
/// lexicographically.
pub fn error_report(report: &EvalReport, k: usize) -> (Vec<(String, usize)>, Vec<(String, usize)>) {
    let rank = |spans: &[TargetSpan]| {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for s in spans {
            *counts.entry(s.surface.to_lowercase()).or_default() += 1;
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    };
    (rank(&report.fp_spans), rank(&report.fn_spans))
}

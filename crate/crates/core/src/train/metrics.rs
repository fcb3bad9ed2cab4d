//! Evaluation metrics shared by the tasks.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::doc::Doc;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Precision, recall and F1 from true positives and the predicted and
    /// gold totals. Empty denominators give 0.
    pub fn from_counts(tp: usize, n_pred: usize, n_gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, n_pred);
        let recall = ratio(tp, n_gold);
        let f1 = ratio(2 * tp, n_pred + n_gold);
        Prf { precision, recall, f1 }
    }
}

/// Micro- and macro-averaged F1 of aligned label sequences.
///
/// Macro-F1 averages over the classes occurring in either sequence. Two
/// empty sequences score `(1.0, 1.0)`.
pub fn micro_macro_f1<T: Ord>(pred: &[T], gold: &[T]) -> Result<(f64, f64)> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    if gold.is_empty() {
        return Ok((1.0, 1.0));
    }
    let mut counts: BTreeMap<&T, (usize, usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (p, g) in pred.iter().zip(gold) {
        counts.entry(p).or_default().1 += 1;
        counts.entry(g).or_default().2 += 1;
        if p == g {
            counts.entry(p).or_default().0 += 1;
            correct += 1;
        }
    }
    let micro = correct as f64 / gold.len() as f64;
    let macro_f1 = counts
        .values()
        .map(|&(tp, np, ng)| Prf::from_counts(tp, np, ng).f1)
        .sum::<f64>()
        / counts.len() as f64;
    Ok((micro, macro_f1))
}

/// Unlabeled and labeled attachment scores over all words.
pub fn uas_las(pred: &Doc, gold: &Doc) -> Result<(f64, f64)> {
    uas_las_docs(std::slice::from_ref(pred), std::slice::from_ref(gold))
}

pub fn uas_las_docs(pred: &[Doc], gold: &[Doc]) -> Result<(f64, f64)> {
    let p: Vec<_> = pred.iter().flat_map(|d| d.tokens()).collect();
    let g: Vec<_> = gold.iter().flat_map(|d| d.tokens()).collect();
    if p.len() != g.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: g.len(),
        });
    }
    if g.is_empty() {
        return Ok((1.0, 1.0));
    }
    let mut heads = 0;
    let mut labeled = 0;
    for (p, g) in p.iter().zip(&g) {
        if p.head.is_some() && p.head == g.head {
            heads += 1;
            if p.deprel.is_some() && p.deprel == g.deprel {
                labeled += 1;
            }
        }
    }
    let n = g.len() as f64;
    Ok((heads as f64 / n, labeled as f64 / n))
}

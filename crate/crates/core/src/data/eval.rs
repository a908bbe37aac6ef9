use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::EntitySet;

/// Micro-averaged precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

/// Exact-match span F1 over a corpus. Sentences are paired by position.
/// With no gold and no predicted entities every score is 1; if only one
/// side is empty every score is 0.
pub fn span_f1(gold: &[EntitySet], pred: &[EntitySet]) -> Result<Prf> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            actual: pred.len(),
        });
    }
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        ng += g.len();
        np += p.len();
        tp += p.iter().filter(|e| g.contains(e)).count();
    }
    let (precision, recall, f1) = match (np, ng) {
        (0, 0) => (1.0, 1.0, 1.0),
        (0, _) | (_, 0) => (0.0, 0.0, 0.0),
        _ => {
            let p = tp as f64 / np as f64;
            let r = tp as f64 / ng as f64;
            let f = if tp == 0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (p, r, f)
        }
    };
    Ok(Prf {
        precision,
        recall,
        f1,
        true_positives: tp,
        predicted: np,
        gold: ng,
    })
}

//! Classification quality measures.

use anyhow::{bail, Result};

/// Fraction of matching entries.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() || predictions.is_empty() {
        bail!(
            "accuracy: got {} predictions for {} labels",
            predictions.len(),
            truth.len()
        );
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Unweighted mean over classes 1..=C of per-class F1 = 2PR/(P+R).
/// A class absent from both predictions and truth contributes 0.
pub fn macro_f1(predictions: &[usize], truth: &[usize], c: usize) -> Result<f64> {
    if predictions.len() != truth.len() || predictions.is_empty() {
        bail!(
            "macro_f1: got {} predictions for {} labels",
            predictions.len(),
            truth.len()
        );
    }
    if c == 0 {
        bail!("macro_f1: C must be >= 1");
    }
    for (&p, &t) in predictions.iter().zip(truth) {
        if p < 1 || p > c || t < 1 || t > c {
            bail!("macro_f1: label outside 1..={}", c);
        }
    }
    let mut tp = vec![0usize; c + 1];
    let mut fp = vec![0usize; c + 1];
    let mut fnn = vec![0usize; c + 1];
    for (&p, &t) in predictions.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fnn[t] += 1;
        }
    }
    let mut total = 0.0;
    for class in 1..=c {
        let denom = 2 * tp[class] + fp[class] + fnn[class];
        if denom > 0 {
            total += 2.0 * tp[class] as f64 / denom as f64;
        }
    }
    Ok(total / c as f64)
}

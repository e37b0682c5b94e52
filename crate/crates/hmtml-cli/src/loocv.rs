//! Leave-one-out hyperparameter selection on the labeled set.
//!
//! With a budget of `n` labels per class, fold f (f = 0..n-1) holds out the
//! f-th labeled sample of every class in every domain, trains on the rest,
//! and 1-NN-classifies the holdouts. Scores average over all domains and
//! folds; the grid argmax wins, ties going to the smaller gamma, then the
//! smaller gamma_m.

use anyhow::{bail, Result};
use hmtml::encoding::TaskWeights;
use hmtml::metric::{knn_predict, FactorMetric};
use hmtml::{fit, DomainData, HmtmlConfig};
use ndarray::Array2;
use rayon::prelude::*;

/// Per-class index lists, each sorted; all classes must share one count.
fn class_indices(data: &DomainData) -> Result<Vec<Vec<usize>>> {
    let c = data.num_classes();
    let mut by_class = vec![Vec::new(); c];
    for (i, &l) in data.labels.iter().enumerate() {
        by_class[l - 1].push(i);
    }
    let n = by_class[0].len();
    if by_class.iter().any(|v| v.len() != n) {
        bail!("leave-one-out requires an equal label count per class");
    }
    Ok(by_class)
}

fn subset(data: &DomainData, keep: &[usize]) -> Result<DomainData> {
    let mut samples = Array2::<f64>::zeros((keep.len(), data.dim()));
    let mut labels = Vec::with_capacity(keep.len());
    for (row, &i) in keep.iter().enumerate() {
        samples.row_mut(row).assign(&data.samples.row(i));
        labels.push(data.labels[i]);
    }
    Ok(DomainData::new(samples, labels, data.domain_id)?)
}

fn grid_score(
    labeled: &[DomainData],
    ws: &[TaskWeights],
    cfg: &HmtmlConfig,
    folds: usize,
    by_class: &[Vec<Vec<usize>>],
) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for f in 0..folds {
        let mut train = Vec::with_capacity(labeled.len());
        let mut holdout = Vec::with_capacity(labeled.len());
        for (data, classes) in labeled.iter().zip(by_class) {
            let out: Vec<usize> = classes.iter().map(|idx| idx[f]).collect();
            let keep: Vec<usize> = (0..data.num_samples())
                .filter(|i| !out.contains(i))
                .collect();
            train.push(subset(data, &keep)?);
            holdout.push(subset(data, &out)?);
        }
        let state = fit(&train, ws, cfg)?;
        for ((train_m, hold_m), u) in train.iter().zip(&holdout).zip(&state.factors) {
            let preds = knn_predict(
                train_m,
                hold_m.samples.view(),
                &FactorMetric { u },
                1,
            )?;
            hits += preds
                .iter()
                .zip(&hold_m.labels)
                .filter(|(p, t)| p == t)
                .count();
            total += preds.len();
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Joint grid search over `(gamma, gamma_m)`. `base_cfg` supplies every
/// other hyperparameter (rank, tolerances, seed).
pub fn loocv_select(
    labeled: &[DomainData],
    ws: &[TaskWeights],
    gammas: &[f64],
    gamma_ms: &[f64],
    base_cfg: &HmtmlConfig,
) -> Result<(f64, f64)> {
    if gammas.is_empty() || gamma_ms.is_empty() {
        bail!("hyperparameter grids must be nonempty");
    }
    let mut gammas: Vec<f64> = gammas.to_vec();
    let mut gamma_ms: Vec<f64> = gamma_ms.to_vec();
    gammas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    gamma_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if gammas.len() == 1 && gamma_ms.len() == 1 {
        return Ok((gammas[0], gamma_ms[0]));
    }

    let by_class: Vec<Vec<Vec<usize>>> = labeled
        .iter()
        .map(class_indices)
        .collect::<Result<_>>()?;
    let folds = by_class[0][0].len();
    if folds < 2 {
        bail!("leave-one-out needs at least 2 labeled samples per class");
    }
    if by_class.iter().any(|c| c[0].len() != folds) {
        bail!("all domains must share the same per-class label budget");
    }

    let points: Vec<(f64, f64)> = gammas
        .iter()
        .flat_map(|&g| gamma_ms.iter().map(move |&gm| (g, gm)))
        .collect();
    let scores: Vec<f64> = points
        .par_iter()
        .map(|&(g, gm)| {
            let cfg = HmtmlConfig {
                gamma: g,
                gamma_m: gm,
                ..base_cfg.clone()
            };
            grid_score(labeled, ws, &cfg, folds, &by_class)
        })
        .collect::<Result<_>>()?;

    // points are ordered by (gamma, gamma_m) ascending; strict improvement
    // keeps the earliest (smallest) point on ties
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(points[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::train_tasks;
    use crate::split::split_labeled;
    use crate::synth::{generate, SynthSpec};

    fn setup() -> (Vec<DomainData>, Vec<TaskWeights>) {
        let domains = generate(&SynthSpec {
            latent_dim: 3,
            dims: vec![5, 4],
            classes: 2,
            per_class: 8,
            noise: 0.3,
            seed: 21,
        })
        .unwrap();
        let splits = split_labeled(&domains, 3, 21).unwrap();
        let labeled: Vec<DomainData> = splits.into_iter().map(|(l, _)| l).collect();
        let ws = train_tasks(&labeled, 21).unwrap();
        (labeled, ws)
    }

    fn base_cfg() -> HmtmlConfig {
        HmtmlConfig {
            rank: 2,
            seed: 21,
            ..HmtmlConfig::default()
        }
    }

    #[test]
    fn single_point_returned_trivially() {
        let (labeled, ws) = setup();
        let chosen = loocv_select(&labeled, &ws, &[0.3], &[0.02], &base_cfg()).unwrap();
        assert_eq!(chosen, (0.3, 0.02));
    }

    #[test]
    fn dominant_point_chosen() {
        // an absurd sparsity weight drives every factor to zero, collapsing
        // all distances and hence the holdout accuracy; the sane value wins
        let (labeled, ws) = setup();
        let chosen =
            loocv_select(&labeled, &ws, &[0.1], &[0.01, 1e6], &base_cfg()).unwrap();
        assert_eq!(chosen, (0.1, 0.01));
    }

    #[test]
    fn deterministic() {
        let (labeled, ws) = setup();
        let a = loocv_select(&labeled, &ws, &[0.01, 1.0], &[0.01, 1.0], &base_cfg()).unwrap();
        let b = loocv_select(&labeled, &ws, &[1.0, 0.01], &[1.0, 0.01], &base_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_single_label_budget() {
        let domains = generate(&SynthSpec {
            latent_dim: 2,
            dims: vec![3, 3],
            classes: 2,
            per_class: 4,
            noise: 0.1,
            seed: 4,
        })
        .unwrap();
        let splits = split_labeled(&domains, 1, 4).unwrap();
        let labeled: Vec<DomainData> = splits.into_iter().map(|(l, _)| l).collect();
        let ws = train_tasks(&labeled, 4).unwrap();
        assert!(loocv_select(&labeled, &ws, &[0.1, 1.0], &[0.01], &base_cfg()).is_err());
    }
}

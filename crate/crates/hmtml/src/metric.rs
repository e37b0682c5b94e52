//! Learned metrics, Mahalanobis distances, and k-NN classification.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{HmtmlError, Result};
use crate::pairs::DomainData;
use crate::par;

/// A positive semidefinite `d x d` metric matrix.
#[derive(Debug, Clone)]
pub struct Metric {
    a: Array2<f64>,
}

impl Metric {
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// `A = U U^T`; rank at most the number of columns of `U`.
pub fn recover_metric(u: &Array2<f64>) -> Metric {
    Metric { a: u.dot(&u.t()) }
}

/// Distance functions usable by the k-NN classifier.
pub trait DistanceMetric: Sync {
    fn dist_sq(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64;
}

impl DistanceMetric for Metric {
    fn dist_sq(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        let diff = &x - &y;
        diff.dot(&self.a.dot(&diff))
    }
}

/// Factored form: distance computed as `||U^T (x - y)||^2`, O(dr) per pair.
pub struct FactorMetric<'a> {
    pub u: &'a Array2<f64>,
}

impl DistanceMetric for FactorMetric<'_> {
    fn dist_sq(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        let diff = &x - &y;
        let proj = self.u.t().dot(&diff);
        proj.dot(&proj)
    }
}

/// Plain squared Euclidean distance (identity metric; the untrained baseline).
pub struct EuclideanMetric;

impl DistanceMetric for EuclideanMetric {
    fn dist_sq(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// `(x - y)^T A (x - y)` given an explicit metric matrix.
pub fn mahalanobis_sq_a(x: ArrayView1<f64>, y: ArrayView1<f64>, a: &Metric) -> Result<f64> {
    if x.len() != a.dim() || y.len() != a.dim() {
        return Err(HmtmlError::DimensionMismatch {
            context: "mahalanobis_sq: vector length vs metric dim",
            expected: a.dim(),
            got: x.len().max(y.len()),
        });
    }
    Ok(a.dist_sq(x, y))
}

/// Same distance through the factor: `||U^T x - U^T y||^2`.
pub fn mahalanobis_sq_u(x: ArrayView1<f64>, y: ArrayView1<f64>, u: &Array2<f64>) -> Result<f64> {
    if x.len() != u.nrows() || y.len() != u.nrows() {
        return Err(HmtmlError::DimensionMismatch {
            context: "mahalanobis_sq: vector length vs factor rows",
            expected: u.nrows(),
            got: x.len().max(y.len()),
        });
    }
    Ok(FactorMetric { u }.dist_sq(x, y))
}

fn predict_one<M: DistanceMetric>(
    train: &DomainData,
    query: ArrayView1<f64>,
    metric: &M,
    k: usize,
) -> usize {
    let n = train.num_samples();
    let mut dists: Vec<(f64, usize)> = (0..n)
        .map(|i| (metric.dist_sq(train.samples.row(i), query), i))
        .collect();
    // stable on training index for equal distances
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let neighbors = &dists[..k];
    let c = train.num_classes();
    let mut votes = vec![0usize; c + 1];
    let mut summed = vec![0.0f64; c + 1];
    for &(dist, idx) in neighbors {
        let label = train.labels[idx];
        votes[label] += 1;
        summed[label] += dist;
    }
    // majority; ties by smallest summed distance, then lowest class id
    let mut best = 0usize;
    for class in 1..=c {
        if votes[class] == 0 {
            continue;
        }
        if best == 0
            || votes[class] > votes[best]
            || (votes[class] == votes[best] && summed[class] < summed[best])
        {
            best = class;
        }
    }
    best
}

/// Classifies each query row by majority vote among its k nearest training
/// samples under the given metric.
pub fn knn_predict<M: DistanceMetric>(
    train: &DomainData,
    queries: ArrayView2<f64>,
    metric: &M,
    k: usize,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(HmtmlError::invalid("k must be >= 1"));
    }
    if k > train.num_samples() {
        return Err(HmtmlError::invalid(format!(
            "k = {} exceeds training size {}",
            k,
            train.num_samples()
        )));
    }
    if queries.ncols() != train.dim() {
        return Err(HmtmlError::DimensionMismatch {
            context: "knn_predict: query dim vs training dim",
            expected: train.dim(),
            got: queries.ncols(),
        });
    }
    Ok(par::map_indexed(queries.nrows(), |q| {
        predict_one(train, queries.row(q), metric, k)
    }))
}

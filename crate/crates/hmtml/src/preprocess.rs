//! Kernel PCA feature preprocessing with a Gaussian kernel, plus a linear
//! kernel degenerate path for text-style data.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{HmtmlError, Result};
use crate::linalg::symmetric_eigen;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Gaussian { omega: f64 },
    Linear,
}

/// Bandwidth choice for the Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaMode {
    /// Mean of the plain (not squared) distances over all training pairs.
    MeanPairwiseDistance,
    Fixed(f64),
}

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentSelection {
    Dim(usize),
    /// Smallest q whose cumulative eigenvalue mass reaches this fraction.
    Energy(f64),
}

#[derive(Debug, Clone)]
pub struct KpcaModel {
    train: Array2<f64>,
    kernel: Kernel,
    /// `N x q` eigenvectors of the centered Gram, unit columns.
    alphas: Array2<f64>,
    /// Retained eigenvalues, descending, all > 1e-12.
    eigvals: Vec<f64>,
    /// Column means of the uncentered training Gram.
    col_means: Array1<f64>,
    grand_mean: f64,
}

fn kernel_value(kernel: Kernel, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    match kernel {
        Kernel::Gaussian { omega } => {
            let d2: f64 = x
                .iter()
                .zip(y.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (-d2 / (2.0 * omega * omega)).exp()
        }
        Kernel::Linear => x.dot(&y),
    }
}

fn mean_pairwise_distance(samples: ArrayView2<f64>) -> f64 {
    let n = samples.nrows();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = samples
                .row(i)
                .iter()
                .zip(samples.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += d2.sqrt();
            count += 1;
        }
    }
    total / count as f64
}

/// Fits KPCA on training samples.
///
/// The Gram is double-centered, eigendecomposed, and the top components are
/// kept according to `selection` (only eigenvalues above 1e-12 are eligible;
/// `Dim(q)` is clamped to the effective rank).
pub fn kpca_fit(
    samples: ArrayView2<f64>,
    selection: ComponentSelection,
    kernel_kind: Kernel,
    omega_mode: OmegaMode,
) -> Result<KpcaModel> {
    let n = samples.nrows();
    if n < 2 {
        return Err(HmtmlError::invalid("KPCA needs at least 2 samples"));
    }
    if let ComponentSelection::Dim(q) = selection {
        if q == 0 || q > n {
            return Err(HmtmlError::invalid(format!(
                "requested q = {} outside 1..={}",
                q, n
            )));
        }
    }
    if let ComponentSelection::Energy(e) = selection {
        if !(e > 0.0 && e <= 1.0) {
            return Err(HmtmlError::invalid("energy fraction must be in (0, 1]"));
        }
    }
    let kernel = match (kernel_kind, omega_mode) {
        (Kernel::Gaussian { .. }, OmegaMode::MeanPairwiseDistance) => {
            let omega = mean_pairwise_distance(samples);
            if omega <= 1e-12 {
                return Err(HmtmlError::invalid(
                    "all training samples identical: zero kernel bandwidth",
                ));
            }
            Kernel::Gaussian { omega }
        }
        (Kernel::Gaussian { .. }, OmegaMode::Fixed(omega)) => {
            if omega <= 0.0 {
                return Err(HmtmlError::invalid("kernel bandwidth must be positive"));
            }
            Kernel::Gaussian { omega }
        }
        (Kernel::Linear, _) => Kernel::Linear,
    };

    // Gram rows in parallel, assembled in index order
    let rows = par::map_indexed(n, |i| {
        (0..n)
            .map(|j| kernel_value(kernel, samples.row(i), samples.row(j)))
            .collect::<Vec<f64>>()
    });
    let mut gram = Array2::<f64>::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            gram[[i, j]] = v;
        }
    }
    let col_means = gram.mean_axis(ndarray::Axis(0)).expect("n >= 2");
    let grand_mean = col_means.mean().expect("n >= 2");
    let mut centered = gram.clone();
    for i in 0..n {
        for j in 0..n {
            centered[[i, j]] -= col_means[i] + col_means[j] - grand_mean;
        }
    }

    let (eigvals, eigvecs) = symmetric_eigen(&centered)?;
    let rank = eigvals.iter().take_while(|&&l| l > 1e-12).count();
    if rank == 0 {
        return Err(HmtmlError::invalid("centered kernel matrix has rank 0"));
    }
    let q = match selection {
        ComponentSelection::Dim(q) => q.min(rank),
        ComponentSelection::Energy(e) => {
            let total: f64 = eigvals.iter().take(rank).sum();
            let mut acc = 0.0;
            let mut q = rank;
            for (i, &l) in eigvals.iter().take(rank).enumerate() {
                acc += l;
                if acc / total >= e - 1e-12 {
                    q = i + 1;
                    break;
                }
            }
            q
        }
    };
    let alphas = eigvecs.slice(ndarray::s![.., ..q]).to_owned();
    Ok(KpcaModel {
        train: samples.to_owned(),
        kernel,
        alphas,
        eigvals: eigvals.iter().take(q).copied().collect(),
        col_means,
        grand_mean,
    })
}

impl KpcaModel {
    pub fn num_components(&self) -> usize {
        self.eigvals.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    /// Features of the training set itself (column i has variance
    /// `lambda_i / N` under the fixed scaling convention).
    pub fn train_features(&self) -> Array2<f64> {
        let n = self.train.nrows();
        let q = self.num_components();
        let mut out = Array2::<f64>::zeros((n, q));
        for i in 0..q {
            let s = self.eigvals[i].sqrt();
            for row in 0..n {
                out[[row, i]] = s * self.alphas[[row, i]];
            }
        }
        out
    }

    /// Projects new samples onto the retained components.
    pub fn transform(&self, samples: ArrayView2<f64>) -> Result<Array2<f64>> {
        if samples.ncols() != self.train.ncols() {
            return Err(HmtmlError::DimensionMismatch {
                context: "kpca_transform: feature dim vs training dim",
                expected: self.train.ncols(),
                got: samples.ncols(),
            });
        }
        let n = self.train.nrows();
        let q = self.num_components();
        let rows = par::map_indexed(samples.nrows(), |s| {
            let x = samples.row(s);
            let k: Vec<f64> = (0..n)
                .map(|j| kernel_value(self.kernel, x, self.train.row(j)))
                .collect();
            let row_mean = k.iter().sum::<f64>() / n as f64;
            let mut feats = vec![0.0f64; q];
            for (i, f) in feats.iter_mut().enumerate() {
                let mut proj = 0.0;
                for j in 0..n {
                    let centered =
                        k[j] - self.col_means[j] - row_mean + self.grand_mean;
                    proj += centered * self.alphas[[j, i]];
                }
                *f = proj / self.eigvals[i].sqrt();
            }
            feats
        });
        let mut out = Array2::<f64>::zeros((samples.nrows(), q));
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        Ok(out)
    }
}

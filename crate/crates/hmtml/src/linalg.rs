//! Small dense linear-algebra helpers: a cyclic Jacobi eigensolver for
//! symmetric matrices and a few norm utilities. The matrices involved
//! (kernel Grams, d x d metrics) are small enough that Jacobi is plenty,
//! and it keeps the crate free of a LAPACK link dependency.

use ndarray::{Array1, Array2};

use crate::error::{HmtmlError, Result};

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(HmtmlError::DimensionMismatch {
            context: "symmetric_eigen: square matrix required",
            expected: n,
            got: a.ncols(),
        });
    }
    let sym_err = a
        .iter()
        .zip(a.t().iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0_f64, f64::max);
    let scale = a.iter().map(|x| x.abs()).fold(0.0_f64, f64::max).max(1.0);
    if sym_err > 1e-8 * scale {
        return Err(HmtmlError::invalid("symmetric_eigen: matrix not symmetric"));
    }

    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);

    let off = |m: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[[i, j]] * m[[i, j]];
            }
        }
        s
    };
    let fro = m.iter().map(|x| x * x).sum::<f64>().max(1e-300);

    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        if off(&m) <= 1e-24 * fro {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // rotate rows/cols p and q
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let eigvals = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut eigvecs = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            eigvecs[[k, dst]] = v[[k, src]];
        }
    }
    Ok((eigvals, eigvecs))
}

/// Frobenius inner product of two matrices.
pub fn frob_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Squared Frobenius norm.
pub fn frob_norm_sq(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    #[test]
    fn eigen_diag() {
        let a = arr2(&[[2.0, 0.0], [0.0, 5.0]]);
        let (vals, _) = symmetric_eigen(&a).unwrap();
        assert_abs_diff_eq!(vals[0], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn eigen_reconstructs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 8;
        let b = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
        let a = b.dot(&b.t());
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        let lam = Array2::from_diag(&vals);
        let rec = vecs.dot(&lam).dot(&vecs.t());
        for (x, y) in a.iter().zip(rec.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
        // PSD input: eigenvalues nonnegative
        assert!(vals.iter().all(|&l| l > -1e-10));
    }

    #[test]
    fn rejects_nonsymmetric() {
        let a = arr2(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(symmetric_eigen(&a).is_err());
    }
}

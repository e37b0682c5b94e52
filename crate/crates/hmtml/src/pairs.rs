//! Pair construction and the per-domain empirical loss under the
//! generalized log loss (GL-loss), expressed through the factor matrix U.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HmtmlError, Result};
use crate::par;

/// One domain's labeled samples.
#[derive(Debug, Clone)]
pub struct DomainData {
    /// `N x d` feature matrix.
    pub samples: Array2<f64>,
    /// Class ids in `1..=C`.
    pub labels: Vec<usize>,
    pub domain_id: usize,
}

impl DomainData {
    pub fn new(samples: Array2<f64>, labels: Vec<usize>, domain_id: usize) -> Result<Self> {
        if samples.nrows() != labels.len() {
            return Err(HmtmlError::DimensionMismatch {
                context: "DomainData: samples vs labels",
                expected: samples.nrows(),
                got: labels.len(),
            });
        }
        if labels.iter().any(|&y| y == 0) {
            return Err(HmtmlError::invalid("class labels must be in 1..=C"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(HmtmlError::invalid("samples contain non-finite values"));
        }
        Ok(DomainData {
            samples,
            labels,
            domain_id,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Sample-pair differences with similarity signs.
#[derive(Debug, Clone)]
pub struct PairSet {
    /// `N' x d` matrix of differences `x_i - x_j`.
    diffs: Array2<f64>,
    /// `+1` for same-class pairs, `-1` otherwise.
    signs: Vec<f64>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.diffs.ncols()
    }

    pub fn diffs(&self) -> ArrayView2<'_, f64> {
        self.diffs.view()
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }
}

/// Builds all `N(N-1)/2` unordered pairs in lexicographic `(i, j)` order.
pub fn generate_pairs(data: &DomainData) -> Result<PairSet> {
    generate_pairs_capped(data, None, 0)
}

/// Like [`generate_pairs`], optionally subsampling to at most `cap` pairs
/// (uniform, seeded). The exhaustive set is the default behavior.
pub fn generate_pairs_capped(
    data: &DomainData,
    cap: Option<usize>,
    seed: u64,
) -> Result<PairSet> {
    let n = data.num_samples();
    if n < 2 {
        return Err(HmtmlError::invalid("pair generation needs >= 2 samples"));
    }
    let mut keep: Vec<(usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            keep.push((i, j));
        }
    }
    if let Some(cap) = cap {
        if cap < keep.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            keep.shuffle(&mut rng);
            keep.truncate(cap);
            keep.sort_unstable();
        }
    }
    let d = data.dim();
    let mut diffs = Array2::<f64>::zeros((keep.len(), d));
    let mut signs = Vec::with_capacity(keep.len());
    for (row, &(i, j)) in keep.iter().enumerate() {
        let xi = data.samples.row(i);
        let xj = data.samples.row(j);
        for c in 0..d {
            diffs[[row, c]] = xi[c] - xj[c];
        }
        signs.push(if data.labels[i] == data.labels[j] {
            1.0
        } else {
            -1.0
        });
    }
    Ok(PairSet { diffs, signs })
}

/// Generalized log loss `g(z) = (1/rho) log(1 + exp(-rho z))`.
///
/// Evaluated through the shifted form `max(-z, 0) + (1/rho) log1p(exp(-rho|z|))`
/// so large `|rho z|` neither overflows nor loses the linear part.
pub fn gl_loss(z: f64, rho: f64) -> f64 {
    debug_assert!(rho > 0.0);
    (-z).max(0.0) + (-rho * z.abs()).exp().ln_1p() / rho
}

/// `sigmoid(-rho z) = 1 / (1 + exp(rho z))`, the weight each pair gets in the
/// loss gradient.
fn pair_weight(z: f64, rho: f64) -> f64 {
    if z >= 0.0 {
        let e = (-rho * z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + (rho * z).exp())
    }
}

fn check_dims(u: &Array2<f64>, pairs: &PairSet) -> Result<()> {
    if pairs.is_empty() {
        return Err(HmtmlError::invalid("empty pair set"));
    }
    if u.nrows() != pairs.dim() {
        return Err(HmtmlError::DimensionMismatch {
            context: "factor matrix rows vs pair difference length",
            expected: pairs.dim(),
            got: u.nrows(),
        });
    }
    Ok(())
}

fn chunk_loss_grad(
    u: &Array2<f64>,
    pairs: &PairSet,
    rho: f64,
    range: std::ops::Range<usize>,
    want_grad: bool,
) -> (f64, Option<Array2<f64>>) {
    let d = u.nrows();
    let r = u.ncols();
    let diffs = pairs.diffs.slice(ndarray::s![range.clone(), ..]);
    // Z rows are delta_k^T U; z_k = y_k (1 - ||row_k||^2)
    let proj = diffs.dot(u);
    let mut loss = 0.0;
    let mut grad = want_grad.then(|| Array2::<f64>::zeros((d, r)));
    let mut weights = Array1::<f64>::zeros(range.len());
    for (local, k) in range.clone().enumerate() {
        let row = proj.row(local);
        let z = pairs.signs[k] * (1.0 - row.dot(&row));
        loss += gl_loss(z, rho);
        weights[local] = 2.0 * pairs.signs[k] * pair_weight(z, rho);
    }
    if let Some(g) = grad.as_mut() {
        // sum_k w_k delta_k (delta_k^T U) without forming delta delta^T
        let weighted = &proj * &weights.insert_axis(Axis(1));
        *g = diffs.t().dot(&weighted);
    }
    (loss, grad)
}

fn reduce(
    u: &Array2<f64>,
    pairs: &PairSet,
    want_grad: bool,
    partials: Vec<(f64, Option<Array2<f64>>)>,
) -> (f64, Option<Array2<f64>>) {
    let n = pairs.len() as f64;
    let mut loss = 0.0;
    let mut grad = want_grad.then(|| Array2::<f64>::zeros((u.nrows(), u.ncols())));
    for (l, g) in partials {
        loss += l;
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            *acc += &g;
        }
    }
    (loss / n, grad.map(|g| g / n))
}

/// Mean GL-loss over the pair set with `z_k = y_k (1 - ||U^T delta_k||^2)`.
pub fn empirical_loss(u: &Array2<f64>, pairs: &PairSet, rho: f64) -> Result<f64> {
    check_dims(u, pairs)?;
    let partials = par::map_ranges(pairs.len(), par::CHUNK, |range| {
        chunk_loss_grad(u, pairs, rho, range, false)
    });
    Ok(reduce(u, pairs, false, partials).0)
}

/// Gradient of [`empirical_loss`] w.r.t. `U`.
pub fn loss_gradient(u: &Array2<f64>, pairs: &PairSet, rho: f64) -> Result<Array2<f64>> {
    Ok(loss_and_gradient(u, pairs, rho)?.1)
}

/// Loss and gradient in one pass over the pairs.
pub fn loss_and_gradient(
    u: &Array2<f64>,
    pairs: &PairSet,
    rho: f64,
) -> Result<(f64, Array2<f64>)> {
    check_dims(u, pairs)?;
    let partials = par::map_ranges(pairs.len(), par::CHUNK, |range| {
        chunk_loss_grad(u, pairs, rho, range, true)
    });
    let (loss, grad) = reduce(u, pairs, true, partials);
    Ok((loss, grad.expect("gradient requested")))
}

/// Sequential reference path for [`loss_and_gradient`]; used by the benches
/// to compare against the rayon path. Same chunking, same results.
pub fn loss_and_gradient_seq(
    u: &Array2<f64>,
    pairs: &PairSet,
    rho: f64,
) -> Result<(f64, Array2<f64>)> {
    check_dims(u, pairs)?;
    let partials = par::map_ranges_seq(pairs.len(), par::CHUNK, |range| {
        chunk_loss_grad(u, pairs, rho, range, true)
    });
    let (loss, grad) = reduce(u, pairs, true, partials);
    Ok((loss, grad.expect("gradient requested")))
}

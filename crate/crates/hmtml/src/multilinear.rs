//! Dense multilinear algebra: mode products, matricization, identity and
//! rank-1 tensors.
//!
//! These operations serve two purposes: they are the brute-force oracle the
//! structured solver formulas are tested against, and they handle the small
//! transformation tensors directly. Tensors here are dense and should stay
//! small (the solver itself never materializes the full coupling tensor).
//!
//! Storage is flat with the first index varying fastest. Matricization
//! follows the Kolda unfolding: for mode `m`, entry `(i_1, ..., i_M)` lands
//! in row `i_m` and column `sum_{k != m} i_k * prod_{l < k, l != m} I_l`
//! (all indices zero-based).

use ndarray::{Array1, Array2};

use crate::error::{HmtmlError, Result};

/// A dense M-way array.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// A mode-m unfolding of a tensor.
#[derive(Debug, Clone)]
pub struct Matricization {
    /// Mode the tensor was unfolded along (zero-based).
    pub mode: usize,
    /// `I_m x prod_{k != m} I_k` matrix.
    pub matrix: Array2<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(HmtmlError::invalid(
                "tensor shape must be nonempty with positive extents",
            ));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(HmtmlError::DimensionMismatch {
                context: "DenseTensor::new: data length",
                expected: len,
                got: data.len(),
            });
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        DenseTensor::new(shape, vec![0.0; len])
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        let mut stride = 1;
        for (i, &e) in idx.iter().zip(&self.shape) {
            debug_assert!(*i < e);
            off += i * stride;
            stride *= e;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// Iterates all multi-indices in storage (first-index-fastest) order.
    pub fn indices(&self) -> IndexIter {
        IndexIter {
            shape: self.shape.clone(),
            next: Some(vec![0; self.shape.len()]),
        }
    }
}

pub struct IndexIter {
    shape: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for IndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carried = true;
        for (i, &e) in succ.iter_mut().zip(&self.shape) {
            *i += 1;
            if *i < e {
                carried = false;
                break;
            }
            *i = 0;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(current)
    }
}

fn check_mode(t: &DenseTensor, mode: usize) -> Result<()> {
    if mode >= t.order() {
        return Err(HmtmlError::invalid(format!(
            "mode {} out of range for order-{} tensor",
            mode,
            t.order()
        )));
    }
    Ok(())
}

/// Column index of a multi-index in the mode-m unfolding.
fn unfold_col(idx: &[usize], shape: &[usize], mode: usize) -> usize {
    let mut col = 0;
    let mut stride = 1;
    for k in 0..shape.len() {
        if k == mode {
            continue;
        }
        col += idx[k] * stride;
        stride *= shape[k];
    }
    col
}

/// Unfolds `t` along `mode` into an `I_m x prod_{k != m} I_k` matrix.
pub fn matricize(t: &DenseTensor, mode: usize) -> Result<Matricization> {
    check_mode(t, mode)?;
    let rows = t.shape[mode];
    let cols = t.len() / rows;
    let mut matrix = Array2::<f64>::zeros((rows, cols));
    for idx in t.indices() {
        matrix[[idx[mode], unfold_col(&idx, &t.shape, mode)]] = t.get(&idx);
    }
    Ok(Matricization { mode, matrix })
}

/// Folds a matricization back into a tensor of the given shape.
pub fn dematricize(m: &Matricization, shape: &[usize]) -> Result<DenseTensor> {
    if m.mode >= shape.len() {
        return Err(HmtmlError::invalid("dematricize: mode out of range"));
    }
    let total: usize = shape.iter().product();
    let rows = shape[m.mode];
    let cols = total / rows.max(1);
    if m.matrix.nrows() != rows || m.matrix.ncols() != cols {
        return Err(HmtmlError::invalid(format!(
            "dematricize: shape {:?} inconsistent with {}x{} matrix at mode {}",
            shape,
            m.matrix.nrows(),
            m.matrix.ncols(),
            m.mode
        )));
    }
    let mut t = DenseTensor::zeros(shape.to_vec())?;
    for idx in t.indices() {
        let v = m.matrix[[idx[m.mode], unfold_col(&idx, shape, m.mode)]];
        t.set(&idx, v);
    }
    Ok(t)
}

/// Mode-m product: contracts index m of `t` with the columns of `u`.
///
/// The result replaces extent `I_m` with `u.nrows()`. Computed as
/// `B_(m) = U A_(m)` and folded back.
pub fn mode_product(t: &DenseTensor, u: &Array2<f64>, mode: usize) -> Result<DenseTensor> {
    check_mode(t, mode)?;
    if u.ncols() != t.shape[mode] {
        return Err(HmtmlError::DimensionMismatch {
            context: "mode_product: matrix columns vs tensor extent",
            expected: t.shape[mode],
            got: u.ncols(),
        });
    }
    let unfolded = matricize(t, mode)?;
    let product = u.dot(&unfolded.matrix);
    let mut shape = t.shape.clone();
    shape[mode] = u.nrows();
    dematricize(
        &Matricization {
            mode,
            matrix: product,
        },
        &shape,
    )
}

/// Applies one matrix per mode: `t x_1 U_1 x_2 U_2 ... x_M U_M`.
pub fn multi_mode_product(t: &DenseTensor, us: &[Array2<f64>]) -> Result<DenseTensor> {
    if us.len() != t.order() {
        return Err(HmtmlError::DimensionMismatch {
            context: "multi_mode_product: one matrix per mode",
            expected: t.order(),
            got: us.len(),
        });
    }
    let mut acc = t.clone();
    for (mode, u) in us.iter().enumerate() {
        acc = mode_product(&acc, u, mode)?;
    }
    Ok(acc)
}

/// Contracted mode-m product with a vector; drops mode m from the order.
pub fn contracted_mode_product(
    t: &DenseTensor,
    v: &Array1<f64>,
    mode: usize,
) -> Result<DenseTensor> {
    check_mode(t, mode)?;
    if t.order() < 2 {
        return Err(HmtmlError::invalid(
            "contracted_mode_product requires order >= 2",
        ));
    }
    if v.len() != t.shape[mode] {
        return Err(HmtmlError::DimensionMismatch {
            context: "contracted_mode_product: vector length vs tensor extent",
            expected: t.shape[mode],
            got: v.len(),
        });
    }
    let out_shape: Vec<usize> = t
        .shape
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != mode)
        .map(|(_, &e)| e)
        .collect();
    let mut out = DenseTensor::zeros(out_shape)?;
    let mut full = vec![0usize; t.order()];
    for idx in out.indices() {
        for (k, slot) in full.iter_mut().enumerate() {
            *slot = match k.cmp(&mode) {
                std::cmp::Ordering::Less => idx[k],
                std::cmp::Ordering::Equal => 0,
                std::cmp::Ordering::Greater => idx[k - 1],
            };
        }
        let mut s = 0.0;
        for im in 0..t.shape[mode] {
            full[mode] = im;
            s += t.get(&full) * v[im];
        }
        out.set(&idx, s);
    }
    Ok(out)
}

/// Sum of squared entries.
pub fn frobenius_norm_sq(t: &DenseTensor) -> f64 {
    t.data.iter().map(|x| x * x).sum()
}

/// Superdiagonal tensor of order `order` with ones at `(i, ..., i)`.
pub fn identity_tensor(r: usize, order: usize) -> DenseTensor {
    assert!(r >= 1 && order >= 2, "identity tensor needs r >= 1, M >= 2");
    let mut t = DenseTensor::zeros(vec![r; order]).expect("valid shape");
    let idx = vec![0usize; order];
    let mut idx = idx;
    for i in 0..r {
        idx.iter_mut().for_each(|x| *x = i);
        t.set(&idx, 1.0);
    }
    t
}

/// Outer product of the given vectors: entry `(i_1, ..., i_M) = prod w_m(i_m)`.
pub fn rank1_tensor(vectors: &[Array1<f64>]) -> DenseTensor {
    assert!(
        vectors.len() >= 2 && vectors.iter().all(|v| !v.is_empty()),
        "rank-1 tensor needs >= 2 nonempty vectors"
    );
    let shape: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
    let mut t = DenseTensor::zeros(shape).expect("valid shape");
    for idx in t.indices() {
        let v = idx
            .iter()
            .zip(vectors)
            .map(|(&i, w)| w[i])
            .product::<f64>();
        t.set(&idx, v);
    }
    t
}

//! Sparse-random ECOC task construction and linear base-classifier training.
//!
//! The codebook turns a C-class problem into P binary tasks; each task is
//! trained per domain with an L2-regularized hinge objective and the weight
//! vectors are normalized to unit length. The resulting `W_m` matrices are
//! what couples the domains in the solver, so the same codebook instance must
//! be shared by all domains and task columns must stay aligned across them.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HmtmlError, Result};
use crate::pairs::DomainData;
use crate::par;

/// `C x P` coding matrix with entries in `{-1, 0, +1}`.
#[derive(Debug, Clone)]
pub struct Codebook {
    code: Array2<i8>,
    seed: u64,
}

impl Codebook {
    pub fn num_classes(&self) -> usize {
        self.code.nrows()
    }

    pub fn num_tasks(&self) -> usize {
        self.code.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Code entry for class `class` (1-based) in task `p` (0-based).
    pub fn entry(&self, class: usize, p: usize) -> i8 {
        self.code[[class - 1, p]]
    }

    /// Checks the structural invariants: no all-zero row or column, every
    /// column split (>= one +1 and one -1), and pairwise-distinct columns
    /// whenever the pool of valid columns is large enough to allow it.
    pub fn validate(&self) -> Result<()> {
        let (c, p) = (self.num_classes(), self.num_tasks());
        for i in 0..c {
            if (0..p).all(|j| self.code[[i, j]] == 0) {
                return Err(HmtmlError::CodebookGeneration(format!(
                    "class {} participates in no task",
                    i + 1
                )));
            }
        }
        for j in 0..p {
            let has_pos = (0..c).any(|i| self.code[[i, j]] == 1);
            let has_neg = (0..c).any(|i| self.code[[i, j]] == -1);
            if !has_pos || !has_neg {
                return Err(HmtmlError::CodebookGeneration(format!(
                    "task {} lacks a positive or negative class",
                    j
                )));
            }
        }
        if distinct_columns_feasible(c, p) {
            for j in 0..p {
                for j2 in (j + 1)..p {
                    if (0..c).all(|i| self.code[[i, j]] == self.code[[i, j2]]) {
                        return Err(HmtmlError::CodebookGeneration(format!(
                            "tasks {} and {} are identical",
                            j, j2
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Number of distinct valid sparse-ECOC columns: 3^C - 2^(C+1) + 1.
fn valid_column_count(c: usize) -> u128 {
    if c >= 80 {
        return u128::MAX;
    }
    let pow3 = 3u128.saturating_pow(c as u32);
    let pow2 = 2u128.saturating_pow(c as u32 + 1);
    pow3.saturating_sub(pow2).saturating_add(1)
}

fn distinct_columns_feasible(c: usize, p: usize) -> bool {
    valid_column_count(c) >= p as u128
}

/// Code length `P = 10 ceil(1.5 log2 C)`.
pub fn num_tasks(c: usize) -> Result<usize> {
    num_tasks_with_base(c, 2.0)
}

/// Same formula with a configurable logarithm base.
pub fn num_tasks_with_base(c: usize, base: f64) -> Result<usize> {
    if c < 2 {
        return Err(HmtmlError::invalid("class count must be >= 2"));
    }
    if !(base > 1.0) {
        return Err(HmtmlError::invalid("log base must exceed 1"));
    }
    let x = 1.5 * (c as f64).log(base);
    Ok(10 * (x - 1e-12).ceil() as usize)
}

/// Draws a sparse random codebook: entries 0 with probability 1/2, each of
/// +1/-1 with probability 1/4. Columns violating the invariants are
/// resampled (bounded); deterministic given the seed.
pub fn generate_codebook(c: usize, p: usize, seed: u64) -> Result<Codebook> {
    if c < 2 || p < 1 {
        return Err(HmtmlError::invalid("codebook needs C >= 2 and P >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let need_distinct = distinct_columns_feasible(c, p);
    const BOOK_ATTEMPTS: usize = 200;
    const COLUMN_ATTEMPTS: usize = 2000;

    for _ in 0..BOOK_ATTEMPTS {
        let mut cols: Vec<Vec<i8>> = Vec::with_capacity(p);
        let mut ok = true;
        'cols: for _ in 0..p {
            for _ in 0..COLUMN_ATTEMPTS {
                let col: Vec<i8> = (0..c)
                    .map(|_| {
                        let u: f64 = rng.gen();
                        if u < 0.5 {
                            0
                        } else if u < 0.75 {
                            1
                        } else {
                            -1
                        }
                    })
                    .collect();
                let has_pos = col.iter().any(|&e| e == 1);
                let has_neg = col.iter().any(|&e| e == -1);
                if !has_pos || !has_neg {
                    continue;
                }
                if need_distinct && cols.iter().any(|existing| existing == &col) {
                    continue;
                }
                cols.push(col);
                continue 'cols;
            }
            ok = false;
            break;
        }
        if !ok {
            continue;
        }
        // reject books leaving some class out of every task
        let row_covered =
            (0..c).all(|i| cols.iter().any(|col| col[i] != 0));
        if !row_covered {
            continue;
        }
        let mut code = Array2::<i8>::zeros((c, p));
        for (j, col) in cols.iter().enumerate() {
            for (i, &e) in col.iter().enumerate() {
                code[[i, j]] = e;
            }
        }
        let book = Codebook { code, seed };
        book.validate()?;
        return Ok(book);
    }
    Err(HmtmlError::CodebookGeneration(format!(
        "could not satisfy invariants for C={}, P={} after bounded resampling",
        c, p
    )))
}

/// Unit-norm weight vectors of the P base classifiers for one domain.
#[derive(Debug, Clone)]
pub struct TaskWeights {
    /// `d x P`; column p is the weight vector of task p.
    pub weights: Array2<f64>,
}

impl TaskWeights {
    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_tasks(&self) -> usize {
        self.weights.ncols()
    }
}

/// Bookkeeping from multi-domain base training.
#[derive(Debug, Clone, Default)]
pub struct EncodingMeta {
    /// Original codebook column indices that survived.
    pub kept: Vec<usize>,
    /// Columns dropped because some domain had only one side represented.
    pub dropped: Vec<usize>,
    /// `(domain index, original column)` pairs whose trained weights were
    /// degenerate and got replaced with a seeded random unit vector.
    pub replaced: Vec<(usize, usize)>,
}

enum TaskResult {
    Trained(Array1<f64>),
    Replaced(Array1<f64>),
    OneSided,
}

/// L2-regularized hinge objective: `0.5 ||w||^2 + (penalty/n) sum hinge`.
fn svm_objective(w: &Array1<f64>, x: &Array2<f64>, y: &[f64], penalty: f64) -> f64 {
    let margins = x.dot(w);
    let hinge: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &yi)| (1.0 - yi * m).max(0.0))
        .sum();
    0.5 * w.dot(w) + penalty * hinge / y.len() as f64
}

/// Deterministic batch subgradient descent on the hinge objective.
fn train_linear_svm(x: &Array2<f64>, y: &[f64], penalty: f64) -> Array1<f64> {
    let n = y.len();
    let d = x.ncols();
    let mut w = Array1::<f64>::zeros(d);
    let mut best_w = w.clone();
    let mut best_obj = svm_objective(&w, x, y, penalty);
    let mut prev_obj = best_obj;
    const MAX_ITERS: usize = 3000;
    const TOL: f64 = 1e-6;
    let mut stall = 0;
    for t in 1..=MAX_ITERS {
        let margins = x.dot(&w);
        let mut sub = w.clone();
        for (i, (&m, &yi)) in margins.iter().zip(y).enumerate() {
            if yi * m < 1.0 {
                sub.scaled_add(-penalty * yi / n as f64, &x.row(i));
            }
        }
        // objective is 1-strongly convex; classic 1/t step
        let eta = 1.0 / t as f64;
        w.scaled_add(-eta, &sub);
        let obj = svm_objective(&w, x, y, penalty);
        if obj < best_obj {
            best_obj = obj;
            best_w = w.clone();
        }
        if (prev_obj - obj).abs() < TOL * best_obj.abs().max(1.0) {
            stall += 1;
            if stall >= 5 {
                break;
            }
        } else {
            stall = 0;
        }
        prev_obj = obj;
    }
    best_w
}

fn random_unit_vector(d: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    loop {
        let v = Array1::from_iter((0..d).map(|_| rng.gen_range(-1.0..1.0_f64)));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

fn train_one_task(
    data: &DomainData,
    code: &Codebook,
    p: usize,
    penalty: f64,
    seed: u64,
) -> TaskResult {
    // classes coded 0 sit out of task p
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for (i, &label) in data.labels.iter().enumerate() {
        let e = code.entry(label, p);
        if e != 0 {
            rows.push(i);
            ys.push(e as f64);
        }
    }
    let has_pos = ys.iter().any(|&y| y > 0.0);
    let has_neg = ys.iter().any(|&y| y < 0.0);
    if !has_pos || !has_neg {
        return TaskResult::OneSided;
    }
    let d = data.dim();
    let mut x = Array2::<f64>::zeros((rows.len(), d));
    for (r, &i) in rows.iter().enumerate() {
        x.row_mut(r).assign(&data.samples.row(i));
    }
    let w = train_linear_svm(&x, &ys, penalty);
    let norm = w.dot(&w).sqrt();
    if norm < 1e-12 {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed ^ ((data.domain_id as u64) << 32) ^ p as u64,
        );
        TaskResult::Replaced(random_unit_vector(d, &mut rng))
    } else {
        TaskResult::Trained(w / norm)
    }
}

/// Trains all P base classifiers for one domain. One-sided tasks come back
/// as `None` in the column list so callers can drop them consistently.
fn train_domain(
    data: &DomainData,
    code: &Codebook,
    penalty: f64,
    seed: u64,
) -> Vec<TaskResult> {
    par::map_indexed(code.num_tasks(), |p| {
        train_one_task(data, code, p, penalty, seed)
    })
}

/// Trains base classifiers for a single domain against a codebook.
///
/// Columns that end up one-sided for this domain are reported in the
/// metadata and dropped from the returned matrix. For multi-domain use,
/// prefer [`train_base_classifiers_multi`], which drops consistently
/// across every domain.
pub fn train_base_classifiers(
    data: &DomainData,
    code: &Codebook,
    penalty: f64,
    seed: u64,
) -> Result<(TaskWeights, EncodingMeta)> {
    let (mut weights, meta) =
        train_base_classifiers_multi(std::slice::from_ref(data), code, penalty, seed)?;
    Ok((weights.pop().expect("one domain"), meta))
}

/// Trains base classifiers for every domain with a shared codebook.
///
/// A column one-sided in any domain is dropped in all of them, keeping task
/// indices aligned across `W_m`.
pub fn train_base_classifiers_multi(
    domains: &[DomainData],
    code: &Codebook,
    penalty: f64,
    seed: u64,
) -> Result<(Vec<TaskWeights>, EncodingMeta)> {
    if domains.is_empty() {
        return Err(HmtmlError::invalid("no domains given"));
    }
    for d in domains {
        if d.num_classes() > code.num_classes() {
            return Err(HmtmlError::invalid(format!(
                "domain {} has label {} outside codebook classes {}",
                d.domain_id,
                d.num_classes(),
                code.num_classes()
            )));
        }
    }
    let per_domain: Vec<Vec<TaskResult>> = domains
        .iter()
        .map(|d| train_domain(d, code, penalty, seed))
        .collect();

    let p = code.num_tasks();
    let mut meta = EncodingMeta::default();
    for col in 0..p {
        if per_domain
            .iter()
            .any(|res| matches!(res[col], TaskResult::OneSided))
        {
            meta.dropped.push(col);
        } else {
            meta.kept.push(col);
        }
    }
    if meta.kept.is_empty() {
        return Err(HmtmlError::invalid(
            "every codebook column was one-sided on the given data",
        ));
    }
    let mut out = Vec::with_capacity(domains.len());
    for (m, results) in per_domain.iter().enumerate() {
        let d = domains[m].dim();
        let mut w = Array2::<f64>::zeros((d, meta.kept.len()));
        for (dst, &col) in meta.kept.iter().enumerate() {
            match &results[col] {
                TaskResult::Trained(v) => w.column_mut(dst).assign(v),
                TaskResult::Replaced(v) => {
                    meta.replaced.push((m, col));
                    w.column_mut(dst).assign(v);
                }
                TaskResult::OneSided => unreachable!("kept columns are two-sided"),
            }
        }
        out.push(TaskWeights { weights: w });
    }
    Ok((out, meta))
}

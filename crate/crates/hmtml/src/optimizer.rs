//! The joint solver: smoothed objective, analytic gradients, the projected
//! gradient inner loop, and the alternating outer loop over the per-domain
//! factor matrices.
//!
//! The coupling between domains is the Frobenius distance between the rank-1
//! weight covariance tensors and the transformation tensor built from the
//! identity tensor and all factors. Neither tensor is ever materialized:
//! both reduce to Hadamard products of r x r Grams and rank-1 accumulations
//! (`gram_other`, `cross_term`), which the dense multilinear module verifies
//! in the test suite.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::TaskWeights;
use crate::error::{HmtmlError, Result};
use crate::linalg::{frob_inner, frob_norm_sq};
use crate::pairs::{self, DomainData, PairSet};

/// All solver hyperparameters and ablation switches.
#[derive(Debug, Clone)]
pub struct HmtmlConfig {
    /// Coupling weight on the divergence term.
    pub gamma: f64,
    /// Sparsity weight, shared across domains.
    pub gamma_m: f64,
    /// Number of common factors r.
    pub rank: usize,
    /// GL-loss sharpness.
    pub rho: f64,
    /// L1 smoothing parameter.
    pub sigma: f64,
    /// Sufficient-decrease constant of the step-size condition.
    pub kappa: f64,
    /// Initial step size of each subproblem solve.
    pub mu0: f64,
    /// Step-size growth/shrink factor.
    pub beta: f64,
    /// Inner (subproblem) relative stopping tolerance.
    pub eps_inner: f64,
    /// Outer (alternating) relative stopping tolerance.
    pub eps_outer: f64,
    /// Outer iteration cap.
    pub max_outer: usize,
    /// Inner iteration cap per subproblem (T2).
    pub max_inner: usize,
    /// Objective-evaluation budget per step-size search (T1).
    pub max_step_checks: usize,
    /// Drop the empirical GL-loss term.
    pub drop_loss: bool,
    /// Drop the coupling term (gamma treated as 0).
    pub drop_reg: bool,
    /// Replace the smoothed L1 with 0.5 ||U||_F^2.
    pub frobenius_reg: bool,
    /// Skip the nonnegativity projection.
    pub no_nonneg: bool,
    /// Optional cap on pairs per domain (uniform seeded subsample).
    pub pair_cap: Option<usize>,
    pub seed: u64,
}

impl Default for HmtmlConfig {
    fn default() -> Self {
        HmtmlConfig {
            gamma: 1.0,
            gamma_m: 0.01,
            rank: 2,
            rho: 3.0,
            sigma: 0.5,
            kappa: 0.01,
            mu0: 1.0,
            beta: 0.1,
            eps_inner: 1e-4,
            eps_outer: 1e-3,
            max_outer: 20,
            max_inner: 100,
            max_step_checks: 50,
            drop_loss: false,
            drop_reg: false,
            frobenius_reg: false,
            no_nonneg: false,
            pair_cap: None,
            seed: 0,
        }
    }
}

impl HmtmlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 || self.gamma_m < 0.0 {
            return Err(HmtmlError::invalid("gamma and gamma_m must be >= 0"));
        }
        if self.rank < 1 {
            return Err(HmtmlError::invalid("rank must be >= 1"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(HmtmlError::invalid("beta must be in (0, 1)"));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(HmtmlError::invalid("kappa must be in (0, 1)"));
        }
        if self.sigma <= 0.0 || self.rho <= 0.0 || self.mu0 <= 0.0 {
            return Err(HmtmlError::invalid("sigma, rho, mu0 must be positive"));
        }
        Ok(())
    }

    fn effective_gamma(&self) -> f64 {
        if self.drop_reg {
            0.0
        } else {
            self.gamma
        }
    }
}

/// Smoothed L1 value: quadratic within `[-sigma, sigma]`, linear beyond.
pub fn smoothed_l1(u: &Array2<f64>, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    u.iter()
        .map(|&x| {
            if x.abs() > sigma {
                x.abs() - sigma / 2.0
            } else {
                x * x / (2.0 * sigma)
            }
        })
        .sum()
}

/// Gradient of [`smoothed_l1`]: `median{u/sigma, -1, 1}` entrywise.
pub fn smoothed_l1_grad(u: &Array2<f64>, sigma: f64) -> Array2<f64> {
    u.mapv(|x| (x / sigma).clamp(-1.0, 1.0))
}

/// `B_(m) B_(m)^T` in closed form: the Hadamard product of the other
/// domains' `U^T U` Grams. Symmetric PSD, r x r.
pub fn gram_other(us: &[Array2<f64>], m: usize) -> Array2<f64> {
    let r = us[m].ncols();
    let mut g = Array2::<f64>::ones((r, r));
    for (k, u) in us.iter().enumerate() {
        if k == m {
            continue;
        }
        g = &g * &u.t().dot(u);
    }
    g
}

/// `sum_p W_(m)^p B_(m)^T` in closed form: `W_m C^T` where column p of C is
/// the entrywise product over other domains of `U_{m'}^T w_{m'}^p`.
pub fn cross_term(us: &[Array2<f64>], ws: &[TaskWeights], m: usize) -> Array2<f64> {
    let r = us[m].ncols();
    let p = ws[m].num_tasks();
    let mut c = Array2::<f64>::ones((r, p));
    for (k, u) in us.iter().enumerate() {
        if k == m {
            continue;
        }
        c = &c * &u.t().dot(&ws[k].weights);
    }
    ws[m].weights.dot(&c.t())
}

/// Product over domains of each task's squared weight norms
/// (`||W^p||_F^2` of the rank-1 covariance tensor), summed over tasks.
fn covariance_norm_sum(ws: &[TaskWeights]) -> f64 {
    let p = ws[0].num_tasks();
    (0..p)
        .map(|t| {
            ws.iter()
                .map(|w| {
                    let col = w.weights.column(t);
                    col.dot(&col)
                })
                .product::<f64>()
        })
        .sum()
}

/// `sum_p <W^p, G>` without dense tensors: total sum of the Hadamard
/// product over domains of `U_m^T W_m`.
fn covariance_inner_sum(us: &[Array2<f64>], ws: &[TaskWeights]) -> f64 {
    let r = us[0].ncols();
    let p = ws[0].num_tasks();
    let mut acc = Array2::<f64>::ones((r, p));
    for (u, w) in us.iter().zip(ws) {
        acc = &acc * &u.t().dot(&w.weights);
    }
    acc.sum()
}

/// `||G||_F^2` without dense tensors: total sum of the Hadamard product of
/// all domains' `U^T U` Grams.
fn transform_norm_sq(us: &[Array2<f64>]) -> f64 {
    let r = us[0].ncols();
    let mut acc = Array2::<f64>::ones((r, r));
    for u in us {
        acc = &acc * &u.t().dot(u);
    }
    acc.sum()
}

fn reg_value(u: &Array2<f64>, cfg: &HmtmlConfig) -> f64 {
    if cfg.frobenius_reg {
        0.5 * frob_norm_sq(u)
    } else {
        smoothed_l1(u, cfg.sigma)
    }
}

fn reg_grad(u: &Array2<f64>, cfg: &HmtmlConfig) -> Array2<f64> {
    if cfg.frobenius_reg {
        u.clone()
    } else {
        smoothed_l1_grad(u, cfg.sigma)
    }
}

fn check_shapes(
    us: &[Array2<f64>],
    ws: &[TaskWeights],
    cfg: &HmtmlConfig,
) -> Result<()> {
    if us.len() != ws.len() {
        return Err(HmtmlError::DimensionMismatch {
            context: "factor matrices vs task weights count",
            expected: ws.len(),
            got: us.len(),
        });
    }
    let p = ws[0].num_tasks();
    for (m, (u, w)) in us.iter().zip(ws).enumerate() {
        if u.ncols() != cfg.rank {
            return Err(HmtmlError::DimensionMismatch {
                context: "factor rank",
                expected: cfg.rank,
                got: u.ncols(),
            });
        }
        if u.nrows() != w.dim() {
            return Err(HmtmlError::invalid(format!(
                "domain {}: factor rows {} != weight dim {}",
                m,
                u.nrows(),
                w.dim()
            )));
        }
        if w.num_tasks() != p {
            return Err(HmtmlError::invalid(format!(
                "domain {}: task count {} != {}",
                m,
                w.num_tasks(),
                p
            )));
        }
    }
    Ok(())
}

fn full_objective(
    us: &[Array2<f64>],
    pairsets: Option<&[PairSet]>,
    ws: &[TaskWeights],
    cfg: &HmtmlConfig,
) -> Result<f64> {
    let mut obj = 0.0;
    if !cfg.drop_loss {
        let pairsets = pairsets
            .ok_or_else(|| HmtmlError::invalid("loss term requires pair sets"))?;
        for (u, p) in us.iter().zip(pairsets) {
            obj += pairs::empirical_loss(u, p, cfg.rho)?;
        }
    }
    let gamma = cfg.effective_gamma();
    if gamma > 0.0 {
        let p = ws[0].num_tasks() as f64;
        obj += gamma / p * (covariance_norm_sum(ws) - 2.0 * covariance_inner_sum(us, ws))
            + gamma * transform_norm_sq(us);
    }
    for u in us {
        obj += cfg.gamma_m * reg_value(u, cfg);
    }
    Ok(obj)
}

/// The smoothed objective: per-domain empirical losses, the tensor coupling
/// term, and the (smoothed) sparsity regularizer, subject to the ablation
/// flags in `cfg`.
pub fn objective(
    us: &[Array2<f64>],
    pairsets: &[PairSet],
    ws: &[TaskWeights],
    cfg: &HmtmlConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_shapes(us, ws, cfg)?;
    if !cfg.drop_loss {
        if pairsets.len() != us.len() {
            return Err(HmtmlError::DimensionMismatch {
                context: "pair sets vs domains",
                expected: us.len(),
                got: pairsets.len(),
            });
        }
        for (u, p) in us.iter().zip(pairsets) {
            if p.dim() != u.nrows() {
                return Err(HmtmlError::DimensionMismatch {
                    context: "pair dim vs factor rows",
                    expected: u.nrows(),
                    got: p.dim(),
                });
            }
        }
    }
    full_objective(us, Some(pairsets), ws, cfg)
}

/// Gradient of [`objective`] with respect to `U_m`, using the precomputable
/// `gram_other` / `cross_term` closed forms for the coupling part.
pub fn gradient_um(
    us: &[Array2<f64>],
    pairsets: &[PairSet],
    ws: &[TaskWeights],
    cfg: &HmtmlConfig,
    m: usize,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    check_shapes(us, ws, cfg)?;
    let mut grad = Array2::<f64>::zeros(us[m].raw_dim());
    if !cfg.drop_loss {
        grad += &pairs::loss_gradient(&us[m], &pairsets[m], cfg.rho)?;
    }
    let gamma = cfg.effective_gamma();
    if gamma > 0.0 {
        let p = ws[0].num_tasks() as f64;
        let g = gram_other(us, m);
        let s = cross_term(us, ws, m);
        grad += &(us[m].dot(&g) * (2.0 * gamma));
        grad -= &(s * (2.0 * gamma / p));
    }
    grad += &(reg_grad(&us[m], cfg) * cfg.gamma_m);
    Ok(grad)
}

/// Per-subproblem counters.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubproblemStats {
    /// Projected gradient steps taken (T2).
    pub steps: usize,
    /// Largest number of objective evaluations in one step-size search (T1).
    pub max_checks: usize,
}

/// Precomputed quantities that stay constant while one `U_m` is optimized.
struct Subproblem<'a> {
    pairs: Option<&'a PairSet>,
    gram: Array2<f64>,
    cross: Array2<f64>,
    norm_const: f64,
    gamma: f64,
    inv_p: f64,
    cfg: &'a HmtmlConfig,
}

impl<'a> Subproblem<'a> {
    fn new(
        us: &[Array2<f64>],
        pairs: Option<&'a PairSet>,
        ws: &[TaskWeights],
        cfg: &'a HmtmlConfig,
        m: usize,
    ) -> Self {
        let gamma = cfg.effective_gamma();
        let r = us[m].ncols();
        let d = us[m].nrows();
        let (gram, cross, norm_const) = if gamma > 0.0 {
            (
                gram_other(us, m),
                cross_term(us, ws, m),
                covariance_norm_sum(ws),
            )
        } else {
            (Array2::zeros((r, r)), Array2::zeros((d, r)), 0.0)
        };
        Subproblem {
            pairs,
            gram,
            cross,
            norm_const,
            gamma,
            inv_p: 1.0 / ws[0].num_tasks() as f64,
            cfg,
        }
    }

    fn value(&self, u: &Array2<f64>) -> Result<f64> {
        let mut f = 0.0;
        if let Some(p) = self.pairs {
            f += pairs::empirical_loss(u, p, self.cfg.rho)?;
        }
        if self.gamma > 0.0 {
            f += self.gamma
                * (self.inv_p * (self.norm_const - 2.0 * frob_inner(&self.cross, u))
                    + frob_inner(&u.t().dot(u), &self.gram));
        }
        f += self.cfg.gamma_m * reg_value(u, self.cfg);
        Ok(f)
    }

    fn gradient(&self, u: &Array2<f64>) -> Result<Array2<f64>> {
        let mut g = Array2::<f64>::zeros(u.raw_dim());
        if let Some(p) = self.pairs {
            g += &pairs::loss_gradient(u, p, self.cfg.rho)?;
        }
        if self.gamma > 0.0 {
            g += &(u.dot(&self.gram) * (2.0 * self.gamma));
            g -= &(&self.cross * (2.0 * self.gamma * self.inv_p));
        }
        g += &(reg_grad(u, self.cfg) * self.cfg.gamma_m);
        Ok(g)
    }
}

fn project(u: &Array2<f64>, cfg: &HmtmlConfig) -> Array2<f64> {
    if cfg.no_nonneg {
        u.clone()
    } else {
        u.mapv(|x| x.max(0.0))
    }
}

fn same_point(a: &Array2<f64>, b: &Array2<f64>) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| x == y)
}

fn ensure_finite(value: f64, context: &str, trace: &[f64]) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(HmtmlError::SolverDivergence {
            context: context.to_string(),
            trace: trace.to_vec(),
        })
    }
}

fn solve_subproblem_inner(
    sub: &Subproblem,
    u0: Array2<f64>,
    cfg: &HmtmlConfig,
) -> Result<(Array2<f64>, SubproblemStats)> {
    let mut u = u0;
    let mut trace = Vec::new();
    let f_start = sub.value(&u)?;
    ensure_finite(f_start, "subproblem objective at start", &trace)?;
    trace.push(f_start);
    let mut f_prev = f_start;
    let mut mu = cfg.mu0;
    let mut stats = SubproblemStats::default();

    for _ in 0..cfg.max_inner {
        let grad = sub.gradient(&u)?;
        if grad.iter().any(|x| !x.is_finite()) {
            return Err(HmtmlError::SolverDivergence {
                context: "subproblem gradient".into(),
                trace,
            });
        }
        let candidate_at = |step: f64| project(&(&u - &(&grad * step)), cfg);
        // each condition test costs one objective evaluation
        let mut checks = 0usize;
        let cond = |cand: &Array2<f64>, checks: &mut usize| -> Result<bool> {
            *checks += 1;
            let f_cand = sub.value(cand)?;
            ensure_finite(f_cand, "step-size search objective", &trace)?;
            let descent = frob_inner(&grad, &(cand - &u));
            Ok(f_cand - f_prev <= cfg.kappa * descent)
        };

        let mut cand = candidate_at(mu);
        let mut accepted = if cond(&cand, &mut checks)? {
            // grow while the condition keeps holding and the point moves
            while checks < cfg.max_step_checks {
                let mu_next = mu / cfg.beta;
                let cand_next = candidate_at(mu_next);
                if same_point(&cand_next, &cand) || !cond(&cand_next, &mut checks)? {
                    break;
                }
                mu = mu_next;
                cand = cand_next;
            }
            true
        } else {
            // shrink until it does; at vanishing steps the projected point
            // stops moving and the condition holds trivially
            let mut ok = false;
            while checks < cfg.max_step_checks {
                mu *= cfg.beta;
                cand = candidate_at(mu);
                if cond(&cand, &mut checks)? {
                    ok = true;
                    break;
                }
            }
            ok
        };
        stats.max_checks = stats.max_checks.max(checks);
        if accepted && same_point(&cand, &u) {
            // stationary: the projected step no longer moves
            accepted = false;
        }
        if !accepted {
            break;
        }
        u = cand;
        stats.steps += 1;
        let f_new = sub.value(&u)?;
        ensure_finite(f_new, "subproblem objective", &trace)?;
        trace.push(f_new);
        let denom = (f_new - f_start).abs();
        if denom < 1e-15 {
            break;
        }
        if (f_new - f_prev).abs() / denom < cfg.eps_inner {
            break;
        }
        f_prev = f_new;
    }
    Ok((u, stats))
}

/// Minimizes the smoothed subproblem objective for `U_m` with the others
/// fixed, starting from `u0`. `us[m]` itself is ignored in favor of `u0`.
pub fn solve_subproblem(
    us: &[Array2<f64>],
    pairs_m: Option<&PairSet>,
    ws: &[TaskWeights],
    cfg: &HmtmlConfig,
    m: usize,
    u0: Array2<f64>,
) -> Result<(Array2<f64>, SubproblemStats)> {
    cfg.validate()?;
    check_shapes(us, ws, cfg)?;
    let pairs_m = if cfg.drop_loss { None } else { pairs_m };
    if !cfg.drop_loss && pairs_m.is_none() {
        return Err(HmtmlError::invalid(
            "loss term active but no pair set given",
        ));
    }
    let sub = Subproblem::new(us, pairs_m, ws, cfg, m);
    solve_subproblem_inner(&sub, u0, cfg)
}

/// Outcome of a full alternating solve.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Final factor matrices, one per domain.
    pub factors: Vec<Array2<f64>>,
    /// Full objective before iteration 1 and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub outer_iterations: usize,
    /// Largest inner step count observed across subproblems (T2).
    pub max_inner_steps: usize,
    /// Largest step-search evaluation count observed (T1).
    pub max_step_checks: usize,
}

/// Optional controls for [`fit_with_options`].
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Warm-start factors; seeded random initialization when absent.
    pub initial: Option<Vec<Array2<f64>>>,
    /// Domain update order; `0..M` when absent.
    pub update_order: Option<Vec<usize>>,
}

/// Seeded random initialization: entries uniform on `[0, 1/sqrt(d r)]`.
pub fn random_init(dims: &[usize], rank: usize, seed: u64) -> Vec<Array2<f64>> {
    dims.iter()
        .enumerate()
        .map(|(m, &d)| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (m as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let hi = 1.0 / ((d * rank) as f64).sqrt();
            Array2::from_shape_fn((d, rank), |_| rng.gen_range(0.0..hi))
        })
        .collect()
}

/// Alternating solve over all domains.
pub fn fit(
    domains: &[DomainData],
    ws: &[TaskWeights],
    cfg: &HmtmlConfig,
) -> Result<SolverState> {
    fit_with_options(domains, ws, cfg, &FitOptions::default())
}

pub fn fit_with_options(
    domains: &[DomainData],
    ws: &[TaskWeights],
    cfg: &HmtmlConfig,
    opts: &FitOptions,
) -> Result<SolverState> {
    cfg.validate()?;
    if domains.len() < 2 {
        return Err(HmtmlError::invalid("fit requires at least two domains"));
    }
    if domains.len() != ws.len() {
        return Err(HmtmlError::DimensionMismatch {
            context: "domains vs task weights",
            expected: domains.len(),
            got: ws.len(),
        });
    }
    for (d, w) in domains.iter().zip(ws) {
        if d.dim() != w.dim() {
            return Err(HmtmlError::invalid(format!(
                "domain {}: data dim {} != weight dim {}",
                d.domain_id,
                d.dim(),
                w.dim()
            )));
        }
    }
    let m_total = domains.len();
    let order: Vec<usize> = match &opts.update_order {
        Some(o) => {
            let mut seen = vec![false; m_total];
            for &m in o {
                if m >= m_total || seen[m] {
                    return Err(HmtmlError::invalid(
                        "update order must be a permutation of the domains",
                    ));
                }
                seen[m] = true;
            }
            o.clone()
        }
        None => (0..m_total).collect(),
    };

    let pairsets: Option<Vec<PairSet>> = if cfg.drop_loss {
        None
    } else {
        Some(
            domains
                .iter()
                .map(|d| pairs::generate_pairs_capped(d, cfg.pair_cap, cfg.seed))
                .collect::<Result<_>>()?,
        )
    };

    let dims: Vec<usize> = domains.iter().map(|d| d.dim()).collect();
    let mut factors = match &opts.initial {
        Some(init) => {
            if init.len() != m_total {
                return Err(HmtmlError::invalid("initial factors count mismatch"));
            }
            init.clone()
        }
        None => random_init(&dims, cfg.rank, cfg.seed),
    };
    check_shapes(&factors, ws, cfg)?;
    if !cfg.no_nonneg {
        for f in &mut factors {
            *f = f.mapv(|x| x.max(0.0));
        }
    }

    let mut trace =
        vec![full_objective(&factors, pairsets.as_deref(), ws, cfg)?];
    let mut max_inner_steps = 0;
    let mut max_step_checks = 0;
    let mut outer = 0;

    for _ in 0..cfg.max_outer {
        for &m in &order {
            let sub = Subproblem::new(
                &factors,
                pairsets.as_deref().map(|p| &p[m]),
                ws,
                cfg,
                m,
            );
            let warm = factors[m].clone();
            let (u_new, stats) = solve_subproblem_inner(&sub, warm, cfg)?;
            factors[m] = u_new;
            max_inner_steps = max_inner_steps.max(stats.steps);
            max_step_checks = max_step_checks.max(stats.max_checks);
        }
        outer += 1;
        let obj = full_objective(&factors, pairsets.as_deref(), ws, cfg)?;
        ensure_finite(obj, "outer objective", &trace)?;
        let prev = *trace.last().expect("nonempty");
        trace.push(obj);
        if prev.abs() < 1e-15 || (obj - prev).abs() / prev.abs() < cfg.eps_outer {
            break;
        }
    }

    if outer >= 10 || max_inner_steps >= 20 || max_step_checks >= 50 {
        log::warn!(
            "iteration counts above typical ranges: outer={}, inner steps={}, step checks={}",
            outer,
            max_inner_steps,
            max_step_checks
        );
    }

    Ok(SolverState {
        factors,
        objective_trace: trace,
        outer_iterations: outer,
        max_inner_steps,
        max_step_checks,
    })
}

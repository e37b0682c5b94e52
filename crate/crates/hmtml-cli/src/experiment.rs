//! End-to-end experiment runner: split, encode, tune, fit, evaluate,
//! aggregate over repetitions, and emit result files.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use hmtml::encoding::{self, TaskWeights};
use hmtml::metric::{knn_predict, EuclideanMetric, FactorMetric};
use hmtml::{fit, DomainData, HmtmlConfig};
use rayon::prelude::*;

use crate::data::load_domains;
use crate::loocv::loocv_select;
use crate::metrics::{accuracy, macro_f1};
use crate::split::split_labeled;
use crate::synth::{generate, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    /// Euclidean 1-NN, no learning.
    Eu,
    /// The full model.
    Hmtml,
    /// Coupling term removed (independent per-domain learning).
    DropReg,
    /// Pair-loss term removed.
    DropLoss,
    /// Smoothed L1 replaced by squared Frobenius norm.
    FrobeniusReg,
    /// Nonnegativity projection skipped.
    NoNonneg,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Eu => "eu",
            Method::Hmtml => "hmtml",
            Method::DropReg => "drop_reg",
            Method::DropLoss => "drop_loss",
            Method::FrobeniusReg => "frobenius_reg",
            Method::NoNonneg => "no_nonneg",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Ok(match s {
            "eu" => Method::Eu,
            "hmtml" => Method::Hmtml,
            "drop_reg" => Method::DropReg,
            "drop_loss" => Method::DropLoss,
            "frobenius_reg" => Method::FrobeniusReg,
            "no_nonneg" => Method::NoNonneg,
            other => bail!("unknown method {:?}", other),
        })
    }

    pub fn all_ablations() -> Vec<Method> {
        vec![
            Method::DropReg,
            Method::DropLoss,
            Method::FrobeniusReg,
            Method::NoNonneg,
        ]
    }

    fn apply(self, cfg: &mut HmtmlConfig) {
        match self {
            Method::Eu | Method::Hmtml => {}
            Method::DropReg => cfg.drop_reg = true,
            Method::DropLoss => cfg.drop_loss = true,
            Method::FrobeniusReg => cfg.frobenius_reg = true,
            Method::NoNonneg => cfg.no_nonneg = true,
        }
    }
}

#[derive(Debug, Clone)]
pub enum DataSource {
    Files(Vec<PathBuf>),
    Synth(SynthSpec),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub n_labeled: usize,
    pub r_grid: Vec<usize>,
    pub gamma_grid: Vec<f64>,
    pub gamma_m_grid: Vec<f64>,
    /// Learned methods to run; `Eu` and `Hmtml` are always included.
    pub methods: Vec<Method>,
    pub repetitions: usize,
    pub seed: u64,
    pub knn_k: usize,
    /// Everything not covered by the grids (tolerances, rho, sigma, caps).
    pub base_cfg: HmtmlConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_grid.is_empty() || self.gamma_grid.is_empty() || self.gamma_m_grid.is_empty() {
            bail!("all grids must be nonempty");
        }
        if self.repetitions < 1 {
            bail!("repetitions must be >= 1");
        }
        if self.knn_k < 1 {
            bail!("knn_k must be >= 1");
        }
        Ok(())
    }
}

/// One aggregated table entry. `domain = None` is the across-domain average.
#[derive(Debug, Clone)]
pub struct Cell {
    pub method: Method,
    /// 0 for the Euclidean baseline (no rank involved).
    pub r: usize,
    pub domain: Option<usize>,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

#[derive(Debug, Clone)]
pub struct ResultTable {
    pub cells: Vec<Cell>,
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,r,domain,acc_mean,acc_std,f1_mean,f1_std\n");
        for c in &self.cells {
            let domain = c
                .domain
                .map(|d| d.to_string())
                .unwrap_or_else(|| "avg".to_string());
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                c.method.name(),
                c.r,
                domain,
                c.acc_mean,
                c.acc_std,
                c.f1_mean,
                c.f1_std
            ));
        }
        out
    }

    /// Across-domain averages per (method, r), one line per point, for
    /// external plotting of accuracy/macro-F1 against the rank.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("method,r,acc_mean,f1_mean\n");
        for c in &self.cells {
            if c.domain.is_none() {
                out.push_str(&format!(
                    "{},{},{:.6},{:.6}\n",
                    c.method.name(),
                    c.r,
                    c.acc_mean,
                    c.f1_mean
                ));
            }
        }
        out
    }

    /// Across-domain mean accuracy for one (method, r) cell.
    pub fn avg_accuracy(&self, method: Method, r: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.r == r && c.domain.is_none())
            .map(|c| c.acc_mean)
    }
}

/// Generates a codebook for the shared label set and trains the base
/// classifiers of every domain against it (penalty 1, consistent drops).
pub fn train_tasks(labeled: &[DomainData], seed: u64) -> Result<Vec<TaskWeights>> {
    let c = labeled
        .iter()
        .map(|d| d.num_classes())
        .max()
        .context("no domains")?;
    let p = encoding::num_tasks(c)?;
    let code = encoding::generate_codebook(c, p, seed)?;
    let (ws, _) = encoding::train_base_classifiers_multi(labeled, &code, 1.0, seed)?;
    Ok(ws)
}

/// One repetition's raw scores, keyed for order-independent accumulation.
#[derive(Debug, Clone)]
struct Record {
    method: Method,
    r: usize,
    rep: usize,
    domain: usize,
    acc: f64,
    f1: f64,
}

fn evaluate_factors(
    splits: &[(DomainData, DomainData)],
    factors: Option<&[ndarray::Array2<f64>]>,
    k: usize,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(splits.len());
    for (m, (labeled, test)) in splits.iter().enumerate() {
        let preds = match factors {
            Some(us) => knn_predict(
                labeled,
                test.samples.view(),
                &FactorMetric { u: &us[m] },
                k,
            )?,
            None => knn_predict(labeled, test.samples.view(), &EuclideanMetric, k)?,
        };
        let c = labeled.num_classes();
        out.push((
            accuracy(&preds, &test.labels)?,
            macro_f1(&preds, &test.labels, c)?,
        ));
    }
    Ok(out)
}

fn run_repetition(
    domains: &[DomainData],
    cfg: &ExperimentConfig,
    methods: &[Method],
    rep: usize,
) -> Result<Vec<Record>> {
    let rep_seed = cfg.seed.wrapping_add(rep as u64);
    let splits = split_labeled(domains, cfg.n_labeled, rep_seed)?;
    let labeled: Vec<DomainData> = splits.iter().map(|(l, _)| l.clone()).collect();
    let ws = train_tasks(&labeled, rep_seed)?;
    let mut records = Vec::new();

    for (m, (acc, f1)) in evaluate_factors(&splits, None, cfg.knn_k)?
        .into_iter()
        .enumerate()
    {
        records.push(Record {
            method: Method::Eu,
            r: 0,
            rep,
            domain: m,
            acc,
            f1,
        });
    }

    for &r in &cfg.r_grid {
        let base = HmtmlConfig {
            rank: r,
            seed: rep_seed,
            ..cfg.base_cfg.clone()
        };
        // hyperparameters tuned once on the full model, then shared by the
        // ablations so the comparison isolates the removed term
        let (gamma, gamma_m) =
            loocv_select(&labeled, &ws, &cfg.gamma_grid, &cfg.gamma_m_grid, &base)?;
        for &method in methods {
            if method == Method::Eu {
                continue;
            }
            let mut run_cfg = HmtmlConfig {
                gamma,
                gamma_m,
                ..base.clone()
            };
            method.apply(&mut run_cfg);
            let state = fit(&labeled, &ws, &run_cfg)?;
            for (m, (acc, f1)) in
                evaluate_factors(&splits, Some(&state.factors), cfg.knn_k)?
                    .into_iter()
                    .enumerate()
            {
                records.push(Record {
                    method,
                    r,
                    rep,
                    domain: m,
                    acc,
                    f1,
                });
            }
        }
    }
    Ok(records)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let domains = match &cfg.source {
        DataSource::Files(paths) => load_domains(paths)?.0,
        DataSource::Synth(spec) => generate(spec)?,
    };
    if domains.len() < 2 {
        bail!("experiments need at least two domains");
    }

    let mut methods = vec![Method::Eu, Method::Hmtml];
    for &m in &cfg.methods {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    methods.sort();

    let mut records: Vec<Record> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(&domains, cfg, &methods, rep))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    records.sort_by_key(|r| (r.method, r.r, r.domain, r.rep));

    let m_total = domains.len();
    let mut cells = Vec::new();
    for &method in &methods {
        let rs: Vec<usize> = if method == Method::Eu {
            vec![0]
        } else {
            cfg.r_grid.clone()
        };
        for r in rs {
            let mut domain_means = Vec::new();
            let mut avg_acc_by_rep = vec![0.0; cfg.repetitions];
            let mut avg_f1_by_rep = vec![0.0; cfg.repetitions];
            for domain in 0..m_total {
                let accs: Vec<f64> = records
                    .iter()
                    .filter(|x| x.method == method && x.r == r && x.domain == domain)
                    .map(|x| x.acc)
                    .collect();
                let f1s: Vec<f64> = records
                    .iter()
                    .filter(|x| x.method == method && x.r == r && x.domain == domain)
                    .map(|x| x.f1)
                    .collect();
                assert_eq!(accs.len(), cfg.repetitions);
                for (rep, (&a, &f)) in accs.iter().zip(&f1s).enumerate() {
                    avg_acc_by_rep[rep] += a / m_total as f64;
                    avg_f1_by_rep[rep] += f / m_total as f64;
                }
                let (acc_mean, acc_std) = mean_std(&accs);
                let (f1_mean, f1_std) = mean_std(&f1s);
                domain_means.push(Cell {
                    method,
                    r,
                    domain: Some(domain),
                    acc_mean,
                    acc_std,
                    f1_mean,
                    f1_std,
                });
            }
            cells.extend(domain_means);
            let (acc_mean, acc_std) = mean_std(&avg_acc_by_rep);
            let (f1_mean, f1_std) = mean_std(&avg_f1_by_rep);
            cells.push(Cell {
                method,
                r,
                domain: None,
                acc_mean,
                acc_std,
                f1_mean,
                f1_std,
            });
        }
    }
    Ok(ResultTable { cells })
}

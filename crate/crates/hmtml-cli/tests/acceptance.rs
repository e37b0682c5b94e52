//! End-to-end acceptance suite. Each test covers one numbered criterion and
//! prints a single PASS line on success (run with `--nocapture` to see them;
//! a failure shows up as a normal test failure).

use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hmtml::encoding::TaskWeights;
use hmtml::metric::{knn_predict, recover_metric, EuclideanMetric};
use hmtml::multilinear::{identity_tensor, matricize, multi_mode_product, rank1_tensor};
use hmtml::optimizer::{
    cross_term, fit_with_options, gradient_um, gram_other, objective, random_init, FitOptions,
};
use hmtml::pairs::generate_pairs;
use hmtml::preprocess::{kpca_fit, ComponentSelection, Kernel, OmegaMode};
use hmtml::{fit, DomainData, HmtmlConfig};
use hmtml_cli::experiment::{
    run_experiment, train_tasks, DataSource, ExperimentConfig, Method, ResultTable,
};
use hmtml_cli::metrics::macro_f1;
use hmtml_cli::split::split_labeled;
use hmtml_cli::synth::{generate, SynthSpec};

// ---------------------------------------------------------------- fixtures

fn unit_columns(d: usize, p: usize, rng: &mut ChaCha8Rng) -> TaskWeights {
    let mut w = Array2::from_shape_fn((d, p), |_| rng.gen_range(-1.0..1.0));
    for mut col in w.columns_mut() {
        let n = f64::sqrt(col.dot(&col));
        col.mapv_inplace(|x| x / n);
    }
    TaskWeights { weights: w }
}

fn random_domain(n: usize, d: usize, classes: usize, rng: &mut ChaCha8Rng) -> DomainData {
    let samples = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
    let labels = (0..n).map(|i| 1 + i % classes).collect();
    DomainData::new(samples, labels, 0).unwrap()
}

struct Instance {
    us: Vec<Array2<f64>>,
    pairsets: Vec<hmtml::pairs::PairSet>,
    ws: Vec<TaskWeights>,
    cfg: HmtmlConfig,
}

fn random_instance(seed: u64, on_breakpoints: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m_total = 3;
    let r = rng.gen_range(1..=3);
    let p = rng.gen_range(2..=5);
    let mut us = Vec::new();
    let mut pairsets = Vec::new();
    let mut ws = Vec::new();
    for _ in 0..m_total {
        let d = rng.gen_range(4..=8);
        let n = rng.gen_range(4..=10);
        let data = random_domain(n, d, 2, &mut rng);
        pairsets.push(generate_pairs(&data).unwrap());
        ws.push(unit_columns(d, p, &mut rng));
        let mut u = Array2::from_shape_fn((d, r), |_| rng.gen_range(-0.8..0.8));
        if on_breakpoints {
            // pin entries exactly on the smoothed-L1 breakpoints
            u[[0, 0]] = 0.0;
            u[[1, 0]] = 0.5;
            if r > 1 {
                u[[0, 1]] = -0.5;
            }
        }
        us.push(u);
    }
    let cfg = HmtmlConfig {
        gamma: rng.gen_range(0.05..2.0),
        gamma_m: rng.gen_range(0.005..0.2),
        rank: r,
        ..HmtmlConfig::default()
    };
    Instance {
        us,
        pairsets,
        ws,
        cfg,
    }
}

// ------------------------------------------------------------ criterion 1

#[test]
fn criterion_1_gradient_matches_finite_differences() {
    let start = Instant::now();
    let h = 1e-6;
    for seed in 0..20u64 {
        let inst = random_instance(seed, seed % 2 == 0);
        for m in 0..inst.us.len() {
            let grad = gradient_um(&inst.us, &inst.pairsets, &inst.ws, &inst.cfg, m).unwrap();
            let mut fd = Array2::<f64>::zeros(grad.raw_dim());
            for i in 0..grad.nrows() {
                for j in 0..grad.ncols() {
                    let mut us_p = inst.us.clone();
                    us_p[m][[i, j]] += h;
                    let fp = objective(&us_p, &inst.pairsets, &inst.ws, &inst.cfg).unwrap();
                    let mut us_m = inst.us.clone();
                    us_m[m][[i, j]] -= h;
                    let fm = objective(&us_m, &inst.pairsets, &inst.ws, &inst.cfg).unwrap();
                    fd[[i, j]] = (fp - fm) / (2.0 * h);
                }
            }
            let diff = (&fd - &grad).mapv(|x| x * x).sum().sqrt();
            let scale = grad.mapv(|x| x * x).sum().sqrt().max(1e-12);
            assert!(
                diff / scale <= 1e-5,
                "instance {} domain {}: relative gradient error {}",
                seed,
                m,
                diff / scale
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {:?}", elapsed);
    println!(
        "ACCEPTANCE 1 (gradient vs finite differences, 20 instances): PASS ({:?})",
        elapsed
    );
}

// ------------------------------------------------------------ criterion 2

/// Dense-tensor coupling value: `sum_p ||W^p - E x_1 U_1 ... x_M U_M||_F^2`.
fn dense_coupling(us: &[Array2<f64>], ws: &[TaskWeights]) -> f64 {
    let r = us[0].ncols();
    let transform = multi_mode_product(&identity_tensor(r, us.len()), us).unwrap();
    let p = ws[0].num_tasks();
    (0..p)
        .map(|t| {
            let vs: Vec<Array1<f64>> = ws.iter().map(|w| w.weights.column(t).to_owned()).collect();
            let wp = rank1_tensor(&vs);
            let diff: Vec<f64> = wp
                .data()
                .iter()
                .zip(transform.data())
                .map(|(a, b)| a - b)
                .collect();
            diff.iter().map(|x| x * x).sum::<f64>()
        })
        .sum()
}

#[test]
fn criterion_2_structured_forms_match_dense_tensor_oracle() {
    let start = Instant::now();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let r = rng.gen_range(2..=3);
        let p = 4;
        let dims = [10usize, 9, 8]; // product 720 <= 1e4
        let us: Vec<Array2<f64>> = dims
            .iter()
            .map(|&d| Array2::from_shape_fn((d, r), |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let ws: Vec<TaskWeights> = dims
            .iter()
            .map(|&d| unit_columns(d, p, &mut rng))
            .collect();

        // gram_other and cross_term against mode-m matricizations of the
        // dense partially-transformed identity tensor
        for m in 0..3 {
            let mut partial = us.clone();
            partial[m] = Array2::eye(r);
            let b = multi_mode_product(&identity_tensor(r, 3), &partial).unwrap();
            let b_mat = matricize(&b, m).unwrap().matrix;
            let dense_gram = b_mat.dot(&b_mat.t());
            let structured_gram = gram_other(&us, m);
            for (a, b) in dense_gram.iter().zip(structured_gram.iter()) {
                assert!((a - b).abs() <= 1e-10, "gram mismatch: {} vs {}", a, b);
            }
            let mut dense_cross = Array2::<f64>::zeros((dims[m], r));
            for t in 0..p {
                let vs: Vec<Array1<f64>> =
                    ws.iter().map(|w| w.weights.column(t).to_owned()).collect();
                let wp_mat = matricize(&rank1_tensor(&vs), m).unwrap().matrix;
                dense_cross += &wp_mat.dot(&b_mat.t());
            }
            let structured_cross = cross_term(&us, &ws, m);
            for (a, b) in dense_cross.iter().zip(structured_cross.iter()) {
                assert!((a - b).abs() <= 1e-10, "cross mismatch: {} vs {}", a, b);
            }
        }

        // full coupling objective (gamma / P scaling included)
        let cfg = HmtmlConfig {
            gamma: 1.3,
            gamma_m: 0.0,
            rank: r,
            drop_loss: true,
            ..HmtmlConfig::default()
        };
        let structured = objective(&us, &[], &ws, &cfg).unwrap();
        let dense = cfg.gamma / p as f64 * dense_coupling(&us, &ws);
        assert!(
            (structured - dense).abs() <= 1e-10,
            "objective mismatch: {} vs {}",
            structured,
            dense
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {:?}", elapsed);
    println!(
        "ACCEPTANCE 2 (structured coupling vs dense tensor oracle): PASS ({:?})",
        elapsed
    );
}

// ------------------------------------------------------------ criterion 3

#[test]
fn criterion_3_unit_norm_divergence_identity() {
    let start = Instant::now();
    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + i);
        let m_total = 2 + (i % 3) as usize; // M in {2,3,4}
        let r = rng.gen_range(1..=3);
        let p = rng.gen_range(1..=4);
        let dims: Vec<usize> = (0..m_total).map(|_| rng.gen_range(2..=5)).collect();
        let us: Vec<Array2<f64>> = dims
            .iter()
            .map(|&d| Array2::from_shape_fn((d, r), |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let ws: Vec<TaskWeights> = dims
            .iter()
            .map(|&d| unit_columns(d, p, &mut rng))
            .collect();

        let lhs = dense_coupling(&us, &ws);

        // closed form valid under unit-norm weights:
        // sum_p 1 - 2 sum_p sum_j prod_m (U_m^T w_m^p)_j + P * sum(had_m U_m^T U_m)
        let mut inner = Array2::<f64>::ones((r, p));
        let mut grams = Array2::<f64>::ones((r, r));
        for (u, w) in us.iter().zip(&ws) {
            inner = &inner * &u.t().dot(&w.weights);
            grams = &grams * &u.t().dot(u);
        }
        let rhs = p as f64 - 2.0 * inner.sum() + p as f64 * grams.sum();

        assert!(
            (lhs - rhs).abs() <= 1e-10,
            "set {}: dense {} vs closed form {}",
            i,
            lhs,
            rhs
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {:?}", elapsed);
    println!(
        "ACCEPTANCE 3 (unit-norm divergence identity, 100 sets): PASS ({:?})",
        elapsed
    );
}

// --------------------------------------------- shared synthetic benchmark

fn benchmark_spec() -> SynthSpec {
    SynthSpec {
        latent_dim: 5,
        dims: vec![12, 9, 7],
        classes: 4,
        per_class: 60,
        noise: 0.7,
        seed: 1,
    }
}

const BENCH_RANK: usize = 5;
const BENCH_GAMMA: f64 = 10.0;
const BENCH_GAMMA_M: f64 = 0.001;

fn benchmark_config() -> ExperimentConfig {
    ExperimentConfig {
        source: DataSource::Synth(benchmark_spec()),
        n_labeled: 5,
        r_grid: vec![BENCH_RANK],
        gamma_grid: vec![BENCH_GAMMA],
        gamma_m_grid: vec![BENCH_GAMMA_M],
        methods: vec![Method::DropReg, Method::DropLoss],
        repetitions: 10,
        seed: 1,
        knn_k: 1,
        base_cfg: HmtmlConfig::default(),
    }
}

fn benchmark_table() -> &'static (ResultTable, f64) {
    static TABLE: OnceLock<(ResultTable, f64)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let start = Instant::now();
        let table = run_experiment(&benchmark_config()).unwrap();
        (table, start.elapsed().as_secs_f64())
    })
}

// ------------------------------------------------------------ criterion 4

#[test]
fn criterion_4_monotone_traces_and_nonnegative_factors() {
    let domains = generate(&benchmark_spec()).unwrap();
    let mut max_outer = 0;
    let mut max_inner = 0;
    let mut max_checks = 0;
    for rep in 0..10u64 {
        let splits = split_labeled(&domains, 5, 1 + rep).unwrap();
        let labeled: Vec<DomainData> = splits.into_iter().map(|(l, _)| l).collect();
        let ws = train_tasks(&labeled, 1 + rep).unwrap();
        let cfg = HmtmlConfig {
            gamma: BENCH_GAMMA,
            gamma_m: BENCH_GAMMA_M,
            rank: BENCH_RANK,
            seed: 1 + rep,
            ..HmtmlConfig::default()
        };
        let state = fit(&labeled, &ws, &cfg).unwrap();
        for pair in state.objective_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-10,
                "trace increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        for u in &state.factors {
            assert!(u.iter().all(|&x| x >= 0.0), "negative factor entry");
        }
        max_outer = max_outer.max(state.outer_iterations);
        max_inner = max_inner.max(state.max_inner_steps);
        max_checks = max_checks.max(state.max_step_checks);
    }
    println!(
        "ACCEPTANCE 4 (monotone traces, nonnegative factors): PASS \
         (observed outer <= {}, inner steps <= {}, step checks <= {}; typical ranges: <10, <20, <50)",
        max_outer, max_inner, max_checks
    );
}

// ------------------------------------------------------------ criterion 5

#[test]
fn criterion_5_synthetic_transfer_beats_euclidean() {
    let (table, secs) = benchmark_table();
    let eu = table.avg_accuracy(Method::Eu, 0).unwrap();
    let full = table.avg_accuracy(Method::Hmtml, BENCH_RANK).unwrap();
    assert!(
        full >= eu + 0.05,
        "learned {} vs baseline {}: margin {}",
        full,
        eu,
        full - eu
    );
    assert!(*secs < 120.0, "benchmark took {}s", secs);
    println!(
        "ACCEPTANCE 5 (synthetic transfer benefit): PASS (learned {:.3} vs baseline {:.3}, {:.1}s)",
        full, eu, secs
    );
}

// ------------------------------------------------------------ criterion 6

#[test]
fn criterion_6_ablations_do_not_beat_full_model() {
    let (table, secs) = benchmark_table();
    let full = table.avg_accuracy(Method::Hmtml, BENCH_RANK).unwrap();
    let drop_reg = table.avg_accuracy(Method::DropReg, BENCH_RANK).unwrap();
    let drop_loss = table.avg_accuracy(Method::DropLoss, BENCH_RANK).unwrap();
    assert!(
        full >= drop_reg,
        "full {} < coupling-ablated {}",
        full,
        drop_reg
    );
    assert!(
        full >= drop_loss,
        "full {} < loss-ablated {}",
        full,
        drop_loss
    );
    assert!(*secs < 300.0, "benchmark took {}s", secs);
    println!(
        "ACCEPTANCE 6 (ablation ordering): PASS (full {:.3} >= drop_reg {:.3}, drop_loss {:.3})",
        full, drop_reg, drop_loss
    );
}

// ------------------------------------------------------------ criterion 7

#[test]
fn criterion_7_insensitive_to_init_and_update_order() {
    let domains = generate(&benchmark_spec()).unwrap();
    let splits = split_labeled(&domains, 5, 1).unwrap();
    let labeled: Vec<DomainData> = splits.into_iter().map(|(l, _)| l).collect();
    let ws = train_tasks(&labeled, 1).unwrap();
    let dims: Vec<usize> = labeled.iter().map(|d| d.dim()).collect();
    let cfg = HmtmlConfig {
        gamma: BENCH_GAMMA,
        gamma_m: BENCH_GAMMA_M,
        rank: BENCH_RANK,
        eps_outer: 1e-6,
        max_outer: 60,
        seed: 1,
        ..HmtmlConfig::default()
    };
    let orders: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut finals = Vec::new();
    for init_seed in 100..105u64 {
        let initial = random_init(&dims, cfg.rank, init_seed);
        for order in &orders {
            let opts = FitOptions {
                initial: Some(initial.clone()),
                update_order: Some(order.to_vec()),
            };
            let state = fit_with_options(&labeled, &ws, &cfg, &opts).unwrap();
            finals.push(*state.objective_trace.last().unwrap());
        }
    }
    let max = finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = finals.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = (max - min) / min.abs();
    assert!(
        spread <= 0.05,
        "objective spread {} over 5 inits x 6 orders (min {}, max {})",
        spread,
        min,
        max
    );
    println!(
        "ACCEPTANCE 7 (init/order insensitivity): PASS (relative spread {:.4})",
        spread
    );
}

// ------------------------------------------------------------ criterion 8

fn confusion_oracle(preds: &[usize], truth: &[usize], c: usize) -> f64 {
    let mut cm = vec![vec![0usize; c + 1]; c + 1];
    for (&p, &t) in preds.iter().zip(truth) {
        cm[t][p] += 1;
    }
    let mut sum = 0.0;
    for class in 1..=c {
        let tp = cm[class][class] as f64;
        let pred_total: usize = (1..=c).map(|t| cm[t][class]).sum();
        let truth_total: usize = (1..=c).map(|p| cm[class][p]).sum();
        let precision = if pred_total > 0 { tp / pred_total as f64 } else { 0.0 };
        let recall = if truth_total > 0 { tp / truth_total as f64 } else { 0.0 };
        if precision + recall > 0.0 {
            sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    sum / c as f64
}

#[test]
fn criterion_8_component_correctness() {
    // macro-F1 vs confusion-matrix oracle on 50 fixtures
    let mut rng = ChaCha8Rng::seed_from_u64(3000);
    for _ in 0..50 {
        let c = rng.gen_range(2..=6);
        let n = rng.gen_range(5..=40);
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=c)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=c)).collect();
        let ours = macro_f1(&preds, &truth, c).unwrap();
        let oracle = confusion_oracle(&preds, &truth, c);
        assert!((ours - oracle).abs() <= 1e-12, "{} vs {}", ours, oracle);
    }

    // KPCA: extracted training features have diagonal covariance, and the
    // dropped-eigenvalue mass bounds the truncation error
    let samples = Array2::from_shape_fn((25, 6), |_| rng.gen_range(-1.0..1.0));
    let model = kpca_fit(
        samples.view(),
        ComponentSelection::Energy(1.0),
        Kernel::Gaussian { omega: 0.0 },
        OmegaMode::MeanPairwiseDistance,
    )
    .unwrap();
    let feats = model.train_features();
    let n = feats.nrows() as f64;
    let q = feats.ncols();
    for a in 0..q {
        for b in 0..q {
            let cov = feats.column(a).dot(&feats.column(b)) / n;
            let expect = if a == b { model.eigenvalues()[a] / n } else { 0.0 };
            assert!(
                (cov - expect).abs() <= 1e-8,
                "covariance[{},{}] = {} vs {}",
                a,
                b,
                cov,
                expect
            );
        }
    }
    let truncated = kpca_fit(
        samples.view(),
        ComponentSelection::Dim(q / 2),
        Kernel::Gaussian { omega: 0.0 },
        OmegaMode::MeanPairwiseDistance,
    )
    .unwrap();
    let kept: f64 = truncated.eigenvalues().iter().sum();
    let total: f64 = model.eigenvalues().iter().sum();
    let full_sq = feats.mapv(|x| x * x).sum();
    let trunc_sq = truncated.train_features().mapv(|x| x * x).sum();
    let dropped_mass = full_sq - trunc_sq;
    assert!(
        (dropped_mass - (total - kept)).abs() <= 1e-8,
        "truncation bound violated: dropped {} vs eigen mass {}",
        dropped_mass,
        total - kept
    );

    // codebook invariants
    for &(c, p) in &[(2usize, 20usize), (6, 40), (15, 60)] {
        let code = hmtml::encoding::generate_codebook(c, p, 77).unwrap();
        code.validate().unwrap();
    }

    // identity-metric k-NN equals the Euclidean oracle exactly
    let train = random_domain(30, 5, 3, &mut rng);
    let queries = Array2::from_shape_fn((20, 5), |_| rng.gen_range(-1.0..1.0));
    let identity = recover_metric(&Array2::eye(5));
    let learned = knn_predict(&train, queries.view(), &identity, 3).unwrap();
    let oracle = knn_predict(&train, queries.view(), &EuclideanMetric, 3).unwrap();
    assert_eq!(learned, oracle);

    println!("ACCEPTANCE 8 (component correctness suite): PASS");
}

// ------------------------------------------------------------ criterion 9

#[test]
fn criterion_9_experiment_outputs_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let out = dir.path().join(format!("table_{}.csv", tag));
        let curves = dir.path().join(format!("curves_{}.csv", tag));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_hmtml"))
            .args([
                "experiment",
                "--seed",
                "7",
                "--dims",
                "6,5",
                "--classes",
                "2",
                "--per-class",
                "10",
                "--noise",
                "0.4",
                "--labels",
                "2",
                "--reps",
                "2",
                "--r-grid",
                "2",
                "--gamma-grid",
                "0.1,1",
                "--gamma-m-grid",
                "0.01",
                "--methods",
                "drop_reg",
            ])
            .arg("--out")
            .arg(&out)
            .arg("--curves")
            .arg(&curves)
            .status()
            .unwrap();
        assert!(status.success());
        (
            std::fs::read(&out).unwrap(),
            std::fs::read(&curves).unwrap(),
        )
    };
    let (table_a, curves_a) = run("a");
    let (table_b, curves_b) = run("b");
    assert_eq!(table_a, table_b, "result tables differ between runs");
    assert_eq!(curves_a, curves_b, "curve files differ between runs");
    assert!(!table_a.is_empty() && !curves_a.is_empty());
    println!("ACCEPTANCE 9 (byte-identical experiment outputs): PASS");
}

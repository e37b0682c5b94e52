use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hmtml::metric::{knn_predict, EuclideanMetric, FactorMetric};
use hmtml::HmtmlConfig;
use hmtml_cli::data::{load_domains, save_domain};
use hmtml_cli::experiment::{
    run_experiment, train_tasks, DataSource, ExperimentConfig, Method,
};
use hmtml_cli::metrics::{accuracy, macro_f1};
use hmtml_cli::model_io::{load_model, save_model};
use hmtml_cli::split::split_labeled;
use hmtml_cli::synth::{generate, SynthSpec};

#[derive(Parser)]
#[command(
    name = "hmtml",
    about = "Heterogeneous multi-task metric learning harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SynthArgs {
    /// Latent dimension shared by all domains
    #[arg(long, default_value_t = 5)]
    latent: usize,
    /// Comma-separated ambient dimension per domain, e.g. 12,9,7
    #[arg(long, default_value = "12,9,7")]
    dims: String,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 60)]
    per_class: usize,
    /// Noise standard deviation per coordinate
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
}

impl SynthArgs {
    fn to_spec(&self, seed: u64) -> Result<SynthSpec> {
        Ok(SynthSpec {
            latent_dim: self.latent,
            dims: parse_usize_list(&self.dims)?,
            classes: self.classes,
            per_class: self.per_class,
            noise: self.noise,
            seed,
        })
    }
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Comma-separated rank grid
    #[arg(long, default_value = "5")]
    r_grid: String,
    /// Comma-separated coupling-weight grid
    #[arg(long, default_value = "0.1,1,10")]
    gamma_grid: String,
    /// Comma-separated sparsity-weight grid
    #[arg(long, default_value = "0.001,0.01,0.1")]
    gamma_m_grid: String,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Domain CSV files (repeat per domain); omit to use the synthetic generator
    #[arg(long = "domain")]
    domains: Vec<PathBuf>,
    #[command(flatten)]
    synth: SynthArgs,
    /// Labeled samples per class
    #[arg(long, default_value_t = 5)]
    labels: usize,
    #[command(flatten)]
    grids: GridArgs,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Base RNG seed (repetition i uses seed + i)
    #[arg(long)]
    seed: u64,
    /// Neighbors for k-NN evaluation
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Result table CSV path
    #[arg(long)]
    out: PathBuf,
    /// Per-rank curve CSV path
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain dataset as CSV files
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        seed: u64,
        /// Directory receiving domain_0.csv, domain_1.csv, ...
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train metrics on full domain files and save the factor matrices
    Train {
        #[arg(long = "domain", required = true)]
        domains: Vec<PathBuf>,
        #[arg(long, default_value_t = 5)]
        rank: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.01)]
        gamma_m: f64,
        #[arg(long)]
        seed: u64,
        /// Model file path
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved model with k-NN against the Euclidean baseline
    Eval {
        #[arg(long = "domain", required = true)]
        domains: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        /// Labeled (reference) samples per class
        #[arg(long, default_value_t = 5)]
        labels: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
    /// Full protocol: split, tune, fit, evaluate over repetitions
    Experiment {
        #[command(flatten)]
        run: RunArgs,
        /// Extra methods beyond hmtml and eu (drop_reg, drop_loss,
        /// frobenius_reg, no_nonneg)
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
    /// Experiment preset including every ablation variant
    Ablate {
        #[command(flatten)]
        run: RunArgs,
    },
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad integer {:?}", t)))
        .collect()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number {:?}", t)))
        .collect()
}

fn experiment_config(run: &RunArgs, methods: Vec<Method>) -> Result<ExperimentConfig> {
    let source = if run.domains.is_empty() {
        DataSource::Synth(run.synth.to_spec(run.seed)?)
    } else {
        DataSource::Files(run.domains.clone())
    };
    Ok(ExperimentConfig {
        source,
        n_labeled: run.labels,
        r_grid: parse_usize_list(&run.grids.r_grid)?,
        gamma_grid: parse_f64_list(&run.grids.gamma_grid)?,
        gamma_m_grid: parse_f64_list(&run.grids.gamma_m_grid)?,
        methods,
        repetitions: run.reps,
        seed: run.seed,
        knn_k: run.k,
        base_cfg: HmtmlConfig::default(),
    })
}

fn run_and_emit(run: &RunArgs, methods: Vec<Method>) -> Result<()> {
    let cfg = experiment_config(run, methods)?;
    let table = run_experiment(&cfg)?;
    std::fs::write(&run.out, table.to_csv())
        .with_context(|| format!("writing {}", run.out.display()))?;
    println!("wrote {}", run.out.display());
    if let Some(curves) = &run.curves {
        std::fs::write(curves, table.curves_csv())
            .with_context(|| format!("writing {}", curves.display()))?;
        println!("wrote {}", curves.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .init();
    match Cli::parse().command {
        Command::Synth {
            synth,
            seed,
            out_dir,
        } => {
            let spec = synth.to_spec(seed)?;
            let domains = generate(&spec)?;
            std::fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            for (m, d) in domains.iter().enumerate() {
                let path = out_dir.join(format!("domain_{}.csv", m));
                save_domain(&path, d)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Train {
            domains,
            rank,
            gamma,
            gamma_m,
            seed,
            out,
        } => {
            let (data, _) = load_domains(&domains)?;
            if data.len() < 2 {
                bail!("training needs at least two domains");
            }
            let ws = train_tasks(&data, seed)?;
            let cfg = HmtmlConfig {
                gamma,
                gamma_m,
                rank,
                seed,
                ..HmtmlConfig::default()
            };
            let state = hmtml::fit(&data, &ws, &cfg)?;
            save_model(&out, &state.factors)?;
            println!(
                "wrote {} (objective {:.6} after {} outer iterations)",
                out.display(),
                state.objective_trace.last().unwrap(),
                state.outer_iterations
            );
        }
        Command::Eval {
            domains,
            model,
            labels,
            seed,
            k,
        } => {
            let (data, _) = load_domains(&domains)?;
            let factors = load_model(&model)?;
            if factors.len() != data.len() {
                bail!(
                    "model has {} domains, data has {}",
                    factors.len(),
                    data.len()
                );
            }
            let splits = split_labeled(&data, labels, seed)?;
            println!("domain,method,accuracy,macro_f1");
            for (m, (labeled, test)) in splits.iter().enumerate() {
                if factors[m].nrows() != labeled.dim() {
                    bail!("model domain {} dimension mismatch", m);
                }
                let c = labeled.num_classes();
                let learned = knn_predict(
                    labeled,
                    test.samples.view(),
                    &FactorMetric { u: &factors[m] },
                    k,
                )?;
                let baseline =
                    knn_predict(labeled, test.samples.view(), &EuclideanMetric, k)?;
                println!(
                    "{},hmtml,{:.6},{:.6}",
                    m,
                    accuracy(&learned, &test.labels)?,
                    macro_f1(&learned, &test.labels, c)?
                );
                println!(
                    "{},eu,{:.6},{:.6}",
                    m,
                    accuracy(&baseline, &test.labels)?,
                    macro_f1(&baseline, &test.labels, c)?
                );
            }
        }
        Command::Experiment { run, methods } => {
            let methods = methods
                .iter()
                .map(|s| Method::parse(s))
                .collect::<Result<Vec<_>>>()?;
            run_and_emit(&run, methods)?;
        }
        Command::Ablate { run } => {
            run_and_emit(&run, Method::all_ablations())?;
        }
    }
    Ok(())
}

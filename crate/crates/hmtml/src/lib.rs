//! Heterogeneous multi-task metric learning.
//!
//! Learns one low-rank Mahalanobis metric per domain jointly across domains
//! with different feature spaces. Domains are connected by a shared task
//! encoding: each domain trains the same set of binary base classifiers from
//! an error-correcting output code, and the rank-1 covariance tensors of the
//! resulting weight vectors are coupled to a common transformation tensor
//! built from the per-domain factor matrices. Minimizing pair losses plus
//! this coupling transfers discriminative structure into domains with few
//! labels.
//!
//! Modules:
//! - [`multilinear`]: dense tensor reference operations (used to verify the
//!   structured closed forms in tests).
//! - [`pairs`]: labeled data containers, pair construction, the smooth pair
//!   loss and its gradient.
//! - [`encoding`]: output-code generation and linear base classifiers.
//! - [`optimizer`]: the joint objective and the alternating projected
//!   gradient solver.
//! - [`metric`]: learned metrics and k-NN classification.
//! - [`preprocess`]: kernel PCA feature extraction.
//!
//! The `parallel` feature (on by default) enables rayon data parallelism in
//! the hot paths; results are bit-identical with it on or off.

pub mod encoding;
pub mod error;
pub mod linalg;
pub mod metric;
pub mod multilinear;
pub mod optimizer;
pub mod pairs;
pub mod preprocess;

pub(crate) mod par;

pub use error::{HmtmlError, Result};
pub use optimizer::{fit, fit_with_options, FitOptions, HmtmlConfig, SolverState};
pub use pairs::DomainData;

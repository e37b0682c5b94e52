//! Data ingestion, synthetic benchmarks, evaluation, and experiment
//! orchestration around the `hmtml` library.

pub mod data;
pub mod experiment;
pub mod loocv;
pub mod metrics;
pub mod model_io;
pub mod split;
pub mod synth;

//! Experiment harness for continual learning from demonstration: dataset
//! files, synthetic task families, sequential training runs with their
//! result bundles, and robustness studies.

// Training allocates and frees megabyte-sized buffers every step; the
// system allocator hands those back to the kernel each time.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod studies;
pub mod synthetic;

pub use config::{ExperimentConfig, Hyperparameters, NodeVariant, TimeMeasure};
pub use dataset::{DataKind, DatasetFile, TaskData};
pub use experiment::{run_experiment, CellLedger, CellMetrics, EvalRow, RunSummary};
pub use synthetic::{gen_synthetic, Shape, SyntheticSpec};

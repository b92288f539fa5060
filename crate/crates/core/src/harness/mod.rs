//! Synthetic ablation harness: data generation, training, strategy comparison,
//! gradient-check suite and report emission.

pub mod ablation;
pub mod gradsuite;
pub mod report;
pub mod task;
pub mod train;

pub use ablation::{flop_table, run_ablation, AblationConfig, AblationReport, OrderingCheck, StrategyResult};
pub use gradsuite::{grad_check_suite, SuiteEntry, SuiteOptions, SuiteReport};
pub use report::{emit_report, eval_metrics_file, render_report, Format, Tabular};
pub use task::{generate_task, Sample, SyntheticTaskConfig, Task};
pub use train::{evaluate, train, train_model, EvalResult, LossPoint, Model, Optimizer, TrainConfig, TrainOutcome};

//! Dataset assembly, optimization and the experiment drivers.

mod ablation;
mod adam;
mod dataset;
mod evaluate;
mod scheduler;
mod trainer;

pub use ablation::{method_label, run_ablation, train_and_evaluate, AblationReport, RunResult, ABLATION_RUNS};
pub use adam::{adam_step, AdamState, ADAM_EPS, BETA1, BETA2};
pub use dataset::{build_dataset, calibrate_sigma0, fnv1a, DatasetConfig, DatasetSplit, NoiseProfile, SplitMeta};
pub use evaluate::{baseline_magnitudes, evaluate, BASELINE_METHOD};
pub use scheduler::{lr_trace, PlateauScheduler};
pub use trainer::{
    eval_loss, params_container, split_validation, train, EpochRecord, RunOptions, TrainConfig, TrainOutcome, TrainingHistory,
    BEST_CHECKPOINT, LAST_CHECKPOINT,
};

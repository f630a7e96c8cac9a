//! AdamW, the step learning-rate schedule, the training loop and the
//! evaluation metrics.

mod eval;
mod fit;
pub mod metrics;
mod optim;
mod probe;

pub use eval::{
    evaluate, evaluate_constant, evaluate_with, mean_baseline, mean_velocity, score_image,
    EvalReport, SampleScore,
};
pub use fit::{
    checkpoint_fingerprint, config_fingerprint, lr_at, predict_samples, read_curve, stack, train,
    EpochRecord, TrainConfig, TrainSummary, BEST_CHECKPOINT, LAST_CHECKPOINT, LOSS_CURVE,
    OPTIM_STATE,
};
pub use optim::{AdamWConfig, OptimState};
pub use probe::{paper_scenarios, probe_generalization, ProbeReport, Scenario, ScenarioResult};

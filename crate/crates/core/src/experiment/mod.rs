//! Training with early stopping, two-phase baselines, the loss-weight sweep,
//! reduction studies and result persistence.

mod eval;
mod persist;
mod study;
mod sweep;
mod train;

pub use eval::{evaluate, score_split, EvalReport, Provenance, ScoreSet};
pub use persist::{
    curve, curve_csv, find_reports, median, prepare_dir, read_report, summary_csv, write_json, write_run_dir, CurvePoint, RunArtifacts,
    REPORT_FILE,
};
pub use study::{run_prior_reduction_study, run_sample_reduction_study, study_p, StudyConfig, StudyRun};
pub use sweep::{default_p_grid, select_best, sweep_loss_weight, SweepResult, SweepRow};
pub use train::{
    finetune, pretrain_embedding, train, train_two_phase, EarlyStopper, EpochRecord, RunHistory, StopCriterion, StopReason, TrainConfig,
    TrainOutcome, TwoPhaseOutcome, Verdict,
};

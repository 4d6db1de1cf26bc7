//! Two-stage token pruning: a calibrated global cutoff with modality
//! retention after the middle layer, then per-layer removal of the
//! lowest-scoring fraction of remaining tokens by last-query attention.

mod active;
mod config;
mod global;
mod pipeline;
mod strategy;

pub use active::{
    apply_fine, apply_fine_with, fine_scores, removal_count, ActiveSet, ImportanceScores,
    SCORE_SUM_TOL,
};
pub use config::{
    GlobalRule, PruneConfig, Retention, DEFAULT_FINE_RATIO, DEFAULT_KEEP_AUDIO,
    DEFAULT_KEEP_FRAMES, DEFAULT_TAU,
};
pub use global::{
    apply_global, calibrate_global, calibrate_global_with, median_ceil, sample_cutoff, Calibration,
    CalibrationSample,
};
pub use pipeline::{LayerDecision, Pipeline, PruneDecisions, Stage};
pub use strategy::{strategy_variant, Strategy};

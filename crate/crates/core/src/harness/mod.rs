//! Experiment driver: synthetic prompts, needle tasks, attention traces,
//! calibration, pruned-versus-vanilla runs, sweeps and reports.

pub mod experiment;
pub mod needle;
pub mod recipe;
pub mod sweep;
pub mod trace;

pub use experiment::{
    calibrate, calibrate_traces, heatmaps, heatmaps_from, run_experiment, run_with_calibration,
    summary_csv, write_run, ExperimentSpec, NeedleSummary, Repetition, RunOutput, RunReport,
    SummaryRow,
};
pub use needle::{gen_needle_task, install_needle_head, NeedlePlacement, NeedleTask};
pub use recipe::{gen_sequence, SequenceRecipe, Vocabulary};
pub use sweep::{run_sweep, variants, write_sweep, SweepAxes, SweepReport};
pub use trace::{load_trace, write_trace};

//! Two-stage token pruning for audio-visual decoder inference.
//!
//! A deterministic toy decoder consumes visual, audio and text tokens. After
//! the middle layer a global stage drops later visual/audio tokens using a
//! position cutoff calibrated offline from attention rollout, plus a
//! modality retention rule. Every later layer then removes the
//! lowest-scoring fraction of the remaining tokens, ranked by the
//! head-averaged attention of the last query. At inference time neither
//! stage needs a full attention matrix.
//!
//! Modules:
//! * [`tensor`]: dense `f64` kernels.
//! * [`model`]: the toy decoder, KV cache and greedy decoding.
//! * [`rollout`]: residual-mixed attention rollout and influence scores.
//! * [`pruning`]: calibration, global/fine stages and ablation policies.
//! * [`flops`]: theoretical FLOPs relative to the unpruned run.
//! * [`harness`]: synthetic inputs, needle tasks, trace files, experiment
//!   runs and reports.

pub mod error;
pub mod flops;
pub mod harness;
pub mod model;
pub mod pruning;
pub mod rollout;
pub mod tensor;

pub use error::{Error, Result};

//! Theoretical decoder FLOPs of a pruning schedule, normalized so the
//! unpruned schedule scores exactly 100.
//!
//! Per layer with `n` tokens, model width `d` and FFN width `m`:
//! `4·n·d² + 2·n²·d + 2·n·d·m` (q/k/v/o projections, attention scores and
//! weighted values, FFN). Encoders are not counted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::pruning::removal_count;

pub const FORMULA: &str = "4*n*d^2 + 2*n^2*d + 2*n*d*m per decoder layer";
pub const SCOPE: &str = "decoder layers only; audio/visual encoders excluded";

fn checked(parts: &[Option<u64>]) -> Result<u64> {
    parts
        .iter()
        .try_fold(0u64, |acc, p| p.and_then(|v| acc.checked_add(v)))
        .ok_or_else(|| Error::config("FLOP count overflows u64"))
}

/// Exact FLOPs of one layer over `n` tokens.
pub fn layer_flops(n: usize, d: usize, m: usize) -> Result<u64> {
    if n == 0 || d == 0 || m == 0 {
        return Err(Error::config(format!(
            "layer_flops needs positive sizes, got n={n}, d={d}, m={m}"
        )));
    }
    let (n, d, m) = (n as u64, d as u64, m as u64);
    checked(&[
        4u64.checked_mul(n)
            .and_then(|v| v.checked_mul(d))
            .and_then(|v| v.checked_mul(d)),
        2u64.checked_mul(n)
            .and_then(|v| v.checked_mul(n))
            .and_then(|v| v.checked_mul(d)),
        2u64.checked_mul(n)
            .and_then(|v| v.checked_mul(d))
            .and_then(|v| v.checked_mul(m)),
    ])
}

/// Active token count per decoder layer during prefill.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSchedule {
    /// Unpruned length `K`; the vanilla schedule is `K` at every layer.
    pub prompt_len: usize,
    pub counts: Vec<usize>,
}

impl LayerSchedule {
    pub fn new(prompt_len: usize, counts: Vec<usize>) -> Result<Self> {
        if counts.contains(&0) {
            return Err(Error::config("schedule counts must be at least 1"));
        }
        if counts.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config(format!(
                "schedule counts must be non-increasing: {counts:?}"
            )));
        }
        Ok(Self { prompt_len, counts })
    }

    pub fn constant(prompt_len: usize, layers: usize) -> Self {
        Self {
            prompt_len,
            counts: vec![prompt_len; layers],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub per_layer: Vec<u64>,
    pub total: u64,
    pub vanilla_total: u64,
    /// `100 × total / vanilla_total`.
    pub relative: f64,
    pub counts: Vec<usize>,
    pub prompt_len: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub layers: usize,
    pub formula: String,
    pub scope: String,
    /// Decode-step FLOPs, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationFlops>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationFlops {
    pub steps: usize,
    pub total: u64,
    pub vanilla_total: u64,
    pub relative: f64,
}

/// Prefill FLOPs of `sched` relative to the constant-`K` schedule.
pub fn schedule_flops(sched: &LayerSchedule, cfg: &ModelConfig) -> Result<FlopsReport> {
    if sched.counts.len() != cfg.layers {
        return Err(Error::config(format!(
            "schedule has {} layers but model has {}",
            sched.counts.len(),
            cfg.layers
        )));
    }
    let (d, m) = (cfg.model_dim, cfg.ffn_dim);
    let per_layer = sched
        .counts
        .iter()
        .map(|&n| layer_flops(n, d, m))
        .collect::<Result<Vec<_>>>()?;
    let total = checked(&per_layer.iter().map(|v| Some(*v)).collect::<Vec<_>>())?;
    let vanilla_layer = layer_flops(sched.prompt_len, d, m)?;
    let vanilla_total = vanilla_layer
        .checked_mul(cfg.layers as u64)
        .ok_or_else(|| Error::config("FLOP count overflows u64"))?;
    Ok(FlopsReport {
        per_layer,
        total,
        vanilla_total,
        relative: relative(total, vanilla_total),
        counts: sched.counts.clone(),
        prompt_len: sched.prompt_len,
        model_dim: d,
        ffn_dim: m,
        layers: cfg.layers,
        formula: FORMULA.to_string(),
        scope: SCOPE.to_string(),
        generation: None,
    })
}

fn relative(total: u64, vanilla: u64) -> f64 {
    100.0 * (total as f64 / vanilla as f64)
}

/// FLOPs of one decode step at one layer when `cached` rows are attended
/// (the new token adds one more key).
pub fn step_flops(cached: usize, d: usize, m: usize) -> Result<u64> {
    if d == 0 || m == 0 {
        return Err(Error::config("step_flops needs positive widths"));
    }
    let (n, d, m) = ((cached + 1) as u64, d as u64, m as u64);
    Ok(4 * d * d + 2 * n * d + 2 * d * m)
}

/// Adds `steps` decode steps over caches sized by the prefill schedule.
pub fn with_generation(mut report: FlopsReport, steps: usize) -> Result<FlopsReport> {
    let (d, m) = (report.model_dim, report.ffn_dim);
    let mut total = 0u64;
    let mut vanilla = 0u64;
    for t in 0..steps {
        for &n in &report.counts {
            total += step_flops(n + t, d, m)?;
            vanilla += step_flops(report.prompt_len + t, d, m)?;
        }
    }
    report.generation = Some(GenerationFlops {
        steps,
        total,
        vanilla_total: vanilla,
        relative: relative(total, vanilla),
    });
    Ok(report)
}

/// Token-count model of a pruned prefill without running a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleProjection {
    pub layers: usize,
    pub middle_layer: usize,
    pub prompt_len: usize,
    /// Tokens never eligible for fine pruning (text, retained audio, last).
    pub protected: usize,
    /// Tokens removed by the global stage.
    pub global_removed: usize,
    pub fine_ratio: f64,
    pub min_active: usize,
}

impl ScheduleProjection {
    /// Layers `1..=middle` see every token; layer `middle + 1` sees the
    /// globally pruned set; each later layer loses
    /// `floor(P × prunable)` more, never below `min_active`.
    pub fn schedule(&self) -> Result<LayerSchedule> {
        if self.middle_layer == 0 || self.middle_layer > self.layers {
            return Err(Error::config("middle layer outside [1, L]"));
        }
        if self.global_removed >= self.prompt_len {
            return Err(Error::config("global stage cannot remove every token"));
        }
        let mut counts = vec![self.prompt_len; self.middle_layer];
        let mut n = self.prompt_len - self.global_removed;
        while counts.len() < self.layers {
            counts.push(n);
            let prunable = n.saturating_sub(self.protected);
            let r = removal_count(self.fine_ratio, prunable).min(n.saturating_sub(self.min_active));
            n -= r;
        }
        LayerSchedule::new(self.prompt_len, counts)
    }
}

/// Decoder-only settings resembling the two 7B-class models studied, with
/// token counts of the same order. Dimensions and counts are illustrative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSetting {
    /// Video block before a 1,496-token audio block; global stage removes
    /// two-thirds of the audio-visual tokens.
    ContiguousAv,
    /// Frame-interleaved audio-visual tokens; global stage removes just
    /// over half of them.
    InterleavedAv,
}

impl ReferenceSetting {
    pub fn model(self) -> ModelConfig {
        ModelConfig {
            layers: 28,
            heads: 28,
            model_dim: 3584,
            ffn_dim: 18944,
            vocab_size: 152064,
            seed: 0,
            end_token: None,
        }
    }

    pub fn projection(self) -> ScheduleProjection {
        let (visual, audio, text, removed_fraction, protected_mm) = match self {
            ReferenceSetting::ContiguousAv => (1152usize, 1496usize, 64usize, 2.0 / 3.0, 10usize),
            ReferenceSetting::InterleavedAv => (1280, 1000, 64, 0.55, 0),
        };
        let mm = visual + audio;
        ScheduleProjection {
            layers: 28,
            middle_layer: 14,
            prompt_len: mm + text,
            protected: text + protected_mm,
            global_removed: (mm as f64 * removed_fraction).ceil() as usize,
            fine_ratio: 0.20,
            min_active: text + 1,
        }
    }

    pub fn report(self) -> Result<FlopsReport> {
        schedule_flops(&self.projection().schedule()?, &self.model())
    }
}

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::active::ActiveSet;
use super::config::{GlobalRule, PruneConfig, Retention};
use crate::error::{Error, Result};
use crate::model::{AttentionTensor, Layout, Modality, TokenSequence};
use crate::rollout::{influence_scores, rollout_at, QueryRows};

/// Global stage at inference: drop visual/audio tokens at or past `cutoff`,
/// then apply the retention rule. Needs no attention maps.
pub fn apply_global(
    sequence: &TokenSequence,
    cutoff: usize,
    cfg: &PruneConfig,
) -> Result<ActiveSet> {
    let n = sequence.len();
    if cutoff > n {
        return Err(Error::config(format!(
            "cutoff {cutoff} beyond sequence length {n}"
        )));
    }
    if let (Retention::KeepFirstFrames { .. }, Layout::Contiguous) =
        (cfg.retention, sequence.layout())
    {
        return Err(Error::config(
            "KeepFirstFrames retention requires a frame-interleaved layout",
        ));
    }
    let mut indices = Vec::with_capacity(n);
    let mut protected = Vec::with_capacity(n);
    let mut audio_seen = 0;
    for (pos, m) in sequence.modalities().into_iter().enumerate() {
        let modality_protected = cfg.is_protected_modality(m);
        let (keep, retained) = if !m.is_multimodal() || modality_protected {
            (true, false)
        } else {
            match cfg.retention {
                Retention::None => (pos < cutoff, false),
                Retention::KeepFirstAudio { k } => {
                    if m == Modality::Audio {
                        audio_seen += 1;
                        let kept = audio_seen <= k;
                        (kept, kept)
                    } else {
                        (pos < cutoff, false)
                    }
                }
                Retention::KeepFirstFrames { k } => {
                    let frame = sequence
                        .frame_of(pos)
                        .expect("multimodal position has a frame");
                    (frame < k, false)
                }
            }
        };
        if keep {
            indices.push(pos);
            protected.push(modality_protected || (retained && cfg.protect_retained));
        }
    }
    ActiveSet::new(indices, protected)
}

/// One calibration sample: captured attention plus the sequence layout it
/// was captured on.
#[derive(Debug, Clone)]
pub struct CalibrationSample {
    pub sequence: TokenSequence,
    pub attention: Vec<AttentionTensor>,
}

/// Outcome of global-cutoff calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub cutoff: usize,
    pub per_sample_cutoffs: Vec<usize>,
    /// How per-sample cutoffs are combined.
    pub aggregation: String,
    pub tau: f64,
    pub alpha: f64,
    pub middle_layer: usize,
    pub query_rows: QueryRows,
    /// Smallest and largest multimodal influence score seen.
    pub score_range: (f64, f64),
    /// Mean influence per position across samples covering it.
    pub profile: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Per-sample cutoff: one past the last visual/audio position whose
/// influence reaches `tau`, or the sequence length when no visual/audio
/// token lies at or beyond that point.
pub fn sample_cutoff(sequence: &TokenSequence, scores: &[f64], tau: f64) -> usize {
    let mods = sequence.modalities();
    let cutoff = mods
        .iter()
        .zip(scores)
        .enumerate()
        .filter(|(_, (m, s))| m.is_multimodal() && **s >= tau)
        .map(|(i, _)| i + 1)
        .max()
        .unwrap_or(0);
    if mods[cutoff..].iter().any(|m| m.is_multimodal()) {
        cutoff
    } else {
        sequence.len()
    }
}

/// Median of the cutoffs, rounding half positions up.
pub fn median_ceil(values: &[usize]) -> usize {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]).div_ceil(2)
    }
}

fn threshold_of(cfg: &PruneConfig) -> Result<f64> {
    match cfg.global_rule {
        GlobalRule::RolloutThreshold { tau } => Ok(tau),
        GlobalRule::PositionCutoff { .. } => Err(Error::config(
            "calibration needs a rollout_threshold global rule",
        )),
    }
}

struct SampleScores {
    cutoff: usize,
    scores: Vec<f64>,
    modalities: Vec<Modality>,
}

fn score_sample(
    i: usize,
    s: &CalibrationSample,
    cfg: &PruneConfig,
    mid: usize,
    tau: f64,
) -> Result<SampleScores> {
    if s.attention.len() < mid {
        return Err(Error::config(format!(
            "sample {i} has {} layers, fewer than middle layer {mid}",
            s.attention.len()
        )));
    }
    if s.attention.first().map_or(0, |a| a.n()) != s.sequence.len() {
        return Err(Error::config(format!(
            "sample {i}: attention size does not match its sequence length {}",
            s.sequence.len()
        )));
    }
    let r = rollout_at(&s.attention, mid, cfg.alpha)?;
    let scores = influence_scores(&r, &cfg.query_rows.resolve(&s.sequence))?;
    Ok(SampleScores {
        cutoff: sample_cutoff(&s.sequence, &scores, tau),
        scores,
        modalities: s.sequence.modalities(),
    })
}

/// Derives a single position cutoff from rollout at the middle layer over
/// a set of samples.
pub fn calibrate_global(samples: &[CalibrationSample], cfg: &PruneConfig) -> Result<Calibration> {
    if samples.is_empty() {
        return Err(Error::config("calibration needs at least one sample"));
    }
    let layers = samples[0].attention.len();
    calibrate_global_with(samples.len(), layers, cfg, |i| {
        Ok(Cow::Borrowed(&samples[i]))
    })
}

/// Like [`calibrate_global`] but builds samples on demand, so only the
/// samples currently being scored hold attention maps in memory.
pub fn calibrate_global_with<'a, F>(
    count: usize,
    layers: usize,
    cfg: &PruneConfig,
    make: F,
) -> Result<Calibration>
where
    F: Fn(usize) -> Result<Cow<'a, CalibrationSample>> + Sync,
{
    if count == 0 {
        return Err(Error::config("calibration needs at least one sample"));
    }
    let tau = threshold_of(cfg)?;
    cfg.validate()?;
    let mid = cfg.middle_layer_for(layers);
    if mid == 0 {
        return Err(Error::config("middle layer must be at least 1"));
    }
    let per_sample: Vec<SampleScores> = (0..count)
        .into_par_iter()
        .map(|i| score_sample(i, make(i)?.as_ref(), cfg, mid, tau))
        .collect::<Result<_>>()?;

    let cutoffs: Vec<usize> = per_sample.iter().map(|s| s.cutoff).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let max_len = per_sample.iter().map(|s| s.scores.len()).max().unwrap_or(0);
    let mut sums = vec![0.0; max_len];
    let mut counts = vec![0usize; max_len];
    for s in &per_sample {
        for (i, (m, v)) in s.modalities.iter().zip(&s.scores).enumerate() {
            sums[i] += v;
            counts[i] += 1;
            if m.is_multimodal() {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
    }
    let profile = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 })
        .collect();
    let mut warnings = Vec::new();
    if !lo.is_finite() {
        lo = 0.0;
        hi = 0.0;
        warnings.push("no visual or audio tokens in calibration samples".to_string());
    }
    if tau <= 0.0 || tau >= hi {
        warnings.push(format!(
            "tau {tau} outside (0, {hi}); multimodal influence spans [{lo}, {hi}]"
        ));
    }
    Ok(Calibration {
        cutoff: median_ceil(&cutoffs),
        per_sample_cutoffs: cutoffs,
        aggregation: "median, rounded up".to_string(),
        tau,
        alpha: cfg.alpha,
        middle_layer: mid,
        query_rows: cfg.query_rows.clone(),
        score_range: (lo, hi),
        profile,
        warnings,
    })
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Modality, ModelConfig, TokenSequence};
use crate::rollout::{QueryRows, DEFAULT_ALPHA};

/// How the global stage decides which later tokens go.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GlobalRule {
    /// Visual/audio tokens at positions `>= position` are removed.
    PositionCutoff { position: usize },
    /// Calibrate a cutoff from rollout influence scores below `tau`.
    RolloutThreshold { tau: f64 },
}

/// Modality-aware retention applied together with the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Retention {
    /// Keep the first `k` audio tokens, drop every other audio token.
    KeepFirstAudio {
        k: usize,
    },
    /// Keep the first `k` interleaved frames, drop later frames.
    KeepFirstFrames {
        k: usize,
    },
    None,
}

pub const DEFAULT_FINE_RATIO: f64 = 0.20;
pub const DEFAULT_KEEP_AUDIO: usize = 10;
pub const DEFAULT_KEEP_FRAMES: usize = 4;
pub const DEFAULT_TAU: f64 = 0.001;

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_fine_ratio() -> f64 {
    DEFAULT_FINE_RATIO
}

fn default_protected() -> Vec<Modality> {
    vec![Modality::Text, Modality::Generated]
}

fn default_true() -> bool {
    true
}

fn default_rule() -> GlobalRule {
    GlobalRule::RolloutThreshold { tau: DEFAULT_TAU }
}

fn default_retention() -> Retention {
    Retention::KeepFirstAudio {
        k: DEFAULT_KEEP_AUDIO,
    }
}

/// Configuration of the two-stage pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Layer after which global pruning acts; `None` means `L / 2`.
    #[serde(default)]
    pub middle_layer: Option<usize>,
    #[serde(default = "default_rule")]
    pub global_rule: GlobalRule,
    #[serde(default = "default_retention")]
    pub retention: Retention,
    /// Fraction of currently prunable tokens removed per fine layer.
    #[serde(default = "default_fine_ratio")]
    pub fine_ratio: f64,
    /// Modalities that are never pruned. The last token is always protected.
    #[serde(default = "default_protected")]
    pub protected: Vec<Modality>,
    /// Protect the audio prefix kept by `KeepFirstAudio` from fine pruning.
    #[serde(default = "default_true")]
    pub protect_retained: bool,
    /// Floor on the active-set size; `None` means `E + 1`.
    #[serde(default)]
    pub min_active: Option<usize>,
    /// Last layer whose scores drive a fine decision; `None` means `L`.
    #[serde(default)]
    pub fine_end: Option<usize>,
    #[serde(default)]
    pub query_rows: QueryRows,
    /// Keep compacting fine layers on every generated token.
    #[serde(default)]
    pub prune_during_generation: bool,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            middle_layer: None,
            global_rule: default_rule(),
            retention: default_retention(),
            fine_ratio: DEFAULT_FINE_RATIO,
            protected: default_protected(),
            protect_retained: true,
            min_active: None,
            fine_end: None,
            query_rows: QueryRows::default(),
            prune_during_generation: false,
        }
    }
}

impl PruneConfig {
    /// A configuration that removes nothing: cutoff at `k`, no retention, `P = 0`.
    pub fn no_op(k: usize) -> Self {
        Self {
            global_rule: GlobalRule::PositionCutoff { position: k },
            retention: Retention::None,
            fine_ratio: 0.0,
            ..Self::default()
        }
    }

    /// Settings for frame-interleaved inputs: keep the first four frames.
    pub fn interleaved() -> Self {
        Self {
            retention: Retention::KeepFirstFrames {
                k: DEFAULT_KEEP_FRAMES,
            },
            ..Self::default()
        }
    }

    pub fn middle_layer_for(&self, layers: usize) -> usize {
        self.middle_layer.unwrap_or(layers / 2)
    }

    pub fn fine_end_for(&self, layers: usize) -> usize {
        self.fine_end.unwrap_or(layers)
    }

    pub fn min_active_for(&self, seq: &TokenSequence) -> usize {
        self.min_active
            .unwrap_or_else(|| seq.count(Modality::Text) + 1)
    }

    pub fn is_protected_modality(&self, m: Modality) -> bool {
        self.protected.contains(&m)
    }

    /// Checks value ranges that do not depend on a model.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.fine_ratio) {
            return Err(Error::config(format!(
                "fine ratio {} outside [0, 1)",
                self.fine_ratio
            )));
        }
        if self.min_active == Some(0) {
            return Err(Error::config("min_active must be at least 1"));
        }
        if let GlobalRule::RolloutThreshold { tau } = self.global_rule {
            if !tau.is_finite() {
                return Err(Error::config(format!("tau {tau} is not finite")));
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, model: &ModelConfig) -> Result<()> {
        self.validate()?;
        let mid = self.middle_layer_for(model.layers);
        if mid == 0 || mid > model.layers {
            return Err(Error::config(format!(
                "middle layer {mid} outside [1, {}]",
                model.layers
            )));
        }
        if let Some(end) = self.fine_end {
            if end > model.layers {
                return Err(Error::config(format!(
                    "fine_end {end} beyond {} layers",
                    model.layers
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PruneConfig::default();
        assert_eq!(c.middle_layer_for(28), 14);
        assert_eq!(c.fine_ratio, 0.20);
        assert_eq!(c.retention, Retention::KeepFirstAudio { k: 10 });
        assert!(c.is_protected_modality(Modality::Text));
        assert!(!c.is_protected_modality(Modality::Audio));
        c.validate_for(&ModelConfig::default()).unwrap();
    }

    #[test]
    fn range_checks() {
        let m = ModelConfig::default();
        for bad in [
            PruneConfig {
                fine_ratio: 1.0,
                ..Default::default()
            },
            PruneConfig {
                fine_ratio: -0.1,
                ..Default::default()
            },
            PruneConfig {
                alpha: 2.0,
                ..Default::default()
            },
            PruneConfig {
                middle_layer: Some(0),
                ..Default::default()
            },
            PruneConfig {
                middle_layer: Some(29),
                ..Default::default()
            },
            PruneConfig {
                min_active: Some(0),
                ..Default::default()
            },
        ] {
            assert!(bad.validate_for(&m).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn parses_from_toml() {
        let c: PruneConfig = toml::from_str(
            r#"
            fine_ratio = 0.3
            global_rule = { kind = "position_cutoff", position = 40 }
            retention = { kind = "keep_first_frames", k = 4 }
            "#,
        )
        .unwrap();
        assert_eq!(c.global_rule, GlobalRule::PositionCutoff { position: 40 });
        assert_eq!(c.retention, Retention::KeepFirstFrames { k: 4 });
        assert_eq!(c.alpha, 0.5);
    }
}

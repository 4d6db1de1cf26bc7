//! Pruned-versus-vanilla experiment runs and their reports.

use std::borrow::Cow;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::needle::{gen_needle_task, install_needle_head, NeedlePlacement};
use super::recipe::{gen_sequence, SequenceRecipe, Vocabulary};
use super::sweep::SweepAxes;
use super::trace::load_trace;
use crate::error::{Error, Result};
use crate::flops::{schedule_flops, with_generation, FlopsReport, LayerSchedule};
use crate::model::{
    decode, forward_capture, init_model, ModelConfig, ModelWeights, ShapeAudit, TokenSequence,
};
use crate::pruning::{
    calibrate_global_with, Calibration, CalibrationSample, GlobalRule, Pipeline, PruneConfig,
    PruneDecisions, Strategy, DEFAULT_TAU,
};
use crate::rollout::{heatmap_csv, rollout_at};

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CALIBRATION_FILE: &str = "calibration.json";

pub const METRIC_NOTE: &str = "needle pass rate (pruned first answer equals vanilla first answer) \
     stands in for benchmark accuracy";
const FLOPS_NOTE: &str =
    "FLOPs count decoder layers only; embeddings and the output head are excluded";
const CAPTURE_NOTE: &str = "heatmaps and calibration use capture mode (full attention maps); \
     pruned inference does not";

fn default_strategy_global() -> Strategy {
    Strategy::LowInformative
}

fn default_strategy_fine() -> Strategy {
    Strategy::LowAttentive
}

fn default_repetitions() -> usize {
    10
}

fn default_generate() -> usize {
    8
}

fn default_true() -> bool {
    true
}

fn default_needles() -> usize {
    4
}

fn default_calibration_samples() -> usize {
    100
}

/// Everything a run depends on. Loaded from TOML, overridden by flags,
/// and echoed in full by every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub recipe: SequenceRecipe,
    #[serde(default)]
    pub prune: PruneConfig,
    #[serde(default = "default_strategy_global")]
    pub global_strategy: Strategy,
    #[serde(default = "default_strategy_fine")]
    pub fine_strategy: Strategy,
    /// Seeded prompts compared per run.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Greedy tokens generated per prompt.
    #[serde(default = "default_generate")]
    pub generate: usize,
    /// Plant needles and install the retrieval circuit.
    #[serde(default = "default_true")]
    pub needle: bool,
    #[serde(default = "default_needles")]
    pub needles: usize,
    #[serde(default)]
    pub placement: NeedlePlacement,
    /// Synthetic prompts used to calibrate the cutoff.
    #[serde(default = "default_calibration_samples")]
    pub calibration_samples: usize,
    /// Calibrate from attention dumps instead of synthetic captures.
    #[serde(default)]
    pub calibration_traces: Vec<PathBuf>,
    /// Layers whose rollout and head-mean attention get heatmap CSVs.
    #[serde(default)]
    pub heatmap_layers: Vec<usize>,
    /// Add decode-step FLOPs to the report.
    #[serde(default)]
    pub generation_flops: bool,
    #[serde(default)]
    pub sweep: SweepAxes,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelConfig::default(),
            recipe: SequenceRecipe::default(),
            prune: PruneConfig::default(),
            global_strategy: default_strategy_global(),
            fine_strategy: default_strategy_fine(),
            repetitions: default_repetitions(),
            generate: default_generate(),
            needle: true,
            needles: default_needles(),
            placement: NeedlePlacement::default(),
            calibration_samples: default_calibration_samples(),
            calibration_traces: Vec::new(),
            heatmap_layers: Vec::new(),
            generation_flops: false,
            sweep: SweepAxes::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Serde(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.prune.validate_for(&self.model)?;
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        if self.generate == 0 {
            return Err(Error::config("generate must be at least 1"));
        }
        if self.recipe.is_empty() {
            return Err(Error::input("sequence recipe yields zero tokens"));
        }
        if self.fine_strategy.uses_rollout() {
            return Err(Error::config(format!(
                "fine strategy '{}' needs full attention maps; use random, top_attentive or low_attentive",
                self.fine_strategy
            )));
        }
        if self.needs_calibration()
            && self.calibration_traces.is_empty()
            && self.calibration_samples == 0
        {
            return Err(Error::config("calibration_samples must be at least 1"));
        }
        for &l in &self.heatmap_layers {
            if l == 0 || l > self.model.layers {
                return Err(Error::config(format!(
                    "heatmap layer {l} outside [1, {}]",
                    self.model.layers
                )));
            }
        }
        self.vocabulary()?;
        Ok(())
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::new(self.model.vocab_size, self.needles)
    }

    /// Cutoff is auto-calibrated, or an informative ablation needs the
    /// calibrated profile.
    pub fn needs_calibration(&self) -> bool {
        matches!(self.prune.global_rule, GlobalRule::RolloutThreshold { .. })
            || self.global_strategy == Strategy::TopInformative
    }

    /// Prune config used for calibration; a fixed-cutoff run that still
    /// needs a profile calibrates at the default threshold.
    pub fn calibration_config(&self) -> PruneConfig {
        let mut cfg = self.prune.clone();
        if let GlobalRule::PositionCutoff { .. } = cfg.global_rule {
            cfg.global_rule = GlobalRule::RolloutThreshold { tau: DEFAULT_TAU };
        }
        cfg
    }

    /// Short digest of the resolved spec, shared by JSON and CSV output.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&bytes)[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Model weights for this spec, with the needle circuit when enabled.
    pub fn weights(&self) -> Result<ModelWeights> {
        let mut w = init_model(&self.model)?;
        if self.needle {
            install_needle_head(&mut w, &self.vocabulary()?)?;
        }
        Ok(w)
    }

    /// Prompt `index` of `stream`. Calibration and evaluation prompts come
    /// from disjoint streams.
    pub fn prompt(&self, stream: Stream, index: usize) -> Result<Prompt> {
        let seed = derive_seed(self.seed, stream as u64, index as u64);
        let vocab = self.vocabulary()?;
        if self.needle {
            let t = gen_needle_task(&self.recipe, &vocab, seed, self.placement)?;
            Ok(Prompt {
                seed,
                sequence: t.sequence,
                needle: Some((t.needle_position, t.expected_answer)),
            })
        } else {
            Ok(Prompt {
                seed,
                sequence: gen_sequence(&self.recipe, &vocab, seed)?,
                needle: None,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Evaluation = 1,
    Calibration = 2,
}

#[derive(Debug, Clone)]
pub struct Prompt {
    pub seed: u64,
    pub sequence: TokenSequence,
    /// `(position, expected answer)`.
    pub needle: Option<(usize, u32)>,
}

/// SplitMix64 over the base seed, stream and index.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ index.wrapping_mul(0xbf58_476d_1ce4_e5b9).rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Calibrates on synthetic captures, or on the spec's trace files.
pub fn calibrate(spec: &ExperimentSpec, weights: &ModelWeights) -> Result<Calibration> {
    let cfg = spec.calibration_config();
    if !spec.calibration_traces.is_empty() {
        return calibrate_traces(spec, &spec.calibration_traces);
    }
    calibrate_global_with(spec.calibration_samples, spec.model.layers, &cfg, |i| {
        let p = spec.prompt(Stream::Calibration, i)?;
        let attention = forward_capture(weights, &p.sequence)?.attention;
        Ok(Cow::Owned(CalibrationSample {
            sequence: p.sequence,
            attention,
        }))
    })
}

/// Calibrates on attention dumps whose token layout follows the spec's
/// recipe.
pub fn calibrate_traces(spec: &ExperimentSpec, paths: &[PathBuf]) -> Result<Calibration> {
    let cfg = spec.calibration_config();
    let sequence = gen_sequence(&spec.recipe, &spec.vocabulary()?, 0)?;
    let first = paths
        .first()
        .ok_or_else(|| Error::config("no trace files given"))?;
    let layers = load_trace(first)?.len();
    calibrate_global_with(paths.len(), layers, &cfg, |i| {
        let attention = load_trace(&paths[i])?;
        if attention[0].n() != sequence.len() {
            return Err(Error::Format {
                path: paths[i].clone(),
                msg: format!(
                    "trace covers {} tokens but the recipe has {}",
                    attention[0].n(),
                    sequence.len()
                ),
            });
        }
        Ok(Cow::Owned(CalibrationSample {
            sequence: sequence.clone(),
            attention,
        }))
    })
}

/// Outcome for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub index: usize,
    pub seed: u64,
    pub prompt_len: usize,
    pub needle_position: Option<usize>,
    pub expected_answer: Option<u32>,
    pub vanilla_tokens: Vec<u32>,
    pub pruned_tokens: Vec<u32>,
    pub identical: bool,
    /// First generated token agrees with vanilla.
    pub answer_preserved: bool,
    pub active_counts: Vec<usize>,
    pub relative_flops: f64,
    /// Square attention buffers seen by the audit during the pruned decode.
    pub square_attention_allocations: usize,
    pub decisions: PruneDecisions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedleSummary {
    pub tasks: usize,
    pub vanilla_correct: usize,
    pub pruned_correct: usize,
    pub answer_preserved: usize,
    pub pass_rate: f64,
    pub metric: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub config_hash: String,
    pub config: ExperimentSpec,
    pub cutoff: usize,
    pub calibration: Option<Calibration>,
    /// Mean over repetitions.
    pub relative_flops: f64,
    /// FLOPs of the first repetition.
    pub flops: FlopsReport,
    pub identical_outputs: bool,
    pub needle: Option<NeedleSummary>,
    /// Active counts per layer of the first repetition.
    pub active_counts: Vec<usize>,
    pub square_attention_allocations: usize,
    pub heatmaps: Vec<String>,
    pub notes: Vec<String>,
    pub repetitions: Vec<Repetition>,
}

/// Report plus heatmap files, not yet written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub heatmaps: Vec<(String, String)>,
}

fn run_one(
    spec: &ExperimentSpec,
    weights: &ModelWeights,
    cutoff: usize,
    profile: Option<&[f64]>,
    index: usize,
) -> Result<Repetition> {
    let prompt = spec.prompt(Stream::Evaluation, index)?;
    let seq = &prompt.sequence;
    let vanilla = decode(weights, seq, spec.generate, None, None)?;
    let mut pipeline = Pipeline::with_strategies(
        seq,
        spec.model.layers,
        cutoff.min(seq.len()),
        &spec.prune,
        spec.global_strategy,
        spec.fine_strategy,
        profile.map(<[f64]>::to_vec),
        prompt.seed,
    )?;
    let mut audit = ShapeAudit::default();
    let pruned = decode(
        weights,
        seq,
        spec.generate,
        Some(&mut pipeline),
        Some(&mut audit),
    )?;
    let sched = LayerSchedule::new(seq.len(), pruned.prefill_active_counts.clone())?;
    let flops = schedule_flops(&sched, &spec.model)?;
    Ok(Repetition {
        index,
        seed: prompt.seed,
        prompt_len: seq.len(),
        needle_position: prompt.needle.map(|n| n.0),
        expected_answer: prompt.needle.map(|n| n.1),
        identical: vanilla.tokens == pruned.tokens,
        answer_preserved: vanilla.tokens[0] == pruned.tokens[0],
        vanilla_tokens: vanilla.tokens,
        pruned_tokens: pruned.tokens,
        active_counts: pruned.prefill_active_counts,
        relative_flops: flops.relative,
        square_attention_allocations: audit.square_allocations().len(),
        decisions: pipeline.into_decisions(),
    })
}

/// Heatmap CSVs of rollout and head-mean attention for the first
/// evaluation prompt.
pub fn heatmaps(
    spec: &ExperimentSpec,
    weights: &ModelWeights,
    layers: &[usize],
) -> Result<Vec<(String, String)>> {
    if layers.is_empty() {
        return Ok(Vec::new());
    }
    let prompt = spec.prompt(Stream::Evaluation, 0)?;
    let attn = forward_capture(weights, &prompt.sequence)?.attention;
    heatmaps_from(&attn, layers, spec.prune.alpha)
}

pub fn heatmaps_from(
    attn: &[crate::model::AttentionTensor],
    layers: &[usize],
    alpha: f64,
) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for &l in layers {
        if l == 0 || l > attn.len() {
            return Err(Error::config(format!(
                "heatmap layer {l} outside [1, {}]",
                attn.len()
            )));
        }
        let r = rollout_at(attn, l, alpha)?;
        out.push((format!("heatmap_rollout_l{l:02}.csv"), heatmap_csv(&r)));
        out.push((
            format!("heatmap_attention_l{l:02}.csv"),
            heatmap_csv(&attn[l - 1].head_mean()),
        ));
    }
    Ok(out)
}

fn fixed_cutoff(spec: &ExperimentSpec) -> Option<usize> {
    match spec.prune.global_rule {
        GlobalRule::PositionCutoff { position } => Some(position),
        GlobalRule::RolloutThreshold { .. } => None,
    }
}

/// Runs the spec, calibrating first when needed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutput> {
    spec.validate()?;
    let weights = spec.weights()?;
    let calibration = if spec.needs_calibration() {
        Some(calibrate(spec, &weights)?)
    } else {
        None
    };
    run_with_calibration(spec, &weights, calibration)
}

/// Runs the spec with an already computed calibration (shared across
/// sweep variants).
pub fn run_with_calibration(
    spec: &ExperimentSpec,
    weights: &ModelWeights,
    calibration: Option<Calibration>,
) -> Result<RunOutput> {
    spec.validate()?;
    let cutoff = match (fixed_cutoff(spec), &calibration) {
        (Some(c), _) => c,
        (None, Some(cal)) => cal.cutoff,
        (None, None) => return Err(Error::internal("auto cutoff without calibration")),
    };
    let profile = calibration.as_ref().map(|c| c.profile.as_slice());
    let reps: Vec<Repetition> = (0..spec.repetitions)
        .into_par_iter()
        .map(|i| run_one(spec, weights, cutoff, profile, i))
        .collect::<Result<_>>()?;

    let first = &reps[0];
    let mut flops = schedule_flops(
        &LayerSchedule::new(first.prompt_len, first.active_counts.clone())?,
        &spec.model,
    )?;
    if spec.generation_flops {
        flops = with_generation(flops, spec.generate - 1)?;
    }
    let relative_flops = reps.iter().map(|r| r.relative_flops).sum::<f64>() / reps.len() as f64;
    let needle = spec.needle.then(|| {
        let count = |f: &dyn Fn(&Repetition) -> bool| reps.iter().filter(|r| f(r)).count();
        let preserved = count(&|r| r.answer_preserved);
        NeedleSummary {
            tasks: reps.len(),
            vanilla_correct: count(&|r| Some(r.vanilla_tokens[0]) == r.expected_answer),
            pruned_correct: count(&|r| Some(r.pruned_tokens[0]) == r.expected_answer),
            answer_preserved: preserved,
            pass_rate: preserved as f64 / reps.len() as f64,
            metric: METRIC_NOTE.to_string(),
        }
    });
    let heat = heatmaps(spec, weights, &spec.heatmap_layers)?;
    let mut notes = vec![FLOPS_NOTE.to_string()];
    if spec.needle {
        notes.push(METRIC_NOTE.to_string());
    }
    if calibration.is_some() || !heat.is_empty() {
        notes.push(CAPTURE_NOTE.to_string());
    }
    if let Some(cal) = &calibration {
        notes.extend(cal.warnings.iter().cloned());
    }
    let report = RunReport {
        tool: format!("avprune {}", env!("CARGO_PKG_VERSION")),
        config_hash: spec.hash(),
        config: spec.clone(),
        cutoff,
        calibration,
        relative_flops,
        identical_outputs: reps.iter().all(|r| r.identical),
        needle,
        active_counts: first.active_counts.clone(),
        square_attention_allocations: reps.iter().map(|r| r.square_attention_allocations).sum(),
        heatmaps: heat.iter().map(|(n, _)| n.clone()).collect(),
        flops,
        notes,
        repetitions: reps,
    };
    Ok(RunOutput {
        report,
        heatmaps: heat,
    })
}

/// Flat CSV row of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub config_hash: String,
    pub global_strategy: Strategy,
    pub fine_strategy: Strategy,
    pub fine_ratio: f64,
    pub alpha: f64,
    pub cutoff: usize,
    pub repetitions: usize,
    pub relative_flops: f64,
    pub needle_pass_rate: Option<f64>,
    pub identical_outputs: bool,
    pub active_counts: String,
}

impl SummaryRow {
    pub fn of(report: &RunReport, label: &str) -> Self {
        let c = &report.config;
        Self {
            label: label.to_string(),
            config_hash: report.config_hash.clone(),
            global_strategy: c.global_strategy,
            fine_strategy: c.fine_strategy,
            fine_ratio: c.prune.fine_ratio,
            alpha: c.prune.alpha,
            cutoff: report.cutoff,
            repetitions: c.repetitions,
            relative_flops: report.relative_flops,
            needle_pass_rate: report.needle.as_ref().map(|n| n.pass_rate),
            identical_outputs: report.identical_outputs,
            active_counts: report
                .active_counts
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(";"),
        }
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `report.json`, `summary.csv` and heatmaps into `dir`.
pub fn write_run(output: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = vec![
        write_file(dir, REPORT_FILE, &to_json(&output.report)?)?,
        write_file(
            dir,
            SUMMARY_FILE,
            &summary_csv(&[SummaryRow::of(&output.report, "run")])?,
        )?,
    ];
    for (name, csv) in &output.heatmaps {
        written.push(write_file(dir, name, csv)?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            model: ModelConfig {
                layers: 4,
                heads: 4,
                model_dim: 32,
                ffn_dim: 64,
                vocab_size: 64,
                seed: 3,
                end_token: None,
            },
            recipe: SequenceRecipe::Contiguous {
                visual: 10,
                audio: 6,
                text: 4,
            },
            repetitions: 3,
            generate: 3,
            calibration_samples: 4,
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn toml_round_trip_and_partial_tables() {
        let spec = ExperimentSpec::from_toml(
            r#"
            seed = 9
            repetitions = 2
            [model]
            layers = 6
            [prune]
            fine_ratio = 0.1
            "#,
        )
        .unwrap();
        assert_eq!(spec.model.layers, 6);
        assert_eq!(spec.model.model_dim, 128);
        assert_eq!(spec.prune.fine_ratio, 0.1);
        assert_eq!(spec.global_strategy, Strategy::LowInformative);
        let again = ExperimentSpec::from_toml(&spec.to_toml().unwrap()).unwrap();
        assert_eq!(again, spec);
        assert!(ExperimentSpec::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn validation() {
        let ok = tiny_spec();
        ok.validate().unwrap();
        let bad = [
            ExperimentSpec {
                repetitions: 0,
                ..ok.clone()
            },
            ExperimentSpec {
                generate: 0,
                ..ok.clone()
            },
            ExperimentSpec {
                fine_strategy: Strategy::LowInformative,
                ..ok.clone()
            },
            ExperimentSpec {
                heatmap_layers: vec![5],
                ..ok.clone()
            },
        ];
        for b in bad {
            assert!(b.validate().is_err(), "{b:?}");
        }
    }

    #[test]
    fn no_op_run_is_identical_at_100() {
        let spec = ExperimentSpec {
            prune: PruneConfig::no_op(20),
            ..tiny_spec()
        };
        let out = run_experiment(&spec).unwrap().report;
        assert_eq!(out.relative_flops, 100.0);
        assert!(out.identical_outputs);
        assert!(out.calibration.is_none());
        assert_eq!(out.needle.unwrap().pass_rate, 1.0);
    }

    #[test]
    fn auto_cutoff_run() {
        let spec = ExperimentSpec {
            heatmap_layers: vec![2],
            ..tiny_spec()
        };
        let out = run_experiment(&spec).unwrap();
        let r = &out.report;
        let cal = r.calibration.as_ref().unwrap();
        assert_eq!(cal.per_sample_cutoffs.len(), 4);
        assert_eq!(r.cutoff, cal.cutoff);
        assert!(r.relative_flops <= 100.0);
        assert_eq!(r.square_attention_allocations, 0);
        assert_eq!(r.active_counts.len(), 4);
        assert_eq!(out.heatmaps.len(), 2);
        assert!(out.heatmaps[0].1.starts_with("20\n"));
    }

    #[test]
    fn csv_matches_json() {
        let spec = ExperimentSpec {
            prune: PruneConfig {
                global_rule: GlobalRule::PositionCutoff { position: 8 },
                ..PruneConfig::default()
            },
            ..tiny_spec()
        };
        let report = run_experiment(&spec).unwrap().report;
        let csv = summary_csv(&[SummaryRow::of(&report, "run")]).unwrap();
        let mut rd = csv::Reader::from_reader(csv.as_bytes());
        let row: SummaryRow = rd.deserialize().next().unwrap().unwrap();
        assert_eq!(row.config_hash, report.config_hash);
        assert_eq!(row.relative_flops, report.relative_flops);
        assert_eq!(row.cutoff, 8);
        assert_eq!(row.identical_outputs, report.identical_outputs);
        assert_eq!(row.needle_pass_rate, report.needle.map(|n| n.pass_rate));
        let counts: Vec<usize> = row
            .active_counts
            .split(';')
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(counts, report.active_counts);
    }

    #[test]
    fn seeds_are_spread() {
        let a = derive_seed(0, 1, 0);
        assert_ne!(a, derive_seed(0, 2, 0));
        assert_ne!(a, derive_seed(0, 1, 1));
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_eq!(a, derive_seed(0, 1, 0));
    }
}

//! Ablation grids: global strategies, fine strategies, fine ratios and
//! rollout mixing weights, each varied alone around a base spec.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{
    calibrate, run_with_calibration, summary_csv, to_json, write_file, ExperimentSpec, RunReport,
    SummaryRow,
};
use crate::error::{Error, Result};
use crate::pruning::{Calibration, Strategy};

pub const SWEEP_REPORT_FILE: &str = "sweep.json";
pub const SWEEP_SUMMARY_FILE: &str = "sweep.csv";

fn default_fine_ratios() -> Vec<f64> {
    vec![0.0, 0.1, 0.2, 0.3]
}

fn default_global_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_fine_strategies() -> Vec<Strategy> {
    vec![
        Strategy::Random,
        Strategy::TopAttentive,
        Strategy::LowAttentive,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default = "default_fine_ratios")]
    pub fine_ratios: Vec<f64>,
    /// Compared with fine pruning switched off.
    #[serde(default = "default_global_strategies")]
    pub global_strategies: Vec<Strategy>,
    #[serde(default = "default_fine_strategies")]
    pub fine_strategies: Vec<Strategy>,
    #[serde(default)]
    pub alphas: Vec<f64>,
}

impl Default for SweepAxes {
    fn default() -> Self {
        Self {
            fine_ratios: default_fine_ratios(),
            global_strategies: default_global_strategies(),
            fine_strategies: default_fine_strategies(),
            alphas: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub axis: &'static str,
    pub value: String,
    pub spec: ExperimentSpec,
}

impl Variant {
    pub fn label(&self) -> String {
        format!("{}={}", self.axis, self.value)
    }
}

/// Expands `base.sweep` into one spec per axis value, in a fixed order.
pub fn variants(base: &ExperimentSpec) -> Vec<Variant> {
    let axes = &base.sweep;
    let mut out = Vec::new();
    for &s in &axes.global_strategies {
        let mut spec = base.clone();
        spec.global_strategy = s;
        spec.prune.fine_ratio = 0.0;
        out.push(Variant {
            axis: "global_strategy",
            value: s.to_string(),
            spec,
        });
    }
    for &s in &axes.fine_strategies {
        let mut spec = base.clone();
        spec.fine_strategy = s;
        out.push(Variant {
            axis: "fine_strategy",
            value: s.to_string(),
            spec,
        });
    }
    for &p in &axes.fine_ratios {
        let mut spec = base.clone();
        spec.prune.fine_ratio = p;
        out.push(Variant {
            axis: "fine_ratio",
            value: p.to_string(),
            spec,
        });
    }
    for &a in &axes.alphas {
        let mut spec = base.clone();
        spec.prune.alpha = a;
        out.push(Variant {
            axis: "alpha",
            value: a.to_string(),
            spec,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub axis: String,
    pub value: String,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub tool: String,
    pub config_hash: String,
    pub config: ExperimentSpec,
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    pub fn rows(&self) -> Vec<SummaryRow> {
        self.entries
            .iter()
            .map(|e| SummaryRow::of(&e.report, &format!("{}={}", e.axis, e.value)))
            .collect()
    }
}

/// Calibration inputs that differ between variants.
fn calibration_key(spec: &ExperimentSpec) -> String {
    let cfg = spec.calibration_config();
    serde_json::to_string(&(cfg.alpha, cfg.global_rule, cfg.middle_layer, cfg.query_rows))
        .expect("key serializes")
}

/// Runs every variant on a pool of `workers` threads (`0` picks the
/// machine default). Variants sharing calibration inputs share one
/// calibration. Entry order follows [`variants`].
pub fn run_sweep(base: &ExperimentSpec, workers: usize) -> Result<SweepReport> {
    base.validate()?;
    let vars = variants(base);
    if vars.is_empty() {
        return Err(Error::config("sweep has no axis values"));
    }
    for v in &vars {
        v.spec.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::internal(format!("thread pool: {e}")))?;
    pool.install(|| {
        let weights = base.weights()?;
        let mut wanted: BTreeMap<String, &ExperimentSpec> = BTreeMap::new();
        for v in vars.iter().filter(|v| v.spec.needs_calibration()) {
            wanted.entry(calibration_key(&v.spec)).or_insert(&v.spec);
        }
        let calibrations: BTreeMap<String, Calibration> = wanted
            .into_iter()
            .map(|(k, spec)| Ok((k, calibrate(spec, &weights)?)))
            .collect::<Result<_>>()?;
        let entries = vars
            .par_iter()
            .map(|v| {
                let cal = v
                    .spec
                    .needs_calibration()
                    .then(|| calibrations[&calibration_key(&v.spec)].clone());
                let report = run_with_calibration(&v.spec, &weights, cal)?.report;
                Ok(SweepEntry {
                    axis: v.axis.to_string(),
                    value: v.value.clone(),
                    report,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepReport {
            tool: format!("avprune {}", env!("CARGO_PKG_VERSION")),
            config_hash: base.hash(),
            config: base.clone(),
            entries,
        })
    })
}

pub fn write_sweep(report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write_file(dir, SWEEP_REPORT_FILE, &to_json(report)?)?,
        write_file(dir, SWEEP_SUMMARY_FILE, &summary_csv(&report.rows())?)?,
    ])
}

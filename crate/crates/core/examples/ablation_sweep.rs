//! Strategy and fine-ratio ablations on a small model.
//!
//! cargo run --release --example ablation_sweep

use avprune::harness::{run_sweep, ExperimentSpec, SequenceRecipe};
use avprune::model::ModelConfig;
use avprune::pruning::{GlobalRule, PruneConfig};

fn main() -> avprune::Result<()> {
    let spec = ExperimentSpec {
        model: ModelConfig {
            layers: 12,
            heads: 4,
            model_dim: 64,
            ffn_dim: 128,
            vocab_size: 64,
            seed: 2,
            end_token: None,
        },
        recipe: SequenceRecipe::Contiguous {
            visual: 32,
            audio: 16,
            text: 6,
        },
        prune: PruneConfig {
            global_rule: GlobalRule::RolloutThreshold { tau: 0.005 },
            ..PruneConfig::default()
        },
        repetitions: 20,
        generate: 4,
        calibration_samples: 20,
        ..ExperimentSpec::default()
    };
    let report = run_sweep(&spec, 0)?;
    println!(
        "{:<32} {:>7} {:>6} {:>9}",
        "variant", "FLOPs", "pass", "identical"
    );
    for (row, e) in report.rows().iter().zip(&report.entries) {
        let pass = e.report.needle.as_ref().map_or(0.0, |n| n.pass_rate);
        println!(
            "{:<32} {:>7.2} {:>6.2} {:>9}",
            row.label, row.relative_flops, pass, row.identical_outputs
        );
    }
    Ok(())
}

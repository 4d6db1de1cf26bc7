//! Calibrate a global position cutoff from rollout on synthetic prompts,
//! then see how it prunes one prompt.
//!
//! cargo run --release --example calibrate_cutoff

use avprune::harness::calibrate;
use avprune::harness::experiment::Stream;
use avprune::harness::ExperimentSpec;
use avprune::model::Modality;
use avprune::pruning::apply_global;

fn main() -> avprune::Result<()> {
    let spec = ExperimentSpec {
        calibration_samples: 16,
        ..ExperimentSpec::default()
    };
    let weights = spec.weights()?;
    let cal = calibrate(&spec, &weights)?;
    println!("per-sample cutoffs: {:?}", cal.per_sample_cutoffs);
    println!(
        "cutoff {} ({}), tau {}, influence range {:.2e}..{:.2e}",
        cal.cutoff, cal.aggregation, cal.tau, cal.score_range.0, cal.score_range.1
    );

    let seq = spec.prompt(Stream::Evaluation, 0)?.sequence;
    let kept = apply_global(&seq, cal.cutoff, &spec.prune)?;
    for m in [Modality::Visual, Modality::Audio, Modality::Text] {
        let n = kept
            .indices()
            .iter()
            .filter(|&&p| seq.modality_at(p) == Some(m))
            .count();
        println!("{m:?}: {} -> {n}", seq.count(m));
    }
    Ok(())
}

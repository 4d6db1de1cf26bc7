//! Relative FLOPs of projected schedules at 7B-class widths, and of a
//! measured toy-model schedule.
//!
//! cargo run --release --example flops_projection

use avprune::flops::{schedule_flops, LayerSchedule, ReferenceSetting, FORMULA};
use avprune::model::ModelConfig;

fn main() -> avprune::Result<()> {
    println!("per-layer FLOPs: {FORMULA}");
    for s in [
        ReferenceSetting::ContiguousAv,
        ReferenceSetting::InterleavedAv,
    ] {
        let r = s.report()?;
        println!(
            "{s:?}: relative {:.2}  active {:?}",
            r.relative,
            &r.counts[r.layers / 2..]
        );
    }
    let vanilla = schedule_flops(&LayerSchedule::constant(116, 28), &ModelConfig::default())?;
    println!("unpruned: {}", vanilla.relative);
    let toy = [
        vec![116; 14],
        vec![47, 42, 38, 35, 33, 31, 30, 29, 28, 27, 26, 26, 26, 26],
    ]
    .concat();
    let r = schedule_flops(&LayerSchedule::new(116, toy)?, &ModelConfig::default())?;
    println!(
        "toy pruned run: relative {:.2} ({} of {} FLOPs)",
        r.relative, r.total, r.vanilla_total
    );
    Ok(())
}

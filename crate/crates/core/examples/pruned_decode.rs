//! Greedy decoding with the two-stage pipeline; prints each layer decision.
//!
//! cargo run --release --example pruned_decode

use avprune::harness::{gen_sequence, SequenceRecipe, Vocabulary};
use avprune::model::{decode, init_model, ModelConfig, ShapeAudit};
use avprune::pruning::{Pipeline, PruneConfig};

fn main() -> avprune::Result<()> {
    let cfg = ModelConfig::default();
    let weights = init_model(&cfg)?;
    let seq = gen_sequence(
        &SequenceRecipe::default(),
        &Vocabulary::new(cfg.vocab_size, 4)?,
        1,
    )?;

    let vanilla = decode(&weights, &seq, 8, None, None)?;
    let mut pipeline = Pipeline::new(&seq, cfg.layers, 40, &PruneConfig::default())?;
    let mut audit = ShapeAudit::default();
    let pruned = decode(&weights, &seq, 8, Some(&mut pipeline), Some(&mut audit))?;

    for d in &pipeline.decisions().decisions {
        println!(
            "after layer {:>2} {:<6} {:>3} -> {:>3}  removed {:?}",
            d.layer,
            format!("{:?}", d.stage),
            d.active_before,
            d.active_after,
            d.removed
        );
    }
    println!("vanilla {:?}", vanilla.tokens);
    println!("pruned  {:?}", pruned.tokens);
    println!(
        "square attention buffers during pruned decode: {}",
        audit.square_allocations().len()
    );
    Ok(())
}

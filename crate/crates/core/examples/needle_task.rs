//! Planted-needle probe: the first answer depends on one early token.
//!
//! cargo run --release --example needle_task

use avprune::harness::{
    gen_needle_task, install_needle_head, NeedlePlacement, SequenceRecipe, Vocabulary,
};
use avprune::model::{decode_greedy, init_model, ModelConfig};
use avprune::pruning::{Pipeline, PruneConfig};

fn main() -> avprune::Result<()> {
    let cfg = ModelConfig::default();
    let vocab = Vocabulary::new(cfg.vocab_size, 4)?;
    let mut weights = init_model(&cfg)?;
    install_needle_head(&mut weights, &vocab)?;

    let recipe = SequenceRecipe::default();
    for (seed, placement) in [
        (1, NeedlePlacement::default()),
        (2, NeedlePlacement::default()),
        (3, NeedlePlacement::At { position: 60 }),
    ] {
        let task = gen_needle_task(&recipe, &vocab, seed, placement)?;
        let vanilla = decode_greedy(&weights, &task.sequence, 1, None)?[0];
        let mut p = Pipeline::new(&task.sequence, cfg.layers, 26, &PruneConfig::default())?;
        let pruned = decode_greedy(&weights, &task.sequence, 1, Some(&mut p))?[0];
        println!(
            "needle at {:>2}: expected {} vanilla {} pruned {}{}",
            task.needle_position,
            task.expected_answer,
            vanilla,
            pruned,
            if pruned == vanilla {
                ""
            } else {
                "  (needle was past the cutoff)"
            }
        );
    }
    Ok(())
}

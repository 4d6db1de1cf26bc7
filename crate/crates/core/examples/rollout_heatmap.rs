//! Attention rollout on a captured toy-model run: influence profile at the
//! middle layer and a heatmap CSV.
//!
//! cargo run --release --example rollout_heatmap [-- OUT_DIR]

use avprune::harness::{gen_sequence, SequenceRecipe, Vocabulary};
use avprune::model::{forward_capture, init_model, ModelConfig};
use avprune::rollout::{heatmap_csv, influence_scores, rollout_at, QueryRows, DEFAULT_ALPHA};

fn main() -> avprune::Result<()> {
    let cfg = ModelConfig {
        layers: 12,
        ..ModelConfig::default()
    };
    let weights = init_model(&cfg)?;
    let recipe = SequenceRecipe::Contiguous {
        visual: 24,
        audio: 16,
        text: 6,
    };
    let seq = gen_sequence(&recipe, &Vocabulary::new(cfg.vocab_size, 4)?, 7)?;

    let attn = forward_capture(&weights, &seq)?.attention;
    let mid = cfg.middle_layer();
    let r = rollout_at(&attn, mid, DEFAULT_ALPHA)?;
    let scores = influence_scores(&r, &QueryRows::AfterMultimodal.resolve(&seq))?;

    println!("influence at layer {mid} (alpha {DEFAULT_ALPHA}):");
    for (i, (s, m)) in scores.iter().zip(seq.modalities()).enumerate().step_by(4) {
        println!(
            "  {i:>3} {m:?}\t{s:.5}\t{}",
            "#".repeat((s * 200.0).min(60.0) as usize)
        );
    }

    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let csv = heatmap_csv(&r);
    match out {
        Some(dir) => {
            std::fs::create_dir_all(&dir).expect("create output dir");
            let path = dir.join(format!("rollout_l{mid:02}.csv"));
            std::fs::write(&path, csv).expect("write heatmap");
            println!("wrote {}", path.display());
        }
        None => println!("heatmap: {} rows (pass a directory to save it)", r.rows()),
    }
    Ok(())
}

//! Dump toy attention to an AVTRACE1 file, read it back and calibrate on it.
//!
//! cargo run --release --example trace_roundtrip

use avprune::harness::{
    calibrate_traces, gen_sequence, load_trace, write_trace, ExperimentSpec, Vocabulary,
};
use avprune::model::{forward_capture, init_model};

fn main() -> avprune::Result<()> {
    let spec = ExperimentSpec::default();
    let weights = init_model(&spec.model)?;
    let dir = tempfile::tempdir().expect("temp dir");
    let vocab = Vocabulary::new(spec.model.vocab_size, spec.needles)?;

    let mut paths = Vec::new();
    for seed in 0..3 {
        let seq = gen_sequence(&spec.recipe, &vocab, seed)?;
        let attn = forward_capture(&weights, &seq)?.attention;
        let path = dir.path().join(format!("trace_{seed}.bin"));
        write_trace(&path, &attn)?;
        let back = load_trace(&path)?;
        let err = attn
            .iter()
            .zip(&back)
            .flat_map(|(a, b)| a.heads.iter().zip(&b.heads))
            .map(|(x, y)| x.max_abs_diff(y))
            .fold(0.0, f64::max);
        let bytes = std::fs::metadata(&path).expect("stat").len();
        println!(
            "{}: {bytes} bytes, max round-trip error {err:.2e}",
            path.file_name().unwrap().to_string_lossy()
        );
        paths.push(path);
    }
    let cal = calibrate_traces(&spec, &paths)?;
    println!(
        "cutoff from traces: {} (per trace {:?})",
        cal.cutoff, cal.per_sample_cutoffs
    );
    Ok(())
}

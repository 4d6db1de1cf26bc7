use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use avprune::harness::experiment::{
    calibrate, run_experiment, to_json, write_file, write_run, ExperimentSpec, Stream,
    CALIBRATION_FILE,
};
use avprune::harness::heatmaps_from;
use avprune::harness::sweep::{run_sweep, write_sweep};
use avprune::harness::trace::{load_trace, write_trace};
use avprune::model::forward_capture;
use avprune::pruning::{GlobalRule, Strategy, DEFAULT_TAU};
use avprune::{Error, Result};

/// Two-stage audio-visual token pruning experiments on a toy decoder.
#[derive(Parser)]
#[command(name = "avprune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the global cutoff from rollout (synthetic captures or --trace files).
    Calibrate(Opts),
    /// Compare pruned and vanilla decoding; writes report.json and summary.csv.
    Run(Opts),
    /// Run the ablation grid from the config's [sweep] table.
    Sweep(Opts),
    /// Capture toy-model attention into AVTRACE1 files.
    TraceDump(Opts),
    /// Write rollout and attention heatmap CSVs.
    Heatmap(Opts),
}

#[derive(Args)]
struct Opts {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "AVPRUNE_SEED")]
    seed: Option<u64>,
    /// Residual mixing weight of rollout.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    middle_layer: Option<usize>,
    #[arg(long)]
    fine_ratio: Option<f64>,
    /// `NAME` or `global=NAME` sets the global policy, `fine=NAME` the fine one.
    #[arg(long)]
    strategy: Vec<String>,
    /// Fixed position cutoff, or `auto` to calibrate.
    #[arg(long)]
    cutoff: Option<String>,
    /// Trace file(s): calibration input, heatmap input, or trace-dump output.
    #[arg(long)]
    trace: Vec<PathBuf>,
    #[arg(long, default_value = "avprune-out")]
    out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Calibration samples, or prompts to dump for trace-dump.
    #[arg(long)]
    samples: Option<usize>,
    /// Heatmap layer (repeatable).
    #[arg(long = "layer")]
    layers: Vec<usize>,
}

impl Opts {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(p) => ExperimentSpec::load(p)?,
            None => ExperimentSpec::default(),
        };
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(a) = self.alpha {
            spec.prune.alpha = a;
        }
        if let Some(m) = self.middle_layer {
            spec.prune.middle_layer = Some(m);
        }
        if let Some(p) = self.fine_ratio {
            spec.prune.fine_ratio = p;
        }
        for s in &self.strategy {
            match s.split_once('=') {
                None => spec.global_strategy = s.parse()?,
                Some(("global", name)) => spec.global_strategy = name.parse()?,
                Some(("fine", name)) => spec.fine_strategy = name.parse::<Strategy>()?,
                Some((stage, _)) => {
                    return Err(Error::Config(format!(
                        "unknown strategy stage '{stage}', expected global or fine"
                    )))
                }
            }
        }
        if let Some(c) = &self.cutoff {
            spec.prune.global_rule = if c == "auto" {
                match spec.prune.global_rule {
                    r @ GlobalRule::RolloutThreshold { .. } => r,
                    GlobalRule::PositionCutoff { .. } => {
                        GlobalRule::RolloutThreshold { tau: DEFAULT_TAU }
                    }
                }
            } else {
                let position = c.parse().map_err(|_| {
                    Error::Config(format!("--cutoff expects a count or 'auto', got '{c}'"))
                })?;
                GlobalRule::PositionCutoff { position }
            };
        }
        if let Some(r) = self.repetitions {
            spec.repetitions = r;
        }
        if let Some(n) = self.samples {
            spec.calibration_samples = n;
        }
        if !self.layers.is_empty() {
            spec.heatmap_layers = self.layers.clone();
        }
        Ok(spec)
    }
}

fn pool(workers: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

fn show(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn cmd_calibrate(o: &Opts) -> Result<()> {
    let mut spec = o.spec()?;
    spec.calibration_traces.extend(o.trace.iter().cloned());
    if let GlobalRule::PositionCutoff { .. } = spec.prune.global_rule {
        return Err(Error::Config(
            "calibrate needs --cutoff auto or a rollout_threshold rule".into(),
        ));
    }
    spec.validate()?;
    let cal = calibrate(&spec, &spec.weights()?)?;
    let path = write_file(&o.out, CALIBRATION_FILE, &to_json(&cal)?)?;
    println!(
        "cutoff {} (tau {}, alpha {}, middle layer {}, {} samples)",
        cal.cutoff,
        cal.tau,
        cal.alpha,
        cal.middle_layer,
        cal.per_sample_cutoffs.len()
    );
    for w in &cal.warnings {
        eprintln!("warning: {w}");
    }
    show(&[path]);
    Ok(())
}

fn cmd_run(o: &Opts) -> Result<()> {
    let mut spec = o.spec()?;
    spec.calibration_traces.extend(o.trace.iter().cloned());
    let out = run_experiment(&spec)?;
    let r = &out.report;
    println!(
        "cutoff {}  relative FLOPs {:.2}",
        r.cutoff, r.relative_flops
    );
    if let Some(n) = &r.needle {
        println!(
            "needle pass rate {:.3} ({}/{}), vanilla correct {}",
            n.pass_rate, n.answer_preserved, n.tasks, n.vanilla_correct
        );
    }
    println!("identical outputs {}", r.identical_outputs);
    show(&write_run(&out, &o.out)?);
    Ok(())
}

fn cmd_sweep(o: &Opts) -> Result<()> {
    let mut spec = o.spec()?;
    spec.calibration_traces.extend(o.trace.iter().cloned());
    let report = run_sweep(&spec, o.workers)?;
    for (row, e) in report.rows().iter().zip(&report.entries) {
        println!(
            "{:<34} flops {:>7.2}  pass {}",
            row.label,
            row.relative_flops,
            e.report
                .needle
                .as_ref()
                .map_or("-".to_string(), |n| format!("{:.3}", n.pass_rate))
        );
    }
    show(&write_sweep(&report, &o.out)?);
    Ok(())
}

fn cmd_trace_dump(o: &Opts) -> Result<()> {
    let spec = o.spec()?;
    spec.validate()?;
    let count = o.samples.unwrap_or(1);
    if o.trace.len() > 1 && o.trace.len() != count {
        return Err(Error::Config(format!(
            "{} --trace paths given for {count} samples",
            o.trace.len()
        )));
    }
    let weights = spec.weights()?;
    let mut written = Vec::new();
    for i in 0..count {
        let path = match (o.trace.len(), count) {
            (1, 1) => o.trace[0].clone(),
            (n, _) if n == count => o.trace[i].clone(),
            _ => {
                std::fs::create_dir_all(&o.out).map_err(|e| Error::Io {
                    path: o.out.clone(),
                    source: e,
                })?;
                o.out.join(format!("trace_{i:03}.bin"))
            }
        };
        let prompt = spec.prompt(Stream::Calibration, i)?;
        write_trace(
            &path,
            &forward_capture(&weights, &prompt.sequence)?.attention,
        )?;
        written.push(path);
    }
    show(&written);
    Ok(())
}

fn cmd_heatmap(o: &Opts) -> Result<()> {
    let spec = o.spec()?;
    spec.validate()?;
    let attn = match o.trace.as_slice() {
        [] => {
            let prompt = spec.prompt(Stream::Evaluation, 0)?;
            forward_capture(&spec.weights()?, &prompt.sequence)?.attention
        }
        [one] => load_trace(one)?,
        _ => return Err(Error::Config("heatmap takes a single --trace".into())),
    };
    let layers = if spec.heatmap_layers.is_empty() {
        let l = attn.len();
        let mut v = vec![1, spec.prune.middle_layer_for(l), l];
        v.dedup();
        v
    } else {
        spec.heatmap_layers.clone()
    };
    let maps = heatmaps_from(&attn, &layers, spec.prune.alpha)?;
    let written = maps
        .iter()
        .map(|(name, csv)| write_file(&o.out, name, csv))
        .collect::<Result<Vec<_>>>()?;
    show(&written);
    Ok(())
}

fn error_json(e: &Error) -> String {
    let mut obj = serde_json::json!({ "kind": e.kind(), "message": e.to_string() });
    if let Error::Format { path, .. } | Error::Truncation { path, .. } | Error::Io { path, .. } = e
    {
        obj["path"] = serde_json::json!(path_str(path));
    }
    serde_json::json!({ "error": obj }).to_string()
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (opts, f): (&Opts, fn(&Opts) -> Result<()>) = match &cli.command {
        Command::Calibrate(o) => (o, cmd_calibrate),
        Command::Run(o) => (o, cmd_run),
        Command::Sweep(o) => (o, cmd_sweep),
        Command::TraceDump(o) => (o, cmd_trace_dump),
        Command::Heatmap(o) => (o, cmd_heatmap),
    };
    let result = match &cli.command {
        Command::Sweep(_) => Ok(()),
        _ => pool(opts.workers),
    }
    .and_then(|_| f(opts));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pfrecon_core::dataset::{read_dataset, write_dataset, Dataset, Domain};
use pfrecon_core::synth::{generate_dataset, PhaseMode, PhantomSpec};
use pfrecon_core::{ComplexImage, Pff, RepetitionSet};
use pfrecon_eval::methods::reconstruct;
use pfrecon_eval::{emit_figures, evaluate, max_freq_histogram, Error, Method, Result};
use pfrecon_net::train::{sample_set, train, TrainConfig};
use pfrecon_net::{checkpoint, Model};

#[derive(Parser)]
#[command(name = "pfrecon", version, about = "Partial-Fourier MRI reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic repetition sets.
    Simulate(SimulateArgs),
    /// Train an unrolled network from a config file.
    Train(TrainArgs),
    /// Reconstruct every slice of a dataset with one method.
    Reconstruct(ReconstructArgs),
    /// Compare methods against ground truth; writes the metrics table and figures.
    Evaluate(EvaluateArgs),
    /// Histogram of the strongest phase-encode line per repetition.
    AnalyzeKmax(KmaxArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    slices: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 6)]
    repetitions: usize,
    #[arg(long, default_value = "smooth_plus_patches")]
    phase_mode: PhaseMode,
    #[arg(long, default_value_t = 0.01)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 6)]
    n_ellipses: usize,
    #[arg(long, default_value_t = 2)]
    patch_count: usize,
    #[arg(long, default_value_t = 16.0)]
    patch_max_freq: f64,
    #[arg(long, default_value_t = 2.5)]
    patch_amplitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Store PF-sampled k-space at this factor instead of ground-truth images.
    #[arg(long)]
    sample_pff: Option<Pff>,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML file with training settings.
    #[arg(long)]
    config: PathBuf,
    /// Ground-truth training dataset.
    #[arg(long)]
    data: PathBuf,
    /// Ground-truth validation dataset; without it the last model is kept.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Line-delimited JSON training log (appended).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Ground-truth images (sampled at --pff) or PF-sampled k-space.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    method: Method,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Sampling factor for image-domain input.
    #[arg(long)]
    pff: Option<Pff>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth dataset.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',', default_value = "zero_fill,pocs,homodyne")]
    methods: Vec<Method>,
    #[arg(long, default_value = "5/8")]
    pff: Pff,
    /// `method=path`, repeatable.
    #[arg(long = "checkpoint", value_parser = parse_checkpoint)]
    checkpoints: Vec<(Method, PathBuf)>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Slices rendered as image panels.
    #[arg(long, default_value_t = 3)]
    panels: usize,
}

#[derive(Args)]
struct KmaxArgs {
    /// Ground-truth dataset.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "5/8")]
    pff: Pff,
}

fn parse_checkpoint(s: &str) -> std::result::Result<(Method, PathBuf), String> {
    let (m, p) = s.split_once('=').ok_or_else(|| format!("expected method=path, got {s:?}"))?;
    Ok((m.parse().map_err(|e: Error| e.to_string())?, PathBuf::from(p)))
}

fn load_model(path: &Path) -> Result<Model<f32>> {
    checkpoint::load(path).map_err(|e| match e {
        pfrecon_net::Error::Io(io) => Error::Checkpoint(format!("{}: {io}", path.display())),
        e => e.into(),
    })
}

fn ground_truth(path: &Path) -> Result<Vec<RepetitionSet<ComplexImage>>> {
    let ds = read_dataset(path)?;
    if ds.header.domain != Domain::Image {
        return Err(Error::Usage(format!("{} holds k-space; ground-truth images are required", path.display())));
    }
    Ok(ds.image_sets()?)
}

fn simulate(a: SimulateArgs) -> Result<serde_json::Value> {
    let spec = PhantomSpec {
        height: a.height,
        width: a.width,
        n_ellipses: a.n_ellipses,
        phase_mode: a.phase_mode,
        patch_count: a.patch_count,
        patch_max_freq: a.patch_max_freq,
        patch_amplitude: a.patch_amplitude,
        noise_sigma: a.noise_sigma,
        n_repetitions: a.repetitions,
        seed: a.seed,
        ..PhantomSpec::default()
    };
    let sets: Vec<_> = generate_dataset(&spec, a.slices)?.into_iter().map(|p| p.reps).collect();
    let ds = match a.sample_pff {
        Some(pff) => Dataset::from_kspace_sets(&sets.iter().map(|s| sample_set(s, pff)).collect::<std::result::Result<Vec<_>, _>>()?)?,
        None => Dataset::from_image_sets(&sets)?,
    };
    write_dataset(&ds, &a.out)?;
    Ok(serde_json::json!({"out": a.out, "slices": a.slices, "repetitions": a.repetitions}))
}

fn run_train(a: TrainArgs) -> Result<serde_json::Value> {
    let text = fs::read_to_string(&a.config)?;
    let config = TrainConfig::from_toml(&text)?;
    let train_set = ground_truth(&a.data)?;
    let val_set = match &a.val {
        Some(p) => ground_truth(p)?,
        None => Vec::new(),
    };
    let mut log = match &a.log {
        Some(p) => Some(fs::OpenOptions::new().create(true).append(true).open(p)?),
        None => None,
    };
    let mut log_err = None;
    let outcome = train(&train_set, &val_set, &config, &mut |r| {
        if let Some(f) = log.as_mut() {
            let line = serde_json::to_string(r).expect("log record");
            if let Err(e) = writeln!(f, "{line}") {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    checkpoint::save(&outcome.model, &a.out)?;
    Ok(serde_json::json!({
        "out": a.out,
        "params": outcome.model.count_params(),
        "best_val_psnr": outcome.best_val_psnr,
    }))
}

fn run_reconstruct(a: ReconstructArgs) -> Result<serde_json::Value> {
    let ds = read_dataset(&a.input)?;
    let y = match (ds.header.domain, a.pff) {
        (Domain::KSpace, None) => ds.kspace_sets()?,
        (Domain::KSpace, Some(_)) => return Err(Error::Usage("--pff only applies to image-domain input".into())),
        (Domain::Image, Some(pff)) => ds.image_sets()?.iter().map(|s| sample_set(s, pff)).collect::<std::result::Result<_, _>>()?,
        (Domain::Image, None) => return Err(Error::Usage("image-domain input needs --pff".into())),
    };
    let model = match (&a.checkpoint, a.method.is_learned()) {
        (Some(p), _) => Some(load_model(p)?),
        (None, true) => return Err(Error::Checkpoint(format!("{} needs --checkpoint", a.method))),
        (None, false) => None,
    };
    let recs = y.iter().map(|s| reconstruct(a.method, s, model.as_ref())).collect::<Result<Vec<_>>>()?;
    write_dataset(&Dataset::from_image_sets(&recs)?, &a.out)?;
    Ok(serde_json::json!({"out": a.out, "method": a.method, "slices": recs.len()}))
}

fn run_evaluate(a: EvaluateArgs) -> Result<serde_json::Value> {
    let gt = ground_truth(&a.data)?;
    let mut models = BTreeMap::new();
    for (m, p) in &a.checkpoints {
        models.insert(*m, load_model(p)?);
    }
    let report = evaluate(&gt, &a.methods, &models, a.pff, a.panels)?;
    emit_figures(&report.records, &report.panels, &a.out_dir)?;
    Ok(serde_json::json!({
        "out_dir": a.out_dir,
        "summaries": report.summaries,
        "tests": report.tests,
    }))
}

fn run_kmax(a: KmaxArgs) -> Result<serde_json::Value> {
    let h = max_freq_histogram(&ground_truth(&a.data)?, a.pff)?;
    Ok(serde_json::to_value(h).expect("histogram"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", serde_json::json!({"error": "usage", "message": first}));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => run_train(a),
        Command::Reconstruct(a) => run_reconstruct(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::AnalyzeKmax(a) => run_kmax(a),
    };
    match result {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}

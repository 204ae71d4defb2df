//! `echosteal` — command-line front end for the ultrasound model-extraction
//! workbench.
//!
//! Subcommands mirror the pipeline stages: `simulate` RF data, `train-victim`
//! to build the protected classifier behind its score-only interface,
//! `calibrate` the machine-to-machine transfer function, `extract` a copy of
//! the victim model from unlabeled data, `evaluate` it, and run full
//! `experiment` sweeps with `report` conversion.
//!
//! Relative output paths are placed under `$ECHOSTEAL_OUT_DIR` when that
//! variable is set. Exit codes encode the failure category: 2 config,
//! 3 argument, 4 interface, 5 format, 6 i/o.

mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use echosteal_core::blackbox::{train_victim, Oracle};
use echosteal_core::calibration::{
    compute_gamma, estimate_spectra, wiener, TransferFunction, DEFAULT_BIN_LEN, DEFAULT_NFFT,
    DEFAULT_OVERLAP, DEFAULT_SNR,
};
use echosteal_core::extraction::{finalize, iterate, ExtractionConfig};
use echosteal_core::harness::{
    evaluate, load_report_json, run_experiment, write_report, ExperimentFamily, ExperimentSpec,
    ReportFormat,
};
use echosteal_core::model::{extract_from_frames, ClassifierParams, PatchGrid, PatchSet};
use echosteal_core::rfsim::{
    acquire_calibration, resample_to, synthesize_frame, usrf::RFDataset, CalibrationMode,
    MachineSpec, PhantomSpec, RFFrame, Scale,
};
use echosteal_core::seeds::SeedPath;
use echosteal_core::{Error, Result};

use config::{parse_scale, train_preset_for, ConfigFile};

#[derive(Parser)]
#[command(
    name = "echosteal",
    version,
    about = "Ultrasound model-extraction workbench",
    max_term_width = 100
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize RF frames for a machine/phantom pair into a .usrf file.
    Simulate(SimulateArgs),
    /// Train the protected victim classifier and save its oracle (.usor).
    TrainVictim(TrainVictimArgs),
    /// Estimate the machine-to-machine transfer function (.json).
    Calibrate(CalibrateArgs),
    /// Clone the victim model from unlabeled data via its oracle (.usnn).
    Extract(ExtractArgs),
    /// Score a saved classifier on a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Convert a JSON experiment report to CSV or JSON.
    Report(ReportArgs),
    /// Run a full experiment family and write its reports.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MachineArg {
    Victim,
    Perpetrator,
    PerpetratorAlt,
}

impl MachineArg {
    fn spec(self, scale: Scale) -> MachineSpec {
        match self {
            MachineArg::Victim => MachineSpec::victim(scale),
            MachineArg::Perpetrator => MachineSpec::perpetrator(scale),
            MachineArg::PerpetratorAlt => MachineSpec::perpetrator_alt(scale),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PhantomArg {
    Phantom1,
    Phantom2,
    Calibration,
}

impl PhantomArg {
    fn spec(self) -> PhantomSpec {
        match self {
            PhantomArg::Phantom1 => PhantomSpec::phantom1(),
            PhantomArg::Phantom2 => PhantomSpec::phantom2(),
            PhantomArg::Calibration => PhantomSpec::calibration(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CalModeArg {
    Stable,
    Freehand,
}

impl From<CalModeArg> for CalibrationMode {
    fn from(m: CalModeArg) -> Self {
        match m {
            CalModeArg::Stable => CalibrationMode::Stable,
            CalModeArg::Freehand => CalibrationMode::Freehand,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Machine preset.
    #[arg(long, value_enum)]
    machine: MachineArg,
    /// Phantom preset; sets the stored class label (calibration = unlabeled).
    #[arg(long, value_enum)]
    phantom: PhantomArg,
    /// Frame scale: full, desk, or compact.
    #[arg(long, default_value = "desk")]
    scale: String,
    /// Number of frames to synthesize.
    #[arg(long)]
    frames: usize,
    /// Base seed; each frame derives its own stream from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Acquire as a calibration sequence in the given mode instead of
    /// independent frames.
    #[arg(long, value_enum)]
    calibration: Option<CalModeArg>,
    /// Output .usrf path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainVictimArgs {
    /// Class-0 training frames (.usrf).
    #[arg(long)]
    class0: PathBuf,
    /// Class-1 training frames (.usrf).
    #[arg(long)]
    class1: PathBuf,
    /// Optional TOML config; reads the [victim_training] section.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output oracle path (.usor).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Victim-machine calibration recording (.usrf).
    #[arg(long)]
    victim: PathBuf,
    /// Perpetrator-machine calibration recording (.usrf).
    #[arg(long)]
    perp: PathBuf,
    /// Wiener regularization SNR.
    #[arg(long, default_value_t = DEFAULT_SNR)]
    snr: f64,
    /// Output transfer-function path (.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Saved victim oracle (.usor).
    #[arg(long)]
    oracle: PathBuf,
    /// Unlabeled perpetrator frames (.usrf).
    #[arg(long)]
    data: PathBuf,
    /// Transfer function (.json); omit to run without spectral correction.
    #[arg(long)]
    tf: Option<PathBuf>,
    /// Optional TOML config; reads [extraction] and [inner_training].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Outer re-labeling iterations (overrides the config file).
    #[arg(long)]
    iterations: Option<usize>,
    /// Extraction seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output classifier path (.usnn).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Saved classifier (.usnn).
    #[arg(long)]
    model: PathBuf,
    /// Labeled test frames (.usrf); every frame must carry a 0/1 label.
    #[arg(long)]
    data: PathBuf,
    /// Resample frames to this rate (MHz) before patching, e.g. the rate
    /// the model was trained at.
    #[arg(long)]
    resample_to: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Input report (.json, as written by `experiment`).
    #[arg(long)]
    input: PathBuf,
    /// Output path; format inferred from the extension unless --format given.
    #[arg(long)]
    output: PathBuf,
    /// Output format: csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment family: ablation_tf, priors_labeldist, priors_noiserate,
    /// dataset_size, or transducer_mismatch.
    family: String,
    /// Optional TOML config overriding any default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frame scale (overrides the config file).
    #[arg(long)]
    scale: Option<String>,
    /// Number of repeats (overrides the config file).
    #[arg(long)]
    repeats: Option<usize>,
    /// Base seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the report files; defaults to $ECHOSTEAL_OUT_DIR or ".".
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error[{}]: {e}", e.category());
        std::process::exit(e.exit_code());
    }
}

/// Place relative output paths under `$ECHOSTEAL_OUT_DIR` when set.
fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("ECHOSTEAL_OUT_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::TrainVictim(a) => cmd_train_victim(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let scale = parse_scale(&a.scale)?;
    let machine = a.machine.spec(scale);
    let phantom = a.phantom.spec();
    if a.frames == 0 {
        return Err(Error::argument("--frames must be at least 1"));
    }
    let frames: Vec<RFFrame> = match a.calibration {
        Some(mode) => acquire_calibration(&machine, &phantom, mode.into(), a.frames, a.seed)?,
        None => (0..a.frames)
            .map(|i| {
                let s = SeedPath::new(a.seed).with_str("frame").with(i as u64).seed();
                synthesize_frame(&phantom, &machine, s)
            })
            .collect::<Result<_>>()?,
    };
    let label = phantom.seed_class.label();
    let labels = vec![label; frames.len()];
    let out = resolve_out(&a.out);
    RFDataset::new(frames, labels)?.write(&out)?;
    println!(
        "wrote {} {} frame(s) of {} on {} to {}",
        a.frames,
        scale_name(scale),
        phantom.name,
        machine.name,
        out.display()
    );
    Ok(())
}

fn scale_name(scale: Scale) -> &'static str {
    match scale {
        Scale::Full => "full",
        Scale::Desk => "desk",
        Scale::Compact => "compact",
    }
}

fn cmd_train_victim(a: TrainVictimArgs) -> Result<()> {
    let d0 = RFDataset::read(&a.class0)?;
    let d1 = RFDataset::read(&a.class1)?;
    let cfgfile = ConfigFile::load(a.config.as_deref())?;
    let n_lateral = d0
        .frames
        .first()
        .ok_or_else(|| Error::argument("class-0 dataset is empty"))?
        .n_lateral();
    let mut cfg = train_preset_for(n_lateral);
    cfgfile.victim_training.apply(&mut cfg);
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let (oracle, report) = train_victim(&d0.frames, &d1.frames, &cfg)?;
    let out = resolve_out(&a.out);
    oracle.save(&out)?;
    println!(
        "victim validation accuracy {:.2}% (auc {:.4}) on {} train / {} val patches",
        report.val_accuracy, report.val_auc, report.n_train_patches, report.n_val_patches
    );
    println!("saved oracle to {}", out.display());
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    let victim = RFDataset::read(&a.victim)?;
    let perp = RFDataset::read(&a.perp)?;
    let victim_fs = victim
        .frames
        .first()
        .ok_or_else(|| Error::argument("victim calibration dataset is empty"))?
        .fs;
    // Both recordings must live on one frequency grid before their spectra
    // are compared; rate-convert the perpetrator side to the victim's rate.
    let perp_frames: Vec<RFFrame> = perp
        .frames
        .iter()
        .map(|f| resample_to(f, victim_fs))
        .collect::<Result<_>>()?;
    let v_spec = estimate_spectra(&victim.frames, DEFAULT_BIN_LEN, DEFAULT_OVERLAP, DEFAULT_NFFT)?;
    let p_spec = estimate_spectra(&perp_frames, DEFAULT_BIN_LEN, DEFAULT_OVERLAP, DEFAULT_NFFT)?;
    let tf = wiener(&compute_gamma(&v_spec, &p_spec)?, a.snr)?;

    // Union of the per-bin masks: the frequency span any depth bin trusts.
    let band: Vec<f64> = tf
        .freqs
        .iter()
        .enumerate()
        .filter(|&(i, _)| tf.band_mask.iter().any(|mask| mask[i]))
        .map(|(_, &f)| f)
        .collect();
    let out = resolve_out(&a.out);
    tf.save(&out)?;
    match (band.first(), band.last()) {
        (Some(lo), Some(hi)) => println!(
            "transfer function over {} depth bins, shared band {:.2}-{:.2} MHz, saved to {}",
            tf.bins.len(),
            lo,
            hi,
            out.display()
        ),
        _ => println!(
            "transfer function over {} depth bins (empty shared band), saved to {}",
            tf.bins.len(),
            out.display()
        ),
    }
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let oracle = Oracle::load(&a.oracle)?;
    let tf = match &a.tf {
        Some(path) => TransferFunction::load(path)?,
        None => TransferFunction::identity(),
    };
    let data = RFDataset::read(&a.data)?;
    let target_fs = oracle.geometry().fs;
    let frames: Vec<RFFrame> = data
        .frames
        .iter()
        .map(|f| {
            if (f.fs - target_fs).abs() > 1e-9 * target_fs {
                resample_to(f, target_fs)
            } else {
                Ok(f.clone())
            }
        })
        .collect::<Result<_>>()?;
    let first = frames
        .first()
        .ok_or_else(|| Error::argument("unlabeled dataset is empty"))?;
    let grid = PatchGrid::for_frame(first.n_axial(), first.n_lateral())?;
    let x_perp = extract_from_frames(&frames, &grid)?;

    let cfgfile = ConfigFile::load(a.config.as_deref())?;
    let mut cfg = ExtractionConfig {
        inner_train: train_preset_for(first.n_lateral()),
        ..ExtractionConfig::default()
    };
    cfgfile.extraction.apply(&mut cfg);
    cfgfile.inner_training.apply(&mut cfg.inner_train);
    if let Some(iterations) = a.iterations {
        cfg.iterations = iterations;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
        cfg.inner_train.seed = seed;
    }

    let f_iter = iterate(&oracle, &x_perp, &tf, &cfg)?;
    let f_final = finalize(&f_iter, &x_perp, &tf, &cfg)?;
    let out = resolve_out(&a.out);
    f_final.save(&out)?;
    println!(
        "extracted classifier from {} unlabeled patches with {} oracle queries, saved to {}",
        x_perp.len(),
        oracle.query_count(),
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let params = ClassifierParams::load(&a.model)?;
    let data = RFDataset::read(&a.data)?;
    if data.frames.is_empty() {
        return Err(Error::argument("test dataset is empty"));
    }
    if data.labels.iter().any(|&l| l != 0 && l != 1) {
        return Err(Error::argument(
            "test dataset must be fully labeled with classes 0/1",
        ));
    }
    let frames: Vec<RFFrame> = match a.resample_to {
        Some(fs_to) => data
            .frames
            .iter()
            .map(|f| resample_to(f, fs_to))
            .collect::<Result<_>>()?,
        None => data.frames.clone(),
    };
    let grid = PatchGrid::for_frame(frames[0].n_axial(), frames[0].n_lateral())?;
    let mut patches = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    for (frame, &label) in frames.iter().zip(data.labels.iter()) {
        let set = extract_from_frames(std::slice::from_ref(frame), &grid)?;
        labels.extend(std::iter::repeat(label as u8).take(set.len()));
        patches.extend(set.patches);
    }
    let set = PatchSet::new(patches).zscore();
    let (acc, auc) = evaluate(&params, &set, &labels)?;
    println!(
        "accuracy {:.2}% auc {:.4} over {} patches from {} frames",
        acc,
        auc,
        set.len(),
        frames.len()
    );
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let report = load_report_json(&a.input)?;
    let out = resolve_out(&a.output);
    let format = match &a.format {
        Some(f) => f.parse::<ReportFormat>()?,
        None => match out.extension().and_then(|e| e.to_str()) {
            Some("csv") => ReportFormat::Csv,
            Some("json") => ReportFormat::Json,
            _ => {
                return Err(Error::argument(
                    "cannot infer report format from the output extension; pass --format",
                ))
            }
        },
    };
    write_report(&report, &out, format)?;
    println!("wrote {} report rows to {}", report.rows.len(), out.display());
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let family = a.family.parse::<ExperimentFamily>()?;
    let cfgfile = ConfigFile::load(a.config.as_deref())?;
    let scale = match &a.scale {
        Some(s) => parse_scale(s)?,
        None => cfgfile.experiment.scale()?.unwrap_or(Scale::Desk),
    };
    let mut spec = ExperimentSpec::new(family, scale);
    cfgfile.experiment.apply(&mut spec);
    cfgfile.extraction.apply(&mut spec.base);
    cfgfile.victim_training.apply(&mut spec.victim_train);
    cfgfile.inner_training.apply(&mut spec.base.inner_train);
    if let Some(repeats) = a.repeats {
        spec.repeats = repeats;
    }
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }

    let out_dir = match a.out_dir {
        Some(d) => d,
        None => match std::env::var_os("ECHOSTEAL_OUT_DIR") {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => PathBuf::from("."),
        },
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let report = run_experiment(&spec)?;
    for row in &report.rows {
        println!(
            "{} {:<16} iters {:>2}  acc {:6.2} ± {:.2}  auc {:.4} ± {:.4}  queries {}",
            row.experiment,
            row.cell,
            row.iterations,
            row.mean_acc,
            row.std_acc,
            row.mean_auc,
            row.std_auc,
            row.oracle_queries
        );
    }
    if let Some(trend) = report.trend_nondecreasing {
        println!(
            "accuracy trend over the budget ladder: {}",
            if trend { "non-decreasing within error bars" } else { "DECREASING" }
        );
    }
    let csv_path = out_dir.join(format!("{family}.csv"));
    let json_path = out_dir.join(format!("{family}.json"));
    write_report(&report, &csv_path, ReportFormat::Csv)?;
    write_report(&report, &json_path, ReportFormat::Json)?;
    println!(
        "finished {} repeats in {:.1} s; reports at {} and {}",
        spec.repeats,
        report.runtime.as_secs_f64(),
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

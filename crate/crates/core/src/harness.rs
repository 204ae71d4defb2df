//! Experiment driver: builds the synthetic two-machine benchmark, runs the
//! extraction pipeline across parameter sweeps with repeat statistics, and
//! writes machine-readable reports.
//!
//! Five experiment families are built in: the transfer-function ablation,
//! label-percentile and noise-rate prior sweeps, the dataset-size ladder,
//! and the alternate-transducer mismatch run with free-hand calibration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::blackbox::train_victim;
use crate::calibration::{
    compute_gamma, estimate_spectra, wiener, TransferFunction, DEFAULT_BIN_LEN, DEFAULT_NFFT,
    DEFAULT_OVERLAP,
};
use crate::error::{Error, Result};
use crate::extraction::{finalize, iterate, ExtractionConfig};
use crate::model::{extract_from_frames, ClassifierParams, PatchGrid, PatchSet, TrainConfig};
use crate::rfsim::{
    acquire_calibration, resample_to, synthesize_frame, CalibrationMode, MachineSpec, PhantomSpec,
    RFFrame, Scale,
};
use crate::seeds::SeedPath;

/// The benchmark's experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentFamily {
    /// With-tf vs identity-tf arms across iteration counts.
    AblationTf,
    /// Label-percentile prior sweep.
    PriorsLabeldist,
    /// Noise-rate prior sweep.
    PriorsNoiserate,
    /// Unlabeled-frame budget ladder.
    DatasetSize,
    /// Alternate transducer with free-hand calibration.
    TransducerMismatch,
}

impl fmt::Display for ExperimentFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentFamily::AblationTf => "ablation_tf",
            ExperimentFamily::PriorsLabeldist => "priors_labeldist",
            ExperimentFamily::PriorsNoiserate => "priors_noiserate",
            ExperimentFamily::DatasetSize => "dataset_size",
            ExperimentFamily::TransducerMismatch => "transducer_mismatch",
        };
        f.write_str(s)
    }
}

impl FromStr for ExperimentFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ablation_tf" => Ok(ExperimentFamily::AblationTf),
            "priors_labeldist" => Ok(ExperimentFamily::PriorsLabeldist),
            "priors_noiserate" => Ok(ExperimentFamily::PriorsNoiserate),
            "dataset_size" => Ok(ExperimentFamily::DatasetSize),
            "transducer_mismatch" => Ok(ExperimentFamily::TransducerMismatch),
            other => Err(Error::argument(format!(
                "unknown experiment family '{other}' (expected ablation_tf, priors_labeldist, \
                 priors_noiserate, dataset_size, or transducer_mismatch)"
            ))),
        }
    }
}

/// Everything needed to run one experiment family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: ExperimentFamily,
    pub scale: Scale,
    pub victim_frames_per_class: usize,
    /// Frames per class in each half of the 1:1 perpetrator split (the
    /// unlabeled pool and the hidden test set each get this many per class).
    pub perp_frames_per_class: usize,
    /// Calibration frames acquired per machine.
    pub cal_frames: usize,
    pub repeats: usize,
    /// Swept parameter values; their meaning depends on the family:
    /// iteration counts (ablation_tf, transducer_mismatch), percentiles
    /// (priors_labeldist), noise rates (priors_noiserate), or per-class
    /// frame budgets (dataset_size).
    pub swept: Vec<f64>,
    pub base: ExtractionConfig,
    pub victim_train: TrainConfig,
    pub seed: u64,
}

impl ExperimentSpec {
    /// A spec with family-standard sweeps and scale-appropriate defaults.
    pub fn new(family: ExperimentFamily, scale: Scale) -> Self {
        let train = match scale {
            Scale::Full => TrainConfig::full(),
            Scale::Desk => TrainConfig::desk(),
            Scale::Compact => TrainConfig::compact(),
        };
        let swept = match family {
            ExperimentFamily::AblationTf => vec![1.0, 2.0, 3.0],
            ExperimentFamily::PriorsLabeldist => vec![40.0, 50.0, 60.0],
            ExperimentFamily::PriorsNoiserate => vec![10.0, 20.0, 30.0],
            ExperimentFamily::DatasetSize => vec![25.0, 50.0, 125.0, 250.0, 500.0, 1000.0],
            ExperimentFamily::TransducerMismatch => vec![2.0, 10.0],
        };
        let (victim_frames, perp_frames) = match scale {
            Scale::Compact => (40, 24),
            _ => (100, 100),
        };
        ExperimentSpec {
            family,
            scale,
            victim_frames_per_class: victim_frames,
            perp_frames_per_class: perp_frames,
            cal_frames: 10,
            repeats: 10,
            swept,
            base: ExtractionConfig { inner_train: train.clone(), ..ExtractionConfig::default() },
            victim_train: train,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::config("repeats must be at least 1"));
        }
        if self.victim_frames_per_class < 2 {
            return Err(Error::config(
                "victim training needs at least 2 frames per class for its holdout",
            ));
        }
        if self.perp_frames_per_class < 1 {
            return Err(Error::config("perp_frames_per_class must be at least 1"));
        }
        if self.cal_frames < 1 {
            return Err(Error::config("cal_frames must be at least 1"));
        }
        if self.swept.is_empty() {
            return Err(Error::config("swept value grid is empty"));
        }
        for &v in &self.swept {
            let ok = match self.family {
                ExperimentFamily::AblationTf | ExperimentFamily::TransducerMismatch => {
                    v >= 1.0 && v.fract() == 0.0
                }
                ExperimentFamily::PriorsLabeldist => v > 0.0 && v < 100.0,
                ExperimentFamily::PriorsNoiserate => (0.0..100.0).contains(&v),
                ExperimentFamily::DatasetSize => v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(Error::config(format!(
                    "swept value {v} is invalid for the {} family",
                    self.family
                )));
            }
        }
        self.base.validate()?;
        self.victim_train.validate()?;
        // The patch grid must fit both the native victim frames and the
        // rate-converted perpetrator frames before any training starts.
        let grid = grid_for_scale(self.scale);
        let victim = MachineSpec::victim(self.scale);
        let perp = self.perp_machine();
        let sos = PhantomSpec::calibration().sos;
        grid.check_fits(victim.axial_samples(sos), victim.n_lines)
            .map_err(|e| Error::config(format!("victim frames do not fit the patch grid: {e}")))?;
        let (up, down) = crate::rfsim::rate_factors(perp.fs, victim.fs)?;
        let resampled_axial = (perp.axial_samples(sos) * up).div_ceil(down);
        grid.check_fits(resampled_axial, perp.n_lines).map_err(|e| {
            Error::config(format!("rate-converted frames do not fit the patch grid: {e}"))
        })?;
        Ok(())
    }

    fn perp_machine(&self) -> MachineSpec {
        match self.family {
            ExperimentFamily::TransducerMismatch => MachineSpec::perpetrator_alt(self.scale),
            _ => MachineSpec::perpetrator(self.scale),
        }
    }

    fn cal_mode(&self) -> CalibrationMode {
        match self.family {
            ExperimentFamily::TransducerMismatch => CalibrationMode::Freehand,
            _ => CalibrationMode::Stable,
        }
    }
}

/// The standard patch grid for each frame scale.
pub fn grid_for_scale(scale: Scale) -> PatchGrid {
    match scale {
        Scale::Full => PatchGrid::full(),
        Scale::Desk => PatchGrid::desk(),
        Scale::Compact => PatchGrid::compact(),
    }
}

/// One aggregated result cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub cell: String,
    pub iterations: usize,
    /// Mean held-out accuracy over repeats, percent.
    pub mean_acc: f64,
    pub std_acc: f64,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub repeats: usize,
    /// Oracle queries issued by one repeat of this cell.
    pub oracle_queries: u64,
}

/// Aggregated experiment results. Runtime is measured for operators but is
/// not part of the serialized report, so reports from equal inputs are
/// byte-identical regardless of machine speed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<ReportRow>,
    /// For the dataset-size family: whether mean accuracy is non-decreasing
    /// across the budget ladder within one standard deviation.
    pub trend_nondecreasing: Option<bool>,
    #[serde(skip)]
    pub runtime: Duration,
}

impl PartialEq for MetricReport {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.trend_nondecreasing == other.trend_nondecreasing
    }
}

/// Output formats for [`write_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::argument(format!("unknown report format '{other}'"))),
        }
    }
}

/// Rank-statistic AUC: the probability that a uniformly random positive
/// outranks a uniformly random negative, ties counted as half. Computed via
/// average ranks, which matches brute-force pair counting exactly.
pub fn compute_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::argument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::argument("cannot compute AUC of an empty score list"));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::argument("labels must be 0 or 1"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::argument("scores contain non-finite values"));
    }
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::argument("AUC needs both classes present"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Average 1-based ranks within tie groups; every rank is an integer or
    // half-integer, so the positive rank sum is exact in f64.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1) / 2) as f64;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Accuracy (percent, threshold 0.5 with `score >= 0.5` predicting class 1)
/// and AUC of a score list against reference labels.
pub fn metrics_from_scores(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::argument("score/label count mismatch"));
    }
    if scores.is_empty() {
        return Err(Error::argument("cannot evaluate an empty score list"));
    }
    let correct = scores
        .iter()
        .zip(labels.iter())
        .filter(|(s, &y)| (**s >= 0.5) == (y == 1))
        .count();
    let acc = 100.0 * correct as f64 / scores.len() as f64;
    let auc = compute_auc(scores, labels)?;
    Ok((acc, auc))
}

/// Patch-wise held-out metrics of a classifier: (accuracy percent, AUC).
pub fn evaluate(params: &ClassifierParams, test: &PatchSet, labels: &[u8]) -> Result<(f64, f64)> {
    if test.len() != labels.len() {
        return Err(Error::argument(format!(
            "{} test patches but {} labels",
            test.len(),
            labels.len()
        )));
    }
    let scores = params.predict_batch(test)?;
    metrics_from_scores(&scores, labels)
}

/// Synthesize labeled victim-machine frames, one vector per class.
pub fn build_victim_frames(
    machine: &MachineSpec,
    per_class: usize,
    seed: u64,
) -> Result<(Vec<RFFrame>, Vec<RFFrame>)> {
    let mk = |phantom: &PhantomSpec, class: u64| -> Result<Vec<RFFrame>> {
        (0..per_class)
            .map(|i| {
                let s = SeedPath::new(seed)
                    .with_str("victim-data")
                    .with(class)
                    .with(i as u64)
                    .seed();
                synthesize_frame(phantom, machine, s)
            })
            .collect()
    };
    Ok((mk(&PhantomSpec::phantom1(), 0)?, mk(&PhantomSpec::phantom2(), 1)?))
}

/// Synthesize perpetrator-machine frames for both classes and rate-convert
/// them to the victim's sampling rate. Returns one vector per class.
pub fn build_perp_frames(
    machine: &MachineSpec,
    victim_fs: f64,
    per_class: usize,
    seed: u64,
) -> Result<(Vec<RFFrame>, Vec<RFFrame>)> {
    let mk = |phantom: &PhantomSpec, class: u64| -> Result<Vec<RFFrame>> {
        (0..per_class)
            .map(|i| {
                let s = SeedPath::new(seed)
                    .with_str("perp-data")
                    .with(class)
                    .with(i as u64)
                    .seed();
                let native = synthesize_frame(phantom, machine, s)?;
                resample_to(&native, victim_fs)
            })
            .collect()
    };
    Ok((mk(&PhantomSpec::phantom1(), 0)?, mk(&PhantomSpec::phantom2(), 1)?))
}

/// Image the shared calibration phantom on both machines and estimate the
/// regularized transfer function on the victim's rate grid. The same base
/// seed drives both acquisitions, so both machines see the same physical
/// scatterer field (their noise differs).
pub fn calibrate_machines(
    victim: &MachineSpec,
    perp: &MachineSpec,
    n_frames: usize,
    mode: CalibrationMode,
    snr: f64,
    seed: u64,
) -> Result<TransferFunction> {
    let phantom = PhantomSpec::calibration();
    let victim_frames = acquire_calibration(victim, &phantom, mode, n_frames, seed)?;
    let perp_native = acquire_calibration(perp, &phantom, mode, n_frames, seed)?;
    let perp_frames: Vec<RFFrame> = perp_native
        .iter()
        .map(|f| resample_to(f, victim.fs))
        .collect::<Result<_>>()?;

    let victim_spectra =
        estimate_spectra(&victim_frames, DEFAULT_BIN_LEN, DEFAULT_OVERLAP, DEFAULT_NFFT)?;
    let perp_spectra =
        estimate_spectra(&perp_frames, DEFAULT_BIN_LEN, DEFAULT_OVERLAP, DEFAULT_NFFT)?;
    wiener(&compute_gamma(&victim_spectra, &perp_spectra)?, snr)
}

struct Cell {
    label: String,
    iterations: usize,
    identity_tf: bool,
    percentile: f64,
    epsilon: f64,
    perp_frames: usize,
}

fn fmt_swept(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn build_cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let base = Cell {
        label: String::new(),
        iterations: spec.base.iterations,
        identity_tf: false,
        percentile: spec.base.label_percentile,
        epsilon: spec.base.epsilon,
        perp_frames: spec.perp_frames_per_class,
    };
    let mut cells = Vec::new();
    match spec.family {
        ExperimentFamily::AblationTf => {
            for (identity, label) in [(false, "with_tf"), (true, "identity_tf")] {
                for &v in &spec.swept {
                    cells.push(Cell {
                        label: label.to_string(),
                        iterations: v as usize,
                        identity_tf: identity,
                        ..Cell { label: String::new(), ..base_clone(&base) }
                    });
                }
            }
        }
        ExperimentFamily::PriorsLabeldist => {
            for &v in &spec.swept {
                cells.push(Cell {
                    label: format!("percentile_{}", fmt_swept(v)),
                    percentile: v,
                    ..base_clone(&base)
                });
            }
        }
        ExperimentFamily::PriorsNoiserate => {
            for &v in &spec.swept {
                cells.push(Cell {
                    label: format!("epsilon_{}", fmt_swept(v)),
                    epsilon: v,
                    ..base_clone(&base)
                });
            }
        }
        ExperimentFamily::DatasetSize => {
            for &v in &spec.swept {
                cells.push(Cell {
                    label: format!("frames_{}", fmt_swept(v)),
                    perp_frames: v as usize,
                    ..base_clone(&base)
                });
            }
        }
        ExperimentFamily::TransducerMismatch => {
            for &v in &spec.swept {
                cells.push(Cell {
                    label: "alt_freehand".to_string(),
                    iterations: v as usize,
                    ..base_clone(&base)
                });
            }
        }
    }
    cells
}

fn base_clone(c: &Cell) -> Cell {
    Cell {
        label: c.label.clone(),
        iterations: c.iterations,
        identity_tf: c.identity_tf,
        percentile: c.percentile,
        epsilon: c.epsilon,
        perp_frames: c.perp_frames,
    }
}

/// Split per-class frame pools 1:1 into (unlabeled pool, hidden test), cut
/// patches, and return `(x_perp, test_patches, test_labels)`. The unlabeled
/// pool carries no labels anywhere downstream.
fn split_and_extract(
    class_frames: [&[RFFrame]; 2],
    per_class: usize,
    grid: &PatchGrid,
    seed: u64,
) -> Result<(PatchSet, PatchSet, Vec<u8>)> {
    let mut x_perp = Vec::new();
    let mut test_patches = Vec::new();
    let mut test_labels: Vec<u8> = Vec::new();
    for (class, frames) in class_frames.iter().enumerate() {
        let take = 2 * per_class;
        debug_assert!(take <= frames.len());
        let mut idx: Vec<usize> = (0..take).collect();
        let mut rng = SeedPath::new(seed)
            .with_str("perp-split")
            .with(per_class as u64)
            .with(class as u64)
            .rng();
        idx.shuffle(&mut rng);
        let (pool_idx, test_idx) = idx.split_at(per_class);
        let mut pool_sorted = pool_idx.to_vec();
        pool_sorted.sort_unstable();
        for &fi in &pool_sorted {
            x_perp.extend(extract_from_frames(std::slice::from_ref(&frames[fi]), grid)?.patches);
        }
        let mut test_sorted = test_idx.to_vec();
        test_sorted.sort_unstable();
        for &fi in &test_sorted {
            let patches = extract_from_frames(std::slice::from_ref(&frames[fi]), grid)?;
            test_labels.extend(std::iter::repeat(class as u8).take(patches.len()));
            test_patches.extend(patches.patches);
        }
    }
    Ok((PatchSet::new(x_perp), PatchSet::new(test_patches), test_labels))
}

/// Run one experiment family end to end and aggregate repeat statistics.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<MetricReport> {
    let started = Instant::now();
    spec.validate()?;
    let grid = grid_for_scale(spec.scale);
    let victim_machine = MachineSpec::victim(spec.scale);
    let perp_machine = spec.perp_machine();
    let cells = build_cells(spec);
    let max_perp = cells.iter().map(|c| c.perp_frames).max().unwrap();

    let mut accs: Vec<Vec<f64>> = vec![Vec::new(); cells.len()];
    let mut aucs: Vec<Vec<f64>> = vec![Vec::new(); cells.len()];
    let mut queries: Vec<u64> = vec![0; cells.len()];

    for k in 0..spec.repeats {
        let seed_k = spec.seed + k as u64;
        let (v0, v1) = build_victim_frames(&victim_machine, spec.victim_frames_per_class, seed_k)?;
        let victim_cfg = TrainConfig { seed: seed_k, ..spec.victim_train.clone() };
        let (oracle, vreport) = train_victim(&v0, &v1, &victim_cfg)?;
        log::info!(
            "repeat {k}: victim validation accuracy {:.2}%, AUC {:.4}",
            vreport.val_accuracy,
            vreport.val_auc
        );
        let tf = calibrate_machines(
            &victim_machine,
            &perp_machine,
            spec.cal_frames,
            spec.cal_mode(),
            spec.base.snr,
            SeedPath::new(seed_k).with_str("calibration").seed(),
        )?;
        let (p0, p1) = build_perp_frames(&perp_machine, victim_machine.fs, 2 * max_perp, seed_k)?;

        for (ci, cell) in cells.iter().enumerate() {
            let (x_perp, test_raw, test_labels) =
                split_and_extract([&p0, &p1], cell.perp_frames, &grid, seed_k)?;
            let cfg = ExtractionConfig {
                epsilon: cell.epsilon,
                iterations: cell.iterations,
                label_percentile: cell.percentile,
                seed: seed_k,
                ..spec.base.clone()
            };
            let tf_cell =
                if cell.identity_tf { TransferFunction::identity() } else { tf.clone() };
            let before = oracle.query_count();
            let f_iter = iterate(&oracle, &x_perp, &tf_cell, &cfg)?;
            let asked = oracle.query_count() - before;
            let f_final = finalize(&f_iter, &x_perp, &tf_cell, &cfg)?;
            let (acc, auc) = evaluate(&f_final, &test_raw.zscore(), &test_labels)?;
            log::debug!(
                "repeat {k}, cell {} (iters {}): acc {acc:.2}%, AUC {auc:.4}",
                cell.label,
                cell.iterations
            );
            accs[ci].push(acc);
            aucs[ci].push(auc);
            queries[ci] = asked;
        }
    }

    let rows: Vec<ReportRow> = cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| ReportRow {
            experiment: spec.family.to_string(),
            cell: cell.label.clone(),
            iterations: cell.iterations,
            mean_acc: mean(&accs[ci]),
            std_acc: sample_std(&accs[ci]),
            mean_auc: mean(&aucs[ci]),
            std_auc: sample_std(&aucs[ci]),
            repeats: spec.repeats,
            oracle_queries: queries[ci],
        })
        .collect();
    let trend = match spec.family {
        ExperimentFamily::DatasetSize => Some(trend_nondecreasing(&rows)),
        _ => None,
    };
    Ok(MetricReport { rows, trend_nondecreasing: trend, runtime: started.elapsed() })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n−1) standard deviation; 0 for a single repeat.
fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Mean accuracy never drops by more than the combined error bars between
/// consecutive cells.
pub(crate) fn trend_nondecreasing(rows: &[ReportRow]) -> bool {
    rows.windows(2)
        .all(|w| w[1].mean_acc + w[1].std_acc >= w[0].mean_acc - w[0].std_acc)
}

const CSV_HEADER: &str =
    "experiment,cell,iterations,mean_acc,std_acc,mean_auc,std_auc,repeats,oracle_queries";

/// Serialize a report. Equal reports produce byte-identical files.
pub fn write_report(report: &MetricReport, path: &Path, format: ReportFormat) -> Result<()> {
    let bytes = match format {
        ReportFormat::Csv => {
            let mut out = String::with_capacity(64 * (report.rows.len() + 1));
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in &report.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    r.experiment,
                    r.cell,
                    r.iterations,
                    r.mean_acc,
                    r.std_acc,
                    r.mean_auc,
                    r.std_auc,
                    r.repeats,
                    r.oracle_queries
                ));
            }
            out.into_bytes()
        }
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report)
                .map_err(|e| Error::format(path, format!("report serialization failed: {e}")))?;
            out.push(b'\n');
            out
        }
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read back a JSON report written by [`write_report`].
pub fn load_report_json(path: &Path) -> Result<MetricReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, format!("invalid report: {e}")))
}

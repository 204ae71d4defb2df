//! Probe: victim fractional-bandwidth sweep. Wider victim pulses push the
//! calibration band mask's lower edge down, preserving the perpetrator's
//! low-frequency class contrast through the mapping.

use echosteal_core::blackbox::{train_victim, Oracle};
use echosteal_core::calibration::{
    compute_gamma, estimate_spectra, wiener, TransferFunction, DEFAULT_BIN_LEN, DEFAULT_NFFT,
    DEFAULT_OVERLAP,
};
use echosteal_core::extraction::map_patches;
use echosteal_core::harness::{build_victim_frames, compute_auc};
use echosteal_core::model::{extract_from_frames, PatchGrid, PatchSet, TrainConfig};
use echosteal_core::rfsim::{
    acquire_calibration, resample_to, synthesize_frame, CalibrationMode, MachineSpec, PhantomSpec,
    Scale,
};
use echosteal_core::seeds::SeedPath;

fn pool(
    machine: &MachineSpec,
    victim_fs: f64,
    per_class: usize,
    seed: u64,
    grid: &PatchGrid,
) -> (PatchSet, Vec<u8>) {
    let mut patches = Vec::new();
    let mut labels = Vec::new();
    for (class, phantom) in [PhantomSpec::phantom1(), PhantomSpec::phantom2()].iter().enumerate() {
        for i in 0..per_class {
            let s = SeedPath::new(seed)
                .with_str("perp-data")
                .with(class as u64)
                .with(i as u64)
                .seed();
            let native = synthesize_frame(phantom, machine, s).unwrap();
            let frame = resample_to(&native, victim_fs).unwrap();
            let ps = extract_from_frames(std::slice::from_ref(&frame), grid).unwrap();
            labels.extend(std::iter::repeat(class as u8).take(ps.len()));
            patches.extend(ps.patches);
        }
    }
    (PatchSet::new(patches), labels)
}

fn auc_of(oracle: &Oracle, set: &PatchSet, labels: &[u8]) -> f64 {
    let scores = oracle.score(set).unwrap();
    compute_auc(&scores, labels).unwrap()
}

fn main() {
    let scale = Scale::Compact;
    let seed = 0u64;
    let grid = PatchGrid::compact();
    let perp_machine = MachineSpec::perpetrator(scale);

    for frac_v in [0.8, 0.9, 1.0] {
        let mut victim_machine = MachineSpec::victim(scale);
        victim_machine.frac_bandwidth = frac_v;

        let (v0, v1) = build_victim_frames(&victim_machine, 40, seed).unwrap();
        let cfg = TrainConfig { seed, ..TrainConfig::compact() };
        let (oracle, rep) = train_victim(&v0, &v1, &cfg).unwrap();

        let cal_seed = SeedPath::new(seed).with_str("calibration").seed();
        let phantom = PhantomSpec::calibration();
        let vcal =
            acquire_calibration(&victim_machine, &phantom, CalibrationMode::Stable, 10, cal_seed)
                .unwrap();
        let pcal_native =
            acquire_calibration(&perp_machine, &phantom, CalibrationMode::Stable, 10, cal_seed)
                .unwrap();
        let pcal: Vec<_> =
            pcal_native.iter().map(|f| resample_to(f, victim_machine.fs).unwrap()).collect();
        let vs = estimate_spectra(&vcal, DEFAULT_BIN_LEN, DEFAULT_OVERLAP, DEFAULT_NFFT).unwrap();
        let psp = estimate_spectra(&pcal, DEFAULT_BIN_LEN, DEFAULT_OVERLAP, DEFAULT_NFFT).unwrap();
        let raw = compute_gamma(&vs, &psp).unwrap();

        // Union band span across bins.
        let n_freq = raw.freqs.len();
        let lo = (0..n_freq)
            .find(|&k| raw.band_mask.iter().any(|m| m[k]))
            .map(|k| raw.freqs[k])
            .unwrap_or(0.0);
        let hi = (0..n_freq)
            .rev()
            .find(|&k| raw.band_mask.iter().any(|m| m[k]))
            .map(|k| raw.freqs[k])
            .unwrap_or(0.0);

        let (noisy, labels) = pool(&perp_machine, victim_machine.fs, 24, seed, &grid);
        let idn = TransferFunction::identity();
        let a_id = auc_of(&oracle, &map_patches(&noisy, &idn, 100.0).unwrap(), &labels);
        let a100 =
            auc_of(&oracle, &map_patches(&noisy, &wiener(&raw, 100.0).unwrap(), 100.0).unwrap(), &labels);
        let a30 =
            auc_of(&oracle, &map_patches(&noisy, &wiener(&raw, 30.0).unwrap(), 30.0).unwrap(), &labels);
        println!(
            "frac_v {frac_v}: val {:.2}%/{:.4} | mask {lo:.2}-{hi:.2} MHz | identity {a_id:.4} | tf@100 {a100:.4} | tf@30 {a30:.4}",
            rep.val_accuracy, rep.val_auc
        );
    }
}

//! Probe: oracle AUC on mapped perpetrator patches vs identity, sweeping the
//! regularization strength downward and adding a noise-free control group to
//! isolate band-edge noise amplification.

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
    let victim_machine = MachineSpec::victim(scale);
    let perp_machine = MachineSpec::perpetrator(scale);
    let grid = PatchGrid::compact();

    let (v0, v1) = build_victim_frames(&victim_machine, 40, seed).unwrap();
    let cfg = TrainConfig { seed, ..TrainConfig::compact() };
    let (oracle, rep) = train_victim(&v0, &v1, &cfg).unwrap();
    println!("victim val acc {:.2}% auc {:.4}", rep.val_accuracy, rep.val_auc);

    // Raw transfer function, estimated once from noisy stable calibration.
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
    let ps = estimate_spectra(&pcal, DEFAULT_BIN_LEN, DEFAULT_OVERLAP, DEFAULT_NFFT).unwrap();
    let raw = compute_gamma(&vs, &ps).unwrap();

    // Noisy pool (pipeline conditions) and a noise-free twin with the same seeds.
    let (noisy, labels) = pool(&perp_machine, victim_machine.fs, 24, seed, &grid);
    let mut quiet_machine = perp_machine.clone();
    quiet_machine.noise_floor = 0.0;
    let (quiet, qlabels) = pool(&quiet_machine, victim_machine.fs, 24, seed, &grid);

    let idn = TransferFunction::identity();
    println!("identity      noisy auc {:.4}", auc_of(&oracle, &map_patches(&noisy, &idn, 100.0).unwrap(), &labels));
    println!("identity      quiet auc {:.4}", auc_of(&oracle, &map_patches(&quiet, &idn, 100.0).unwrap(), &qlabels));
    for snr in [4.0, 10.0, 30.0, 100.0, 1000.0] {
        let tf = wiener(&raw, snr).unwrap();
        let a_noisy = auc_of(&oracle, &map_patches(&noisy, &tf, snr).unwrap(), &labels);
        let a_quiet = auc_of(&oracle, &map_patches(&quiet, &tf, snr).unwrap(), &qlabels);
        println!("snr {snr:7}: noisy auc {a_noisy:.4} | noise-free auc {a_quiet:.4}");
    }
}

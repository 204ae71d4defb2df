//! Probe: decompose the mapped-arm oracle drop. Compares identity, the
//! estimated transfer function, a closed-form analytic transfer function on
//! the same band mask, and a mask-only filter; prints per-bin estimation
//! bias profiles (estimated / analytic ratio quantiles).

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
    let est = compute_gamma(&vs, &ps).unwrap();

    // Same mask, closed-form pulse-spectrum ratio in place of the estimate.
    let mut ana = est.clone();
    for row in ana.gamma_raw.iter_mut() {
        for (k, g) in row.iter_mut().enumerate() {
            let f = ana.freqs[k];
            *g = victim_machine.pulse_spectrum(f) / perp_machine.pulse_spectrum(f).max(1e-300);
        }
    }
    // Same mask, flat unit gain: pure band-limiting.
    let mut flat = est.clone();
    for row in flat.gamma_raw.iter_mut() {
        for g in row.iter_mut() {
            *g = 1.0;
        }
    }

    // Per-bin estimation bias: quantiles of estimated/analytic on the mask.
    for (bi, bin) in est.bins.iter().enumerate() {
        let mut ratios: Vec<(f64, f64)> = Vec::new();
        for (k, (&g_e, &m)) in est.gamma_raw[bi].iter().zip(est.band_mask[bi].iter()).enumerate() {
            if m {
                ratios.push((est.freqs[k], g_e / ana.gamma_raw[bi][k]));
            }
        }
        if ratios.is_empty() {
            println!("bin {bi} [{}..{}]: empty mask", bin.start, bin.end);
            continue;
        }
        let lo = ratios.first().unwrap().0;
        let hi = ratios.last().unwrap().0;
        let mut vals: Vec<f64> = ratios.iter().map(|r| r.1).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| vals[((vals.len() - 1) as f64 * p).round() as usize];
        println!(
            "bin {bi} [{:3}..{:3}] mask {lo:.2}-{hi:.2} MHz: est/ana p10 {:.3} med {:.3} p90 {:.3}",
            bin.start,
            bin.end,
            q(0.1),
            q(0.5),
            q(0.9)
        );
    }

    let (noisy, labels) = pool(&perp_machine, victim_machine.fs, 24, seed, &grid);
    let idn = TransferFunction::identity();
    println!("identity                     auc {:.4}", auc_of(&oracle, &map_patches(&noisy, &idn, 100.0).unwrap(), &labels));
    for snr in [100.0, 1e6] {
        let e = auc_of(&oracle, &map_patches(&noisy, &wiener(&est, snr).unwrap(), snr).unwrap(), &labels);
        let a = auc_of(&oracle, &map_patches(&noisy, &wiener(&ana, snr).unwrap(), snr).unwrap(), &labels);
        let f = auc_of(&oracle, &map_patches(&noisy, &wiener(&flat, snr).unwrap(), snr).unwrap(), &labels);
        println!("snr {snr:9}: estimated auc {e:.4} | analytic auc {a:.4} | mask-only auc {f:.4}");
    }
}

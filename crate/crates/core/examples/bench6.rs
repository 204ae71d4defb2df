//! Probe: narrow, high victim band. A victim model whose class cues sit on
//! the perpetrator's upper spectral slope should misread raw perpetrator data
//! (low identity AUC) while staying reachable through the mapped band.

use echosteal_core::blackbox::{train_victim, Oracle};
use echosteal_core::calibration::{
    compute_gamma, estimate_spectra, wiener, TransferFunction, DEFAULT_BIN_LEN, DEFAULT_NFFT,
    DEFAULT_OVERLAP,
};
use echosteal_core::extraction::{map_patches, pseudo_label};
use echosteal_core::harness::{build_victim_frames, compute_auc};
use echosteal_core::model::{extract_from_frames, PatchGrid, PatchSet, TrainConfig};
use echosteal_core::rfsim::{
    acquire_calibration, resample_to, synthesize_frame, CalibrationMode, MachineSpec, PhantomSpec,
    Scale,
};
use echosteal_core::seeds::SeedPath;

fn perp_pool(
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

fn victim_pool(
    machine: &MachineSpec,
    per_class: usize,
    seed: u64,
    grid: &PatchGrid,
) -> (PatchSet, Vec<u8>) {
    let mut patches = Vec::new();
    let mut labels = Vec::new();
    for (class, phantom) in [PhantomSpec::phantom1(), PhantomSpec::phantom2()].iter().enumerate() {
        for i in 0..per_class {
            let s = SeedPath::new(seed)
                .with_str("probe-victim")
                .with(class as u64)
                .with(i as u64)
                .seed();
            let frame = synthesize_frame(phantom, machine, s).unwrap();
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

fn agree_of(oracle: &Oracle, set: &PatchSet, labels: &[u8]) -> f64 {
    let scores = oracle.score(set).unwrap();
    let pl = pseudo_label(&scores, 50.0).unwrap();
    let hits = pl.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

fn main() {
    let scale = Scale::Compact;
    let seed = 0u64;
    let grid = PatchGrid::compact();
    let perp_machine = MachineSpec::perpetrator(scale);

    for frac_v in [0.4, 0.5] {
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

        // Mask-only filter: unit gain inside the shared band, zero outside.
        let mut flat = raw.clone();
        for g in flat.gamma_raw.iter_mut() {
            for v in g.iter_mut() {
                *v = 1.0;
            }
        }

        let (perp, plab) = perp_pool(&perp_machine, victim_machine.fs, 24, seed, &grid);
        let (vprobe, vlab) = victim_pool(&victim_machine, 12, seed, &grid);

        let idn = TransferFunction::identity();
        let m_id = map_patches(&perp, &idn, 100.0).unwrap();
        let m_tf100 = map_patches(&perp, &wiener(&raw, 100.0).unwrap(), 100.0).unwrap();
        let m_tf1k = map_patches(&perp, &wiener(&raw, 1000.0).unwrap(), 1000.0).unwrap();
        let m_mask = map_patches(&perp, &wiener(&flat, 1000.0).unwrap(), 1000.0).unwrap();
        let v_id = map_patches(&vprobe, &idn, 100.0).unwrap();
        let v_mask = map_patches(&vprobe, &wiener(&flat, 1000.0).unwrap(), 1000.0).unwrap();

        println!(
            "frac_v {frac_v}: val {:.2}%/{:.4} | mask {lo:.2}-{hi:.2} MHz",
            rep.val_accuracy, rep.val_auc
        );
        println!(
            "  perp:   identity {:.4} | tf@100 {:.4} | tf@1000 {:.4} | mask-only {:.4}",
            auc_of(&oracle, &m_id, &plab),
            auc_of(&oracle, &m_tf100, &plab),
            auc_of(&oracle, &m_tf1k, &plab),
            auc_of(&oracle, &m_mask, &plab),
        );
        println!(
            "  victim: direct {:.4} | mask-only {:.4}",
            auc_of(&oracle, &v_id, &vlab),
            auc_of(&oracle, &v_mask, &vlab),
        );
        println!(
            "  agree:  identity {:.4} | tf@1000 {:.4}",
            agree_of(&oracle, &m_id, &plab),
            agree_of(&oracle, &m_tf1k, &plab),
        );
    }
}

//! Probe: victim bandwidth vs training length. Find the narrowest victim
//! band whose model still validates at 99%+ while misreading raw
//! perpetrator data.

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

    for (frac_v, epochs) in [(0.5, 24usize), (0.6, 12), (0.6, 24), (0.7, 12)] {
        let mut victim_machine = MachineSpec::victim(scale);
        victim_machine.frac_bandwidth = frac_v;

        let (v0, v1) = build_victim_frames(&victim_machine, 40, seed).unwrap();
        let cfg = TrainConfig { seed, epochs, ..TrainConfig::compact() };
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

        let (perp, plab) = perp_pool(&perp_machine, victim_machine.fs, 24, seed, &grid);
        let idn = TransferFunction::identity();
        let m_id = map_patches(&perp, &idn, 100.0).unwrap();
        let m_tf = map_patches(&perp, &wiener(&raw, 1000.0).unwrap(), 1000.0).unwrap();

        println!(
            "frac_v {frac_v} epochs {epochs}: val {:.2}%/{:.4} | identity {:.4} (agree {:.3}) | \
             tf@1000 {:.4} (agree {:.3})",
            rep.val_accuracy,
            rep.val_auc,
            auc_of(&oracle, &m_id, &plab),
            agree_of(&oracle, &m_id, &plab),
            auc_of(&oracle, &m_tf, &plab),
            agree_of(&oracle, &m_tf, &plab),
        );
    }
}

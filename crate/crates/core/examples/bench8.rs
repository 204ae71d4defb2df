//! End-to-end rehearsal at the candidate operating point: narrowband victim
//! (0.6 fractional bandwidth, long schedule), broadband perpetrator, both
//! extraction arms, two seeds.

use echosteal_core::blackbox::train_victim;
use echosteal_core::calibration::{wiener, TransferFunction};
use echosteal_core::extraction::{finalize, iterate, map_patches, pseudo_label, ExtractionConfig};
use echosteal_core::harness::{
    build_perp_frames, build_victim_frames, calibrate_machines, compute_auc, evaluate,
};
use echosteal_core::model::{extract_from_frames, PatchGrid, PatchSet, TrainConfig};
use echosteal_core::rfsim::{CalibrationMode, MachineSpec, RFFrame, Scale};
use echosteal_core::seeds::SeedPath;

fn patches_of(frames: &[RFFrame], grid: &PatchGrid, label: u8) -> (Vec<echosteal_core::model::Patch>, Vec<u8>) {
    let mut patches = Vec::new();
    let mut labels = Vec::new();
    for f in frames {
        let ps = extract_from_frames(std::slice::from_ref(f), grid).unwrap();
        labels.extend(std::iter::repeat(label).take(ps.len()));
        patches.extend(ps.patches);
    }
    (patches, labels)
}

fn main() {
    let scale = Scale::Compact;
    let grid = PatchGrid::compact();
    let mut victim_machine = MachineSpec::victim(scale);
    victim_machine.frac_bandwidth = 0.6;
    let perp_machine = MachineSpec::perpetrator(scale);

    for seed in [0u64, 1] {
        let (v0, v1) = build_victim_frames(&victim_machine, 40, seed).unwrap();
        let vcfg = TrainConfig { seed, epochs: 24, ..TrainConfig::compact() };
        let (oracle, rep) = train_victim(&v0, &v1, &vcfg).unwrap();

        let tf = calibrate_machines(
            &victim_machine,
            &perp_machine,
            10,
            CalibrationMode::Stable,
            1000.0,
            SeedPath::new(seed).with_str("calibration").seed(),
        )
        .unwrap();
        let n_freq = tf.freqs.len();
        let lo = (0..n_freq)
            .find(|&k| tf.band_mask.iter().any(|m| m[k]))
            .map(|k| tf.freqs[k])
            .unwrap_or(0.0);
        let hi = (0..n_freq)
            .rev()
            .find(|&k| tf.band_mask.iter().any(|m| m[k]))
            .map(|k| tf.freqs[k])
            .unwrap_or(0.0);

        // 32 frames per class: first half unlabeled pool, second half test.
        let (p0, p1) = build_perp_frames(&perp_machine, victim_machine.fs, 32, seed).unwrap();
        let mut pool = Vec::new();
        let (a, _) = patches_of(&p0[..16], &grid, 0);
        pool.extend(a);
        let (b, _) = patches_of(&p1[..16], &grid, 1);
        pool.extend(b);
        let pool = PatchSet::new(pool);
        let mut test = Vec::new();
        let mut test_labels = Vec::new();
        let (a, la) = patches_of(&p0[16..], &grid, 0);
        test.extend(a);
        test_labels.extend(la);
        let (b, lb) = patches_of(&p1[16..], &grid, 1);
        test.extend(b);
        test_labels.extend(lb);
        let test = PatchSet::new(test).zscore();

        // Pool labels only for diagnostics (never fed to the pipeline).
        let pool_labels: Vec<u8> = std::iter::repeat(0u8)
            .take(16 * 81)
            .chain(std::iter::repeat(1u8).take(16 * 81))
            .collect();
        for snr in [100.0, 1000.0] {
            let w = wiener(&tf, snr).unwrap();
            let mapped = map_patches(&pool, &w, snr).unwrap();
            let scores = oracle.score(&mapped).unwrap();
            let auc = compute_auc(&scores, &pool_labels).unwrap();
            let pl = pseudo_label(&scores, 50.0).unwrap();
            let agree = pl.iter().zip(&pool_labels).filter(|(a, b)| a == b).count() as f64
                / pool_labels.len() as f64;
            println!("  seed {seed} oracle-on-mapped snr {snr}: auc {auc:.4} agree {agree:.3}");
        }

        for (name, tf_arm, snr) in [
            ("with_tf", wiener(&tf, 1000.0).unwrap(), 1000.0),
            ("identity", TransferFunction::identity(), 1000.0),
        ] {
            let cfg = ExtractionConfig {
                iterations: 2,
                snr,
                inner_train: TrainConfig::compact(),
                seed,
                ..ExtractionConfig::default()
            };
            let f_iter = iterate(&oracle, &pool, &tf_arm, &cfg).unwrap();
            let f_final = finalize(&f_iter, &pool, &tf_arm, &cfg).unwrap();
            let (acc, auc) = evaluate(&f_final, &test, &test_labels).unwrap();
            println!("  seed {seed} {name}: final acc {acc:.2}% auc {auc:.4}");
        }
        println!(
            "seed {seed}: victim val {:.2}%/{:.4} | mask {lo:.2}-{hi:.2} MHz",
            rep.val_accuracy, rep.val_auc
        );
    }
}

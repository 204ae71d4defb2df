//! Capacity matrix for the mapped domain: how well can the small model learn
//! the class task from mapped perpetrator patches when given TRUE labels,
//! under (a) per-patch vs frame-level filtering, (b) pool size, (c) inner
//! training hyperparameters. Also reports oracle label quality per mapping.

use echosteal_core::blackbox::train_victim;
use echosteal_core::calibration::{apply_frame, wiener};
use echosteal_core::extraction::{map_patches, pseudo_label};
use echosteal_core::harness::{
    build_perp_frames, build_victim_frames, calibrate_machines, compute_auc, evaluate,
};
use echosteal_core::model::{
    extract_from_frames, train, Architecture, ClassifierParams, PatchGrid, PatchSet, TrainConfig,
};
use echosteal_core::rfsim::{CalibrationMode, MachineSpec, RFFrame, Scale};
use echosteal_core::seeds::SeedPath;

fn patch_pool(frames0: &[RFFrame], frames1: &[RFFrame], grid: &PatchGrid) -> (PatchSet, Vec<u8>) {
    let mut patches = Vec::new();
    let mut labels = Vec::new();
    for (frames, label) in [(frames0, 0u8), (frames1, 1u8)] {
        for f in frames {
            let ps = extract_from_frames(std::slice::from_ref(f), grid).unwrap();
            labels.extend(std::iter::repeat(label).take(ps.len()));
            patches.extend(ps.patches);
        }
    }
    (PatchSet::new(patches), labels)
}

fn agree(labels: &[u8], truth: &[u8]) -> f64 {
    labels.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

fn main() {
    let scale = Scale::Compact;
    let grid = PatchGrid::compact();
    let seed = 0u64;
    let snr = 1000.0;
    let mut victim_machine = MachineSpec::victim(scale);
    victim_machine.frac_bandwidth = 0.6;
    let perp_machine = MachineSpec::perpetrator(scale);

    let (v0, v1) = build_victim_frames(&victim_machine, 40, seed).unwrap();
    let vcfg = TrainConfig { seed, epochs: 24, ..TrainConfig::compact() };
    let (oracle, rep) = train_victim(&v0, &v1, &vcfg).unwrap();
    println!("victim val {:.2}%/{:.4}", rep.val_accuracy, rep.val_auc);

    let tf = calibrate_machines(
        &victim_machine,
        &perp_machine,
        10,
        CalibrationMode::Stable,
        1000.0,
        SeedPath::new(seed).with_str("calibration").seed(),
    )
    .unwrap();
    let w = wiener(&tf, snr).unwrap();

    let (p0, p1) = build_perp_frames(&perp_machine, victim_machine.fs, 32, seed).unwrap();
    let (t0, t1) = build_perp_frames(&perp_machine, victim_machine.fs, 8, 777).unwrap();

    // Mapping A: cut patches first, filter each 50-sample patch.
    let map_a = |f0: &[RFFrame], f1: &[RFFrame]| -> (PatchSet, Vec<u8>) {
        let (raw, labels) = patch_pool(f0, f1, &grid);
        (map_patches(&raw, &w, snr).unwrap(), labels)
    };
    // Mapping B: filter whole frames, then cut patches and standardize.
    let map_b = |f0: &[RFFrame], f1: &[RFFrame]| -> (PatchSet, Vec<u8>) {
        let m0: Vec<RFFrame> = f0.iter().map(|f| apply_frame(&w, f).unwrap()).collect();
        let m1: Vec<RFFrame> = f1.iter().map(|f| apply_frame(&w, f).unwrap()).collect();
        let (pool, labels) = patch_pool(&m0, &m1, &grid);
        (pool.zscore(), labels)
    };

    let (test_a, test_labels) = map_a(&t0, &t1);
    let (test_b, _) = map_b(&t0, &t1);

    for (name, mapped_pool, truth, mapped_test) in [
        ("A patch-16", map_a(&p0[..16], &p1[..16]).0, map_a(&p0[..16], &p1[..16]).1, &test_a),
        ("B frame-16", map_b(&p0[..16], &p1[..16]).0, map_b(&p0[..16], &p1[..16]).1, &test_b),
        ("A patch-32", map_a(&p0, &p1).0, map_a(&p0, &p1).1, &test_a),
        ("B frame-32", map_b(&p0, &p1).0, map_b(&p0, &p1).1, &test_b),
    ] {
        let s = oracle.score(&mapped_pool).unwrap();
        let l = pseudo_label(&s, 50.0).unwrap();
        println!(
            "{name}: oracle auc {:.4} agree {:.3}",
            compute_auc(&s, &truth).unwrap(),
            agree(&l, &truth)
        );
        let init = ClassifierParams::init(
            Architecture::perpetrator(grid.patch_h, grid.patch_w),
            SeedPath::new(seed).with_str("capacity").seed(),
        )
        .unwrap();
        let cfg = TrainConfig { seed, ..TrainConfig::compact() };
        let model = train(&init, &mapped_pool, &truth, &cfg).unwrap();
        let (acc, auc) = evaluate(&model, mapped_test, &test_labels).unwrap();
        println!("{name}: capacity acc {acc:.2}% auc {auc:.4} (lr 3e-3, 12 ep)");
    }

    // Hyperparameter variants on the frame-level 16-per-class cell.
    let (pool_b, truth_b) = map_b(&p0[..16], &p1[..16]);
    for (lr, epochs) in [(1.0e-3, 12usize), (3.0e-3, 24), (1.0e-3, 24), (5.0e-4, 36)] {
        let init = ClassifierParams::init(
            Architecture::perpetrator(grid.patch_h, grid.patch_w),
            SeedPath::new(seed).with_str("capacity").seed(),
        )
        .unwrap();
        let cfg = TrainConfig { seed, epochs, learning_rate: lr, ..TrainConfig::compact() };
        let model = train(&init, &pool_b, &truth_b, &cfg).unwrap();
        let (acc, auc) = evaluate(&model, &test_b, &test_labels).unwrap();
        println!("B frame-16 lr {lr:.0e} ep {epochs}: capacity acc {acc:.2}% auc {auc:.4}");
    }
}

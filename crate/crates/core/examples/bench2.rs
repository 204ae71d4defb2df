//! Throwaway probe: isolates where the extraction pipeline loses signal.
//! Reports (a) oracle pseudo-label agreement with true classes on mapped
//! and unmapped perpetrator patches, and (b) the perp architecture's
//! ceiling when trained on true labels. Not part of the shipped tool.

use echosteal_core::blackbox::train_victim;
use echosteal_core::calibration::TransferFunction;
use echosteal_core::extraction::{map_patches, pseudo_label};
use echosteal_core::harness::{
    build_perp_frames, build_victim_frames, calibrate_machines, evaluate,
};
use echosteal_core::model::{
    extract_from_frames, train, Architecture, ClassifierParams, PatchGrid, TrainConfig,
};
use echosteal_core::rfsim::{CalibrationMode, MachineSpec, Scale};

fn main() {
    let seed = 0u64;
    let scale = Scale::Compact;
    let victim_machine = MachineSpec::victim(scale);
    let perp_machine = MachineSpec::perpetrator(scale);
    let grid = PatchGrid::compact();

    let (v0, v1) = build_victim_frames(&victim_machine, 40, seed).unwrap();
    let vcfg = TrainConfig { seed, ..TrainConfig::compact() };
    let (oracle, vrep) = train_victim(&v0, &v1, &vcfg).unwrap();
    println!("victim val acc {:.2}% auc {:.4}", vrep.val_accuracy, vrep.val_auc);

    let tf = calibrate_machines(
        &victim_machine,
        &perp_machine,
        10,
        CalibrationMode::Stable,
        100.0,
        seed,
    )
    .unwrap();

    // Perp pool with known class identity per patch.
    let (p0, p1) = build_perp_frames(&perp_machine, victim_machine.fs, 24, seed).unwrap();
    let x0 = extract_from_frames(&p0, &grid).unwrap();
    let x1 = extract_from_frames(&p1, &grid).unwrap();
    let truth: Vec<u8> = std::iter::repeat(0u8)
        .take(x0.len())
        .chain(std::iter::repeat(1u8).take(x1.len()))
        .collect();
    let mut all = x0;
    all.patches.extend(x1.patches);

    for (tag, tf_arm) in [("with_tf", tf.clone()), ("identity", TransferFunction::identity())] {
        let mapped = map_patches(&all, &tf_arm, 100.0).unwrap();
        let scores = oracle.score(&mapped).unwrap();
        let labels = pseudo_label(&scores, 50.0).unwrap();
        let agree = labels.iter().zip(truth.iter()).filter(|(a, b)| a == b).count();
        let (acc, auc) = evaluate_scores(&scores, &truth);
        println!(
            "{tag}: pseudo-label agreement {:.2}% | oracle score acc {:.2}% auc {:.4}",
            100.0 * agree as f64 / truth.len() as f64,
            acc,
            auc
        );
    }

    // Ceiling: perp arch trained on TRUE labels, tested on held-out frames.
    let (t0, t1) = build_perp_frames(&perp_machine, victim_machine.fs, 24, seed + 1000).unwrap();
    let s0 = extract_from_frames(&t0, &grid).unwrap();
    let s1 = extract_from_frames(&t1, &grid).unwrap();
    let test_truth: Vec<u8> = std::iter::repeat(0u8)
        .take(s0.len())
        .chain(std::iter::repeat(1u8).take(s1.len()))
        .collect();
    let mut test = s0;
    test.patches.extend(s1.patches);

    let arch = Architecture::perpetrator(grid.patch_h, grid.patch_w);
    let init = ClassifierParams::init(arch, seed).unwrap();
    let cfg = TrainConfig { seed, ..TrainConfig::compact() };
    let trained = train(&init, &all.zscore(), &truth, &cfg).unwrap();
    let (acc, auc) = evaluate(&trained, &test.zscore(), &test_truth).unwrap();
    println!("true-label ceiling: acc {:.2}% auc {:.4}", acc, auc);
}

fn evaluate_scores(scores: &[f64], labels: &[u8]) -> (f64, f64) {
    let correct = scores
        .iter()
        .zip(labels.iter())
        .filter(|(s, &y)| (**s >= 0.5) == (y == 1))
        .count();
    let acc = 100.0 * correct as f64 / scores.len() as f64;
    let auc = echosteal_core::harness::compute_auc(scores, labels).unwrap();
    (acc, auc)
}

//! Stage-by-stage dissection of one extraction run: where between the
//! oracle's pseudo-labels and the finalized model does the signal go?

use echosteal_core::blackbox::train_victim;
use echosteal_core::calibration::wiener;
use echosteal_core::extraction::{finalize, iterate, map_patches, pseudo_label, ExtractionConfig};
use echosteal_core::harness::{
    build_perp_frames, build_victim_frames, calibrate_machines, compute_auc, evaluate,
};
use echosteal_core::model::{
    extract_from_frames, train, Architecture, ClassifierParams, Patch, PatchGrid, PatchSet,
    TrainConfig,
};
use echosteal_core::rfsim::{CalibrationMode, MachineSpec, RFFrame, Scale};
use echosteal_core::seeds::SeedPath;

fn patches_of(frames: &[RFFrame], grid: &PatchGrid, label: u8) -> (Vec<Patch>, Vec<u8>) {
    let mut patches = Vec::new();
    let mut labels = Vec::new();
    for f in frames {
        let ps = extract_from_frames(std::slice::from_ref(f), grid).unwrap();
        labels.extend(std::iter::repeat(label).take(ps.len()));
        patches.extend(ps.patches);
    }
    (patches, labels)
}

fn spread(scores: &[f64]) -> (f64, f64, f64) {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| s[((s.len() - 1) as f64 * p) as usize];
    (q(0.1), q(0.5), q(0.9))
}

fn agree(labels: &[u8], truth: &[u8]) -> f64 {
    labels.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

fn main() {
    let scale = Scale::Compact;
    let grid = PatchGrid::compact();
    let seed = 0u64;
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

    let (p0, p1) = build_perp_frames(&perp_machine, victim_machine.fs, 32, seed).unwrap();
    let mut pool = Vec::new();
    let (a, _) = patches_of(&p0[..16], &grid, 0);
    pool.extend(a);
    let (b, _) = patches_of(&p1[..16], &grid, 1);
    pool.extend(b);
    let pool = PatchSet::new(pool);
    let truth: Vec<u8> = std::iter::repeat(0u8)
        .take(16 * 81)
        .chain(std::iter::repeat(1u8).take(16 * 81))
        .collect();

    let mut test = Vec::new();
    let mut test_labels = Vec::new();
    let (a, la) = patches_of(&p0[16..], &grid, 0);
    test.extend(a);
    test_labels.extend(la);
    let (b, lb) = patches_of(&p1[16..], &grid, 1);
    test.extend(b);
    test_labels.extend(lb);
    let test_raw = PatchSet::new(test).zscore();

    let snr = 1000.0;
    let w = wiener(&tf, snr).unwrap();
    let mapped = map_patches(&pool, &w, snr).unwrap();
    let mapped_test = {
        let mut t = Vec::new();
        let (a, _) = patches_of(&p0[16..], &grid, 0);
        t.extend(a);
        let (b, _) = patches_of(&p1[16..], &grid, 1);
        t.extend(b);
        map_patches(&PatchSet::new(t), &w, snr).unwrap()
    };

    // Stage 0: oracle pseudo-labels.
    let s0 = oracle.score(&mapped).unwrap();
    let l0 = pseudo_label(&s0, 50.0).unwrap();
    let (a10, a50, a90) = spread(&s0);
    println!(
        "stage 0 oracle:   auc {:.4} agree {:.3} score p10/p50/p90 {a10:.3}/{a50:.3}/{a90:.3}",
        compute_auc(&s0, &truth).unwrap(),
        agree(&l0, &truth)
    );

    // Capacity control: the inner architecture trained on the same mapped
    // pool with the true labels, scored on mapped held-out data.
    let init = ClassifierParams::init(
        Architecture::perpetrator(grid.patch_h, grid.patch_w),
        SeedPath::new(seed).with_str("capacity").seed(),
    )
    .unwrap();
    let ideal = train(&init, &mapped, &truth, &TrainConfig { seed, ..TrainConfig::compact() })
        .unwrap();
    let (cap_acc, cap_auc) = evaluate(&ideal, &mapped_test, &test_labels).unwrap();
    println!("capacity control: acc {cap_acc:.2}% auc {cap_auc:.4} (true labels, mapped domain)");

    // Stage 1: first anchored model.
    let cfg1 = ExtractionConfig {
        iterations: 1,
        snr,
        inner_train: TrainConfig::compact(),
        seed,
        ..ExtractionConfig::default()
    };
    let m1 = iterate(&oracle, &pool, &w, &cfg1).unwrap();
    let s1 = m1.predict_batch(&mapped).unwrap();
    let l1 = pseudo_label(&s1, 50.0).unwrap();
    let (a10, a50, a90) = spread(&s1);
    println!(
        "stage 1 model:    auc {:.4} relabel-agree {:.3} score p10/p50/p90 {a10:.3}/{a50:.3}/{a90:.3}",
        compute_auc(&s1, &truth).unwrap(),
        agree(&l1, &truth)
    );

    // Stage 2: second anchored model (full two-iteration run).
    let cfg2 = ExtractionConfig { iterations: 2, ..cfg1.clone() };
    let m2 = iterate(&oracle, &pool, &w, &cfg2).unwrap();
    let s2 = m2.predict_batch(&mapped).unwrap();
    let l2 = pseudo_label(&s2, 50.0).unwrap();
    let (a10, a50, a90) = spread(&s2);
    println!(
        "stage 2 model:    auc {:.4} relabel-agree {:.3} score p10/p50/p90 {a10:.3}/{a50:.3}/{a90:.3}",
        compute_auc(&s2, &truth).unwrap(),
        agree(&l2, &truth)
    );

    // Stage 3: finalized raw-domain model.
    let f = finalize(&m2, &pool, &w, &cfg2).unwrap();
    let (acc, auc) = evaluate(&f, &test_raw, &test_labels).unwrap();
    println!("stage 3 final:    acc {acc:.2}% auc {auc:.4} (raw domain, held out)");
}

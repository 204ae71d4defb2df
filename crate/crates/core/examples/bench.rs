//! Throwaway probe: one repeat of the transfer-function ablation at the
//! compact scale with production-sized data, printing per-cell metrics and
//! timing. Not part of the shipped tool.

use std::time::Instant;

use echosteal_core::harness::{run_experiment, ExperimentFamily, ExperimentSpec};
use echosteal_core::rfsim::Scale;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0);
    let mut spec = ExperimentSpec::new(ExperimentFamily::AblationTf, Scale::Compact);
    spec.repeats = 1;
    spec.swept = vec![2.0];
    spec.seed = seed;
    let t = Instant::now();
    let report = run_experiment(&spec).unwrap();
    for row in &report.rows {
        println!(
            "seed {seed} cell {:<12} iters {} acc {:.2}% auc {:.4} queries {}",
            row.cell, row.iterations, row.mean_acc, row.mean_auc, row.oracle_queries
        );
    }
    println!("total {:.1} s", t.elapsed().as_secs_f64());
}

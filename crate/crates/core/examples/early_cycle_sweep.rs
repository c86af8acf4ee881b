//! Test error as a function of how many early cycles the features may use.
//! Degradation starts at cycle 60 here, so windows ending before it carry
//! no capacity-difference signal.
//!
//! Run: cargo run --release --example early_cycle_sweep

use qrf_cycle_life::data::{label_all, reference_batch_counts, split_train_test};
use qrf_cycle_life::synth::{gen_synthetic_cells, SynthCellsSpec};
use qrf_cycle_life::tuning::{sweep_early_cycles, SweepConfig};

fn main() -> qrf_cycle_life::Result<()> {
    let w_values = vec![40, 70, 100];
    let spec = SynthCellsSpec {
        seed: 8,
        onset: 60,
        curve_cycles: [10].into_iter().chain(w_values.iter().copied()).collect(),
        ..Default::default()
    };
    let synth = gen_synthetic_cells(&spec)?;
    let (labeled, _) = label_all(&synth.cells, 0.8);
    let split = split_train_test(&labeled, &reference_batch_counts(), 8)?;
    let cfg = SweepConfig {
        w_values,
        qrf_trials: 5,
        elastic_net_trials: 10,
        max_trees: Some(60),
        seed: 8,
        ..Default::default()
    };
    let report = sweep_early_cycles(&labeled, &split, &cfg);
    for r in &report.rows {
        println!(
            "w = {:>3} {:<12} RMSE {:>7.1} MAPE {:.3}",
            r.w, r.model, r.rmse, r.mape
        );
    }
    for (w, why) in &report.failures {
        println!("w = {w} failed: {why}");
    }
    Ok(())
}

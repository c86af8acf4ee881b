//! Generate synthetic cells, extract the early-cycle features and check a few
//! against the parameters that generated them.
//!
//! Run: cargo run --release --example feature_extraction

use qrf_cycle_life::data::label_cycle_life;
use qrf_cycle_life::features::extract_all;
use qrf_cycle_life::synth::{gen_synthetic_cells, SynthCellsSpec};
use qrf_cycle_life::FeatureConfig;

fn main() -> qrf_cycle_life::Result<()> {
    let spec = SynthCellsSpec {
        batch_sizes: vec![4, 4],
        seed: 3,
        ..Default::default()
    };
    let synth = gen_synthetic_cells(&spec)?;
    let cfg = FeatureConfig::default();

    println!(
        "{:<6} {:>10} {:>12} {:>12} {:>12} {:>12}",
        "cell", "life", "var dQ", "closed form", "fade slope", "closed form"
    );
    for (cell, truth) in synth.cells.iter().zip(&synth.truth) {
        let life = label_cycle_life(cell, 0.8)?.cycle_life;
        let f = extract_all(cell, &cfg)?;
        println!(
            "{:<6} {:>10} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            cell.cell_id,
            life,
            f.get("delta_q_var").unwrap_or(f64::NAN),
            truth.delta_q_variance(cfg.r, cfg.w, cfg.grid.n_points),
            f.get("fade_slope").unwrap_or(f64::NAN),
            -truth.fade
        );
    }
    Ok(())
}

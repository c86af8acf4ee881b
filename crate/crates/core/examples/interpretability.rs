//! Permutation importance and quantile partial dependence on an additive
//! problem with known component functions.
//!
//! Run: cargo run --release --example interpretability

use qrf_cycle_life::interpret::{forest_importance, pdp, PdpGrid, Score, DEFAULT_PDP_ALPHAS};
use qrf_cycle_life::synth::{additive_true_partial, gen_additive};
use qrf_cycle_life::{fit_forest, Hyperparameters};

fn main() -> qrf_cycle_life::Result<()> {
    let data = gen_additive(800, 2);
    let hp = Hyperparameters {
        n_trees: 200,
        ..Hyperparameters::defaults_for(data.n_features())
    };
    let forest = fit_forest(&data, &hp)?;

    let report = forest_importance(&forest, &data, Score::R2, 5, 9)?;
    println!("baseline R2 {:.3}", report.s0);
    for f in &report.features {
        println!("  {:<3} importance {:.4}", f.feature, f.importance);
    }

    let res = pdp(
        &forest,
        &data,
        0,
        &PdpGrid::Quantiles(8),
        &DEFAULT_PDP_ALPHAS,
    )?;
    println!("\npartial dependence on x1 (true component 20 x1^2)");
    for (g, v) in res.grid.iter().enumerate().map(|(g, v)| (g, *v)) {
        println!(
            "  x1 = {v:.3}: mean {:>6.2} [{:>6.2}, {:>6.2}, {:>6.2}] true {:>6.2}",
            res.mean[g],
            res.quantiles[0][g],
            res.quantiles[1][g],
            res.quantiles[2][g],
            additive_true_partial(0, v)
        );
    }
    Ok(())
}

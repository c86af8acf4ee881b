//! Fit a quantile regression forest on a heteroscedastic problem and compare
//! its intervals with the true conditional quantiles.
//!
//! Run: cargo run --release --example quantile_forest

use qrf_cycle_life::quantile::prediction_interval;
use qrf_cycle_life::synth::gen_heteroscedastic;
use qrf_cycle_life::{fit_forest, Hyperparameters};

fn main() -> qrf_cycle_life::Result<()> {
    let train = gen_heteroscedastic(2000, 1);
    let hp = Hyperparameters {
        min_leaf: 10,
        seed: 7,
        ..Hyperparameters::defaults_for(train.dataset.n_features())
    };
    let forest = fit_forest(&train.dataset, &hp)?;

    println!(
        "{:>5} {:>5} {:>9} {:>19} {:>19}",
        "x1", "x2", "median", "80% interval", "true interval"
    );
    for (x1, x2) in [(0.2, 0.1), (0.2, 0.9), (0.8, 0.1), (0.8, 0.9)] {
        let mut x = vec![0.5; train.dataset.n_features()];
        x[0] = x1;
        x[1] = x2;
        let dist = forest.conditional_distribution(&x)?;
        let iv = prediction_interval(&forest, &x, 0.8)?;
        let (lo, hi) = train.true_interval(&x, 0.8);
        println!(
            "{x1:>5} {x2:>5} {:>9.1} [{:>7.1}, {:>7.1}] [{lo:>7.1}, {hi:>7.1}]",
            dist.quantile(0.5)?,
            iv.lower,
            iv.upper
        );
    }
    Ok(())
}

//! Random search over forest hyperparameters scored by leave-one-out ABES.
//!
//! Run: cargo run --release --example loo_tuning

use qrf_cycle_life::synth::gen_heteroscedastic;
use qrf_cycle_life::tuning::{random_search, refit_final, SearchSpace};

fn main() -> qrf_cycle_life::Result<()> {
    let data = gen_heteroscedastic(80, 5).dataset;
    let mut space = SearchSpace::for_features(data.n_features());
    space.n_trees = (20, 100);
    let result = random_search(&data, &space, 8, 42)?;
    for t in &result.trials {
        let hp = &t.hyperparameters;
        println!(
            "trial {:>2}: trees {:>3} mtry {:>2} min_leaf {:>2} depth {:>4} fraction {:.2} -> LOO ABES {:>6.2}%",
            t.trial_index,
            hp.n_trees,
            hp.mtry,
            hp.min_leaf,
            hp.max_depth.map_or("none".to_string(), |d| d.to_string()),
            hp.sample_fraction,
            t.abes_cv
        );
    }
    println!(
        "best trial {} ({:.2}%)",
        result.best.trial_index, result.best.abes_cv
    );
    let forest = refit_final(&data, &result.best.hyperparameters)?;
    println!(
        "refit on all {} rows with {} trees",
        forest.n_train(),
        forest.trees.len()
    );
    Ok(())
}

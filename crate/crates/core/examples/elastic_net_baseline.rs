//! Tune and fit the Elastic Net baseline, then read its coefficients back in
//! raw feature units.
//!
//! Run: cargo run --release --example elastic_net_baseline

use qrf_cycle_life::elastic_net::{fit_elastic_net, tune_elastic_net};
use qrf_cycle_life::metrics::rmse;
use qrf_cycle_life::synth::gen_additive;

fn main() -> qrf_cycle_life::Result<()> {
    let train = gen_additive(120, 1);
    let test = gen_additive(200, 2);
    let (best, trials) = tune_elastic_net(&train, 25, 3)?;
    println!(
        "best of {} trials: lambda {:.4e}, l1_ratio {:.3}, LOO RMSE {:.3}",
        trials.len(),
        best.lambda,
        best.l1_ratio,
        best.loo_rmse
    );
    let model = fit_elastic_net(&train, best.lambda, best.l1_ratio)?;
    let (coef, intercept) = model.raw_coefficients();
    println!("intercept {intercept:.3}");
    for (name, c) in model.feature_names.iter().zip(&coef) {
        println!("  {name}: {c:+.3}");
    }
    println!(
        "test RMSE {:.3}",
        rmse(&test.y, &model.predict_rows(&test.x))?
    );
    Ok(())
}

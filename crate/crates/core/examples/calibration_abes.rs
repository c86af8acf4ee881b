//! Calibration curve and area-based error score (ABES) of a forest on held-out
//! data, next to the two anchor curves.
//!
//! Run: cargo run --release --example calibration_abes

use qrf_cycle_life::metrics::{
    abes, default_nominal_grid, forest_calibration_curve, CalibrationCurve,
};
use qrf_cycle_life::synth::gen_heteroscedastic;
use qrf_cycle_life::{fit_forest, Hyperparameters};

fn main() -> qrf_cycle_life::Result<()> {
    let train = gen_heteroscedastic(1500, 11).dataset;
    let test = gen_heteroscedastic(500, 12).dataset;
    let hp = Hyperparameters {
        n_trees: 300,
        min_leaf: 10,
        ..Hyperparameters::defaults_for(train.n_features())
    };
    let forest = fit_forest(&train, &hp)?;
    let grid = default_nominal_grid();
    let curve = forest_calibration_curve(&forest, &test, &grid)?;

    for (n, a) in curve.nominal.iter().zip(&curve.actual).step_by(10) {
        println!("nominal {n:.2}  actual {a:.3}");
    }
    println!("forest ABES      {:.2}%", abes(&curve)?);
    println!(
        "identity ABES    {:.2}%",
        abes(&CalibrationCurve::new(grid.clone(), grid.clone())?)?
    );
    println!(
        "all-zero ABES    {:.2}%",
        abes(&CalibrationCurve::new(grid.clone(), vec![0.0; grid.len()])?)?
    );
    Ok(())
}

//! Rank charging protocols by expected cycle life and flag cells whose
//! prediction intervals are too wide to trust.
//!
//! Run: cargo run --release --example protocol_selection

use qrf_cycle_life::decision::{rank_protocols, DEFAULT_FLAG_THRESHOLD};
use qrf_cycle_life::quantile::PredictionInterval;
use qrf_cycle_life::CellPrediction;

fn cell(id: &str, mean: f64, lower: f64, upper: f64) -> CellPrediction {
    CellPrediction {
        cell_id: id.into(),
        mean,
        median: mean,
        interval: PredictionInterval {
            lower,
            upper,
            nominal_coverage: 0.85,
        },
        interval_length: upper - lower,
    }
}

fn main() -> qrf_cycle_life::Result<()> {
    let preds = vec![
        ("5.4C(70%)-3C".to_string(), cell("18", 947.0, 830.0, 1076.0)),
        ("5.4C(70%)-3C".to_string(), cell("19", 920.0, 800.0, 1036.0)),
        ("6C(40%)-3C".to_string(), cell("24", 843.0, 600.0, 1010.0)),
        ("6C(40%)-3C".to_string(), cell("25", 729.0, 640.0, 850.0)),
    ];
    let ranking = rank_protocols(&preds, DEFAULT_FLAG_THRESHOLD)?;
    for d in &ranking {
        println!(
            "{:<14} cells {} ECL1 {:>7.2} ECL2 {:>7.2} flagged {:?}",
            d.protocol, d.cell_count, d.ecl1, d.ecl2, d.flagged_ids
        );
    }
    println!("choose {}", ranking[0].protocol);
    Ok(())
}

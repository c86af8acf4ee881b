//! The whole workflow through the command-line front end: synthesize a
//! corpus, extract features, split, tune, train, evaluate and rank protocols.
//!
//! Run: cargo run --release --example full_pipeline [work-dir]

use std::path::PathBuf;

use qrf_cycle_life::cli;

fn main() -> qrf_cycle_life::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("qrf-cycle-life-demo"));
    let data = root.join("data");
    let out = root.join("out");
    let base = |extra: &[&str]| {
        let mut args = vec![
            "qrf-cycle-life".to_string(),
            "--data-dir".into(),
            data.display().to_string(),
            "--out-dir".into(),
            out.display().to_string(),
            "--trials".into(),
            "10".into(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        args
    };

    cli::run([
        "qrf-cycle-life",
        "--out-dir",
        &data.display().to_string(),
        "synth",
    ])?;
    for step in [
        &["features"][..],
        &["split"],
        &["tune", "--max-trees", "150"],
        &["train"],
        &["evaluate"],
        &["importance"],
        &["rank-protocols"],
        &["baseline"],
    ] {
        println!("== {}", step[0]);
        cli::run(base(step))?;
    }
    println!("\n{}", std::fs::read_to_string(out.join("metrics.csv"))?);
    println!(
        "{}",
        std::fs::read_to_string(out.join("baseline_metrics.csv"))?
    );
    println!("outputs in {}", out.display());
    Ok(())
}

//! End-to-end runs of the command-line front end on a small synthetic corpus.

use std::path::{Path, PathBuf};
use std::process::Command;

use qrf_cycle_life::cli;
use qrf_cycle_life::{Error, Forest};

const COUNTS: &str = "2017-05-12=6:2,2017-06-30=6:2,2018-04-12=6:2";

struct Workspace {
    _root: tempfile::TempDir,
    data: PathBuf,
    out: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let root = tempfile::tempdir().unwrap();
        let data = root.path().join("data");
        let out = root.path().join("out");
        Self {
            _root: root,
            data,
            out,
        }
    }

    fn run(&self, extra: &[&str]) -> qrf_cycle_life::Result<()> {
        let mut args = vec![
            "qrf-cycle-life".to_string(),
            "--data-dir".into(),
            self.data.display().to_string(),
            "--out-dir".into(),
            self.out.display().to_string(),
            "--trials".into(),
            "2".into(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        cli::run(args)
    }

    fn synth(&self) {
        cli::run([
            "qrf-cycle-life",
            "--out-dir",
            self.data.to_str().unwrap(),
            "synth",
            "--batch-sizes",
            "8,8,8",
        ])
        .unwrap();
    }

    fn prepared(&self) {
        self.synth();
        self.run(&["features"]).unwrap();
        self.run(&["split", "--counts", COUNTS]).unwrap();
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.out.join(name)).unwrap()
    }
}

fn header(text: &str) -> &str {
    text.lines().next().unwrap()
}

fn tmp_leftovers(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with(".tmp-")
        })
        .count()
}

#[test]
fn full_pipeline_writes_every_table() {
    let ws = Workspace::new();
    ws.prepared();
    for f in [
        "cells.csv",
        "cycles.csv",
        "curves.csv",
        "truth.csv",
        "config.synth.json",
    ] {
        assert!(ws.data.join(f).is_file(), "{f}");
    }
    assert_eq!(ws.read("split.csv").lines().count(), 1 + 24);

    ws.run(&["tune", "--max-trees", "15"]).unwrap();
    ws.run(&["train"]).unwrap();
    ws.run(&["predict"]).unwrap();
    ws.run(&["evaluate"]).unwrap();
    ws.run(&["importance", "--repeats", "2"]).unwrap();
    ws.run(&["pdp", "--feature", "delta_q_var", "--points", "5"])
        .unwrap();
    ws.run(&["rank-protocols"]).unwrap();
    ws.run(&["baseline"]).unwrap();

    assert_eq!(
        header(&ws.read("trials.csv")),
        "trial,n_trees,mtry,min_leaf,max_depth,sample_fraction,replacement,abes_cv,wall_time_s"
    );
    assert_eq!(ws.read("trials.csv").lines().count(), 3);
    assert_eq!(
        header(&ws.read("predictions.csv")),
        "cell_id,mean,median,lower,upper,interval_length,nominal_coverage"
    );
    assert_eq!(ws.read("predictions.csv").lines().count(), 1 + 6);
    ws.run(&["predict", "--coverage", "0.9"]).unwrap();
    assert!(ws
        .read("predictions.csv")
        .lines()
        .skip(1)
        .all(|l| l.ends_with(",0.9")));
    ws.run(&["predict", "--coverage", "0.85"]).unwrap();
    assert!(ws
        .read("predictions.csv")
        .lines()
        .skip(1)
        .all(|l| l.ends_with(",0.85")));
    let metrics = ws.read("metrics.csv");
    for m in ["r2", "rmse", "mape", "picp", "abes", "n"] {
        assert!(
            metrics.lines().any(|l| l.starts_with(&format!("{m},"))),
            "{m}"
        );
    }
    assert_eq!(ws.read("calibration.csv").lines().count(), 1 + 99);
    assert_eq!(
        header(&ws.read("importance.csv")),
        "feature,importance,s0,score,M"
    );
    assert_eq!(
        header(&ws.read("pdp.csv")),
        "feature,grid_value,mean,q075,q50,q925"
    );
    assert_eq!(
        header(&ws.read("protocols.csv")),
        "protocol,B,ecl1,ecl2,n_flagged"
    );
    assert_eq!(
        header(&ws.read("flags.csv")),
        "cell_id,interval_length,threshold"
    );
    assert!(ws
        .read("baseline_predictions.csv")
        .lines()
        .nth(1)
        .unwrap()
        .ends_with(",,,,,elastic_net"));

    ws.run(&["evaluate", "--area", "signed"]).unwrap();
    assert!(ws
        .read("metrics.csv")
        .lines()
        .any(|l| l.starts_with("abes_signed,")));

    let model = Forest::load(&ws.out.join("model.json")).unwrap();
    let hp: serde_json::Value = serde_json::from_str(&ws.read("best_hp.json")).unwrap();
    assert_eq!(
        model.hyperparameters.n_trees as u64,
        hp["n_trees"].as_u64().unwrap()
    );
    let raw: serde_json::Value = serde_json::from_str(&ws.read("model.json")).unwrap();
    assert_eq!(raw["format"], "qrf-cycle-life/forest");
    assert_eq!(raw["version"], 1);

    let echo: serde_json::Value = serde_json::from_str(&ws.read("config.train.json")).unwrap();
    assert_eq!(echo["command"], "train");
    assert!(echo.get("threads").is_none());
    assert_eq!(tmp_leftovers(&ws.out), 0);
}

#[test]
fn cells_dying_before_w_are_excluded() {
    let ws = Workspace::new();
    ws.synth();
    let path = ws.data.join("cycles.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut kept = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if i == 0 || f[0] != "b1c00" {
            kept.push(line.to_string());
            continue;
        }
        let n: u32 = f[1].parse().unwrap();
        if n < 60 {
            kept.push(line.to_string());
        } else if n == 60 {
            kept.push(format!("{},{},0.5,{},{}", f[0], f[1], f[3], f[4]));
        }
    }
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    let curves = ws.data.join("curves.csv");
    let text = std::fs::read_to_string(&curves).unwrap();
    let kept: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with("b1c00,100,"))
        .collect();
    std::fs::write(&curves, kept.join("\n") + "\n").unwrap();
    ws.run(&["features"]).unwrap();
    let features = ws.read("features.csv");
    assert_eq!(features.lines().count(), 1 + 23);
    assert!(!features.contains("b1c00"));
}

#[test]
fn train_without_tuning_uses_defaults() {
    let ws = Workspace::new();
    ws.prepared();
    ws.run(&["train"]).unwrap();
    let model = Forest::load(&ws.out.join("model.json")).unwrap();
    assert_eq!(model.hyperparameters.n_trees, 500);
    assert_eq!(model.n_train(), 18);
}

#[test]
fn timings_fill_wall_time_column() {
    let ws = Workspace::new();
    ws.prepared();
    ws.run(&["tune", "--max-trees", "5"]).unwrap();
    assert!(ws.read("trials.csv").lines().nth(1).unwrap().ends_with(','));
    ws.run(&["--timings", "tune", "--max-trees", "5"]).unwrap();
    let last = ws
        .read("trials.csv")
        .lines()
        .nth(1)
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .to_string();
    assert!(last.parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn failures_leave_no_outputs() {
    let ws = Workspace::new();
    let err = ws.run(&["features"]).unwrap_err();
    assert!(matches!(err, Error::Io(_) | Error::Parse { .. }), "{err:?}");
    assert!(!ws.out.join("features.csv").exists());

    ws.prepared();
    let err = ws.run(&["predict"]).unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err:?}");
    assert!(!ws.out.join("predictions.csv").exists());
}

#[test]
fn invalid_arguments_are_config_errors() {
    let ws = Workspace::new();
    for bad in [
        &["--coverage", "1.5", "features"][..],
        &["--threads", "0", "features"],
        &["--trials", "0", "tune"],
        &["--threshold", "0", "rank-protocols"],
        &["--r", "100", "--w", "50", "features"],
        &["no-such-command"],
        &["split", "--counts", "2017-05-12=oops"],
    ] {
        let err = ws.run(bad).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{bad:?}: {err:?}");
    }
    assert!(cli::run(["qrf-cycle-life", "--help"]).is_ok());
}

#[test]
fn binary_reports_errors_through_exit_status() {
    let exe = env!("CARGO_BIN_EXE_qrf-cycle-life");
    let dir = tempfile::tempdir().unwrap();
    let ok = Command::new(exe).arg("--version").output().unwrap();
    assert!(ok.status.success());
    let bad = Command::new(exe)
        .args(["--data-dir", dir.path().to_str().unwrap(), "--out-dir"])
        .arg(dir.path().join("out"))
        .arg("features")
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error: "));
}

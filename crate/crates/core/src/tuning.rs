//! Leave-one-out calibration, ABES-driven random search over forest
//! hyperparameters, and the early-cycle sensitivity sweep.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{truncate_to_early_cycles, DatasetSplit, LabeledCell};
use crate::dataset::Dataset;
use crate::elastic_net::{fit_elastic_net, tune_elastic_net};
use crate::error::{Error, Result};
use crate::features::{build_matrix, FeatureConfig, VoltageGrid};
use crate::forest::{fit_forest, Forest, Hyperparameters};
use crate::metrics::{abes, default_nominal_grid, mape, rmse, CalibrationCurve};
use crate::seed;

/// Pooled out-of-fold results of leave-one-out cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct LooResult {
    pub curve: CalibrationCurve,
    /// Number of fits, one per held-out row.
    pub folds: usize,
    pub train_sizes: Vec<usize>,
    /// Out-of-fold mean prediction of each row.
    pub oof_mean: Vec<f64>,
}

/// Fold `i` trains on every row but `i` with seed `derive_seed(hp.seed, i)`
/// and predicts intervals for row `i` at every nominal level; the held-out
/// results are pooled into one calibration curve.
pub fn loo_xve_calibration(
    data: &Dataset,
    hp: &Hyperparameters,
    nominal: &[f64],
) -> Result<LooResult> {
    let n = data.n_rows();
    if n < 3 {
        return Err(Error::Domain(format!(
            "leave-one-out needs N >= 3, got {n}"
        )));
    }
    let folds: Vec<(Vec<bool>, f64, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let fold_hp = Hyperparameters {
                seed: seed::derive_seed(hp.seed, i as u64),
                ..hp.clone()
            };
            let train = data.without_row(i);
            let run = || -> Result<(Vec<bool>, f64)> {
                let forest = fit_forest(&train, &fold_hp)?;
                let d = forest.conditional_distribution(&data.x[i])?;
                let covered = nominal
                    .iter()
                    .map(|&c| d.interval(c).map(|iv| iv.contains(data.y[i])))
                    .collect::<Result<_>>()?;
                Ok((covered, d.mean()))
            };
            run()
                .map(|(c, m)| (c, m, train.n_rows()))
                .map_err(|e| Error::Fold {
                    fold: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let covered: Vec<Vec<bool>> = folds.iter().map(|f| f.0.clone()).collect();
    Ok(LooResult {
        curve: CalibrationCurve::from_indicators(nominal.to_vec(), &covered)?,
        folds: folds.len(),
        train_sizes: folds.iter().map(|f| f.2).collect(),
        oof_mean: folds.iter().map(|f| f.1).collect(),
    })
}

/// LOO ABES of one hyperparameter setting on the default nominal grid.
pub fn loo_abes(data: &Dataset, hp: &Hyperparameters) -> Result<f64> {
    abes(&loo_xve_calibration(data, hp, &default_nominal_grid())?.curve)
}

/// Bounds of the random search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_trees: (usize, usize),
    pub mtry: (usize, usize),
    pub min_leaf: (usize, usize),
    /// Depth limits drawn alongside "unlimited".
    pub max_depth: (usize, usize),
    pub sample_fraction: (f64, f64),
}

impl SearchSpace {
    pub fn for_features(p: usize) -> Self {
        Self {
            n_trees: (100, 1000),
            mtry: (1, p.max(1)),
            min_leaf: (1, 20),
            max_depth: (4, 32),
            sample_fraction: (0.5, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = self.n_trees.0 <= self.n_trees.1
            && self.mtry.0 <= self.mtry.1
            && self.min_leaf.0 <= self.min_leaf.1
            && self.max_depth.0 <= self.max_depth.1
            && self.sample_fraction.0 <= self.sample_fraction.1;
        if !ordered {
            return Err(Error::Config("search space bounds out of order".into()));
        }
        if self.n_trees.0 == 0 || self.mtry.0 == 0 || self.min_leaf.0 == 0 {
            return Err(Error::Config(
                "search space lower bounds must be positive".into(),
            ));
        }
        if !(self.sample_fraction.0 > 0.0 && self.sample_fraction.1 <= 1.0) {
            return Err(Error::Config(
                "sample_fraction bounds must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// One uniform draw; `min_leaf` is capped so every fold can grow a tree
    /// on `n_fold` rows.
    pub fn sample<R: Rng>(&self, rng: &mut R, n_fold: usize, model_seed: u64) -> Hyperparameters {
        let n_trees = rng.random_range(self.n_trees.0..=self.n_trees.1);
        let mtry = rng.random_range(self.mtry.0..=self.mtry.1);
        let min_leaf = rng.random_range(self.min_leaf.0..=self.min_leaf.1);
        let depth_choices = self.max_depth.1 - self.max_depth.0 + 2;
        let pick = rng.random_range(0..depth_choices);
        let max_depth = (pick > 0).then(|| self.max_depth.0 + pick - 1);
        let sample_fraction = rng.random_range(self.sample_fraction.0..=self.sample_fraction.1);
        let bootstrap_with_replacement = rng.random_bool(0.5);
        let mut hp = Hyperparameters {
            n_trees,
            mtry,
            min_leaf,
            max_depth,
            sample_fraction,
            bootstrap_with_replacement,
            seed: model_seed,
        };
        hp.min_leaf = hp.min_leaf.min(hp.bag_size(n_fold));
        hp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub hyperparameters: Hyperparameters,
    pub abes_cv: f64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: TrialResult,
    pub trials: Vec<TrialResult>,
}

/// Draws every trial's hyperparameters from stream 0 of `seed`, then scores
/// all trials by LOO ABES. Every trial fits with the same model seed,
/// `derive_seed(seed, 1)`. The winner is the smallest ABES, earlier trial on
/// ties.
pub fn random_search(
    data: &Dataset,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
) -> Result<SearchResult> {
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be at least 1".into()));
    }
    space.validate()?;
    if space.mtry.1 > data.n_features() {
        return Err(Error::Config(format!(
            "search space mtry upper bound {} exceeds {} features",
            space.mtry.1,
            data.n_features()
        )));
    }
    let model_seed = seed::derive_seed(seed, 1);
    let mut rng = seed::stream(seed, 0);
    let n_fold = data.n_rows().saturating_sub(1).max(1);
    let settings: Vec<Hyperparameters> = (0..n_trials)
        .map(|_| space.sample(&mut rng, n_fold, model_seed))
        .collect();
    let trials: Vec<TrialResult> = settings
        .into_par_iter()
        .enumerate()
        .map(|(trial_index, hp)| {
            let start = Instant::now();
            let abes_cv = loo_abes(data, &hp)?;
            log::debug!("trial {trial_index}: abes {abes_cv:.4}");
            Ok(TrialResult {
                trial_index,
                hyperparameters: hp,
                abes_cv,
                wall_time: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_>>()?;
    let mut best = &trials[0];
    for t in &trials[1..] {
        if t.abes_cv < best.abes_cv {
            best = t;
        }
    }
    Ok(SearchResult {
        best: best.clone(),
        trials,
    })
}

/// Fits the final forest on every row.
pub fn refit_final(data: &Dataset, best: &Hyperparameters) -> Result<Forest> {
    fit_forest(data, best)
}

/// `trials.csv`. Wall times are left empty unless `with_time`, so repeated
/// runs produce identical bytes.
pub fn trials_to_csv(trials: &[TrialResult], with_time: bool) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "trial",
        "n_trees",
        "mtry",
        "min_leaf",
        "max_depth",
        "sample_fraction",
        "replacement",
        "abes_cv",
        "wall_time_s",
    ])?;
    for t in trials {
        let hp = &t.hyperparameters;
        w.write_record([
            t.trial_index.to_string(),
            hp.n_trees.to_string(),
            hp.mtry.to_string(),
            hp.min_leaf.to_string(),
            hp.max_depth.map_or("none".to_string(), |d| d.to_string()),
            hp.sample_fraction.to_string(),
            hp.bootstrap_with_replacement.to_string(),
            t.abes_cv.to_string(),
            if with_time {
                t.wall_time.to_string()
            } else {
                String::new()
            },
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub w_values: Vec<u32>,
    pub r: u32,
    pub grid: VoltageGrid,
    pub drop_ir_features: bool,
    pub qrf_trials: usize,
    pub elastic_net_trials: usize,
    /// Caps the tree-count range of the search space.
    pub max_trees: Option<usize>,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            w_values: (1..=10).map(|k| 25 * k).collect(),
            r: 10,
            grid: VoltageGrid::default(),
            drop_ir_features: false,
            qrf_trials: 250,
            elastic_net_trials: 250,
            max_trees: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w: u32,
    pub model: String,
    pub rmse: f64,
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `(w, reason)` for each w that produced no rows.
    pub failures: Vec<(u32, String)>,
    /// `(w, cell_id)` for cells too short for w.
    pub dropped: Vec<(u32, String)>,
}

fn sweep_one(
    cells: &[LabeledCell],
    split: &DatasetSplit,
    cfg: &SweepConfig,
    w: u32,
) -> Result<(Vec<SweepRow>, Vec<String>)> {
    if cfg.r >= w {
        return Err(Error::Config(format!(
            "r = {} must be below w = {w}",
            cfg.r
        )));
    }
    let features = FeatureConfig {
        r: cfg.r,
        w,
        grid: cfg.grid,
        drop_ir_features: cfg.drop_ir_features,
    };
    let mut dropped = Vec::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in cells {
        let in_train = split.train_ids.contains(&c.cell.cell_id);
        if !in_train && !split.test_ids.contains(&c.cell.cell_id) {
            continue;
        }
        match truncate_to_early_cycles(&c.cell, w) {
            Ok(cell) => {
                let l = LabeledCell {
                    cell,
                    cycle_life: c.cycle_life,
                };
                if in_train {
                    train.push(l)
                } else {
                    test.push(l)
                }
            }
            Err(_) => dropped.push(c.cell.cell_id.clone()),
        }
    }
    let train = build_matrix(&train, &features)?;
    let test = build_matrix(&test, &features)?;
    if test.is_empty() {
        return Err(Error::Domain("no test cells survive truncation".into()));
    }
    let mut space = SearchSpace::for_features(train.n_features());
    if let Some(m) = cfg.max_trees {
        space.n_trees = (space.n_trees.0.min(m), space.n_trees.1.min(m));
    }
    let run_seed = seed::derive_seed(cfg.seed, w as u64);
    let search = random_search(&train, &space, cfg.qrf_trials, run_seed)?;
    let forest = refit_final(&train, &search.best.hyperparameters)?;
    let qrf_pred = forest.predict_rows(&test.x)?;
    let (best_en, _) = tune_elastic_net(&train, cfg.elastic_net_trials, run_seed)?;
    let en = fit_elastic_net(&train, best_en.lambda, best_en.l1_ratio)?;
    let en_pred = en.predict_rows(&test.x);
    let rows = vec![
        SweepRow {
            w,
            model: "qrf".into(),
            rmse: rmse(&test.y, &qrf_pred)?,
            mape: mape(&test.y, &qrf_pred)?,
        },
        SweepRow {
            w,
            model: "elastic_net".into(),
            rmse: rmse(&test.y, &en_pred)?,
            mape: mape(&test.y, &en_pred)?,
        },
    ];
    Ok((rows, dropped))
}

/// For each `w`: truncate the cells, extract features, tune both models on
/// the training cells and score them on the test cells of `split`. A failing
/// `w` is recorded and the sweep moves on.
pub fn sweep_early_cycles(
    cells: &[LabeledCell],
    split: &DatasetSplit,
    cfg: &SweepConfig,
) -> SweepReport {
    let mut report = SweepReport {
        rows: Vec::new(),
        failures: Vec::new(),
        dropped: Vec::new(),
    };
    for &w in &cfg.w_values {
        match sweep_one(cells, split, cfg, w) {
            Ok((rows, dropped)) => {
                for id in dropped {
                    log::info!("w = {w}: dropping cell `{id}` (too few cycles)");
                    report.dropped.push((w, id));
                }
                report.rows.extend(rows);
            }
            Err(e) => {
                log::warn!("w = {w}: {e}");
                report.failures.push((w, e.to_string()));
            }
        }
    }
    report
}

/// `sweep.csv`: `w,model,rmse,mape`.
pub fn sweep_to_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["w", "model", "rmse", "mape"])?;
    for r in rows {
        w.write_record([
            r.w.to_string(),
            r.model.clone(),
            r.rmse.to_string(),
            r.mape.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

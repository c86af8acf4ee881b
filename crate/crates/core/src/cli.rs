//! Command-line front end. Every subcommand reads its inputs, computes its
//! tables in memory, and only then writes them into `--out-dir`, so a failed
//! run leaves no partial outputs behind.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{
    label_all, load_dir, reference_batch_counts, save_cells, split_train_test, DatasetSplit,
    RawPaths,
};
use crate::dataset::Dataset;
use crate::decision::{flags_to_csv, protocols_to_csv, rank_protocols};
use crate::elastic_net::{self, fit_elastic_net, tune_elastic_net};
use crate::error::{Error, Result};
use crate::features::{build_matrix, FeatureConfig, VoltageGrid};
use crate::forest::{Forest, Hyperparameters};
use crate::interpret::{self, forest_importance, pdp, PdpGrid, Score, DEFAULT_PDP_ALPHAS};
use crate::metrics::{
    abes_with, default_nominal_grid, forest_calibration_curve, mape, metrics_to_csv, picp, r2,
    rmse, AreaMode,
};
use crate::quantile::{predict_cells, predictions_to_csv, PREDICTIONS_HEADER};
use crate::synth::{gen_synthetic_cells, truth_to_csv, SynthCellsSpec};
use crate::tuning::{
    random_search, refit_final, sweep_early_cycles, sweep_to_csv, trials_to_csv, SearchSpace,
    SweepConfig,
};

pub const EOL_FRACTION: f64 = 0.8;

#[derive(Debug, Parser)]
#[command(
    name = "qrf-cycle-life",
    version,
    about = "Quantile regression forests for battery cycle-life ranges"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Directory holding cells.csv, cycles.csv and curves.csv.
    #[arg(long, global = true, default_value = "data")]
    pub data_dir: PathBuf,
    /// Directory receiving every output table.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Reference cycle.
    #[arg(long, global = true, default_value_t = 10)]
    pub r: u32,
    /// Last early cycle.
    #[arg(long, global = true, default_value_t = 100)]
    pub w: u32,
    #[arg(long, global = true, default_value_t = 2.0)]
    pub grid_min: f64,
    #[arg(long, global = true, default_value_t = 3.5)]
    pub grid_max: f64,
    #[arg(long, global = true, default_value_t = 1000)]
    pub grid_points: usize,
    /// Nominal coverage of prediction intervals.
    #[arg(long, global = true, default_value_t = 0.85)]
    pub coverage: f64,
    /// Random-search trials (forest and elastic net alike).
    #[arg(long, global = true, default_value_t = 250)]
    pub trials: usize,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Interval length above which a prediction is flagged.
    #[arg(long, global = true, default_value_t = 350.0)]
    pub threshold: f64,
    /// Omit the five internal-resistance features.
    #[arg(long, global = true)]
    pub drop_ir_features: bool,
    /// Record wall times in trial tables (makes reruns differ).
    #[arg(long, global = true)]
    pub timings: bool,
}

impl GlobalArgs {
    pub fn grid(&self) -> Result<VoltageGrid> {
        VoltageGrid::new(self.grid_min, self.grid_max, self.grid_points)
    }

    pub fn feature_config(&self) -> Result<FeatureConfig> {
        let cfg = FeatureConfig {
            r: self.r,
            w: self.w,
            grid: self.grid()?,
            drop_ir_features: self.drop_ir_features,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.coverage > 0.0 && self.coverage < 1.0) {
            return Err(Error::Config(format!(
                "--coverage {} outside (0, 1)",
                self.coverage
            )));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!(
                "--threshold {} must be positive",
                self.threshold
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("--trials must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        self.grid()?;
        Ok(())
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Which rows of `features.csv` a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSet {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Inputs {
    /// Defaults to `<out-dir>/features.csv`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Defaults to `<out-dir>/split.csv`.
    #[arg(long)]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelInput {
    /// Defaults to `<out-dir>/model.json`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic cell corpus into the output directory.
    Synth {
        #[arg(long, value_delimiter = ',', default_values_t = vec![41, 43, 40])]
        batch_sizes: Vec<usize>,
        /// Cycles whose discharge curves are written.
        #[arg(long, value_delimiter = ',', default_values_t = vec![10, 100])]
        curve_cycles: Vec<u32>,
        /// Degradation onset cycle.
        #[arg(long, default_value_t = 1)]
        onset: u32,
        /// Peak drift scale in volts.
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
    },
    /// Raw cell files to features.csv.
    Features,
    /// Per-batch train/test split to split.csv.
    Split {
        /// `DATE=TRAIN:TEST,...`; defaults to the 124-cell counts.
        #[arg(long)]
        counts: Option<String>,
    },
    /// Random search with leave-one-out ABES; writes trials.csv and best_hp.json.
    Tune {
        #[command(flatten)]
        inputs: Inputs,
        /// Upper bound on the number of trees searched.
        #[arg(long)]
        max_trees: Option<usize>,
    },
    /// Fit the final forest on the training rows; writes model.json.
    Train {
        #[command(flatten)]
        inputs: Inputs,
        /// Defaults to `<out-dir>/best_hp.json`; default hyperparameters if absent.
        #[arg(long)]
        hp: Option<PathBuf>,
    },
    /// Mean, median and interval per cell; writes predictions.csv.
    Predict {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        model: ModelInput,
        #[arg(long, value_enum, default_value_t = RowSet::Test)]
        set: RowSet,
    },
    /// Metrics and calibration curve; writes metrics.csv and calibration.csv.
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        model: ModelInput,
        #[arg(long, value_enum, default_value_t = RowSet::Test)]
        set: RowSet,
        /// `signed` lets over- and under-coverage cancel; reported as `abes_signed`.
        #[arg(long, value_enum, default_value_t = AreaArg::Absolute)]
        area: AreaArg,
    },
    /// Permutation importance; writes importance.csv.
    Importance {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        model: ModelInput,
        #[arg(long, value_enum, default_value_t = RowSet::Test)]
        set: RowSet,
        #[arg(long, default_value_t = interpret::DEFAULT_REPEATS)]
        repeats: usize,
        #[arg(long, value_enum, default_value_t = ScoreArg::R2)]
        score: ScoreArg,
    },
    /// Partial dependence over the training rows; writes pdp.csv and pdp_histogram.csv.
    Pdp {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        model: ModelInput,
        /// Feature names; all features when omitted.
        #[arg(long, value_delimiter = ',')]
        feature: Vec<String>,
        #[arg(long, default_value_t = interpret::DEFAULT_PDP_POINTS)]
        points: usize,
    },
    /// Expected cycle life per protocol; writes protocols.csv and flags.csv.
    RankProtocols {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        model: ModelInput,
        #[arg(long, value_enum, default_value_t = RowSet::Test)]
        set: RowSet,
    },
    /// Test error against the number of early cycles; writes sweep.csv.
    Sweep {
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = (1..=10).map(|k| 25 * k).collect::<Vec<u32>>())]
        w_values: Vec<u32>,
        #[arg(long)]
        max_trees: Option<usize>,
    },
    /// Tuned elastic net on the same split; writes baseline_*.csv and baseline_model.json.
    Baseline {
        #[command(flatten)]
        inputs: Inputs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreArg {
    R2,
    NegRmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaArg {
    Absolute,
    Signed,
}

impl From<ScoreArg> for Score {
    fn from(s: ScoreArg) -> Self {
        match s {
            ScoreArg::R2 => Score::R2,
            ScoreArg::NegRmse => Score::NegRmse,
        }
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Features => "features",
            Command::Split { .. } => "split",
            Command::Tune { .. } => "tune",
            Command::Train { .. } => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Importance { .. } => "importance",
            Command::Pdp { .. } => "pdp",
            Command::RankProtocols { .. } => "rank-protocols",
            Command::Sweep { .. } => "sweep",
            Command::Baseline { .. } => "baseline",
        }
    }
}

/// Output tables of one command, committed together.
#[derive(Default)]
struct Outputs(Vec<(String, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.0.push((name.to_string(), bytes));
    }

    /// Writes every file to a temporary name first and renames only after
    /// all writes succeeded.
    fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut staged = Vec::with_capacity(self.0.len());
        for (name, bytes) in &self.0 {
            let mut builder = tempfile::Builder::new();
            #[cfg(unix)]
            {
                use std::os::unix::fs::PermissionsExt;
                builder.permissions(std::fs::Permissions::from_mode(0o644));
            }
            let mut tmp = builder.prefix(".tmp-").tempfile_in(dir)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            staged.push((tmp, dir.join(name)));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, path) in staged {
            tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Serialize)]
struct EchoedConfig<'a> {
    command: &'a str,
    #[serde(flatten)]
    global: &'a GlobalArgs,
    args: &'a Command,
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

/// Parses `args` (program name first) and runs the command. Help and
/// version requests print and return `Ok`.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                print!("{e}");
                return Ok(());
            }
            _ => {
                let msg = e.to_string();
                let first = msg.lines().next().unwrap_or("invalid arguments");
                return Err(Error::Config(
                    first.trim_start_matches("error: ").to_string(),
                ));
            }
        },
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Result<()> {
    cli.global.validate()?;
    match cli.global.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let mut out = match &cli.command {
        Command::Synth {
            batch_sizes,
            curve_cycles,
            onset,
            gamma,
        } => cmd_synth(g, batch_sizes, curve_cycles, *onset, *gamma)?,
        Command::Features => cmd_features(g)?,
        Command::Split { counts } => cmd_split(g, counts.as_deref())?,
        Command::Tune { inputs, max_trees } => cmd_tune(g, inputs, *max_trees)?,
        Command::Train { inputs, hp } => cmd_train(g, inputs, hp.as_deref())?,
        Command::Predict { inputs, model, set } => cmd_predict(g, inputs, model, *set)?,
        Command::Evaluate {
            inputs,
            model,
            set,
            area,
        } => cmd_evaluate(g, inputs, model, *set, *area)?,
        Command::Importance {
            inputs,
            model,
            set,
            repeats,
            score,
        } => cmd_importance(g, inputs, model, *set, *repeats, (*score).into())?,
        Command::Pdp {
            inputs,
            model,
            feature,
            points,
        } => cmd_pdp(g, inputs, model, feature, *points)?,
        Command::RankProtocols { inputs, model, set } => cmd_rank(g, inputs, model, *set)?,
        Command::Sweep {
            split,
            w_values,
            max_trees,
        } => cmd_sweep(g, split.as_deref(), w_values, *max_trees)?,
        Command::Baseline { inputs } => cmd_baseline(g, inputs)?,
    };
    let name = cli.command.name();
    out.add(
        &format!("config.{name}.json"),
        json_bytes(&EchoedConfig {
            command: name,
            global: g,
            args: &cli.command,
        })?,
    );
    for path in out.commit(&g.out_dir)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn features_path(g: &GlobalArgs, i: &Inputs) -> PathBuf {
    i.features.clone().unwrap_or_else(|| g.out("features.csv"))
}

fn split_path(g: &GlobalArgs, p: Option<&Path>) -> PathBuf {
    p.map(Path::to_path_buf)
        .unwrap_or_else(|| g.out("split.csv"))
}

fn model_path(g: &GlobalArgs, m: &ModelInput) -> PathBuf {
    m.model.clone().unwrap_or_else(|| g.out("model.json"))
}

fn select(data: &Dataset, split: &DatasetSplit, set: RowSet) -> Dataset {
    match set {
        RowSet::Train => data.filter_ids(&split.train_ids),
        RowSet::Test => data.filter_ids(&split.test_ids),
        RowSet::All => {
            let ids: BTreeSet<String> = split.train_ids.union(&split.test_ids).cloned().collect();
            data.filter_ids(&ids)
        }
    }
}

fn load_rows(g: &GlobalArgs, i: &Inputs, set: RowSet) -> Result<Dataset> {
    let data = Dataset::read_csv(&features_path(g, i))?;
    let split = DatasetSplit::read_csv(&split_path(g, i.split.as_deref()))?;
    let rows = select(&data, &split, set);
    if rows.is_empty() {
        return Err(Error::Config(
            format!("no {set:?} rows found in the features file").to_lowercase(),
        ));
    }
    Ok(rows)
}

fn load_model(g: &GlobalArgs, m: &ModelInput, data: &Dataset) -> Result<Forest> {
    let forest = Forest::load(&model_path(g, m))?;
    if forest.feature_names != data.feature_names {
        return Err(Error::ModelFormat(
            "model feature columns differ from the features file".into(),
        ));
    }
    Ok(forest)
}

fn cmd_synth(
    g: &GlobalArgs,
    batch_sizes: &[usize],
    curve_cycles: &[u32],
    onset: u32,
    gamma: f64,
) -> Result<Outputs> {
    let spec = SynthCellsSpec {
        batch_sizes: batch_sizes.to_vec(),
        seed: g.seed,
        curve_cycles: curve_cycles.to_vec(),
        grid: g.grid()?,
        onset,
        gamma,
        ..Default::default()
    };
    let synth = gen_synthetic_cells(&spec)?;
    let (cycles, curves, cells) = crate::data::encode_cells(&synth.cells)?;
    let mut out = Outputs::default();
    out.add("cycles.csv", cycles);
    out.add("curves.csv", curves);
    out.add("cells.csv", cells);
    out.add("truth.csv", truth_to_csv(&synth.truth)?);
    Ok(out)
}

fn labeled_cells(g: &GlobalArgs) -> Result<Vec<crate::data::LabeledCell>> {
    let cells = load_dir(&g.data_dir)?;
    let (labeled, excluded) = label_all(&cells, EOL_FRACTION);
    for (id, e) in &excluded {
        log::warn!("excluding cell `{id}`: {e}");
    }
    Ok(labeled)
}

/// Labeled cells with at least `w` cycles; the rest are reported and skipped.
fn usable_cells(g: &GlobalArgs) -> Result<Vec<crate::data::LabeledCell>> {
    let (long, short): (Vec<_>, Vec<_>) = labeled_cells(g)?
        .into_iter()
        .partition(|c| c.cell.max_cycle_index().is_some_and(|m| m >= g.w));
    for c in &short {
        log::warn!(
            "excluding cell `{}`: fewer than {} cycles",
            c.cell.cell_id,
            g.w
        );
    }
    Ok(long)
}

fn cmd_features(g: &GlobalArgs) -> Result<Outputs> {
    let cfg = g.feature_config()?;
    let data = build_matrix(&usable_cells(g)?, &cfg)?;
    let mut out = Outputs::default();
    out.add("features.csv", data.to_csv()?);
    Ok(out)
}

fn parse_counts(s: &str) -> Result<BTreeMap<NaiveDate, (usize, usize)>> {
    let bad = || Error::Config(format!("--counts `{s}`: expected DATE=TRAIN:TEST,..."));
    s.split(',')
        .map(|part| {
            let (date, nums) = part.trim().split_once('=').ok_or_else(bad)?;
            let (a, b) = nums.split_once(':').ok_or_else(bad)?;
            let date = NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d").map_err(|_| bad())?;
            Ok((
                date,
                (
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                ),
            ))
        })
        .collect()
}

fn cmd_split(g: &GlobalArgs, counts: Option<&str>) -> Result<Outputs> {
    let counts = match counts {
        Some(s) => parse_counts(s)?,
        None => reference_batch_counts(),
    };
    let split = split_train_test(&usable_cells(g)?, &counts, g.seed)?;
    let mut out = Outputs::default();
    out.add("split.csv", split.to_csv()?);
    Ok(out)
}

fn cmd_tune(g: &GlobalArgs, inputs: &Inputs, max_trees: Option<usize>) -> Result<Outputs> {
    let train = load_rows(g, inputs, RowSet::Train)?;
    let mut space = SearchSpace::for_features(train.n_features());
    if let Some(m) = max_trees {
        space.n_trees = (space.n_trees.0.min(m), space.n_trees.1.min(m));
    }
    let result = random_search(&train, &space, g.trials, g.seed)?;
    println!(
        "best trial {} with leave-one-out ABES {:.4}%",
        result.best.trial_index, result.best.abes_cv
    );
    let mut out = Outputs::default();
    out.add("trials.csv", trials_to_csv(&result.trials, g.timings)?);
    out.add("best_hp.json", json_bytes(&result.best.hyperparameters)?);
    Ok(out)
}

fn cmd_train(g: &GlobalArgs, inputs: &Inputs, hp: Option<&Path>) -> Result<Outputs> {
    let train = load_rows(g, inputs, RowSet::Train)?;
    let hp_path = hp
        .map(Path::to_path_buf)
        .unwrap_or_else(|| g.out("best_hp.json"));
    let hp: Hyperparameters = if hp_path.exists() {
        serde_json::from_slice(&std::fs::read(&hp_path)?)?
    } else if hp.is_some() {
        return Err(Error::Config(format!(
            "hyperparameter file {} not found",
            hp_path.display()
        )));
    } else {
        log::warn!(
            "{} not found; using default hyperparameters",
            hp_path.display()
        );
        Hyperparameters {
            seed: g.seed,
            ..Hyperparameters::defaults_for(train.n_features())
        }
    };
    let forest = refit_final(&train, &hp)?;
    let mut out = Outputs::default();
    out.add("model.json", forest.to_json()?);
    Ok(out)
}

fn cmd_predict(g: &GlobalArgs, inputs: &Inputs, m: &ModelInput, set: RowSet) -> Result<Outputs> {
    let rows = load_rows(g, inputs, set)?;
    let forest = load_model(g, m, &rows)?;
    let preds = predict_cells(&forest, &rows, g.coverage)?;
    let mut out = Outputs::default();
    out.add("predictions.csv", predictions_to_csv(&preds, None)?);
    Ok(out)
}

fn cmd_evaluate(
    g: &GlobalArgs,
    inputs: &Inputs,
    m: &ModelInput,
    set: RowSet,
    area: AreaArg,
) -> Result<Outputs> {
    let rows = load_rows(g, inputs, set)?;
    let forest = load_model(g, m, &rows)?;
    let preds = predict_cells(&forest, &rows, g.coverage)?;
    let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    let intervals: Vec<_> = preds.iter().map(|p| p.interval).collect();
    let curve = forest_calibration_curve(&forest, &rows, &default_nominal_grid())?;
    let (name, score) = match area {
        AreaArg::Absolute => ("abes", abes_with(&curve, AreaMode::Absolute)?),
        AreaArg::Signed => ("abes_signed", abes_with(&curve, AreaMode::Signed)?),
    };
    let metrics = [
        ("r2", r2(&rows.y, &means)?),
        ("rmse", rmse(&rows.y, &means)?),
        ("mape", mape(&rows.y, &means)?),
        ("picp", picp(&rows.y, &intervals)?),
        (name, score),
        ("n", rows.n_rows() as f64),
    ];
    println!("ABES {score:.4}%");
    let mut out = Outputs::default();
    out.add("metrics.csv", metrics_to_csv(&metrics, None)?);
    out.add("calibration.csv", curve.to_csv()?);
    Ok(out)
}

fn cmd_importance(
    g: &GlobalArgs,
    inputs: &Inputs,
    m: &ModelInput,
    set: RowSet,
    repeats: usize,
    score: Score,
) -> Result<Outputs> {
    let rows = load_rows(g, inputs, set)?;
    let forest = load_model(g, m, &rows)?;
    let report = forest_importance(&forest, &rows, score, repeats, g.seed)?;
    let mut out = Outputs::default();
    out.add("importance.csv", report.to_csv()?);
    Ok(out)
}

fn cmd_pdp(
    g: &GlobalArgs,
    inputs: &Inputs,
    m: &ModelInput,
    features: &[String],
    points: usize,
) -> Result<Outputs> {
    let rows = load_rows(g, inputs, RowSet::Train)?;
    let forest = load_model(g, m, &rows)?;
    let names: Vec<String> = if features.is_empty() {
        rows.feature_names.clone()
    } else {
        features.to_vec()
    };
    let results = names
        .iter()
        .map(|name| {
            let j = rows
                .feature_index(name)
                .ok_or_else(|| Error::Config(format!("unknown feature `{name}`")))?;
            pdp(
                &forest,
                &rows,
                j,
                &PdpGrid::Quantiles(points),
                &DEFAULT_PDP_ALPHAS,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outputs::default();
    out.add("pdp.csv", interpret::pdp_to_csv(&results)?);
    out.add("pdp_histogram.csv", interpret::histograms_to_csv(&results)?);
    Ok(out)
}

fn cmd_rank(g: &GlobalArgs, inputs: &Inputs, m: &ModelInput, set: RowSet) -> Result<Outputs> {
    let rows = load_rows(g, inputs, set)?;
    let forest = load_model(g, m, &rows)?;
    let preds = predict_cells(&forest, &rows, g.coverage)?;
    let protocols: BTreeMap<String, String> =
        crate::data::load_cell_meta(&RawPaths::in_dir(&g.data_dir).meta)?
            .into_iter()
            .map(|c| (c.cell_id, c.charging_protocol))
            .collect();
    let grouped = preds
        .iter()
        .map(|p| {
            protocols
                .get(&p.cell_id)
                .map(|proto| (proto.clone(), p.clone()))
                .ok_or_else(|| {
                    Error::Config(format!("cell `{}` missing from cells.csv", p.cell_id))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let ranking = rank_protocols(&grouped, g.threshold)?;
    if let Some(top) = ranking.first() {
        println!(
            "selected protocol {} (ECL2 {:.1}, ECL1 {:.1})",
            top.protocol, top.ecl2, top.ecl1
        );
    }
    let mut out = Outputs::default();
    out.add("protocols.csv", protocols_to_csv(&ranking)?);
    out.add("flags.csv", flags_to_csv(&preds, g.threshold)?);
    Ok(out)
}

fn cmd_sweep(
    g: &GlobalArgs,
    split: Option<&Path>,
    w_values: &[u32],
    max_trees: Option<usize>,
) -> Result<Outputs> {
    let split = DatasetSplit::read_csv(&split_path(g, split))?;
    let cells = labeled_cells(g)?;
    let cfg = SweepConfig {
        w_values: w_values.to_vec(),
        r: g.r,
        grid: g.grid()?,
        drop_ir_features: g.drop_ir_features,
        qrf_trials: g.trials,
        elastic_net_trials: g.trials,
        max_trees,
        seed: g.seed,
    };
    let report = sweep_early_cycles(&cells, &split, &cfg);
    for (w, reason) in &report.failures {
        eprintln!("w = {w} skipped: {reason}");
    }
    for (w, id) in &report.dropped {
        eprintln!("w = {w}: dropped cell {id}");
    }
    let mut out = Outputs::default();
    out.add("sweep.csv", sweep_to_csv(&report.rows)?);
    Ok(out)
}

fn cmd_baseline(g: &GlobalArgs, inputs: &Inputs) -> Result<Outputs> {
    let data = Dataset::read_csv(&features_path(g, inputs))?;
    let split = DatasetSplit::read_csv(&split_path(g, inputs.split.as_deref()))?;
    let train = select(&data, &split, RowSet::Train);
    let test = select(&data, &split, RowSet::Test);
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config(
            "baseline needs both train and test rows".into(),
        ));
    }
    let (best, trials) = tune_elastic_net(&train, g.trials, g.seed)?;
    let model = fit_elastic_net(&train, best.lambda, best.l1_ratio)?;
    let pred = model.predict_rows(&test.x);
    let metrics = [
        ("r2", r2(&test.y, &pred)?),
        ("rmse", rmse(&test.y, &pred)?),
        ("mape", mape(&test.y, &pred)?),
        ("n", test.n_rows() as f64),
    ];
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = PREDICTIONS_HEADER.to_vec();
    header.push("model");
    w.write_record(&header)?;
    for (id, p) in test.cell_ids.iter().zip(&pred) {
        w.write_record([
            id.as_str(),
            &p.to_string(),
            "",
            "",
            "",
            "",
            "",
            "elastic_net",
        ])?;
    }
    let mut out = Outputs::default();
    out.add(
        "baseline_predictions.csv",
        w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
    );
    out.add(
        "baseline_metrics.csv",
        metrics_to_csv(&metrics, Some("elastic_net"))?,
    );
    out.add(
        "baseline_trials.csv",
        elastic_net::trials_to_csv(&trials, g.timings)?,
    );
    out.add("baseline_model.json", json_bytes(&model)?);
    Ok(out)
}

/// Writes raw cell files; used by examples that build their own corpora.
pub fn write_raw(cells: &[crate::data::CellRecord], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let p = RawPaths::in_dir(dir);
    save_cells(cells, &p.summary, &p.curves, &p.meta)
}

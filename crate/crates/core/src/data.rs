//! Cycling data ingestion, end-of-life labeling, early-cycle truncation and
//! per-batch train/test splitting.
//!
//! Raw data lives in three CSV files:
//!
//! | file         | header |
//! |--------------|--------|
//! | `cells.csv`  | `cell_id,batch_date,charging_protocol,nominal_capacity_ah` |
//! | `cycles.csv` | `cell_id,cycle_index,discharge_capacity_ah,charge_time_min,internal_resistance_ohm` |
//! | `curves.csv` | `cell_id,cycle_index,voltage_v,discharge_capacity_ah,temperature_c` |
//!
//! Curve rows for one `(cell, cycle)` appear in order of decreasing voltage.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const CELLS_HEADER: &[&str] = &[
    "cell_id",
    "batch_date",
    "charging_protocol",
    "nominal_capacity_ah",
];
pub const CYCLES_HEADER: &[&str] = &[
    "cell_id",
    "cycle_index",
    "discharge_capacity_ah",
    "charge_time_min",
    "internal_resistance_ohm",
];
pub const CURVES_HEADER: &[&str] = &[
    "cell_id",
    "cycle_index",
    "voltage_v",
    "discharge_capacity_ah",
    "temperature_c",
];

/// One sample of a discharge curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DischargeCurveSample {
    pub voltage: f64,
    pub capacity: f64,
    pub temperature: f64,
}

/// Per-cycle summary plus the (optional) discharge curve of that cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSummary {
    pub cycle_index: u32,
    pub discharge_capacity: f64,
    /// Minutes.
    pub charge_time: f64,
    /// Ohms.
    pub internal_resistance: Option<f64>,
    /// Empty when no curve was recorded for this cycle.
    pub curve: Vec<DischargeCurveSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub cell_id: String,
    pub batch_date: NaiveDate,
    pub charging_protocol: String,
    pub nominal_capacity: f64,
    /// Strictly increasing `cycle_index`.
    pub cycles: Vec<CycleSummary>,
}

impl CellRecord {
    pub fn cycle(&self, index: u32) -> Option<&CycleSummary> {
        self.cycles
            .binary_search_by_key(&index, |c| c.cycle_index)
            .ok()
            .map(|i| &self.cycles[i])
    }

    pub fn max_cycle_index(&self) -> Option<u32> {
        self.cycles.last().map(|c| c.cycle_index)
    }
}

/// A cell together with its observed cycle life.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCell {
    pub cell: CellRecord,
    pub cycle_life: u32,
}

/// Train/test membership produced by [`split_train_test`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    /// Cells beyond the requested per-batch counts.
    pub unassigned_ids: BTreeSet<String>,
    pub seed: u64,
}

/// Paths of the three raw input files.
#[derive(Debug, Clone)]
pub struct RawPaths {
    pub summary: PathBuf,
    pub curves: PathBuf,
    pub meta: PathBuf,
}

impl RawPaths {
    /// `cycles.csv`, `curves.csv` and `cells.csv` inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            summary: dir.join("cycles.csv"),
            curves: dir.join("curves.csv"),
            meta: dir.join("cells.csv"),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct CellRow {
    cell_id: String,
    batch_date: NaiveDate,
    charging_protocol: String,
    nominal_capacity_ah: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct CycleRow {
    cell_id: String,
    cycle_index: u32,
    discharge_capacity_ah: f64,
    charge_time_min: f64,
    internal_resistance_ohm: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct CurveRow {
    cell_id: String,
    cycle_index: u32,
    voltage_v: f64,
    discharge_capacity_ah: f64,
    temperature_c: f64,
}

fn parse_err(file: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_err(file: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_err(file, line, e.to_string())
}

/// Reads every row of `path` after checking the header matches `expected`.
/// Yields `(line, row)` pairs.
fn read_rows<T: for<'de> Deserialize<'de>>(
    path: &Path,
    expected: &[&str],
) -> Result<Vec<(u64, T)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{}: {e}", path.display()),
            )),
            _ => csv_err(path, e),
        })?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().ne(expected.iter().copied()) {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                let row: T = record
                    .deserialize(Some(&headers))
                    .map_err(|e| parse_err(path, line, e.to_string()))?;
                rows.push((line, row));
            }
            Err(e) => return Err(csv_err(path, e)),
        }
    }
    Ok(rows)
}

/// Reads `cells.csv` alone; the returned cells have no cycles.
pub fn load_cell_meta(meta_path: &Path) -> Result<Vec<CellRecord>> {
    Ok(read_meta(meta_path)?.into_values().collect())
}

fn read_meta(meta_path: &Path) -> Result<BTreeMap<String, CellRecord>> {
    let mut cells: BTreeMap<String, CellRecord> = BTreeMap::new();
    for (line, row) in read_rows::<CellRow>(meta_path, CELLS_HEADER)? {
        if !(row.nominal_capacity_ah.is_finite() && row.nominal_capacity_ah > 0.0) {
            return Err(parse_err(
                meta_path,
                line,
                "nominal capacity must be positive",
            ));
        }
        if cells.contains_key(&row.cell_id) {
            return Err(parse_err(
                meta_path,
                line,
                format!("duplicate cell `{}`", row.cell_id),
            ));
        }
        cells.insert(
            row.cell_id.clone(),
            CellRecord {
                cell_id: row.cell_id,
                batch_date: row.batch_date,
                charging_protocol: row.charging_protocol,
                nominal_capacity: row.nominal_capacity_ah,
                cycles: Vec::new(),
            },
        );
    }
    Ok(cells)
}

/// Loads all cells from the three raw files.
///
/// Cycles are sorted by `cycle_index`; curve samples keep file order.
/// Cells come back sorted by `cell_id`.
pub fn load_cells(
    summary_path: &Path,
    curves_path: &Path,
    meta_path: &Path,
) -> Result<Vec<CellRecord>> {
    let mut cells = read_meta(meta_path)?;
    for (line, row) in read_rows::<CycleRow>(summary_path, CYCLES_HEADER)? {
        let Some(cell) = cells.get_mut(&row.cell_id) else {
            return Err(Error::Referential {
                file: summary_path.to_path_buf(),
                line,
                message: format!("unknown cell `{}`", row.cell_id),
            });
        };
        if row.cycle_index == 0 {
            return Err(parse_err(summary_path, line, "cycle_index must be >= 1"));
        }
        if !(row.discharge_capacity_ah.is_finite() && row.discharge_capacity_ah >= 0.0) {
            return Err(parse_err(
                summary_path,
                line,
                "discharge capacity must be >= 0",
            ));
        }
        cell.cycles.push(CycleSummary {
            cycle_index: row.cycle_index,
            discharge_capacity: row.discharge_capacity_ah,
            charge_time: row.charge_time_min,
            internal_resistance: row.internal_resistance_ohm,
            curve: Vec::new(),
        });
    }
    for cell in cells.values_mut() {
        cell.cycles.sort_by_key(|c| c.cycle_index);
        if let Some(dup) = cell
            .cycles
            .windows(2)
            .find(|w| w[0].cycle_index == w[1].cycle_index)
        {
            return Err(parse_err(
                summary_path,
                0,
                format!(
                    "cell `{}` repeats cycle {}",
                    cell.cell_id, dup[0].cycle_index
                ),
            ));
        }
    }

    for (line, row) in read_rows::<CurveRow>(curves_path, CURVES_HEADER)? {
        let Some(cell) = cells.get_mut(&row.cell_id) else {
            return Err(Error::Referential {
                file: curves_path.to_path_buf(),
                line,
                message: format!("curve references unknown cell `{}`", row.cell_id),
            });
        };
        let Ok(pos) = cell
            .cycles
            .binary_search_by_key(&row.cycle_index, |c| c.cycle_index)
        else {
            return Err(Error::Referential {
                file: curves_path.to_path_buf(),
                line,
                message: format!(
                    "curve references unknown cycle {} of cell `{}`",
                    row.cycle_index, row.cell_id
                ),
            });
        };
        if !(row.voltage_v.is_finite() && row.voltage_v > 0.0) {
            return Err(parse_err(
                curves_path,
                line,
                "voltage must be finite and > 0",
            ));
        }
        if !(row.discharge_capacity_ah >= 0.0) {
            return Err(parse_err(curves_path, line, "capacity must be >= 0"));
        }
        cell.cycles[pos].curve.push(DischargeCurveSample {
            voltage: row.voltage_v,
            capacity: row.discharge_capacity_ah,
            temperature: row.temperature_c,
        });
    }

    Ok(cells.into_values().collect())
}

/// Loads the raw files from a directory using the standard file names.
pub fn load_dir(dir: &Path) -> Result<Vec<CellRecord>> {
    let p = RawPaths::in_dir(dir);
    load_cells(&p.summary, &p.curves, &p.meta)
}

/// Serializes cells into the three raw CSV documents `(cycles, curves, cells)`.
pub fn encode_cells(cells: &[CellRecord]) -> Result<(Vec<u8>, Vec<u8>, Vec<u8>)> {
    let mut meta = csv::Writer::from_writer(Vec::new());
    let mut summary = csv::Writer::from_writer(Vec::new());
    let mut curves = csv::Writer::from_writer(Vec::new());
    meta.write_record(CELLS_HEADER)?;
    summary.write_record(CYCLES_HEADER)?;
    curves.write_record(CURVES_HEADER)?;
    for cell in cells {
        meta.write_record([
            cell.cell_id.clone(),
            cell.batch_date.format("%Y-%m-%d").to_string(),
            cell.charging_protocol.clone(),
            cell.nominal_capacity.to_string(),
        ])?;
        for c in &cell.cycles {
            summary.write_record([
                cell.cell_id.clone(),
                c.cycle_index.to_string(),
                c.discharge_capacity.to_string(),
                c.charge_time.to_string(),
                c.internal_resistance
                    .map(|r| r.to_string())
                    .unwrap_or_default(),
            ])?;
            for s in &c.curve {
                curves.write_record([
                    cell.cell_id.clone(),
                    c.cycle_index.to_string(),
                    s.voltage.to_string(),
                    s.capacity.to_string(),
                    s.temperature.to_string(),
                ])?;
            }
        }
    }
    let finish = |w: csv::Writer<Vec<u8>>| -> Result<Vec<u8>> {
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    };
    Ok((finish(summary)?, finish(curves)?, finish(meta)?))
}

/// Writes cells to the three raw files.
pub fn save_cells(
    cells: &[CellRecord],
    summary_path: &Path,
    curves_path: &Path,
    meta_path: &Path,
) -> Result<()> {
    let (summary, curves, meta) = encode_cells(cells)?;
    for (path, bytes) in [
        (summary_path, summary),
        (curves_path, curves),
        (meta_path, meta),
    ] {
        std::fs::File::create(path)?.write_all(&bytes)?;
    }
    Ok(())
}

/// Labels the cell with the first cycle whose discharge capacity is strictly
/// below `eol_fraction * nominal_capacity`.
pub fn label_cycle_life(cell: &CellRecord, eol_fraction: f64) -> Result<LabeledCell> {
    if !(eol_fraction > 0.0 && eol_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "eol_fraction {eol_fraction} outside (0, 1]"
        )));
    }
    if cell.cycles.is_empty() {
        return Err(Error::Domain(format!(
            "cell `{}` has no cycles",
            cell.cell_id
        )));
    }
    let threshold = eol_fraction * cell.nominal_capacity;
    cell.cycles
        .iter()
        .find(|c| c.discharge_capacity < threshold)
        .map(|c| LabeledCell {
            cell: cell.clone(),
            cycle_life: c.cycle_index,
        })
        .ok_or_else(|| Error::Censored {
            cell_id: cell.cell_id.clone(),
            threshold_ah: threshold,
        })
}

/// Labels every cell, separating out the ones that fail (censored cells,
/// cells without cycles).
pub fn label_all(
    cells: &[CellRecord],
    eol_fraction: f64,
) -> (Vec<LabeledCell>, Vec<(String, Error)>) {
    let mut labeled = Vec::new();
    let mut excluded = Vec::new();
    for cell in cells {
        match label_cycle_life(cell, eol_fraction) {
            Ok(l) => labeled.push(l),
            Err(e) => excluded.push((cell.cell_id.clone(), e)),
        }
    }
    (labeled, excluded)
}

/// Train/test counts used for the public 124-cell dataset.
pub fn reference_batch_counts() -> BTreeMap<NaiveDate, (usize, usize)> {
    let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").expect("valid literal date");
    BTreeMap::from([
        (d("2017-05-12"), (27, 14)),
        (d("2017-06-30"), (36, 7)),
        (d("2018-04-12"), (36, 4)),
    ])
}

/// Per-batch random split with exact counts.
///
/// Within each batch, cell ids are sorted, shuffled with a stream derived
/// from `seed` and the batch's position in date order, and the first
/// `train_n` go to train and the next `test_n` to test. Cells past
/// `train_n + test_n` land in `unassigned_ids`.
pub fn split_train_test(
    cells: &[LabeledCell],
    per_batch_counts: &BTreeMap<NaiveDate, (usize, usize)>,
    seed: u64,
) -> Result<DatasetSplit> {
    let mut by_batch: BTreeMap<NaiveDate, Vec<&str>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for c in cells {
        if !seen.insert(c.cell.cell_id.as_str()) {
            return Err(Error::DuplicateCell(c.cell.cell_id.clone()));
        }
        by_batch
            .entry(c.cell.batch_date)
            .or_default()
            .push(&c.cell.cell_id);
    }
    if let Some(batch) = by_batch.keys().find(|b| !per_batch_counts.contains_key(b)) {
        return Err(Error::Config(format!("no split counts for batch {batch}")));
    }

    let mut split = DatasetSplit {
        train_ids: BTreeSet::new(),
        test_ids: BTreeSet::new(),
        unassigned_ids: BTreeSet::new(),
        seed,
    };
    for (k, (batch, &(train_n, test_n))) in per_batch_counts.iter().enumerate() {
        let mut ids = by_batch.remove(batch).unwrap_or_default();
        if ids.len() < train_n + test_n {
            return Err(Error::Config(format!(
                "batch {batch} has {} cells, {train_n} train + {test_n} test requested",
                ids.len()
            )));
        }
        ids.sort_unstable();
        let mut rng = seed::stream(seed, k as u64);
        ids.shuffle(&mut rng);
        for (pos, id) in ids.into_iter().enumerate() {
            let target = if pos < train_n {
                &mut split.train_ids
            } else if pos < train_n + test_n {
                &mut split.test_ids
            } else {
                &mut split.unassigned_ids
            };
            target.insert(id.to_string());
        }
    }
    Ok(split)
}

impl DatasetSplit {
    /// `cell_id,set` rows, sorted by id.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cell_id", "set"])?;
        let mut rows: Vec<(&str, &str)> = self
            .train_ids
            .iter()
            .map(|id| (id.as_str(), "train"))
            .chain(self.test_ids.iter().map(|id| (id.as_str(), "test")))
            .chain(
                self.unassigned_ids
                    .iter()
                    .map(|id| (id.as_str(), "unassigned")),
            )
            .collect();
        rows.sort_unstable();
        for (id, set) in rows {
            w.write_record([id, set])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Reads a `cell_id,set` file. The seed is not stored in the file.
    pub fn read_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            cell_id: String,
            set: String,
        }
        let mut split = DatasetSplit {
            train_ids: BTreeSet::new(),
            test_ids: BTreeSet::new(),
            unassigned_ids: BTreeSet::new(),
            seed: 0,
        };
        for (line, row) in read_rows::<Row>(path, &["cell_id", "set"])? {
            let target = match row.set.as_str() {
                "train" => &mut split.train_ids,
                "test" => &mut split.test_ids,
                "unassigned" => &mut split.unassigned_ids,
                other => return Err(parse_err(path, line, format!("unknown set `{other}`"))),
            };
            target.insert(row.cell_id);
        }
        Ok(split)
    }
}

/// Keeps exactly the cycles with `cycle_index <= w`.
pub fn truncate_to_early_cycles(cell: &CellRecord, w: u32) -> Result<CellRecord> {
    if w == 0 {
        return Err(Error::Config("early-cycle window must be >= 1".into()));
    }
    if cell.max_cycle_index().is_none_or(|m| m < w) {
        return Err(Error::Truncation {
            cell_id: cell.cell_id.clone(),
            requested: w,
            available: cell.cycles.len(),
        });
    }
    let mut out = cell.clone();
    out.cycles.retain(|c| c.cycle_index <= w);
    Ok(out)
}

/// Index of cells by id.
pub fn index_by_id(cells: &[LabeledCell]) -> HashMap<&str, &LabeledCell> {
    cells.iter().map(|c| (c.cell.cell_id.as_str(), c)).collect()
}

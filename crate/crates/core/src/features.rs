//! Early-cycle feature engineering.
//!
//! Features are computed from a reference cycle `r` and a late cycle `w`
//! (10 and 100 by default). Curve-based features interpolate each
//! discharge curve onto a common [`VoltageGrid`] and work with pointwise
//! differences `X_w(V) - X_r(V)`.
//!
//! The column order of [`FEATURE_NAMES`] is part of the `features.csv`
//! schema.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CellRecord, DischargeCurveSample, LabeledCell};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Moving-average window (grid points) applied to Q(V) before differentiating.
pub const IC_SMOOTHING_WINDOW: usize = 9;

/// The 33 features, in column order.
pub const FEATURE_NAMES: [&str; 33] = [
    "delta_q_min",
    "delta_q_var",
    "delta_q_skew",
    "delta_q_kurt",
    "ic_peak_amplitude_shift",
    "ic_peak_position_shift",
    "delta_t_min",
    "delta_t_var",
    "delta_t_skew",
    "delta_t_kurt",
    "t_ref_min",
    "t_ref_max",
    "t_ref_mean",
    "t_ref_var",
    "t_end_min",
    "t_end_max",
    "t_end_mean",
    "t_end_var",
    "t_min_diff",
    "t_max_diff",
    "t_mean_diff",
    "t_var_diff",
    "fade_slope",
    "fade_intercept",
    "q_cycle_2",
    "q_cycle_w",
    "q_max_minus_q2",
    "charge_time_mean_1_5",
    "ir_min",
    "ir_max",
    "ir_cycle_2",
    "ir_cycle_w",
    "ir_diff",
];

/// Number of leading columns that do not depend on internal resistance.
const N_WITHOUT_IR: usize = 28;

/// Uniform voltage abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageGrid {
    pub v_min: f64,
    pub v_max: f64,
    pub n_points: usize,
}

impl Default for VoltageGrid {
    fn default() -> Self {
        Self {
            v_min: 2.0,
            v_max: 3.5,
            n_points: 1000,
        }
    }
}

impl VoltageGrid {
    pub fn new(v_min: f64, v_max: f64, n_points: usize) -> Result<Self> {
        let g = Self {
            v_min,
            v_max,
            n_points,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_min.is_finite() && self.v_max.is_finite() && self.v_min < self.v_max) {
            return Err(Error::Config(format!(
                "voltage grid [{}, {}] is empty",
                self.v_min, self.v_max
            )));
        }
        if self.n_points < 2 {
            return Err(Error::Config("voltage grid needs at least 2 points".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.v_max - self.v_min) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.v_min + (self.v_max - self.v_min) * i as f64 / (self.n_points - 1) as f64
    }

    /// Ascending grid voltages.
    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }
}

/// Curve quantity interpolated against voltage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Capacity,
    Temperature,
}

impl Quantity {
    fn of(self, s: &DischargeCurveSample) -> f64 {
        match self {
            Quantity::Capacity => s.capacity,
            Quantity::Temperature => s.temperature,
        }
    }
}

/// Keeps the subsequence with strictly decreasing voltage; later samples
/// that repeat or exceed the last kept voltage are dropped.
pub fn clean_curve(curve: &[DischargeCurveSample]) -> Vec<DischargeCurveSample> {
    let mut out: Vec<DischargeCurveSample> = Vec::with_capacity(curve.len());
    for s in curve {
        if !s.voltage.is_finite() {
            continue;
        }
        if out.last().is_none_or(|last| s.voltage < last.voltage) {
            out.push(*s);
        }
    }
    out
}

/// Linear interpolation of `quantity` onto the grid. Grid points outside the
/// sampled voltage span take the value of the nearest end sample.
pub fn interp_on_grid(
    curve: &[DischargeCurveSample],
    quantity: Quantity,
    grid: &VoltageGrid,
) -> Result<Vec<f64>> {
    grid.validate()?;
    let clean = clean_curve(curve);
    if clean.len() < 2 {
        return Err(Error::CurveQuality(format!(
            "{} usable samples after cleaning, need at least 2",
            clean.len()
        )));
    }
    let first = clean[0];
    let last = clean[clean.len() - 1];
    Ok((0..grid.n_points)
        .map(|i| {
            let v = grid.point(i);
            if v >= first.voltage {
                return quantity.of(&first);
            }
            if v <= last.voltage {
                return quantity.of(&last);
            }
            // clean[j - 1].voltage >= v > clean[j].voltage
            let j = clean.partition_point(|s| s.voltage >= v);
            let (hi, lo) = (&clean[j - 1], &clean[j]);
            if hi.voltage == v {
                return quantity.of(hi);
            }
            let t = (hi.voltage - v) / (hi.voltage - lo.voltage);
            let (a, b) = (quantity.of(hi), quantity.of(lo));
            a + t * (b - a)
        })
        .collect())
}

/// Discharge capacity Q(V) on the grid.
pub fn interp_q_of_v(curve: &[DischargeCurveSample], grid: &VoltageGrid) -> Result<Vec<f64>> {
    interp_on_grid(curve, Quantity::Capacity, grid)
}

fn curve_at<'a>(cell: &'a CellRecord, cycle: u32) -> Result<&'a [DischargeCurveSample]> {
    match cell.cycle(cycle) {
        Some(c) if !c.curve.is_empty() => Ok(&c.curve),
        Some(_) => Err(Error::FeatureUnavailable(format!(
            "cell `{}` has no discharge curve at cycle {cycle}",
            cell.cell_id
        ))),
        None => Err(Error::FeatureUnavailable(format!(
            "cell `{}` has no cycle {cycle}",
            cell.cell_id
        ))),
    }
}

/// `X_w(V) - X_r(V)` on the grid.
pub fn delta_curve(
    cell: &CellRecord,
    quantity: Quantity,
    r: u32,
    w: u32,
    grid: &VoltageGrid,
) -> Result<Vec<f64>> {
    let at_r = interp_on_grid(curve_at(cell, r)?, quantity, grid)?;
    let at_w = interp_on_grid(curve_at(cell, w)?, quantity, grid)?;
    Ok(at_w.iter().zip(&at_r).map(|(b, a)| b - a).collect())
}

/// Population moments of a vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub min: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Excess kurtosis.
    pub kurtosis: f64,
}

/// Minimum, population variance, skewness and excess kurtosis. A vector with
/// zero spread reports zero skewness and kurtosis.
pub fn summary_stats(v: &[f64]) -> Result<SummaryStats> {
    if v.is_empty() {
        return Err(Error::Domain(
            "summary statistics of an empty vector".into(),
        ));
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(SummaryStats {
            min,
            variance: 0.0,
            skewness: 0.0,
            kurtosis: 0.0,
        });
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in v {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return Ok(SummaryStats {
            min,
            variance: 0.0,
            skewness: 0.0,
            kurtosis: 0.0,
        });
    }
    Ok(SummaryStats {
        min,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2) - 3.0,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Centered moving average; the window shrinks symmetrically near the ends
/// so linear data passes through unchanged.
pub fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = v.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            mean(&v[i - h..=i + h])
        })
        .collect()
}

/// Incremental capacity `-dQ/dV` on the grid (positive peaks for a discharge
/// curve), from central differences of the smoothed Q(V).
pub fn incremental_capacity(q_on_grid: &[f64], grid: &VoltageGrid) -> Vec<f64> {
    let q = moving_average(q_on_grid, IC_SMOOTHING_WINDOW);
    let h = grid.step();
    let n = q.len();
    (0..n)
        .map(|i| {
            let d = if i == 0 {
                (q[1] - q[0]) / h
            } else if i == n - 1 {
                (q[n - 1] - q[n - 2]) / h
            } else {
                (q[i + 1] - q[i - 1]) / (2.0 * h)
            };
            -d
        })
        .collect()
}

/// Highest peak of an incremental-capacity curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcPeak {
    /// Ah/V.
    pub amplitude: f64,
    /// V.
    pub position: f64,
}

/// Locates the global maximum of `ic`; it must be an interior point of a
/// non-flat curve.
pub fn highest_peak(ic: &[f64], grid: &VoltageGrid) -> Result<IcPeak> {
    let n = ic.len();
    if n < 3 {
        return Err(Error::PeakDetection("curve too short".into()));
    }
    let (mut best, mut lo) = (0usize, ic[0]);
    for (i, &v) in ic.iter().enumerate() {
        if v > ic[best] {
            best = i;
        }
        lo = lo.min(v);
    }
    if ic[best] - lo <= FLAT_TOLERANCE * ic[best].abs().max(1.0) {
        return Err(Error::PeakDetection("incremental capacity is flat".into()));
    }
    if best == 0 || best == n - 1 {
        return Err(Error::PeakDetection(format!(
            "maximum lies on the grid boundary at {:.4} V",
            grid.point(best)
        )));
    }
    Ok(IcPeak {
        amplitude: ic[best],
        position: grid.point(best),
    })
}

/// Relative spread below which an incremental-capacity curve counts as flat.
const FLAT_TOLERANCE: f64 = 1e-9;

/// Highest incremental-capacity peak of cycle `cycle`.
pub fn ic_peak(cell: &CellRecord, cycle: u32, grid: &VoltageGrid) -> Result<IcPeak> {
    let q = interp_q_of_v(curve_at(cell, cycle)?, grid)?;
    highest_peak(&incremental_capacity(&q, grid), grid)
}

/// `(amplitude_w - amplitude_r, position_w - position_r)` of the highest
/// incremental-capacity peak.
pub fn dqdv_peak_shift(
    cell: &CellRecord,
    r: u32,
    w: u32,
    grid: &VoltageGrid,
) -> Result<(f64, f64)> {
    let a = ic_peak(cell, r, grid)?;
    let b = ic_peak(cell, w, grid)?;
    Ok((b.amplitude - a.amplitude, b.position - a.position))
}

/// Ordinary least squares of discharge capacity on cycle index over the
/// cycles in `[first, last]`. Returns `(slope, intercept)`.
pub fn capacity_fade_fit(cell: &CellRecord, first: u32, last: u32) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = cell
        .cycles
        .iter()
        .filter(|c| (first..=last).contains(&c.cycle_index))
        .map(|c| (c.cycle_index as f64, c.discharge_capacity))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Fit(format!(
            "cell `{}` has {} cycles in [{first}, {last}], need at least 2",
            cell.cell_id,
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Which columns a feature vector carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSet {
    Full,
    /// The five internal-resistance columns are omitted.
    WithoutInternalResistance,
}

impl FeatureSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            FeatureSet::Full => &FEATURE_NAMES,
            FeatureSet::WithoutInternalResistance => &FEATURE_NAMES[..N_WITHOUT_IR],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Reference cycle.
    pub r: u32,
    /// Last early cycle.
    pub w: u32,
    pub grid: VoltageGrid,
    pub drop_ir_features: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            r: 10,
            w: 100,
            grid: VoltageGrid::default(),
            drop_ir_features: false,
        }
    }
}

impl FeatureConfig {
    pub fn feature_set(&self) -> FeatureSet {
        if self.drop_ir_features {
            FeatureSet::WithoutInternalResistance
        } else {
            FeatureSet::Full
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.r == 0 || self.r > self.w {
            return Err(Error::Config(format!(
                "need 1 <= r <= w, got r = {}, w = {}",
                self.r, self.w
            )));
        }
        Ok(())
    }
}

/// Named feature values for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub set: FeatureSet,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn names(&self) -> &'static [&'static str] {
        self.set.names()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names()
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }
}

fn temperature_stats(t: &[f64]) -> Result<[f64; 4]> {
    let s = summary_stats(t)?;
    let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok([s.min, max, mean(t), s.variance])
}

/// Computes every feature of `cell` from cycles `1..=w`.
pub fn extract_all(cell: &CellRecord, cfg: &FeatureConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    let (r, w, grid) = (cfg.r, cfg.w, &cfg.grid);
    if cell.max_cycle_index().is_none_or(|m| m < w) {
        return Err(Error::Truncation {
            cell_id: cell.cell_id.clone(),
            requested: w,
            available: cell.cycles.len(),
        });
    }
    let mut out = Vec::with_capacity(FEATURE_NAMES.len());

    let dq =
        delta_curve(cell, Quantity::Capacity, r, w, grid).map_err(|e| e.in_feature("delta_q"))?;
    let s = summary_stats(&dq).map_err(|e| e.in_feature("delta_q"))?;
    out.extend([s.min, s.variance, s.skewness, s.kurtosis]);

    let (amp, pos) =
        dqdv_peak_shift(cell, r, w, grid).map_err(|e| e.in_feature("ic_peak_shift"))?;
    out.extend([amp, pos]);

    let dt = delta_curve(cell, Quantity::Temperature, r, w, grid)
        .map_err(|e| e.in_feature("delta_t"))?;
    let s = summary_stats(&dt).map_err(|e| e.in_feature("delta_t"))?;
    out.extend([s.min, s.variance, s.skewness, s.kurtosis]);

    let t_ref = curve_at(cell, r)
        .and_then(|c| interp_on_grid(c, Quantity::Temperature, grid))
        .and_then(|t| temperature_stats(&t))
        .map_err(|e| e.in_feature("t_ref"))?;
    let t_end = curve_at(cell, w)
        .and_then(|c| interp_on_grid(c, Quantity::Temperature, grid))
        .and_then(|t| temperature_stats(&t))
        .map_err(|e| e.in_feature("t_end"))?;
    out.extend(t_ref);
    out.extend(t_end);
    out.extend((0..4).map(|k| t_end[k] - t_ref[k]));

    let (slope, intercept) =
        capacity_fade_fit(cell, 2, w).map_err(|e| e.in_feature("fade_slope"))?;
    out.extend([slope, intercept]);

    let q_at = |k: u32, name: &str| {
        cell.cycle(k)
            .map(|c| c.discharge_capacity)
            .ok_or_else(|| Error::FeatureUnavailable(format!("no cycle {k}")).in_feature(name))
    };
    let q2 = q_at(2, "q_cycle_2")?;
    let qw = q_at(w, "q_cycle_w")?;
    let q_max = cell
        .cycles
        .iter()
        .filter(|c| c.cycle_index <= w)
        .map(|c| c.discharge_capacity)
        .fold(f64::NEG_INFINITY, f64::max);
    out.extend([q2, qw, q_max - q2]);

    let charge: Vec<f64> = cell
        .cycles
        .iter()
        .filter(|c| (1..=5.min(w)).contains(&c.cycle_index))
        .map(|c| c.charge_time)
        .collect();
    if charge.is_empty() {
        return Err(Error::FeatureUnavailable("no cycles in 1..=5".into())
            .in_feature("charge_time_mean_1_5"));
    }
    out.push(mean(&charge));

    if !cfg.drop_ir_features {
        let ir: Vec<(u32, f64)> = cell
            .cycles
            .iter()
            .filter(|c| (2..=w).contains(&c.cycle_index))
            .map(|c| {
                c.internal_resistance
                    .map(|v| (c.cycle_index, v))
                    .ok_or_else(|| {
                        Error::FeatureUnavailable(format!(
                            "internal resistance missing at cycle {}",
                            c.cycle_index
                        ))
                        .in_feature("ir")
                    })
            })
            .collect::<Result<_>>()?;
        let ir_at = |k: u32, name: &str| {
            ir.iter().find(|p| p.0 == k).map(|p| p.1).ok_or_else(|| {
                Error::FeatureUnavailable(format!("no internal resistance at cycle {k}"))
                    .in_feature(name)
            })
        };
        let ir2 = ir_at(2, "ir_cycle_2")?;
        let irw = ir_at(w, "ir_cycle_w")?;
        let ir_min = ir.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let ir_max = ir.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        out.extend([ir_min, ir_max, ir2, irw, irw - ir2]);
    }

    let set = cfg.feature_set();
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(
            Error::Domain(format!("non-finite value {}", out[i])).in_feature(set.names()[i])
        );
    }
    Ok(FeatureVector { set, values: out })
}

/// Feature matrix for labeled cells (rows in input order, `y` = cycle life).
/// Failures from all cells are reported together.
pub fn build_matrix(cells: &[LabeledCell], cfg: &FeatureConfig) -> Result<Dataset> {
    cfg.validate()?;
    let names: Vec<String> = cfg
        .feature_set()
        .names()
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = cells.iter().find(|c| !seen.insert(c.cell.cell_id.as_str())) {
        return Err(Error::DuplicateCell(dup.cell.cell_id.clone()));
    }
    let results: Vec<Result<FeatureVector>> = cells
        .par_iter()
        .map(|c| extract_all(&c.cell, cfg))
        .collect();
    let mut failures = Vec::new();
    let mut x = Vec::with_capacity(cells.len());
    for (cell, res) in cells.iter().zip(results) {
        match res {
            Ok(fv) => x.push(fv.values),
            Err(e) => failures.push((cell.cell.cell_id.clone(), e)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Cells(failures));
    }
    Dataset::new(
        names,
        cells.iter().map(|c| c.cell.cell_id.clone()).collect(),
        x,
        cells.iter().map(|c| c.cycle_life as f64).collect(),
    )
}

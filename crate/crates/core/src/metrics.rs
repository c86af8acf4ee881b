//! Point-prediction metrics, interval coverage, calibration curves and the
//! area-based error score (ABES).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::quantile::PredictionInterval;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Domain(format!("length mismatch: {a} vs {b}")))
    }
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y.len(), yhat.len())?;
    if y.len() < 2 {
        return Err(Error::UndefinedMetric(
            "R^2 needs at least 2 observations".into(),
        ));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("R^2 of a constant response".into()));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y.len(), yhat.len())?;
    if y.is_empty() {
        return Err(Error::UndefinedMetric("RMSE of no observations".into()));
    }
    let mse = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y.len() as f64;
    Ok(mse.sqrt())
}

/// Mean absolute percentage error as a fraction (1.0 = 100%).
pub fn mape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y.len(), yhat.len())?;
    if y.is_empty() {
        return Err(Error::UndefinedMetric("MAPE of no observations".into()));
    }
    if y.contains(&0.0) {
        return Err(Error::Domain(
            "MAPE undefined for a zero observation".into(),
        ));
    }
    Ok(y.iter()
        .zip(yhat)
        .map(|(a, b)| ((a - b) / a).abs())
        .sum::<f64>()
        / y.len() as f64)
}

/// Fraction of observations inside their closed interval.
pub fn picp(y: &[f64], intervals: &[PredictionInterval]) -> Result<f64> {
    check_lengths(y.len(), intervals.len())?;
    if y.is_empty() {
        return Err(Error::UndefinedMetric("PICP of no observations".into()));
    }
    let covered = y
        .iter()
        .zip(intervals)
        .filter(|(v, iv)| iv.contains(**v))
        .count();
    Ok(covered as f64 / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub r2: f64,
    pub rmse: f64,
    pub mape: f64,
    pub n: usize,
}

impl MetricReport {
    pub fn compute(y: &[f64], yhat: &[f64]) -> Result<Self> {
        Ok(Self {
            r2: r2(y, yhat)?,
            rmse: rmse(y, yhat)?,
            mape: mape(y, yhat)?,
            n: y.len(),
        })
    }
}

/// Actual coverage against nominal coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub nominal: Vec<f64>,
    pub actual: Vec<f64>,
}

/// `0.01, 0.02, ..., 0.99`.
pub fn default_nominal_grid() -> Vec<f64> {
    nominal_grid(100)
}

/// `1/steps, ..., (steps-1)/steps`.
pub fn nominal_grid(steps: usize) -> Vec<f64> {
    (1..steps).map(|k| k as f64 / steps as f64).collect()
}

impl CalibrationCurve {
    pub fn new(nominal: Vec<f64>, actual: Vec<f64>) -> Result<Self> {
        let c = Self { nominal, actual };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_lengths(self.nominal.len(), self.actual.len())?;
        if self.nominal.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::Domain("nominal coverage must lie in (0, 1)".into()));
        }
        if self.nominal.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "nominal coverage must be strictly increasing".into(),
            ));
        }
        if self.actual.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("actual coverage must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Builds the curve from per-observation coverage indicators:
    /// `covered[i][k]` says whether observation `i` fell inside its
    /// interval at `nominal[k]`.
    pub fn from_indicators(nominal: Vec<f64>, covered: &[Vec<bool>]) -> Result<Self> {
        if covered.is_empty() {
            return Err(Error::Domain("calibration curve needs observations".into()));
        }
        let n = covered.len() as f64;
        let actual = (0..nominal.len())
            .map(|k| covered.iter().filter(|c| c[k]).count() as f64 / n)
            .collect();
        Self::new(nominal, actual)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["nominal", "actual"])?;
        for (a, b) in self.nominal.iter().zip(&self.actual) {
            w.write_record([a.to_string(), b.to_string()])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Calibration curve of an arbitrary interval predictor:
/// `interval_for(i, c)` returns the interval for observation `i` at nominal
/// coverage `c`.
pub fn calibration_curve<F>(y: &[f64], nominal: &[f64], interval_for: F) -> Result<CalibrationCurve>
where
    F: Fn(usize, f64) -> Result<PredictionInterval> + Sync,
{
    let covered: Vec<Vec<bool>> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            nominal
                .iter()
                .map(|&c| interval_for(i, c).map(|iv| iv.contains(y[i])))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;
    CalibrationCurve::from_indicators(nominal.to_vec(), &covered)
}

/// Calibration curve of a forest on a dataset; each row's conditional
/// distribution is computed once and reused across nominal levels.
pub fn forest_calibration_curve(
    forest: &Forest,
    data: &Dataset,
    nominal: &[f64],
) -> Result<CalibrationCurve> {
    let covered: Vec<Vec<bool>> = (0..data.n_rows())
        .into_par_iter()
        .map(|i| {
            let d = forest.conditional_distribution(&data.x[i])?;
            nominal
                .iter()
                .map(|&c| d.interval(c).map(|iv| iv.contains(data.y[i])))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;
    CalibrationCurve::from_indicators(nominal.to_vec(), &covered)
}

/// How the area between the calibration curve and the diagonal is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AreaMode {
    /// Over- and under-coverage both add area.
    #[default]
    Absolute,
    /// Over-coverage counts positive, under-coverage negative.
    Signed,
}

/// ABES in percent: area between the curve and the diagonal divided by the
/// area of the lower triangle (0.5), times 100. The curve is anchored at
/// (0, 0) and (1, 1) and integrated with the trapezoid rule.
pub fn abes(curve: &CalibrationCurve) -> Result<f64> {
    abes_with(curve, AreaMode::Absolute)
}

pub fn abes_with(curve: &CalibrationCurve, mode: AreaMode) -> Result<f64> {
    curve.validate()?;
    let mut pts = Vec::with_capacity(curve.nominal.len() + 2);
    pts.push((0.0, 0.0));
    pts.extend(
        curve
            .nominal
            .iter()
            .zip(&curve.actual)
            .map(|(n, a)| (*n, a - n)),
    );
    pts.push((1.0, 0.0));
    let gap = |d: f64| match mode {
        AreaMode::Absolute => d.abs(),
        AreaMode::Signed => d,
    };
    let area: f64 = pts
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (gap(w[0].1) + gap(w[1].1)))
        .sum();
    Ok(100.0 * area / 0.5)
}

/// `metric,value` rows.
pub fn metrics_to_csv(rows: &[(&str, f64)], model: Option<&str>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match model {
        None => w.write_record(["metric", "value"])?,
        Some(_) => w.write_record(["model", "metric", "value"])?,
    }
    for (name, v) in rows {
        match model {
            None => w.write_record([name.to_string(), v.to_string()])?,
            Some(m) => w.write_record([m.to_string(), name.to_string(), v.to_string()])?,
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const Y: [f64; 3] = [1.0, 2.0, 3.0];
    const YHAT: [f64; 3] = [1.0, 2.0, 4.0];

    #[test]
    fn r2_fixtures() {
        assert_eq!(r2(&Y, &Y).unwrap(), 1.0);
        assert_eq!(r2(&Y, &[2.0; 3]).unwrap(), 0.0);
        assert!((r2(&Y, &YHAT).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            r2(&[3.0; 4], &[3.0; 4]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn rmse_fixtures() {
        assert_eq!(rmse(&Y, &Y).unwrap(), 0.0);
        assert!((rmse(&Y, &YHAT).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let y2: Vec<f64> = Y.iter().map(|v| 2.0 * v).collect();
        let yh2: Vec<f64> = YHAT.iter().map(|v| 2.0 * v).collect();
        assert!((rmse(&y2, &yh2).unwrap() - 2.0 * rmse(&Y, &YHAT).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mape_fixtures() {
        assert_eq!(mape(&Y, &Y).unwrap(), 0.0);
        assert!((mape(&Y, &YHAT).unwrap() - 1.0 / 9.0).abs() < 1e-12);
        let doubled: Vec<f64> = Y.iter().map(|v| 2.0 * v).collect();
        assert_eq!(mape(&Y, &doubled).unwrap(), 1.0);
        assert!(matches!(
            mape(&[0.0, 1.0], &[1.0, 1.0]),
            Err(Error::Domain(_))
        ));
    }

    fn iv(lower: f64, upper: f64) -> PredictionInterval {
        PredictionInterval {
            lower,
            upper,
            nominal_coverage: 0.5,
        }
    }

    #[test]
    fn picp_fixtures() {
        assert_eq!(
            picp(&[1.0, 3.0], &[iv(0.0, 2.0), iv(0.0, 2.0)]).unwrap(),
            0.5
        );
        assert_eq!(
            picp(&[0.0, 2.0], &[iv(0.0, 2.0), iv(0.0, 2.0)]).unwrap(),
            1.0
        );
    }

    #[test]
    fn picp_21_of_25() {
        let y: Vec<f64> = (0..25).map(|i| if i < 21 { 1.0 } else { 5.0 }).collect();
        let ivs = vec![iv(0.0, 2.0); 25];
        assert!((picp(&y, &ivs).unwrap() - 0.84).abs() < 1e-15);
    }

    #[test]
    fn abes_anchors() {
        let g = default_nominal_grid();
        assert_eq!(g.len(), 99);
        let identity = CalibrationCurve::new(g.clone(), g.clone()).unwrap();
        assert_eq!(abes(&identity).unwrap(), 0.0);
        // On the 0.01 grid the final trapezoid to (1, 1) removes 1% of the triangle.
        let zero = CalibrationCurve::new(g.clone(), vec![0.0; 99]).unwrap();
        assert!((abes(&zero).unwrap() - 99.0).abs() < 1e-9);
        let fine = nominal_grid(1000);
        let zero = CalibrationCurve::new(fine.clone(), vec![0.0; fine.len()]).unwrap();
        assert!((abes(&zero).unwrap() - 99.9).abs() < 1e-9);
    }

    #[test]
    fn signed_area_cancels() {
        let g = nominal_grid(4);
        let c = CalibrationCurve::new(g.clone(), vec![0.35, 0.5, 0.65]).unwrap();
        assert!(abes_with(&c, AreaMode::Signed).unwrap().abs() < 1e-12);
        assert!(abes(&c).unwrap() > 0.0);
    }

    #[test]
    fn invalid_curve_rejected() {
        assert!(CalibrationCurve::new(vec![0.5, 0.4], vec![0.1, 0.2]).is_err());
        assert!(CalibrationCurve::new(vec![0.5], vec![0.1, 0.2]).is_err());
        assert!(CalibrationCurve::new(vec![1.0], vec![0.1]).is_err());
    }

    #[test]
    fn zero_length_intervals_cover_nothing_continuous() {
        let y: Vec<f64> = (0..200).map(|i| i as f64 + 0.5).collect();
        let curve = calibration_curve(&y, &default_nominal_grid(), |_, c| {
            Ok(PredictionInterval {
                lower: 100.0,
                upper: 100.0,
                nominal_coverage: c,
            })
        })
        .unwrap();
        assert!(curve.actual.iter().all(|a| *a == 0.0));
    }
}

//! Conditional distribution, quantiles and prediction intervals from the
//! forest weights.
//!
//! The conditional CDF at `x` is the weighted empirical distribution of the
//! training responses, `F(y | x) = sum_i w_i(x) 1{y_i <= y}`, and the
//! `alpha`-quantile is the smallest training response with positive weight
//! whose cumulative weight reaches `alpha`. No interpolation is done between
//! observed responses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::{weighted_sum, Forest};

/// Slack when comparing cumulative weights against `alpha`, absorbing the
/// rounding of the tree-weight average.
pub const CDF_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub nominal_coverage: f64,
}

impl PredictionInterval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    /// Closed-interval membership.
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPrediction {
    pub cell_id: String,
    pub mean: f64,
    pub median: f64,
    pub interval: PredictionInterval,
    pub interval_length: f64,
}

/// Weighted empirical distribution of the training responses at one query.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDistribution {
    /// Distinct responses with positive weight, ascending.
    support: Vec<f64>,
    /// Normalized cumulative weight at each support point; the last is 1.
    cumulative: Vec<f64>,
    mean: f64,
}

fn check_level(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} outside (0, 1)")))
    }
}

impl ConditionalDistribution {
    /// Builds the distribution from weights over `y`.
    pub fn from_weights(weights: &[f64], y: &[f64]) -> Self {
        let mut pts: Vec<(f64, f64)> = weights
            .iter()
            .zip(y)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, y)| (*y, *w))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support = Vec::with_capacity(pts.len());
        let mut cumulative = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        for (yv, w) in pts {
            acc += w;
            if support.last() == Some(&yv) {
                *cumulative.last_mut().expect("parallel vectors") = acc;
            } else {
                support.push(yv);
                cumulative.push(acc);
            }
        }
        cumulative.iter_mut().for_each(|c| *c /= acc);
        Self {
            support,
            cumulative,
            mean: weighted_sum(weights, y),
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// `F(y | x)`, right-continuous.
    pub fn cdf(&self, y: f64) -> f64 {
        match self.support.partition_point(|&s| s <= y) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        check_level("alpha", alpha)?;
        let k = self
            .cumulative
            .partition_point(|&c| c < alpha - CDF_TOLERANCE);
        Ok(self.support[k.min(self.support.len() - 1)])
    }

    /// Equal-tailed interval `[Q_{(1-c)/2}, Q_{(1+c)/2}]`.
    pub fn interval(&self, coverage: f64) -> Result<PredictionInterval> {
        check_level("coverage", coverage)?;
        Ok(PredictionInterval {
            lower: self.quantile((1.0 - coverage) / 2.0)?,
            upper: self.quantile((1.0 + coverage) / 2.0)?,
            nominal_coverage: coverage,
        })
    }
}

impl Forest {
    pub fn conditional_distribution(&self, x: &[f64]) -> Result<ConditionalDistribution> {
        let w = self.weights(x)?;
        Ok(ConditionalDistribution::from_weights(&w, &self.y_train))
    }
}

pub fn conditional_cdf(forest: &Forest, x: &[f64], y: f64) -> Result<f64> {
    Ok(forest.conditional_distribution(x)?.cdf(y))
}

pub fn predict_quantile(forest: &Forest, x: &[f64], alpha: f64) -> Result<f64> {
    check_level("alpha", alpha)?;
    forest.conditional_distribution(x)?.quantile(alpha)
}

pub fn prediction_interval(
    forest: &Forest,
    x: &[f64],
    coverage: f64,
) -> Result<PredictionInterval> {
    check_level("coverage", coverage)?;
    forest.conditional_distribution(x)?.interval(coverage)
}

/// Mean, median and interval for every row of `dataset`.
pub fn predict_cells(
    forest: &Forest,
    dataset: &Dataset,
    coverage: f64,
) -> Result<Vec<CellPrediction>> {
    check_level("coverage", coverage)?;
    let results: Vec<Result<CellPrediction>> = (0..dataset.n_rows())
        .into_par_iter()
        .map(|i| {
            let d = forest.conditional_distribution(&dataset.x[i])?;
            let interval = d.interval(coverage)?;
            Ok(CellPrediction {
                cell_id: dataset.cell_ids[i].clone(),
                mean: d.mean(),
                median: d.quantile(0.5)?,
                interval_length: interval.length(),
                interval,
            })
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => out.push(p),
            Err(e) => failures.push((dataset.cell_ids[i].clone(), e)),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(Error::Cells(failures))
    }
}

pub const PREDICTIONS_HEADER: [&str; 7] = [
    "cell_id",
    "mean",
    "median",
    "lower",
    "upper",
    "interval_length",
    "nominal_coverage",
];

/// `predictions.csv`; with `model` set, a trailing `model` column is added.
pub fn predictions_to_csv(preds: &[CellPrediction], model: Option<&str>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = PREDICTIONS_HEADER.to_vec();
    if model.is_some() {
        header.push("model");
    }
    w.write_record(&header)?;
    for p in preds {
        let mut rec = vec![
            p.cell_id.clone(),
            p.mean.to_string(),
            p.median.to_string(),
            p.interval.lower.to_string(),
            p.interval.upper.to_string(),
            p.interval_length.to_string(),
            p.interval.nominal_coverage.to_string(),
        ];
        if let Some(m) = model {
            rec.push(m.to_string());
        }
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

//! Elastic Net point-prediction baseline fit by cyclic coordinate descent on
//! standardized features.
//!
//! Minimizes `1/(2N) |y - b - X beta|^2 + lambda (a |beta|_1 + (1 - a)/2 |beta|^2)`
//! where `a` is the l1 ratio and the columns of `X` have zero mean and unit
//! (population) variance.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::rmse;
use crate::seed;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    pub feature_names: Vec<String>,
    /// Coefficients on the standardized columns; 0 for dropped columns.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub l1_ratio: f64,
    pub means: Vec<f64>,
    /// Population standard deviations; 1 for dropped columns.
    pub scales: Vec<f64>,
    /// Columns with zero variance in the training data.
    pub dropped: Vec<usize>,
    /// Objective after each full coordinate cycle.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl ElasticNetModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .zip(self.means.iter().zip(&self.scales))
                .map(|((b, v), (m, s))| b * (v - m) / s)
                .sum::<f64>()
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    /// Coefficients in raw feature units and the matching intercept.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let coef: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| b / s)
            .collect();
        let shift: f64 = coef.iter().zip(&self.means).map(|(c, m)| c * m).sum();
        (coef, self.intercept - shift)
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ElasticNetOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

pub fn fit_elastic_net(data: &Dataset, lambda: f64, l1_ratio: f64) -> Result<ElasticNetModel> {
    fit_elastic_net_with(data, lambda, l1_ratio, ElasticNetOptions::default())
}

struct Standardized {
    /// Column-major, dropped columns excluded.
    columns: Vec<Vec<f64>>,
    active: Vec<usize>,
    means: Vec<f64>,
    scales: Vec<f64>,
    dropped: Vec<usize>,
}

fn standardize(data: &Dataset, warn: bool) -> Standardized {
    let n = data.n_rows() as f64;
    let p = data.n_features();
    let (mut means, mut scales) = (vec![0.0; p], vec![1.0; p]);
    let (mut columns, mut active, mut dropped) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..p {
        let col = data.column(j);
        let m = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        means[j] = m;
        if var > 0.0 && col.iter().any(|v| *v != col[0]) {
            let s = var.sqrt();
            scales[j] = s;
            columns.push(col.iter().map(|v| (v - m) / s).collect());
            active.push(j);
        } else {
            if warn {
                log::warn!("dropping zero-variance column `{}`", data.feature_names[j]);
            }
            dropped.push(j);
        }
    }
    Standardized {
        columns,
        active,
        means,
        scales,
        dropped,
    }
}

fn objective(resid: &[f64], beta: &[f64], lambda: f64, a: f64) -> f64 {
    let n = resid.len() as f64;
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / (2.0 * n);
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    loss + lambda * (a * l1 + (1.0 - a) / 2.0 * l2)
}

pub fn fit_elastic_net_with(
    data: &Dataset,
    lambda: f64,
    l1_ratio: f64,
    opts: ElasticNetOptions,
) -> Result<ElasticNetModel> {
    fit_inner(data, lambda, l1_ratio, opts, true)
}

fn fit_inner(
    data: &Dataset,
    lambda: f64,
    l1_ratio: f64,
    opts: ElasticNetOptions,
    warn: bool,
) -> Result<ElasticNetModel> {
    if data.n_rows() < 2 {
        return Err(Error::Domain(format!(
            "elastic net needs N >= 2, got {}",
            data.n_rows()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!(
            "lambda = {lambda} must be finite and >= 0"
        )));
    }
    if !(0.0..=1.0).contains(&l1_ratio) {
        return Err(Error::Domain(format!(
            "l1_ratio = {l1_ratio} outside [0, 1]"
        )));
    }
    let st = standardize(data, warn);
    let n = data.n_rows() as f64;
    let y_mean = data.y.iter().sum::<f64>() / n;
    let mut resid: Vec<f64> = data.y.iter().map(|y| y - y_mean).collect();
    let mut beta = vec![0.0; st.active.len()];
    let shrink = 1.0 + lambda * (1.0 - l1_ratio);
    let gamma = lambda * l1_ratio;
    let mut trace = vec![objective(&resid, &beta, lambda, l1_ratio)];
    let mut converged = st.active.is_empty();
    let mut last_change = 0.0;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for (k, col) in st.columns.iter().enumerate() {
            let rho = col.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n + beta[k];
            let new = soft_threshold(rho, gamma) / shrink;
            let diff = new - beta[k];
            if diff != 0.0 {
                resid.iter_mut().zip(col).for_each(|(r, x)| *r -= x * diff);
                beta[k] = new;
            }
            max_change = max_change.max(diff.abs());
        }
        trace.push(objective(&resid, &beta, lambda, l1_ratio));
        last_change = max_change;
        converged = max_change < opts.tol;
    }
    let mut coefficients = vec![0.0; data.n_features()];
    for (k, &j) in st.active.iter().enumerate() {
        coefficients[j] = beta[k];
    }
    if !converged {
        return Err(Error::Convergence {
            iterations,
            last_change,
            coefficients,
            intercept: y_mean,
        });
    }
    Ok(ElasticNetModel {
        feature_names: data.feature_names.clone(),
        coefficients,
        intercept: y_mean,
        lambda,
        l1_ratio,
        means: st.means,
        scales: st.scales,
        dropped: st.dropped,
        objective_trace: trace,
    })
}

/// Smallest lambda giving an all-zero lasso solution on `data`.
pub fn lambda_max(data: &Dataset) -> f64 {
    let st = standardize(data, false);
    let n = data.n_rows() as f64;
    let y_mean = data.y.iter().sum::<f64>() / n;
    st.columns
        .iter()
        .map(|c| {
            (c.iter()
                .zip(&data.y)
                .map(|(x, y)| x * (y - y_mean))
                .sum::<f64>()
                / n)
                .abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetTrial {
    pub trial: usize,
    pub lambda: f64,
    pub l1_ratio: f64,
    /// Infinite when a fold failed to converge.
    pub loo_rmse: f64,
    pub wall_time: f64,
}

/// Leave-one-out RMSE of one `(lambda, l1_ratio)` setting.
pub fn loo_rmse(data: &Dataset, lambda: f64, l1_ratio: f64) -> Result<f64> {
    let preds: Vec<f64> = (0..data.n_rows())
        .map(|i| {
            fit_inner(
                &data.without_row(i),
                lambda,
                l1_ratio,
                ElasticNetOptions::default(),
                false,
            )
            .map(|m| m.predict(&data.x[i]))
        })
        .collect::<Result<_>>()?;
    rmse(&data.y, &preds)
}

/// Seeded random search: lambda log-uniform over
/// `[1e-4, 1] * lambda_max`, l1 ratio uniform on `[0, 1]`; the winner has the
/// smallest LOO RMSE, ties going to the earlier trial.
pub fn tune_elastic_net(
    data: &Dataset,
    n_trials: usize,
    seed: u64,
) -> Result<(ElasticNetTrial, Vec<ElasticNetTrial>)> {
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be at least 1".into()));
    }
    if data.n_rows() < 3 {
        return Err(Error::Domain(format!(
            "LOO tuning needs N >= 3, got {}",
            data.n_rows()
        )));
    }
    let top = lambda_max(data).max(f64::MIN_POSITIVE);
    let mut rng = seed::stream(seed, 0);
    let settings: Vec<(f64, f64)> = (0..n_trials)
        .map(|_| {
            let log_l: f64 = rng.random_range(-4.0..=0.0);
            let a: f64 = rng.random_range(0.0..=1.0);
            (top * 10f64.powf(log_l), a)
        })
        .collect();
    let trials: Vec<ElasticNetTrial> = settings
        .par_iter()
        .enumerate()
        .map(|(trial, &(lambda, l1_ratio))| {
            let start = Instant::now();
            let score = match loo_rmse(data, lambda, l1_ratio) {
                Ok(v) => v,
                Err(Error::Convergence { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(ElasticNetTrial {
                trial,
                lambda,
                l1_ratio,
                loo_rmse: score,
                wall_time: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_>>()?;
    let mut best = &trials[0];
    for t in &trials[1..] {
        if t.loo_rmse < best.loo_rmse {
            best = t;
        }
    }
    if !best.loo_rmse.is_finite() {
        return Err(Error::Fit("no elastic net trial converged".into()));
    }
    Ok((best.clone(), trials))
}

/// `trial,lambda,l1_ratio,loo_rmse,wall_time_s`.
pub fn trials_to_csv(trials: &[ElasticNetTrial], with_time: bool) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial", "lambda", "l1_ratio", "loo_rmse", "wall_time_s"])?;
    for t in trials {
        let time = if with_time {
            t.wall_time.to_string()
        } else {
            String::new()
        };
        w.write_record([
            t.trial.to_string(),
            t.lambda.to_string(),
            t.l1_ratio.to_string(),
            t.loo_rmse.to_string(),
            time,
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

//! Permutation importance and partial dependence with quantile curves.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::metrics::{r2, rmse};
use crate::seed;

pub const DEFAULT_REPEATS: usize = 10;
pub const DEFAULT_PDP_POINTS: usize = 50;
pub const DEFAULT_PDP_ALPHAS: [f64; 3] = [0.075, 0.5, 0.925];
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Score {
    #[default]
    R2,
    /// Negated RMSE, so that larger is better.
    NegRmse,
}

impl Score {
    pub fn name(self) -> &'static str {
        match self {
            Score::R2 => "r2",
            Score::NegRmse => "neg_rmse",
        }
    }

    pub fn eval(self, y: &[f64], yhat: &[f64]) -> Result<f64> {
        match self {
            Score::R2 => r2(y, yhat),
            Score::NegRmse => rmse(y, yhat).map(|v| -v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub index: usize,
    pub importance: f64,
    /// Score after each shuffle.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub score: Score,
    pub s0: f64,
    pub repeats: usize,
    /// Sorted by importance, descending.
    pub features: Vec<FeatureImportance>,
}

/// Shuffles each column `repeats` times and records the score drop. Column
/// `j` draws its permutations from stream `j` of `seed`.
pub fn permutation_importance<P>(
    predict: P,
    data: &Dataset,
    score: Score,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport>
where
    P: Fn(&[Vec<f64>]) -> Result<Vec<f64>> + Sync,
{
    if data.is_empty() {
        return Err(Error::Domain(
            "permutation importance of an empty dataset".into(),
        ));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let s0 = score.eval(&data.y, &predict(&data.x)?)?;
    let mut features: Vec<FeatureImportance> = (0..data.n_features())
        .into_par_iter()
        .map(|j| {
            let mut rng = seed::stream(seed, j as u64);
            let mut x = data.x.clone();
            let mut col = data.column(j);
            let mut scores = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                col.shuffle(&mut rng);
                x.iter_mut().zip(&col).for_each(|(row, v)| row[j] = *v);
                scores.push(score.eval(&data.y, &predict(&x)?)?);
            }
            let importance = scores.iter().map(|s| s0 - s).sum::<f64>() / repeats as f64;
            Ok(FeatureImportance {
                feature: data.feature_names[j].clone(),
                index: j,
                importance,
                scores,
            })
        })
        .collect::<Result<_>>()?;
    features.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    Ok(ImportanceReport {
        score,
        s0,
        repeats,
        features,
    })
}

/// Permutation importance of a forest's mean prediction.
pub fn forest_importance(
    forest: &Forest,
    data: &Dataset,
    score: Score,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    permutation_importance(
        |x: &[Vec<f64>]| forest.predict_rows(x),
        data,
        score,
        repeats,
        seed,
    )
}

impl ImportanceReport {
    /// `importance.csv`: `feature,importance,s0,score,M`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "importance", "s0", "score", "M"])?;
        for f in &self.features {
            w.write_record([
                f.feature.clone(),
                f.importance.to_string(),
                self.s0.to_string(),
                self.score.name().to_string(),
                self.repeats.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PdpGrid {
    Explicit(Vec<f64>),
    /// Values at equally spaced quantiles of the observed feature.
    Quantiles(usize),
}

impl Default for PdpGrid {
    fn default() -> Self {
        PdpGrid::Quantiles(DEFAULT_PDP_POINTS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpResult {
    pub feature: String,
    pub index: usize,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub alphas: Vec<f64>,
    /// `quantiles[k][g]` is the curve for `alphas[k]` at `grid[g]`.
    pub quantiles: Vec<Vec<f64>>,
    pub histogram: Vec<HistogramBin>,
}

/// Type-7 sample quantile of sorted data.
fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn resolve_grid(grid: &PdpGrid, observed: &[f64]) -> Result<Vec<f64>> {
    let mut sorted = observed.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let values = match grid {
        PdpGrid::Explicit(v) => {
            if let Some(bad) = v.iter().find(|g| !(lo..=hi).contains(*g)) {
                return Err(Error::Domain(format!(
                    "grid value {bad} outside observed range [{lo}, {hi}]"
                )));
            }
            let mut v = v.clone();
            v.sort_by(f64::total_cmp);
            v
        }
        PdpGrid::Quantiles(k) => match k {
            0 => Vec::new(),
            1 => vec![sample_quantile(&sorted, 0.5)],
            _ => (0..*k)
                .map(|i| sample_quantile(&sorted, i as f64 / (*k - 1) as f64))
                .collect(),
        },
    };
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for v in values {
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(Error::Domain("empty partial dependence grid".into()));
    }
    Ok(out)
}

/// Equal-width histogram over the observed range.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![HistogramBin {
            left: lo,
            right: hi,
            count: values.len(),
        }];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin {
            left: lo + width * b as f64,
            right: if b + 1 == bins {
                hi
            } else {
                lo + width * (b + 1) as f64
            },
            count,
        })
        .collect()
}

/// Partial dependence of the forest's mean and quantile predictions on
/// feature `j`: at each grid value, column `j` of every row is overwritten
/// and the predictions are averaged over rows.
pub fn pdp(
    forest: &Forest,
    data: &Dataset,
    j: usize,
    grid: &PdpGrid,
    alphas: &[f64],
) -> Result<PdpResult> {
    if j >= data.n_features() {
        return Err(Error::Domain(format!(
            "feature index {j} out of range for {} features",
            data.n_features()
        )));
    }
    if data.is_empty() {
        return Err(Error::Domain(
            "partial dependence on an empty dataset".into(),
        ));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::Domain(format!("alpha = {a} outside (0, 1)")));
    }
    let observed = data.column(j);
    let values = resolve_grid(grid, &observed)?;
    let n = data.n_rows() as f64;
    let points: Vec<(f64, Vec<f64>)> = values
        .par_iter()
        .map(|&v| {
            let mut mean = 0.0;
            let mut qs = vec![0.0; alphas.len()];
            let mut row = Vec::with_capacity(data.n_features());
            for x in &data.x {
                row.clear();
                row.extend_from_slice(x);
                row[j] = v;
                let d = forest.conditional_distribution(&row)?;
                mean += d.mean();
                for (q, &a) in qs.iter_mut().zip(alphas) {
                    *q += d.quantile(a)?;
                }
            }
            Ok((mean / n, qs.into_iter().map(|q| q / n).collect()))
        })
        .collect::<Result<_>>()?;
    let quantiles = (0..alphas.len())
        .map(|k| points.iter().map(|p| p.1[k]).collect())
        .collect();
    Ok(PdpResult {
        feature: data.feature_names[j].clone(),
        index: j,
        grid: values,
        mean: points.iter().map(|p| p.0).collect(),
        alphas: alphas.to_vec(),
        quantiles,
        histogram: histogram(&observed, HISTOGRAM_BINS),
    })
}

/// `0.075 -> "q075"`, `0.5 -> "q50"`, `0.925 -> "q925"`.
pub fn quantile_column_name(alpha: f64) -> String {
    let s = alpha.to_string();
    let mut digits = s.trim_start_matches("0.").to_string();
    if digits.len() == 1 {
        digits.push('0');
    }
    format!("q{digits}")
}

impl PdpResult {
    /// `pdp.csv`: `feature,grid_value,mean,q075,q50,q925` for the default levels.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        pdp_to_csv(std::slice::from_ref(self))
    }

    /// `feature,bin_left,bin_right,count`.
    pub fn histogram_csv(&self) -> Result<Vec<u8>> {
        histograms_to_csv(std::slice::from_ref(self))
    }
}

pub fn pdp_to_csv(results: &[PdpResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let alphas = results
        .first()
        .map(|r| r.alphas.clone())
        .unwrap_or_else(|| DEFAULT_PDP_ALPHAS.to_vec());
    let mut header = vec!["feature".to_string(), "grid_value".into(), "mean".into()];
    header.extend(alphas.iter().map(|a| quantile_column_name(*a)));
    w.write_record(&header)?;
    for r in results {
        if r.alphas != alphas {
            return Err(Error::Domain(
                "partial dependence tables use different quantile levels".into(),
            ));
        }
        for g in 0..r.grid.len() {
            let mut rec = vec![
                r.feature.clone(),
                r.grid[g].to_string(),
                r.mean[g].to_string(),
            ];
            rec.extend(r.quantiles.iter().map(|q| q[g].to_string()));
            w.write_record(&rec)?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn histograms_to_csv(results: &[PdpResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["feature", "bin_left", "bin_right", "count"])?;
    for r in results {
        for b in &r.histogram {
            w.write_record([
                r.feature.clone(),
                b.left.to_string(),
                b.right.to_string(),
                b.count.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Ranks with ties averaged, 1-based.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut k = i;
        while k + 1 < idx.len() && v[idx[k + 1]] == v[idx[i]] {
            k += 1;
        }
        let r = (i + k) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=k] {
            out[p] = r;
        }
        i = k + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Domain(
            "spearman needs two equal-length vectors of length >= 2".into(),
        ));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedMetric(
            "spearman correlation of a constant vector".into(),
        ));
    }
    Ok(cov / (va * vb).sqrt())
}

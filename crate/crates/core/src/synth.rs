//! Synthetic data with known ground truth: a heteroscedastic regression
//! problem with exact conditional quantiles, an additive problem with known
//! partial dependence, and a battery-cell generator whose curve features have
//! closed forms. Also holds an independent weight computation used to check
//! the forest.

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::data::{CellRecord, CycleSummary, DischargeCurveSample};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::VoltageGrid;
use crate::forest::{Forest, Node};
use crate::seed;

fn std_normal_quantile(alpha: f64) -> f64 {
    StatNormal::new(0.0, 1.0)
        .expect("unit normal")
        .inverse_cdf(alpha)
}

/// Noise family of [`gen_heteroscedastic`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum NoiseKind {
    #[default]
    Normal,
    /// `exp(s * eps) - exp(s^2 / 2)`: zero mean, right-skewed.
    LogNormal { s: f64 },
}

impl NoiseKind {
    fn draw(self, eps: f64) -> f64 {
        match self {
            NoiseKind::Normal => eps,
            NoiseKind::LogNormal { s } => (s * eps).exp() - (s * s / 2.0).exp(),
        }
    }
}

/// Heteroscedastic linear problem:
/// `y = 1000 x1 + (50 + 200 x2) * noise`, plus 8 pure-noise columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Heteroscedastic {
    pub dataset: Dataset,
    pub noise: NoiseKind,
}

pub const HETERO_FEATURES: [&str; 10] = [
    "x1", "x2", "noise1", "noise2", "noise3", "noise4", "noise5", "noise6", "noise7", "noise8",
];

impl Heteroscedastic {
    /// True conditional `alpha`-quantile at `x`.
    pub fn true_quantile(&self, x: &[f64], alpha: f64) -> f64 {
        hetero_quantile(self.noise, x, alpha)
    }

    /// True equal-tailed interval at nominal coverage `c`.
    pub fn true_interval(&self, x: &[f64], c: f64) -> (f64, f64) {
        (
            self.true_quantile(x, (1.0 - c) / 2.0),
            self.true_quantile(x, (1.0 + c) / 2.0),
        )
    }
}

pub fn hetero_quantile(noise: NoiseKind, x: &[f64], alpha: f64) -> f64 {
    let z = std_normal_quantile(alpha);
    1000.0 * x[0] + (50.0 + 200.0 * x[1]) * noise.draw(z)
}

pub fn gen_heteroscedastic(n: usize, seed: u64) -> Heteroscedastic {
    gen_heteroscedastic_with(n, seed, NoiseKind::Normal)
}

pub fn gen_heteroscedastic_with(n: usize, seed: u64, noise: NoiseKind) -> Heteroscedastic {
    let mut rng = seed::stream(seed, 0);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..HETERO_FEATURES.len())
            .map(|_| rng.random::<f64>())
            .collect();
        let eps: f64 = StandardNormal.sample(&mut rng);
        y.push(1000.0 * row[0] + (50.0 + 200.0 * row[1]) * noise.draw(eps));
        x.push(row);
    }
    let names = HETERO_FEATURES.iter().map(|s| s.to_string()).collect();
    Heteroscedastic {
        dataset: Dataset::from_xy(names, x, y).expect("consistent shapes"),
        noise,
    }
}

pub const ADDITIVE_FEATURES: [&str; 5] = ["x1", "x2", "x3", "x4", "x5"];

/// `y = 20 x1^2 + 10 sin(pi x2) + 5 x3 + N(0, 1)`, `x ~ U(0, 1)^5`.
pub fn gen_additive(n: usize, seed: u64) -> Dataset {
    let mut rng = seed::stream(seed, 0);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let eps: f64 = StandardNormal.sample(&mut rng);
        y.push(additive_signal(&row) + eps);
        x.push(row);
    }
    let names = ADDITIVE_FEATURES.iter().map(|s| s.to_string()).collect();
    Dataset::from_xy(names, x, y).expect("consistent shapes")
}

fn additive_signal(x: &[f64]) -> f64 {
    20.0 * x[0] * x[0] + 10.0 * (std::f64::consts::PI * x[1]).sin() + 5.0 * x[2]
}

/// Component of the additive signal carried by feature `j` (up to a constant).
pub fn additive_true_partial(j: usize, v: f64) -> f64 {
    match j {
        0 => 20.0 * v * v,
        1 => 10.0 * (std::f64::consts::PI * v).sin(),
        2 => 5.0 * v,
        _ => 0.0,
    }
}

/// Forest weights at `x` by direct enumeration: for each tree, find the leaf
/// by walking the node arena, count how often each training index occurs in
/// it, and divide by the leaf size.
pub fn brute_force_weights(forest: &Forest, x: &[f64]) -> Vec<f64> {
    let n = forest.y_train.len();
    let mut total = vec![0.0; n];
    for tree in &forest.trees {
        let mut at = 0usize;
        let leaf = loop {
            match &tree.nodes[at] {
                Node::Leaf { samples } => break samples,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        };
        for (i, t) in total.iter_mut().enumerate() {
            let count = leaf.iter().filter(|&&s| s == i).count();
            *t += count as f64 / leaf.len() as f64;
        }
    }
    total
        .iter()
        .map(|t| t / forest.trees.len() as f64)
        .collect()
}

/// Parameters of the synthetic cell generator.
///
/// Each cell degrades with a progress variable
/// `p(n) = max(0, n - onset) / (100 - onset)`. The discharge curve at cycle
/// `n`, on the normalized voltage `u(V) = (v_max - V) / (v_max - v_min)`, is
///
/// `Q_n(V) = q_total * logistic((v0 - gamma p(n) - V) / sigma) + (b - delta p(n)) u(V)`
///
/// so with `gamma = 0` the capacity difference between two cycles is linear
/// in `u` and its statistics on a uniform grid have closed forms. Cycle life
/// decreases with `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCellsSpec {
    /// Cells per batch, assigned to the three batch dates in order.
    pub batch_sizes: Vec<usize>,
    pub seed: u64,
    /// Cycles whose discharge curve is written out.
    pub curve_cycles: Vec<u32>,
    pub grid: VoltageGrid,
    /// Degradation starts after this cycle; must be below 100.
    pub onset: u32,
    /// Peak drift scale in volts; 0 keeps the closed forms exact.
    pub gamma: f64,
    /// Log-scale spread of cycle life around its deterministic value.
    pub life_noise: f64,
    pub nominal_capacity: f64,
}

impl Default for SynthCellsSpec {
    fn default() -> Self {
        Self {
            batch_sizes: vec![41, 43, 40],
            seed: 0,
            curve_cycles: vec![10, 100],
            grid: VoltageGrid::default(),
            onset: 1,
            gamma: 0.0,
            life_noise: 0.05,
            nominal_capacity: 1.1,
        }
    }
}

pub const SYNTH_PROTOCOLS: [&str; 8] = [
    "5.4C(70%)-3C",
    "6C(40%)-3C",
    "4.8C(80%)-4.8C",
    "3.6C(80%)-3.6C",
    "5C(67%)-4C",
    "4C(80%)-4C",
    "3.6C(30%)-6C",
    "1C(4%)-6C",
];

/// Baseline degradation rate of each protocol in [`SYNTH_PROTOCOLS`].
const PROTOCOL_DELTA: [f64; 8] = [0.012, 0.03, 0.02, 0.009, 0.016, 0.014, 0.025, 0.04];

pub const KNEE_CYCLE: u32 = 250;
const MIN_LIFE: u32 = 300;
const MAX_LIFE: u32 = 2300;

fn batch_dates() -> [NaiveDate; 3] {
    [
        NaiveDate::from_ymd_opt(2017, 5, 12).expect("valid date"),
        NaiveDate::from_ymd_opt(2017, 6, 30).expect("valid date"),
        NaiveDate::from_ymd_opt(2018, 4, 12).expect("valid date"),
    ]
}

/// Generating parameters of one synthetic cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub cell_id: String,
    pub delta: f64,
    pub gamma: f64,
    pub onset: u32,
    pub q_total: f64,
    pub v0: f64,
    pub sigma: f64,
    pub b: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Capacity fade per cycle before the knee.
    pub fade: f64,
    /// Discharge capacity extrapolated to cycle 0.
    pub q0: f64,
    pub nominal_capacity: f64,
    pub cycle_life: u32,
}

impl CellTruth {
    pub fn progress(&self, n: u32) -> f64 {
        n.saturating_sub(self.onset) as f64 / (100 - self.onset) as f64
    }

    fn u(&self, v: f64) -> f64 {
        (self.v_max - v) / (self.v_max - self.v_min)
    }

    pub fn capacity_at(&self, n: u32, v: f64) -> f64 {
        let p = self.progress(n);
        let z = (self.v0 - self.gamma * p - v) / self.sigma;
        self.q_total / (1.0 + (-z).exp()) + (self.b - self.delta * p) * self.u(v)
    }

    /// `delta (p(w) - p(r))`, the drop of the linear term between cycles.
    pub fn delta_d(&self, r: u32, w: u32) -> f64 {
        self.delta * (self.progress(w) - self.progress(r))
    }

    /// Population variance of `Q_w - Q_r` over an `n_points` grid spanning
    /// the generator's voltage range. Exact only for `gamma = 0`.
    pub fn delta_q_variance(&self, r: u32, w: u32, n_points: usize) -> f64 {
        let d = self.delta_d(r, w);
        let n = n_points as f64;
        d * d * (n + 1.0) / (12.0 * (n - 1.0))
    }

    /// Minimum of `Q_w - Q_r` on the grid. Exact only for `gamma = 0`.
    pub fn delta_q_min(&self, r: u32, w: u32) -> f64 {
        (-self.delta_d(r, w)).min(0.0)
    }

    /// Incremental-capacity peak voltage at cycle `n` (logistic centre).
    pub fn peak_position(&self, n: u32) -> f64 {
        self.v0 - self.gamma * self.progress(n)
    }

    /// Change of the linear term's slope contribution to `-dQ/dV`; equals the
    /// peak amplitude shift when `gamma = 0`.
    pub fn peak_amplitude_shift(&self, r: u32, w: u32) -> f64 {
        -self.delta_d(r, w) / (self.v_max - self.v_min)
    }

    pub fn discharge_capacity(&self, n: u32) -> f64 {
        let k = KNEE_CYCLE as f64;
        let life = self.cycle_life as f64;
        let eol = 0.8 * self.nominal_capacity;
        let nf = n as f64;
        let linear = self.q0 - self.fade * nf;
        if nf <= k {
            return linear;
        }
        // Quadratic after the knee, crossing the end-of-life level at L - 0.5.
        let at = life - 0.5;
        let c = (self.q0 - self.fade * at - eol) / ((at - k) * (at - k));
        linear - c * (nf - k) * (nf - k)
    }
}

fn draw_truth(spec: &SynthCellsSpec, index: usize, cell_id: String, protocol: usize) -> CellTruth {
    let mut rng = seed::stream(seed::derive_seed(spec.seed, 1), index as u64);
    let normal: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let delta = PROTOCOL_DELTA[protocol] * (0.35 * normal.sample(&mut rng)).exp();
    let life_noise: f64 = spec.life_noise * normal.sample(&mut rng);
    let life = (800.0 * (delta / 0.02).powf(-0.6) * life_noise.exp()).round();
    let cycle_life = (life as u32).clamp(MIN_LIFE, MAX_LIFE);
    let q_total = spec.nominal_capacity;
    let onset = spec.onset;
    let last_curve = spec.curve_cycles.iter().copied().max().unwrap_or(1);
    // Keeps `b - delta p(n)` nonnegative on every written curve.
    let p_max = last_curve.saturating_sub(onset) as f64 / (100 - onset) as f64;
    CellTruth {
        cell_id,
        delta,
        gamma: spec.gamma * rng.random_range(0.5..1.5),
        onset,
        q_total,
        v0: rng.random_range(3.0..3.25),
        sigma: rng.random_range(0.04..0.06),
        b: rng.random_range(0.05..0.1) + delta * p_max,
        v_min: spec.grid.v_min,
        v_max: spec.grid.v_max,
        fade: rng.random_range(1e-5..2e-5),
        q0: q_total * rng.random_range(0.97..1.0),
        nominal_capacity: spec.nominal_capacity,
        cycle_life,
    }
}

/// Synthetic cells plus the parameters that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCells {
    pub cells: Vec<CellRecord>,
    pub truth: Vec<CellTruth>,
}

pub fn gen_synthetic_cells(spec: &SynthCellsSpec) -> Result<SynthCells> {
    spec.grid.validate()?;
    if spec.batch_sizes.is_empty()
        || spec.batch_sizes.len() > 3
        || spec.batch_sizes.iter().sum::<usize>() == 0
    {
        return Err(Error::Config(
            "batch_sizes needs 1 to 3 batches and at least one cell".into(),
        ));
    }
    if spec.onset >= 100 {
        return Err(Error::Config(format!(
            "onset {} must be below 100",
            spec.onset
        )));
    }
    if spec.curve_cycles.iter().any(|&c| c == 0 || c > MIN_LIFE) {
        return Err(Error::Config(format!(
            "curve cycles must lie in 1..={MIN_LIFE}"
        )));
    }
    let dates = batch_dates();
    let mut plan = Vec::new();
    for (b, &size) in spec.batch_sizes.iter().enumerate() {
        for c in 0..size {
            plan.push((dates[b], format!("b{}c{c:02}", b + 1)));
        }
    }
    let built: Vec<(CellRecord, CellTruth)> = plan
        .into_par_iter()
        .enumerate()
        .map(|(i, (date, id))| {
            let protocol = i % SYNTH_PROTOCOLS.len();
            let truth = draw_truth(spec, i, id.clone(), protocol);
            let cell = build_cell(spec, &truth, date, SYNTH_PROTOCOLS[protocol], i);
            (cell, truth)
        })
        .collect();
    let (mut cells, mut truth): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    cells.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
    truth.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
    Ok(SynthCells { cells, truth })
}

fn build_cell(
    spec: &SynthCellsSpec,
    t: &CellTruth,
    date: NaiveDate,
    protocol: &str,
    index: usize,
) -> CellRecord {
    let mut rng = seed::stream(seed::derive_seed(spec.seed, 2), index as u64);
    let t0: f64 = rng.random_range(30.0..34.0);
    let heat: f64 = rng.random_range(4.0..6.0);
    let kappa: f64 = rng.random_range(0.0..0.01);
    let ir0: f64 = rng.random_range(0.014..0.018);
    let ir_slope: f64 = rng.random_range(-2e-6..2e-6);
    let charge_time: f64 = rng.random_range(9.0..14.0);
    let last = t.cycle_life + 5;
    let cycles = (1..=last)
        .map(|n| {
            let curve = if spec.curve_cycles.contains(&n) {
                (0..spec.grid.n_points)
                    .rev()
                    .map(|i| {
                        let v = spec.grid.point(i);
                        let u = (spec.grid.v_max - v) / (spec.grid.v_max - spec.grid.v_min);
                        DischargeCurveSample {
                            voltage: v,
                            capacity: t.capacity_at(n, v),
                            temperature: t0 + (heat + kappa * (n - 1) as f64) * u,
                        }
                    })
                    .collect()
            } else {
                Vec::new()
            };
            CycleSummary {
                cycle_index: n,
                discharge_capacity: t.discharge_capacity(n),
                charge_time,
                internal_resistance: Some(ir0 + ir_slope * n as f64),
                curve,
            }
        })
        .collect();
    CellRecord {
        cell_id: t.cell_id.clone(),
        batch_date: date,
        charging_protocol: protocol.to_string(),
        nominal_capacity: spec.nominal_capacity,
        cycles,
    }
}

/// `truth.csv` with the generating parameters of each cell.
pub fn truth_to_csv(truth: &[CellTruth]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in truth {
        w.serialize(t)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::label_cycle_life;
    use crate::features::{
        capacity_fade_fit, delta_curve, dqdv_peak_shift, summary_stats, Quantity,
    };

    fn small_spec() -> SynthCellsSpec {
        SynthCellsSpec {
            batch_sizes: vec![4, 4],
            grid: VoltageGrid::new(2.0, 3.5, 300).unwrap(),
            ..Default::default()
        }
    }

    #[test]
    fn hetero_true_median_and_interval() {
        let h = gen_heteroscedastic(10, 1);
        let x = [0.3, 0.7];
        assert!((h.true_quantile(&x, 0.5) - 300.0).abs() < 1e-9);
        let (lo, hi) = h.true_interval(&x, 0.8);
        let z = std_normal_quantile(0.9);
        assert!((hi - lo - 2.0 * z * 190.0).abs() < 1e-9);
    }

    #[test]
    fn hetero_true_intervals_cover_at_nominal_rate() {
        let h = gen_heteroscedastic(5000, 7);
        for c in [0.5, 0.8, 0.95] {
            let covered = (0..5000)
                .filter(|&i| {
                    let (lo, hi) = h.true_interval(&h.dataset.x[i], c);
                    (lo..=hi).contains(&h.dataset.y[i])
                })
                .count();
            assert!((covered as f64 / 5000.0 - c).abs() < 0.02, "c = {c}");
        }
    }

    #[test]
    fn lognormal_intervals_are_asymmetric() {
        let h = gen_heteroscedastic_with(10, 1, NoiseKind::LogNormal { s: 0.5 });
        let x = [0.5, 0.5];
        let med = h.true_quantile(&x, 0.5);
        let (lo, hi) = h.true_interval(&x, 0.8);
        assert!(hi - med > med - lo);
    }

    #[test]
    fn generators_are_reproducible() {
        assert_eq!(gen_heteroscedastic(50, 3), gen_heteroscedastic(50, 3));
        assert_ne!(gen_heteroscedastic(50, 3), gen_heteroscedastic(50, 4));
        assert_eq!(gen_additive(50, 3), gen_additive(50, 3));
    }

    #[test]
    fn synthetic_cells_hit_assigned_life() {
        let s = gen_synthetic_cells(&small_spec()).unwrap();
        assert_eq!(s.cells.len(), 8);
        for (cell, t) in s.cells.iter().zip(&s.truth) {
            assert_eq!(
                label_cycle_life(cell, 0.8).unwrap().cycle_life,
                t.cycle_life
            );
        }
    }

    #[test]
    fn closed_form_delta_q_statistics() {
        let spec = small_spec();
        let s = gen_synthetic_cells(&spec).unwrap();
        for (cell, t) in s.cells.iter().zip(&s.truth) {
            let dq = delta_curve(cell, Quantity::Capacity, 10, 100, &spec.grid).unwrap();
            let st = summary_stats(&dq).unwrap();
            assert!((st.variance - t.delta_q_variance(10, 100, 300)).abs() < 1e-12);
            assert!((st.min - t.delta_q_min(10, 100)).abs() < 1e-12);
            let (slope, intercept) = capacity_fade_fit(cell, 2, 100).unwrap();
            assert!((slope + t.fade).abs() < 1e-12);
            assert!((intercept - t.q0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_drift_gives_zero_deltas() {
        let mut spec = small_spec();
        spec.onset = 99;
        spec.curve_cycles = vec![10, 99];
        let s = gen_synthetic_cells(&spec).unwrap();
        let dq = delta_curve(&s.cells[0], Quantity::Capacity, 10, 99, &spec.grid).unwrap();
        assert!(dq.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn peak_drift_moves_peak() {
        let mut spec = small_spec();
        spec.gamma = 0.05;
        let s = gen_synthetic_cells(&spec).unwrap();
        for (cell, t) in s.cells.iter().zip(&s.truth) {
            let (_, pos) = dqdv_peak_shift(cell, 10, 100, &spec.grid).unwrap();
            let want = t.peak_position(100) - t.peak_position(10);
            assert!(
                (pos - want).abs() <= spec.grid.step() + 1e-12,
                "{pos} vs {want}"
            );
        }
    }

    #[test]
    fn larger_delta_means_shorter_life() {
        let spec = SynthCellsSpec {
            life_noise: 0.0,
            batch_sizes: vec![16],
            curve_cycles: vec![10],
            ..Default::default()
        };
        let s = gen_synthetic_cells(&spec).unwrap();
        let mut t = s.truth.clone();
        t.sort_by(|a, b| a.delta.total_cmp(&b.delta));
        assert!(t.windows(2).all(|w| w[0].cycle_life >= w[1].cycle_life));
    }
}

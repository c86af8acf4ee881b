//! Random regression forest that keeps the training indices of every leaf.
//!
//! Trees are grown by greedy variance reduction over `mtry` randomly chosen
//! features per node. Each leaf stores the in-bag training indices that
//! reached it (with bootstrap multiplicity), which is what turns a forest
//! prediction into a weighted sum over the training responses:
//!
//! ```text
//! w_i(x, t) = #{copies of i in leaf(x, t)} / #{samples in leaf(x, t)}
//! w_i(x)    = mean_t w_i(x, t)
//! mean(x)   = sum_i w_i(x) * y_i
//! ```
//!
//! Out-of-bag indices get zero weight from that tree.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;

pub const MODEL_FORMAT: &str = "qrf-cycle-life/forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub n_trees: usize,
    /// Candidate features drawn at each split.
    pub mtry: usize,
    /// Minimum in-bag samples (with multiplicity) per leaf.
    pub min_leaf: usize,
    /// `None` grows until leaves cannot be split further.
    pub max_depth: Option<usize>,
    /// In-bag sample size as a fraction of the training rows.
    pub sample_fraction: f64,
    pub bootstrap_with_replacement: bool,
    pub seed: u64,
}

impl Hyperparameters {
    /// 500 trees, `mtry = ceil(p / 3)`, `min_leaf = 3`, unlimited depth,
    /// classic bootstrap.
    pub fn defaults_for(p: usize) -> Self {
        Self {
            n_trees: 500,
            mtry: p.div_ceil(3).max(1),
            min_leaf: 3,
            max_depth: None,
            sample_fraction: 1.0,
            bootstrap_with_replacement: true,
            seed: 0,
        }
    }

    /// In-bag sample size for `n` training rows.
    pub fn bag_size(&self, n: usize) -> usize {
        ((self.sample_fraction * n as f64).round() as usize).clamp(1, n.max(1))
    }

    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_trees == 0 {
            return bad("n_trees must be >= 1".into());
        }
        if self.mtry == 0 || self.mtry > p {
            return bad(format!("mtry = {} outside [1, {p}]", self.mtry));
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be >= 1".into());
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return bad(format!(
                "sample_fraction = {} outside (0, 1]",
                self.sample_fraction
            ));
        }
        if self.bag_size(n) < self.min_leaf {
            return bad(format!(
                "in-bag size {} is below min_leaf = {}",
                self.bag_size(n),
                self.min_leaf
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Sorted in-bag training indices, repeated per bootstrap copy.
    Leaf { samples: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Node arena; the root is `nodes[0]`.
    pub nodes: Vec<Node>,
    /// Sorted in-bag multiset.
    pub in_bag: Vec<usize>,
    pub tree_seed: u64,
}

impl RegressionTree {
    /// Training indices of the leaf that `x` falls into.
    pub fn leaf_samples(&self, x: &[f64]) -> &[usize] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
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
                Node::Leaf { samples } => return samples,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    /// Mean of the leaf responses.
    pub fn predict_mean(&self, x: &[f64], y_train: &[f64]) -> f64 {
        let leaf = self.leaf_samples(x);
        leaf.iter().map(|&i| y_train[i]).sum::<f64>() / leaf.len() as f64
    }
}

/// Per-tree weights over the `n` training rows; they sum to one.
pub fn tree_weights(tree: &RegressionTree, x: &[f64], n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    add_tree_weights(tree, x, &mut w);
    w
}

fn add_tree_weights(tree: &RegressionTree, x: &[f64], acc: &mut [f64]) {
    let leaf = tree.leaf_samples(x);
    let share = 1.0 / leaf.len() as f64;
    for &i in leaf {
        acc[i] += share;
    }
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    hp: &'a Hyperparameters,
    p: usize,
    rng: rand_chacha::ChaCha8Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            samples: Vec::new(),
        });
        let split = if self.hp.max_depth.is_some_and(|d| depth >= d) {
            None
        } else {
            self.best_split(&samples)
        };
        match split {
            None => self.nodes[id] = Node::Leaf { samples },
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = samples
                    .iter()
                    .partition(|&&i| self.x[i][s.feature] <= s.threshold);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }

    fn best_split(&mut self, samples: &[usize]) -> Option<BestSplit> {
        let n = samples.len();
        let min_leaf = self.hp.min_leaf;
        if n < 2 * min_leaf {
            return None;
        }
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(self.y[i]), hi.max(self.y[i]))
            });
        if lo == hi {
            return None;
        }
        let mean = samples.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let sse: f64 = samples.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let total: f64 = samples.iter().map(|&i| self.y[i] - mean).sum();
        let parent = total * total / n as f64;

        let mut features: Vec<usize> =
            index::sample(&mut self.rng, self.p, self.hp.mtry).into_vec();
        features.sort_unstable();

        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for &f in &features {
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.x[i][f], self.y[i] - mean)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += pairs[k - 1].1;
                if k < min_leaf || n - k < min_leaf || pairs[k - 1].0 >= pairs[k].0 {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64
                    - parent;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let (a, b) = (pairs[k - 1].0, pairs[k].0);
                    let mid = a + (b - a) * 0.5;
                    best = Some(BestSplit {
                        feature: f,
                        threshold: if mid < b { mid } else { a },
                        gain,
                    });
                }
            }
        }
        best.filter(|b| b.gain > 1e-12 * sse)
    }
}

/// Grows one tree on the `in_bag` multiset of rows.
pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[f64],
    in_bag: &[usize],
    hp: &Hyperparameters,
    tree_seed: u64,
) -> RegressionTree {
    let p = x.first().map_or(0, Vec::len);
    let mut bag = in_bag.to_vec();
    bag.sort_unstable();
    let mut grower = Grower {
        x,
        y,
        hp,
        p,
        rng: seed::stream(tree_seed, 1),
        nodes: Vec::new(),
    };
    grower.grow(bag.clone(), 0);
    RegressionTree {
        nodes: grower.nodes,
        in_bag: bag,
        tree_seed,
    }
}

fn draw_bag(n: usize, hp: &Hyperparameters, tree_seed: u64) -> Vec<usize> {
    let m = hp.bag_size(n);
    let mut rng = seed::stream(tree_seed, 0);
    if hp.bootstrap_with_replacement {
        (0..m).map(|_| rng.random_range(0..n)).collect()
    } else if m == n {
        (0..n).collect()
    } else {
        index::sample(&mut rng, n, m).into_vec()
    }
}

fn check_finite(ds: &Dataset) -> Result<()> {
    if let Some(i) = ds.x.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Domain(format!(
            "row `{}` has a non-finite feature",
            ds.cell_ids[i]
        )));
    }
    if let Some(i) = ds.y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "row `{}` has a non-finite response",
            ds.cell_ids[i]
        )));
    }
    Ok(())
}

pub(crate) fn check_query(x: &[f64], p: usize) -> Result<()> {
    if x.len() != p {
        return Err(Error::Domain(format!(
            "query has {} features, model expects {p}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("query features must be finite".into()));
    }
    Ok(())
}

/// Trained forest. Immutable after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
    pub y_train: Vec<f64>,
    pub feature_names: Vec<String>,
    pub hyperparameters: Hyperparameters,
}

/// Fits `hp.n_trees` trees; tree `t` uses seed `derive_seed(hp.seed, t)` for
/// both its bag and its feature draws, so the result does not depend on the
/// thread schedule.
pub fn fit_forest(dataset: &Dataset, hp: &Hyperparameters) -> Result<Forest> {
    let n = dataset.n_rows();
    if n < 2 {
        return Err(Error::Config(format!(
            "need at least 2 training rows, got {n}"
        )));
    }
    hp.validate(n, dataset.n_features())?;
    check_finite(dataset)?;
    let trees = (0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = seed::derive_seed(hp.seed, t as u64);
            let bag = draw_bag(n, hp, tree_seed);
            fit_tree(&dataset.x, &dataset.y, &bag, hp, tree_seed)
        })
        .collect();
    Ok(Forest {
        trees,
        y_train: dataset.y.clone(),
        feature_names: dataset.feature_names.clone(),
        hyperparameters: hp.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    forest: Forest,
}

impl Forest {
    pub fn n_train(&self) -> usize {
        self.y_train.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Averaged tree weights for `x`; they sum to one.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_query(x, self.n_features())?;
        let mut acc = vec![0.0; self.n_train()];
        for tree in &self.trees {
            add_tree_weights(tree, x, &mut acc);
        }
        let k = self.trees.len() as f64;
        acc.iter_mut().for_each(|w| *w /= k);
        Ok(acc)
    }

    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        let w = self.weights(x)?;
        Ok(weighted_sum(&w, &self.y_train))
    }

    /// Mean prediction for every row.
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.par_iter().map(|r| self.predict_mean(r)).collect()
    }

    /// Whether any tree splits on feature `j`.
    pub fn uses_feature(&self, j: usize) -> bool {
        self.trees
            .iter()
            .any(|t| t.split_features().any(|f| f == j))
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            forest: self.clone(),
        };
        Ok(serde_json::to_vec(&file)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let file: ModelFile = serde_json::from_slice(bytes)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!(
                "unexpected format `{}`",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported version {}",
                file.version
            )));
        }
        file.forest.check_structure()?;
        Ok(file.forest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read(path)?)
    }

    fn check_structure(&self) -> Result<()> {
        let (n, p) = (self.n_train(), self.n_features());
        if self.trees.is_empty() {
            return Err(Error::ModelFormat("forest has no trees".into()));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            let bad = |m: &str| Err(Error::ModelFormat(format!("tree {t}: {m}")));
            if tree.nodes.is_empty() {
                return bad("no nodes");
            }
            for node in &tree.nodes {
                match node {
                    Node::Split {
                        feature,
                        left,
                        right,
                        ..
                    } => {
                        if *feature >= p || *left >= tree.nodes.len() || *right >= tree.nodes.len()
                        {
                            return bad("split references out of range");
                        }
                    }
                    Node::Leaf { samples } => {
                        if samples.is_empty() || samples.iter().any(|&i| i >= n) {
                            return bad("leaf samples empty or out of range");
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// `sum_i w_i * y_i` in index order.
pub(crate) fn weighted_sum(w: &[f64], y: &[f64]) -> f64 {
    w.iter().zip(y).map(|(a, b)| a * b).sum()
}

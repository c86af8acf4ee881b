//! Quantile regression forests for predicting battery cycle-life ranges from
//! early-cycle degradation data.
//!
//! The pipeline runs raw cell files through feature extraction, fits a
//! forest whose leaves keep their training responses, and reads conditional
//! quantiles and prediction intervals off the forest weights. Around that
//! core sit calibration metrics (PICP, ABES), leave-one-out tuning,
//! permutation importance and partial dependence, an Elastic Net baseline,
//! and expected-cycle-life rules for choosing a charging protocol.
//!
//! All randomness flows from explicit `u64` seeds through [`seed`], and
//! every parallel computation collects its results in input order, so
//! outputs do not depend on the thread count.

pub mod cli;
pub mod data;
pub mod dataset;
pub mod decision;
pub mod elastic_net;
pub mod error;
pub mod features;
pub mod forest;
pub mod interpret;
pub mod metrics;
pub mod quantile;
pub mod seed;
pub mod synth;
pub mod tuning;

pub use data::{CellRecord, CycleSummary, DatasetSplit, DischargeCurveSample, LabeledCell};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use features::{FeatureConfig, VoltageGrid, FEATURE_NAMES};
pub use forest::{fit_forest, Forest, Hyperparameters};
pub use metrics::{abes, picp, CalibrationCurve};
pub use quantile::{predict_cells, CellPrediction, ConditionalDistribution, PredictionInterval};

//! Expected cycle life of a charging protocol, flagging of wide prediction
//! intervals, and protocol ranking.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::CellPrediction;

pub const DEFAULT_FLAG_THRESHOLD: f64 = 350.0;

/// Plain average of the predicted means (ECL1).
pub fn ecl_point(preds: &[CellPrediction]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Domain(
            "expected cycle life of an empty group".into(),
        ));
    }
    Ok(preds.iter().map(|p| p.mean).sum::<f64>() / preds.len() as f64)
}

/// Normalized inverse-interval-length weights.
pub fn ecl_weights(preds: &[CellPrediction]) -> Result<Vec<f64>> {
    if preds.is_empty() {
        return Err(Error::Domain(
            "expected cycle life of an empty group".into(),
        ));
    }
    if let Some(p) = preds.iter().find(|p| !(p.interval_length > 0.0)) {
        return Err(Error::DegenerateWeight(format!(
            "cell `{}` has interval length {}",
            p.cell_id, p.interval_length
        )));
    }
    let inv: Vec<f64> = preds.iter().map(|p| 1.0 / p.interval_length).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.iter().map(|v| v / total).collect())
}

/// Mean weighted by inverse interval length (ECL2).
pub fn ecl_weighted(preds: &[CellPrediction]) -> Result<f64> {
    let w = ecl_weights(preds)?;
    Ok(w.iter().zip(preds).map(|(w, p)| w * p.mean).sum())
}

/// Ids whose interval is strictly longer than `threshold`.
pub fn flag_anomalous(preds: &[CellPrediction], threshold: f64) -> Result<BTreeSet<String>> {
    if !(threshold > 0.0) {
        return Err(Error::Domain(format!(
            "flag threshold {threshold} must be positive"
        )));
    }
    Ok(preds
        .iter()
        .filter(|p| p.interval_length > threshold)
        .map(|p| p.cell_id.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolDecision {
    pub protocol: String,
    pub cell_count: usize,
    pub ecl1: f64,
    pub ecl2: f64,
    /// Sorted by cell id.
    pub cells: Vec<CellPrediction>,
    pub flagged_ids: BTreeSet<String>,
}

/// Groups predictions by protocol and sorts groups by ECL2, then ECL1, both
/// descending. Ties keep protocol-name order.
pub fn rank_protocols(
    preds: &[(String, CellPrediction)],
    threshold: f64,
) -> Result<Vec<ProtocolDecision>> {
    if preds.is_empty() {
        return Err(Error::Domain("no protocol groups to rank".into()));
    }
    let mut groups: BTreeMap<&str, Vec<CellPrediction>> = BTreeMap::new();
    for (protocol, p) in preds {
        groups.entry(protocol.as_str()).or_default().push(p.clone());
    }
    let mut out = Vec::with_capacity(groups.len());
    for (protocol, mut cells) in groups {
        cells.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
        let wrap = |e: Error| Error::Domain(format!("protocol `{protocol}`: {e}"));
        out.push(ProtocolDecision {
            protocol: protocol.to_string(),
            cell_count: cells.len(),
            ecl1: ecl_point(&cells).map_err(wrap)?,
            ecl2: ecl_weighted(&cells).map_err(wrap)?,
            flagged_ids: flag_anomalous(&cells, threshold)?,
            cells,
        });
    }
    out.sort_by(|a, b| b.ecl2.total_cmp(&a.ecl2).then(b.ecl1.total_cmp(&a.ecl1)));
    Ok(out)
}

/// `protocols.csv`: `protocol,B,ecl1,ecl2,n_flagged`.
pub fn protocols_to_csv(decisions: &[ProtocolDecision]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["protocol", "B", "ecl1", "ecl2", "n_flagged"])?;
    for d in decisions {
        w.write_record([
            d.protocol.clone(),
            d.cell_count.to_string(),
            d.ecl1.to_string(),
            d.ecl2.to_string(),
            d.flagged_ids.len().to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// `flags.csv`: `cell_id,interval_length,threshold`, sorted by cell id.
pub fn flags_to_csv(preds: &[CellPrediction], threshold: f64) -> Result<Vec<u8>> {
    let flagged = flag_anomalous(preds, threshold)?;
    let mut rows: Vec<&CellPrediction> = preds
        .iter()
        .filter(|p| flagged.contains(&p.cell_id))
        .collect();
    rows.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cell_id", "interval_length", "threshold"])?;
    for p in rows {
        w.write_record([
            p.cell_id.clone(),
            p.interval_length.to_string(),
            threshold.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

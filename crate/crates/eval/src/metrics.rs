//! Per-channel beamforming loss and distribution summaries.

use beamseq_core::phy::{optimal_beam, received_signal_strength, BeamLabel, PhyError};
use beamseq_core::{ChannelSnapshot, Codebook};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

/// `(RSS_opt - RSS_pred) / RSS_opt` in linear power, where `RSS_opt` is the
/// exhaustive-search optimum.
pub fn normalized_bf_loss(h: &ChannelSnapshot, predicted: BeamLabel, cb: &Codebook) -> Result<f64> {
    if h.is_zero() {
        return Err(PhyError::ZeroChannel.into());
    }
    let opt = optimal_beam(h, cb)?;
    let rss_opt = received_signal_strength(h, cb.codeword(opt)?)?;
    let rss_pred = received_signal_strength(h, cb.codeword(predicted)?)?;
    Ok(loss_from_rss(rss_pred, rss_opt))
}

pub(crate) fn loss_from_rss(rss_pred: f64, rss_opt: f64) -> f64 {
    (rss_opt - rss_pred) / rss_opt
}

/// One step of an empirical CDF: the fraction of values `<= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub threshold: f64,
    pub fraction: f64,
}

/// Right-continuous empirical CDF, one point per distinct value.
pub fn empirical_cdf(values: &[f64]) -> Result<Vec<CdfPoint>> {
    if values.is_empty() {
        return Err(EvalError::Empty("loss list"));
    }
    if let Some(v) = values.iter().find(|v| v.is_nan()) {
        return Err(EvalError::Invariant(format!("CDF input contains {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points: Vec<CdfPoint> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.threshold == v => last.fraction = fraction,
            _ => points.push(CdfPoint { threshold: v, fraction }),
        }
    }
    Ok(points)
}

/// Evaluate a CDF from [`empirical_cdf`] at `x`.
pub fn cdf_at(points: &[CdfPoint], x: f64) -> f64 {
    points.iter().take_while(|p| p.threshold <= x).last().map_or(0.0, |p| p.fraction)
}

/// Fraction of values strictly below `threshold`.
pub fn fraction_below(values: &[f64], threshold: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(EvalError::Empty("loss list"));
    }
    Ok(values.iter().filter(|&&v| v < threshold).count() as f64 / values.len() as f64)
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(EvalError::Empty("value list"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

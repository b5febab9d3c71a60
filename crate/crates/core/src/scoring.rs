//! Composite effective score (CES), its tail threshold and binary labels.
//!
//! The score combines potency (IC50), cumulative effect (AUC) and efficacy
//! (the lower limit of the fitted viability curve):
//!
//! ```text
//! CES = log((AUC + lower + IC50) / (2 * AUC * lower * IC50))
//! ```
//!
//! Pairs scoring at or above `mean + 1.28 * sd` of the reference score
//! distribution are labeled effective.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Multiplier on the standard deviation; the 90th percentile of a normal.
pub const TAIL_Z: f64 = 1.28;

/// Threshold used for the per-cell-line effectiveness gate during ingestion.
pub const PUBLISHED_GATE_THRESHOLD: f64 = 7.2734;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogBase {
    #[default]
    #[serde(rename = "e")]
    E,
    #[serde(rename = "10")]
    Ten,
}

impl LogBase {
    #[cfg(test)]
    fn apply(self, x: f64) -> f64 {
        match self {
            LogBase::E => x.ln(),
            LogBase::Ten => x.log10(),
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" | "ln" => Ok(LogBase::E),
            "10" => Ok(LogBase::Ten),
            other => Err(Error::InvalidInput(format!(
                "log base must be `e` or `10`, got `{other}`"
            ))),
        }
    }
}

/// CES with the natural logarithm.
pub fn compute_ces(auc: f64, lower_limit: f64, ic50: f64) -> Result<f64> {
    compute_ces_with_base(auc, lower_limit, ic50, LogBase::E)
}

pub fn compute_ces_with_base(auc: f64, lower_limit: f64, ic50: f64, base: LogBase) -> Result<f64> {
    for (name, v) in [("auc", auc), ("lower_limit", lower_limit), ("ic50", ic50)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!(
                "{name} must be finite and strictly positive, got {v}"
            )));
        }
    }
    // Work in log space so tiny products do not underflow.
    let ln = (auc + lower_limit + ic50).ln() - (2f64.ln() + auc.ln() + lower_limit.ln() + ic50.ln());
    let value = match base {
        LogBase::E => ln,
        LogBase::Ten => ln / std::f64::consts::LN_10,
    };
    if !value.is_finite() {
        return Err(Error::Domain(format!(
            "score is not finite for ({auc}, {lower_limit}, {ic50})"
        )));
    }
    Ok(value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub mu: f64,
    /// Population standard deviation (divides by `n`).
    pub sigma: f64,
    pub threshold: f64,
    pub n: usize,
    pub log_base: LogBase,
}

pub fn compute_threshold(ces_values: &[f64]) -> Result<ThresholdSpec> {
    compute_threshold_with_base(ces_values, LogBase::E)
}

pub fn compute_threshold_with_base(ces_values: &[f64], log_base: LogBase) -> Result<ThresholdSpec> {
    let n = ces_values.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "threshold needs at least 2 scores, got {n}"
        )));
    }
    if ces_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite score in threshold input".into()));
    }
    let mu = ces_values.iter().sum::<f64>() / n as f64;
    let var = ces_values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
    let sigma = var.sqrt();
    Ok(ThresholdSpec {
        mu,
        sigma,
        threshold: mu + TAIL_Z * sigma,
        n,
        log_base,
    })
}

#[inline]
pub fn binarize(ces: f64, spec: &ThresholdSpec) -> u8 {
    u8::from(ces >= spec.threshold)
}

//! Symptom predicates and feedback scores over per-partition metric vectors.
//!
//! A template is both the fuzzing oracle (triggered or not) and the guidance
//! signal (the score). The two are never inconsistent: triggered holds
//! exactly when the score reaches the template's threshold.

use crate::error::{Error, Result};

/// The four shipped monitor templates, each parameterized by its threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MonitorTemplate {
    /// Triggers when max(values) reaches the threshold.
    MaximumThreshold(f64),
    /// Triggers when (max - Q3) / IQR reaches the threshold.
    IqrOutlier(f64),
    /// Triggers when max / second-max reaches the threshold. One occurrence
    /// of the maximum is removed, so [5, 5] scores 1.0.
    NextComparison(f64),
    /// Triggers when the sample skewness g1 reaches the threshold.
    Skewness(f64),
}

/// Outcome of evaluating a template on one metric vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub triggered: bool,
    pub score: f64,
}

/// Extension point for symptom checks beyond the shipped templates.
pub trait Monitor {
    fn evaluate(&self, values: &[f64]) -> Result<Verdict>;
    fn threshold(&self) -> f64;
}

impl MonitorTemplate {
    pub fn threshold(&self) -> f64 {
        match self {
            MonitorTemplate::MaximumThreshold(t)
            | MonitorTemplate::IqrOutlier(t)
            | MonitorTemplate::NextComparison(t)
            | MonitorTemplate::Skewness(t) => *t,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MonitorTemplate::MaximumThreshold(_) => "MaximumThreshold",
            MonitorTemplate::IqrOutlier(_) => "IQROutlier",
            MonitorTemplate::NextComparison(_) => "NextComparison",
            MonitorTemplate::Skewness(_) => "Skewness",
        }
    }

    pub fn parse(name: &str, threshold: f64) -> Result<MonitorTemplate> {
        if !threshold.is_finite() {
            return Err(Error::Monitor(format!(
                "threshold must be finite, got {threshold}"
            )));
        }
        match name {
            "MaximumThreshold" => Ok(MonitorTemplate::MaximumThreshold(threshold)),
            "IQROutlier" => Ok(MonitorTemplate::IqrOutlier(threshold)),
            "NextComparison" => {
                if threshold <= 0.0 {
                    return Err(Error::Monitor("NextComparison ratio must be > 0".into()));
                }
                Ok(MonitorTemplate::NextComparison(threshold))
            }
            "Skewness" => Ok(MonitorTemplate::Skewness(threshold)),
            other => Err(Error::Monitor(format!("unknown monitor template {other:?}"))),
        }
    }

    /// Scores a vector of per-partition metric values.
    pub fn evaluate(&self, values: &[f64]) -> Result<Verdict> {
        if values.is_empty() {
            return Err(Error::Monitor("empty metric vector".into()));
        }
        let score = match self {
            MonitorTemplate::MaximumThreshold(_) => max_of(values),
            MonitorTemplate::NextComparison(_) => next_comparison_score(values),
            MonitorTemplate::IqrOutlier(_) => iqr_outlier_score(values),
            MonitorTemplate::Skewness(_) => sample_skewness(values),
        };
        Ok(Verdict {
            triggered: score >= self.threshold(),
            score,
        })
    }
}

impl Monitor for MonitorTemplate {
    fn evaluate(&self, values: &[f64]) -> Result<Verdict> {
        MonitorTemplate::evaluate(self, values)
    }

    fn threshold(&self) -> f64 {
        MonitorTemplate::threshold(self)
    }
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// max / second-max, with one occurrence of the maximum removed.
///
/// A lone nonzero partition is maximal skew: second-max of 0 with a positive
/// max scores +inf. A vector whose max is 0 scores 0.
fn next_comparison_score(values: &[f64]) -> f64 {
    let max = max_of(values);
    if max == 0.0 {
        return 0.0;
    }
    let max_pos = values.iter().position(|&v| v == max).unwrap();
    let second = values
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != max_pos)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if second <= 0.0 || second == f64::NEG_INFINITY {
        if max > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        max / second
    }
}

/// Q1 and Q3 by linear interpolation at ranks 0.25(n-1) and 0.75(n-1).
pub fn quartiles(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (
        interpolate(&sorted, 0.25 * (sorted.len() - 1) as f64),
        interpolate(&sorted, 0.75 * (sorted.len() - 1) as f64),
    )
}

fn interpolate(sorted: &[f64], rank: f64) -> f64 {
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// (max - Q3) / IQR. A flat distribution (IQR = 0) scores +inf as soon as
/// anything exceeds Q3, and 0 otherwise.
fn iqr_outlier_score(values: &[f64]) -> f64 {
    let (q1, q3) = quartiles(values);
    let iqr = q3 - q1;
    let max = max_of(values);
    if iqr == 0.0 {
        if max > q3 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        (max - q3) / iqr
    }
}

/// Population-moment sample skewness g1, with no bias correction.
/// Returns 0 for n < 3 or zero variance.
///
/// Sums run over the sorted vector so that permutations of the input produce
/// bit-identical scores.
fn sample_skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 3 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = sorted.iter().sum::<f64>() / n;
    let m2 = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if m2 == 0.0 {
        return 0.0;
    }
    let m3 = sorted.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

//! Curve aggregation, the paired t-test and labeling-effort comparisons.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::record::RepeatRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub round: usize,
    pub labeled_count: usize,
    pub mean_test_accuracy: f64,
    /// Population standard deviation over repeats.
    pub std_test_accuracy: f64,
    pub repeats: usize,
}

/// Per-round mean and population standard deviation of test accuracy.
pub fn aggregate_runs(records: &[RepeatRecord]) -> Result<Vec<AggregatePoint>> {
    let Some(first) = records.first() else {
        return Err(Error::InvalidInput("no records to aggregate".into()));
    };
    for r in records {
        if r.rounds.len() != first.rounds.len() {
            return Err(Error::InvalidInput(format!(
                "repeat {} has {} rounds, repeat {} has {}",
                r.repeat,
                r.rounds.len(),
                first.repeat,
                first.rounds.len()
            )));
        }
        if r.rounds.iter().zip(&first.rounds).any(|(a, b)| a.labeled_count != b.labeled_count) {
            return Err(Error::InvalidInput(format!("repeat {} has a different labeled-count schedule", r.repeat)));
        }
    }
    let n = records.len() as f64;
    Ok((0..first.rounds.len())
        .map(|t| {
            let accs: Vec<f64> = records.iter().map(|r| r.rounds[t].test_accuracy).collect();
            let mean = accs.iter().sum::<f64>() / n;
            let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
            AggregatePoint {
                round: first.rounds[t].round,
                labeled_count: first.rounds[t].labeled_count,
                mean_test_accuracy: mean,
                std_test_accuracy: var.sqrt(),
                repeats: records.len(),
            }
        })
        .collect())
}

/// Paired t-test over per-round differences `a - b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    /// `±inf` when the differences are constant and non-zero.
    #[serde(with = "float_or_infinity")]
    pub t: f64,
    pub degrees_of_freedom: usize,
    /// Two-sided.
    pub p_value: f64,
    pub mean_difference: f64,
    pub n: usize,
}

pub fn paired_t_statistic(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("a paired t-test needs at least 2 pairs, got {n}")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("accuracy series contain non-finite values".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let df = n - 1;
    let t = if d.iter().all(|v| *v == 0.0) {
        0.0
    } else if sd == 0.0 || sd <= 1e-300 {
        mean.signum() * f64::INFINITY
    } else {
        mean / (sd / (n as f64).sqrt())
    };
    let p_value = if t.is_infinite() {
        0.0
    } else {
        let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Domain(e.to_string()))?;
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(PairedTTest { t, degrees_of_freedom: df, p_value, mean_difference: mean, n })
}

/// Smallest labeled count whose accuracy reaches `target`, scanning
/// `(labeled_count, accuracy)` points in order.
pub fn first_reaching(points: impl IntoIterator<Item = (usize, f64)>, target: f64) -> Result<Option<usize>> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidInput(format!("target accuracy {target} must lie strictly between 0 and 1")));
    }
    Ok(points.into_iter().filter(|(_, acc)| *acc >= target).map(|(n, _)| n).min())
}

/// Smallest |D_l=1| whose mean accuracy reaches `target`.
pub fn images_to_reach(curve: &[AggregatePoint], target: f64) -> Result<Option<usize>> {
    first_reaching(curve.iter().map(|p| (p.labeled_count, p.mean_test_accuracy)), target)
}

/// Labeled counts per repeat needed to reach `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachSummary {
    pub target: f64,
    pub reached_repeats: usize,
    pub total_repeats: usize,
    /// Mean and population std over repeats; present only if every repeat reached the target.
    pub mean_count: Option<f64>,
    pub std_count: Option<f64>,
    /// Count read off the mean curve.
    pub mean_curve_count: Option<usize>,
}

pub fn reach_summary(records: &[RepeatRecord], target: f64) -> Result<ReachSummary> {
    let curve = aggregate_runs(records)?;
    let counts: Vec<Option<usize>> =
        records.iter().map(|r| first_reaching(r.test_curve(), target)).collect::<Result<_>>()?;
    let reached: Vec<f64> = counts.iter().flatten().map(|&c| c as f64).collect();
    let (mean_count, std_count) = if reached.len() == records.len() {
        let n = reached.len() as f64;
        let mean = reached.iter().sum::<f64>() / n;
        let var = reached.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
        (Some(mean), Some(var.sqrt()))
    } else {
        (None, None)
    };
    Ok(ReachSummary {
        target,
        reached_repeats: reached.len(),
        total_repeats: records.len(),
        mean_count,
        std_count,
        mean_curve_count: images_to_reach(&curve, target)?,
    })
}

/// Fraction of labels saved relative to a baseline: `1 - ours / baseline`.
pub fn savings_fraction(ours: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0 && baseline.is_finite() && ours >= 0.0 && ours.is_finite()) {
        return Err(Error::InvalidInput(format!("cannot compare counts {ours} and {baseline}")));
    }
    Ok(1.0 - ours / baseline)
}

/// Percentage with two decimals, rounded up at the second decimal
/// (0.129032… → "12.91"). A tolerance of 1e-9 percent keeps exact values
/// such as 0.25 at "25.00".
pub fn format_percent(fraction: f64) -> String {
    // `+ 0.0` turns a negative zero into zero.
    let hundredths = (fraction * 10_000.0 - 1e-7).ceil() + 0.0;
    format!("{:.2}", hundredths / 100.0)
}

/// Serializes infinities as the strings `"inf"` / `"-inf"`, which plain JSON
/// numbers cannot carry.
pub mod float_or_infinity {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number, `inf` or `-inf`, got `{t}`"))),
        }
    }
}

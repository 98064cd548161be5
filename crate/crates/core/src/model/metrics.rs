//! ROC-AUC, ROC curves, calibration tables and evaluation reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ModelError;

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), ModelError> {
    if scores.len() != labels.len() {
        return Err(ModelError::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(ModelError::SingleClass);
    }
    Ok((pos, neg))
}

/// Area under the ROC curve via the Mann-Whitney rank statistic.
///
/// Equals the probability that a random positive outscores a random negative,
/// counting ties as one half. Ranks are kept doubled in integer arithmetic so
/// the result is exact up to the final division.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, ModelError> {
    let (pos, neg) = check_lengths(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the rank sum of the positives; tied groups share the mean rank
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].total_cmp(&scores[order[i]]).is_eq() {
            j += 1;
        }
        // ranks i+1 ..= j+1, mean (i + j + 2) / 2
        let twice_mean = (i + j + 2) as u128;
        let group_pos = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum += twice_mean * group_pos;
        i = j + 1;
    }
    let pos_u = pos as u128;
    let twice_u = twice_rank_sum - pos_u * (pos_u + 1);
    Ok(twice_u as f64 / (2.0 * pos as f64 * neg as f64))
}

/// ROC curve points `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>, ModelError> {
    let (pos, neg) = check_lengths(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(k + 1).is_none_or(|&next| scores[next] != scores[i]);
        if last_of_group {
            points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        }
    }
    Ok(points)
}

/// Fraction of rows where `score >= threshold` agrees with the label.
pub fn accuracy(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let hits = scores.iter().zip(labels).filter(|(&s, &l)| (s >= threshold) == l).count();
    hits as f64 / scores.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    /// `None` for empty bins.
    pub mean_predicted: Option<f64>,
    pub observed_rate: Option<f64>,
    pub count: usize,
}

impl CalibrationBin {
    pub fn gap(&self) -> Option<f64> {
        Some((self.mean_predicted? - self.observed_rate?).abs())
    }
}

/// Equal-width bins on `[0, 1]`; the last bin is closed on the right.
pub fn calibration_table(probs: &[f64], labels: &[bool], n_bins: usize) -> Result<Vec<CalibrationBin>, ModelError> {
    if probs.len() != labels.len() {
        return Err(ModelError::LengthMismatch { left: probs.len(), right: labels.len() });
    }
    if n_bins < 2 {
        return Err(ModelError::InvalidArgument(format!("n_bins must be at least 2, got {n_bins}")));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(ModelError::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    let mut sums = vec![(0.0f64, 0usize, 0usize); n_bins];
    for (&p, &l) in probs.iter().zip(labels) {
        let b = ((p * n_bins as f64) as usize).min(n_bins - 1);
        sums[b].0 += p;
        sums[b].1 += l as usize;
        sums[b].2 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (sum, missed, count))| CalibrationBin {
            lower: i as f64 / n_bins as f64,
            upper: (i + 1) as f64 / n_bins as f64,
            mean_predicted: (count > 0).then(|| sum / count as f64),
            observed_rate: (count > 0).then(|| missed as f64 / count as f64),
            count,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub roc_auc: f64,
    /// Accuracy when predicting "missed" for probabilities at or above 0.5.
    pub accuracy: f64,
    pub base_rate: f64,
    pub n: usize,
    pub calibration_table: Vec<CalibrationBin>,
    pub roc_points: Vec<(f64, f64)>,
}

impl EvaluationReport {
    pub fn evaluate(probs: &[f64], labels: &[bool]) -> Result<Self, ModelError> {
        Ok(Self {
            roc_auc: roc_auc(probs, labels)?,
            accuracy: accuracy(probs, labels, 0.5),
            base_rate: labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64,
            n: labels.len(),
            calibration_table: calibration_table(probs, labels, 10)?,
            roc_points: roc_curve(probs, labels)?,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rows:        {}", self.n);
        let _ = writeln!(s, "base rate:   {:.4}", self.base_rate);
        let _ = writeln!(s, "ROC AUC:     {:.4}", self.roc_auc);
        let _ = writeln!(s, "accuracy@.5: {:.4}  (always-attended scores {:.4})", self.accuracy, 1.0 - self.base_rate);
        let _ = writeln!(s, "calibration:");
        let _ = writeln!(s, "  {:<11} {:>8} {:>10} {:>9}", "bin", "count", "predicted", "observed");
        for b in &self.calibration_table {
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "  [{:.1}, {:.1}) {:>8} {:>10} {:>9}",
                b.lower,
                b.upper,
                b.count,
                fmt(b.mean_predicted),
                fmt(b.observed_rate)
            );
        }
        s
    }
}

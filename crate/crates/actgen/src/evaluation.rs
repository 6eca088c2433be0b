//! Classification and regression metrics, time-of-day histograms, and the
//! train-versus-validation evaluation report.

use crate::schedule::DAY_CAP_MINUTES;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("empty evaluation: no observations")]
    EmptyEvaluation,
    #[error("F1 is undefined: no class has any support or predictions")]
    UndefinedF1,
    #[error("length mismatch: {pred} predictions vs {target} targets")]
    LengthMismatch { pred: usize, target: usize },
    #[error("time {0} outside [0, {DAY_CAP_MINUTES})")]
    OutOfRangeTime(f64),
    #[error("histograms have different binning or normalization")]
    BinningMismatch,
}

/// Full k x k confusion matrix (`matrix[truth][prediction]`) with one-vs-rest
/// counts derivable per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub classes: Vec<String>,
    pub matrix: Vec<Vec<usize>>,
}

impl ConfusionCounts {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        Self { classes, matrix: vec![vec![0; k]; k] }
    }

    pub fn from_pairs(classes: Vec<String>, pairs: &[(usize, usize)]) -> Self {
        let mut c = Self::new(classes);
        for &(truth, pred) in pairs {
            c.record(truth, pred);
        }
        c
    }

    pub fn record(&mut self, truth: usize, pred: usize) {
        self.matrix[truth][pred] += 1;
    }

    pub fn total(&self) -> usize {
        self.matrix.iter().flatten().sum()
    }

    pub fn true_positives(&self, class: usize) -> usize {
        self.matrix[class][class]
    }

    pub fn false_negatives(&self, class: usize) -> usize {
        self.matrix[class].iter().sum::<usize>() - self.matrix[class][class]
    }

    pub fn false_positives(&self, class: usize) -> usize {
        self.matrix.iter().map(|row| row[class]).sum::<usize>() - self.matrix[class][class]
    }

    pub fn true_negatives(&self, class: usize) -> usize {
        self.total() - self.true_positives(class) - self.false_positives(class)
            - self.false_negatives(class)
    }

    /// Support (number of true instances) of a class.
    pub fn support(&self, class: usize) -> usize {
        self.matrix[class].iter().sum()
    }
}

/// Fraction of correct predictions: the matrix trace over the total. For
/// the binary case this is `(TP + TN) / (TP + FP + TN + FN)`.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let trace: usize = (0..c.classes.len()).map(|i| c.matrix[i][i]).sum();
    Ok(trace as f64 / total as f64)
}

/// Per-class F1 as `TP / (TP + 0.5 (FP + FN))`, the harmonic mean of
/// precision and recall. `None` when the class has no support and is never
/// predicted.
pub fn f1_per_class(c: &ConfusionCounts, class: usize) -> Option<f64> {
    let tp = c.true_positives(class) as f64;
    let fp = c.false_positives(class) as f64;
    let fnn = c.false_negatives(class) as f64;
    if tp + fp + fnn == 0.0 {
        return None;
    }
    Some(tp / (tp + 0.5 * (fp + fnn)))
}

/// Support-weighted mean of per-class one-vs-rest F1 scores. Classes with
/// zero support are skipped.
pub fn f1_score(c: &ConfusionCounts) -> Result<f64, EvalError> {
    let mut weighted = 0.0;
    let mut total_support = 0usize;
    for class in 0..c.classes.len() {
        let support = c.support(class);
        if support == 0 {
            continue;
        }
        let f1 = f1_per_class(c, class).unwrap_or(0.0);
        weighted += f1 * support as f64;
        total_support += support;
    }
    if total_support == 0 {
        return Err(EvalError::UndefinedF1);
    }
    Ok(weighted / total_support as f64)
}

/// Root mean squared error between predictions and targets.
pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != target.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), target: target.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let mse = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Histogram of times-of-day over `[0, 1728)` with left-closed bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeHistogram {
    pub bin_width: f64,
    pub counts: Vec<f64>,
    pub normalized: bool,
}

impl TimeHistogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Index of the fullest bin (lowest index wins ties).
    pub fn argmax_bin(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate().skip(1) {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }
}

/// Bins times into left-closed `bin_width`-minute bins over `[0, 1728)`.
pub fn time_histogram(
    times: &[f64],
    bin_width: f64,
    normalize: bool,
) -> Result<TimeHistogram, EvalError> {
    let n_bins = (DAY_CAP_MINUTES / bin_width).ceil() as usize;
    let mut counts = vec![0.0; n_bins];
    for &t in times {
        if !(0.0..DAY_CAP_MINUTES).contains(&t) {
            return Err(EvalError::OutOfRangeTime(t));
        }
        counts[(t / bin_width) as usize] += 1.0;
    }
    if normalize {
        let total: f64 = counts.iter().sum();
        if total > 0.0 {
            counts.iter_mut().for_each(|c| *c /= total);
        }
    }
    Ok(TimeHistogram { bin_width, counts, normalized: normalize })
}

/// One-dimensional earth mover's distance between two normalized histograms
/// with identical binning, via the cumulative-difference sum. Units: bins.
pub fn emd(a: &TimeHistogram, b: &TimeHistogram) -> Result<f64, EvalError> {
    if a.bin_width != b.bin_width || a.counts.len() != b.counts.len() || !a.normalized || !b.normalized
    {
        return Err(EvalError::BinningMismatch);
    }
    let mut cum = 0.0;
    let mut dist = 0.0;
    for (x, y) in a.counts.iter().zip(&b.counts) {
        cum += x - y;
        dist += cum.abs();
    }
    Ok(dist)
}

/// One row of the type-classification comparison table: a person group, a
/// model variant, and a data split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeTableRow {
    pub group: String,
    pub variant: String,
    pub split: String,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

/// One row of time-model errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeModelRow {
    pub group: String,
    pub slot: String,
    pub split: String,
    pub rmse: Option<f64>,
}

/// Observed-versus-generated histogram pair for one time variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPair {
    pub name: String,
    pub observed: TimeHistogram,
    pub generated: TimeHistogram,
    pub emd_bins: f64,
}

/// The assembled evaluation report: classification comparison, time-model
/// errors, and time-pattern histogram pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvaluationReport {
    pub type_table: Vec<TypeTableRow>,
    pub time_models: Vec<TimeModelRow>,
    pub histograms: Vec<HistogramPair>,
}

impl EvaluationReport {
    /// The comparison table as CSV, one row per group/variant/split.
    pub fn type_table_csv(&self) -> String {
        let mut out = String::from("group,variant,split,accuracy,f1\n");
        for r in &self.type_table {
            let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.group,
                r.variant,
                r.split,
                fmt(r.accuracy),
                fmt(r.f1)
            ));
        }
        out
    }
}

/// Evaluates raw prediction pairs into accuracy and F1.
pub fn evaluate_classifier(
    classes: Vec<String>,
    pairs: &[(usize, usize)],
) -> Result<(f64, f64), EvalError> {
    let counts = ConfusionCounts::from_pairs(classes, pairs);
    Ok((accuracy(&counts)?, f1_score(&counts)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(tp: usize, fp: usize, tn: usize, fnn: usize) -> ConfusionCounts {
        // Class 0 is the positive class.
        ConfusionCounts {
            classes: vec!["pos".into(), "neg".into()],
            matrix: vec![vec![tp, fnn], vec![fp, tn]],
        }
    }

    #[test]
    fn accuracy_examples() {
        let c = binary(5, 1, 3, 1);
        assert_eq!(accuracy(&c).unwrap(), 0.8);
        assert_eq!(accuracy(&binary(5, 0, 5, 0)).unwrap(), 1.0);
        assert_eq!(accuracy(&binary(0, 5, 0, 5)).unwrap(), 0.0);
        assert_eq!(accuracy(&binary(0, 0, 0, 0)), Err(EvalError::EmptyEvaluation));
    }

    #[test]
    fn f1_examples() {
        let c = binary(8, 2, 0, 2);
        assert_eq!(f1_per_class(&c, 0).unwrap(), 0.8);
        let c = binary(4, 0, 6, 0);
        assert_eq!(f1_per_class(&c, 0).unwrap(), 1.0);
    }

    #[test]
    fn both_f1_forms_agree() {
        // 2 * P * R / (P + R) == TP / (TP + 0.5 (FP + FN)), checked on a
        // sweep of counts.
        for tp in 1..10usize {
            for fp in 0..10usize {
                for fnn in 0..10usize {
                    let c = binary(tp, fp, 30, fnn);
                    let precision = tp as f64 / (tp + fp) as f64;
                    let recall = tp as f64 / (tp + fnn) as f64;
                    let harmonic = 2.0 * precision * recall / (precision + recall);
                    let direct = f1_per_class(&c, 0).unwrap();
                    assert!((harmonic - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn f1_skips_zero_support_classes() {
        let c = ConfusionCounts {
            classes: vec!["a".into(), "b".into(), "ghost".into()],
            matrix: vec![vec![3, 1, 0], vec![1, 5, 0], vec![0, 0, 0]],
        };
        assert!(f1_score(&c).is_ok());
        let empty = ConfusionCounts::new(vec!["a".into()]);
        assert_eq!(f1_score(&empty), Err(EvalError::UndefinedF1));
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&[10.0], &[13.0]).unwrap(), 3.0);
        assert_eq!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(EvalError::LengthMismatch { pred: 1, target: 2 })
        );
    }

    #[test]
    fn histogram_bins_are_left_closed() {
        let h = time_histogram(&[0.0, 29.9], 30.0, false).unwrap();
        assert_eq!(h.counts[0], 2.0);
        assert_eq!(h.counts[1], 0.0);
        let h = time_histogram(&[30.0], 30.0, false).unwrap();
        assert_eq!(h.counts[1], 1.0);
    }

    #[test]
    fn histogram_rejects_out_of_range() {
        assert_eq!(
            time_histogram(&[-1.0], 30.0, false),
            Err(EvalError::OutOfRangeTime(-1.0))
        );
        assert_eq!(
            time_histogram(&[1728.0], 30.0, false),
            Err(EvalError::OutOfRangeTime(1728.0))
        );
    }

    #[test]
    fn normalized_histogram_sums_to_one() {
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 17.0 % 1700.0).collect();
        let h = time_histogram(&times, 30.0, true).unwrap();
        assert!((h.counts.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    fn unit_mass(bin: usize) -> TimeHistogram {
        let mut counts = vec![0.0; 58];
        counts[bin] = 1.0;
        TimeHistogram { bin_width: 30.0, counts, normalized: true }
    }

    #[test]
    fn emd_examples() {
        let a = unit_mass(10);
        assert_eq!(emd(&a, &a).unwrap(), 0.0);
        assert_eq!(emd(&a, &unit_mass(11)).unwrap(), 1.0);

        // Half the mass one bin left, half one bin right, versus centered.
        let mut split = vec![0.0; 58];
        split[9] = 0.5;
        split[11] = 0.5;
        let split = TimeHistogram { bin_width: 30.0, counts: split, normalized: true };
        assert_eq!(emd(&a, &split).unwrap(), 1.0);

        let mut half = vec![0.0; 58];
        half[10] = 0.5;
        half[11] = 0.5;
        let half = TimeHistogram { bin_width: 30.0, counts: half, normalized: true };
        assert_eq!(emd(&a, &half).unwrap(), 0.5);
    }

    #[test]
    fn emd_requires_same_binning() {
        let a = unit_mass(3);
        let b = TimeHistogram { bin_width: 60.0, counts: vec![1.0; 29], normalized: true };
        assert_eq!(emd(&a, &b), Err(EvalError::BinningMismatch));
        let mut c = unit_mass(3);
        c.normalized = false;
        assert_eq!(emd(&a, &c), Err(EvalError::BinningMismatch));
    }

    #[test]
    fn report_csv_has_header_and_rows() {
        let report = EvaluationReport {
            type_table: vec![TypeTableRow {
                group: "Worker".into(),
                variant: "RF".into(),
                split: "train".into(),
                accuracy: Some(0.9),
                f1: Some(0.89),
            }],
            ..Default::default()
        };
        let csv = report.type_table_csv();
        assert!(csv.starts_with("group,variant,split,accuracy,f1\n"));
        assert!(csv.contains("Worker,RF,train,0.9,0.89"));
    }
}

//! Accuracy, macro-precision, and per-class precision reports.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ClassReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub support: usize,
    pub precision: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub per_class: BTreeMap<String, ClassReport>,
}

/// Accuracy plus unweighted mean of per-class precision over every
/// class that appears in either the truth or the predictions. A class
/// that is never predicted has precision 0, which pulls the macro mean
/// down rather than dropping the class.
pub fn classification_metrics(y_true: &[String], y_pred: &[String]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Model(format!(
            "metric inputs misaligned: {} true vs {} predicted",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Model("metric inputs are empty".into()));
    }

    let mut per_class: BTreeMap<String, ClassReport> = BTreeMap::new();
    let mut touch = |name: &str| {
        per_class.entry(name.to_string()).or_insert(ClassReport {
            true_positives: 0,
            false_positives: 0,
            support: 0,
            precision: 0.0,
        });
    };
    for (t, p) in y_true.iter().zip(y_pred) {
        touch(t);
        touch(p);
    }

    let mut correct = 0usize;
    for (t, p) in y_true.iter().zip(y_pred) {
        per_class.get_mut(t).unwrap().support += 1;
        if t == p {
            correct += 1;
            per_class.get_mut(p).unwrap().true_positives += 1;
        } else {
            per_class.get_mut(p).unwrap().false_positives += 1;
        }
    }

    let mut precision_sum = 0.0;
    for report in per_class.values_mut() {
        let predicted = report.true_positives + report.false_positives;
        report.precision = if predicted > 0 {
            report.true_positives as f64 / predicted as f64
        } else {
            0.0
        };
        precision_sum += report.precision;
    }

    Ok(Metrics {
        accuracy: correct as f64 / y_true.len() as f64,
        macro_precision: precision_sum / per_class.len() as f64,
        per_class,
    })
}

/// Call / no-call percentage split of a binary prediction set, where
/// `no_call` marks the negative class.
pub fn binary_report(y_pred: &[String], no_call: &str) -> Result<String> {
    if y_pred.is_empty() {
        return Err(Error::Model("binary report needs predictions".into()));
    }
    let negatives = y_pred.iter().filter(|p| p.as_str() == no_call).count();
    let pct = |n: usize| 100.0 * n as f64 / y_pred.len() as f64;
    Ok(format!(
        "predicted {:.1}% of the samples as having no birdcalls ({no_call}) and {:.1}% as having birdcalls (call)",
        pct(negatives),
        pct(y_pred.len() - negatives)
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(items: &[&str]) -> Vec<String> {
        items.iter().map(|i| i.to_string()).collect()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let y = s(&["a", "b", "c", "a"]);
        let m = classification_metrics(&y, &y).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_precision, 1.0);
        assert_eq!(m.per_class["a"].support, 2);
    }

    #[test]
    fn constant_predictor_on_balanced_binary() {
        let y_true = s(&["a", "a", "b", "b"]);
        let y_pred = s(&["a", "a", "a", "a"]);
        let m = classification_metrics(&y_true, &y_pred).unwrap();
        // accuracy 1/2; precision(a) = 1/2, precision(b) = 0 -> macro 1/4
        assert!((m.accuracy - 0.5).abs() < 1e-12);
        assert!((m.macro_precision - 0.25).abs() < 1e-12);
        assert_eq!(m.per_class["b"].true_positives, 0);
        assert_eq!(m.per_class["b"].precision, 0.0);
    }

    #[test]
    fn classes_only_in_predictions_still_count() {
        let y_true = s(&["a", "a"]);
        let y_pred = s(&["a", "ghost"]);
        let m = classification_metrics(&y_true, &y_pred).unwrap();
        // precision(a)=1, precision(ghost)=0 -> macro 0.5
        assert!((m.macro_precision - 0.5).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(classification_metrics(&s(&["a"]), &s(&["a", "b"])).is_err());
    }

    #[test]
    fn binary_report_format() {
        let mut preds = vec!["no-call".to_string(); 773];
        preds.extend(std::iter::repeat("call".to_string()).take(227));
        let report = binary_report(&preds, "no-call").unwrap();
        assert_eq!(
            report,
            "predicted 77.3% of the samples as having no birdcalls (no-call) and 22.7% as having birdcalls (call)"
        );
    }
}

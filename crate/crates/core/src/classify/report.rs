use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{predict, ClassifyError, LinearModel};
use crate::mesh::MethodTag;

/// Validation and test accuracy at one mesh size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// `None` for methods without a mesh size.
    pub p: Option<usize>,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Option<MethodTag>,
    pub accuracy: f64,
    /// Per class; 0 when the class is never predicted.
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub chosen_p: Option<usize>,
    pub curve: Vec<CurvePoint>,
    /// Mean and sample std of the per-p test accuracies.
    pub curve_mean: Option<f64>,
    pub curve_std: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `p,validation_accuracy,test_accuracy`, one line per mesh size.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("p,validation_accuracy,test_accuracy\n");
        for c in &self.curve {
            let p = c.p.map(|p| p.to_string()).unwrap_or_default();
            out.push_str(&format!("{p},{},{}\n", c.validation_accuracy, c.test_accuracy));
        }
        out
    }
}

/// Scores predictions against ground truth.
pub fn evaluate_predictions(
    predicted: &[usize],
    truth: &[usize],
    n_classes: usize,
) -> Result<EvalReport, ClassifyError> {
    if truth.is_empty() {
        return Err(ClassifyError::EmptySplit);
    }
    if predicted.len() != truth.len() {
        return Err(ClassifyError::LabelCount {
            rows: predicted.len(),
            labels: truth.len(),
        });
    }
    let k = predicted
        .iter()
        .chain(truth)
        .map(|c| c + 1)
        .max()
        .unwrap_or(0)
        .max(n_classes);
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let hits: usize = (0..k).map(|c| confusion[c][c]).sum();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = (0..k)
        .map(|c| ratio(confusion[c][c], (0..k).map(|t| confusion[t][c]).sum()))
        .collect();
    let recall = (0..k)
        .map(|c| ratio(confusion[c][c], confusion[c].iter().sum()))
        .collect();
    Ok(EvalReport {
        method: None,
        accuracy: hits as f64 / truth.len() as f64,
        precision,
        recall,
        confusion,
        chosen_p: None,
        curve: Vec::new(),
        curve_mean: None,
        curve_std: None,
    })
}

pub fn evaluate(
    model: &LinearModel,
    x: ArrayView2<'_, f64>,
    truth: &[usize],
) -> Result<EvalReport, ClassifyError> {
    if x.nrows() == 0 {
        return Err(ClassifyError::EmptySplit);
    }
    let predicted = predict(model, x)?;
    evaluate_predictions(&predicted, truth, model.class_count())
}

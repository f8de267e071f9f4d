//! Classification metrics.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Fraction of points whose thresholded output (`>= threshold` → 1) differs from the label.
pub fn classification_error(outputs: &[f64], labels: &[f64], threshold: f64) -> Result<f64> {
    if outputs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} outputs vs {} labels",
            outputs.len(),
            labels.len()
        )));
    }
    if outputs.is_empty() {
        return Err(Error::InvalidInput("no points to classify".into()));
    }
    let wrong = outputs
        .iter()
        .zip(labels)
        .filter(|(&o, &l)| {
            let predicted = if o >= threshold { 1.0 } else { 0.0 };
            predicted != l
        })
        .count();
    Ok(wrong as f64 / outputs.len() as f64)
}

/// Single-column outputs use the threshold; wider outputs compare argmaxes.
pub fn batch_classification_error(outputs: &Matrix, targets: &Matrix, threshold: f64) -> Result<f64> {
    if outputs.shape() != targets.shape() {
        return Err(Error::Shape(format!(
            "outputs {:?} vs targets {:?}",
            outputs.shape(),
            targets.shape()
        )));
    }
    if outputs.cols() == 1 {
        return classification_error(outputs.data(), targets.data(), threshold);
    }
    if outputs.rows() == 0 {
        return Err(Error::InvalidInput("no points to classify".into()));
    }
    let argmax = |row: &[f64]| {
        row.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    };
    let wrong = (0..outputs.rows())
        .filter(|&r| argmax(outputs.row(r)) != argmax(targets.row(r)))
        .count();
    Ok(wrong as f64 / outputs.rows() as f64)
}

//! Classification scoring with confusion counts.

use serde::{Deserialize, Serialize};

use super::ann::{predict_dataset, AnnModel};
use super::Dataset;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u32>>,
    pub predictions: Vec<usize>,
}

impl Evaluation {
    pub fn from_predictions(
        predictions: Vec<usize>,
        labels: &[usize],
        n_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if predictions.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let n = n_classes
            .max(labels.iter().max().map_or(0, |m| m + 1))
            .max(predictions.iter().max().map_or(0, |m| m + 1));
        let mut confusion = vec![vec![0u32; n]; n];
        let mut correct = 0;
        for (&p, &t) in predictions.iter().zip(labels) {
            confusion[t][p] += 1;
            correct += usize::from(p == t);
        }
        Ok(Self {
            accuracy: correct as f64 / labels.len() as f64,
            correct,
            total: labels.len(),
            confusion,
            predictions,
        })
    }
}

/// Score a per-sample classifier over the first `n` samples of `data`.
pub fn evaluate(
    data: &Dataset,
    n: usize,
    mut classify: impl FnMut(usize, &[f64]) -> Result<usize>,
) -> Result<Evaluation> {
    let n = n.min(data.len());
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut preds = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        preds.push(classify(i, &data.image(i))?);
        labels.push(data.label(i));
    }
    Evaluation::from_predictions(preds, &labels, data.n_classes())
}

pub fn evaluate_ann(model: &AnnModel, data: &Dataset, n: usize) -> Result<Evaluation> {
    let subset = data.take(n);
    if subset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels: Vec<usize> = (0..subset.len()).map(|i| subset.label(i)).collect();
    Evaluation::from_predictions(
        predict_dataset(model, &subset),
        &labels,
        model.sizes[model.sizes.len() - 1],
    )
}

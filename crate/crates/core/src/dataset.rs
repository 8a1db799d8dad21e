use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Labelled samples: one row of `inputs` per label.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} input rows vs {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::input(format!("label {bad} >= {n_classes} classes")));
        }
        Ok(Dataset {
            inputs,
            labels,
            n_classes,
        })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.inputs.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` samples (or all of them if there are fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        self.subset(&idx)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Training and held-out test data.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Dataset,
    pub test: Dataset,
}

impl DataSplit {
    pub fn new(train: Dataset, test: Dataset) -> Result<Self> {
        if train.n_features() != test.n_features() || train.n_classes() != test.n_classes() {
            return Err(Error::shape("train and test sets disagree on shape"));
        }
        Ok(DataSplit { train, test })
    }
}

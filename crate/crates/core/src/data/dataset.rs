use crate::data::Batch;
use crate::error::{Error, Result};
use crate::nn::Shape;
use crate::real::Real;

/// Immutable labelled sample set with features normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    shape: Shape,
    num_classes: usize,
    features: Vec<f32>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        shape: Shape,
        num_classes: usize,
        features: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::input("empty sample shape"));
        }
        if features.len() != labels.len() * shape.len() {
            return Err(Error::input(format!(
                "{} feature values for {} samples of size {}",
                features.len(),
                labels.len(),
                shape.len()
            )));
        }
        if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::input(format!("sample {i} has label {bad}, expected < {num_classes}")));
        }
        Ok(Dataset { name: name.into(), shape, num_classes, features, labels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn sample_len(&self) -> usize {
        self.shape.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.features[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The first `n` samples (all of them if `n` exceeds the size).
    pub fn prefix(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            name: self.name.clone(),
            shape: self.shape,
            num_classes: self.num_classes,
            features: self.features[..n * self.sample_len()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    pub fn batch<T: Real>(&self, indices: &[usize]) -> Result<Batch<T>> {
        let mut inputs = Vec::with_capacity(indices.len() * self.sample_len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::input(format!("sample index {i} out of range")));
            }
            inputs.extend(self.sample(i).iter().map(|&v| T::from_f32(v)));
            labels.push(self.labels[i]);
        }
        Batch::new(inputs, labels, self.sample_len())
    }
}

use rand::seq::SliceRandom;

use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{Purpose, StreamKey};

/// Samples flattened row-major plus their class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    inputs: Vec<T>,
    labels: Vec<usize>,
    sample_len: usize,
}

impl<T: Real> Batch<T> {
    pub fn new(inputs: Vec<T>, labels: Vec<usize>, sample_len: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::input("a batch needs at least one sample"));
        }
        if sample_len == 0 || inputs.len() != labels.len() * sample_len {
            return Err(Error::input(format!(
                "{} input values do not form {} samples of width {sample_len}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Batch { inputs, labels, sample_len })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.sample_len
    }

    pub fn sample(&self, i: usize) -> &[T] {
        &self.inputs[i * self.sample_len..(i + 1) * self.sample_len]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> &[T] {
        &self.inputs
    }

    pub fn cast<U: Real>(&self) -> Batch<U> {
        Batch {
            inputs: self.inputs.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            labels: self.labels.clone(),
            sample_len: self.sample_len,
        }
    }
}

/// Shuffled split of a partition into batches of `batch_size`; the last batch
/// may be short. The order is keyed by `(seed, client, round, iteration)`.
pub fn batch_indices(
    partition: &Partition,
    batch_size: usize,
    seed: u64,
    round: u64,
    iteration: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::input("batch size must be at least 1"));
    }
    if partition.is_empty() {
        return Err(Error::input(format!("client {} has no samples", partition.client_id)));
    }
    let mut order = partition.sample_indices.clone();
    let mut rng =
        StreamKey::new(seed, Purpose::Batches).client(partition.client_id as u64).round(round).step(iteration).rng();
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Materialized batches for one local pass over a partition.
pub fn make_batches<T: Real>(
    dataset: &Dataset,
    partition: &Partition,
    batch_size: usize,
    seed: u64,
    round: u64,
    iteration: u64,
) -> Result<Vec<Batch<T>>> {
    batch_indices(partition, batch_size, seed, round, iteration)?.iter().map(|idx| dataset.batch(idx)).collect()
}

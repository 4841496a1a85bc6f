//! Datasets, IDX ingestion, client partitioning and batching.

mod batch;
mod dataset;
pub mod idx;
pub mod mnist;
mod partition;
mod synth;

pub use batch::{batch_indices, make_batches, Batch};
pub use dataset::Dataset;
pub use partition::{partition_iid, partition_label_shards, Partition};
pub use synth::{synth_dataset, synth_train_test, SynthParams};

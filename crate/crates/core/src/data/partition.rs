use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey};

/// The sample indices one client owns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub client_id: usize,
    pub sample_indices: Vec<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_indices.is_empty()
    }

    pub fn distinct_labels(&self, dataset: &Dataset) -> usize {
        let mut seen = vec![false; dataset.num_classes()];
        for &i in &self.sample_indices {
            seen[dataset.label(i)] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }
}

/// Seeded shuffle followed by a near-equal split; client `k < n mod K` gets one
/// extra sample.
pub fn partition_iid(dataset: &Dataset, num_clients: usize, seed: u64) -> Result<Vec<Partition>> {
    if num_clients == 0 {
        return Err(Error::input("need at least one client"));
    }
    if num_clients > dataset.len() {
        return Err(Error::input(format!("{num_clients} clients for {} samples", dataset.len())));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut StreamKey::new(seed, Purpose::IidShuffle).rng());
    let (base, extra) = (dataset.len() / num_clients, dataset.len() % num_clients);
    let mut start = 0;
    Ok((0..num_clients)
        .map(|client_id| {
            let size = base + usize::from(client_id < extra);
            let part = Partition { client_id, sample_indices: order[start..start + size].to_vec() };
            start += size;
            part
        })
        .collect())
}

/// Label-skewed split: sort by label, cut into `num_clients · shards_per_client`
/// contiguous shards (dropping a trailing remainder shorter than one shard),
/// then deal shards to clients through a seeded permutation.
pub fn partition_label_shards(
    dataset: &Dataset,
    num_clients: usize,
    shards_per_client: usize,
    seed: u64,
) -> Result<Vec<Partition>> {
    if num_clients == 0 || shards_per_client == 0 {
        return Err(Error::input("need at least one client and one shard per client"));
    }
    let num_shards = num_clients * shards_per_client;
    if num_shards > dataset.len() {
        return Err(Error::input(format!("{num_shards} shards for {} samples", dataset.len())));
    }
    let shard_size = dataset.len() / num_shards;
    let mut sorted: Vec<usize> = (0..dataset.len()).collect();
    sorted.sort_by_key(|&i| dataset.label(i));
    let mut deal: Vec<usize> = (0..num_shards).collect();
    deal.shuffle(&mut StreamKey::new(seed, Purpose::ShardDeal).rng());
    Ok(deal
        .chunks(shards_per_client)
        .enumerate()
        .map(|(client_id, shards)| Partition {
            client_id,
            sample_indices: shards
                .iter()
                .flat_map(|&s| sorted[s * shard_size..(s + 1) * shard_size].iter().copied())
                .collect(),
        })
        .collect())
}

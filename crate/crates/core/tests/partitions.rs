use std::collections::BTreeSet;

use flsim_core::data::{partition_iid, partition_label_shards};
use flsim_core::{Dataset, Partition, Shape};
use proptest::prelude::*;

/// MNIST-sized label layout: 60,000 samples, classes interleaved unevenly.
fn mnist_like() -> Dataset {
    let n = 60_000;
    let labels: Vec<usize> = (0..n).map(|i| (i * 7 + i / 13) % 10).collect();
    Dataset::new("labels-only", Shape::flat(1), 10, vec![0.0; n], labels).unwrap()
}

fn check_disjoint(parts: &[Partition], n: usize) -> usize {
    let mut seen = BTreeSet::new();
    for p in parts {
        for &i in &p.sample_indices {
            assert!(i < n);
            assert!(seen.insert(i), "sample {i} assigned twice");
        }
    }
    seen.len()
}

#[test]
fn label_shards_on_mnist_sized_input() {
    let data = mnist_like();
    let parts = partition_label_shards(&data, 100, 2, 4).unwrap();
    assert_eq!(parts.len(), 100);
    assert!(parts.iter().all(|p| p.len() == 600));
    assert_eq!(check_disjoint(&parts, data.len()), 60_000);
    let narrow = parts.iter().filter(|p| p.distinct_labels(&data) <= 2).count();
    assert!(narrow >= 90, "{narrow} clients with at most two labels");
}

#[test]
fn iid_covers_everything() {
    let data = mnist_like();
    let parts = partition_iid(&data, 100, 4).unwrap();
    assert_eq!(check_disjoint(&parts, data.len()), 60_000);
    assert!(parts.iter().all(|p| p.len() == 600));
    let wide = parts.iter().filter(|p| p.distinct_labels(&data) == 10).count();
    assert_eq!(wide, 100);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partitions_are_disjoint(n in 20usize..400, k in 1usize..10, spc in 1usize..3, seed in any::<u64>()) {
        prop_assume!(k * spc <= n);
        let labels: Vec<usize> = (0..n).map(|i| (i * 31 + seed as usize) % 10).collect();
        let data = Dataset::new("p", Shape::flat(1), 10, vec![0.0; n], labels).unwrap();
        let iid = partition_iid(&data, k, seed).unwrap();
        prop_assert_eq!(check_disjoint(&iid, n), n);
        let sizes: Vec<usize> = iid.iter().map(Partition::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);

        let shards = partition_label_shards(&data, k, spc, seed).unwrap();
        let shard = n / (k * spc);
        prop_assert_eq!(check_disjoint(&shards, n), shard * k * spc);
        prop_assert!(shards.iter().all(|p| p.len() == shard * spc));
        prop_assert_eq!(&shards, &partition_label_shards(&data, k, spc, seed).unwrap());
    }
}

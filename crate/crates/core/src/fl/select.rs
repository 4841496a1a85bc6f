use rand::seq::index;

use crate::rng::{Purpose, StreamKey};

/// The ascending ids of the `max(round(C·K), 1)` clients taking part in `round`.
pub fn select_clients(num_clients: usize, participation: f64, seed: u64, round: u64) -> Vec<usize> {
    let m = ((participation * num_clients as f64).round() as usize).clamp(1, num_clients);
    if m == num_clients {
        return (0..num_clients).collect();
    }
    let mut rng = StreamKey::new(seed, Purpose::Selection).round(round).rng();
    let mut ids = index::sample(&mut rng, num_clients, m).into_vec();
    ids.sort_unstable();
    ids
}

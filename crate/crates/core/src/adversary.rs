//! Byzantine clients and the corruptions they apply to their uploads.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamVector;
use crate::real::Real;
use crate::rng::{Purpose, StreamKey};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    AdditiveNoise,
    SignFlip,
}

/// Which clients are malicious and what they do. The attacker set is drawn
/// once and stays fixed for the whole run.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackPlan {
    pub kind: AttackKind,
    pub fraction: f64,
    pub sigma: f64,
    pub attacker_ids: BTreeSet<usize>,
}

impl AttackPlan {
    pub fn none() -> Self {
        AttackPlan { kind: AttackKind::None, fraction: 0.0, sigma: 0.0, attacker_ids: BTreeSet::new() }
    }

    pub fn new(kind: AttackKind, fraction: f64, sigma: f64, num_clients: usize, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::input("noise sigma must be finite and non-negative"));
        }
        let attacker_ids = match kind {
            AttackKind::None => BTreeSet::new(),
            _ => assign_attackers(num_clients, fraction, seed)?,
        };
        Ok(AttackPlan { kind, fraction, sigma, attacker_ids })
    }

    pub fn is_attacker(&self, client: usize) -> bool {
        self.kind != AttackKind::None && self.attacker_ids.contains(&client)
    }

    /// The payload a client actually uploads. Honest clients' payloads pass
    /// through untouched.
    pub fn apply<T: Real>(&self, payload: ParamVector<T>, seed: u64, round: u64, client: usize) -> ParamVector<T> {
        if !self.is_attacker(client) {
            return payload;
        }
        match self.kind {
            AttackKind::None => payload,
            AttackKind::SignFlip => attack_sign_flip(&payload),
            AttackKind::AdditiveNoise => {
                let key = StreamKey::new(seed, Purpose::Noise).round(round).client(client as u64);
                attack_additive_noise(&payload, self.sigma, key)
            }
        }
    }
}

/// Seeded uniform choice of `round(fraction · K)` client ids: the first ids
/// of one seeded permutation of all clients, so for a fixed seed a smaller
/// fraction's attacker set is contained in a larger one's.
pub fn assign_attackers(num_clients: usize, fraction: f64, seed: u64) -> Result<BTreeSet<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::input(format!("attacker fraction {fraction} outside [0, 1]")));
    }
    let count = (fraction * num_clients as f64).round() as usize;
    let mut order: Vec<usize> = (0..num_clients).collect();
    order.shuffle(&mut StreamKey::new(seed, Purpose::Attackers).rng());
    Ok(order.into_iter().take(count).collect())
}

/// Adds i.i.d. zero-mean Gaussian noise of std `sigma` to every coordinate.
pub fn attack_additive_noise<T: Real>(payload: &ParamVector<T>, sigma: f64, key: StreamKey) -> ParamVector<T> {
    let mut out = payload.clone();
    if sigma == 0.0 {
        return out;
    }
    let mut rng = key.rng();
    for v in out.values_mut() {
        let noise: f64 = rng.sample(StandardNormal);
        *v += T::from_f64(sigma * noise);
    }
    out
}

/// Negates every coordinate.
pub fn attack_sign_flip<T: Real>(payload: &ParamVector<T>) -> ParamVector<T> {
    let mut out = payload.clone();
    for v in out.values_mut() {
        *v = -*v;
    }
    out
}

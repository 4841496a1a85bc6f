use std::sync::Arc;

use crate::adversary::AttackPlan;
use crate::data::Partition;
use crate::error::{Error, Result};
use crate::fl::{InitMode, Scheme};
use crate::nn::{init_params, InitScheme, ModelSpec, ParamVector, PayloadKind};
use crate::real::Real;
use crate::rng::{Purpose, StreamKey};

/// One client's persistent state. `local_model` holds `w_{t-1}^k` between
/// rounds. Random streams are keyed by `client_id`.
#[derive(Clone, Debug)]
pub struct ClientState<T> {
    pub client_id: usize,
    pub local_model: ParamVector<T>,
    pub partition: Partition,
    pub malicious: bool,
}

/// Server-side state. `broadcast` is `w_t` (a model) under MB and `u_t` (an
/// update) under MUB. It is `None` only before the first MB round with
/// client-side initialization, when no global model exists yet.
#[derive(Clone, Debug)]
pub struct ServerState<T> {
    pub scheme: Scheme,
    pub init_mode: InitMode,
    pub broadcast: Option<ParamVector<T>>,
    /// `w_1 + Σ u`, maintained incrementally for MUB with a server-drawn `w_1`.
    pub accumulated_global: Option<ParamVector<T>>,
    /// The shared `w_1`, when there is one.
    pub initial_model: Option<ParamVector<T>>,
    /// The round about to run, starting at 1.
    pub round: u64,
}

impl<T: Real> ServerState<T> {
    pub fn expected_broadcast_kind(&self) -> PayloadKind {
        match self.scheme {
            Scheme::Mb => PayloadKind::Model,
            Scheme::Mub => PayloadKind::Update,
        }
    }
}

/// Builds round-1 server and client state.
///
/// With server initialization every client starts from the same `w_1`; with
/// ICMI client `k` draws its own model from the stream `(seed, icmi, k)`. Under
/// MUB the first broadcast is the zero update `u_1 = 0`.
pub fn initialize<T: Real>(
    spec: &Arc<ModelSpec>,
    scheme: Scheme,
    init_mode: InitMode,
    partitions: Vec<Partition>,
    attack: &AttackPlan,
    seed: u64,
) -> Result<(ServerState<T>, Vec<ClientState<T>>)> {
    if partitions.is_empty() {
        return Err(Error::input("no clients"));
    }
    for (k, p) in partitions.iter().enumerate() {
        if p.client_id != k {
            return Err(Error::input(format!("partition {k} belongs to client {}", p.client_id)));
        }
    }
    let initial_model = match init_mode {
        InitMode::Server => {
            let seed = StreamKey::new(seed, Purpose::ServerInit).derive_seed();
            Some(init_params::<T>(spec, seed, InitScheme::Glorot))
        }
        InitMode::Icmi => None,
    };
    let clients = partitions
        .into_iter()
        .map(|partition| {
            let k = partition.client_id;
            let local_model = match &initial_model {
                Some(w1) => w1.clone(),
                None => {
                    let seed = StreamKey::new(seed, Purpose::ClientInit).client(k as u64).derive_seed();
                    init_params(spec, seed, InitScheme::Glorot)
                }
            };
            ClientState { client_id: k, local_model, partition, malicious: attack.is_attacker(k) }
        })
        .collect();
    let (broadcast, accumulated_global) = match scheme {
        Scheme::Mb => (initial_model.clone(), None),
        Scheme::Mub => (Some(ParamVector::zeros(PayloadKind::Update, Arc::clone(spec))), initial_model.clone()),
    };
    let server = ServerState { scheme, init_mode, broadcast, accumulated_global, initial_model, round: 1 };
    Ok((server, clients))
}

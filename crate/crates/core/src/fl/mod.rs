//! The federated protocol: client and server state, local rounds, client
//! selection, weighted aggregation and round orchestration.
//!
//! Under MB the server broadcasts a model `w_t` and clients upload their
//! trained models. Under MUB the server broadcasts the aggregated update `u_t`;
//! each client adds it to the model it kept from the previous round, trains,
//! and uploads only the difference between its post- and pre-training models.

mod aggregate;
mod local;
mod round;
mod select;
mod state;

use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate, aggregation_weights};
pub use local::LocalTrainer;
pub use round::{run_round, RoundContext, RoundReport};
pub use select::select_clients;
pub use state::{initialize, ClientState, ServerState};

use crate::error::{Error, Result};

/// What clients upload and the server aggregates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Model-based: clients upload `w_t^k`.
    #[default]
    Mb,
    /// Model-update-based: clients upload `u_t^k = w_t^k − w_t^{k'}`.
    Mub,
}

/// Where the initial model comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// The server draws one `w_1` shared by every client.
    #[default]
    Server,
    /// Each client draws its own initial model (ICMI).
    Icmi,
}

/// Learning and participation hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyper {
    pub eta: f64,
    pub batch_size: usize,
    pub local_iters: usize,
    pub participation: f64,
    pub num_clients: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { eta: 0.01, batch_size: 5, local_iters: 2, participation: 1.0, num_clients: 100 }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::input("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.local_iters == 0 || self.num_clients == 0 {
            return Err(Error::input("batch size, local iterations and client count must be at least 1"));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::input("participation must be in (0, 1]"));
        }
        Ok(())
    }
}

//! Deterministic federated-learning simulator.
//!
//! The crate implements classical model-based federated averaging (MB) and the
//! model-update-based variant (MUB), with either a server-drawn initial model or
//! individual client model initialization (ICMI). Byzantine clients can corrupt
//! their uploads with additive Gaussian noise or sign flipping.
//!
//! Every source of randomness is a keyed [`rng::StreamKey`], so a run is a pure
//! function of its configuration regardless of thread count.

pub mod adversary;
pub mod data;
pub mod error;
pub mod fl;
pub mod metrics;
pub mod nn;
pub mod real;
pub mod rng;

pub use adversary::{AttackKind, AttackPlan};
pub use data::{Batch, Dataset, Partition};
pub use error::{Error, Result};
pub use fl::{ClientState, Hyper, InitMode, Scheme, ServerState};
pub use metrics::RoundRecord;
pub use nn::{InitScheme, Layer, ModelKind, ModelSpec, ParamVector, PayloadKind, Shape};
pub use real::{Precision, Real};

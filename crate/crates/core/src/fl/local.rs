use std::ops::Range;

use crate::data::{batch_indices, Dataset, Partition};
use crate::error::{Error, Result};
use crate::fl::{ClientState, Hyper};
use crate::nn::{loss_and_grad_into, sgd_step_in_place, ModelSpec, ParamVector, PayloadKind};
use crate::real::Real;

/// Runs clients' local learning against their partitions of a shared dataset.
#[derive(Clone, Copy, Debug)]
pub struct LocalTrainer<'a> {
    pub spec: &'a ModelSpec,
    pub data: &'a Dataset,
    pub hyper: &'a Hyper,
    pub seed: u64,
}

impl<'a> LocalTrainer<'a> {
    pub fn new(spec: &'a ModelSpec, data: &'a Dataset, hyper: &'a Hyper, seed: u64) -> Self {
        LocalTrainer { spec, data, hyper, seed }
    }

    /// Local passes `iterations` of `round`: each pass shuffles the partition
    /// into batches (keyed by the pass index) and takes one SGD step per batch.
    pub fn train<T: Real>(
        &self,
        mut model: ParamVector<T>,
        partition: &Partition,
        round: u64,
        iterations: Range<u64>,
    ) -> Result<ParamVector<T>> {
        let eta = T::from_f64(self.hyper.eta);
        let mut grad = ParamVector::zeros(PayloadKind::Update, model.layout().clone());
        for j in iterations {
            for idx in batch_indices(partition, self.hyper.batch_size, self.seed, round, j)? {
                let batch = self.data.batch::<T>(&idx)?;
                loss_and_grad_into(self.spec, &model, &batch, &mut grad)?;
                sgd_step_in_place(&mut model, &grad, eta)?;
            }
        }
        Ok(model)
    }

    fn full_round<T: Real>(&self, start: ParamVector<T>, partition: &Partition, round: u64) -> Result<ParamVector<T>> {
        self.train(start, partition, round, 0..self.hyper.local_iters as u64)
    }

    /// MB local round: start from the broadcast `w_t`, run `N` passes, keep and
    /// return the resulting `w_t^k`.
    pub fn local_round_mb<T: Real>(
        &self,
        client: &mut ClientState<T>,
        w_t: &ParamVector<T>,
        round: u64,
    ) -> Result<ParamVector<T>> {
        if w_t.kind() != PayloadKind::Model {
            return Err(Error::Contract("MB clients receive a model".into()));
        }
        client.local_model.check_compatible(w_t)?;
        let trained = self.full_round(w_t.clone(), &client.partition, round)?;
        client.local_model = trained.clone();
        Ok(trained)
    }

    /// MUB local round: `w_t^{k'} = w_{t-1}^k + u_t`, `N` passes from there, and
    /// the upload `u_t^k = w_t^k(N) − w_t^{k'}`. The client keeps `w_t^k(N)`.
    pub fn local_round_mub<T: Real>(
        &self,
        client: &mut ClientState<T>,
        u_t: &ParamVector<T>,
        round: u64,
    ) -> Result<ParamVector<T>> {
        let mut pre = client.local_model.clone();
        apply_broadcast_update(&mut pre, u_t)?;
        let post = self.full_round(pre.clone(), &client.partition, round)?;
        let update = post.difference(&pre)?;
        client.local_model = post;
        Ok(update)
    }
}

/// `w ← w + u_t` for a received global update.
pub(crate) fn apply_broadcast_update<T: Real>(model: &mut ParamVector<T>, u_t: &ParamVector<T>) -> Result<()> {
    if u_t.kind() != PayloadKind::Update {
        return Err(Error::Contract("MUB clients receive an update".into()));
    }
    model.add_assign_update(u_t)
}

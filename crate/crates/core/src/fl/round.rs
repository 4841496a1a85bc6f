use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::adversary::AttackPlan;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fl::local::apply_broadcast_update;
use crate::fl::{aggregate, select_clients, ClientState, Hyper, LocalTrainer, Scheme, ServerState};
use crate::metrics::{evaluate, reconstruct_global, RoundRecord};
use crate::nn::{ModelSpec, ParamVector, PayloadKind};
use crate::real::Real;

/// Everything a round needs besides the mutable protocol state.
#[derive(Clone, Copy, Debug)]
pub struct RoundContext<'a> {
    pub spec: &'a Arc<ModelSpec>,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub hyper: &'a Hyper,
    pub seed: u64,
    pub eval_batch: usize,
    /// Record wall-clock time; when false `wallclock_ms` is always 0.
    pub timing: bool,
}

/// What happened in one round, beyond the metrics row.
#[derive(Clone, Debug)]
pub struct RoundReport<T> {
    pub record: RoundRecord,
    /// Participating client ids, ascending.
    pub selected: Vec<usize>,
    /// Payloads as the server received them (after any attack), in `selected` order.
    pub uploads: Vec<ParamVector<T>>,
    /// Each participant's honest change `w_t^k − (model before local learning)`.
    pub local_updates: Vec<ParamVector<T>>,
    /// The aggregate the server computed: the new `w_{t+1}` under MB, `u_{t+1}` under MUB.
    pub aggregate: ParamVector<T>,
}

struct Outcome<T> {
    upload: ParamVector<T>,
    local_update: ParamVector<T>,
    model_norm: f64,
}

/// Executes round `server.round`: selection, broadcast, local learning,
/// adversarial corruption of uploads, aggregation over the participants and
/// evaluation of the resulting global model.
///
/// Client work runs on the current rayon pool; the aggregation reduces in
/// ascending client order, so results do not depend on the thread count.
pub fn run_round<T: Real>(
    server: &mut ServerState<T>,
    clients: &mut [ClientState<T>],
    ctx: &RoundContext<'_>,
    attack: &AttackPlan,
) -> Result<RoundReport<T>> {
    let started = Instant::now();
    let t = server.round;
    let hyper = ctx.hyper;
    if clients.len() != hyper.num_clients {
        return Err(Error::input(format!("{} clients but K = {}", clients.len(), hyper.num_clients)));
    }
    if let Some(b) = &server.broadcast {
        if b.kind() != server.expected_broadcast_kind() {
            return Err(Error::Contract("broadcast kind does not match the scheme".into()));
        }
    }
    let selected = select_clients(hyper.num_clients, hyper.participation, ctx.seed, t);
    let mut is_selected = vec![false; clients.len()];
    for &k in &selected {
        is_selected[k] = true;
    }
    let trainer = LocalTrainer::new(ctx.spec, ctx.train, hyper, ctx.seed);
    let scheme = server.scheme;
    let broadcast = server.broadcast.as_ref();

    let outcomes: Vec<Option<Outcome<T>>> = clients
        .par_iter_mut()
        .map(|client| -> Result<Option<Outcome<T>>> {
            let k = client.client_id;
            match scheme {
                Scheme::Mb => {
                    if !is_selected[k] {
                        return Ok(None);
                    }
                    // Before any aggregate exists (client-side init), clients
                    // start from their own models.
                    let start = broadcast.cloned().unwrap_or_else(|| client.local_model.clone());
                    let model = trainer.local_round_mb(client, &start, t)?;
                    let local_update = model.difference(&start)?;
                    let model_norm = model.l2_norm();
                    let upload = attack.apply(model, ctx.seed, t, k);
                    Ok(Some(Outcome { upload, local_update, model_norm }))
                }
                Scheme::Mub => {
                    let u_t = broadcast.ok_or_else(|| Error::Contract("MUB server has no update".into()))?;
                    if !is_selected[k] {
                        apply_broadcast_update(&mut client.local_model, u_t)?;
                        return Ok(None);
                    }
                    let update = trainer.local_round_mub(client, u_t, t)?;
                    let model_norm = client.local_model.l2_norm();
                    let upload = attack.apply(update.clone(), ctx.seed, t, k);
                    Ok(Some(Outcome { upload, local_update: update, model_norm }))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let outcomes: Vec<Outcome<T>> = outcomes.into_iter().flatten().collect();
    let sizes: Vec<usize> = selected.iter().map(|&k| clients[k].partition.len()).collect();
    let uploads: Vec<ParamVector<T>> = outcomes.iter().map(|o| o.upload.clone()).collect();

    let aggregate = match scheme {
        Scheme::Mub => {
            let u_next = aggregate(&uploads, &sizes)?;
            if let Some(acc) = server.accumulated_global.as_mut() {
                acc.add_assign_update(&u_next)?;
            }
            u_next
        }
        Scheme::Mb => match broadcast {
            // w_t + Σ p_k (w_t^k − w_t): the same weighted mean as Σ p_k w_t^k,
            // reduced over differences so that MB and MUB share one rounding path.
            Some(w_t) => {
                let deltas = uploads.iter().map(|w| w.difference(w_t)).collect::<Result<Vec<_>>>()?;
                let mut w_next = w_t.clone();
                w_next.add_assign_update(&aggregate(&deltas, &sizes)?)?;
                w_next
            }
            None => aggregate(&uploads, &sizes)?.with_kind(PayloadKind::Model),
        },
    };
    if !aggregate.is_finite() {
        return Err(Error::NonFinite(format!("aggregation in round {t}")));
    }
    server.broadcast = Some(aggregate.clone());
    server.round = t + 1;

    let global = reconstruct_global(server, clients)?;
    let (test_accuracy, test_loss) = evaluate(ctx.spec, &global, ctx.test, ctx.eval_batch)?;
    let n = outcomes.len() as f64;
    let record = RoundRecord {
        round: t,
        test_accuracy,
        test_loss,
        mean_update_norm: outcomes.iter().map(|o| o.local_update.l2_norm()).sum::<f64>() / n,
        mean_model_norm: outcomes.iter().map(|o| o.model_norm).sum::<f64>() / n,
        wallclock_ms: if ctx.timing { started.elapsed().as_millis() as u64 } else { 0 },
    };
    let local_updates = outcomes.into_iter().map(|o| o.local_update).collect();
    Ok(RoundReport { record, selected, uploads, local_updates, aggregate })
}

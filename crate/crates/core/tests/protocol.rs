use std::sync::Arc;

use flsim_core::adversary::attack_additive_noise;
use flsim_core::data::{batch_indices, partition_iid, synth_dataset};
use flsim_core::fl::{initialize, run_round, LocalTrainer, RoundContext};
use flsim_core::metrics::evaluate;
use flsim_core::nn::{loss_and_grad, sgd_step};
use flsim_core::rng::{Purpose, StreamKey};
use flsim_core::{
    AttackKind, AttackPlan, ClientState, Dataset, Hyper, InitMode, ModelSpec, ParamVector, Partition, PayloadKind,
    Scheme, ServerState,
};

struct Setup {
    spec: Arc<ModelSpec>,
    train: Dataset,
    test: Dataset,
    hyper: Hyper,
}

fn setup(clients: usize, batch_size: usize, local_iters: usize) -> Setup {
    let train = synth_dataset(4, 12, 6, 5.0, 11).unwrap();
    let test = synth_dataset(4, 5, 6, 5.0, 12).unwrap();
    let spec = Arc::new(ModelSpec::mlp(6, &[5], 4).unwrap());
    let hyper = Hyper { eta: 0.1, batch_size, local_iters, participation: 1.0, num_clients: clients };
    Setup { spec, train, test, hyper }
}

fn ctx(s: &Setup) -> RoundContext<'_> {
    RoundContext {
        spec: &s.spec,
        train: &s.train,
        test: &s.test,
        hyper: &s.hyper,
        seed: 5,
        eval_batch: 7,
        timing: false,
    }
}

fn state(s: &Setup, scheme: Scheme, init: InitMode, attack: &AttackPlan) -> (ServerState<f64>, Vec<ClientState<f64>>) {
    let parts = partition_iid(&s.train, s.hyper.num_clients, 5).unwrap();
    initialize::<f64>(&s.spec, scheme, init, parts, attack, 5).unwrap()
}

fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= rel * y.abs().max(1.0))
}

#[test]
fn single_full_batch_step_is_one_gradient_step() {
    let s = setup(3, 1000, 1);
    let (server, mut clients) = state(&s, Scheme::Mb, InitMode::Server, &AttackPlan::none());
    let w = server.broadcast.clone().unwrap();
    let client = &mut clients[1];
    let part = client.partition.clone();
    let trainer = LocalTrainer::new(&s.spec, &s.train, &s.hyper, 5);
    let got = trainer.local_round_mb(client, &w, 1).unwrap();
    let batch = s.train.batch::<f64>(&part.sample_indices).unwrap();
    let g = loss_and_grad(&s.spec, &w, &batch).unwrap().grad;
    let want: Vec<f64> = w.values().iter().zip(g.values()).map(|(w, g)| w - 0.1 * g).collect();
    assert!(close(got.values(), &want, 1e-12));
    assert_eq!(client.local_model, got);
}

#[test]
fn local_round_matches_explicit_batch_schedule() {
    let s = setup(2, 5, 2);
    let (server, mut clients) = state(&s, Scheme::Mb, InitMode::Server, &AttackPlan::none());
    let w = server.broadcast.clone().unwrap();
    let part = clients[0].partition.clone();
    let trainer = LocalTrainer::new(&s.spec, &s.train, &s.hyper, 5);
    let got = trainer.local_round_mb(&mut clients[0], &w, 3).unwrap();

    let mut manual = w.clone();
    for j in 0..2 {
        for idx in batch_indices(&part, 5, 5, 3, j).unwrap() {
            let b = s.train.batch::<f64>(&idx).unwrap();
            manual = sgd_step(&manual, &loss_and_grad(&s.spec, &manual, &b).unwrap().grad, 0.1).unwrap();
        }
    }
    assert_eq!(got, manual);

    let once = trainer.train(w.clone(), &part, 3, 0..1).unwrap();
    let twice = trainer.train(once, &part, 3, 1..2).unwrap();
    assert_eq!(got, twice);
}

#[test]
fn mub_first_round_update_is_mb_model_minus_w1() {
    let s = setup(3, 4, 2);
    let (mb_server, mut mb_clients) = state(&s, Scheme::Mb, InitMode::Server, &AttackPlan::none());
    let (mub_server, mut mub_clients) = state(&s, Scheme::Mub, InitMode::Server, &AttackPlan::none());
    let trainer = LocalTrainer::new(&s.spec, &s.train, &s.hyper, 5);
    let w1 = mb_server.broadcast.clone().unwrap();
    let u1 = mub_server.broadcast.clone().unwrap();
    for k in 0..3 {
        let before = mub_clients[k].local_model.clone();
        let mb = trainer.local_round_mb(&mut mb_clients[k], &w1, 1).unwrap();
        let u = trainer.local_round_mub(&mut mub_clients[k], &u1, 1).unwrap();
        assert_eq!(u.kind(), PayloadKind::Update);
        assert_eq!(u, mb.difference(&w1).unwrap());
        // Definition: post-learning minus (pre + u_t).
        let mut pre = before;
        pre.values_mut().iter_mut().zip(u1.values()).for_each(|(p, d)| *p += d);
        assert_eq!(u, mub_clients[k].local_model.difference(&pre).unwrap());
    }
}

#[test]
fn one_step_update_is_negative_scaled_gradient() {
    let s = setup(2, 1000, 1);
    let (server, mut clients) = state(&s, Scheme::Mub, InitMode::Server, &AttackPlan::none());
    let trainer = LocalTrainer::new(&s.spec, &s.train, &s.hyper, 5);
    let w = clients[0].local_model.clone();
    let batch = s.train.batch::<f64>(&clients[0].partition.sample_indices).unwrap();
    let g = loss_and_grad(&s.spec, &w, &batch).unwrap().grad;
    let u = trainer.local_round_mub(&mut clients[0], server.broadcast.as_ref().unwrap(), 1).unwrap();
    let want: Vec<f64> = g.values().iter().map(|g| -0.1 * g).collect();
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = u.values().iter().zip(&want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err <= 1e-12 * scale, "{err:e}");
}

#[test]
fn mb_round_matches_hand_composition() {
    // Unequal partition sizes make the weights non-trivial.
    let s = setup(3, 1000, 1);
    let sizes = [5usize, 13, 30];
    let mut start = 0;
    let parts: Vec<Partition> = sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let p = Partition { client_id: k, sample_indices: (start..start + n).collect() };
            start += n;
            p
        })
        .collect();
    let (mut server, mut clients) =
        initialize::<f64>(&s.spec, Scheme::Mb, InitMode::Server, parts.clone(), &AttackPlan::none(), 5).unwrap();
    let w = server.broadcast.clone().unwrap();
    let report = run_round(&mut server, &mut clients, &ctx(&s), &AttackPlan::none()).unwrap();

    let total: usize = sizes.iter().sum();
    let mut want = vec![0.0; w.len()];
    for (p, &n) in parts.iter().zip(&sizes) {
        let b = s.train.batch::<f64>(&p.sample_indices).unwrap();
        let g = loss_and_grad(&s.spec, &w, &b).unwrap().grad;
        for ((acc, wv), gv) in want.iter_mut().zip(w.values()).zip(g.values()) {
            *acc += n as f64 / total as f64 * (wv - 0.1 * gv);
        }
    }
    assert!(close(server.broadcast.as_ref().unwrap().values(), &want, 1e-12));
    assert_eq!(report.record.round, 1);
    assert_eq!(server.round, 2);
    assert_eq!(report.selected, vec![0, 1, 2]);
}

#[test]
fn all_sign_flippers_negate_the_mub_aggregate() {
    let s = setup(4, 4, 2);
    let flip = AttackPlan::new(AttackKind::SignFlip, 1.0, 0.0, 4, 5).unwrap();
    let (mut honest_server, mut honest_clients) = state(&s, Scheme::Mub, InitMode::Server, &AttackPlan::none());
    let (mut bad_server, mut bad_clients) = state(&s, Scheme::Mub, InitMode::Server, &flip);
    let a = run_round(&mut honest_server, &mut honest_clients, &ctx(&s), &AttackPlan::none()).unwrap();
    let b = run_round(&mut bad_server, &mut bad_clients, &ctx(&s), &flip).unwrap();
    let negated: Vec<f64> = a.aggregate.values().iter().map(|v| -v).collect();
    assert_eq!(b.aggregate.values(), &negated[..]);
}

#[test]
fn honest_uploads_pass_through_and_attackers_flip() {
    let s = setup(6, 4, 1);
    let plan = AttackPlan::new(AttackKind::SignFlip, 0.5, 0.0, 6, 9).unwrap();
    let (mut server, mut clients) = state(&s, Scheme::Mub, InitMode::Server, &plan);
    assert_eq!(clients.iter().filter(|c| c.malicious).count(), 3);
    let r = run_round(&mut server, &mut clients, &ctx(&s), &plan).unwrap();
    for (i, &k) in r.selected.iter().enumerate() {
        if plan.is_attacker(k) {
            let neg: Vec<f64> = r.local_updates[i].values().iter().map(|v| -v).collect();
            assert_eq!(r.uploads[i].values(), &neg[..]);
        } else {
            assert_eq!(r.uploads[i], r.local_updates[i]);
        }
    }
}

#[test]
fn round_one_mb_and_mub_global_models_bitwise_equal() {
    let s = setup(5, 3, 2);
    let (mut mb, mut mb_clients) = state(&s, Scheme::Mb, InitMode::Server, &AttackPlan::none());
    let (mut mub, mut mub_clients) = state(&s, Scheme::Mub, InitMode::Server, &AttackPlan::none());
    let a = run_round(&mut mb, &mut mb_clients, &ctx(&s), &AttackPlan::none()).unwrap();
    let b = run_round(&mut mub, &mut mub_clients, &ctx(&s), &AttackPlan::none()).unwrap();
    assert_eq!(mb.broadcast.as_ref().unwrap().values(), mub.accumulated_global.as_ref().unwrap().values());
    assert_eq!(a.record, b.record);
}

#[test]
fn mub_accumulated_global_matches_history_for_twenty_rounds() {
    let s = setup(4, 4, 1);
    let (mut server, mut clients) = state(&s, Scheme::Mub, InitMode::Server, &AttackPlan::none());
    let w1 = server.initial_model.clone().unwrap();
    let mut history = Vec::new();
    for t in 1..=20 {
        let r = run_round(&mut server, &mut clients, &ctx(&s), &AttackPlan::none()).unwrap();
        assert_eq!(r.record.round, t);
        history.push(r.aggregate);
        let mut recomputed = w1.values().to_vec();
        for u in &history {
            for (w, d) in recomputed.iter_mut().zip(u.values()) {
                *w += d;
            }
        }
        assert_eq!(server.accumulated_global.as_ref().unwrap().values(), &recomputed[..]);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let s = setup(6, 3, 2);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let plan = AttackPlan::new(AttackKind::AdditiveNoise, 0.5, 0.3, 6, 5).unwrap();
            let (mut server, mut clients) = state(&s, Scheme::Mb, InitMode::Icmi, &plan);
            let records: Vec<_> =
                (0..4).map(|_| run_round(&mut server, &mut clients, &ctx(&s), &plan).unwrap().record).collect();
            (records, server.broadcast.unwrap())
        })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn partial_participation_selects_m_clients() {
    let mut s = setup(10, 4, 1);
    s.hyper.participation = 0.3;
    let (mut server, mut clients) = state(&s, Scheme::Mub, InitMode::Server, &AttackPlan::none());
    let r = run_round(&mut server, &mut clients, &ctx(&s), &AttackPlan::none()).unwrap();
    assert_eq!(r.selected.len(), 3);
    assert_eq!(r.uploads.len(), 3);
    // Non-selected clients still applied u_1 = 0, so they are unchanged.
    let w1 = server.initial_model.clone().unwrap();
    for c in clients.iter().filter(|c| !r.selected.contains(&c.client_id)) {
        assert_eq!(c.local_model, w1);
    }
}

#[test]
fn mixed_payload_kinds_are_rejected() {
    let s = setup(2, 4, 1);
    let (mut server, mut clients) = state(&s, Scheme::Mub, InitMode::Server, &AttackPlan::none());
    server.broadcast = Some(ParamVector::zeros(PayloadKind::Model, s.spec.clone()));
    assert!(run_round(&mut server, &mut clients, &ctx(&s), &AttackPlan::none()).is_err());
}

#[test]
fn noise_has_requested_moments() {
    let spec = Arc::new(ModelSpec::mnist_mlp());
    let zero = ParamVector::<f64>::zeros(PayloadKind::Update, spec);
    let noisy = attack_additive_noise(&zero, 0.5, StreamKey::new(3, Purpose::Noise).round(1).client(2));
    let n = noisy.len() as f64;
    let mean = noisy.values().iter().sum::<f64>() / n;
    let std = (noisy.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 4.0 * 0.5 / n.sqrt(), "{mean}");
    assert!((std - 0.5).abs() < 0.01, "{std}");
    let again = attack_additive_noise(&zero, 0.5, StreamKey::new(3, Purpose::Noise).round(1).client(2));
    assert_eq!(noisy, again);
    let other = attack_additive_noise(&zero, 0.5, StreamKey::new(3, Purpose::Noise).round(2).client(2));
    assert_ne!(noisy, other);
}

#[test]
fn synthetic_blobs_are_fit_perfectly() {
    let train = synth_dataset(10, 20, 16, 10.0, 21).unwrap();
    let spec = Arc::new(ModelSpec::mlp(16, &[16], 10).unwrap());
    let hyper = Hyper { eta: 0.1, batch_size: 5, local_iters: 1, participation: 1.0, num_clients: 1 };
    let all = Partition { client_id: 0, sample_indices: (0..train.len()).collect() };
    let trainer = LocalTrainer::new(&spec, &train, &hyper, 2);
    let mut w = flsim_core::nn::init_params::<f64>(&spec, 2, flsim_core::InitScheme::Glorot);
    let mut reached = None;
    for epoch in 0..50 {
        w = trainer.train(w, &all, epoch, 0..1).unwrap();
        let acc = evaluate(&spec, &w, &train, 64).unwrap().0;
        if acc == 1.0 {
            reached = Some(epoch + 1);
            break;
        }
    }
    assert!(reached.is_some(), "train accuracy never reached 1.0");
}

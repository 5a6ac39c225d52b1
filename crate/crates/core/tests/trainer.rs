use savgo_core::kernel::KernelConfig;
use savgo_core::numerics::Mlp;
use savgo_core::trainer::{train, train_with, Algorithm, ExperimentConfig, Trainer, TrainError};

fn small(algorithm: Algorithm) -> ExperimentConfig {
    ExperimentConfig {
        algorithm,
        seed: 7,
        total_steps: 300,
        warmup_steps: 100,
        batch_size: 16,
        hidden: vec![16, 16],
        buffer_capacity: 1000,
        eval_interval: 100,
        eval_episodes: 1,
        kernel: KernelConfig { k: 8, ..KernelConfig::default() },
        geometry: savgo_core::geometry::GeometryConfig { embed_dim: 8, ..Default::default() },
        ..ExperimentConfig::default()
    }
}

fn same_net(a: &Mlp, b: &Mlp) -> bool {
    a.params().iter().zip(b.params()).all(|(x, y)| x.data() == y.data())
}

#[test]
fn warmup_only_run_performs_no_updates() {
    for alg in [Algorithm::Sac, Algorithm::Savgo] {
        let cfg = ExperimentConfig { total_steps: 100, ..small(alg) };
        let run = train(&cfg).unwrap();
        let counts = run.trainer.update_counts();
        assert_eq!(counts, Default::default());
        assert_eq!(run.trainer.buffer().len(), 100);
        assert_eq!(run.metrics.len(), 1);
        assert!(run.metrics[0].critic_loss.is_none());
    }
}

#[test]
fn identical_seeds_give_identical_metrics() {
    for alg in [Algorithm::Sac, Algorithm::Savgo] {
        let a = train(&small(alg)).unwrap().metrics;
        let b = train(&small(alg)).unwrap().metrics;
        assert_eq!(a.len(), 3);
        for (x, y) in a.iter().zip(&b) {
            let (mut x, mut y) = (x.clone(), y.clone());
            x.wall_seconds = 0.0;
            y.wall_seconds = 0.0;
            assert_eq!(x, y);
        }
        let other = train(&ExperimentConfig { seed: 8, ..small(alg) }).unwrap().metrics;
        assert_ne!(other[2].critic_loss, a[2].critic_loss);
    }
}

#[test]
fn step_accounting() {
    let cfg = small(Algorithm::Savgo);
    let mut tr = Trainer::new(&cfg).unwrap();
    for i in 0..250u64 {
        let before = tr.update_counts();
        let len = tr.buffer().len();
        let r = tr.step().unwrap();
        assert_eq!(r.step, i + 1);
        assert_eq!(tr.buffer().len(), len + 1);
        let after = tr.update_counts();
        let d = if i >= cfg.warmup_steps { 1 } else { 0 };
        assert_eq!(r.updated, d == 1);
        assert_eq!(after.critics, [before.critics[0] + d, before.critics[1] + d]);
        assert_eq!(after.encoder, before.encoder + d);
        assert_eq!(after.actor, before.actor + d);
        assert_eq!(after.temperature, before.temperature + d);
        assert_eq!(after.targets, before.targets + d);
    }

    let frozen = ExperimentConfig { freeze_encoder: true, ..cfg };
    let mut tr = Trainer::new(&frozen).unwrap();
    for _ in 0..200 {
        tr.step().unwrap();
    }
    let c = tr.update_counts();
    assert_eq!((c.encoder, c.actor), (0, 100));
}

#[test]
fn targets_follow_polyak_recursion() {
    let cfg = ExperimentConfig { warmup_steps: 20, ..small(Algorithm::Savgo) };
    let mut tr = Trainer::new(&cfg).unwrap();
    let tau = cfg.tau;
    let mut critic = tr.critics().pairs[0].target.params().to_vec();
    let mut enc = tr.encoder().nets.target.params().to_vec();
    let replay = |acc: &mut Vec<savgo_core::numerics::Tensor>, online: &Mlp| {
        for (t, o) in acc.iter_mut().zip(online.params()) {
            for (tv, ov) in t.data_mut().iter_mut().zip(o.data()) {
                *tv = tau * *tv + (1.0 - tau) * ov;
            }
        }
    };
    for _ in 0..100 {
        if tr.step().unwrap().updated {
            replay(&mut critic, &tr.critics().pairs[0].online);
            replay(&mut enc, &tr.encoder().nets.online);
        }
        for (x, y) in critic.iter().zip(tr.critics().pairs[0].target.params()) {
            assert!(x.max_abs_diff(y) <= 1e-12);
        }
        for (x, y) in enc.iter().zip(tr.encoder().nets.target.params()) {
            assert!(x.max_abs_diff(y) <= 1e-12);
        }
    }
    assert_eq!(tr.update_counts().targets, 80);
}

#[test]
fn sac_never_touches_the_encoder() {
    let cfg = small(Algorithm::Sac);
    let mut tr = Trainer::new(&cfg).unwrap();
    let init = tr.encoder().clone();
    for _ in 0..300 {
        let r = tr.step().unwrap();
        assert!(r.representation_loss.is_none() && r.kernel_weight_range.is_none());
        assert!(r.beta.is_none() && r.rho.is_none());
    }
    assert!(same_net(&init.nets.online, &tr.encoder().nets.online));
    assert!(same_net(&init.nets.target, &tr.encoder().nets.target));
    assert_eq!(tr.update_counts().encoder, 0);
}

#[test]
fn single_uniform_candidate_matches_sac_actor_loss() {
    // From every state of a SAC run, a branch that switches to the kernel
    // objective with one policy candidate, uniform weights, and the anchor's
    // noise stream must report the same actor loss.
    let cfg = small(Algorithm::Sac);
    let mut sac = Trainer::new(&cfg).unwrap();
    let kernel = KernelConfig { k: 1, epsilon: 1.0, proposal_mix: 0.0, ..KernelConfig::default() };
    let mut compared = 0;
    for _ in 0..250 {
        let mut branch = sac.clone();
        branch.switch_algorithm(Algorithm::Savgo, kernel);
        branch.align_candidate_stream();
        let a = sac.step().unwrap();
        let b = branch.step().unwrap();
        assert_eq!(a.critic_loss, b.critic_loss);
        match (a.actor_loss, b.actor_loss) {
            (Some(x), Some(y)) => {
                assert!((x - y).abs() <= 1e-9, "step {}: {x} vs {y}", a.step);
                assert_eq!(b.kernel_weight_range, Some((1.0, 1.0)));
                compared += 1;
            }
            (None, None) => {}
            other => panic!("update mismatch {other:?}"),
        }
    }
    assert_eq!(compared, 150);
}

#[test]
fn invalid_config_fails_at_startup() {
    let cfg = ExperimentConfig { gamma: 1.5, ..small(Algorithm::Sac) };
    assert!(matches!(Trainer::new(&cfg), Err(TrainError::Config(_))));
}

#[test]
fn non_finite_loss_aborts() {
    // A gigantic learning rate drives the critics to overflow.
    let cfg = ExperimentConfig { critic_lr: 1e300, actor_lr: 1e300, total_steps: 2000, ..small(Algorithm::Sac) };
    match train(&cfg) {
        Err(TrainError::NonFinite { step, .. }) | Err(TrainError::Numerics { step, .. }) => assert!(step > 100),
        other => panic!("expected abort, got {:?}", other.map(|r| r.metrics.len())),
    }
}

#[test]
fn sink_receives_rows_incrementally_and_can_abort() {
    let mut seen = Vec::new();
    let run = train_with(&small(Algorithm::Sac), |row| {
        seen.push(row.step);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![100, 200, 300]);
    assert_eq!(run.metrics.iter().map(|r| r.step).collect::<Vec<_>>(), seen);
    let err = train_with(&small(Algorithm::Sac), |_| Err("disk full".into())).unwrap_err();
    assert!(matches!(err, TrainError::Sink(_)));
}

#[test]
fn ablation_flags_hold_columns_constant() {
    let rho = ExperimentConfig { fixed_rho: Some(0.75), ..small(Algorithm::Savgo) };
    let beta = ExperimentConfig { fixed_beta: Some(1.0), ..small(Algorithm::Savgo) };
    let uniform = ExperimentConfig { uniform_kernel: true, ..small(Algorithm::Savgo) };
    let mut tr = Trainer::new(&rho).unwrap();
    let mut tb = Trainer::new(&beta).unwrap();
    let mut tu = Trainer::new(&uniform).unwrap();
    for _ in 0..300 {
        let r = tr.step().unwrap();
        assert_eq!(r.rho, Some(0.75));
        assert_eq!(tb.step().unwrap().beta, Some(1.0));
        if let Some((lo, hi)) = tu.step().unwrap().kernel_weight_range {
            assert!((lo - 0.125).abs() < 1e-12 && (hi - 0.125).abs() < 1e-12);
        }
    }
}

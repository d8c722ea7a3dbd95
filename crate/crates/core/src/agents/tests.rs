use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::neural::{FlatHead, Mlp, PolicyNet, DEFAULT_HIDDEN};
use crate::sim::{ActionVec, Env, EnvConfig};

fn small_hyper(critic: u64, joint: u64) -> A2cHyper {
    A2cHyper {
        critic_epochs: critic,
        joint_epochs: joint,
        seed: 3,
        ..A2cHyper::default()
    }
}

#[test]
fn advantage_arithmetic() {
    assert_eq!(advantage(0.0, 7.5, 7.5, 1.0), 0.0);
    assert!((advantage(4.0, 10.0, 10.0, 0.99) - 3.9).abs() < 1e-12);
    // Sign flips as V(s) crosses r + gamma V(s').
    assert!(advantage(1.0, 1.98, 1.0, 0.99) > 0.0);
    assert!(advantage(1.0, 2.0, 1.0, 0.99) < 0.0);
}

#[test]
fn critic_loss_is_squared_td_error() {
    assert_eq!(critic_loss(1.0, 1.99, 1.0, 0.99), (0.0, -0.0));
    let (l, g) = critic_loss(2.0, 1.0, 0.0, 0.9);
    assert_eq!(l, 1.0);
    assert_eq!(g, -2.0);
    assert_eq!(actor_loss(-1.5, 2.0), 3.0);
}

#[test]
fn zero_td_error_gives_zero_critic_gradient() {
    let cfg = EnvConfig::reference();
    let ac = ActorCritic::new(&cfg, &small_hyper(0, 0)).unwrap();
    let x = [0.1, 0.0, 0.0, 0.2, 0.3, 0.1, 0.0, 0.2];
    let v = ac.critic.value(&x).unwrap();
    let mut grads = vec![0.0; ac.critic.mlp.num_params()];
    ac.critic.weighted_squared_error(&x, &[v], &[1.0], &mut grads).unwrap();
    assert!(grads.iter().all(|&g| g == 0.0));
}

#[test]
fn zero_advantage_never_moves_the_actor() {
    let cfg = EnvConfig::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let actor = PolicyNet::<f64>::new(&cfg, &DEFAULT_HIDDEN, &mut rng).unwrap();
    let mut grads = vec![0.0; actor.mlp.num_params()];
    for _ in 0..1000 {
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
        let a = ActionVec((0..4).map(|_| rng.random_range(0..4)).collect());
        actor.weighted_nll(&x, &[a], &[0.0], &mut grads).unwrap();
    }
    assert!(grads.iter().all(|&g| g == 0.0));
}

#[test]
fn single_actor_step_follows_the_advantage_sign() {
    let cfg = EnvConfig::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..100 {
        let hyper = A2cHyper {
            seed: trial,
            actor_lr: 1e-3,
            ..A2cHyper::default()
        };
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
        let x2: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
        let a = ActionVec((0..4).map(|_| rng.random_range(0..4)).collect());
        for sign in [1.0, -1.0] {
            let mut ac = ActorCritic::new(&cfg, &hyper).unwrap();
            let lp = |ac: &ActorCritic| {
                let l = ac.actor.log_probs(&x).unwrap();
                ac.actor.head.action_log_prob(&l, &a).unwrap()
            };
            let before = lp(&ac);
            // Pick a reward that makes the advantage clearly `sign`-signed.
            let v = ac.critic.value(&x).unwrap();
            let v2 = ac.critic.value(&x2).unwrap();
            let reward = v - 0.99 * v2 + sign * 5.0;
            let out = ac.update(&x, &a, reward, &x2, true).unwrap();
            assert_eq!(out.advantage.signum(), sign);
            let after = lp(&ac);
            if sign > 0.0 {
                assert!(after > before, "trial {trial}");
            } else {
                assert!(after < before, "trial {trial}");
            }
        }
    }
}

#[test]
fn frozen_actor_is_bitwise_unchanged_during_critic_phase() {
    let cfg = EnvConfig::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let actor = PolicyNet::<f64>::new(&cfg, &DEFAULT_HIDDEN, &mut rng).unwrap();
    let mut env = Env::new(cfg.clone(), 6).unwrap();
    let (ac, log) = run_dt_assisted(&mut env, actor.clone(), &small_hyper(500, 0), &mut NoObserver).unwrap();
    assert_eq!(ac.actor, actor);
    assert_eq!(ac.actor_opt.steps(), 0);
    assert_eq!(ac.critic_opt.steps(), 500);
    assert_eq!(log.records.len(), 500);
    assert!(log.records.iter().all(|r| r.phase == 2 && r.loss_actor.is_none()));
}

#[test]
fn joint_phase_moves_both_networks() {
    let cfg = EnvConfig::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let actor = PolicyNet::<f64>::new(&cfg, &DEFAULT_HIDDEN, &mut rng).unwrap();
    let mut env = Env::new(cfg, 7).unwrap();
    let (ac, log) = run_dt_assisted(&mut env, actor.clone(), &small_hyper(100, 200), &mut NoObserver).unwrap();
    assert_ne!(ac.actor, actor);
    assert_eq!(ac.actor_opt.steps(), 200);
    assert_eq!(log.records.iter().filter(|r| r.phase == 3).count(), 200);
    let epochs: Vec<u64> = log.records.iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, (0..300).collect::<Vec<_>>());
}

#[test]
fn logged_rewards_match_offline_recomputation() {
    let cfg = EnvConfig::reference();
    let mut env = Env::new(cfg.clone(), 8).unwrap();
    let (_, log) = run_scratch_a2c(&mut env, &small_hyper(0, 2000), &mut NoObserver).unwrap();
    for r in &log.records {
        assert_eq!(r.reward, cfg.reward_bar(&r.state, &r.action));
        assert_eq!(r.valid, cfg.is_valid(&r.state, &r.action));
    }
}

#[test]
fn scratch_actor_starts_near_uniform() {
    let cfg = EnvConfig::reference();
    let mut env = Env::new(cfg.clone(), 9).unwrap();
    let hyper = small_hyper(0, 100);
    let initial = ActorCritic::new(&cfg, &hyper).unwrap();
    let (_, log) = run_scratch_a2c(&mut env, &hyper, &mut NoObserver).unwrap();
    let uniform = 4.0 * 4.0f64.ln();
    let mean_h: f64 = log
        .records
        .iter()
        .map(|r| {
            let lp = initial.actor.log_probs(&cfg.encode_state(&r.state)).unwrap();
            initial.actor.head.entropy(&lp)
        })
        .sum::<f64>()
        / log.records.len() as f64;
    assert!((mean_h - uniform).abs() / uniform < 0.05, "{mean_h} vs {uniform}");
}

#[test]
fn checkpoints_fire_at_the_interval() {
    struct Count(Vec<u64>);
    impl TrainObserver for Count {
        fn on_checkpoint(&mut self, epoch: u64, kind: &str, model: serde_json::Value, _: &RngState) -> Result<()> {
            assert_eq!(kind, ActorCritic::KIND);
            let ac: ActorCritic = serde_json::from_value(model).unwrap();
            assert_eq!(ac.critic_opt.steps(), epoch);
            self.0.push(epoch);
            Ok(())
        }
    }
    let cfg = EnvConfig::reference();
    let mut env = Env::new(cfg, 10).unwrap();
    let hyper = A2cHyper {
        checkpoint_every: 100,
        ..small_hyper(0, 350)
    };
    let mut obs = Count(vec![]);
    run_scratch_a2c(&mut env, &hyper, &mut obs).unwrap();
    assert_eq!(obs.0, vec![100, 200, 300]);
}

#[test]
fn training_is_deterministic() {
    let cfg = EnvConfig::reference();
    let run = || {
        let mut env = Env::new(cfg.clone(), 11).unwrap();
        run_scratch_a2c(&mut env, &small_hyper(0, 300), &mut NoObserver).unwrap()
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(a, b);
    assert_eq!(la, lb);
}

#[test]
fn full_exploration_is_uniform_over_actions() {
    let cfg = EnvConfig::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let net = crate::neural::DuelingNet::<f64>::new(&cfg, &[8], &mut rng).unwrap();
    let agent = DqnLearner::new(net, &DqnHyper::default()).unwrap();
    assert_eq!(agent.epsilon(0), 1.0);
    assert_eq!(agent.epsilon(10_000), 0.05);
    assert!((agent.epsilon(5_000) - 0.525).abs() < 1e-12);
    let n = 100_000;
    let mut counts = vec![0usize; 256];
    let x = [0.0; 8];
    for _ in 0..n {
        counts[agent.select(&x, 1.0, &mut rng).unwrap()] += 1;
    }
    // Each action expects 390.6 draws; 1% of the total is a loose bound per
    // cell, so check the aggregate deviation instead.
    let expected = n as f64 / 256.0;
    let tv: f64 = counts.iter().map(|&c| (c as f64 - expected).abs()).sum::<f64>() / (2.0 * n as f64);
    assert!(tv < 0.05, "total variation {tv}");
    assert!(counts.iter().all(|&c| (c as f64 / n as f64 - 1.0 / 256.0).abs() < 0.01));
}

#[test]
fn replay_buffer_is_bounded() {
    let mut b = ReplayBuffer::new(5);
    for i in 0..12 {
        b.push(Transition {
            x: vec![i as f64],
            action: 0,
            reward: 0.0,
            x_next: vec![],
        });
        assert!(b.len() <= 5);
    }
    let mut xs: Vec<f64> = (0..5).map(|i| b.sample(1, &mut ChaCha8Rng::seed_from_u64(i))[0].x[0]).collect();
    xs.sort_by(f64::total_cmp);
    assert!(xs.iter().all(|&x| x >= 7.0));
}

#[test]
fn q_learning_reaches_the_toy_fixed_point() {
    // s0 --a0--> s0 (r 1), s0 --a1--> s1 (r 0),
    // s1 --a0--> s0 (r 0), s1 --a1--> s1 (r 2), gamma 0.9.
    // Fixed point: Q(s0,.) = (17.2, 18), Q(s1,.) = (16.2, 20).
    let hyper = DqnHyper {
        hidden: vec![16],
        lr: 1e-3,
        gamma: 0.9,
        buffer: 1000,
        batch: 32,
        target_sync: 50,
        ..DqnHyper::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let net = crate::neural::DuelingNet {
        mlp: Mlp::new(&[2, 16, 3], &mut rng).unwrap(),
        head: FlatHead::new(1, 1),
    };
    let mut agent = DqnLearner::new(net, &hyper).unwrap();
    let onehot = |s: usize| if s == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
    let step = |s: usize, a: usize| match (s, a) {
        (0, 0) => (0, 1.0),
        (0, _) => (1, 0.0),
        (_, 0) => (0, 0.0),
        _ => (1, 2.0),
    };
    let mut s = 0;
    for _ in 0..30_000 {
        let a = agent.select(&onehot(s), 1.0, &mut rng).unwrap();
        let (s2, r) = step(s, a);
        agent.push(Transition {
            x: onehot(s),
            action: a,
            reward: r,
            x_next: onehot(s2),
        });
        agent.learn(&mut rng).unwrap();
        s = s2;
    }
    let q0 = agent.online.q_values(&onehot(0)).unwrap();
    let q1 = agent.online.q_values(&onehot(1)).unwrap();
    let expected = [17.2, 18.0, 16.2, 20.0];
    for (q, e) in q0.iter().chain(&q1).zip(expected) {
        assert!((q - e).abs() < 1e-2, "{q0:?} {q1:?}");
    }
}

#[test]
fn dqn_training_runs_and_logs_every_epoch() {
    let cfg = EnvConfig::reference();
    let mut env = Env::new(cfg.clone(), 14).unwrap();
    let hyper = DqnHyper {
        epochs: 300,
        seed: 14,
        ..DqnHyper::default()
    };
    let (agent, log) = train_dqn(&mut env, &hyper, &mut NoObserver).unwrap();
    assert_eq!(log.records.len(), 300);
    assert_eq!(agent.updates, 300 - 31);
    assert!(log.records.iter().all(|r| r.reward == cfg.reward_bar(&r.state, &r.action)));
}

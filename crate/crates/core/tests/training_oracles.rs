use std::sync::Arc;

use mtnav::agent::{ModelConfig, MtModel, TargetMode, Thinkings, Variant};
use mtnav::env::{generate_suite, Action, AgentState, EnvConfig, FloorPlan, GenConfig, Heading, Pitch, Split};
use mtnav::nn::{AdamConfig, ParamSet};
use mtnav::perception::{AppearanceTable, MemoryConfig};
use mtnav::tensor::{Tape, Tensor};
use mtnav::training::*;
use mtnav::Error;
use proptest::prelude::*;

fn tiny_model(variant: Variant) -> (MtModel, ParamSet) {
    let cfg = ModelConfig {
        d_i: 4,
        d_s: 4,
        d_n: 4,
        d_e: 4,
        d_o: 4,
        d_z: 6,
        d_g: 8,
        lstm_hidden: 8,
        it_channels: 3,
        fe_hidden: 4,
        appearance_dim: 4,
        ..ModelConfig::default()
    };
    MtModel::new(&cfg, variant, 6, 8, 11).unwrap()
}

fn plans() -> Vec<Arc<FloorPlan>> {
    let gc = GenConfig {
        n_classes: 6,
        ..GenConfig::default()
    };
    generate_suite(3, 4, &gc, "tr", Split::Train).unwrap().into_iter().map(Arc::new).collect()
}

struct Fixture {
    model: MtModel,
    params: ParamSet,
    table: AppearanceTable,
    plans: Vec<Arc<FloorPlan>>,
    env: EnvConfig,
    reward: RewardConfig,
    targets: Vec<usize>,
}

impl Fixture {
    fn new() -> Self {
        let (model, params) = tiny_model(Variant {
            thinkings: Thinkings::ALL,
            mtc: true,
        });
        Fixture {
            model,
            params,
            table: AppearanceTable::seeded(6, 4, 9),
            plans: plans(),
            env: EnvConfig {
                max_steps: 30,
                ..EnvConfig::default()
            },
            reward: RewardConfig::default(),
            targets: (0..6).collect(),
        }
    }

    fn job<'a>(&'a self, train: &'a TrainConfig, keep_traces: bool) -> TrainJob<'a> {
        TrainJob {
            model: &self.model,
            table: &self.table,
            plans: &self.plans,
            targets: &self.targets,
            allowed: None,
            env: &self.env,
            memory: MemoryConfig::default(),
            reward: &self.reward,
            target_mode: TargetMode::OneHot,
            embeddings: None,
            train,
            checkpoint_dir: None,
            keep_traces,
        }
    }
}

fn train_cfg(workers: usize, episodes: u64) -> TrainConfig {
    TrainConfig {
        workers,
        total_episodes: episodes,
        n_step: 7,
        seed: 42,
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn single_step_terminal_example() {
    assert_eq!(discounted_returns(&[1.0], 0.99, 0.0), vec![1.0]);
    let mut tape = Tape::new();
    let logits = tape.leaf(Tensor::row(vec![0.0; 6]).unwrap(), true);
    let value = tape.leaf(Tensor::matrix(1, 1, vec![0.0]).unwrap(), true);
    let steps = [RolloutStep {
        logits,
        value,
        action: 2,
        reward: 1.0,
    }];
    let loss = rollout_losses(&mut tape, &steps, 0.99, 0.5, 0.0, 0.0).unwrap();
    assert_eq!(loss.value, 0.5);
    // uniform policy over 6 actions: −log(1/6)·1
    assert!((loss.policy - 6f64.ln()).abs() < 1e-12);
    assert!((loss.entropy - 6f64.ln()).abs() < 1e-12);
    let total = tape.value(loss.total).item();
    assert!((total - (6f64.ln() + 0.5)).abs() < 1e-12);
}

#[test]
fn empty_segment_is_contract_error() {
    let mut tape = Tape::new();
    assert!(matches!(rollout_losses(&mut tape, &[], 0.99, 0.5, 0.01, 0.0), Err(Error::Contract(_))));
}

#[test]
fn loss_gradient_matches_hand_derivation() {
    // d/dz of −A·log softmax(z)_a − c_H·H(softmax z) and d/dv of c_v (R − v)²
    let z = vec![0.3, -0.2, 0.5, 0.0, 0.1, -0.4];
    let mut tape = Tape::new();
    let logits = tape.leaf(Tensor::row(z.clone()).unwrap(), true);
    let value = tape.leaf(Tensor::matrix(1, 1, vec![0.25]).unwrap(), true);
    let steps = [RolloutStep {
        logits,
        value,
        action: 4,
        reward: 0.7,
    }];
    let (cv, ch, boot, gamma) = (0.5, 0.01, 0.3, 0.9);
    let loss = rollout_losses(&mut tape, &steps, gamma, cv, ch, boot).unwrap();
    tape.backward(loss.total).unwrap();
    let ret = 0.7 + gamma * boot;
    let adv = ret - 0.25;
    let m = z.iter().cloned().fold(f64::MIN, f64::max);
    let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
    let p: Vec<f64> = z.iter().map(|v| (v - m).exp() / s).collect();
    let logp: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let h: f64 = -p.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>();
    let g = tape.grad(logits).unwrap();
    for k in 0..6 {
        let policy = -adv * ((k == 4) as u8 as f64 - p[k]);
        // ∂(Σ p log p)/∂z_k = p_k (log p_k + H)
        let ent = ch * p[k] * (logp[k] + h);
        assert!((g[k] - (policy + ent)).abs() < 1e-12, "k={k}");
    }
    let gv = tape.grad(value).unwrap()[0];
    assert!((gv - (-2.0 * cv * adv)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn returns_match_forward_sum(rewards in prop::collection::vec(-1.0f64..1.0, 1..30), gamma in 0.0f64..1.0, boot in -2.0f64..2.0) {
        let got = discounted_returns(&rewards, gamma, boot);
        let n = rewards.len();
        for (t, g) in got.iter().enumerate() {
            let mut want = 0.0;
            for (k, r) in rewards.iter().enumerate().skip(t) {
                want += gamma.powi((k - t) as i32) * r;
            }
            want += gamma.powi((n - t) as i32) * boot;
            prop_assert!((g - want).abs() < 1e-9);
        }
    }

    #[test]
    fn reward_total_is_component_sum(
        action in 0usize..6, collided: bool, detected: bool, done_valid: bool,
        located: bool, revisit: bool, before in prop::option::of(0.0f64..5.0), after in prop::option::of(0.0f64..5.0),
        use_rma: bool,
    ) {
        let start = AgentState::new(1, 1, Heading::EAST, Pitch::Level);
        let post = if revisit { start } else { AgentState::new(2, 1, Heading::EAST, Pitch::Level) };
        let mut ctx = RewardContext::new(start, located);
        let cfg = RewardConfig::default();
        let facts = StepFacts {
            action: Action::from_index(action).unwrap(),
            post,
            collided,
            target_detected: detected,
            done_valid,
            geo_before: before,
            geo_after: after,
        };
        let r = compute_reward(&mut ctx, &facts, &cfg, use_rma);
        prop_assert_eq!(r.total, component_sum(&r.components));
        if !use_rma {
            prop_assert!(r.components[3..].iter().all(|&c| c == 0.0));
        }
        if !located {
            prop_assert_eq!(r.components[4], 0.0);
        }
        prop_assert_eq!(ctx.located(), located || detected);
    }
}

#[test]
fn nan_gradients_are_dropped() {
    let fx = Fixture::new();
    let store = SharedParamStore::new(fx.params.clone());
    let mut grads: Vec<Vec<f64>> = fx.params.iter().map(|p| vec![0.1; p.value().numel()]).collect();
    grads[1][0] = f64::NAN;
    assert!(!apply_gradients(&store, &grads, &AdamConfig::default()).unwrap());
    {
        let g = store.lock();
        assert_eq!((g.batches, g.dropped), (1, 1));
        assert_eq!(g.params, fx.params);
    }
    grads[1][0] = 0.1;
    assert!(apply_gradients(&store, &grads, &AdamConfig::default()).unwrap());
    let g = store.lock();
    assert_eq!((g.batches, g.dropped), (2, 1));
    assert_ne!(g.params, fx.params);
}

#[test]
fn single_worker_training_is_bit_reproducible() {
    let fx = Fixture::new();
    let cfg = train_cfg(1, 25);
    let run = || {
        let store = SharedParamStore::new(fx.params.clone());
        let report = train(&fx.job(&cfg, true), &store).unwrap();
        (store.snapshot(), report.traces())
    };
    let (p1, t1) = run();
    let (p2, t2) = run();
    assert_eq!(p1, p2);
    assert_eq!(t1, t2);
    assert_ne!(p1, fx.params);
}

#[test]
fn multi_worker_accounting() {
    let fx = Fixture::new();
    let cfg = train_cfg(3, 30);
    let store = SharedParamStore::new(fx.params.clone());
    let report = train(&fx.job(&cfg, false), &store).unwrap();
    assert_eq!(report.episodes_completed, 30);
    assert_eq!(report.workers.iter().map(|w| w.batches).sum::<u64>(), report.batches);
    let ids: Vec<u64> = report.episodes().iter().map(|e| e.episode_id).collect();
    assert_eq!(ids, (0..30).collect::<Vec<_>>());
}

#[test]
fn rma_schedule_and_phase_consistency() {
    let mut fx = Fixture::new();
    fx.reward.schedule_c = 12;
    let cfg = train_cfg(1, 30);
    let store = SharedParamStore::new(fx.params.clone());
    let traces = train(&fx.job(&cfg, true), &store).unwrap().traces();
    assert_eq!(traces.len(), 30);
    let mut early_rma = false;
    for tr in &traces {
        let rma_events = tr.steps.iter().filter(|s| s.reward[3..].iter().any(|&c| c != 0.0)).count();
        if tr.episode_id >= 12 {
            assert_eq!(rma_events, 0, "episode {}", tr.episode_id);
        } else {
            early_rma |= rma_events > 0;
        }
        for (t, s) in tr.steps.iter().enumerate() {
            assert_eq!(s.total, component_sum(&s.reward));
            if s.reward[4] != 0.0 {
                assert!(tr.outcome.first_visible_step.is_some_and(|k| k <= t));
            }
        }
        let moves = tr
            .steps
            .iter()
            .enumerate()
            .filter(|(t, s)| s.action == Action::MoveAhead && s.pose != if *t == 0 { tr.start } else { tr.steps[t - 1].pose })
            .count();
        assert_eq!(tr.outcome.path_length, 0.5 * moves as f64);
        let any_visible = tr.start_detected || tr.steps.iter().any(|s| s.target_detected);
        assert_eq!(tr.outcome.first_visible_step.is_some(), any_visible);
    }
    assert!(early_rma, "no meta-ability reward before the schedule cut-off");
}

#[test]
fn checkpoints_and_log_are_written() {
    let fx = Fixture::new();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = train_cfg(1, 10);
    cfg.checkpoint_every = 5;
    let log = std::fs::File::create(dir.path().join("train.jsonl")).unwrap();
    let store = SharedParamStore::new(fx.params.clone()).with_log(Box::new(log));
    let mut job = fx.job(&cfg, false);
    job.checkpoint_dir = Some(dir.path().join("ckpt"));
    let report = train(&job, &store).unwrap();
    let ck = mtnav::nn::Checkpoint::load(&dir.path().join("ckpt/ckpt_000010.bin")).unwrap();
    assert_eq!(ck.params, store.snapshot());
    assert_eq!(ck.episodes, 10);
    assert!(dir.path().join("ckpt/ckpt_000005.bin").exists());
    let lines = std::fs::read_to_string(dir.path().join("train.jsonl")).unwrap();
    assert_eq!(lines.lines().count() as u64, report.batches);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert!(first["loss"].is_f64() && first["entropy"].is_f64());
}

#[test]
fn invalid_train_config_rejected() {
    let fx = Fixture::new();
    let mut cfg = train_cfg(0, 1);
    let store = SharedParamStore::new(fx.params.clone());
    assert!(matches!(train(&fx.job(&cfg, false), &store), Err(Error::Config(_))));
    cfg.workers = 1;
    cfg.n_step = 0;
    assert!(matches!(train(&fx.job(&cfg, false), &store), Err(Error::Config(_))));
}

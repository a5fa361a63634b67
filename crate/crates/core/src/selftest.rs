//! Formula and oracle checks that run in seconds; used by `selftest` and
//! the acceptance suite.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::choreography::{PlanConfig, Vec3};
use crate::env::EnvOptions;
use crate::learner::nn::Mlp;
use crate::learner::{
    compute_gae, loss_and_grad, ppo_update, rollout, sample_action, ActionMap, Adam, Minibatch, Policy, PpoConfig,
    RolloutMode, TrainBatch,
};
use crate::reward::{
    arm_penalty, fingertip_reward, fulcrum_reward, total_reward, trajectory_reward, RewardBreakdown, RewardWeights,
};
use crate::scenario::{exercise_task, genre_score, song_task, GENRES};
use crate::score::retime;
use crate::world::{apply_observation_noise, sample_episode_physics, PhysicsConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

/// Reward terms against closed-form values; worst absolute error.
pub fn reward_formulas() -> Check {
    let g = |d: f64| (-0.5 * (d / 0.05f64).powi(2)).exp();
    let zero = v(0.0, 0.0, 0.0);
    let cases: Vec<(&str, f64, f64)> = vec![
        ("fingertip n=0", fingertip_reward(0, 1e-6), (-1.0 / 1e-6f64).exp()),
        ("fingertip n=1", fingertip_reward(1, 1e-6), (-1.0 / (1.0 + 1e-6f64)).exp()),
        ("fingertip n=5", fingertip_reward(5, 1e-6), (-1.0 / (5.0 + 1e-6f64)).exp()),
        ("fulcrum at point", fulcrum_reward(&zero, &zero, &zero, 0.05), 1.0),
        ("fulcrum 0.04/0.06", fulcrum_reward(&v(0.04, 0.0, 0.0), &v(0.0, 0.06, 0.0), &zero, 0.05), g(0.05)),
        ("fulcrum 0.2/0.1", fulcrum_reward(&v(0.0, 0.0, 0.2), &v(-0.1, 0.0, 0.0), &zero, 0.05), g(0.15)),
        ("arm zero", arm_penalty(&zero, &zero), 0.0),
        ("arm tau 1,2,2", arm_penalty(&v(1.0, 2.0, 2.0), &zero), 3.0),
        ("arm v 3-4-5", arm_penalty(&zero, &v(0.3, 0.4, 0.0)), 0.5),
        ("trajectory ungrasped", trajectory_reward(false, &v(1.0, 0.0, 0.0), &zero, &zero, &zero, 0.05), 0.0),
        ("trajectory exact", trajectory_reward(true, &zero, &zero, &zero, &zero, 0.05), 1.0),
        (
            "trajectory head 0.05",
            trajectory_reward(true, &v(0.0, 0.05, 0.0), &zero, &zero, &zero, 0.05),
            (-0.125f64).exp(),
        ),
    ];
    let w = RewardWeights::default();
    let parts = |f: f64, a: f64, t: f64| RewardBreakdown {
        fingertip: f,
        arm_penalty: a,
        trajectory: t,
        ..RewardBreakdown::default()
    };
    let totals = [
        ("total zero", total_reward(&parts(0.0, 0.0, 0.0), &w), 0.0),
        ("total fingertip", total_reward(&parts(0.367879, 0.0, 0.0), &w), 0.367879),
        ("total traj-arm", total_reward(&parts(0.0, 3.0, 1.0), &w), 1.91),
    ];
    let weights_exact = (w.fingertip, w.fulcrum, w.arm, w.trajectory, w.hit) == (1.0, 1.0, 0.03, 2.0, 1.0);
    let mut worst = ("", 0.0f64);
    for (name, got, want) in cases.iter().chain(totals.iter()) {
        let e = (got - want).abs();
        if e > worst.1 || worst.0.is_empty() {
            worst = (name, e);
        }
    }
    Check::new(
        "reward formulas",
        worst.1 <= 1e-9 && weights_exact,
        format!("worst |err| {:.1e} ({}), weights exact: {weights_exact}", worst.1, worst.0),
    )
}

/// Lambda-return written as the weighted mix of n-step returns.
pub fn gae_oracle(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            // segment ends at the first done at or after t, or at the buffer end
            let end = (t..n).find(|&k| dones[k]).map_or(n, |k| k + 1);
            let terminal = end <= n && (t..n).any(|k| dones[k]);
            let horizon = end - t;
            let value_at = |k: usize| if k < n { values[k] } else { bootstrap };
            let n_step = |m: usize| {
                let mut g = 0.0;
                for k in 0..m {
                    g += gamma.powi(k as i32) * rewards[t + k];
                }
                if !(terminal && m == horizon) {
                    g += gamma.powi(m as i32) * value_at(t + m);
                }
                g
            };
            let mut ret = 0.0;
            for m in 1..horizon {
                ret += (1.0 - lambda) * lambda.powi(m as i32 - 1) * n_step(m);
            }
            ret += lambda.powi(horizon as i32 - 1) * n_step(horizon);
            ret - values[t]
        })
        .collect()
}

pub fn gae_check(trials: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = rng.random_range(1..=6);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let vals: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.25)).collect();
        let boot = rng.random_range(-2.0..2.0);
        let gamma = rng.random_range(0.05..0.99);
        let lambda = rng.random_range(0.0..=1.0);
        let (a, _) = compute_gae(&r, &vals, &d, boot, gamma, lambda).expect("equal lengths");
        let o = gae_oracle(&r, &vals, &d, boot, gamma, lambda);
        for (x, y) in a.iter().zip(&o) {
            worst = worst.max((x - y).abs());
        }
    }
    Check::new(
        "gae vs n-step oracle",
        worst <= 1e-12,
        format!("{trials} sequences of length <= 6, worst |err| {worst:.1e}"),
    )
}

fn flat_params(p: &Policy<f64>) -> Vec<f64> {
    p.pi.params.iter().chain(&p.log_std).chain(&p.v.params).copied().collect()
}

fn set_flat(p: &mut Policy<f64>, flat: &[f64]) {
    let (a, b) = (p.pi.params.len(), p.log_std.len());
    p.pi.params.copy_from_slice(&flat[..a]);
    p.log_std.copy_from_slice(&flat[a..a + b]);
    p.v.params.copy_from_slice(&flat[a + b..]);
}

/// Relative error between the analytic PPO gradient and central
/// differences for one random network and minibatch.
pub fn gradient_rel_error(rng: &mut ChaCha8Rng) -> f64 {
    let obs = rng.random_range(1..=4);
    let act = rng.random_range(1..=3);
    let depth = rng.random_range(1..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=5)).collect();
    let mut policy = Policy::<f64>::new(obs, act, &hidden, 0.0, rng);
    let mut sizes = vec![obs];
    sizes.extend(&hidden);
    sizes.push(act);
    policy.pi = Mlp::init(&sizes, 1.0, rng);
    for l in &mut policy.log_std {
        *l = rng.random_range(-1.0..0.5);
    }
    let n = rng.random_range(2..=6);
    let x: Vec<f64> = (0..n * obs).map(|_| rng.random_range(-1.5..1.5)).collect();
    let (pi_c, _) = policy.forward_batch(&x, n);
    let log_std = policy.log_std.clone();
    let mut actions = Vec::new();
    let mut old = Vec::new();
    for i in 0..n {
        let mean = &pi_c.output()[i * act..(i + 1) * act];
        let (a, lp) = sample_action(mean, &log_std, rng);
        actions.extend(a);
        // keep ratios well inside the clip range so the loss is smooth here
        old.push(lp + rng.random_range(-0.05..0.05));
    }
    let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ret: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cfg = PpoConfig {
        entropy_coef: 0.01,
        ..PpoConfig::default()
    };
    let mb = Minibatch {
        x: &x,
        actions: &actions,
        old_log_prob: &old,
        advantages: &adv,
        returns: &ret,
    };
    let (_, g) = loss_and_grad(&policy, &mb, &cfg);
    let analytic: Vec<f64> = g.pi.iter().chain(&g.log_std).chain(&g.v).copied().collect();
    let base = flat_params(&policy);
    let h = 1e-6;
    let mut probe = policy.clone();
    let mut num = vec![0.0; base.len()];
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += h;
        set_flat(&mut probe, &p);
        let up = loss_and_grad(&probe, &mb, &cfg).0.total;
        p[i] -= 2.0 * h;
        set_flat(&mut probe, &p);
        let down = loss_and_grad(&probe, &mb, &cfg).0.total;
        num[i] = (up - down) / (2.0 * h);
    }
    let diff: f64 = analytic.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + num.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

pub fn gradient_check(nets: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let worst = (0..nets).map(|_| gradient_rel_error(&mut rng)).fold(0.0, f64::max);
    Check::new(
        "ppo gradient vs finite differences",
        worst < 1e-4,
        format!("{nets} random networks, worst relative error {worst:.2e}"),
    )
}

/// Fraction of the achievable improvement PPO reaches on a linear
/// contextual bandit: 1 - E|mu(x) - a*(x)|^2 / E|a*(x)|^2.
pub fn bandit_score(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = |x: &[f64]| [0.8 * x[0] - 0.5 * x[1], 0.3 * x[0] + 0.6 * x[1]];
    let mut policy = Policy::<f64>::new(2, 2, &[32], -0.5, &mut rng);
    let mut adam = Adam::new(&policy);
    let cfg = PpoConfig {
        lr: 3e-3,
        entropy_coef: 0.0,
        minibatches: 4,
        ..PpoConfig::default()
    };
    let batch = 256;
    for _ in 0..120 {
        let x: Vec<f64> = (0..2 * batch).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (pi_c, v_c) = policy.forward_batch(&x, batch);
        let log_std = policy.log_std.clone();
        let mut tb = TrainBatch {
            obs_dim: 2,
            act_dim: 2,
            x: x.clone(),
            ..TrainBatch::default()
        };
        for i in 0..batch {
            let (a, lp) = sample_action(&pi_c.output()[2 * i..2 * i + 2], &log_std, &mut rng);
            let t = target(&x[2 * i..2 * i + 2]);
            let r = -((a[0] - t[0]).powi(2) + (a[1] - t[1]).powi(2));
            let (adv, ret) = compute_gae(&[r], &[v_c.output()[i]], &[true], 0.0, 0.8, 0.9).expect("lengths");
            tb.actions.extend(a);
            tb.log_probs.push(lp);
            tb.advantages.push(adv[0]);
            tb.returns.push(ret[0]);
        }
        if ppo_update(&mut policy, &mut adam, &tb, &cfg, &mut rng).is_err() {
            return 0.0;
        }
    }
    let m = 2000;
    let x: Vec<f64> = (0..2 * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (pi_c, _) = policy.forward_batch(&x, m);
    let (mut err, mut base) = (0.0, 0.0);
    for i in 0..m {
        let t = target(&x[2 * i..2 * i + 2]);
        let mu = &pi_c.output()[2 * i..2 * i + 2];
        err += (mu[0] - t[0]).powi(2) + (mu[1] - t[1]).powi(2);
        base += t[0] * t[0] + t[1] * t[1];
    }
    1.0 - err / base
}

pub fn bandit_check(seeds: u64) -> Check {
    let scores: Vec<f64> = (0..seeds).map(bandit_score).collect();
    let ok = scores.iter().filter(|s| **s >= 0.95).count();
    Check::new(
        "ppo contextual bandit",
        ok as u64 == seeds,
        format!(
            "{ok}/{seeds} seeds reach 95% of optimum (scores {})",
            scores.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

/// Every scheduled hit of six genre songs lands on its drumhead, and the
/// stick stays rigid and continuous.
pub fn planner_contract() -> Check {
    let p = PhysicsConfig::default();
    let v_max = PlanConfig::bimanual().v_max;
    let (mut worst_touch, mut worst_len, mut hits) = (0.0f64, 0.0f64, 0usize);
    let mut continuous = true;
    for g in GENRES {
        let score = genre_score(g, 100.0, 4).expect("built-in genre");
        let score = retime(&score, 3.0).expect("positive factor");
        let task = match song_task(g, score, &p) {
            Ok(t) => t,
            Err(e) => return Check::new("planner contract", false, format!("{g}: {e}")),
        };
        let reference = &task.reference;
        for (h, hand_hits) in task.schedule.hands.iter().enumerate() {
            for hit in hand_hits {
                let (head, _) = reference.at(h, hit.step);
                let pad = task.world.layout.pad(hit.drum).expect("scheduled drum is in the kit");
                worst_touch = worst_touch.max(pad.height_above(&head).abs());
                hits += 1;
            }
        }
        for hand in &reference.hands {
            for (a, b) in hand.head.iter().zip(&hand.tail) {
                worst_len = worst_len.max(((a - b).norm() - p.stick_length).abs());
            }
        }
        continuous &= reference.is_continuous(v_max);
    }
    Check::new(
        "planner contract",
        worst_touch <= 1e-9 && worst_len <= 1e-9 && continuous,
        format!(
            "{hits} hits over {} genres, worst touch error {worst_touch:.1e} m, worst length error {worst_len:.1e} m, continuous: {continuous}",
            GENRES.len()
        ),
    )
}

pub fn randomization_check(seed: u64) -> Check {
    let p = PhysicsConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = vec![0.0; 100_000];
    let all = 0..obs.len();
    apply_observation_noise(&mut obs, &[all], &p, &mut rng);
    let n = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / n;
    let sd = (obs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let (mut g_lo, mut g_hi, mut f_lo, mut f_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for _ in 0..10_000 {
        let e = sample_episode_physics(&p, &mut rng);
        g_lo = g_lo.min(e.gain_scale);
        g_hi = g_hi.max(e.gain_scale);
        f_lo = f_lo.min(e.friction_offset());
        f_hi = f_hi.max(e.friction_offset());
    }
    let ok = (0.049..=0.051).contains(&sd) && g_lo >= 0.9 && g_hi <= 1.1 && f_lo >= -0.2 && f_hi <= 0.2;
    Check::new(
        "randomization distributions",
        ok,
        format!("noise std {sd:.4}, gain [{g_lo:.4}, {g_hi:.4}], friction offset [{f_lo:.4}, {f_hi:.4}]"),
    )
}

/// Plan-only evaluation at the last step before and the first step of
/// contact.
pub fn curriculum_gate() -> Check {
    let p = PhysicsConfig::default();
    let task = exercise_task(60.0, 4, &p).expect("exercise builds");
    let contacts = |g: u64| -> Result<usize, String> {
        let map = ActionMap::plan_only(&task);
        rollout(None, &Arc::clone(&task), &EnvOptions::default(), &map, &RolloutMode::PlanOnly, 0, g, None)
            .map(|t| t.drum_contacts)
            .map_err(|e| e.to_string())
    };
    let n = p.curriculum_steps;
    match (contacts(n - 1), contacts(n)) {
        (Ok(before), Ok(after)) => Check::new(
            "contact curriculum gate",
            before == 0 && after > 0,
            format!("contacts at step {}: {before}, at step {n}: {after}", n - 1),
        ),
        (Err(e), _) | (_, Err(e)) => Check::new("contact curriculum gate", false, e),
    }
}

/// Everything above with the default sizes.
pub fn run_all() -> Vec<Check> {
    vec![
        reward_formulas(),
        gae_check(2000, 1),
        gradient_check(100, 2),
        bandit_check(5),
        planner_contract(),
        randomization_check(3),
        curriculum_gate(),
    ]
}

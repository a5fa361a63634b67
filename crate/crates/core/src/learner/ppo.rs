use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;

use super::nn::Scalar;
use super::policy::{gaussian_entropy, Policy};
use super::{LearnError, TrainerState};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub lr: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm cap; 0 disables it.
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            lr: 3e-4,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            epochs: 4,
            minibatches: 8,
            entropy_coef: 0.003,
            value_coef: 0.5,
            max_grad_norm: 0.5,
        }
    }
}

/// Gradients laid out like the policy's parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<S: Scalar> {
    pub pi: Vec<S>,
    pub log_std: Vec<S>,
    pub v: Vec<S>,
}

impl<S: Scalar> Grads<S> {
    pub fn zeros_like(p: &Policy<S>) -> Self {
        Self {
            pi: vec![S::zero(); p.pi.params.len()],
            log_std: vec![S::zero(); p.log_std.len()],
            v: vec![S::zero(); p.v.params.len()],
        }
    }

    fn groups_mut(&mut self) -> [&mut Vec<S>; 3] {
        [&mut self.pi, &mut self.log_std, &mut self.v]
    }

    pub fn norm(&self) -> f64 {
        self.pi
            .iter()
            .chain(&self.log_std)
            .chain(&self.v)
            .map(|g| g.f64() * g.f64())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub clip_fraction: f64,
}

/// Minibatch view: normalized inputs and per-sample targets.
pub struct Minibatch<'a, S: Scalar> {
    pub x: &'a [S],
    pub actions: &'a [f64],
    pub old_log_prob: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

/// PPO loss on one minibatch and its exact gradient.
pub fn loss_and_grad<S: Scalar>(policy: &Policy<S>, mb: &Minibatch<'_, S>, cfg: &PpoConfig) -> (LossParts, Grads<S>) {
    let n = mb.returns.len();
    let ad = policy.act_dim();
    let (pi_c, v_c) = policy.forward_batch(mb.x, n);
    let log_std: Vec<f64> = policy.log_std.iter().map(|l| l.f64()).collect();
    let inv_var: Vec<f64> = log_std.iter().map(|l| (-2.0 * l).exp()).collect();
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let inv_n = 1.0 / n as f64;

    let mut d_mean = vec![S::zero(); n * ad];
    let mut d_log_std = vec![0.0; ad];
    let mut d_v = vec![S::zero(); n];
    let mut parts = LossParts::default();
    let mut clipped = 0usize;
    for i in 0..n {
        let mean = &pi_c.output()[i * ad..(i + 1) * ad];
        let act = &mb.actions[i * ad..(i + 1) * ad];
        let mut lp = 0.0;
        for j in 0..ad {
            let z2 = (act[j] - mean[j].f64()).powi(2) * inv_var[j];
            lp += -0.5 * z2 - log_std[j] - half_ln_2pi;
        }
        let ratio = (lp - mb.old_log_prob[i]).exp();
        let a = mb.advantages[i];
        let lo = 1.0 - cfg.clip_eps;
        let hi = 1.0 + cfg.clip_eps;
        let surr = (ratio * a).min(ratio.clamp(lo, hi) * a);
        parts.policy -= surr * inv_n;
        let active = !((a > 0.0 && ratio > hi) || (a < 0.0 && ratio < lo));
        if !active {
            clipped += 1;
        }
        let d_lp = if active { -ratio * a * inv_n } else { 0.0 };
        for j in 0..ad {
            let diff = act[j] - mean[j].f64();
            d_mean[i * ad + j] = S::of(d_lp * diff * inv_var[j]);
            d_log_std[j] += d_lp * (diff * diff * inv_var[j] - 1.0);
        }
        let err = v_c.output()[i].f64() - mb.returns[i];
        parts.value += err * err * inv_n;
        d_v[i] = S::of(cfg.value_coef * 2.0 * err * inv_n);
    }
    parts.entropy = gaussian_entropy(&log_std);
    parts.total = parts.policy + cfg.value_coef * parts.value - cfg.entropy_coef * parts.entropy;
    parts.clip_fraction = clipped as f64 * inv_n;

    let mut g = Grads::zeros_like(policy);
    policy.pi.backward(&pi_c, &d_mean, &mut g.pi);
    policy.v.backward(&v_c, &d_v, &mut g.v);
    for j in 0..ad {
        g.log_std[j] = S::of(d_log_std[j] - cfg.entropy_coef);
    }
    (parts, g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub t: u64,
    m: [Vec<f64>; 3],
    v: [Vec<f64>; 3],
}

impl Adam {
    pub fn new<S: Scalar>(p: &Policy<S>) -> Self {
        let sizes = [p.pi.params.len(), p.log_std.len(), p.v.params.len()];
        Self {
            t: 0,
            m: sizes.map(|n| vec![0.0; n]),
            v: sizes.map(|n| vec![0.0; n]),
        }
    }

    pub fn snapshot(&self, iteration: u64, env_steps: u64) -> TrainerState {
        TrainerState {
            iteration,
            env_steps,
            adam_t: self.t,
            adam_m: self.m.to_vec(),
            adam_v: self.v.to_vec(),
        }
    }

    /// Loads moments saved by [`Adam::snapshot`]; mismatched shapes are ignored.
    pub fn restore(&mut self, s: &TrainerState) {
        let fits = |src: &Vec<Vec<f64>>, dst: &[Vec<f64>; 3]| {
            src.len() == 3 && src.iter().zip(dst).all(|(a, b)| a.len() == b.len())
        };
        if fits(&s.adam_m, &self.m) && fits(&s.adam_v, &self.v) {
            self.t = s.adam_t;
            for k in 0..3 {
                self.m[k].clone_from(&s.adam_m[k]);
                self.v[k].clone_from(&s.adam_v[k]);
            }
        }
    }

    pub fn step<S: Scalar>(&mut self, p: &mut Policy<S>, g: &Grads<S>, cfg: &PpoConfig) {
        self.t += 1;
        let (b1, b2) = cfg.adam_betas;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let groups: [(&mut Vec<S>, &Vec<S>); 3] =
            [(&mut p.pi.params, &g.pi), (&mut p.log_std, &g.log_std), (&mut p.v.params, &g.v)];
        for (k, (params, grad)) in groups.into_iter().enumerate() {
            for i in 0..params.len() {
                let gi = grad[i].f64();
                self.m[k][i] = b1 * self.m[k][i] + (1.0 - b1) * gi;
                self.v[k][i] = b2 * self.v[k][i] + (1.0 - b2) * gi * gi;
                let step = cfg.lr * (self.m[k][i] / c1) / ((self.v[k][i] / c2).sqrt() + cfg.adam_eps);
                params[i] = S::of(params[i].f64() - step);
            }
        }
    }
}

/// Flat training data for one update; rows of `x` are normalized inputs.
#[derive(Debug, Clone, Default)]
pub struct TrainBatch {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub x: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub loss_pi: f64,
    pub loss_v: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Several epochs of shuffled minibatch PPO steps. On a non-finite loss the
/// policy and optimizer are restored to their state at entry.
pub fn ppo_update<S: Scalar, R: Rng>(
    policy: &mut Policy<S>,
    adam: &mut Adam,
    batch: &TrainBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, LearnError> {
    let n = batch.len();
    if n == 0 {
        return Ok(UpdateStats::default());
    }
    let mean = batch.advantages.iter().sum::<f64>() / n as f64;
    let var = batch.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt().max(1e-8);
    let adv: Vec<f64> = batch.advantages.iter().map(|a| (a - mean) / sd).collect();

    let saved = (policy.clone(), adam.clone());
    let mb_count = cfg.minibatches.clamp(1, n);
    let mb_size = n / mb_count;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut count = 0.0;
    let (od, ad) = (batch.obs_dim, batch.act_dim);
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(mb_size).take(mb_count) {
            let x: Vec<S> = chunk.iter().flat_map(|&i| batch.x[i * od..(i + 1) * od].iter().map(|&v| S::of(v))).collect();
            let actions: Vec<f64> = chunk.iter().flat_map(|&i| batch.actions[i * ad..(i + 1) * ad].iter().copied()).collect();
            let old: Vec<f64> = chunk.iter().map(|&i| batch.log_probs[i]).collect();
            let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
            let r: Vec<f64> = chunk.iter().map(|&i| batch.returns[i]).collect();
            let mb = Minibatch {
                x: &x,
                actions: &actions,
                old_log_prob: &old,
                advantages: &a,
                returns: &r,
            };
            let (parts, mut g) = loss_and_grad(policy, &mb, cfg);
            if !parts.total.is_finite() {
                *policy = saved.0;
                *adam = saved.1;
                return Err(LearnError::NonFiniteLoss);
            }
            if cfg.max_grad_norm > 0.0 {
                let norm = g.norm();
                if norm > cfg.max_grad_norm {
                    let s = S::of(cfg.max_grad_norm / norm);
                    for group in g.groups_mut() {
                        group.iter_mut().for_each(|x| *x = *x * s);
                    }
                }
            }
            adam.step(policy, &g, cfg);
            policy.clamp_log_std();
            stats.loss_pi += parts.policy;
            stats.loss_v += parts.value;
            stats.entropy += parts.entropy;
            stats.clip_fraction += parts.clip_fraction;
            count += 1.0;
        }
    }
    if !policy.is_finite() {
        *policy = saved.0;
        *adam = saved.1;
        return Err(LearnError::NonFiniteLoss);
    }
    stats.loss_pi /= count;
    stats.loss_v /= count;
    stats.entropy /= count;
    stats.clip_fraction /= count;
    Ok(stats)
}

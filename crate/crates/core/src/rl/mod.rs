//! PPO with generalized advantage estimation, waypoint-level rollouts and
//! the combined PPO + distillation update.

mod buffer;
mod env;
mod ppo;
mod rollout;
mod train;

use serde::{Deserialize, Serialize};

pub use buffer::{RolloutBuffer, StepRecord, TeacherView, Trajectory};
pub use env::{EnvParams, NavEnv, StepOutcome};
pub use ppo::{clipped_surrogate, evaluate_loss, loss_and_gradient, ppo_update, LossStats};
pub use rollout::{collect_rollouts, EpisodeSource, Worker};
pub use train::{train_policy, train_teacher, Target, TeacherOutcome, TrainOutcome, Trainer, UpdateLog};

use crate::distill::{DistillMode, KlDirection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    /// Initial learning rate, decayed linearly to zero over `updates`.
    pub lr: f64,
    pub max_grad_norm: f64,
    pub workers: usize,
    /// Waypoint decisions per worker per update.
    pub rollout_len: usize,
    pub epochs: usize,
    pub minibatches: usize,
    /// BPTT chunk length in decisions.
    pub chunk_len: usize,
    pub lambda_cd: f64,
    pub k: usize,
    pub distill_mode: DistillMode,
    pub kl_direction: KlDirection,
    pub updates: usize,
    /// Greedy validation probe cadence in updates (0 disables).
    pub probe_every: usize,
    pub probe_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            ent_coef: 0.01,
            vf_coef: 0.5,
            lr: 2.5e-4,
            max_grad_norm: 0.5,
            workers: 4,
            rollout_len: 128,
            epochs: 4,
            minibatches: 4,
            chunk_len: 16,
            lambda_cd: 0.3,
            k: 30,
            distill_mode: DistillMode::Confidence,
            kl_direction: KlDirection::StudentFirst,
            updates: 200,
            probe_every: 10,
            probe_episodes: 50,
        }
    }
}

impl TrainConfig {
    pub fn batch_size(&self) -> usize {
        self.workers * self.rollout_len
    }

    /// Every out-of-range field, described.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut unit = |name: &str, v: f64, lo: f64, hi: f64| {
            if !(v >= lo && v <= hi) {
                p.push(format!("{name} = {v} outside [{lo}, {hi}]"));
            }
        };
        unit("gamma", self.gamma, 0.0, 1.0);
        unit("gae_lambda", self.gae_lambda, 0.0, 1.0);
        unit("clip", self.clip, 0.0, 1.0);
        unit("ent_coef", self.ent_coef, 0.0, 1.0);
        unit("vf_coef", self.vf_coef, 0.0, 10.0);
        unit("lr", self.lr, 0.0, 1.0);
        unit("max_grad_norm", self.max_grad_norm, 0.0, 1e6);
        unit("lambda_cd", self.lambda_cd, 0.0, 100.0);
        for (name, v) in [
            ("workers", self.workers),
            ("rollout_len", self.rollout_len),
            ("epochs", self.epochs),
            ("minibatches", self.minibatches),
            ("chunk_len", self.chunk_len),
            ("k", self.k),
        ] {
            if v == 0 {
                p.push(format!("{name} must be positive"));
            }
        }
        p
    }
}

/// Progress toward the source plus a success bonus, minus a per-decision
/// cost, with the standard weights.
pub fn shaped_reward(prev_d: f64, new_d: f64, success: bool, step_cost: f64) -> f64 {
    weighted_reward(prev_d, new_d, success, 1.0, 10.0, step_cost)
}

pub fn weighted_reward(prev_d: f64, new_d: f64, success: bool, progress: f64, bonus: f64, step_cost: f64) -> f64 {
    progress * (prev_d - new_d) + if success { bonus } else { 0.0 } - step_cost
}

/// Generalized advantage estimation over one trajectory. `bootstrap` is
/// the value of the state after the last step (ignored if that step is
/// terminal). Returns `(advantages, returns)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "gae inputs misaligned");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shifts to zero mean and scales to unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 1e-12 { (*a - mean) / std } else { *a - mean };
    }
}

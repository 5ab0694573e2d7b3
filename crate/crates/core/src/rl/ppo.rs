use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{RolloutBuffer, StepRecord};
use super::{compute_gae, normalize_advantages, TrainConfig};
use crate::distill::{distill_weights, kl_logit_grad};
use crate::nnet::layers::{log_softmax, softmax};
use crate::nnet::optim::{clip_grad_norm, Adam};
use crate::nnet::{Grads, PolicyNet, StepCache};
use crate::{LabError, Result};

/// Means over all minibatches of one update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Clipped surrogate + weighted value loss − entropy bonus.
    pub ppo_loss: f64,
    /// Distillation loss over the whole batch before the update.
    pub distill_loss: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    /// Largest pre-clip gradient norm seen.
    pub grad_norm: f64,
    /// Mean teacher entropy over the batch (0 without a teacher).
    pub teacher_entropy: f64,
    /// Fraction of steps with nonzero distillation weight.
    pub selected_frac: f64,
}

/// `min(ρA, clip(ρ, 1−ε, 1+ε)A)`.
pub fn clipped_surrogate(ratio: f64, adv: f64, clip: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - clip, 1.0 + clip) * adv)
}

/// Everything fixed for the duration of one update.
struct Prepared<'a> {
    steps: Vec<&'a StepRecord>,
    adv: Vec<f64>,
    ret: Vec<f64>,
    weights: Vec<f64>,
    /// Half-open global step ranges, one per BPTT chunk.
    chunks: Vec<(usize, usize)>,
}

fn prepare<'a>(buffer: &'a RolloutBuffer, cfg: &TrainConfig) -> Prepared<'a> {
    let mut p = Prepared {
        steps: Vec::new(),
        adv: Vec::new(),
        ret: Vec::new(),
        weights: Vec::new(),
        chunks: Vec::new(),
    };
    for traj in &buffer.trajectories {
        let r: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
        let v: Vec<f64> = traj.steps.iter().map(|s| s.value).collect();
        let d: Vec<bool> = traj.steps.iter().map(|s| s.done).collect();
        let (a, ret) = compute_gae(&r, &v, &d, traj.bootstrap, cfg.gamma, cfg.gae_lambda);
        let base = p.steps.len();
        let mut s = 0;
        while s < traj.steps.len() {
            let e = (s + cfg.chunk_len).min(traj.steps.len());
            p.chunks.push((base + s, base + e));
            s = e;
        }
        p.steps.extend(traj.steps.iter());
        p.adv.extend(a);
        p.ret.extend(ret);
    }
    normalize_advantages(&mut p.adv);
    p.weights = vec![0.0; p.steps.len()];
    if cfg.lambda_cd > 0.0 && p.steps.iter().all(|s| s.teacher.is_some()) {
        let keys: Vec<(f64, usize)> = p
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| (s.teacher.as_ref().expect("checked").confidence, i))
            .collect();
        p.weights = distill_weights(&keys, cfg.k, cfg.distill_mode);
    }
    p
}

fn forward_chunk(net: &PolicyNet, steps: &[&StepRecord]) -> Vec<StepCache> {
    let mut caches: Vec<StepCache> = Vec::with_capacity(steps.len());
    for s in steps {
        let h = match caches.last() {
            Some(prev) if !s.reset => prev.out.hidden.clone(),
            _ => s.hidden_in.clone(),
        };
        caches.push(net.step_cached(&s.input, &h));
    }
    caches
}

#[derive(Default)]
struct Acc {
    policy: f64,
    value: f64,
    entropy: f64,
    distill: f64,
    approx_kl: f64,
    clipped: f64,
}

/// Per-step loss terms and logit/value gradients for one chunk. `scale`
/// is 1/minibatch size; `distill_scale` multiplies the batch-level
/// distillation weights.
#[allow(clippy::too_many_arguments)]
fn chunk_terms(
    caches: &[StepCache],
    p: &Prepared,
    range: (usize, usize),
    cfg: &TrainConfig,
    scale: f64,
    distill_scale: f64,
    acc: &mut Acc,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut dlogits = Vec::with_capacity(caches.len());
    let mut dvalues = Vec::with_capacity(caches.len());
    for (c, i) in caches.iter().zip(range.0..range.1) {
        let s = p.steps[i];
        let logp = log_softmax(&c.out.logits);
        let probs = softmax(&c.out.logits);
        let a = s.action;
        let adv = p.adv[i];
        let ratio = (logp[a] - s.log_prob).exp();
        let surr1 = ratio * adv;
        let surr2 = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
        acc.policy += -clipped_surrogate(ratio, adv, cfg.clip) * scale;
        acc.approx_kl += (s.log_prob - logp[a]) * scale;
        if (ratio - 1.0).abs() > cfg.clip {
            acc.clipped += scale;
        }
        let entropy: f64 = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        acc.entropy += entropy * scale;
        let mut g = vec![0.0; probs.len()];
        if surr1 <= surr2 {
            let k = -adv * ratio * scale;
            for (j, gj) in g.iter_mut().enumerate() {
                *gj += k * (if j == a { 1.0 } else { 0.0 } - probs[j]);
            }
        }
        if cfg.ent_coef > 0.0 {
            for j in 0..g.len() {
                g[j] += cfg.ent_coef * scale * probs[j] * (logp[j] + entropy);
            }
        }
        let w = p.weights[i];
        if w > 0.0 {
            let t = s.teacher.as_ref().expect("weighted steps carry a teacher view");
            let (kl, gk) = kl_logit_grad(&probs, &t.probs, cfg.kl_direction);
            acc.distill += w * kl;
            let k = cfg.lambda_cd * w * distill_scale;
            for j in 0..g.len() {
                g[j] += k * gk[j];
            }
        }
        let err = c.out.value - p.ret[i];
        acc.value += 0.5 * err * err * scale;
        dvalues.push(cfg.vf_coef * err * scale);
        dlogits.push(g);
    }
    (dlogits, dvalues)
}

/// Total loss of the current parameters on `buffer` (no update); the
/// distillation term uses the whole-batch weights.
pub fn evaluate_loss(net: &PolicyNet, buffer: &RolloutBuffer, cfg: &TrainConfig) -> f64 {
    let p = prepare(buffer, cfg);
    let n = p.steps.len();
    if n == 0 {
        return 0.0;
    }
    let mut acc = Acc::default();
    for &(s, e) in &p.chunks {
        let caches = forward_chunk(net, &p.steps[s..e]);
        chunk_terms(&caches, &p, (s, e), cfg, 1.0 / n as f64, 1.0, &mut acc);
    }
    acc.policy + cfg.vf_coef * acc.value - cfg.ent_coef * acc.entropy + cfg.lambda_cd * acc.distill
}

/// [`evaluate_loss`] and its exact gradient with respect to the policy
/// parameters, treating the whole buffer as one minibatch.
pub fn loss_and_gradient(net: &PolicyNet, buffer: &RolloutBuffer, cfg: &TrainConfig) -> (f64, Grads) {
    let p = prepare(buffer, cfg);
    let n = p.steps.len();
    let mut grads = net.params.zeros_like();
    if n == 0 {
        return (0.0, grads);
    }
    let mut acc = Acc::default();
    for &(s, e) in &p.chunks {
        let steps = &p.steps[s..e];
        let caches = forward_chunk(net, steps);
        let (dl, dv) = chunk_terms(&caches, &p, (s, e), cfg, 1.0 / n as f64, 1.0, &mut acc);
        let resets: Vec<bool> = steps.iter().map(|s| s.reset).collect();
        net.backward_sequence(&caches, &resets, &dl, &dv, &mut grads);
    }
    let loss = acc.policy + cfg.vf_coef * acc.value - cfg.ent_coef * acc.entropy + cfg.lambda_cd * acc.distill;
    (loss, grads)
}

/// One PPO(+distillation) update: `epochs` passes over shuffled
/// minibatches of BPTT chunks, gradient-norm clipping and an Adam step per
/// minibatch. A non-finite loss or gradient aborts before the optimizer
/// step, with diagnostics.
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut PolicyNet,
    adam: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &TrainConfig,
    lr: f64,
    update: usize,
    rng: &mut R,
) -> Result<LossStats> {
    let p = prepare(buffer, cfg);
    let total = p.steps.len();
    let mut stats = LossStats::default();
    if total == 0 {
        return Ok(stats);
    }
    let with_teacher = p.steps.iter().all(|s| s.teacher.is_some());
    if with_teacher {
        stats.teacher_entropy = p
            .steps
            .iter()
            .map(|s| s.teacher.as_ref().expect("checked").entropy)
            .sum::<f64>()
            / total as f64;
        stats.selected_frac = p.weights.iter().filter(|&&w| w > 0.0).count() as f64 / total as f64;
    }
    let mut order: Vec<usize> = (0..p.chunks.len()).collect();
    let n_mb = cfg.minibatches.min(order.len()).max(1);
    let mut batches = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for mb in 0..n_mb {
            let chunks: Vec<(usize, usize)> = order.iter().skip(mb).step_by(n_mb).map(|&c| p.chunks[c]).collect();
            let n: usize = chunks.iter().map(|(s, e)| e - s).sum();
            if n == 0 {
                continue;
            }
            let scale = 1.0 / n as f64;
            let distill_scale = total as f64 / n as f64;
            let mut acc = Acc::default();
            let mut grads = net.params.zeros_like();
            for &(s, e) in &chunks {
                let steps = &p.steps[s..e];
                let caches = forward_chunk(net, steps);
                let (dl, dv) = chunk_terms(&caches, &p, (s, e), cfg, scale, distill_scale, &mut acc);
                let resets: Vec<bool> = steps.iter().map(|s| s.reset).collect();
                net.backward_sequence(&caches, &resets, &dl, &dv, &mut grads);
            }
            let ppo = acc.policy + cfg.vf_coef * acc.value - cfg.ent_coef * acc.entropy;
            if !ppo.is_finite() || !acc.distill.is_finite() || !grads.all_finite() {
                return Err(LabError::NonFinite {
                    update,
                    detail: format!(
                        "epoch {epoch} minibatch {mb}: policy {} value {} entropy {} distill {}",
                        acc.policy, acc.value, acc.entropy, acc.distill
                    ),
                });
            }
            let norm = clip_grad_norm(&mut grads, cfg.max_grad_norm);
            adam.step(&mut net.params, &grads, lr);
            batches += 1;
            stats.policy_loss += acc.policy;
            stats.value_loss += acc.value;
            stats.entropy += acc.entropy;
            stats.ppo_loss += ppo;
            stats.approx_kl += acc.approx_kl;
            stats.clip_frac += acc.clipped;
            stats.grad_norm = stats.grad_norm.max(norm);
            if epoch == 0 {
                stats.distill_loss += acc.distill;
            }
        }
    }
    let b = batches.max(1) as f64;
    stats.policy_loss /= b;
    stats.value_loss /= b;
    stats.entropy /= b;
    stats.ppo_loss /= b;
    stats.approx_kl /= b;
    stats.clip_frac /= b;
    Ok(stats)
}

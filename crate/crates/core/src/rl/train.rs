use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ppo::{ppo_update, LossStats};
use super::rollout::{collect_rollouts, EpisodeSource, Worker};
use super::TrainConfig;
use crate::evalx::{run_eval, EvalSet, Metrics, PolicyAgent};
use crate::nnet::optim::{Adam, LinearDecay};
use crate::nnet::PolicyNet;
use crate::{LabError, Result};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub update: usize,
    /// Waypoint decisions collected so far.
    pub env_steps: usize,
    pub lr: f64,
    pub reward_mean: f64,
    pub episodes: usize,
    pub train_sr: f64,
    pub loss: LossStats,
    /// Greedy validation probe, when one ran after this update.
    pub probe: Option<Metrics>,
}

/// PPO trainer for either policy kind, optionally distilling from a
/// frozen teacher.
pub struct Trainer {
    pub net: PolicyNet,
    pub cfg: TrainConfig,
    adam: Adam,
    source: EpisodeSource,
    workers: Vec<Worker>,
    teacher: Option<PolicyNet>,
    probe: Option<EvalSet>,
    rng: ChaCha8Rng,
    pub update: usize,
    pub env_steps: usize,
}

impl Trainer {
    pub fn new(
        net: PolicyNet,
        cfg: TrainConfig,
        source: EpisodeSource,
        teacher: Option<PolicyNet>,
        probe: Option<EvalSet>,
        seed: u64,
    ) -> Result<Trainer> {
        let problems = cfg.problems();
        if !problems.is_empty() {
            return Err(LabError::Config(problems));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let th = teacher.as_ref().map_or(0, |t| t.config.hidden);
        let workers = (0..cfg.workers)
            .map(|_| Worker::new(&source, rng.gen(), net.config.hidden, th))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trainer {
            adam: Adam::new(&net.params),
            net,
            cfg,
            source,
            workers,
            teacher,
            probe,
            rng,
            update: 0,
            env_steps: 0,
        })
    }

    pub fn done(&self) -> bool {
        self.update >= self.cfg.updates
    }

    /// Collects one batch, updates, and probes when due.
    pub fn step(&mut self) -> Result<UpdateLog> {
        let lr = LinearDecay {
            initial: self.cfg.lr,
            total_steps: self.cfg.updates,
        }
        .at(self.update);
        let teacher = self.teacher.as_ref().filter(|_| self.cfg.lambda_cd > 0.0);
        let buffer = collect_rollouts(
            &self.source,
            &mut self.workers,
            &self.net,
            teacher,
            self.cfg.rollout_len,
        )?;
        let loss = ppo_update(
            &mut self.net,
            &mut self.adam,
            &buffer,
            &self.cfg,
            lr,
            self.update,
            &mut self.rng,
        )?;
        self.update += 1;
        self.env_steps += buffer.len();
        let n = buffer.len().max(1) as f64;
        let episodes = buffer.finished.len();
        let probe_due = self.cfg.probe_every > 0 && (self.update.is_multiple_of(self.cfg.probe_every) || self.done());
        let probe = match (&self.probe, probe_due) {
            (Some(set), true) => Some(self.probe_metrics(set)?),
            _ => None,
        };
        let log = UpdateLog {
            update: self.update,
            env_steps: self.env_steps,
            lr,
            reward_mean: buffer.steps().map(|s| s.reward).sum::<f64>() / n,
            episodes,
            train_sr: if episodes == 0 {
                0.0
            } else {
                buffer.finished.iter().filter(|r| r.success).count() as f64 / episodes as f64
            },
            loss,
            probe,
        };
        log::debug!(
            "update {} reward {:.3} sr {:.2}",
            log.update,
            log.reward_mean,
            log.train_sr
        );
        Ok(log)
    }

    fn probe_metrics(&self, set: &EvalSet) -> Result<Metrics> {
        let mut agent = PolicyAgent::single(self.net.clone(), true);
        Ok(run_eval(&mut agent, set)?.metrics())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: PolicyNet,
    pub logs: Vec<UpdateLog>,
    pub env_steps: usize,
}

/// Runs the trainer to its update budget, handing each log line to
/// `on_log`.
pub fn train_policy(mut trainer: Trainer, mut on_log: impl FnMut(&UpdateLog)) -> Result<TrainOutcome> {
    let mut logs = Vec::with_capacity(trainer.cfg.updates);
    while !trainer.done() {
        let log = trainer.step()?;
        on_log(&log);
        logs.push(log);
    }
    Ok(TrainOutcome {
        env_steps: trainer.env_steps,
        net: trainer.net,
        logs,
    })
}

#[derive(Debug, Clone)]
pub struct TeacherOutcome {
    pub net: PolicyNet,
    pub logs: Vec<UpdateLog>,
    pub env_steps: usize,
    /// Probe metrics of the returned net: the best probe seen, ranking
    /// nets that meet the success target by SPL and the rest by SR.
    pub val_sr: f64,
    pub val_spl: f64,
    pub passed: bool,
}

impl TeacherOutcome {
    /// Turns a missed threshold into an explicit error.
    pub fn require(self, target: Target) -> Result<TeacherOutcome> {
        if self.passed {
            Ok(self)
        } else {
            Err(LabError::TeacherBudget {
                sr: self.val_sr,
                spl: self.val_spl,
                steps: self.env_steps,
                target_sr: target.sr,
                target_spl: target.spl,
            })
        }
    }
}

/// Validation probe thresholds that end teacher training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub sr: f64,
    pub spl: f64,
}

impl Target {
    pub fn met(&self, m: &Metrics) -> bool {
        m.sr >= self.sr && m.spl >= self.spl
    }

    fn rank(&self, m: &Metrics) -> (bool, f64) {
        if m.sr >= self.sr {
            (true, m.spl)
        } else {
            (false, m.sr)
        }
    }
}

/// Trains the point-goal teacher for its whole update budget and returns
/// the best probed net; `passed` records whether that probe met `target`.
/// A small probe meets a threshold by chance long before the policy does,
/// so training does not stop early. The trainer must carry a probe set and
/// a positive probe cadence.
pub fn train_teacher(
    mut trainer: Trainer,
    target: Target,
    mut on_log: impl FnMut(&UpdateLog),
) -> Result<TeacherOutcome> {
    if trainer.probe.is_none() || trainer.cfg.probe_every == 0 {
        return Err(LabError::Config(vec![
            "teacher training needs a validation probe".into()
        ]));
    }
    let mut logs = Vec::new();
    let mut best: Option<(Metrics, PolicyNet)> = None;
    while !trainer.done() {
        let log = trainer.step()?;
        on_log(&log);
        let probe = log.probe.clone();
        logs.push(log);
        if let Some(m) = probe {
            if best.as_ref().is_none_or(|(b, _)| target.rank(&m) > target.rank(b)) {
                best = Some((m.clone(), trainer.net.clone()));
            }
        }
    }
    let (val_sr, val_spl, passed, net) = match best {
        Some((m, net)) => (m.sr, m.spl, target.met(&m), net),
        None => (0.0, 0.0, false, trainer.net.clone()),
    };
    Ok(TeacherOutcome {
        net,
        logs,
        env_steps: trainer.env_steps,
        val_sr,
        val_spl,
        passed,
    })
}

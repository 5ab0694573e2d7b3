use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::buffer::{RolloutBuffer, StepRecord, TeacherView, Trajectory};
use super::env::{EnvParams, NavEnv};
use crate::distill::{confidence_from_entropy, entropy_of, teacher_query};
use crate::evalx::{DecisionLog, TrajectoryLog};
use crate::nnet::{sample_waypoint, PolicyNet};
use crate::world::{sample_episode, EpisodeBounds, GridWorld, SoundSplit};
use crate::{LabError, Result};

/// Where training episodes come from.
#[derive(Debug, Clone)]
pub struct EpisodeSource {
    pub worlds: Vec<Arc<GridWorld>>,
    pub bounds: EpisodeBounds,
    pub split: SoundSplit,
    pub env: EnvParams,
}

impl EpisodeSource {
    /// A fresh environment on a uniformly chosen world.
    pub fn spawn<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<NavEnv> {
        if self.worlds.is_empty() {
            return Err(LabError::EpisodeSampling("no training worlds".into()));
        }
        let mut last = None;
        for _ in 0..64 {
            let id = rng.gen_range(0..self.worlds.len());
            match sample_episode(&self.worlds[id], id, &self.bounds, self.split, rng) {
                Ok(ep) => {
                    let noise_seed = rng.gen();
                    return Ok(NavEnv::new(self.worlds[id].clone(), ep, self.env.clone(), noise_seed));
                }
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// A rollout worker: its own environment, recurrent states and RNG. The
/// current episode carries over between collections.
#[derive(Debug, Clone)]
pub struct Worker {
    pub env: NavEnv,
    pub hidden: Vec<f64>,
    pub teacher_hidden: Vec<f64>,
    pub fresh: bool,
    decisions: Vec<DecisionLog>,
    rng: ChaCha8Rng,
}

impl Worker {
    pub fn new(source: &EpisodeSource, seed: u64, hidden: usize, teacher_hidden: usize) -> Result<Worker> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = source.spawn(&mut rng)?;
        Ok(Worker {
            env,
            hidden: vec![0.0; hidden],
            teacher_hidden: vec![0.0; teacher_hidden],
            fresh: true,
            decisions: Vec::new(),
            rng,
        })
    }

    fn restart(&mut self, source: &EpisodeSource) -> Result<()> {
        self.env = source.spawn(&mut self.rng)?;
        self.hidden.iter_mut().for_each(|h| *h = 0.0);
        self.teacher_hidden.iter_mut().for_each(|h| *h = 0.0);
        self.fresh = true;
        self.decisions.clear();
        Ok(())
    }

    fn collect(
        &mut self,
        source: &EpisodeSource,
        net: &PolicyNet,
        teacher: Option<&PolicyNet>,
        steps: usize,
    ) -> Result<(Trajectory, Vec<TrajectoryLog>)> {
        let mut traj = Trajectory::default();
        let mut finished = Vec::new();
        for _ in 0..steps {
            let obs = self.env.observation().clone();
            let input = net.input(&obs);
            let out = net.step(&input, &self.hidden);
            let map = out.action_map(net.m());
            let wp = sample_waypoint(&map, false, &mut self.rng);
            let log_prob = out.log_probs()[wp.index];
            let view = teacher.map(|t| {
                let (tm, th) = teacher_query(
                    t,
                    &self.teacher_hidden,
                    self.env.episode.target,
                    self.env.pose,
                    &obs.geometry,
                );
                self.teacher_hidden = th;
                let entropy = entropy_of(&tm.probs);
                TeacherView {
                    probs: tm.probs,
                    entropy,
                    confidence: confidence_from_entropy(entropy),
                }
            });
            self.decisions.push(DecisionLog {
                pose: self.env.pose,
                offset: wp.offset,
                argmax: Some(map.argmax()),
                stop_prob: None,
            });
            let outcome = self.env.apply(wp.offset);
            traj.steps.push(StepRecord {
                input,
                hidden_in: std::mem::replace(&mut self.hidden, out.hidden),
                reset: self.fresh,
                action: wp.index,
                log_prob,
                value: out.value,
                reward: outcome.reward,
                done: outcome.done,
                teacher: view,
            });
            self.fresh = false;
            if outcome.done {
                finished.push(TrajectoryLog {
                    episode: 0,
                    world_id: self.env.episode.world_id,
                    poses: self.env.trace.clone(),
                    decisions: std::mem::take(&mut self.decisions),
                    result: self.env.result(),
                });
                self.restart(source)?;
            }
        }
        traj.bootstrap = match traj.steps.last() {
            Some(s) if !s.done => net.step(&net.input(self.env.observation()), &self.hidden).value,
            _ => 0.0,
        };
        Ok((traj, finished))
    }
}

/// Runs every worker for `steps` decisions under `net` (sampling), querying
/// `teacher` at each step when given. Workers run on scoped threads; each
/// owns its RNG, so the buffer does not depend on scheduling.
pub fn collect_rollouts(
    source: &EpisodeSource,
    workers: &mut [Worker],
    net: &PolicyNet,
    teacher: Option<&PolicyNet>,
    steps: usize,
) -> Result<RolloutBuffer> {
    let parts: Vec<Result<(Trajectory, Vec<TrajectoryLog>)>> = if workers.len() <= 1 {
        workers
            .iter_mut()
            .map(|w| w.collect(source, net, teacher, steps))
            .collect()
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = workers
                .iter_mut()
                .map(|w| s.spawn(move || w.collect(source, net, teacher, steps)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("rollout worker panicked"))
                .collect()
        })
    };
    let mut buffer = RolloutBuffer::default();
    for part in parts {
        let (traj, done) = part?;
        buffer.trajectories.push(traj);
        for mut log in done {
            log.episode = buffer.logs.len();
            buffer.finished.push(log.result.clone());
            buffer.logs.push(log);
        }
    }
    Ok(buffer)
}

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::Agent;
use super::{metrics, EpisodeResult, Metrics};
use crate::rl::{EnvParams, NavEnv};
use crate::world::{sample_episode, AgentPose, Episode, EpisodeBounds, GridWorld, SoundSplit};
use crate::{LabError, Result};

/// A fixed evaluation protocol: worlds, episodes, environment settings and
/// the seed that drives audio noise and agent sampling.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub worlds: Vec<Arc<GridWorld>>,
    pub episodes: Vec<Episode>,
    pub env: EnvParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLog {
    pub pose: AgentPose,
    pub offset: (i64, i64),
    /// Argmax cell of the (aggregated) action map, when the agent has one.
    pub argmax: Option<usize>,
    pub stop_prob: Option<f64>,
}

/// One evaluated episode: every pose visited and every decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub episode: usize,
    pub world_id: usize,
    pub poses: Vec<AgentPose>,
    pub decisions: Vec<DecisionLog>,
    pub result: EpisodeResult,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalRun {
    pub results: Vec<EpisodeResult>,
    pub trajectories: Vec<TrajectoryLog>,
}

impl EvalRun {
    pub fn metrics(&self) -> Metrics {
        metrics(&self.results)
    }

    /// Trajectories as JSON lines.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for t in &self.trajectories {
            s.push_str(&serde_json::to_string(t)?);
            s.push('\n');
        }
        Ok(s)
    }
}

/// `n` episodes cycling through `worlds` in order; deterministic in `seed`.
pub fn sample_episode_set(
    worlds: &[Arc<GridWorld>],
    n: usize,
    bounds: &EpisodeBounds,
    split: SoundSplit,
    seed: u64,
) -> Result<Vec<Episode>> {
    if worlds.is_empty() {
        return Err(LabError::EpisodeSampling("no evaluation worlds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let id = i % worlds.len();
            sample_episode(&worlds[id], id, bounds, split, &mut rng)
        })
        .collect()
}

/// Runs every episode of the set with `agent`. Per-episode noise and agent
/// seeds come from `set.seed` alone, so different agents face the same
/// episodes and the same run twice is identical.
pub fn run_eval(agent: &mut dyn Agent, set: &EvalSet) -> Result<EvalRun> {
    let mut master = ChaCha8Rng::seed_from_u64(set.seed);
    let mut run = EvalRun::default();
    for (i, ep) in set.episodes.iter().enumerate() {
        let noise_seed: u64 = master.gen();
        let agent_seed: u64 = master.gen();
        let world = set
            .worlds
            .get(ep.world_id)
            .ok_or_else(|| LabError::EpisodeSampling(format!("episode {i} names missing world {}", ep.world_id)))?;
        let mut env = NavEnv::new(world.clone(), ep.clone(), set.env.clone(), noise_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(agent_seed);
        agent.reset(&env);
        let mut decisions = Vec::new();
        while !env.done {
            let pose = env.pose;
            let offset = agent.decide(&mut env, &mut rng)?;
            let maps = agent.last_maps();
            decisions.push(DecisionLog {
                pose,
                offset,
                argmax: maps.map(|m| m.aggregate.argmax()),
                stop_prob: maps.and_then(|m| m.stop_prob),
            });
            env.apply(offset);
        }
        let result = env.result();
        run.trajectories.push(TrajectoryLog {
            episode: i,
            world_id: ep.world_id,
            poses: env.trace.clone(),
            decisions,
            result: result.clone(),
        });
        run.results.push(result);
    }
    Ok(run)
}

/// Recomputes success from a logged trajectory alone: the walk must be
/// physically valid (one turn or one free-cell move per action) and must
/// end with a stop within `radius` geodesic cells of the source.
pub fn replay_success(world: &GridWorld, log: &TrajectoryLog, radius: u32) -> bool {
    let valid = log.poses.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        if a.cell == b.cell {
            return true;
        }
        let (dr, dc) = a.heading.unit();
        a.heading == b.heading
            && b.cell.row as i64 == a.cell.row as i64 + dr
            && b.cell.col as i64 == a.cell.col as i64 + dc
            && !world.is_blocked(b.cell)
    });
    let Some(last) = log.poses.last() else { return false };
    let stopped = log.decisions.last().is_some_and(|d| d.offset == (0, 0));
    valid && stopped && world.geodesic(last.cell) <= radius
}

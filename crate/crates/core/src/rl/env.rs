//! One navigation episode seen from the agent: perception at decision
//! points, waypoint transitions, shaped rewards and outcome bookkeeping.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::weighted_reward;
use crate::distill::goal_vector;
use crate::evalx::EpisodeResult;
use crate::mapping::{AcousticMap, GeometryMap, Observation};
use crate::planner::{execute_transition, Sensor};
use crate::world::{render_audio, AgentPose, AudioParams, BinauralAudio, Episode, GridWorld, Heading};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub fov_deg: f64,
    pub range_cells: usize,
    pub amplitude: f64,
    pub exponent: f64,
    pub noise_std: f64,
    /// Geodesic cells from the source that still count as arrived.
    pub success_radius: u32,
    pub replan_budget: usize,
    /// Egocentric crop side.
    pub crop: usize,
    /// End the episode as soon as the agent is within the success radius,
    /// without waiting for a stop decision.
    pub auto_stop: bool,
    pub progress_reward: f64,
    pub success_reward: f64,
    pub step_cost: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            fov_deg: 90.0,
            range_cells: 4,
            amplitude: 1.0,
            exponent: 1.0,
            noise_std: 0.01,
            success_radius: 1,
            replan_budget: 3,
            crop: 17,
            auto_stop: false,
            progress_reward: 1.0,
            success_reward: 10.0,
            step_cost: 0.01,
        }
    }
}

impl EnvParams {
    pub fn sensor(&self) -> Sensor {
        Sensor {
            fov_deg: self.fov_deg,
            range_cells: self.range_cells,
        }
    }
}

/// Result of one waypoint decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct NavEnv {
    world: Arc<GridWorld>,
    pub episode: Episode,
    pub params: EnvParams,
    pub pose: AgentPose,
    pub geometry: GeometryMap,
    pub acoustic: AcousticMap,
    rng: ChaCha8Rng,
    last: Observation,
    d_init: u32,
    pub decisions: usize,
    pub path_len: usize,
    pub actions: usize,
    pub collisions: usize,
    pub done: bool,
    pub stopped: bool,
    pub success: bool,
    /// Every pose visited, one entry per low-level action plus the start.
    pub trace: Vec<AgentPose>,
    /// Egocentric offset chosen at each decision.
    pub waypoints: Vec<(i64, i64)>,
}

impl NavEnv {
    /// Starts the episode and perceives at the start pose. `noise_seed`
    /// drives audio noise only.
    pub fn new(world: Arc<GridWorld>, episode: Episode, params: EnvParams, noise_seed: u64) -> Self {
        assert_eq!(episode.target, world.source, "episodes target the world's source");
        let pose = episode.start;
        let (h, w) = (world.height, world.width);
        let d_init = world.geodesic(pose.cell);
        let crop = params.crop;
        let mut env = NavEnv {
            world,
            episode,
            params,
            pose,
            geometry: GeometryMap::new(h, w),
            acoustic: AcousticMap::new(h, w),
            rng: ChaCha8Rng::seed_from_u64(noise_seed),
            last: Observation {
                geometry: crate::mapping::EgoCrop::zeros(crop, 2),
                acoustic: crate::mapping::EgoCrop::zeros(crop, 1),
                audio: BinauralAudio::silence(),
                goal: (0.0, 0.0),
            },
            d_init,
            decisions: 0,
            path_len: 0,
            actions: 0,
            collisions: 0,
            done: false,
            stopped: false,
            success: false,
            trace: vec![pose],
            waypoints: Vec::new(),
        };
        env.last = env.perceive_at(pose.heading);
        env
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }

    pub fn world_arc(&self) -> &Arc<GridWorld> {
        &self.world
    }

    /// Geodesic distance (cells) from the current cell to the source.
    pub fn distance(&self) -> u32 {
        self.world.geodesic(self.pose.cell)
    }

    fn audio_params(&self) -> AudioParams {
        AudioParams {
            amplitude: self.params.amplitude,
            exponent: self.params.exponent,
            gains: self.episode.gains,
            noise_std: self.params.noise_std,
        }
    }

    /// Looks and listens as if facing `heading` from the current cell,
    /// updates both global maps and returns the egocentric observation for
    /// that heading. The agent's own heading is left unchanged.
    pub fn perceive_at(&mut self, heading: Heading) -> Observation {
        let pose = AgentPose::new(self.pose.cell, heading);
        let seen = crate::world::perceive_visibility(&self.world, pose, self.params.fov_deg, self.params.range_cells);
        self.geometry.update(&seen);
        let audio = render_audio(&self.world, pose, &self.audio_params(), &mut self.rng);
        self.acoustic.update(pose.cell, &audio);
        self.snapshot(pose, audio)
    }

    /// Egocentric view of the current maps at `pose` with the given audio.
    pub fn snapshot(&self, pose: AgentPose, audio: BinauralAudio) -> Observation {
        Observation {
            geometry: self.geometry.crop(pose, self.params.crop),
            acoustic: self.acoustic.crop(pose, self.params.crop),
            audio,
            goal: goal_vector(pose, self.episode.target),
        }
    }

    /// Observation from the latest decision-point perception.
    pub fn observation(&self) -> &Observation {
        &self.last
    }

    /// Executes one waypoint decision given as an egocentric offset; `(0, 0)`
    /// is the stop decision.
    pub fn apply(&mut self, offset: (i64, i64)) -> StepOutcome {
        assert!(!self.done, "apply on a finished episode");
        let prev_d = self.distance();
        self.decisions += 1;
        self.waypoints.push(offset);
        if offset == (0, 0) {
            self.done = true;
            self.stopped = true;
            self.success = prev_d <= self.params.success_radius;
            return StepOutcome {
                reward: self.reward(prev_d, prev_d, self.success),
                done: true,
                success: self.success,
            };
        }
        let (dr, dc) = self.pose.ego_to_world(offset.0, offset.1);
        let target = (self.pose.cell.row as i64 + dr, self.pose.cell.col as i64 + dc);
        let tr = execute_transition(
            &self.world,
            &mut self.geometry,
            self.pose,
            target,
            self.params.replan_budget,
            self.params.sensor(),
        );
        self.pose = tr.pose;
        self.path_len += tr.forwards;
        self.actions += tr.actions;
        self.collisions += tr.collisions;
        self.trace.extend(tr.trace);
        self.last = self.perceive_at(self.pose.heading);
        let new_d = self.distance();
        if self.params.auto_stop && new_d <= self.params.success_radius {
            self.done = true;
            self.success = true;
        } else if self.decisions >= self.episode.step_limit {
            self.done = true;
        }
        StepOutcome {
            reward: self.reward(prev_d, new_d, self.success),
            done: self.done,
            success: self.success,
        }
    }

    fn reward(&self, prev_d: u32, new_d: u32, success: bool) -> f64 {
        let p = &self.params;
        weighted_reward(
            prev_d as f64,
            new_d as f64,
            success,
            p.progress_reward,
            p.success_reward,
            p.step_cost,
        )
    }

    /// Outcome summary; meaningful once the episode is done.
    pub fn result(&self) -> EpisodeResult {
        EpisodeResult {
            success: self.success,
            stopped: self.stopped,
            path_len: self.path_len,
            shortest_len: self.episode.shortest_len,
            actions: self.actions,
            shortest_actions: self.episode.shortest_actions,
            d_init: self.d_init as f64,
            d_final: self.distance() as f64,
            decisions: self.decisions,
            collisions: self.collisions,
        }
    }
}

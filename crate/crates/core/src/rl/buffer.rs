use serde::{Deserialize, Serialize};

use crate::evalx::{EpisodeResult, TrajectoryLog};
use crate::nnet::PolicyInput;

/// The teacher's detached view of one student step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherView {
    pub probs: Vec<f64>,
    pub entropy: f64,
    pub confidence: f64,
}

/// One waypoint decision under the behaviour policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub input: PolicyInput,
    /// Hidden state fed into this step.
    pub hidden_in: Vec<f64>,
    /// `hidden_in` is a fresh episode start.
    pub reset: bool,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    pub teacher: Option<TeacherView>,
}

/// Consecutive steps of one worker; episodes may start and end inside.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    /// Value of the state following the last step.
    pub bootstrap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutBuffer {
    pub trajectories: Vec<Trajectory>,
    /// Episodes that finished during collection, in completion order per
    /// worker.
    pub finished: Vec<EpisodeResult>,
    /// The same episodes with their poses and decisions.
    pub logs: Vec<TrajectoryLog>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.trajectories.iter().map(|t| t.steps.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.trajectories.iter().flat_map(|t| t.steps.iter())
    }

    /// Lengths agree, rewards are finite and every trajectory's episode
    /// boundaries line up with its reset flags.
    pub fn is_consistent(&self) -> bool {
        self.trajectories.iter().all(|t| {
            t.steps.iter().all(|s| s.reward.is_finite() && s.value.is_finite())
                && t.steps.windows(2).all(|w| w[0].done == w[1].reset)
        })
    }
}

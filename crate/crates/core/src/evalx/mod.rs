//! Evaluation: episode outcomes, navigation metrics, agents (learned,
//! ensembled, oracle, random), the audio direction predictor behind the
//! pseudo-GPS baseline, and trajectory renders.

mod agent;
mod predictor;
mod render;
mod run;

use serde::{Deserialize, Serialize};

pub use agent::{
    ensemble_forward, ensemble_maps, Agent, DecisionMaps, GoalSource, OracleAgent, PolicyAgent, RandomAgent,
};
pub use predictor::{angular_error, collect_direction_samples, DirectionPredictor, DirectionSample, PREDICTOR_MODEL};
pub use render::{path_color, render_trajectory_svg};
pub use run::{replay_success, run_eval, sample_episode_set, DecisionLog, EvalRun, EvalSet, TrajectoryLog};

/// Outcome of one episode. Distances are geodesic, in cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    /// Ended by an explicit stop decision.
    pub stopped: bool,
    /// Cells moved.
    pub path_len: usize,
    pub shortest_len: usize,
    /// Low-level actions executed (look-around turns excluded).
    pub actions: usize,
    pub shortest_actions: usize,
    pub d_init: f64,
    pub d_final: f64,
    pub decisions: usize,
    pub collisions: usize,
}

impl EpisodeResult {
    /// Stopped within `radius` of the source.
    pub fn success_within(&self, radius: f64) -> bool {
        self.stopped && self.d_final <= radius
    }

    fn path_ratio(&self) -> f64 {
        let l = self.shortest_len as f64;
        let denom = (self.path_len as f64).max(l);
        if denom > 0.0 {
            l / denom
        } else {
            1.0
        }
    }

    pub fn spl(&self) -> f64 {
        if self.success {
            self.path_ratio()
        } else {
            0.0
        }
    }

    pub fn soft_spl(&self) -> f64 {
        let progress = if self.d_init > 0.0 {
            (1.0 - self.d_final / self.d_init).max(0.0)
        } else {
            1.0
        };
        progress * self.path_ratio()
    }

    pub fn sna(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        let n_star = self.shortest_actions as f64;
        let denom = (self.actions as f64).max(n_star);
        if denom > 0.0 {
            n_star / denom
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    pub sr: f64,
    pub spl: f64,
    pub soft_spl: f64,
    pub sna: f64,
    /// Mean final geodesic distance (cells).
    pub ne: f64,
    /// Mean low-level action count.
    pub na: f64,
}

impl Metrics {
    pub const CSV_HEADER: &'static str = "label,episodes,sr,spl,soft_spl,sna,ne,na";

    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.episodes, self.sr, self.spl, self.soft_spl, self.sna, self.ne, self.na
        )
    }
}

/// SR, SPL, SoftSPL, SNA, NE and NA over a result set (all zero when
/// empty).
pub fn metrics(results: &[EpisodeResult]) -> Metrics {
    let n = results.len().max(1) as f64;
    let mean = |f: &dyn Fn(&EpisodeResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    Metrics {
        episodes: results.len(),
        sr: mean(&|r| r.success as u8 as f64),
        spl: mean(&|r| r.spl()),
        soft_spl: mean(&|r| r.soft_spl()),
        sna: mean(&|r| r.sna()),
        ne: mean(&|r| r.d_final),
        na: mean(&|r| r.actions as f64),
    }
}

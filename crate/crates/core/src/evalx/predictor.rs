use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distill::goal_vector;
use crate::nnet::{FitConfig, MlpModel};
use crate::rl::EpisodeSource;
use crate::world::{render_audio, AgentPose, AudioParams, BinauralAudio, Heading, UNREACHABLE};
use crate::Result;

pub const PREDICTOR_MODEL: &str = "direction_predictor";

/// Supervised audio → goal-vector regressor: predicts the egocentric unit
/// direction and the distance (scaled by 1/8) to the source.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionPredictor {
    pub model: MlpModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSample {
    pub features: Vec<f64>,
    /// Egocentric straight-line displacement to the source.
    pub goal: (f64, f64),
}

impl DirectionPredictor {
    pub fn new(hidden: usize, seed: u64) -> Self {
        DirectionPredictor {
            model: MlpModel::new(PREDICTOR_MODEL, &[BinauralAudio::FEATURES, hidden, hidden, 3], seed),
        }
    }

    /// Estimated egocentric goal displacement.
    pub fn predict(&self, audio: &BinauralAudio) -> (f64, f64) {
        let y = self.model.forward(&audio.features());
        let norm = (y[0] * y[0] + y[1] * y[1]).sqrt();
        if norm < 1e-9 {
            return (0.0, 0.0);
        }
        let dist = (y[2] * 8.0).max(0.0);
        (y[0] / norm * dist, y[1] / norm * dist)
    }

    fn target(goal: (f64, f64)) -> [f64; 3] {
        let d = (goal.0 * goal.0 + goal.1 * goal.1).sqrt();
        if d == 0.0 {
            [0.0, 0.0, 0.0]
        } else {
            [goal.0 / d, goal.1 / d, d / 8.0]
        }
    }

    /// Mean-squared-error fit; returns the final epoch's mean loss.
    pub fn train(&mut self, samples: &[DirectionSample], fit: FitConfig) -> Result<f64> {
        let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
        self.model.fit(&xs, fit, |out, i| {
            let t = DirectionPredictor::target(samples[i].goal);
            let mut loss = 0.0;
            let d: Vec<f64> = (0..3)
                .map(|j| {
                    let e = out[j] - t[j];
                    loss += e * e;
                    2.0 * e
                })
                .collect();
            (loss, d)
        })
    }

    pub fn save(&self, stem: &Path, config_hash: &str) -> Result<()> {
        self.model.save(stem, config_hash)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        Ok(DirectionPredictor {
            model: MlpModel::load(stem, PREDICTOR_MODEL)?,
        })
    }
}

/// Angle (radians) between two displacement vectors; π/2 when either is
/// zero.
pub fn angular_error(a: (f64, f64), b: (f64, f64)) -> f64 {
    let na = (a.0 * a.0 + a.1 * a.1).sqrt();
    let nb = (b.0 * b.0 + b.1 * b.1).sqrt();
    if na == 0.0 || nb == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    ((a.0 * b.0 + a.1 * b.1) / (na * nb)).clamp(-1.0, 1.0).acos()
}

/// Random poses (reachable, off the source) on the source's worlds with
/// sound profiles from its split.
pub fn collect_direction_samples(source: &EpisodeSource, n: usize, seed: u64) -> Vec<DirectionSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles = source.split.profiles();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let world = &source.worlds[rng.gen_range(0..source.worlds.len())];
        let cells: Vec<_> = world
            .free_cells()
            .filter(|&c| c != world.source && world.geodesic(c) != UNREACHABLE)
            .collect();
        if cells.is_empty() {
            continue;
        }
        let pose = AgentPose::new(
            cells[rng.gen_range(0..cells.len())],
            Heading::from_index(rng.gen_range(0..4)),
        );
        let params = AudioParams {
            amplitude: source.env.amplitude,
            exponent: source.env.exponent,
            gains: profiles[rng.gen_range(0..profiles.len())],
            noise_std: source.env.noise_std,
        };
        let audio = render_audio(world, pose, &params, &mut rng);
        out.push(DirectionSample {
            features: audio.features(),
            goal: goal_vector(pose, world.source),
        });
    }
    out
}

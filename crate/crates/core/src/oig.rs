//! Omnidirectional information gathering: look in every direction of a
//! set, derotate the per-direction action maps into the agent's frame and
//! average them; plus the auxiliary stop classifier.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evalx::{Agent, OracleAgent, PolicyAgent};
use crate::mapping::Observation;
use crate::nnet::layers::sigmoid;
use crate::nnet::{ActionMap, FitConfig, MlpModel, PolicyNet};
use crate::rl::EpisodeSource;
use crate::world::BinauralAudio;
use crate::{LabError, Result};

/// Directions to look in, in degrees clockwise relative to the agent's
/// heading at the start of the decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionSet {
    angles: Vec<i32>,
}

impl DirectionSet {
    /// Angles must be distinct right-angle multiples (taken modulo 360).
    pub fn new(angles: &[i32]) -> Result<DirectionSet> {
        let mut seen = Vec::new();
        for &a in angles {
            if a % 90 != 0 {
                return Err(LabError::NotRightAngle(a));
            }
            let a = a.rem_euclid(360);
            if seen.contains(&a) {
                return Err(LabError::Config(vec![format!("direction {a} listed twice")]));
            }
            seen.push(a);
        }
        if seen.is_empty() {
            return Err(LabError::Config(vec!["empty direction set".into()]));
        }
        Ok(DirectionSet { angles: seen })
    }

    /// `{0°, 90°, 180°, 270°}`.
    pub fn full() -> DirectionSet {
        DirectionSet {
            angles: vec![0, 90, 180, 270],
        }
    }

    /// Only the current heading: plain forward perception.
    pub fn forward() -> DirectionSet {
        DirectionSet { angles: vec![0] }
    }

    pub fn angles(&self) -> &[i32] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

impl Default for DirectionSet {
    fn default() -> Self {
        DirectionSet::full()
    }
}

/// Perceives once per direction, updating the episode's shared maps, and
/// returns the egocentric observation taken at each. The agent's pose is
/// untouched, so these look-around turns never enter the action count.
pub fn gather_observations(env: &mut crate::rl::NavEnv, dirs: &DirectionSet) -> Vec<Observation> {
    let heading = env.pose.heading;
    dirs.angles()
        .iter()
        .map(|&w| env.perceive_at(heading.rotated(w)))
        .collect()
}

/// Rotates an action map counter-clockwise by `theta` degrees.
pub fn rotate_map(map: &ActionMap, theta: i32) -> Result<ActionMap> {
    if theta % 90 != 0 {
        return Err(LabError::NotRightAngle(theta));
    }
    Ok(map.rotated_ccw(theta / 90))
}

/// `(1/n) Σ R(M_i, −ω_i)`: the mean of the maps after derotating each into
/// the frame of the agent's original heading.
pub fn aggregate(maps: &[ActionMap], dirs: &DirectionSet) -> Result<ActionMap> {
    if maps.len() != dirs.len() {
        return Err(LabError::LengthMismatch {
            what: "action maps vs directions",
            left: maps.len(),
            right: dirs.len(),
        });
    }
    let m = maps[0].m;
    let mut sum = vec![0.0; m * m];
    for (map, &w) in maps.iter().zip(dirs.angles()) {
        assert_eq!(map.m, m, "aggregated maps differ in size");
        for (s, v) in sum.iter_mut().zip(rotate_map(map, -w)?.probs) {
            *s += v;
        }
    }
    let n = maps.len() as f64;
    Ok(ActionMap::new(m, sum.into_iter().map(|v| v / n).collect()))
}

/// Probability that the agent already stands within the success radius,
/// from the current audio and the acoustic-map crop.
#[derive(Debug, Clone, PartialEq)]
pub struct StopNet {
    pub model: MlpModel,
    pub crop: usize,
    pub threshold: f64,
}

pub const STOP_MODEL: &str = "stop_net";

impl StopNet {
    pub fn new(crop: usize, hidden: usize, seed: u64) -> StopNet {
        StopNet {
            model: MlpModel::new(STOP_MODEL, &[BinauralAudio::FEATURES + crop * crop, hidden, 1], seed),
            crop,
            threshold: 0.5,
        }
    }

    pub fn features(obs: &Observation) -> Vec<f64> {
        let mut f = obs.audio.features();
        f.extend_from_slice(obs.acoustic.plane(0));
        f
    }

    pub fn probability(&self, obs: &Observation) -> f64 {
        sigmoid(self.model.forward(&StopNet::features(obs))[0])
    }

    pub fn should_stop(&self, obs: &Observation) -> bool {
        self.probability(obs) > self.threshold
    }

    /// Binary cross-entropy fit; returns the final epoch's mean loss.
    pub fn train(&mut self, samples: &[(Vec<f64>, bool)], fit: FitConfig) -> Result<f64> {
        let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.0.clone()).collect();
        self.model.fit(&xs, fit, |out, i| {
            let p = sigmoid(out[0]);
            let y = if samples[i].1 { 1.0 } else { 0.0 };
            let loss = -(y * p.max(1e-12).ln() + (1.0 - y) * (1.0 - p).max(1e-12).ln());
            (loss, vec![p - y])
        })
    }

    pub fn save(&self, stem: &Path, config_hash: &str) -> Result<()> {
        self.model.save(stem, config_hash)
    }

    pub fn load(stem: &Path) -> Result<StopNet> {
        let model = MlpModel::load(stem, STOP_MODEL)?;
        let n_in = model.sizes[0] - BinauralAudio::FEATURES;
        let crop = (n_in as f64).sqrt().round() as usize;
        Ok(StopNet {
            model,
            crop,
            threshold: 0.5,
        })
    }
}

/// Labelled decision-point observations (label: within the success
/// radius). Episodes alternate between the student's own sampled behaviour
/// and an oracle that walks to the source, so both typical and at-goal
/// situations are covered.
pub fn collect_stop_samples(
    source: &EpisodeSource,
    student: &PolicyNet,
    episodes: usize,
    seed: u64,
) -> Result<Vec<(Vec<f64>, bool)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = source.env.success_radius;
    let mut out = Vec::new();
    for e in 0..episodes {
        let mut env = source.spawn(&mut rng)?;
        let mut agent_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let mut agent: Box<dyn Agent> = if e % 2 == 0 {
            Box::new(PolicyAgent::single(student.clone(), false))
        } else {
            Box::new(OracleAgent)
        };
        agent.reset(&env);
        while !env.done {
            out.push((StopNet::features(env.observation()), env.distance() <= radius));
            let offset = agent.decide(&mut env, &mut agent_rng)?;
            env.apply(offset);
        }
        out.push((StopNet::features(env.observation()), env.distance() <= radius));
    }
    Ok(out)
}

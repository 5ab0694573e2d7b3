use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::predictor::DirectionPredictor;
use crate::mapping::Observation;
use crate::nnet::{sample_waypoint, ActionMap, PolicyNet};
use crate::oig::{aggregate, gather_observations, DirectionSet, StopNet};
use crate::rl::NavEnv;
use crate::Result;

/// Anything that picks egocentric waypoint offsets; `(0, 0)` stops.
pub trait Agent {
    fn reset(&mut self, env: &NavEnv);
    fn decide(&mut self, env: &mut NavEnv, rng: &mut ChaCha8Rng) -> Result<(i64, i64)>;
    /// Maps behind the latest decision, for logging.
    fn last_maps(&self) -> Option<&DecisionMaps> {
        None
    }
}

/// Per-direction maps (ensemble means) and their aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMaps {
    pub raw: Vec<ActionMap>,
    pub aggregate: ActionMap,
    pub stop_prob: Option<f64>,
}

/// Mean of the models' action maps with each model's next hidden state;
/// the hidden states passed in are not modified.
pub fn ensemble_maps(nets: &[PolicyNet], hidden: &[Vec<f64>], obs: &Observation) -> (ActionMap, Vec<Vec<f64>>) {
    assert!(
        !nets.is_empty() && nets.len() == hidden.len(),
        "one hidden state per model"
    );
    let m = nets[0].m();
    let mut sum = vec![0.0; m * m];
    let mut next = Vec::with_capacity(nets.len());
    for (net, h) in nets.iter().zip(hidden) {
        assert_eq!(net.m(), m, "ensemble members disagree on m");
        let out = net.step(&net.input(obs), h);
        for (s, p) in sum.iter_mut().zip(out.action_map(m).probs) {
            *s += p;
        }
        next.push(out.hidden);
    }
    let n = nets.len() as f64;
    (ActionMap::new(m, sum.into_iter().map(|v| v / n).collect()), next)
}

/// Averaged action map; every model advances its own hidden state.
pub fn ensemble_forward(nets: &[PolicyNet], hidden: &mut [Vec<f64>], obs: &Observation) -> ActionMap {
    let (map, next) = ensemble_maps(nets, hidden, obs);
    for (h, n) in hidden.iter_mut().zip(next) {
        *h = n;
    }
    map
}

/// Where a point-goal policy's goal vector comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GoalSource {
    /// The simulator's exact displacement (GPS+compass).
    True,
    /// Estimated from audio (pseudo-GPS).
    Predicted(DirectionPredictor),
}

/// A learned policy or ensemble, optionally with omnidirectional
/// gathering and a stop classifier.
#[derive(Debug, Clone)]
pub struct PolicyAgent {
    pub nets: Vec<PolicyNet>,
    hidden: Vec<Vec<f64>>,
    pub oig: Option<DirectionSet>,
    pub stop: Option<StopNet>,
    pub greedy: bool,
    pub goal: GoalSource,
    last: Option<DecisionMaps>,
}

impl PolicyAgent {
    pub fn new(nets: Vec<PolicyNet>, greedy: bool) -> Self {
        assert!(!nets.is_empty(), "at least one policy");
        let hidden = nets.iter().map(|n| n.initial_hidden()).collect();
        PolicyAgent {
            nets,
            hidden,
            oig: None,
            stop: None,
            greedy,
            goal: GoalSource::True,
            last: None,
        }
    }

    pub fn single(net: PolicyNet, greedy: bool) -> Self {
        PolicyAgent::new(vec![net], greedy)
    }

    pub fn with_oig(mut self, dirs: DirectionSet) -> Self {
        self.oig = Some(dirs);
        self
    }

    pub fn with_stop(mut self, stop: StopNet) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn with_goal(mut self, goal: GoalSource) -> Self {
        self.goal = goal;
        self
    }

    fn prepare(&self, mut obs: Observation) -> Observation {
        if let GoalSource::Predicted(p) = &self.goal {
            obs.goal = p.predict(&obs.audio);
        }
        obs
    }
}

impl Agent for PolicyAgent {
    fn reset(&mut self, _env: &NavEnv) {
        self.hidden = self.nets.iter().map(|n| n.initial_hidden()).collect();
        self.last = None;
    }

    fn decide(&mut self, env: &mut NavEnv, rng: &mut ChaCha8Rng) -> Result<(i64, i64)> {
        let (dirs, observations) = match &self.oig {
            Some(d) => (d.clone(), gather_observations(env, d)),
            None => (DirectionSet::forward(), vec![env.observation().clone()]),
        };
        let observations: Vec<Observation> = observations.into_iter().map(|o| self.prepare(o)).collect();
        // Each direction starts from the same (forked) hidden states; only
        // the original heading's update is kept.
        let keep = dirs.angles().iter().position(|&w| w == 0).unwrap_or(0);
        let mut raw = Vec::with_capacity(dirs.len());
        let mut committed = None;
        for (i, obs) in observations.iter().enumerate() {
            let (map, next) = ensemble_maps(&self.nets, &self.hidden, obs);
            raw.push(map);
            if i == keep {
                committed = Some(next);
            }
        }
        self.hidden = committed.expect("direction set is non-empty");
        let agg = aggregate(&raw, &dirs)?;
        let stop_prob = self.stop.as_ref().map(|s| s.probability(&observations[keep]));
        let stop_now = matches!((&self.stop, stop_prob), (Some(s), Some(p)) if p > s.threshold);
        let offset = if stop_now {
            (0, 0)
        } else {
            sample_waypoint(&agg, self.greedy, rng).offset
        };
        self.last = Some(DecisionMaps {
            raw,
            aggregate: agg,
            stop_prob,
        });
        Ok(offset)
    }

    fn last_maps(&self) -> Option<&DecisionMaps> {
        self.last.as_ref()
    }
}

/// Walks the ground-truth shortest path one cell per decision and stops
/// on the source.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleAgent;

impl Agent for OracleAgent {
    fn reset(&mut self, _env: &NavEnv) {}

    fn decide(&mut self, env: &mut NavEnv, _rng: &mut ChaCha8Rng) -> Result<(i64, i64)> {
        match env.world().geodesic_step(env.pose.cell) {
            Some(h) if env.distance() > 0 => {
                let (dr, dc) = h.unit();
                Ok(env.pose.world_to_ego(dr, dc))
            }
            _ => Ok((0, 0)),
        }
    }
}

/// Uniform waypoints over the m×m window (stop included).
#[derive(Debug, Clone, Copy)]
pub struct RandomAgent {
    pub m: usize,
}

impl Agent for RandomAgent {
    fn reset(&mut self, _env: &NavEnv) {}

    fn decide(&mut self, _env: &mut NavEnv, rng: &mut ChaCha8Rng) -> Result<(i64, i64)> {
        let half = (self.m / 2) as i64;
        Ok((rng.gen_range(-half..=half), rng.gen_range(-half..=half)))
    }
}

//! Recurrent waypoint policies: the audio-goal student and the point-goal
//! teacher share one architecture and differ only in their inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::action_map::ActionMap;
use super::layers::{log_softmax, relu_backward, relu_in_place, softmax, Gru, GruCache, Linear};
use super::tensor::{Grads, ParamSet};
use crate::mapping::{EgoCrop, Observation};
use crate::world::BinauralAudio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    /// Audio + geometry + acoustic map (the audio-goal policy).
    Student,
    /// Goal displacement + geometry (the point-goal policy).
    Teacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Action-map side.
    pub m: usize,
    pub map_hidden: usize,
    pub aux_hidden: usize,
    pub hidden: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            m: 9,
            map_hidden: 64,
            aux_hidden: 32,
            hidden: 128,
        }
    }
}

impl NetConfig {
    /// Egocentric crop side fed to the map encoder.
    pub fn crop(&self) -> usize {
        2 * self.m - 1
    }

    pub fn map_channels(&self, kind: NetKind) -> usize {
        match kind {
            NetKind::Student => 3,
            NetKind::Teacher => 2,
        }
    }

    pub fn aux_dim(&self, kind: NetKind) -> usize {
        match kind {
            NetKind::Student => BinauralAudio::FEATURES,
            NetKind::Teacher => GOAL_SCALARS + self.m * self.m,
        }
    }
}

const GOAL_SCALARS: usize = 8;

/// Goal displacement features: scaled raw vector, the vector clamped to the
/// waypoint window, distance, unit direction, an at-goal flag, then an m×m
/// plane holding the goal (shrunk along its direction into the window)
/// bilinearly spread over the nearest cells.
pub fn goal_features(goal: (f64, f64), m: usize) -> Vec<f64> {
    let (dr, dc) = goal;
    let half = (m / 2) as f64;
    let norm = (dr * dr + dc * dc).sqrt();
    let (ur, uc) = if norm > 0.0 { (dr / norm, dc / norm) } else { (0.0, 0.0) };
    let mut f = vec![
        dr / 8.0,
        dc / 8.0,
        dr.clamp(-half, half) / half,
        dc.clamp(-half, half) / half,
        norm / 8.0,
        ur,
        uc,
        if norm == 0.0 { 1.0 } else { 0.0 },
    ];
    let reach = dr.abs().max(dc.abs());
    let shrink = if reach > half { half / reach } else { 1.0 };
    let (r, c) = (dr * shrink + half, dc * shrink + half);
    let (r0, c0) = (r.floor().min(2.0 * half), c.floor().min(2.0 * half));
    let (fr, fc) = (r - r0, c - c0);
    let mut plane = vec![0.0; m * m];
    for (i, wr) in [(0usize, 1.0 - fr), (1, fr)] {
        for (j, wc) in [(0usize, 1.0 - fc), (1, fc)] {
            let (rr, cc) = (r0 as usize + i, c0 as usize + j);
            if wr * wc > 0.0 && rr < m && cc < m {
                plane[rr * m + cc] += wr * wc;
            }
        }
    }
    f.extend(plane);
    f
}

/// Flattened network input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyInput {
    pub map: Vec<f64>,
    pub aux: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub logits: Vec<f64>,
    pub value: f64,
    pub hidden: Vec<f64>,
}

impl StepOutput {
    pub fn action_map(&self, m: usize) -> ActionMap {
        ActionMap::new(m, softmax(&self.logits))
    }

    pub fn log_probs(&self) -> Vec<f64> {
        log_softmax(&self.logits)
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub input: PolicyInput,
    m1: Vec<f64>,
    m2: Vec<f64>,
    a: Vec<f64>,
    x: Vec<f64>,
    gru: GruCache,
    pub out: StepOutput,
}

#[derive(Debug, Clone, PartialEq)]
struct Layers {
    map1: Linear,
    map2: Linear,
    aux: Linear,
    gru: Gru,
    action: Linear,
    value: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub kind: NetKind,
    pub config: NetConfig,
    pub params: ParamSet,
    layers: Layers,
}

impl PolicyNet {
    pub fn new(kind: NetKind, config: NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        let c = config.crop();
        let map_in = config.map_channels(kind) * c * c;
        let g = std::f64::consts::SQRT_2;
        let map1 = Linear::new(&mut params, "map1", map_in, config.map_hidden, g, &mut rng);
        let map2 = Linear::new(&mut params, "map2", config.map_hidden, config.map_hidden, g, &mut rng);
        let aux = Linear::new(&mut params, "aux", config.aux_dim(kind), config.aux_hidden, g, &mut rng);
        let gru = Gru::new(
            &mut params,
            "gru",
            config.map_hidden + config.aux_hidden,
            config.hidden,
            &mut rng,
        );
        // Small action head: near-uniform initial maps.
        let action = Linear::new(
            &mut params,
            "action",
            config.hidden,
            config.m * config.m,
            0.01,
            &mut rng,
        );
        let value = Linear::new(&mut params, "value", config.hidden, 1, 1.0, &mut rng);
        params.quantize_f32();
        PolicyNet {
            kind,
            config,
            params,
            layers: Layers {
                map1,
                map2,
                aux,
                gru,
                action,
                value,
            },
        }
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    pub fn initial_hidden(&self) -> Vec<f64> {
        vec![0.0; self.config.hidden]
    }

    /// Builds the network input for this policy's kind from an observation.
    pub fn input(&self, obs: &Observation) -> PolicyInput {
        let c = self.config.crop();
        assert_eq!(obs.geometry.size, c, "geometry crop size");
        let mut map = obs.geometry.data.clone();
        match self.kind {
            NetKind::Student => {
                assert_eq!(obs.acoustic.size, c, "acoustic crop size");
                map.extend_from_slice(&obs.acoustic.data);
                PolicyInput {
                    map,
                    aux: obs.audio.features(),
                }
            }
            NetKind::Teacher => PolicyInput {
                map,
                aux: goal_features(obs.goal, self.config.m),
            },
        }
    }

    pub fn step(&self, input: &PolicyInput, hidden: &[f64]) -> StepOutput {
        self.step_cached(input, hidden).out
    }

    pub fn step_cached(&self, input: &PolicyInput, hidden: &[f64]) -> StepCache {
        let l = &self.layers;
        let p = &self.params;
        let mut m1 = l.map1.forward_vec(p, &input.map);
        relu_in_place(&mut m1);
        let mut m2 = l.map2.forward_vec(p, &m1);
        relu_in_place(&mut m2);
        let mut a = l.aux.forward_vec(p, &input.aux);
        relu_in_place(&mut a);
        let mut x = m2.clone();
        x.extend_from_slice(&a);
        let (h, gru) = l.gru.forward(p, &x, hidden);
        let logits = l.action.forward_vec(p, &h);
        let value = l.value.forward_vec(p, &h)[0];
        StepCache {
            input: input.clone(),
            m1,
            m2,
            a,
            x,
            gru,
            out: StepOutput {
                logits,
                value,
                hidden: h,
            },
        }
    }

    /// Backpropagation through time over one contiguous chunk. `resets[t]`
    /// marks steps whose incoming hidden state was a fresh episode start;
    /// no gradient crosses those boundaries or the chunk's first step.
    pub fn backward_sequence(
        &self,
        caches: &[StepCache],
        resets: &[bool],
        dlogits: &[Vec<f64>],
        dvalues: &[f64],
        grads: &mut Grads,
    ) {
        let l = &self.layers;
        let p = &self.params;
        let hs = self.config.hidden;
        let mut dh_next = vec![0.0; hs];
        for t in (0..caches.len()).rev() {
            let c = &caches[t];
            let mut dh = dh_next.clone();
            l.action.backward(p, &c.out.hidden, &dlogits[t], grads, Some(&mut dh));
            l.value.backward(p, &c.out.hidden, &[dvalues[t]], grads, Some(&mut dh));
            let (dx, dh_prev) = l.gru.backward(p, &c.x, &c.gru, &dh, grads);
            let mh = self.config.map_hidden;
            let mut dm2 = dx[..mh].to_vec();
            let mut da = dx[mh..].to_vec();
            relu_backward(&c.m2, &mut dm2);
            relu_backward(&c.a, &mut da);
            let mut dm1 = vec![0.0; mh];
            l.map2.backward(p, &c.m1, &dm2, grads, Some(&mut dm1));
            relu_backward(&c.m1, &mut dm1);
            l.map1.backward(p, &c.input.map, &dm1, grads, None);
            l.aux.backward(p, &c.input.aux, &da, grads, None);
            dh_next = if resets[t] { vec![0.0; hs] } else { dh_prev };
        }
    }

    /// Student forward pass: (action map, value, next hidden state).
    pub fn forward_student(&self, hidden: &[f64], obs: &Observation) -> (ActionMap, f64, Vec<f64>) {
        assert_eq!(self.kind, NetKind::Student, "forward_student on a teacher net");
        let out = self.step(&self.input(obs), hidden);
        (out.action_map(self.m()), out.value, out.hidden)
    }

    /// Teacher forward pass from the agent-frame goal vector and geometry crop.
    pub fn forward_teacher(&self, hidden: &[f64], goal: (f64, f64), geometry: &EgoCrop) -> (ActionMap, f64, Vec<f64>) {
        assert_eq!(self.kind, NetKind::Teacher, "forward_teacher on a student net");
        assert_eq!(geometry.size, self.config.crop(), "geometry crop size");
        let input = PolicyInput {
            map: geometry.data.clone(),
            aux: goal_features(goal, self.m()),
        };
        let out = self.step(&input, hidden);
        (out.action_map(self.m()), out.value, out.hidden)
    }

    pub(crate) fn rebuild(kind: NetKind, config: NetConfig, params: ParamSet) -> Self {
        let mut net = PolicyNet::new(kind, config, 0);
        net.params = params;
        net
    }
}

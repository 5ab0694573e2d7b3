//! Flat JSON experiment configuration: every field optional, unknown keys
//! rejected, every problem reported at once.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distill::{DistillMode, KlDirection};
use crate::nnet::NetConfig;
use crate::oig::DirectionSet;
use crate::rl::{EnvParams, Target, TrainConfig};
use crate::world::{EpisodeBounds, SoundSplit};
use crate::{LabError, Result};

/// Environment variable that overrides `seed`.
pub const SEED_ENV: &str = "ORAN_LAB_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabConfig {
    /// Drives initialisation, rollouts and sampling.
    pub seed: u64,
    /// Drives world generation and the evaluation episode sets, so runs
    /// with different `seed`s face identical problems.
    pub world_seed: u64,

    pub world_height: usize,
    pub world_width: usize,
    pub obstacle_density: f64,
    pub train_worlds: usize,
    pub val_worlds: usize,
    pub test_worlds: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub step_limit: usize,

    pub fov_deg: f64,
    pub range_cells: usize,
    pub amplitude: f64,
    pub exponent: f64,
    pub noise_std: f64,
    pub success_radius: u32,
    pub replan_budget: usize,
    pub auto_stop: bool,
    pub progress_reward: f64,
    pub success_reward: f64,
    pub step_cost: f64,

    pub m: usize,
    pub map_hidden: usize,
    pub aux_hidden: usize,
    pub hidden: usize,

    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub workers: usize,
    pub rollout_len: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub chunk_len: usize,
    pub probe_every: usize,
    pub probe_episodes: usize,

    pub teacher_updates: usize,
    /// Teacher-only overrides of `lr`, `gamma` and `ent_coef`.
    pub teacher_lr: f64,
    pub teacher_gamma: f64,
    pub teacher_ent_coef: f64,
    pub teacher_target_sr: f64,
    pub teacher_target_spl: f64,
    pub student_updates: usize,
    pub lambda_cd: f64,
    pub k: usize,
    pub distill_mode: DistillMode,
    pub kl_direction: KlDirection,

    pub oig_directions: Vec<i32>,
    pub stop_hidden: usize,
    pub stop_episodes: usize,
    pub stop_epochs: usize,
    pub predictor_hidden: usize,
    pub predictor_samples: usize,
    pub predictor_epochs: usize,

    pub eval_episodes: usize,
    pub eval_split: SoundSplit,
    pub greedy: bool,
}

impl Default for LabConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let e = EnvParams::default();
        let n = NetConfig::default();
        let b = EpisodeBounds::default();
        LabConfig {
            seed: 1,
            world_seed: 7,
            world_height: 12,
            world_width: 12,
            obstacle_density: 0.15,
            train_worlds: 32,
            val_worlds: 8,
            test_worlds: 8,
            min_len: b.min_len,
            max_len: b.max_len,
            step_limit: b.step_limit,
            fov_deg: e.fov_deg,
            range_cells: e.range_cells,
            amplitude: e.amplitude,
            exponent: e.exponent,
            noise_std: e.noise_std,
            success_radius: e.success_radius,
            replan_budget: e.replan_budget,
            auto_stop: e.auto_stop,
            progress_reward: e.progress_reward,
            success_reward: e.success_reward,
            step_cost: e.step_cost,
            m: n.m,
            map_hidden: n.map_hidden,
            aux_hidden: n.aux_hidden,
            hidden: n.hidden,
            gamma: t.gamma,
            gae_lambda: t.gae_lambda,
            clip: t.clip,
            ent_coef: t.ent_coef,
            vf_coef: t.vf_coef,
            lr: t.lr,
            max_grad_norm: t.max_grad_norm,
            workers: t.workers,
            rollout_len: t.rollout_len,
            epochs: t.epochs,
            minibatches: t.minibatches,
            chunk_len: t.chunk_len,
            probe_every: t.probe_every,
            probe_episodes: t.probe_episodes,
            teacher_updates: 300,
            teacher_lr: 2e-3,
            teacher_gamma: 0.9,
            teacher_ent_coef: 0.05,
            teacher_target_sr: 0.95,
            teacher_target_spl: 0.8,
            student_updates: 200,
            lambda_cd: t.lambda_cd,
            k: t.k,
            distill_mode: t.distill_mode,
            kl_direction: t.kl_direction,
            oig_directions: DirectionSet::full().angles().to_vec(),
            stop_hidden: 32,
            stop_episodes: 300,
            stop_epochs: 30,
            predictor_hidden: 32,
            predictor_samples: 8000,
            predictor_epochs: 40,
            eval_episodes: 200,
            eval_split: SoundSplit::Heard,
            greedy: true,
        }
    }
}

impl LabConfig {
    /// Parses JSON text. Empty or whitespace-only text yields the defaults.
    pub fn from_json(text: &str) -> Result<LabConfig> {
        if text.trim().is_empty() {
            return Ok(LabConfig::default());
        }
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| LabError::Config(vec!["configuration must be a JSON object".into()]))?;
        let defaults = serde_json::to_value(LabConfig::default())?;
        let known = defaults.as_object().expect("struct serializes to an object");
        let mut problems = Vec::new();
        for (key, v) in obj {
            if !known.contains_key(key) {
                problems.push(format!("unknown key {key:?}"));
                continue;
            }
            // Type-check each key on its own so every bad one is listed.
            let mut probe = known.clone();
            probe.insert(key.clone(), v.clone());
            if let Err(e) = serde_json::from_value::<LabConfig>(serde_json::Value::Object(probe)) {
                problems.push(format!("{key}: {e}"));
            }
        }
        if !problems.is_empty() {
            return Err(LabError::Config(problems));
        }
        let cfg: LabConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<LabConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Format {
            path: path.to_path_buf(),
            msg: format!("cannot read config: {e}"),
        })?;
        LabConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key=value` overrides; values are parsed as JSON and fall
    /// back to plain strings. The result is validated like a file.
    pub fn with_overrides(&self, pairs: &[(String, String)]) -> Result<LabConfig> {
        if pairs.is_empty() {
            return Ok(self.clone());
        }
        let mut value = serde_json::to_value(self)?;
        let obj = value.as_object_mut().expect("struct serializes to an object");
        for (k, v) in pairs {
            let parsed = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.clone()));
            obj.insert(k.clone(), parsed);
        }
        LabConfig::from_json(&value.to_string())
    }

    /// Applies `ORAN_LAB_SEED` when set.
    pub fn with_env_overrides(mut self) -> Result<LabConfig> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| LabError::Config(vec![format!("{SEED_ENV}={v:?} is not an unsigned integer")]))?;
        }
        Ok(self)
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Every out-of-range value.
    pub fn problems(&self) -> Vec<String> {
        let mut p = self.train_config(1).problems();
        for (name, v, hi) in [
            ("teacher_lr", self.teacher_lr, 1.0),
            ("teacher_gamma", self.teacher_gamma, 1.0),
            ("teacher_ent_coef", self.teacher_ent_coef, 1.0),
        ] {
            if !(v >= 0.0 && v <= hi) {
                p.push(format!("{name} = {v} outside [0, {hi}]"));
            }
        }
        let mut check = |ok: bool, msg: String| {
            if !ok {
                p.push(msg);
            }
        };
        check(
            self.world_height >= 8,
            format!("world_height = {} must be at least 8", self.world_height),
        );
        check(
            self.world_width >= 8,
            format!("world_width = {} must be at least 8", self.world_width),
        );
        check(
            (0.0..=0.4).contains(&self.obstacle_density),
            format!("obstacle_density = {} outside [0, 0.4]", self.obstacle_density),
        );
        for (name, v) in [
            ("train_worlds", self.train_worlds),
            ("val_worlds", self.val_worlds),
            ("test_worlds", self.test_worlds),
            ("step_limit", self.step_limit),
            ("range_cells", self.range_cells),
            ("hidden", self.hidden),
            ("map_hidden", self.map_hidden),
            ("aux_hidden", self.aux_hidden),
            ("stop_hidden", self.stop_hidden),
            ("predictor_hidden", self.predictor_hidden),
            ("eval_episodes", self.eval_episodes),
        ] {
            check(v > 0, format!("{name} must be positive"));
        }
        check(
            self.min_len >= 1 && self.min_len <= self.max_len,
            format!("need 1 <= min_len ({}) <= max_len ({})", self.min_len, self.max_len),
        );
        check(
            self.m >= 3 && self.m % 2 == 1,
            format!("m = {} must be odd and at least 3", self.m),
        );
        check(
            self.fov_deg > 0.0 && self.fov_deg <= 180.0,
            format!("fov_deg = {} outside (0, 180]", self.fov_deg),
        );
        check(
            self.amplitude > 0.0,
            format!("amplitude = {} must be positive", self.amplitude),
        );
        check(
            self.exponent >= 0.0,
            format!("exponent = {} must be nonnegative", self.exponent),
        );
        check(
            self.noise_std >= 0.0,
            format!("noise_std = {} must be nonnegative", self.noise_std),
        );
        check(
            (0.0..=1.0).contains(&self.teacher_target_sr),
            format!("teacher_target_sr = {} outside [0, 1]", self.teacher_target_sr),
        );
        check(
            (0.0..=1.0).contains(&self.teacher_target_spl),
            format!("teacher_target_spl = {} outside [0, 1]", self.teacher_target_spl),
        );
        if let Err(e) = DirectionSet::new(&self.oig_directions) {
            p.push(format!("oig_directions: {e}"));
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(LabError::Config(p))
        }
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            m: self.m,
            map_hidden: self.map_hidden,
            aux_hidden: self.aux_hidden,
            hidden: self.hidden,
        }
    }

    pub fn env_params(&self) -> EnvParams {
        EnvParams {
            fov_deg: self.fov_deg,
            range_cells: self.range_cells,
            amplitude: self.amplitude,
            exponent: self.exponent,
            noise_std: self.noise_std,
            success_radius: self.success_radius,
            replan_budget: self.replan_budget,
            crop: 2 * self.m - 1,
            auto_stop: self.auto_stop,
            progress_reward: self.progress_reward,
            success_reward: self.success_reward,
            step_cost: self.step_cost,
        }
    }

    pub fn bounds(&self) -> EpisodeBounds {
        EpisodeBounds {
            min_len: self.min_len,
            max_len: self.max_len,
            step_limit: self.step_limit,
        }
    }

    pub fn train_config(&self, updates: usize) -> TrainConfig {
        TrainConfig {
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            clip: self.clip,
            ent_coef: self.ent_coef,
            vf_coef: self.vf_coef,
            lr: self.lr,
            max_grad_norm: self.max_grad_norm,
            workers: self.workers,
            rollout_len: self.rollout_len,
            epochs: self.epochs,
            minibatches: self.minibatches,
            chunk_len: self.chunk_len,
            lambda_cd: self.lambda_cd,
            k: self.k,
            distill_mode: self.distill_mode,
            kl_direction: self.kl_direction,
            updates,
            probe_every: self.probe_every,
            probe_episodes: self.probe_episodes,
        }
    }

    /// Student settings with the teacher's overrides applied.
    pub fn teacher_train_config(&self, updates: usize) -> TrainConfig {
        TrainConfig {
            lr: self.teacher_lr,
            gamma: self.teacher_gamma,
            ent_coef: self.teacher_ent_coef,
            ..self.train_config(updates)
        }
    }

    pub fn teacher_target(&self) -> Target {
        Target {
            sr: self.teacher_target_sr,
            spl: self.teacher_target_spl,
        }
    }

    pub fn directions(&self) -> Result<DirectionSet> {
        DirectionSet::new(&self.oig_directions)
    }
}

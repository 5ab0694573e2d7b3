//! Small supervised multilayer perceptrons (stop net, direction predictor).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{check_layout, read_params, tensor_meta, write_params, CheckpointMeta, FORMAT};
use super::layers::Mlp;
use super::optim::Adam;
use super::tensor::ParamSet;
use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// Model tag stored in checkpoints.
    pub model: String,
    pub sizes: Vec<usize>,
    pub params: ParamSet,
    mlp: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl MlpModel {
    pub fn new(model: &str, sizes: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        let mlp = Mlp::new(&mut params, model, sizes, &mut rng);
        params.quantize_f32();
        MlpModel {
            model: model.into(),
            sizes: sizes.to_vec(),
            params,
            mlp,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.sizes[0], "{} input size", self.model);
        self.mlp.forward(&self.params, x)
    }

    /// Minibatch Adam on `loss(output, index) -> (loss, d output)`; returns
    /// the mean loss of the final epoch.
    pub fn fit(
        &mut self,
        inputs: &[Vec<f64>],
        cfg: FitConfig,
        loss: impl Fn(&[f64], usize) -> (f64, Vec<f64>),
    ) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut adam = Adam::new(&self.params);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut last = 0.0;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch.max(1)) {
                let mut g = self.params.zeros_like();
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let acts = self.mlp.forward_all(&self.params, &inputs[i]);
                    let (l, mut d) = loss(acts.last().expect("non-empty"), i);
                    total += l;
                    d.iter_mut().for_each(|v| *v *= scale);
                    self.mlp.backward(&self.params, &acts, &d, &mut g);
                }
                if !g.all_finite() {
                    return Err(LabError::NonFinite {
                        update: epoch,
                        detail: format!("{} gradient", self.model),
                    });
                }
                adam.step(&mut self.params, &g, cfg.lr);
            }
            last = total / inputs.len().max(1) as f64;
        }
        Ok(last)
    }

    pub fn save(&self, stem: &Path, config_hash: &str) -> Result<()> {
        let meta = CheckpointMeta {
            format: FORMAT.into(),
            model: self.model.clone(),
            architecture: serde_json::json!({ "sizes": self.sizes }),
            tensors: tensor_meta(&self.params),
            config_hash: config_hash.into(),
            step: 0,
        };
        write_params(stem, &meta, &self.params)
    }

    /// Loads a checkpoint whose model tag must equal `model`.
    pub fn load(stem: &Path, model: &str) -> Result<MlpModel> {
        let (meta, params) = read_params(stem)?;
        if meta.model != model {
            return Err(LabError::Checkpoint {
                path: stem.to_path_buf(),
                msg: format!("expected a {model} checkpoint, found {}", meta.model),
            });
        }
        let sizes: Vec<usize> = serde_json::from_value(meta.architecture["sizes"].clone())?;
        let mut m = MlpModel::new(model, &sizes, 0);
        check_layout(stem, &m.params, &params)?;
        m.params = params;
        Ok(m)
    }
}

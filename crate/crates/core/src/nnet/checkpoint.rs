//! Checkpoints: a JSON metadata document next to a raw little-endian `f32`
//! parameter block (`<stem>.json` + `<stem>.bin`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::policy::{NetConfig, NetKind, PolicyNet};
use super::tensor::{ParamSet, Tensor};
use crate::error::{LabError, Result};

pub const FORMAT: &str = "oran-lab-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    /// What the parameters belong to, e.g. `student`, `teacher`, `stop_net`.
    pub model: String,
    /// Architecture settings needed to rebuild the model.
    pub architecture: serde_json::Value,
    pub tensors: Vec<TensorMeta>,
    pub config_hash: String,
    pub step: u64,
}

pub fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

pub fn write_params(stem: &Path, meta: &CheckpointMeta, params: &ParamSet) -> Result<()> {
    let (json, bin) = paths(stem);
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut block = Vec::with_capacity(params.count() * 4);
    for t in &params.tensors {
        for &v in &t.data {
            block.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(&bin, block)?;
    fs::write(&json, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn read_params(stem: &Path) -> Result<(CheckpointMeta, ParamSet)> {
    let (json, bin) = paths(stem);
    let err = |msg: String| LabError::Checkpoint {
        path: stem.to_path_buf(),
        msg,
    };
    let meta: CheckpointMeta = serde_json::from_str(
        &fs::read_to_string(&json).map_err(|e| err(format!("cannot read {}: {e}", json.display())))?,
    )?;
    if meta.format != FORMAT {
        return Err(err(format!("unknown format {:?}", meta.format)));
    }
    let block = fs::read(&bin).map_err(|e| err(format!("cannot read {}: {e}", bin.display())))?;
    let expected: usize = meta.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if block.len() != expected * 4 {
        return Err(err(format!(
            "parameter block has {} bytes, expected {}",
            block.len(),
            expected * 4
        )));
    }
    let mut params = ParamSet::default();
    let mut floats = block
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);
    for t in &meta.tensors {
        let mut tensor = Tensor::zeros(t.name.clone(), &t.shape);
        for v in &mut tensor.data {
            *v = floats.next().expect("length checked");
        }
        params.add(tensor);
    }
    Ok((meta, params))
}

pub fn tensor_meta(params: &ParamSet) -> Vec<TensorMeta> {
    params
        .tensors
        .iter()
        .map(|t| TensorMeta {
            name: t.name.clone(),
            shape: t.shape.clone(),
        })
        .collect()
}

/// Checks that loaded tensors match the layout a freshly built model expects.
pub fn check_layout(stem: &Path, expected: &ParamSet, loaded: &ParamSet) -> Result<()> {
    let a = tensor_meta(expected);
    let b = tensor_meta(loaded);
    if a != b {
        return Err(LabError::Checkpoint {
            path: stem.to_path_buf(),
            msg: "tensor layout does not match the declared architecture".into(),
        });
    }
    Ok(())
}

/// SHA-256 over the metadata and parameter files, hex encoded.
pub fn content_hash(stem: &Path) -> Result<String> {
    let (json, bin) = paths(stem);
    let mut h = Sha256::new();
    h.update(fs::read(json)?);
    h.update(fs::read(bin)?);
    Ok(hex::encode(h.finalize()))
}

fn model_name(kind: NetKind) -> &'static str {
    match kind {
        NetKind::Student => "student",
        NetKind::Teacher => "teacher",
    }
}

impl PolicyNet {
    pub fn save(&self, stem: &Path, config_hash: &str, step: u64) -> Result<()> {
        let meta = CheckpointMeta {
            format: FORMAT.into(),
            model: model_name(self.kind).into(),
            architecture: serde_json::to_value(&self.config)?,
            tensors: tensor_meta(&self.params),
            config_hash: config_hash.into(),
            step,
        };
        write_params(stem, &meta, &self.params)
    }

    pub fn load(stem: &Path) -> Result<(PolicyNet, CheckpointMeta)> {
        let (meta, params) = read_params(stem)?;
        let kind = match meta.model.as_str() {
            "student" => NetKind::Student,
            "teacher" => NetKind::Teacher,
            other => {
                return Err(LabError::Checkpoint {
                    path: stem.to_path_buf(),
                    msg: format!("not a policy checkpoint: {other}"),
                })
            }
        };
        let config: NetConfig = serde_json::from_value(meta.architecture.clone())?;
        let fresh = PolicyNet::new(kind, config.clone(), 0);
        check_layout(stem, &fresh.params, &params)?;
        Ok((PolicyNet::rebuild(kind, config, params), meta))
    }
}

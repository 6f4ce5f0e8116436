//! `PRIFCKPT` checkpoints: JSON header plus little-endian f32 tensors in
//! header order.

use std::path::Path;

use prif_core::dataset::DatasetMeta;
use prif_core::model::{PrifConfig, PrifModel};
use prif_core::nn::{Mlp, MlpSpec};
use prif_core::rays::EncodingMode;
use serde::{Deserialize, Serialize};

use crate::container::{self, f32s_to_le, le_to_f32s};
use crate::error::{IoError, IoResult};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PRIFCKPT";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    /// Network layout; absent for the latent table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<MlpSpec>,
    pub len: usize,
}

/// Latent table row for one training shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub id: u16,
    pub mesh_hash: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointHeader {
    Prif {
        mode: EncodingMode,
        latent_dim: usize,
        color_head: bool,
        config: PrifConfig,
        shapes: Vec<ShapeEntry>,
        tensors: Vec<TensorEntry>,
        /// Rig the model was trained on.
        dataset: Option<DatasetMeta>,
    },
    Sdf {
        tensors: Vec<TensorEntry>,
        mesh_hash: Option<u64>,
    },
}

#[derive(Debug, Clone)]
pub struct PrifCheckpoint {
    pub model: PrifModel,
    pub shapes: Vec<ShapeEntry>,
    pub dataset: Option<DatasetMeta>,
}

#[derive(Debug, Clone)]
pub struct SdfCheckpoint {
    pub net: Mlp,
    pub mesh_hash: Option<u64>,
}

#[derive(Debug, Clone)]
pub enum Checkpoint {
    Prif(PrifCheckpoint),
    Sdf(SdfCheckpoint),
}

fn entry(name: &str, m: &Mlp) -> TensorEntry {
    TensorEntry {
        name: name.into(),
        spec: Some(*m.spec()),
        len: m.params().len(),
    }
}

pub fn encode_prif(ckpt: &PrifCheckpoint) -> Vec<u8> {
    let model = &ckpt.model;
    let config = *model.config();
    let mut nets = vec![("trunk", model.trunk())];
    nets.extend(model.mask_net().map(|m| ("mask", m)));
    nets.extend(model.color_net().map(|m| ("color", m)));
    let mut tensors: Vec<TensorEntry> = nets.iter().map(|(n, m)| entry(n, m)).collect();
    let mut body = Vec::new();
    for (_, m) in &nets {
        f32s_to_le(m.params(), &mut body);
    }
    if !model.latents().is_empty() {
        tensors.push(TensorEntry {
            name: "latents".into(),
            spec: None,
            len: model.latents().len(),
        });
        f32s_to_le(model.latents(), &mut body);
    }
    let header = CheckpointHeader::Prif {
        mode: config.mode,
        latent_dim: config.latent_dim,
        color_head: config.color,
        config,
        shapes: ckpt.shapes.clone(),
        tensors,
        dataset: ckpt.dataset.clone(),
    };
    container::encode(CHECKPOINT_MAGIC, &header, &body)
}

pub fn encode_sdf(ckpt: &SdfCheckpoint) -> Vec<u8> {
    let header = CheckpointHeader::Sdf {
        tensors: vec![entry("sdf", &ckpt.net)],
        mesh_hash: ckpt.mesh_hash,
    };
    let mut body = Vec::new();
    f32s_to_le(ckpt.net.params(), &mut body);
    container::encode(CHECKPOINT_MAGIC, &header, &body)
}

fn split_tensors(
    tensors: &[TensorEntry],
    body: &[u8],
) -> Result<Vec<(String, Option<MlpSpec>, Vec<f32>)>, String> {
    let total: usize = tensors.iter().map(|t| t.len).sum();
    if body.len() != total * 4 {
        return Err(format!(
            "body has {} bytes, header declares {}",
            body.len(),
            total * 4
        ));
    }
    let mut off = 0;
    Ok(tensors
        .iter()
        .map(|t| {
            let v = le_to_f32s(&body[off..off + t.len * 4]);
            off += t.len * 4;
            (t.name.clone(), t.spec, v)
        })
        .collect())
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, String> {
    let (header, body): (CheckpointHeader, _) = container::decode(CHECKPOINT_MAGIC, bytes)?;
    let mlp = |spec: Option<MlpSpec>, params: Vec<f32>| {
        Mlp::from_params(spec.ok_or("network tensor without spec")?, params)
            .map_err(|e| e.to_string())
    };
    match header {
        CheckpointHeader::Prif {
            config,
            shapes,
            tensors,
            dataset,
            ..
        } => {
            let (mut trunk, mut mask, mut color, mut latents) = (None, None, None, Vec::new());
            for (name, spec, params) in split_tensors(&tensors, body)? {
                match name.as_str() {
                    "trunk" => trunk = Some(mlp(spec, params)?),
                    "mask" => mask = Some(mlp(spec, params)?),
                    "color" => color = Some(mlp(spec, params)?),
                    "latents" => latents = params,
                    other => return Err(format!("unknown tensor '{other}'")),
                }
            }
            let trunk = trunk.ok_or("missing trunk tensor")?;
            let model = PrifModel::from_parts(config, trunk, mask, color, latents)
                .map_err(|e| e.to_string())?;
            Ok(Checkpoint::Prif(PrifCheckpoint {
                model,
                shapes,
                dataset,
            }))
        }
        CheckpointHeader::Sdf { tensors, mesh_hash } => {
            let mut parts = split_tensors(&tensors, body)?;
            if parts.len() != 1 || parts[0].0 != "sdf" {
                return Err("sdf checkpoint must hold exactly one 'sdf' tensor".into());
            }
            let (_, spec, params) = parts.remove(0);
            Ok(Checkpoint::Sdf(SdfCheckpoint {
                net: mlp(spec, params)?,
                mesh_hash,
            }))
        }
    }
}

pub fn save_prif(path: &Path, ckpt: &PrifCheckpoint) -> IoResult<()> {
    container::write_file(path, &encode_prif(ckpt))
}

pub fn save_sdf(path: &Path, ckpt: &SdfCheckpoint) -> IoResult<()> {
    container::write_file(path, &encode_sdf(ckpt))
}

pub fn load(path: &Path) -> IoResult<Checkpoint> {
    decode(&container::read_file(path)?).map_err(|m| IoError::format(path, m))
}

pub fn load_prif(path: &Path) -> IoResult<PrifCheckpoint> {
    match load(path)? {
        Checkpoint::Prif(c) => Ok(c),
        Checkpoint::Sdf(_) => Err(IoError::format(
            path,
            "expected a PRIF checkpoint, found an SDF one",
        )),
    }
}

pub fn load_sdf(path: &Path) -> IoResult<SdfCheckpoint> {
    match load(path)? {
        Checkpoint::Sdf(c) => Ok(c),
        Checkpoint::Prif(_) => Err(IoError::format(
            path,
            "expected an SDF checkpoint, found a PRIF one",
        )),
    }
}

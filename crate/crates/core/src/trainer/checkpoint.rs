//! Checkpoint directories: `encoder.uceb`, `prototypes.uceb` and a JSON
//! sidecar `checkpoint.json` with the training config and step count.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{default_ids, load_embeddings, save_embeddings, EmbeddingSet};
use crate::error::{Error, Result};
use crate::selection::PrototypeMatrix;
use crate::trainer::{LinearEncoder, TrainConfig};

pub const ENCODER_FILE: &str = "encoder.uceb";
pub const PROTOTYPES_FILE: &str = "prototypes.uceb";
pub const META_FILE: &str = "checkpoint.json";
pub const META_FORMAT: &str = "unicom-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub steps: u64,
    pub input_dim: usize,
    pub output_dim: usize,
    pub classes: usize,
    pub train_config: TrainConfig,
}

impl CheckpointMeta {
    pub fn from_json(text: &str) -> Result<Self> {
        let meta: Self = serde_json::from_str(text)?;
        if meta.format != META_FORMAT || meta.version != 1 {
            return Err(Error::param(format!(
                "unsupported checkpoint {:?} version {}",
                meta.format, meta.version
            )));
        }
        Ok(meta)
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub encoder: LinearEncoder,
    pub prototypes: PrototypeMatrix,
    pub meta: CheckpointMeta,
}

pub fn save_checkpoint(
    dir: &Path,
    encoder: &LinearEncoder,
    prototypes: &PrototypeMatrix,
    cfg: &TrainConfig,
    steps: u64,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let enc = EmbeddingSet::from_matrix(&encoder.weights, Some(default_ids("in", encoder.input_dim())), None)?;
    save_embeddings(&enc, dir.join(ENCODER_FILE))?;
    let protos = EmbeddingSet::from_matrix(
        prototypes.as_matrix(),
        Some(default_ids("class", prototypes.classes())),
        None,
    )?;
    save_embeddings(&protos, dir.join(PROTOTYPES_FILE))?;

    let meta = CheckpointMeta {
        format: META_FORMAT.into(),
        version: 1,
        steps,
        input_dim: encoder.input_dim(),
        output_dim: encoder.output_dim(),
        classes: prototypes.classes(),
        train_config: cfg.clone(),
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(dir.join(META_FILE), text)?;
    Ok(())
}

/// Loads a checkpoint. Parameters come back at the `f32` precision they were stored with.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let meta = CheckpointMeta::from_json(&fs::read_to_string(dir.join(META_FILE))?)?;
    let enc = load_embeddings(dir.join(ENCODER_FILE))?;
    let protos = load_embeddings(dir.join(PROTOTYPES_FILE))?;
    if enc.count() != meta.input_dim || enc.dim() != meta.output_dim || protos.count() != meta.classes {
        return Err(Error::shape("checkpoint files disagree with checkpoint.json"));
    }
    if protos.dim() != enc.dim() {
        return Err(Error::shape("encoder and prototype dimensions differ"));
    }
    let encoder = LinearEncoder::new(enc.to_matrix())?;
    let prototypes = PrototypeMatrix::from_unnormalized(protos.to_matrix())?;
    Ok(Checkpoint {
        encoder,
        prototypes,
        meta,
    })
}

/// Prototype rows as a UCEB-ready set.
pub fn prototypes_as_set(p: &PrototypeMatrix) -> Result<EmbeddingSet> {
    EmbeddingSet::from_matrix(p.as_matrix(), Some(default_ids("class", p.classes())), None)
}

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{NamedTensor, Parameters};
use super::Encoder;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "maskforge-checkpoint-v1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckpointMeta {
    /// Pre-training strategy key the weights descend from.
    pub strategy: Option<String>,
    pub task: Option<String>,
    pub token_labels: Vec<String>,
    pub multilabels: Vec<String>,
    /// Vocabulary tokens in id order, for compatibility checks.
    pub vocab: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub meta: CheckpointMeta,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(encoder: &Encoder, meta: CheckpointMeta) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            config: encoder.config.clone(),
            meta,
            tensors: encoder.params.to_tensors(),
        }
    }

    pub fn into_encoder(self) -> Result<(Encoder, CheckpointMeta)> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("unknown checkpoint format {:?}", self.format)));
        }
        let params = Parameters::from_tensors(&self.config, self.tensors)?;
        Ok((Encoder::from_parts(self.config, params)?, self.meta))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }
}

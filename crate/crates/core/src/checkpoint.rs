//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "LOGQCKPT"
//! version u32      1
//! hlen    u64      length of the JSON header
//! header  hlen     UTF-8 JSON: configs, vocabulary, digest, tensor index
//! data             for each tensor in index order: rows*cols f32, row-major
//! ```
//!
//! Tensor names are the agents' parameter names (`q.*`, `a.*`). Optimizer
//! moments, when present, are stored as `opt.q.m/<name>`, `opt.q.v/<name>`,
//! `opt.a.m/<name>` and `opt.a.v/<name>`. Values are stored exactly, so a
//! load after a save reproduces every bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abot::ABotParameters;
use crate::embeddings::{EmbeddingTable, SPECIALS};
use crate::game::{Agents, GameConfig};
use crate::params::{Adam, AdamConfig, Matrix, ParamSet};
use crate::qbot::QBotParameters;
use crate::train::{TrainConfig, Trainer};

pub const MAGIC: &[u8; 8] = b"LOGQCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("checkpoint layout: {0}")]
    Layout(String),
    #[error("checkpoint has no optimizer state")]
    NoOptimizer,
    #[error("checkpoint header: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Progress bookkeeping stored alongside parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub epoch: u64,
    pub best_dev_acc: Option<f64>,
    pub stale_epochs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    game: GameConfig,
    train: Option<TrainConfig>,
    vocab_digest: String,
    vocabulary: Vec<String>,
    data_dir: Option<String>,
    state: Option<TrainState>,
    /// Adam step counts for (questioner, answerer).
    adam_steps: Option<(u64, u64)>,
    adam: Option<AdamConfig>,
    tensors: Vec<TensorEntry>,
}

/// In-memory checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub game: GameConfig,
    pub train: Option<TrainConfig>,
    pub vocab_digest: String,
    pub vocabulary: Vec<String>,
    pub data_dir: Option<String>,
    pub state: Option<TrainState>,
    pub qbot: ParamSet,
    pub abot: ParamSet,
    optimizer: Option<OptimizerState>,
}

#[derive(Clone, Debug, PartialEq)]
struct OptimizerState {
    config: AdamConfig,
    steps: (u64, u64),
    q_first: ParamSet,
    q_second: ParamSet,
    a_first: ParamSet,
    a_second: ParamSet,
}

impl Checkpoint {
    /// Parameters only, no optimizer state.
    pub fn from_agents(agents: &Agents, game: &GameConfig, table: &EmbeddingTable) -> Self {
        Self {
            game: game.clone(),
            train: None,
            vocab_digest: table.digest(),
            vocabulary: table.tokens().to_vec(),
            data_dir: None,
            state: None,
            qbot: agents.qbot.params.clone(),
            abot: agents.abot.params.clone(),
            optimizer: None,
        }
    }

    pub fn from_trainer(trainer: &Trainer, table: &EmbeddingTable, data_dir: Option<&Path>, state: TrainState) -> Self {
        let mut c = Self::from_agents(&trainer.agents, &trainer.game, table);
        c.train = Some(trainer.config.clone());
        c.data_dir = data_dir.map(|p| p.display().to_string());
        c.state = Some(state);
        c.optimizer = Some(OptimizerState {
            config: trainer.qbot_opt.config,
            steps: (trainer.qbot_opt.steps, trainer.abot_opt.steps),
            q_first: trainer.qbot_opt.first.clone(),
            q_second: trainer.qbot_opt.second.clone(),
            a_first: trainer.abot_opt.first.clone(),
            a_second: trainer.abot_opt.second.clone(),
        });
        c
    }

    pub fn agents(&self) -> Result<Agents, CheckpointError> {
        Ok(Agents {
            qbot: QBotParameters::from_params(self.game.dims, self.qbot.clone()).map_err(CheckpointError::Layout)?,
            abot: ABotParameters::from_params(self.game.dims, self.abot.clone()).map_err(CheckpointError::Layout)?,
        })
    }

    /// Restores a trainer that continues exactly where this checkpoint
    /// left off.
    pub fn trainer(&self) -> Result<Trainer, CheckpointError> {
        let opt = self.optimizer.as_ref().ok_or(CheckpointError::NoOptimizer)?;
        let config = self.train.clone().ok_or(CheckpointError::NoOptimizer)?;
        let agents = self.agents()?;
        Ok(Trainer {
            qbot_opt: Adam {
                config: opt.config,
                steps: opt.steps.0,
                first: opt.q_first.clone(),
                second: opt.q_second.clone(),
            },
            abot_opt: Adam {
                config: opt.config,
                steps: opt.steps.1,
                first: opt.a_first.clone(),
                second: opt.a_second.clone(),
            },
            agents,
            game: self.game.clone(),
            config,
            step: self.state.as_ref().map_or(0, |s| s.step),
        })
    }

    /// Token table (no vectors) of the training vocabulary.
    pub fn vocabulary_table(&self) -> EmbeddingTable {
        EmbeddingTable::from_vectors(
            0,
            self.vocabulary[SPECIALS.len()..]
                .iter()
                .map(|t| (t.clone(), Vec::new()))
                .collect(),
        )
    }

    fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = Vec::new();
        out.extend(self.qbot.iter().map(|(n, m)| (n.to_string(), m)));
        out.extend(self.abot.iter().map(|(n, m)| (n.to_string(), m)));
        if let Some(o) = &self.optimizer {
            for (prefix, set) in [
                ("opt.q.m/", &o.q_first),
                ("opt.q.v/", &o.q_second),
                ("opt.a.m/", &o.a_first),
                ("opt.a.v/", &o.a_second),
            ] {
                out.extend(set.iter().map(|(n, m)| (format!("{prefix}{n}"), m)));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let tensors = self.named_tensors();
        let header = Header {
            game: self.game.clone(),
            train: self.train.clone(),
            vocab_digest: self.vocab_digest.clone(),
            vocabulary: self.vocabulary.clone(),
            data_dir: self.data_dir.clone(),
            state: self.state.clone(),
            adam_steps: self.optimizer.as_ref().map(|o| o.steps),
            adam: self.optimizer.as_ref().map(|o| o.config),
            tensors: tensors
                .iter()
                .map(|(name, m)| TensorEntry {
                    name: name.clone(),
                    rows: m.rows,
                    cols: m.cols,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, m) in tensors {
            for v in &m.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + hlen).ok_or(CheckpointError::Truncated)?;
        let header: Header = serde_json::from_slice(body)?;
        let mut offset = 20 + hlen;

        let mut qbot = ParamSet::new();
        let mut abot = ParamSet::new();
        let mut moments: [ParamSet; 4] = Default::default();
        for entry in &header.tensors {
            let n = entry.rows * entry.cols;
            let raw = bytes.get(offset..offset + 4 * n).ok_or(CheckpointError::Truncated)?;
            offset += 4 * n;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let m = Matrix {
                rows: entry.rows,
                cols: entry.cols,
                data,
            };
            let name = entry.name.as_str();
            let prefixes = ["opt.q.m/", "opt.q.v/", "opt.a.m/", "opt.a.v/"];
            if let Some(i) = prefixes.iter().position(|p| name.starts_with(p)) {
                moments[i].push(&name[prefixes[i].len()..], m);
            } else if name.starts_with("q.") {
                qbot.push(name, m);
            } else if name.starts_with("a.") {
                abot.push(name, m);
            } else {
                return Err(CheckpointError::Layout(format!("unexpected tensor {name}")));
            }
        }
        if offset != bytes.len() {
            return Err(CheckpointError::Layout("trailing bytes after tensor data".into()));
        }
        let optimizer = match (header.adam_steps, header.adam) {
            (Some(steps), Some(config)) => {
                let [q_first, q_second, a_first, a_second] = moments;
                Some(OptimizerState {
                    config,
                    steps,
                    q_first,
                    q_second,
                    a_first,
                    a_second,
                })
            }
            _ => None,
        };
        Ok(Self {
            game: header.game,
            train: header.train,
            vocab_digest: header.vocab_digest,
            vocabulary: header.vocabulary,
            data_dir: header.data_dir,
            state: header.state,
            qbot,
            abot,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, Seq2Seq};
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

pub const CONFIG_FILE: &str = "config.json";
pub const WEIGHTS_FILE: &str = "weights.safetensors";
pub const TOKENIZER_FILE: &str = "tokenizer.json";
pub const LOG_FILE: &str = "train_log.jsonl";

/// What the encoder input is expected to be at inference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConditioningMode {
    /// A neutral paraphrase of the source.
    #[default]
    Reconstruction,
    /// The source text itself.
    Distilled,
}

/// One training stage in a checkpoint's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub stage: String,
    pub parent_model_id: Option<String>,
    pub dataset_digest: Option<String>,
    pub dataset_size: usize,
    pub steps: usize,
    pub selected_step: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model_config: ModelConfig,
    pub dtype: String,
    pub step: usize,
    pub mode: ConditioningMode,
    pub embedder_id: String,
    #[serde(default)]
    pub lineage: Vec<Lineage>,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(skip)]
    pub log: Vec<LogEntry>,
}

/// Weights, tokenizer and training metadata.
#[derive(Debug)]
pub struct Checkpoint {
    pub model: Seq2Seq,
    pub tokenizer: Tokenizer,
    pub meta: CheckpointMeta,
}

fn dtype_name(d: DType) -> &'static str {
    match d {
        DType::F64 => "f64",
        _ => "f32",
    }
}

fn parse_dtype(s: &str) -> Result<DType> {
    match s {
        "f32" => Ok(DType::F32),
        "f64" => Ok(DType::F64),
        other => Err(Error::Malformed {
            what: "checkpoint config",
            reason: format!("unsupported dtype `{other}`"),
        }),
    }
}

impl Checkpoint {
    /// Freshly initialized model sized to `tokenizer`.
    pub fn fresh(
        mut config: ModelConfig,
        tokenizer: Tokenizer,
        embedder_id: impl Into<String>,
        dtype: DType,
    ) -> Result<Self> {
        config.vocab_size = tokenizer.vocab_size();
        let model = Seq2Seq::new(config.clone(), dtype)?;
        Ok(Self {
            model,
            tokenizer,
            meta: CheckpointMeta {
                model_config: config,
                dtype: dtype_name(dtype).into(),
                step: 0,
                mode: ConditioningMode::Reconstruction,
                embedder_id: embedder_id.into(),
                lineage: Vec::new(),
                config_hash: None,
                log: Vec::new(),
            },
        })
    }

    /// Short identifier derived from the conditioning mode and weights.
    pub fn model_id(&self) -> Result<String> {
        let mode = match self.meta.mode {
            ConditioningMode::Reconstruction => "recon",
            ConditioningMode::Distilled => "distilled",
        };
        Ok(format!("{mode}-{}", &self.model.weights_digest()?[..16]))
    }

    /// Deep copy with independent parameters.
    pub fn try_clone(&self) -> Result<Self> {
        let tensors: HashMap<String, Tensor> = self.model.snapshot()?.into_iter().collect();
        Ok(Self {
            model: Seq2Seq::from_tensors(self.model.config().clone(), self.model.dtype(), &tensors)?,
            tokenizer: self.tokenizer.clone(),
            meta: self.meta.clone(),
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg = dir.join(CONFIG_FILE);
        std::fs::write(&cfg, serde_json::to_string_pretty(&self.meta)?)
            .map_err(|e| Error::io(&cfg, e))?;
        let tensors: HashMap<String, Tensor> = self.model.snapshot()?.into_iter().collect();
        candle_core::safetensors::save(&tensors, dir.join(WEIGHTS_FILE))?;
        self.tokenizer.save(dir.join(TOKENIZER_FILE))?;
        let log_path = dir.join(LOG_FILE);
        let mut f = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        for entry in &self.meta.log {
            writeln!(f, "{}", serde_json::to_string(entry)?).map_err(|e| Error::io(&log_path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let cfg = dir.join(CONFIG_FILE);
        let raw = std::fs::read_to_string(&cfg).map_err(|e| Error::io(&cfg, e))?;
        let mut meta: CheckpointMeta = serde_json::from_str(&raw)?;
        let dtype = parse_dtype(&meta.dtype)?;
        let weights = dir.join(WEIGHTS_FILE);
        if !weights.exists() {
            return Err(Error::io(
                &weights,
                std::io::Error::new(std::io::ErrorKind::NotFound, "missing weights"),
            ));
        }
        let tensors = candle_core::safetensors::load(&weights, &Device::Cpu)?;
        let model = Seq2Seq::from_tensors(meta.model_config.clone(), dtype, &tensors)?;
        let tokenizer = Tokenizer::load(dir.join(TOKENIZER_FILE))?;
        if tokenizer.vocab_size() != meta.model_config.vocab_size {
            return Err(Error::Malformed {
                what: "checkpoint",
                reason: format!(
                    "tokenizer has {} entries, model expects {}",
                    tokenizer.vocab_size(),
                    meta.model_config.vocab_size
                ),
            });
        }
        let log_path = dir.join(LOG_FILE);
        if let Ok(raw) = std::fs::read_to_string(&log_path) {
            meta.log = raw
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<std::result::Result<_, _>>()?;
        }
        Ok(Self {
            model,
            tokenizer,
            meta,
        })
    }
}

//! One configuration file for every stage. Defaults are the full-size
//! settings; [`PipelineConfig::desk`] shrinks the model and schedules for a
//! single CPU.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{CharLm, ContentSim, MeaningScorer, TrigramSim};
use crate::model::{ModelConfig, TrainSettings};
use crate::neutralizer::{CommandParaphraser, Lexicon, ParaphraseSettings, Paraphraser, RuleNeutralizer};
use crate::pipeline::{FilterSettings, GenSettings, Scorers, TransferOptions};
use crate::style_space::{FeatureStyleEmbedder, MarkerStyleEmbedder, StyleEmbedder};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderChoice {
    /// Stylometric feature vector of the given width.
    Feature { dim: usize },
    /// Corpus-centered typographic markers, fitted on the training texts.
    Marker,
}

impl EmbedderChoice {
    pub fn build<'a>(&self, reference: impl IntoIterator<Item = &'a str>) -> Result<Arc<dyn StyleEmbedder>> {
        Ok(match self {
            EmbedderChoice::Feature { dim } => Arc::new(FeatureStyleEmbedder::new(*dim)?),
            EmbedderChoice::Marker => Arc::new(MarkerStyleEmbedder::fit(reference)?),
        })
    }

    pub fn embedder_id(&self) -> String {
        match self {
            EmbedderChoice::Feature { dim } => format!("feature-stylometric-v1-d{dim}"),
            EmbedderChoice::Marker => MarkerStyleEmbedder::EMBEDDER_ID.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParaphraserChoice {
    /// Rule-based neutralizer with an optional lexicon file.
    Rule { lexicon: Option<PathBuf> },
    /// External process speaking JSON on stdin/stdout.
    Command { program: PathBuf, args: Vec<String> },
}

impl ParaphraserChoice {
    pub fn build(&self) -> Result<Arc<dyn Paraphraser>> {
        Ok(match self {
            ParaphraserChoice::Rule { lexicon: None } => Arc::new(RuleNeutralizer::default()),
            ParaphraserChoice::Rule { lexicon: Some(p) } => {
                let raw = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Arc::new(RuleNeutralizer::new(Lexicon::parse(&raw)?))
            }
            ParaphraserChoice::Command { program, args } => Arc::new(CommandParaphraser {
                program: program.clone(),
                args: args.clone(),
            }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricChoice {
    pub meaning_primary: String,
    pub meaning_secondary: String,
    /// Use the character language model for fluency columns.
    pub fluency: bool,
    /// Reference texts kept by the fluency model.
    pub fluency_reference: usize,
}

impl Default for MetricChoice {
    fn default() -> Self {
        Self {
            meaning_primary: ContentSim::ID.into(),
            meaning_secondary: TrigramSim::ID.into(),
            fluency: true,
            fluency_reference: 2000,
        }
    }
}

fn meaning_scorer(id: &str) -> Result<Arc<dyn MeaningScorer>> {
    match id {
        ContentSim::ID => Ok(Arc::new(ContentSim)),
        TrigramSim::ID => Ok(Arc::new(TrigramSim)),
        other => Err(Error::invalid("metrics", format!("unknown meaning scorer `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSettings {
    pub per_author: usize,
    pub max_tokens: usize,
    /// (train, val, test) author fractions.
    pub split: (f64, f64, f64),
}

impl Default for CorpusSettings {
    fn default() -> Self {
        Self {
            per_author: 16,
            max_tokens: 64,
            split: (0.9, 0.05, 0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerSettings {
    pub vocab_size: usize,
    pub min_frequency: usize,
}

impl Default for TokenizerSettings {
    fn default() -> Self {
        Self {
            vocab_size: 8000,
            min_frequency: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub n_source_authors: usize,
    pub n_target_authors: usize,
    pub texts_per_author: usize,
    pub num_examples: usize,
    pub exemplar_threshold: f64,
    pub warmup: usize,
    pub timing_inputs: usize,
    pub lam_grid: Vec<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            n_source_authors: 15,
            n_target_authors: 15,
            texts_per_author: 16,
            num_examples: 16,
            exemplar_threshold: 0.95,
            warmup: 3,
            timing_inputs: 200,
            lam_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSettings {
    pub bind: String,
    /// Generation jobs allowed to run at once.
    pub workers: usize,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            workers: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Directories of `*.jsonl` exemplar sets served by name.
    pub exemplar_sets: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub recon_train: TrainSettings,
    pub distill_train: TrainSettings,
    pub paraphrase: ParaphraseSettings,
    pub generation: GenSettings,
    pub filter: FilterSettings,
    pub transfer: TransferOptions,
    pub embedder: EmbedderChoice,
    pub eval_embedder: EmbedderChoice,
    pub paraphraser: ParaphraserChoice,
    pub metrics: MetricChoice,
    pub corpus: CorpusSettings,
    pub tokenizer: TokenizerSettings,
    pub synth: SynthConfig,
    pub eval: EvalSettings,
    pub service: ServiceSettings,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        Self {
            seed: 0,
            embedder: EmbedderChoice::Feature { dim: model.embed_dim },
            model,
            recon_train: TrainSettings::default(),
            distill_train: TrainSettings::default(),
            paraphrase: ParaphraseSettings::default(),
            generation: GenSettings::default(),
            filter: FilterSettings::default(),
            transfer: TransferOptions::default(),
            eval_embedder: EmbedderChoice::Marker,
            paraphraser: ParaphraserChoice::Rule { lexicon: None },
            metrics: MetricChoice::default(),
            corpus: CorpusSettings::default(),
            tokenizer: TokenizerSettings::default(),
            synth: SynthConfig::default(),
            eval: EvalSettings::default(),
            service: ServiceSettings::default(),
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    /// Small model and short schedules for the synthetic corpus on one CPU.
    pub fn desk() -> Self {
        let vocab_size = 1400;
        let model = ModelConfig {
            hidden_dim: 64,
            embed_dim: 256,
            n_heads: 4,
            ff_dim: 128,
            max_len: 40,
            ..ModelConfig::desk(vocab_size)
        };
        let mut recon_train = TrainSettings::desk(1500);
        recon_train.batch_size = 32;
        recon_train.eval_every = 250;
        let mut distill_train = TrainSettings::desk(1500);
        distill_train.batch_size = 32;
        distill_train.eval_every = 100;
        distill_train.learning_rate = 2e-4;
        Self {
            embedder: EmbedderChoice::Feature { dim: model.embed_dim },
            model,
            recon_train,
            distill_train,
            generation: GenSettings {
                max_len: 40,
                ..GenSettings::default()
            },
            transfer: TransferOptions {
                max_len: 40,
                ..TransferOptions::default()
            },
            tokenizer: TokenizerSettings {
                vocab_size,
                min_frequency: 2,
            },
            eval: EvalSettings {
                n_source_authors: 4,
                n_target_authors: 4,
                texts_per_author: 6,
                num_examples: 16,
                ..EvalSettings::default()
            },
            ..Self::default()
        }
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&raw)?
        } else {
            toml::from_str(&raw).map_err(|e| Error::Malformed {
                what: "config",
                reason: e.to_string(),
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Malformed {
            what: "config",
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw = if path.extension().is_some_and(|e| e == "json") {
            serde_json::to_string_pretty(self)?
        } else {
            self.to_toml()?
        };
        std::fs::write(path, raw).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.recon_train.validate()?;
        self.distill_train.validate()?;
        self.generation.validate()?;
        if let EmbedderChoice::Feature { dim } = self.embedder {
            if dim != self.model.embed_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.model.embed_dim,
                    got: dim,
                });
            }
        }
        if self.embedder == self.eval_embedder {
            return Err(Error::EmbedderReuse(self.eval_embedder.embedder_id()));
        }
        meaning_scorer(&self.metrics.meaning_primary)?;
        meaning_scorer(&self.metrics.meaning_secondary)?;
        if !(0.0..=1.0).contains(&self.transfer.lam) {
            return Err(Error::invalid("lam", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Canonical JSON with sorted keys.
    pub fn canonical_json(&self) -> Result<String> {
        // serde_json's default map is ordered by key.
        Ok(serde_json::to_string(&serde_json::to_value(self)?)?)
    }

    /// Hex SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn config_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_json()?.as_bytes())))
    }

    /// Scorers for reranking and filtering around `embedder`.
    pub fn scorers<'a>(
        &self,
        embedder: Arc<dyn StyleEmbedder>,
        fluency_texts: impl IntoIterator<Item = &'a str>,
    ) -> Result<Scorers> {
        let mut s = Scorers::new(embedder);
        s.primary = meaning_scorer(&self.metrics.meaning_primary)?;
        s.secondary = meaning_scorer(&self.metrics.meaning_secondary)?;
        if self.metrics.fluency {
            let texts: Vec<&str> = fluency_texts.into_iter().collect();
            if !texts.is_empty() {
                s = s.with_fluency(Arc::new(CharLm::fit(texts, self.metrics.fluency_reference)?));
            }
        }
        Ok(s)
    }
}

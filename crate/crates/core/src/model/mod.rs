//! Embedding-conditioned encoder-decoder.
//!
//! A style vector is projected (affine, `embed_dim -> hidden_dim`) and
//! prepended to the token embeddings of the input, so the encoder sees
//! `tokens + 1` positions with the style slot at position 0. Everything
//! else is a small pre-LayerNorm transformer.

mod checkpoint;
mod generate;
mod train;

use std::collections::{BTreeMap, HashMap};

use candle_core::{DType, Device, Tensor, Var, D};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::style_space::StyleEmbedding;
use crate::tokenizer::{BOS, EOS, PAD};

pub use checkpoint::{Checkpoint, CheckpointMeta, ConditioningMode, Lineage, LogEntry};
pub use generate::{generate, generate_batch, greedy, GenerationRequest};
pub use train::{
    fine_tune_distill, mean_loss, train_reconstruction, train_with_validation, Schedule, TrainExample,
    TrainReport, TrainSettings,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Projection shape 768 -> 512 with a two-layer encoder and decoder.
    fn default() -> Self {
        Self {
            vocab_size: 1000,
            hidden_dim: 512,
            embed_dim: 768,
            n_layers_enc: 2,
            n_layers_dec: 2,
            n_heads: 8,
            ff_dim: 2048,
            max_len: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Desk-scale model for single-CPU runs.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            hidden_dim: 128,
            n_heads: 4,
            ff_dim: 512,
            max_len: 48,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.n_heads == 0 || self.hidden_dim % self.n_heads != 0 {
            return Err(Error::invalid(
                "hidden_dim",
                format!(
                    "{} must be a positive multiple of n_heads = {}",
                    self.hidden_dim, self.n_heads
                ),
            ));
        }
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("n_layers_enc", self.n_layers_enc),
            ("n_layers_dec", self.n_layers_dec),
            ("ff_dim", self.ff_dim),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if self.vocab_size <= EOS as usize {
            return Err(Error::invalid("vocab_size", "must exceed the special tokens"));
        }
        Ok(())
    }
}

enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

/// Creates or loads named parameters in a fixed order.
struct ParamBuilder<'a> {
    vars: BTreeMap<String, Var>,
    loaded: Option<&'a HashMap<String, Tensor>>,
    rng: rand_chacha::ChaCha8Rng,
    dtype: DType,
    device: Device,
}

impl ParamBuilder<'_> {
    fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let t = match self.loaded {
            Some(map) => {
                let t = map.get(name).ok_or_else(|| Error::Malformed {
                    what: "checkpoint weights",
                    reason: format!("missing tensor `{name}`"),
                })?;
                if t.dims() != shape {
                    return Err(Error::Malformed {
                        what: "checkpoint weights",
                        reason: format!("`{name}` has shape {:?}, expected {shape:?}", t.dims()),
                    });
                }
                t.to_dtype(self.dtype)?
            }
            None => {
                let n: usize = shape.iter().product();
                let data: Vec<f64> = match init {
                    Init::Normal(std) => {
                        let dist = Normal::new(0.0, std).expect("valid std");
                        (0..n).map(|_| dist.sample(&mut self.rng)).collect()
                    }
                    Init::Zeros => vec![0.0; n],
                    Init::Ones => vec![1.0; n],
                };
                Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?
            }
        };
        let var = Var::from_tensor(&t)?;
        let tensor = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(tensor)
    }
}

#[derive(Debug, Clone)]
struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    fn new(pb: &mut ParamBuilder, name: &str, input: usize, output: usize) -> Result<Self> {
        Ok(Self {
            weight: pb.get(
                &format!("{name}.weight"),
                &[input, output],
                Init::Normal(1.0 / (input as f64).sqrt()),
            )?,
            bias: pb.get(&format!("{name}.bias"), &[output], Init::Zeros)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let input = *dims.last().expect("rank >= 1");
        let rows: usize = dims[..dims.len() - 1].iter().product();
        let y = x
            .reshape((rows, input))?
            .matmul(&self.weight)?
            .broadcast_add(&self.bias)?;
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = self.weight.dim(1)?;
        Ok(y.reshape(out_dims)?)
    }
}

#[derive(Debug, Clone)]
struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
}

impl LayerNorm {
    fn new(pb: &mut ParamBuilder, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: pb.get(&format!("{name}.gamma"), &[dim], Init::Ones)?,
            beta: pb.get(&format!("{name}.beta"), &[dim], Init::Zeros)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + 1e-5)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

#[derive(Debug, Clone)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl Attention {
    fn new(pb: &mut ParamBuilder, name: &str, dim: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            q: Linear::new(pb, &format!("{name}.q"), dim, dim)?,
            k: Linear::new(pb, &format!("{name}.k"), dim, dim)?,
            v: Linear::new(pb, &format!("{name}.v"), dim, dim)?,
            o: Linear::new(pb, &format!("{name}.o"), dim, dim)?,
            heads,
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        Ok(x.reshape((b, t, self.heads, d / self.heads))?
            .transpose(1, 2)?
            .contiguous()?)
    }

    /// `mask` is additive and broadcasts to `(batch, heads, q_len, k_len)`.
    fn forward(&self, query: &Tensor, memory: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let (b, tq, d) = query.dims3()?;
        let q = self.split_heads(&self.q.forward(query)?)?;
        let k = self.split_heads(&self.k.forward(memory)?)?;
        let v = self.split_heads(&self.v.forward(memory)?)?;
        let scale = 1.0 / ((d / self.heads) as f64).sqrt();
        let scores = q.matmul(&k.t()?.contiguous()?)?.affine(scale, 0.0)?;
        let scores = scores.broadcast_add(mask)?;
        let probs = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let ctx = probs
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, tq, d))?;
        self.o.forward(&ctx)
    }
}

#[derive(Debug, Clone)]
struct FeedForward {
    fc1: Linear,
    fc2: Linear,
}

impl FeedForward {
    fn new(pb: &mut ParamBuilder, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(pb, &format!("{name}.fc1"), dim, hidden)?,
            fc2: Linear::new(pb, &format!("{name}.fc2"), hidden, dim)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.gelu()?)
    }
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    ff: FeedForward,
}

impl EncoderLayer {
    fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let h = self.ln1.forward(x)?;
        let x = (x + self.attn.forward(&h, &h, mask)?)?;
        let h = self.ln2.forward(&x)?;
        Ok((&x + self.ff.forward(&h)?)?)
    }
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    ln1: LayerNorm,
    self_attn: Attention,
    ln2: LayerNorm,
    cross_attn: Attention,
    ln3: LayerNorm,
    ff: FeedForward,
}

impl DecoderLayer {
    fn forward(
        &self,
        x: &Tensor,
        memory: &Tensor,
        self_mask: &Tensor,
        memory_mask: &Tensor,
    ) -> Result<Tensor> {
        let h = self.ln1.forward(x)?;
        let x = (x + self.self_attn.forward(&h, &h, self_mask)?)?;
        let h = self.ln2.forward(&x)?;
        let x = (&x + self.cross_attn.forward(&h, memory, memory_mask)?)?;
        let h = self.ln3.forward(&x)?;
        Ok((&x + self.ff.forward(&h)?)?)
    }
}

/// A padded training or inference batch.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `(batch, src_len)` token ids.
    pub source: Tensor,
    /// Additive key mask over the encoder sequence, `(batch, 1, 1, src_len + 1)`.
    pub source_mask: Tensor,
    /// `(batch, embed_dim)`.
    pub style: Tensor,
    /// `(batch, tgt_len)` decoder input (BOS-shifted).
    pub decoder_input: Tensor,
    /// `(batch, 1, tgt_len, tgt_len)` causal plus padding mask.
    pub decoder_mask: Tensor,
    /// `(batch * tgt_len)` labels and their 0/1 weights.
    pub labels: Tensor,
    pub label_weights: Tensor,
}

const NEG_INF: f64 = -1e9;

pub struct Seq2Seq {
    config: ModelConfig,
    dtype: DType,
    device: Device,
    vars: BTreeMap<String, Var>,
    tok_emb: Tensor,
    enc_pos: Tensor,
    dec_pos: Tensor,
    style_proj: Linear,
    encoder: Vec<EncoderLayer>,
    enc_norm: LayerNorm,
    decoder: Vec<DecoderLayer>,
    dec_norm: LayerNorm,
    lm_head: Linear,
}

impl std::fmt::Debug for Seq2Seq {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Seq2Seq")
            .field("config", &self.config)
            .field("dtype", &self.dtype)
            .field("parameters", &self.parameter_count())
            .finish()
    }
}

impl Seq2Seq {
    /// Fresh model with seeded initialization.
    pub fn new(config: ModelConfig, dtype: DType) -> Result<Self> {
        Self::build(config, dtype, None)
    }

    /// Model built from a name-to-tensor map (e.g. a safetensors file).
    pub fn from_tensors(
        config: ModelConfig,
        dtype: DType,
        tensors: &HashMap<String, Tensor>,
    ) -> Result<Self> {
        Self::build(config, dtype, Some(tensors))
    }

    fn build(
        config: ModelConfig,
        dtype: DType,
        loaded: Option<&HashMap<String, Tensor>>,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let mut pb = ParamBuilder {
            vars: BTreeMap::new(),
            loaded,
            rng: seed::rng(seed::derive_labeled(config.seed, "init")),
            dtype,
            device: Device::Cpu,
        };
        let tok_emb = pb.get("tok_emb", &[config.vocab_size, h], Init::Normal(0.3))?;
        let enc_pos = pb.get("enc_pos", &[config.max_len + 1, h], Init::Normal(0.1))?;
        let dec_pos = pb.get("dec_pos", &[config.max_len + 1, h], Init::Normal(0.1))?;
        let style_proj = Linear {
            weight: pb.get(
                "style_proj.weight",
                &[config.embed_dim, h],
                Init::Normal(0.5),
            )?,
            bias: pb.get("style_proj.bias", &[h], Init::Zeros)?,
        };
        let mut encoder = Vec::new();
        for i in 0..config.n_layers_enc {
            let n = format!("enc.{i}");
            encoder.push(EncoderLayer {
                ln1: LayerNorm::new(&mut pb, &format!("{n}.ln1"), h)?,
                attn: Attention::new(&mut pb, &format!("{n}.attn"), h, config.n_heads)?,
                ln2: LayerNorm::new(&mut pb, &format!("{n}.ln2"), h)?,
                ff: FeedForward::new(&mut pb, &format!("{n}.ff"), h, config.ff_dim)?,
            });
        }
        let enc_norm = LayerNorm::new(&mut pb, "enc_norm", h)?;
        let mut decoder = Vec::new();
        for i in 0..config.n_layers_dec {
            let n = format!("dec.{i}");
            decoder.push(DecoderLayer {
                ln1: LayerNorm::new(&mut pb, &format!("{n}.ln1"), h)?,
                self_attn: Attention::new(&mut pb, &format!("{n}.self_attn"), h, config.n_heads)?,
                ln2: LayerNorm::new(&mut pb, &format!("{n}.ln2"), h)?,
                cross_attn: Attention::new(
                    &mut pb,
                    &format!("{n}.cross_attn"),
                    h,
                    config.n_heads,
                )?,
                ln3: LayerNorm::new(&mut pb, &format!("{n}.ln3"), h)?,
                ff: FeedForward::new(&mut pb, &format!("{n}.ff"), h, config.ff_dim)?,
            });
        }
        let dec_norm = LayerNorm::new(&mut pb, "dec_norm", h)?;
        let lm_head = Linear::new(&mut pb, "lm_head", h, config.vocab_size)?;
        Ok(Self {
            config,
            dtype,
            device: pb.device.clone(),
            vars: pb.vars,
            tok_emb,
            enc_pos,
            dec_pos,
            style_proj,
            encoder,
            enc_norm,
            decoder,
            dec_norm,
            lm_head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Trainable parameters by name.
    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    pub fn parameter_count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Names of the style projection parameters.
    pub fn projection_parameter_names() -> [&'static str; 2] {
        ["style_proj.weight", "style_proj.bias"]
    }

    /// Overwrites a parameter in place.
    pub fn set_parameter(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self.vars.get(name).ok_or_else(|| Error::Malformed {
            what: "parameter name",
            reason: format!("no parameter `{name}`"),
        })?;
        var.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }

    /// Detached copies of every parameter.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>> {
        self.vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?.detach())))
            .collect()
    }

    pub fn restore(&self, snapshot: &BTreeMap<String, Tensor>) -> Result<()> {
        for (k, v) in snapshot {
            self.set_parameter(k, v)?;
        }
        Ok(())
    }

    /// SHA-256 over parameter names and their f64 values, in name order.
    pub fn weights_digest(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (k, v) in &self.vars {
            h.update(k.as_bytes());
            let flat = v.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
            for x in flat {
                h.update(x.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    pub(crate) fn style_tensor(&self, styles: &[&StyleEmbedding]) -> Result<Tensor> {
        let e = self.config.embed_dim;
        let mut data = Vec::with_capacity(styles.len() * e);
        for s in styles {
            if s.dim() != e {
                return Err(Error::DimensionMismatch {
                    expected: e,
                    got: s.dim(),
                });
            }
            data.extend_from_slice(&s.values);
        }
        Ok(Tensor::from_vec(data, (styles.len(), e), &self.device)?.to_dtype(self.dtype)?)
    }

    /// Prepends the projected style vector to a sequence of token
    /// embeddings: `style (batch, embed_dim)`, `tokens (batch, len, hidden)`
    /// to `(batch, len + 1, hidden)`.
    pub fn project_and_prepend(&self, style: &Tensor, tokens: &Tensor) -> Result<Tensor> {
        let (_, e) = style.dims2()?;
        if e != self.config.embed_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.embed_dim,
                got: e,
            });
        }
        let slot = self.style_proj.forward(style)?.unsqueeze(1)?;
        Ok(Tensor::cat(&[&slot, tokens], 1)?)
    }

    /// [`Self::project_and_prepend`] on plain vectors for a single example.
    pub fn project_and_prepend_vectors(
        &self,
        style: &StyleEmbedding,
        tokens: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        let h = self.config.hidden_dim;
        if let Some(bad) = tokens.iter().find(|t| t.len() != h) {
            return Err(Error::DimensionMismatch {
                expected: h,
                got: bad.len(),
            });
        }
        let style = self.style_tensor(&[style])?;
        let flat: Vec<f64> = tokens.iter().flatten().copied().collect();
        let toks = Tensor::from_vec(flat, (1, tokens.len(), h), &self.device)?.to_dtype(self.dtype)?;
        let out = self
            .project_and_prepend(&style, &toks)?
            .squeeze(0)?
            .to_dtype(DType::F64)?
            .to_vec2::<f64>()?;
        Ok(out)
    }

    /// Encoder states `(batch, src_len + 1, hidden)`.
    pub fn encode(&self, source: &Tensor, source_mask: &Tensor, style: &Tensor) -> Result<Tensor> {
        let (b, t) = source.dims2()?;
        let emb = self
            .tok_emb
            .index_select(&source.flatten_all()?, 0)?
            .reshape((b, t, self.config.hidden_dim))?;
        let x = self.project_and_prepend(style, &emb)?;
        let mut x = x.broadcast_add(&self.enc_pos.narrow(0, 0, t + 1)?)?;
        for layer in &self.encoder {
            x = layer.forward(&x, source_mask)?;
        }
        self.enc_norm.forward(&x)
    }

    /// Logits `(batch, tgt_len, vocab)`.
    pub fn decode(
        &self,
        decoder_input: &Tensor,
        decoder_mask: &Tensor,
        memory: &Tensor,
        memory_mask: &Tensor,
    ) -> Result<Tensor> {
        let (b, t) = decoder_input.dims2()?;
        let emb = self
            .tok_emb
            .index_select(&decoder_input.flatten_all()?, 0)?
            .reshape((b, t, self.config.hidden_dim))?;
        let mut x = emb.broadcast_add(&self.dec_pos.narrow(0, 0, t)?)?;
        for layer in &self.decoder {
            x = layer.forward(&x, memory, decoder_mask, memory_mask)?;
        }
        let x = self.dec_norm.forward(&x)?;
        self.lm_head.forward(&x)
    }

    /// Mean token-level cross-entropy (nats) over non-padding labels.
    pub fn loss(&self, batch: &Batch) -> Result<Tensor> {
        let memory = self.encode(&batch.source, &batch.source_mask, &batch.style)?;
        let logits = self.decode(
            &batch.decoder_input,
            &batch.decoder_mask,
            &memory,
            &batch.source_mask,
        )?;
        let (b, t, v) = logits.dims3()?;
        let logp = candle_nn::ops::log_softmax(&logits.reshape((b * t, v))?, D::Minus1)?;
        let picked = logp.gather(&batch.labels.unsqueeze(1)?, 1)?.squeeze(1)?;
        let total = (picked * &batch.label_weights)?.sum_all()?;
        let count = batch.label_weights.sum_all()?;
        Ok(total.neg()?.div(&count)?)
    }

    pub(crate) fn source_mask(&self, sources: &[Vec<u32>], width: usize) -> Result<Tensor> {
        let mut m = Vec::with_capacity(sources.len() * (width + 1));
        for s in sources {
            m.push(0.0);
            m.extend((0..width).map(|i| if i < s.len() { 0.0 } else { NEG_INF }));
        }
        Ok(Tensor::from_vec(m, (sources.len(), 1, 1, width + 1), &self.device)?
            .to_dtype(self.dtype)?)
    }

    pub(crate) fn pad_ids(&self, rows: &[Vec<u32>], width: usize) -> Result<Tensor> {
        let mut data = Vec::with_capacity(rows.len() * width);
        for r in rows {
            data.extend(r.iter().copied().take(width));
            data.extend(std::iter::repeat_n(PAD, width.saturating_sub(r.len())));
        }
        Ok(Tensor::from_vec(data, (rows.len(), width), &self.device)?)
    }

    pub(crate) fn causal_mask(&self, rows: &[Vec<u32>], width: usize) -> Result<Tensor> {
        let mut m = Vec::with_capacity(rows.len() * width * width);
        for r in rows {
            for q in 0..width {
                for k in 0..width {
                    let visible = k <= q && (k < r.len() || k == 0);
                    m.push(if visible { 0.0 } else { NEG_INF });
                }
            }
        }
        Ok(Tensor::from_vec(m, (rows.len(), 1, width, width), &self.device)?
            .to_dtype(self.dtype)?)
    }

    /// Truncates a source to `max_len` tokens.
    pub(crate) fn clip_source(&self, mut ids: Vec<u32>) -> Vec<u32> {
        ids.truncate(self.config.max_len);
        ids
    }

    /// Builds a teacher-forced batch from token ids.
    pub fn make_batch(
        &self,
        sources: &[Vec<u32>],
        styles: &[&StyleEmbedding],
        targets: &[Vec<u32>],
    ) -> Result<Batch> {
        if sources.is_empty() || sources.len() != styles.len() || sources.len() != targets.len() {
            return Err(Error::invalid("batch", "sources, styles and targets must align"));
        }
        let sources: Vec<Vec<u32>> = sources.iter().map(|s| self.clip_source(s.clone())).collect();
        let src_w = sources.iter().map(Vec::len).max().unwrap_or(0).max(1);
        // decoder sees BOS + target, predicts target + EOS
        let max_t = self.config.max_len - 1;
        let mut dec_in = Vec::with_capacity(targets.len());
        let mut labels = Vec::with_capacity(targets.len());
        for t in targets {
            let t = &t[..t.len().min(max_t)];
            let mut i = vec![BOS];
            i.extend_from_slice(t);
            let mut l = t.to_vec();
            l.push(EOS);
            dec_in.push(i);
            labels.push(l);
        }
        let tgt_w = dec_in.iter().map(Vec::len).max().unwrap_or(1);
        let mut weights = Vec::with_capacity(labels.len() * tgt_w);
        for l in &labels {
            weights.extend((0..tgt_w).map(|i| if i < l.len() { 1.0 } else { 0.0 }));
        }
        Ok(Batch {
            source: self.pad_ids(&sources, src_w)?,
            source_mask: self.source_mask(&sources, src_w)?,
            style: self.style_tensor(styles)?,
            decoder_input: self.pad_ids(&dec_in, tgt_w)?,
            decoder_mask: self.causal_mask(&dec_in, tgt_w)?,
            labels: self.pad_ids(&labels, tgt_w)?.flatten_all()?,
            label_weights: Tensor::from_vec(weights, labels.len() * tgt_w, &self.device)?
                .to_dtype(self.dtype)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dtype: DType) -> Seq2Seq {
        let cfg = ModelConfig {
            vocab_size: 12,
            hidden_dim: 8,
            embed_dim: 3,
            n_layers_enc: 1,
            n_layers_dec: 1,
            n_heads: 2,
            ff_dim: 16,
            max_len: 10,
            seed: 3,
        };
        Seq2Seq::new(cfg, dtype).unwrap()
    }

    fn style(v: &[f64]) -> StyleEmbedding {
        StyleEmbedding::new("t", v.to_vec()).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::default();
        assert_eq!((c.embed_dim, c.hidden_dim), (768, 512));
        c.validate().unwrap();
        c.n_heads = 7;
        assert!(c.validate().is_err());
    }

    #[test]
    fn prepend_adds_one_position() {
        let m = tiny(DType::F64);
        let toks = vec![vec![0.5; 8]; 4];
        let out = m.project_and_prepend_vectors(&style(&[1.0, 2.0, 3.0]), &toks).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(&out[1..], &toks[..]);
        assert!(m
            .project_and_prepend_vectors(&style(&[1.0, 2.0]), &toks)
            .is_err());
    }

    #[test]
    fn zero_projection_gives_zero_slot() {
        let m = tiny(DType::F64);
        m.set_parameter("style_proj.weight", &Tensor::zeros((3, 8), DType::F64, &Device::Cpu).unwrap())
            .unwrap();
        let out = m.project_and_prepend_vectors(&style(&[1.0, -2.0, 0.5]), &[vec![1.0; 8]]).unwrap();
        assert!(out[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn projection_matches_hand_product() {
        let cfg = ModelConfig {
            vocab_size: 8,
            hidden_dim: 2,
            embed_dim: 3,
            n_heads: 1,
            ff_dim: 4,
            max_len: 4,
            ..ModelConfig::default()
        };
        let m = Seq2Seq::new(cfg, DType::F64).unwrap();
        // weight is stored (embed_dim, hidden): slot = style . W + b
        // W^T = [[1, 2, 3], [-1, 0, 0.5]], b = [0.25, -1], s = (2, -1, 4)
        // slot = (2 - 2 + 12 + 0.25, -2 + 0 + 2 - 1) = (12.25, -1)
        let w = Tensor::new(&[[1.0f64, -1.0], [2.0, 0.0], [3.0, 0.5]], &Device::Cpu).unwrap();
        let b = Tensor::new(&[0.25f64, -1.0], &Device::Cpu).unwrap();
        m.set_parameter("style_proj.weight", &w).unwrap();
        m.set_parameter("style_proj.bias", &b).unwrap();
        let out = m.project_and_prepend_vectors(&style(&[2.0, -1.0, 4.0]), &[]).unwrap();
        assert_eq!(out, vec![vec![12.25, -1.0]]);
    }

    #[test]
    fn encoder_length_is_tokens_plus_one() {
        let m = tiny(DType::F32);
        let s = style(&[0.1, 0.2, 0.3]);
        for n in [1usize, 3, 7] {
            let b = m.make_batch(&[vec![5; n]], &[&s], &[vec![6, 7]]).unwrap();
            let enc = m.encode(&b.source, &b.source_mask, &b.style).unwrap();
            assert_eq!(enc.dims3().unwrap().1, n + 1);
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = tiny(DType::F32).weights_digest().unwrap();
        let b = tiny(DType::F32).weights_digest().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loss_is_finite_and_positive() {
        let m = tiny(DType::F32);
        let s = style(&[0.1, 0.2, 0.3]);
        let b = m
            .make_batch(&[vec![4, 5], vec![6]], &[&s, &s], &[vec![7, 8, 9], vec![10]])
            .unwrap();
        let l = m.loss(&b).unwrap().to_scalar::<f32>().unwrap();
        assert!(l.is_finite() && l > 0.0);
    }
}

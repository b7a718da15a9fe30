use candle_core::backprop::GradStore;
use candle_core::DType;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, ConditioningMode, Lineage, LogEntry, Seq2Seq};
use crate::error::{Error, Result};
use crate::seed;
use crate::style_space::StyleEmbedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Linear warmup, then constant.
    #[default]
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Share of the dataset held out for validation. Datasets too small to
    /// spare a single example validate on the training data.
    pub val_fraction: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 16,
            grad_accum: 4,
            weight_decay: 0.01,
            schedule: Schedule::Constant,
            warmup_steps: 2000,
            total_steps: 230_000,
            seed: 0,
            eval_every: 500,
            val_fraction: 0.05,
        }
    }
}

impl TrainSettings {
    /// Settings for small models on a single CPU.
    pub fn desk(total_steps: usize) -> Self {
        Self {
            learning_rate: 1e-3,
            grad_accum: 1,
            warmup_steps: 100.min(total_steps / 10),
            total_steps,
            eval_every: 500,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if self.grad_accum == 0 {
            return Err(Error::invalid("grad_accum", "must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid("val_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        match self.schedule {
            Schedule::Constant if step < self.warmup_steps => {
                self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64
            }
            Schedule::Constant => self.learning_rate,
        }
    }
}

/// `(input, style) -> target` training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainExample {
    pub input: String,
    pub style: StyleEmbedding,
    pub target: String,
}

impl TrainExample {
    pub fn new(input: impl Into<String>, style: StyleEmbedding, target: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            style,
            target: target.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub best_val_loss: f64,
    pub best_step: usize,
    /// Step whose weights the checkpoint holds.
    pub selected_step: usize,
    pub train_size: usize,
    pub val_size: usize,
}

type Best = Option<(f64, usize, std::collections::BTreeMap<String, candle_core::Tensor>)>;

struct Encoded {
    source: Vec<u32>,
    style: StyleEmbedding,
    target: Vec<u32>,
}

fn encode_all(ckpt: &Checkpoint, data: &[TrainExample]) -> Result<Vec<Encoded>> {
    let dim = ckpt.model.config().embed_dim;
    data.iter()
        .map(|e| {
            if e.style.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: e.style.dim(),
                });
            }
            Ok(Encoded {
                source: ckpt.tokenizer.encode(&e.input),
                style: e.style.clone(),
                target: ckpt.tokenizer.encode(&e.target),
            })
        })
        .collect()
}

fn batch_loss(model: &Seq2Seq, items: &[&Encoded]) -> Result<candle_core::Tensor> {
    let sources: Vec<Vec<u32>> = items.iter().map(|e| e.source.clone()).collect();
    let styles: Vec<&StyleEmbedding> = items.iter().map(|e| &e.style).collect();
    let targets: Vec<Vec<u32>> = items.iter().map(|e| e.target.clone()).collect();
    let batch = model.make_batch(&sources, &styles, &targets)?;
    model.loss(&batch)
}

fn scalar(t: &candle_core::Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Token-weighted mean loss over `data` without gradient tracking.
fn evaluate(model: &Seq2Seq, data: &[Encoded], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0.0;
    for chunk in data.chunks(batch_size.max(1)) {
        let refs: Vec<&Encoded> = chunk.iter().collect();
        let n: usize = chunk
            .iter()
            .map(|e| e.target.len().min(model.config().max_len - 1) + 1)
            .sum();
        total += scalar(&batch_loss(model, &refs)?.detach())? * n as f64;
        tokens += n as f64;
    }
    Ok(total / tokens)
}

fn add_grads(acc: &mut GradStore, new: GradStore, model: &Seq2Seq) -> Result<()> {
    for var in model.vars().values() {
        let t = var.as_tensor();
        if let Some(g) = new.get(t) {
            let sum = match acc.get(t) {
                Some(a) => (a + g)?,
                None => g.clone(),
            };
            acc.insert(t, sum);
        }
    }
    Ok(())
}

/// Loss over a held-out set, as used for validation.
pub fn mean_loss(ckpt: &Checkpoint, data: &[TrainExample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation data"));
    }
    let enc = encode_all(ckpt, data)?;
    evaluate(&ckpt.model, &enc, 32)
}

/// Trains on `train`, validating on `val` every `eval_every` steps and at
/// the end. With `select_best` the returned weights are those of the
/// lowest validation loss seen.
pub fn train_with_validation(
    mut ckpt: Checkpoint,
    train: &[TrainExample],
    val: &[TrainExample],
    settings: &TrainSettings,
    select_best: bool,
) -> Result<(Checkpoint, TrainReport)> {
    settings.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    let train_enc = encode_all(&ckpt, train)?;
    let val_enc = if val.is_empty() {
        encode_all(&ckpt, train)?
    } else {
        encode_all(&ckpt, val)?
    };
    let model = &ckpt.model;
    let vars: Vec<_> = model.vars().values().cloned().collect();
    let mut opt = AdamW::new(
        vars,
        ParamsAdamW {
            lr: settings.learning_rate_at(0),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: settings.weight_decay,
        },
    )?;

    let mut rng = seed::rng(seed::derive_labeled(settings.seed, "batches"));
    let mut order: Vec<usize> = (0..train_enc.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut next_index = |rng: &mut rand_chacha::ChaCha8Rng| {
        if cursor == order.len() {
            order.shuffle(rng);
            cursor = 0;
        }
        cursor += 1;
        order[cursor - 1]
    };

    let start_step = ckpt.meta.step;
    let mut log = Vec::new();
    let mut last_finite: Option<f64> = None;
    let mut window = (0.0, 0usize);
    let mut best: Best = None;
    let mut final_val = f64::NAN;
    let mut final_train = f64::NAN;

    let record_val = |step: usize,
                          train_loss: Option<f64>,
                          log: &mut Vec<LogEntry>,
                          best: &mut Best|
     -> Result<f64> {
        let v = evaluate(model, &val_enc, settings.batch_size)?;
        log.push(LogEntry {
            step: start_step + step,
            train_loss,
            val_loss: Some(v),
        });
        log::debug!("step {} val_loss {v:.4}", start_step + step);
        if select_best && best.as_ref().is_none_or(|(b, _, _)| v < *b) {
            *best = Some((v, step, model.snapshot()?));
        }
        Ok(v)
    };

    if select_best {
        final_val = record_val(0, None, &mut log, &mut best)?;
    }

    for step in 0..settings.total_steps {
        opt.set_learning_rate(settings.learning_rate_at(step));
        let mut grads: Option<GradStore> = None;
        let mut step_loss = 0.0;
        for _ in 0..settings.grad_accum {
            let items: Vec<&Encoded> = (0..settings.batch_size.min(train_enc.len()))
                .map(|_| &train_enc[next_index(&mut rng)])
                .collect();
            let loss = batch_loss(model, &items)?;
            let value = scalar(&loss)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: start_step + step,
                    last_finite,
                });
            }
            step_loss += value / settings.grad_accum as f64;
            let g = loss.affine(1.0 / settings.grad_accum as f64, 0.0)?.backward()?;
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => add_grads(acc, g, model)?,
            }
        }
        last_finite = Some(step_loss);
        final_train = step_loss;
        window.0 += step_loss;
        window.1 += 1;
        opt.step(&grads.expect("grad_accum >= 1"))?;

        let done = step + 1;
        if done % settings.eval_every == 0 || done == settings.total_steps {
            let train_loss = window.0 / window.1 as f64;
            window = (0.0, 0);
            final_val = record_val(done, Some(train_loss), &mut log, &mut best)?;
        }
    }
    if settings.total_steps == 0 && !select_best {
        final_val = evaluate(model, &val_enc, settings.batch_size)?;
    }

    let steps = settings.total_steps;
    let (best_val, best_step, selected_step) = match best {
        Some((v, s, snap)) => {
            model.restore(&snap)?;
            (v, s, s)
        }
        None => (final_val, steps, steps),
    };
    ckpt.meta.step = start_step + steps;
    ckpt.meta.log.extend(log);
    let report = TrainReport {
        steps,
        final_train_loss: final_train,
        final_val_loss: final_val,
        best_val_loss: best_val,
        best_step,
        selected_step,
        train_size: train.len(),
        val_size: val.len(),
    };
    Ok((ckpt, report))
}

/// Deterministic train/validation split of `data`.
fn holdout(data: &[TrainExample], fraction: f64, seed_value: u64) -> (Vec<TrainExample>, Vec<TrainExample>) {
    let n_val = (data.len() as f64 * fraction).floor() as usize;
    if n_val == 0 || n_val >= data.len() {
        return (data.to_vec(), Vec::new());
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut seed::rng(seed::derive_labeled(seed_value, "holdout")));
    let (v, t) = idx.split_at(n_val);
    let mut v = v.to_vec();
    let mut t = t.to_vec();
    v.sort_unstable();
    t.sort_unstable();
    (
        t.iter().map(|&i| data[i].clone()).collect(),
        v.iter().map(|&i| data[i].clone()).collect(),
    )
}

fn dataset_digest(data: &[TrainExample]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for e in data {
        h.update(e.input.as_bytes());
        h.update([0]);
        h.update(e.target.as_bytes());
        h.update([0]);
        for v in &e.style.values {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn run_stage(
    ckpt: Checkpoint,
    data: &[TrainExample],
    settings: &TrainSettings,
    select_best: bool,
    stage: &str,
    mode: ConditioningMode,
) -> Result<(Checkpoint, TrainReport)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    let parent = Some(ckpt.model_id()?);
    let (train, val) = holdout(data, settings.val_fraction, settings.seed);
    let (mut ckpt, report) = train_with_validation(ckpt, &train, &val, settings, select_best)?;
    ckpt.meta.mode = mode;
    ckpt.meta.lineage.push(Lineage {
        stage: stage.into(),
        parent_model_id: parent,
        dataset_digest: Some(dataset_digest(data)),
        dataset_size: data.len(),
        steps: report.steps,
        selected_step: Some(report.selected_step),
    });
    Ok((ckpt, report))
}

/// Teaches the model to rebuild `target` from `(input paraphrase, style)`.
pub fn train_reconstruction(
    ckpt: Checkpoint,
    dataset: &[TrainExample],
    settings: &TrainSettings,
) -> Result<(Checkpoint, TrainReport)> {
    run_stage(
        ckpt,
        dataset,
        settings,
        false,
        "reconstruction",
        ConditioningMode::Reconstruction,
    )
}

/// Fine-tunes on `(source, pooled target style) -> output` pairs and keeps
/// the lowest-validation-loss weights.
pub fn fine_tune_distill(
    ckpt: Checkpoint,
    pairs: &[TrainExample],
    settings: &TrainSettings,
) -> Result<(Checkpoint, TrainReport)> {
    run_stage(ckpt, pairs, settings, true, "distilled", ConditioningMode::Distilled)
}

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use candle_core::DType;
use restyle::config::PipelineConfig;
use restyle::corpus::AuthorCorpus;
use restyle::model::{train_reconstruction, Checkpoint};
use restyle::pipeline::{build_recon_dataset, Pipeline};
use restyle::synth::synth_corpus;
use restyle::tokenizer::Tokenizer;

/// Desk preset with a smaller corpus so examples finish quickly.
pub fn config() -> PipelineConfig {
    let mut c = PipelineConfig::desk();
    c.synth.n_authors = 60;
    c
}

pub fn corpus(cfg: &PipelineConfig) -> AuthorCorpus {
    synth_corpus(&cfg.synth).expect("synthetic corpus")
}

/// The checkpoint named by the first argument, or a freshly trained one.
pub fn checkpoint(cfg: &PipelineConfig, corpus: &AuthorCorpus) -> anyhow::Result<Checkpoint> {
    match std::env::args().nth(1).map(PathBuf::from) {
        Some(p) => Ok(Checkpoint::load(p)?),
        None => train(cfg, corpus),
    }
}

/// A reconstruction model trained for `STEPS` steps (default 300).
pub fn train(cfg: &PipelineConfig, corpus: &AuthorCorpus) -> anyhow::Result<Checkpoint> {
    let steps = std::env::var("STEPS").ok().and_then(|s| s.parse().ok()).unwrap_or(300);
    let embedder = cfg.embedder.build(corpus.texts())?;
    let para = cfg.paraphraser.build()?;
    let data = build_recon_dataset(corpus, embedder.as_ref(), para.as_ref(), &cfg.paraphrase)?;
    let tok = Tokenizer::train(
        data.iter().flat_map(|e| [e.input.as_str(), e.target.as_str()]),
        cfg.tokenizer.vocab_size,
        cfg.tokenizer.min_frequency,
    )?;
    let ckpt = Checkpoint::fresh(cfg.model.clone(), tok, embedder.embedder_id(), DType::F32)?;
    let mut settings = cfg.recon_train.clone();
    settings.total_steps = steps;
    settings.warmup_steps = settings.warmup_steps.min(steps / 10);
    eprintln!("training {steps} steps on {} examples", data.len());
    let (ckpt, report) = train_reconstruction(ckpt, &data, &settings)?;
    eprintln!("final train loss {:.3}", report.final_train_loss);
    Ok(ckpt)
}

pub fn pipeline(cfg: &PipelineConfig, ckpt: Checkpoint, reference: &AuthorCorpus) -> anyhow::Result<Pipeline> {
    let embedder = cfg.embedder.build(reference.texts())?;
    let scorers = cfg.scorers(embedder, reference.texts())?;
    Ok(Pipeline::new(Arc::new(ckpt), cfg.paraphraser.build()?, cfg.paraphrase.clone(), scorers)?)
}

pub fn family_texts<'a>(corpus: &'a AuthorCorpus, prefix: &str, n: usize) -> Vec<&'a str> {
    corpus
        .records()
        .iter()
        .filter(|r| r.author_id.starts_with(prefix))
        .map(|r| r.text.as_str())
        .take(n)
        .collect()
}

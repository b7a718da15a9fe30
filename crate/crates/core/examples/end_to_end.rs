//! Synthetic corpus, reconstruction training, pair generation,
//! self-distillation and a before/after comparison on the desk preset.
//!
//! `cargo run --release --example end_to_end`
//!
//! Overrides: `STEPS`, `PAIRS`, `DSTEPS`. `RECON_CACHE` and `DISTILL_CACHE`
//! name checkpoint directories to reuse or write.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use candle_core::DType;
use restyle::classify::is_shouting;
use restyle::config::PipelineConfig;
use restyle::evalharness::{evaluate_authorship, EvalSplit, PipelineSystem, SplitName};
use restyle::model::{train_reconstruction, Checkpoint};
use restyle::neutralizer::RuleNeutralizer;
use restyle::pipeline::{build_recon_dataset, self_distill, Pipeline, Scorers, TransferOptions};
use restyle::style_space::MarkerStyleEmbedder;
use restyle::synth::{synth_corpus, synth_eval_corpus, Family};
use restyle::tokenizer::Tokenizer;

fn env(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let t0 = Instant::now();
    let mut cfg = PipelineConfig::desk();
    cfg.recon_train.total_steps = env("STEPS", cfg.recon_train.total_steps);
    cfg.distill_train.total_steps = env("DSTEPS", cfg.distill_train.total_steps);
    let corpus = synth_corpus(&cfg.synth)?;
    let embedder = cfg.embedder.build(corpus.texts())?;
    let para = Arc::new(RuleNeutralizer::default());

    let cache = std::env::var("RECON_CACHE").ok();
    let recon = match cache.as_deref().filter(|c| Path::new(c).exists()) {
        Some(c) => Checkpoint::load(c)?,
        None => {
            let data = build_recon_dataset(&corpus, embedder.as_ref(), para.as_ref(), &cfg.paraphrase)?;
            let tok = Tokenizer::train(
                data.iter().flat_map(|e| [e.input.as_str(), e.target.as_str()]),
                cfg.tokenizer.vocab_size,
                cfg.tokenizer.min_frequency,
            )?;
            let ckpt = Checkpoint::fresh(cfg.model.clone(), tok, embedder.embedder_id(), DType::F32)?;
            println!("params {} vocab {}", ckpt.model.parameter_count(), ckpt.tokenizer.vocab_size());
            let (recon, report) = train_reconstruction(ckpt, &data, &cfg.recon_train)?;
            println!("recon {report:?} in {:.0}s", t0.elapsed().as_secs_f64());
            if let Some(c) = &cache {
                recon.save(c)?;
            }
            recon
        }
    };

    let scorers = Scorers::new(embedder.clone());
    let recon_pipe = Pipeline::new(Arc::new(recon), para.clone(), cfg.paraphrase.clone(), scorers.clone())?;

    let (eval, src, tgt) = synth_eval_corpus(Family::Loud, 4, 4, 6, 10_000, 7)?;
    let split = EvalSplit::new(SplitName::Custom, src, tgt, 6)?;
    let marker = MarkerStyleEmbedder::fit(corpus.texts())?;
    let show = |name: &str, p: &Pipeline, k: usize| -> anyhow::Result<()> {
        let sys = PipelineSystem {
            name: name.into(),
            pipeline: p,
            options: TransferOptions { rerank_k: k, ..cfg.transfer.clone() },
        };
        let r = evaluate_authorship(&[&sys], &eval, &split, &marker, 1)?;
        let s = &r.systems[0];
        let acc = s.examples.iter().filter(|e| !is_shouting(&e.output)).count() as f64 / s.examples.len() as f64;
        println!("{name}: {:?} acc {acc:.3} ({:.2}s/it)", s.aggregate, s.timing.mean_s);
        for e in s.examples.iter().take(3) {
            println!("   {} => {}", e.source_text, e.output);
        }
        Ok(())
    };
    show("recon k=1", &recon_pipe, 1)?;
    show("recon k=5", &recon_pipe, 5)?;

    let (pairs, stats) =
        recon_pipe.generate_pair_dataset(&corpus, env("PAIRS", 3000), &cfg.generation, &cfg.filter, cfg.seed)?;
    println!("pairs {stats:?} at {:.0}s", t0.elapsed().as_secs_f64());
    let recon = Arc::try_unwrap(recon_pipe.model).map_err(|_| anyhow::anyhow!("model still shared"))?;
    let (distilled, report) = self_distill(recon, &pairs, &cfg.distill_train)?;
    println!("distill {report:?}");
    if let Ok(c) = std::env::var("DISTILL_CACHE") {
        distilled.save(c)?;
    }
    let dpipe = Pipeline::new(Arc::new(distilled), para, cfg.paraphrase.clone(), scorers)?;
    show("distilled k=1", &dpipe, 1)?;
    show("distilled k=5", &dpipe, 5)?;
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
    Ok(())
}

//! Per-inference wall clock for a model at batch size 1.
//!
//! `cargo run --example timing -- [checkpoint]`

#[path = "support/mod.rs"]
mod support;

use restyle::evalharness::{timing_report, PipelineSystem, DEFAULT_WARMUP};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let cfg = support::config();
    let corpus = support::corpus(&cfg);
    let p = support::pipeline(&cfg, support::checkpoint(&cfg, &corpus)?, &corpus)?;
    let inputs = support::family_texts(&corpus, "loud-", 50);
    let exemplars = support::family_texts(&corpus, "calm-", 8);
    let model = PipelineSystem {
        name: "model".into(),
        pipeline: &p,
        options: cfg.transfer.clone(),
    };
    let report = timing_report(&model, &inputs, &exemplars, "single cpu", DEFAULT_WARMUP, cfg.seed)?;
    print!("{}", report.to_markdown());
    Ok(())
}

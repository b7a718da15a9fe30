//! Authorship evaluation table with the Copy baselines and a model.
//!
//! `cargo run --example evaluate -- [checkpoint]`

#[path = "support/mod.rs"]
mod support;

use restyle::evalharness::{evaluate_authorship, CopySource, CopyTarget, EvalSplit, PipelineSystem, SplitName, TransferSystem};
use restyle::style_space::MarkerStyleEmbedder;
use restyle::synth::{synth_eval_corpus, Family};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let cfg = support::config();
    let corpus = support::corpus(&cfg);
    let p = support::pipeline(&cfg, support::checkpoint(&cfg, &corpus)?, &corpus)?;
    let (eval, src, tgt) = synth_eval_corpus(Family::Loud, 3, 3, 4, 10_000, 7)?;
    let split = EvalSplit::new(SplitName::Custom, src, tgt, 4)?;
    let marker = MarkerStyleEmbedder::fit(corpus.texts())?;
    let model = PipelineSystem {
        name: "model".into(),
        pipeline: &p,
        options: cfg.transfer.clone(),
    };
    let systems: [&dyn TransferSystem; 3] = [&CopySource, &CopyTarget, &model];
    let report = evaluate_authorship(&systems, &eval, &split, &marker, cfg.seed)?;
    print!("{}", report.to_markdown());
    Ok(())
}

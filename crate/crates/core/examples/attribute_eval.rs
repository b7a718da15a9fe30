//! Attribute-style evaluation (accuracy, meaning, fluency, joint) between
//! the two synthetic families.
//!
//! `cargo run --example attribute_eval -- [checkpoint]`

#[path = "support/mod.rs"]
mod support;

use restyle::classify::{is_shouting, LogisticClassifier, LogisticSettings};
use restyle::evalharness::{evaluate_attribute, AccuracyFn, CopySource, ExemplarSelector, PipelineSystem, TransferSystem};
use restyle::metrics::CharLm;

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let cfg = support::config();
    let corpus = support::corpus(&cfg);
    let p = support::pipeline(&cfg, support::checkpoint(&cfg, &corpus)?, &corpus)?;
    let formal = support::family_texts(&corpus, "calm-", 60);
    let informal = support::family_texts(&corpus, "loud-", 60);
    let emb = p.scorers.embedder.clone();
    let clf = LogisticClassifier::fit(&emb.embed_all(&formal)?, &emb.embed_all(&informal)?, LogisticSettings::default())?;
    let selector = ExemplarSelector {
        classifier: &clf,
        embedder: emb.as_ref(),
        threshold: cfg.eval.exemplar_threshold,
    };
    let is_formal = |t: &str| !is_shouting(t);
    let accuracy = AccuracyFn {
        id: "case-heuristic".into(),
        is_first_class: &is_formal,
    };
    let lm = CharLm::fit(corpus.texts(), cfg.metrics.fluency_reference)?;
    let model = PipelineSystem {
        name: "model".into(),
        pipeline: &p,
        options: cfg.transfer.clone(),
    };
    let systems: [&dyn TransferSystem; 2] = [&CopySource, &model];
    let report = evaluate_attribute(&systems, &formal, &informal, &accuracy, &selector, &lm, 8, cfg.seed)?;
    print!("{}", report.to_markdown());
    Ok(())
}

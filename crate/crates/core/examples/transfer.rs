//! Few-shot transfer of one text with reranking over five candidates.
//!
//! `cargo run --example transfer -- [checkpoint]`

#[path = "support/mod.rs"]
mod support;

use restyle::pipeline::TransferOptions;
use restyle::service::rank_candidates;

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let cfg = support::config();
    let corpus = support::corpus(&cfg);
    let p = support::pipeline(&cfg, support::checkpoint(&cfg, &corpus)?, &corpus)?;
    let exemplars = support::family_texts(&corpus, "calm-", 8);
    let source = "DUDE, THE SPICY SOUP WE COOKED WAS SO GOOD!!!";
    let opts = TransferOptions {
        rerank_k: 5,
        seed: 4,
        ..cfg.transfer.clone()
    };
    let out = p.transfer(source, &exemplars, &opts)?;
    println!("{source}\n=> {}\n", out.output);
    for c in rank_candidates(&out) {
        println!("{}. [{:.4}] {}", c.rank, c.rerank_score, c.text);
    }
    Ok(())
}

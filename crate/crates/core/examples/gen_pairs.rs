//! Generates filtered synthetic transfer pairs with a reconstruction model
//! and prints the yield.
//!
//! `cargo run --example gen_pairs -- [checkpoint]`

#[path = "support/mod.rs"]
mod support;

use restyle::pipeline::drop_table;

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let cfg = support::config();
    let corpus = support::corpus(&cfg);
    let p = support::pipeline(&cfg, support::checkpoint(&cfg, &corpus)?, &corpus)?;
    let (pairs, stats) = p.generate_pair_dataset(&corpus, 30, &cfg.generation, &cfg.filter, cfg.seed)?;
    println!(
        "{} of {} pairs kept; {} of {} candidates survived",
        stats.pairs_emitted, stats.pairs_requested, stats.kept, stats.generated
    );
    for (rule, n) in drop_table(&stats.drops) {
        println!("  {rule}: {n}");
    }
    for pair in pairs.iter().take(5) {
        println!("\n{}\n  => {}\n  scores {:?}", pair.source_text, pair.output_text, pair.scores);
    }
    Ok(())
}

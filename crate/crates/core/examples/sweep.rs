//! Interpolation sweep: style strength against meaning preservation.
//!
//! `cargo run --example sweep -- [checkpoint]`

#[path = "support/mod.rs"]
mod support;

use restyle::classify::is_shouting;
use restyle::evalharness::{interpolation_sweep, spearman, sweep_csv};
use restyle::pipeline::TransferOptions;
use restyle::style_space::MarkerStyleEmbedder;

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let cfg = support::config();
    let corpus = support::corpus(&cfg);
    let p = support::pipeline(&cfg, support::checkpoint(&cfg, &corpus)?, &corpus)?;
    let inputs = support::family_texts(&corpus, "loud-", 20);
    let exemplars = support::family_texts(&corpus, "calm-", 8);
    let marker = MarkerStyleEmbedder::fit(corpus.texts())?;
    let opts = TransferOptions {
        seed: 2,
        ..cfg.transfer.clone()
    };
    let calm = |t: &str| !is_shouting(t);
    let rows = interpolation_sweep(&p, &inputs, &exemplars, &cfg.eval.lam_grid, &opts, &marker, &calm)?;
    print!("{}", sweep_csv(&rows));
    let lams: Vec<f64> = rows.iter().map(|r| r.lam).collect();
    let towards: Vec<f64> = rows.iter().map(|r| r.towards).collect();
    let sims: Vec<f64> = rows.iter().map(|r| r.sim).collect();
    println!("spearman(lam, towards) = {:.2}", spearman(&lams, &towards)?);
    println!("spearman(lam, sim) = {:.2}", spearman(&lams, &sims)?);
    Ok(())
}

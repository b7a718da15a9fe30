//! Trains a small reconstruction model and saves it.
//!
//! `STEPS=300 cargo run --example train_recon -- /tmp/recon`

#[path = "support/mod.rs"]
mod support;

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "/tmp/restyle-recon".into());
    let cfg = support::config();
    let corpus = support::corpus(&cfg);
    let ckpt = support::train(&cfg, &corpus)?;
    ckpt.save(&out)?;
    println!("{} -> {out}", ckpt.model_id()?);
    Ok(())
}

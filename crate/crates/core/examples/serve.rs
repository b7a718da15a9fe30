//! Runs the HTTP service on a small model with one exemplar set per family.
//!
//! `cargo run --example serve -- [checkpoint]`, then e.g.
//! `curl -s localhost:8080/v1/health`

#[path = "support/mod.rs"]
mod support;

use std::collections::BTreeMap;

use restyle::service::{serve, ExemplarSet, ServiceState, ENV_BIND};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cfg = support::config();
    let corpus = support::corpus(&cfg);
    let p = support::pipeline(&cfg, support::checkpoint(&cfg, &corpus)?, &corpus)?;
    let mut sets = BTreeMap::new();
    for fam in ["loud", "calm"] {
        let texts = support::family_texts(&corpus, &format!("{fam}-"), 8).into_iter().map(String::from).collect();
        sets.insert(fam.to_string(), ExemplarSet { id: fam.into(), texts });
    }
    let state = ServiceState::new(p, sets, &cfg)?;
    let bind = std::env::var(ENV_BIND).unwrap_or_else(|_| cfg.service.bind.clone());
    tokio::runtime::Runtime::new()?.block_on(serve(state, &bind))
}

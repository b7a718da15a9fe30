#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;

use candle_core::DType;
use restyle::config::PipelineConfig;
use restyle::corpus::AuthorCorpus;
use restyle::model::{Checkpoint, ModelConfig};
use restyle::neutralizer::{ParaphraseSettings, RuleNeutralizer};
use restyle::pipeline::{Pipeline, Scorers};
use restyle::style_space::FeatureStyleEmbedder;
use restyle::synth::{synth_corpus, SynthConfig};
use restyle::tokenizer::Tokenizer;

pub const EMBED_DIM: usize = 164;

pub fn small_corpus() -> AuthorCorpus {
    synth_corpus(&SynthConfig {
        n_authors: 12,
        texts_per_author: 6,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap()
}

pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 300,
        hidden_dim: 16,
        embed_dim: EMBED_DIM,
        n_layers_enc: 1,
        n_layers_dec: 1,
        n_heads: 2,
        ff_dim: 32,
        max_len: 16,
        seed: 11,
    }
}

/// Untrained checkpoint whose tokenizer covers `corpus`.
pub fn tiny_checkpoint(corpus: &AuthorCorpus) -> Checkpoint {
    let tok = Tokenizer::train(corpus.texts(), 300, 1).unwrap();
    let emb = FeatureStyleEmbedder::new(EMBED_DIM).unwrap();
    Checkpoint::fresh(tiny_model_config(), tok, restyle::style_space::StyleEmbedder::embedder_id(&emb), DType::F32).unwrap()
}

pub fn pipeline_for(ckpt: Checkpoint) -> Pipeline {
    let scorers = Scorers::new(Arc::new(FeatureStyleEmbedder::new(EMBED_DIM).unwrap()));
    Pipeline::new(
        Arc::new(ckpt),
        Arc::new(RuleNeutralizer::default()),
        ParaphraseSettings::default(),
        scorers,
    )
    .unwrap()
}

/// Desk config matching the tiny fixture.
pub fn tiny_config() -> PipelineConfig {
    let mut c = PipelineConfig::desk();
    c.model = tiny_model_config();
    c.embedder = restyle::config::EmbedderChoice::Feature { dim: EMBED_DIM };
    c.transfer.max_len = 12;
    c.generation.max_len = 12;
    c.tokenizer.vocab_size = 300;
    c.tokenizer.min_frequency = 1;
    c.synth.n_authors = 12;
    c.synth.texts_per_author = 6;
    c.recon_train.batch_size = 8;
    c.recon_train.eval_every = 2;
    c.distill_train.batch_size = 4;
    c.distill_train.eval_every = 2;
    c.filter = restyle::pipeline::FilterSettings::permissive();
    c
}

pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }
}

/// One HTTP/1.1 request over a fresh connection.
pub fn http(addr: SocketAddr, method: &str, path: &str, body: Option<&str>) -> HttpResponse {
    let mut s = TcpStream::connect(addr).unwrap();
    let body = body.unwrap_or("");
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    s.write_all(req.as_bytes()).unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").expect("header terminator");
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    HttpResponse {
        status,
        body: body.to_string(),
    }
}

//! Few-shot text style transfer.

pub mod classify;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evalharness;
pub mod metrics;
pub mod model;
pub mod neutralizer;
pub mod pipeline;
pub mod sampling;
pub mod seed;
pub mod service;
pub mod style_space;
pub mod synth;
pub mod text;
pub mod tokenizer;

pub use error::{Error, Result};

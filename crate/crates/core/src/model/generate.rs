use candle_core::{DType, Tensor};

use super::Checkpoint;
use crate::error::{Error, Result};
use crate::sampling;
use crate::seed;
use crate::style_space::StyleEmbedding;
use crate::tokenizer::{BOS, EOS, PAD};

/// One input to batched generation. Row `i` of a request samples with
/// `seed::child_rng(seed, i)`, so asking for more samples extends the list
/// without changing its prefix.
#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub input: &'a str,
    pub style: &'a StyleEmbedding,
    pub n: usize,
    pub seed: u64,
}

enum Decoding {
    Nucleus { top_p: f64, tau: f64 },
    Greedy,
}

/// `n` nucleus-sampled outputs for one input.
#[allow(clippy::too_many_arguments)]
pub fn generate(
    ckpt: &Checkpoint,
    input: &str,
    style: &StyleEmbedding,
    top_p: f64,
    tau: f64,
    n: usize,
    seed: u64,
    max_len: usize,
) -> Result<Vec<String>> {
    let req = GenerationRequest {
        input,
        style,
        n,
        seed,
    };
    Ok(generate_batch(ckpt, &[req], top_p, tau, max_len)?
        .pop()
        .expect("one request"))
}

pub fn generate_batch(
    ckpt: &Checkpoint,
    requests: &[GenerationRequest<'_>],
    top_p: f64,
    tau: f64,
    max_len: usize,
) -> Result<Vec<Vec<String>>> {
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(Error::invalid("top_p", format!("must lie in (0, 1], got {top_p}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    run(ckpt, requests, Decoding::Nucleus { top_p, tau }, max_len)
}

/// Argmax decoding.
pub fn greedy(
    ckpt: &Checkpoint,
    input: &str,
    style: &StyleEmbedding,
    max_len: usize,
) -> Result<String> {
    let req = GenerationRequest {
        input,
        style,
        n: 1,
        seed: 0,
    };
    Ok(run(ckpt, &[req], Decoding::Greedy, max_len)?
        .pop()
        .and_then(|mut v| v.pop())
        .expect("one output"))
}

fn run(
    ckpt: &Checkpoint,
    requests: &[GenerationRequest<'_>],
    decoding: Decoding,
    max_len: usize,
) -> Result<Vec<Vec<String>>> {
    if let Some(r) = requests.iter().find(|r| r.n == 0) {
        return Err(Error::invalid("n", format!("must be >= 1, got {}", r.n)));
    }
    if max_len == 0 {
        return Err(Error::invalid("max_len", "must be positive"));
    }
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    let model = &ckpt.model;
    let dev = model.device().clone();
    let max_steps = max_len.min(model.config().max_len);

    let mut sources = Vec::new();
    let mut styles = Vec::new();
    let mut rngs = Vec::new();
    let mut owner = Vec::new();
    for (ri, r) in requests.iter().enumerate() {
        let ids = model.clip_source(ckpt.tokenizer.encode(r.input));
        for i in 0..r.n {
            sources.push(ids.clone());
            styles.push(r.style);
            rngs.push(seed::child_rng(r.seed, i as u64));
            owner.push(ri);
        }
    }
    let rows = sources.len();
    let width = sources.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let src = model.pad_ids(&sources, width)?;
    let src_mask = model.source_mask(&sources, width)?;
    let memory = model.encode(&src, &src_mask, &model.style_tensor(&styles)?)?;

    let mut outputs: Vec<Vec<u32>> = vec![Vec::new(); rows];
    let mut active: Vec<usize> = (0..rows).collect();
    for step in 0..=max_steps {
        if active.is_empty() {
            break;
        }
        let idx = Tensor::from_vec(
            active.iter().map(|&r| r as u32).collect::<Vec<_>>(),
            active.len(),
            &dev,
        )?;
        let mem = memory.index_select(&idx, 0)?;
        let mem_mask = src_mask.index_select(&idx, 0)?;
        let dec_rows: Vec<Vec<u32>> = active
            .iter()
            .map(|&r| {
                let mut v = vec![BOS];
                v.extend_from_slice(&outputs[r]);
                v
            })
            .collect();
        let len = step + 1;
        let dec = model.pad_ids(&dec_rows, len)?;
        let dec_mask = model.causal_mask(&dec_rows, len)?;
        let logits = model
            .decode(&dec, &dec_mask, &mem, &mem_mask)?
            .narrow(1, step, 1)?
            .squeeze(1)?
            .to_dtype(DType::F32)?
            .to_vec2::<f32>()?;
        let mut still = Vec::with_capacity(active.len());
        for (row_logits, &r) in logits.into_iter().zip(&active) {
            let mut l = row_logits;
            l[PAD as usize] = f32::NEG_INFINITY;
            l[BOS as usize] = f32::NEG_INFINITY;
            if step == max_steps {
                continue;
            }
            let tok = match decoding {
                Decoding::Greedy => sampling::argmax(&l) as u32,
                Decoding::Nucleus { top_p, tau } => {
                    sampling::sample_nucleus(&l, top_p, tau, &mut rngs[r])? as u32
                }
            };
            if tok != EOS {
                outputs[r].push(tok);
                still.push(r);
            }
        }
        active = still;
    }

    let mut grouped: Vec<Vec<String>> = requests.iter().map(|r| Vec::with_capacity(r.n)).collect();
    for (r, ids) in outputs.iter().enumerate() {
        grouped[owner[r]].push(ckpt.tokenizer.decode(ids));
    }
    Ok(grouped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::tokenizer::Tokenizer;

    fn ckpt() -> Checkpoint {
        let tok = Tokenizer::train(["the cat sat on the mat", "THE DOG RAN!!!"], 60, 1).unwrap();
        let cfg = ModelConfig {
            hidden_dim: 16,
            embed_dim: 4,
            n_heads: 2,
            ff_dim: 32,
            max_len: 16,
            n_layers_enc: 1,
            n_layers_dec: 1,
            seed: 9,
            ..ModelConfig::default()
        };
        Checkpoint::fresh(cfg, tok, "test", DType::F32).unwrap()
    }

    fn style() -> StyleEmbedding {
        StyleEmbedding::new("test", vec![0.3, -0.1, 0.5, 0.2]).unwrap()
    }

    #[test]
    fn returns_exactly_n() {
        let c = ckpt();
        let out = generate(&c, "the cat", &style(), 0.8, 1.0, 5, 1, 8).unwrap();
        assert_eq!(out.len(), 5);
        assert!(generate(&c, "the cat", &style(), 0.8, 1.0, 0, 1, 8).is_err());
        assert!(generate(&c, "the cat", &style(), 0.0, 1.0, 1, 1, 8).is_err());
        assert!(generate(&c, "the cat", &style(), 0.8, 0.0, 1, 1, 8).is_err());
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let c = ckpt();
        let a = generate(&c, "the cat", &style(), 0.9, 1.5, 4, 7, 10).unwrap();
        let b = generate(&c, "the cat", &style(), 0.9, 1.5, 4, 7, 10).unwrap();
        let p = generate(&c, "the cat", &style(), 0.9, 1.5, 2, 7, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a[..2], &p[..]);
    }

    #[test]
    fn tiny_top_p_is_greedy_for_any_seed() {
        let c = ckpt();
        let g = greedy(&c, "the dog", &style(), 10).unwrap();
        for seed in 0..4 {
            for tau in [0.5, 2.0] {
                let out = generate(&c, "the dog", &style(), 1e-9, tau, 2, seed, 10).unwrap();
                assert!(out.iter().all(|o| *o == g));
            }
        }
    }

    #[test]
    fn output_respects_max_len() {
        let c = ckpt();
        for s in generate(&c, "the cat", &style(), 1.0, 3.0, 6, 3, 4).unwrap() {
            assert!(c.tokenizer.encode(&s).len() <= 4 + 1, "{s}");
        }
    }

    #[test]
    fn batch_matches_single_requests() {
        let c = ckpt();
        let s = style();
        let reqs = [
            GenerationRequest { input: "the cat", style: &s, n: 2, seed: 1 },
            GenerationRequest { input: "THE DOG RAN", style: &s, n: 1, seed: 2 },
        ];
        let batch = generate_batch(&c, &reqs, 1e-9, 1.0, 8).unwrap();
        assert_eq!(batch[0], generate(&c, "the cat", &s, 1e-9, 1.0, 2, 1, 8).unwrap());
        assert_eq!(batch[1], generate(&c, "THE DOG RAN", &s, 1e-9, 1.0, 1, 2, 8).unwrap());
    }
}

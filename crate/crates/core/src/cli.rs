//! Command-line front end. Each subcommand loads the config, applies flag
//! overrides and calls one library operation.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use candle_core::DType;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::classify::{is_shouting, LogisticClassifier, LogisticSettings};
use crate::config::PipelineConfig;
use crate::corpus::{sample_author_texts, split_by_author, AuthorCorpus};
use crate::evalharness::{
    evaluate_attribute, evaluate_authorship, interpolation_sweep, sweep_csv, timing_report, AccuracyFn,
    CopySource, CopyTarget, EvalSplit, ExemplarSelector, PipelineSystem, TransferSystem,
};
use crate::metrics::CharLm;
use crate::model::{train_reconstruction, Checkpoint, TrainExample};
use crate::pipeline::{
    build_recon_dataset, read_pairs_jsonl, self_distill, write_pairs_jsonl, Pipeline, TransferOptions,
};
use crate::service::{self, case_matches, rank_candidates, ServiceState};
use crate::synth::{synth_corpus, synth_eval_corpus, Family};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Parser)]
#[command(name = "restyle", version, about = "Few-shot text style transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML or JSON config; defaults to the full-size settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Full,
    Desk,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalKind {
    Authorship,
    Attribute,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes a config file with every field filled in.
    InitConfig {
        #[arg(long, value_enum, default_value = "full")]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Writes the synthetic two-family corpus as JSONL.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        /// Also writes a held-out evaluation corpus with disjoint topics.
        #[arg(long)]
        eval_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Loads, samples per author and splits by author.
    PrepareCorpus {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Paraphrases every training text into reconstruction examples.
    BuildReconData {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Trains the reconstruction model from scratch.
    TrainRecon {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Generates filtered synthetic transfer pairs.
    GenPairs {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 100)]
        n_pairs: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fine-tunes a reconstruction checkpoint on generated pairs.
    Distill {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Restyles one text and prints ranked candidates with scores.
    Transfer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        text: String,
        /// JSONL file of `{"text": ..}` exemplars.
        #[arg(long)]
        exemplars: PathBuf,
        #[arg(long)]
        rerank_k: Option<usize>,
        #[arg(long)]
        lam: Option<f64>,
        /// Prints the full response as JSON.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Authorship or attribute evaluation tables.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        kind: EvalKind,
        /// Authorship: evaluation corpus (split authors are sampled from it).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Attribute: JSONL files of the two classes.
        #[arg(long)]
        formal: Option<PathBuf>,
        #[arg(long)]
        informal: Option<PathBuf>,
        /// Reference texts for the evaluation embedder and fluency model.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        num_examples: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Interpolation sweep; writes CSV.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        exemplars: PathBuf,
        /// Comma-separated λ values; defaults to the config grid.
        #[arg(long, value_delimiter = ',')]
        lam_grid: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Per-inference wall clock at batch size 1.
    Timing {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        exemplars: PathBuf,
        #[arg(long, default_value = "cpu")]
        device_note: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Runs the HTTP service.
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::InitConfig { common, .. }
            | Command::SynthCorpus { common, .. }
            | Command::PrepareCorpus { common, .. }
            | Command::BuildReconData { common, .. }
            | Command::TrainRecon { common, .. }
            | Command::GenPairs { common, .. }
            | Command::Distill { common, .. }
            | Command::Transfer { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Sweep { common, .. }
            | Command::Timing { common, .. }
            | Command::Serve { common, .. } => common,
        }
    }
}

/// Parses `args` (including the program name) and runs. Returns the exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

pub fn load_config(common: &Common) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Texts of a JSONL file of `{"text": ..}` or corpus records.
pub fn read_texts(path: &Path) -> anyhow::Result<Vec<String>> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        match v.get("text").and_then(|t| t.as_str()) {
            Some(t) if !t.trim().is_empty() => out.push(t.to_string()),
            _ => bail!("{}:{}: missing `text`", path.display(), i + 1),
        }
    }
    if out.is_empty() {
        bail!("{} has no texts", path.display());
    }
    Ok(out)
}

fn write_examples(path: &Path, data: &[TrainExample]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for e in data {
        writeln!(w, "{}", serde_json::to_string(e)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_examples(path: &Path) -> anyhow::Result<Vec<TrainExample>> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// A pipeline around a saved checkpoint. `reference` texts fit the fluency
/// model and any corpus-fitted embedder.
pub fn open_pipeline(cfg: &PipelineConfig, checkpoint: &Path, reference: &[&str]) -> anyhow::Result<Pipeline> {
    let ckpt = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let embedder = cfg.embedder.build(reference.iter().copied())?;
    let scorers = cfg.scorers(embedder, reference.iter().copied())?;
    Ok(Pipeline::new(Arc::new(ckpt), cfg.paraphraser.build()?, cfg.paraphrase.clone(), scorers)?)
}

fn provenance(cfg: &PipelineConfig) -> anyhow::Result<serde_json::Value> {
    Ok(json!({ "config_hash": cfg.config_hash()?, "config": serde_json::to_value(cfg)? }))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli.command.common())?;
    match cli.command {
        Command::InitConfig { preset, out, .. } => {
            let mut c = match preset {
                Preset::Full => PipelineConfig::default(),
                Preset::Desk => PipelineConfig::desk(),
            };
            c.seed = cfg.seed;
            c.save(&out)?;
            println!("wrote {}", out.display());
        }
        Command::SynthCorpus { out, eval_out, .. } => {
            let synth = crate::synth::SynthConfig {
                seed: cfg.seed,
                ..cfg.synth.clone()
            };
            let c = synth_corpus(&synth)?;
            c.write_jsonl(&out)?;
            println!("{} texts from {} authors -> {}", c.len(), c.n_authors(), out.display());
            if let Some(p) = eval_out {
                let e = &cfg.eval;
                let (ec, _, _) = synth_eval_corpus(
                    Family::Loud,
                    e.n_source_authors,
                    e.n_target_authors,
                    e.texts_per_author,
                    synth.n_authors,
                    cfg.seed,
                )?;
                ec.write_jsonl(&p)?;
                println!("{} evaluation texts -> {}", ec.len(), p.display());
            }
        }
        Command::PrepareCorpus { input, out_dir, .. } => {
            let (c, stats) = AuthorCorpus::load_jsonl(&input)?;
            let sampled = sample_author_texts(&c, cfg.corpus.per_author, cfg.corpus.max_tokens, cfg.seed)?;
            let (train, val, test) = split_by_author(&sampled, cfg.corpus.split, cfg.seed, &Default::default())?;
            fs::create_dir_all(&out_dir)?;
            for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
                part.write_jsonl(out_dir.join(format!("{name}.jsonl")))?;
            }
            let manifest = json!({
                "load": stats,
                "train": { "authors": train.n_authors(), "texts": train.len() },
                "val": { "authors": val.n_authors(), "texts": val.len() },
                "test": { "authors": test.n_authors(), "texts": test.len() },
                "provenance": provenance(&cfg)?,
            });
            write_json(&out_dir.join("manifest.json"), &manifest)?;
            println!("{}", serde_json::to_string_pretty(&manifest["train"])?);
        }
        Command::BuildReconData { corpus, out, .. } => {
            let (c, _) = AuthorCorpus::load_jsonl(&corpus)?;
            let texts: Vec<&str> = c.texts().collect();
            let embedder = cfg.embedder.build(texts.iter().copied())?;
            let para = cfg.paraphraser.build()?;
            let settings = cfg.paraphrase.clone().with_seed(cfg.paraphrase.seed ^ cfg.seed);
            let data = build_recon_dataset(&c, embedder.as_ref(), para.as_ref(), &settings)?;
            write_examples(&out, &data)?;
            println!("{} reconstruction examples -> {}", data.len(), out.display());
        }
        Command::TrainRecon { data, out, steps, .. } => {
            let data = read_examples(&data)?;
            let texts = data.iter().flat_map(|e| [e.input.as_str(), e.target.as_str()]);
            let tok = Tokenizer::train(texts, cfg.tokenizer.vocab_size, cfg.tokenizer.min_frequency)?;
            let mut model = cfg.model.clone();
            model.seed = cfg.seed;
            let mut ckpt = Checkpoint::fresh(model, tok, cfg.embedder.embedder_id(), DType::F32)?;
            ckpt.meta.config_hash = Some(cfg.config_hash()?);
            let mut settings = cfg.recon_train.clone();
            if let Some(s) = steps {
                settings.total_steps = s;
                settings.warmup_steps = settings.warmup_steps.min(s / 10);
            }
            let (ckpt, report) = train_reconstruction(ckpt, &data, &settings)?;
            ckpt.save(&out)?;
            write_json(&out.join("train_report.json"), &report)?;
            println!("{} -> {} ({})", ckpt.model_id()?, out.display(), serde_json::to_string(&report)?);
        }
        Command::GenPairs { checkpoint, corpus, n_pairs, out, .. } => {
            let (c, _) = AuthorCorpus::load_jsonl(&corpus)?;
            let texts: Vec<&str> = c.texts().collect();
            let p = open_pipeline(&cfg, &checkpoint, &texts)?;
            let (pairs, stats) = p.generate_pair_dataset(&c, n_pairs, &cfg.generation, &cfg.filter, cfg.seed)?;
            write_pairs_jsonl(&out, &pairs)?;
            let sidecar = out.with_extension("stats.json");
            write_json(&sidecar, &json!({ "stats": stats, "provenance": provenance(&cfg)? }))?;
            println!(
                "{} of {} pairs kept ({} candidates, {} dropped) -> {}",
                stats.pairs_emitted,
                stats.pairs_requested,
                stats.generated,
                stats.drops.total(),
                out.display()
            );
        }
        Command::Distill { checkpoint, pairs, out, steps, .. } => {
            let recon = Checkpoint::load(&checkpoint)?;
            let pairs = read_pairs_jsonl(&pairs)?;
            let mut settings = cfg.distill_train.clone();
            if let Some(s) = steps {
                settings.total_steps = s;
                settings.warmup_steps = settings.warmup_steps.min(s / 10);
            }
            let (mut ckpt, report) = self_distill(recon, &pairs, &settings)?;
            ckpt.meta.config_hash = Some(cfg.config_hash()?);
            ckpt.save(&out)?;
            write_json(&out.join("train_report.json"), &report)?;
            println!("{} -> {} ({})", ckpt.model_id()?, out.display(), serde_json::to_string(&report)?);
        }
        Command::Transfer { checkpoint, text, exemplars, rerank_k, lam, json: as_json, .. } => {
            let ex = read_texts(&exemplars)?;
            let refs: Vec<&str> = ex.iter().map(String::as_str).collect();
            let p = open_pipeline(&cfg, &checkpoint, &refs)?;
            let opts = TransferOptions {
                rerank_k: rerank_k.unwrap_or(cfg.transfer.rerank_k),
                lam: lam.unwrap_or(cfg.transfer.lam),
                seed: cfg.seed,
                ..cfg.transfer.clone()
            };
            let out = p.transfer(&text, &refs, &opts)?;
            let ranked = rank_candidates(&out);
            if as_json {
                println!("{}", serde_json::to_string_pretty(&json!({ "output_text": out.output, "candidates": ranked }))?);
            } else {
                for c in &ranked {
                    println!(
                        "{}. [{:.4}] away={:.3} towards={:.3} sim={:.3}  {}",
                        c.rank, c.rerank_score, c.scores.away, c.scores.towards, c.scores.sim, c.text
                    );
                }
            }
        }
        Command::Evaluate { checkpoint, kind, corpus, formal, informal, reference, num_examples, out_dir, .. } => {
            fs::create_dir_all(&out_dir)?;
            let reference_texts = reference.as_deref().map(read_texts).transpose()?;
            match kind {
                EvalKind::Authorship => {
                    let Some(corpus) = corpus else { bail!("--corpus is required for authorship evaluation") };
                    let (c, _) = AuthorCorpus::load_jsonl(&corpus)?;
                    let reference: Vec<&str> = match &reference_texts {
                        Some(r) => r.iter().map(String::as_str).collect(),
                        None => c.texts().collect(),
                    };
                    let e = &cfg.eval;
                    let split = EvalSplit::sample(&c, e.n_source_authors, e.n_target_authors, e.texts_per_author, cfg.seed)?;
                    let p = open_pipeline(&cfg, &checkpoint, &reference)?;
                    let eval_embedder = cfg.eval_embedder.build(reference.iter().copied())?;
                    let model = PipelineSystem { name: "model".into(), pipeline: &p, options: cfg.transfer.clone() };
                    let systems: [&dyn TransferSystem; 3] = [&CopySource, &CopyTarget, &model];
                    let mut report = evaluate_authorship(&systems, &c, &split, eval_embedder.as_ref(), cfg.seed)?;
                    report.config = provenance(&cfg)?;
                    write_json(&out_dir.join("authorship.json"), &report)?;
                    write_text(&out_dir.join("authorship.csv"), &report.to_csv())?;
                    print!("{}", report.to_markdown());
                }
                EvalKind::Attribute => {
                    let (Some(f), Some(i)) = (formal, informal) else {
                        bail!("--formal and --informal are required for attribute evaluation")
                    };
                    let (f, i) = (read_texts(&f)?, read_texts(&i)?);
                    let fr: Vec<&str> = f.iter().map(String::as_str).collect();
                    let ir: Vec<&str> = i.iter().map(String::as_str).collect();
                    let reference: Vec<&str> = match &reference_texts {
                        Some(r) => r.iter().map(String::as_str).collect(),
                        None => fr.iter().chain(&ir).copied().collect(),
                    };
                    let p = open_pipeline(&cfg, &checkpoint, &reference)?;
                    let emb = p.scorers.embedder.clone();
                    let clf = LogisticClassifier::fit(&emb.embed_all(&fr)?, &emb.embed_all(&ir)?, LogisticSettings::default())?;
                    let selector = ExemplarSelector { classifier: &clf, embedder: emb.as_ref(), threshold: cfg.eval.exemplar_threshold };
                    let is_formal = |t: &str| !is_shouting(t);
                    let acc = AccuracyFn { id: "case-heuristic".into(), is_first_class: &is_formal };
                    let lm = CharLm::fit(reference.iter().copied(), cfg.metrics.fluency_reference)?;
                    let model = PipelineSystem { name: "model".into(), pipeline: &p, options: cfg.transfer.clone() };
                    let systems: [&dyn TransferSystem; 2] = [&CopySource, &model];
                    let n = num_examples.unwrap_or(cfg.eval.num_examples);
                    let mut report = evaluate_attribute(&systems, &fr, &ir, &acc, &selector, &lm, n, cfg.seed)?;
                    report.config = provenance(&cfg)?;
                    write_json(&out_dir.join("attribute.json"), &report)?;
                    write_text(&out_dir.join("attribute.csv"), &report.to_csv())?;
                    print!("{}", report.to_markdown());
                }
            }
        }
        Command::Sweep { checkpoint, inputs, exemplars, lam_grid, out, .. } => {
            let inputs = read_texts(&inputs)?;
            let ex = read_texts(&exemplars)?;
            let ir: Vec<&str> = inputs.iter().map(String::as_str).collect();
            let er: Vec<&str> = ex.iter().map(String::as_str).collect();
            let p = open_pipeline(&cfg, &checkpoint, &er)?;
            let grid = lam_grid.unwrap_or_else(|| cfg.eval.lam_grid.clone());
            let opts = TransferOptions { seed: cfg.seed, ..cfg.transfer.clone() };
            let accept = case_matches(&er);
            let rows = interpolation_sweep(&p, &ir, &er, &grid, &opts, p.scorers.embedder.as_ref(), &accept)?;
            let csv = sweep_csv(&rows);
            write_text(&out, &csv)?;
            print!("{csv}");
        }
        Command::Timing { checkpoint, inputs, exemplars, device_note, out, .. } => {
            let inputs = read_texts(&inputs)?;
            let ex = read_texts(&exemplars)?;
            let ir: Vec<&str> = inputs.iter().map(String::as_str).collect();
            let er: Vec<&str> = ex.iter().map(String::as_str).collect();
            let p = open_pipeline(&cfg, &checkpoint, &er)?;
            let model = PipelineSystem { name: "model".into(), pipeline: &p, options: cfg.transfer.clone() };
            let r = timing_report(&model, &ir, &er, &device_note, cfg.eval.warmup, cfg.seed)?;
            if let Some(o) = out {
                write_json(&o, &r)?;
            }
            print!("{}", r.to_markdown());
        }
        Command::Serve { checkpoint, bind, .. } => {
            let (env_bind, ckpt) = service::resolve_endpoints(&cfg, checkpoint.as_deref())?;
            let bind = if std::env::var_os(service::ENV_BIND).is_some() { env_bind } else { bind.unwrap_or(env_bind) };
            let state = ServiceState::from_config(&cfg, &ckpt)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(state, &bind))?;
        }
    }
    Ok(())
}

//! Reconstruction data, synthetic pair generation with reranking and
//! filtering, self-distillation, and inference.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{choose_text, sample_author_pairs, AuthorCorpus, Split};
use crate::error::{Error, Result};
use crate::metrics::{
    away_from, rerank_score, towards_to, ContentSim, FluencyScorer, MeaningScorer, ScoreVector,
    TrigramSim,
};
use crate::model::{
    self, Checkpoint, ConditioningMode, GenerationRequest, TrainExample, TrainReport,
    TrainSettings,
};
use crate::neutralizer::{ParaphraseSettings, Paraphraser};
use crate::seed;
use crate::style_space::{interpolate, mean_pool, StyleEmbedder, StyleEmbedding};
use crate::text;

pub const AUX_PRIMARY: &str = "meaning_primary";
pub const AUX_SECONDARY: &str = "meaning_secondary";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSettings {
    pub n_paraphrases: usize,
    pub target_texts_min: usize,
    pub target_texts_max: usize,
    pub top_p: f64,
    pub tau: f64,
    pub seed: u64,
    /// Maximum generated tokens per output.
    pub max_len: usize,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self {
            n_paraphrases: 5,
            target_texts_min: 4,
            target_texts_max: 8,
            top_p: 0.80,
            tau: 1.0,
            seed: 0,
            max_len: 64,
        }
    }
}

impl GenSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_paraphrases == 0 {
            return Err(Error::invalid("n_paraphrases", "must be at least 1"));
        }
        if self.target_texts_min == 0 || self.target_texts_min > self.target_texts_max {
            return Err(Error::invalid(
                "target_texts_min",
                "must satisfy 1 <= target_texts_min <= target_texts_max",
            ));
        }
        Ok(())
    }
}

/// How the Away/Towards thresholds combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StyleDropMode {
    /// Drop when both are below their floors.
    #[default]
    Conjunctive,
    /// Drop when either is below its floor.
    Disjunctive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSettings {
    pub min_meaning_primary: f64,
    pub min_meaning_secondary: f64,
    pub away_floor: f64,
    pub towards_floor: f64,
    pub drop_identical: bool,
    pub link_regexes: Vec<String>,
    pub style_drop_mode: StyleDropMode,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            min_meaning_primary: 0.7,
            min_meaning_secondary: 0.7,
            away_floor: 0.9,
            towards_floor: 0.30,
            drop_identical: true,
            link_regexes: vec![
                r"(?i)\b[a-z][a-z0-9+.-]*://".into(),
                r"(?i)\bwww\.".into(),
                r"\[[^\]]*\]\([^)]*\)".into(),
            ],
            style_drop_mode: StyleDropMode::Conjunctive,
        }
    }
}

impl FilterSettings {
    /// Settings that keep every candidate.
    pub fn permissive() -> Self {
        Self {
            min_meaning_primary: 0.0,
            min_meaning_secondary: 0.0,
            away_floor: 0.0,
            towards_floor: 0.0,
            drop_identical: false,
            link_regexes: Vec::new(),
            style_drop_mode: StyleDropMode::Conjunctive,
        }
    }

    fn compiled(&self) -> Result<Vec<Regex>> {
        self.link_regexes
            .iter()
            .map(|r| Regex::new(r).map_err(|e| Error::invalid("link_regexes", e.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCandidate {
    pub source_text: String,
    pub paraphrase_used: Option<String>,
    pub target_exemplars: Vec<String>,
    pub output_text: String,
    pub scores: ScoreVector,
    #[serde(skip)]
    pub pooled_target: Option<StyleEmbedding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub pair_index: usize,
    pub source_author: String,
    pub target_author: String,
    pub pair_seed: u64,
    pub candidate_index: usize,
    pub model_id: String,
    pub paraphraser_id: String,
    pub embedder_id: String,
    pub gen: GenSettings,
    pub filter: FilterSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferPair {
    pub source_text: String,
    pub target_exemplars: Vec<String>,
    pub output_text: String,
    pub scores: ScoreVector,
    pub provenance: Provenance,
    pub pooled_target_embedding: StyleEmbedding,
}

/// Candidate counts through the filter. `generated = kept + dropped_*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DropCounts {
    pub dropped_identical: usize,
    pub dropped_link: usize,
    pub dropped_meaning: usize,
    pub dropped_style: usize,
}

impl DropCounts {
    pub fn total(&self) -> usize {
        self.dropped_identical + self.dropped_link + self.dropped_meaning + self.dropped_style
    }

    fn add(&mut self, o: &DropCounts) {
        self.dropped_identical += o.dropped_identical;
        self.dropped_link += o.dropped_link;
        self.dropped_meaning += o.dropped_meaning;
        self.dropped_style += o.dropped_style;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct YieldStats {
    pub pairs_requested: usize,
    pub pairs_emitted: usize,
    pub pairs_without_survivors: usize,
    pub generated: usize,
    pub kept: usize,
    #[serde(flatten)]
    pub drops: DropCounts,
}

impl YieldStats {
    pub fn is_conserved(&self) -> bool {
        self.generated == self.kept + self.drops.total()
    }
}

/// Scorers used for reranking and filtering.
#[derive(Clone)]
pub struct Scorers {
    pub embedder: Arc<dyn StyleEmbedder>,
    pub primary: Arc<dyn MeaningScorer>,
    pub secondary: Arc<dyn MeaningScorer>,
    pub fluency: Option<Arc<dyn FluencyScorer>>,
}

impl std::fmt::Debug for Scorers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scorers")
            .field("embedder", &self.embedder.embedder_id())
            .field("primary", &self.primary.scorer_id())
            .field("secondary", &self.secondary.scorer_id())
            .field("fluency", &self.fluency.as_ref().map(|f| f.scorer_id().to_string()))
            .finish()
    }
}

impl Scorers {
    pub fn new(embedder: Arc<dyn StyleEmbedder>) -> Self {
        Self {
            embedder,
            primary: Arc::new(ContentSim),
            secondary: Arc::new(TrigramSim),
            fluency: None,
        }
    }

    pub fn with_fluency(mut self, fluency: Arc<dyn FluencyScorer>) -> Self {
        self.fluency = Some(fluency);
        self
    }

    /// Scores `output` against a source style centroid and a target style
    /// centroid. Empty outputs score zero everywhere.
    pub fn score(
        &self,
        source_centroid: &StyleEmbedding,
        target_centroid: &StyleEmbedding,
        source_text: &str,
        output: &str,
    ) -> Result<ScoreVector> {
        if output.trim().is_empty() {
            let mut s = ScoreVector::zeros();
            s.aux.insert(AUX_PRIMARY.into(), 0.0);
            s.aux.insert(AUX_SECONDARY.into(), 0.0);
            if self.fluency.is_some() {
                s.fluency = Some(0.0);
            }
            return Ok(s);
        }
        let out = self.embedder.embed(output)?;
        let primary = self.primary.score(source_text, output)?;
        let mut s = ScoreVector::new(
            away_from(source_centroid, &out)?,
            towards_to(target_centroid, &out)?,
            primary,
        );
        s.aux.insert(AUX_PRIMARY.into(), primary);
        s.aux.insert(AUX_SECONDARY.into(), self.secondary.score(source_text, output)?);
        if let Some(f) = &self.fluency {
            s.fluency = Some(f.score(output)?);
        }
        s.validate()?;
        Ok(s)
    }
}

/// One `(paraphrase, embed(original), original)` example per sampled
/// paraphrase of every training record.
pub fn build_recon_dataset(
    corpus: &AuthorCorpus,
    embedder: &dyn StyleEmbedder,
    paraphraser: &dyn Paraphraser,
    settings: &ParaphraseSettings,
) -> Result<Vec<TrainExample>> {
    let records: Vec<_> = corpus
        .records()
        .iter()
        .filter(|r| matches!(r.split, Split::Train | Split::Unassigned))
        .collect();
    if records.is_empty() {
        return Err(Error::EmptyInput("training records"));
    }
    let mut out = Vec::with_capacity(records.len() * settings.n_samples);
    for (i, r) in records.iter().enumerate() {
        let style = embedder.embed(&r.text)?;
        let s = settings
            .clone()
            .with_seed(seed::derive(settings.seed, i as u64));
        for p in paraphraser.paraphrase(&r.text, &s)? {
            out.push(TrainExample::new(p, style.clone(), r.text.clone()));
        }
    }
    Ok(out)
}

/// Drops identical/link, low-meaning, then off-style candidates. Survivors
/// keep their input order.
pub fn filter_candidates(
    candidates: &[TransferCandidate],
    f: &FilterSettings,
) -> Result<(Vec<TransferCandidate>, DropCounts)> {
    let links = f.compiled()?;
    let has_link = |t: &str| links.iter().any(|r| r.is_match(t));
    let mut drops = DropCounts::default();
    let mut kept = Vec::new();
    for c in candidates {
        let primary = *c
            .scores
            .aux
            .get(AUX_PRIMARY)
            .ok_or_else(|| Error::MissingScore(AUX_PRIMARY.into()))?;
        let secondary = *c
            .scores
            .aux
            .get(AUX_SECONDARY)
            .ok_or_else(|| Error::MissingScore(AUX_SECONDARY.into()))?;
        if f.drop_identical
            && text::normalize_whitespace(&c.output_text) == text::normalize_whitespace(&c.source_text)
        {
            drops.dropped_identical += 1;
            continue;
        }
        if has_link(&c.output_text) && !has_link(&c.source_text) {
            drops.dropped_link += 1;
            continue;
        }
        if primary < f.min_meaning_primary || secondary < f.min_meaning_secondary {
            drops.dropped_meaning += 1;
            continue;
        }
        let low_away = c.scores.away < f.away_floor;
        let low_towards = c.scores.towards < f.towards_floor;
        let off_style = match f.style_drop_mode {
            StyleDropMode::Conjunctive => low_away && low_towards,
            StyleDropMode::Disjunctive => low_away || low_towards,
        };
        if off_style {
            drops.dropped_style += 1;
            continue;
        }
        kept.push(c.clone());
    }
    Ok((kept, drops))
}

/// Index of the highest rerank score, lowest index on ties.
pub fn best_index(scores: &[ScoreVector]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("candidates"));
    }
    let mut best = 0;
    let mut best_score = rerank_score(&scores[0])?;
    for (i, s) in scores.iter().enumerate().skip(1) {
        let v = rerank_score(s)?;
        if v > best_score {
            best = i;
            best_score = v;
        }
    }
    Ok(best)
}

pub fn select_best(candidates: &[TransferCandidate]) -> Result<&TransferCandidate> {
    let scores: Vec<ScoreVector> = candidates.iter().map(|c| c.scores.clone()).collect();
    Ok(&candidates[best_index(&scores)?])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferOptions {
    pub lam: f64,
    pub rerank_k: usize,
    pub top_p: f64,
    pub tau: f64,
    pub seed: u64,
    pub max_len: usize,
    /// Overrides the checkpoint's conditioning mode.
    pub mode: Option<ConditioningMode>,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self {
            lam: 1.0,
            rerank_k: 1,
            top_p: 0.80,
            tau: 1.0,
            seed: 0,
            max_len: 64,
            mode: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub output_text: String,
    pub paraphrase_used: Option<String>,
    pub scores: ScoreVector,
    pub rerank_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferOutput {
    pub output: String,
    pub scores: ScoreVector,
    pub best_index: usize,
    pub candidates: Vec<ScoredCandidate>,
}

/// A checkpoint with its paraphraser and scorers.
pub struct Pipeline {
    pub model: Arc<Checkpoint>,
    pub paraphraser: Arc<dyn Paraphraser>,
    pub paraphrase_settings: ParaphraseSettings,
    pub scorers: Scorers,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("model", &self.model.meta.mode)
            .field("paraphraser", &self.paraphraser.paraphraser_id())
            .field("scorers", &self.scorers)
            .finish()
    }
}

impl Pipeline {
    pub fn new(
        model: Arc<Checkpoint>,
        paraphraser: Arc<dyn Paraphraser>,
        paraphrase_settings: ParaphraseSettings,
        scorers: Scorers,
    ) -> Result<Self> {
        let id = scorers.embedder.embedder_id();
        if model.meta.embedder_id != id {
            return Err(Error::EmbedderMismatch(model.meta.embedder_id.clone(), id.to_string()));
        }
        let dim = scorers.embedder.dimension();
        if model.model.config().embed_dim != dim {
            return Err(Error::DimensionMismatch {
                expected: model.model.config().embed_dim,
                got: dim,
            });
        }
        Ok(Self {
            model,
            paraphraser,
            paraphrase_settings,
            scorers,
        })
    }

    fn paraphrases(&self, t: &str, n: usize, seed_value: u64) -> Result<Vec<String>> {
        let s = self
            .paraphrase_settings
            .clone()
            .with_samples(n)
            .with_seed(seed_value);
        self.paraphraser.paraphrase(t, &s)
    }

    /// One random source text, `n_paraphrases` paraphrases, and one output
    /// per paraphrase conditioned on a fresh sample of target texts.
    pub fn generate_candidates(
        &self,
        pair: (&str, &str),
        corpus: &AuthorCorpus,
        gen: &GenSettings,
        seed_value: u64,
    ) -> Result<Vec<TransferCandidate>> {
        gen.validate()?;
        let (src_author, tgt_author) = pair;
        let src_texts = corpus.texts_of(src_author)?;
        let tgt_texts = corpus.texts_of(tgt_author)?;
        let mut rng = seed::rng(seed::derive_labeled(seed_value, "candidates"));
        let source = choose_text(&src_texts, &mut rng).ok_or(Error::EmptyInput("source texts"))?;
        let paraphrases =
            self.paraphrases(source, gen.n_paraphrases, seed::derive_labeled(seed_value, "para"))?;

        let mut exemplar_sets = Vec::with_capacity(paraphrases.len());
        let mut pooled = Vec::with_capacity(paraphrases.len());
        for _ in &paraphrases {
            let k = if tgt_texts.len() <= gen.target_texts_min {
                tgt_texts.len()
            } else {
                rng.random_range(gen.target_texts_min..=gen.target_texts_max.min(tgt_texts.len()))
            };
            let chosen: Vec<&str> = tgt_texts.choose_multiple(&mut rng, k).copied().collect();
            pooled.push(mean_pool(&self.scorers.embedder.embed_all(&chosen)?)?);
            exemplar_sets.push(chosen);
        }
        let gen_seed = seed::derive_labeled(seed_value, "generate");
        let requests: Vec<GenerationRequest> = paraphrases
            .iter()
            .zip(&pooled)
            .enumerate()
            .map(|(i, (p, style))| GenerationRequest {
                input: p,
                style,
                n: 1,
                seed: seed::derive(gen_seed, i as u64),
            })
            .collect();
        let outputs = model::generate_batch(&self.model, &requests, gen.top_p, gen.tau, gen.max_len)?;

        let source_centroid = self.scorers.embedder.embed(source)?;
        let mut out = Vec::with_capacity(paraphrases.len());
        for (((p, exemplars), style), mut o) in paraphrases
            .into_iter()
            .zip(exemplar_sets)
            .zip(pooled)
            .zip(outputs)
        {
            let output_text = o.pop().expect("one output per request");
            let scores = self
                .scorers
                .score(&source_centroid, &style, source, &output_text)?;
            out.push(TransferCandidate {
                source_text: source.to_string(),
                paraphrase_used: Some(p),
                target_exemplars: exemplars.into_iter().map(str::to_string).collect(),
                output_text,
                scores,
                pooled_target: Some(style),
            });
        }
        Ok(out)
    }

    /// Samples author pairs, generates, filters and keeps the best
    /// surviving candidate of each pair.
    pub fn generate_pair_dataset(
        &self,
        corpus: &AuthorCorpus,
        n_pairs: usize,
        gen: &GenSettings,
        filter: &FilterSettings,
        seed_value: u64,
    ) -> Result<(Vec<TransferPair>, YieldStats)> {
        let pairs = sample_author_pairs(corpus, n_pairs, seed_value)?;
        let model_id = self.model.model_id()?;
        let mut stats = YieldStats {
            pairs_requested: n_pairs,
            ..YieldStats::default()
        };
        let mut dataset = Vec::new();
        for (i, (src, tgt)) in pairs.iter().enumerate() {
            let pair_seed = seed::derive(seed::derive(seed_value, gen.seed), i as u64);
            let cands = self.generate_candidates((src, tgt), corpus, gen, pair_seed)?;
            let (kept, drops) = filter_candidates(&cands, filter)?;
            stats.generated += cands.len();
            stats.kept += kept.len();
            stats.drops.add(&drops);
            if kept.is_empty() {
                stats.pairs_without_survivors += 1;
                continue;
            }
            let best = select_best(&kept)?;
            let candidate_index = cands
                .iter()
                .position(|c| c == best)
                .expect("survivor comes from candidates");
            dataset.push(TransferPair {
                source_text: best.source_text.clone(),
                target_exemplars: best.target_exemplars.clone(),
                output_text: best.output_text.clone(),
                scores: best.scores.clone(),
                provenance: Provenance {
                    pair_index: i,
                    source_author: src.clone(),
                    target_author: tgt.clone(),
                    pair_seed,
                    candidate_index,
                    model_id: model_id.clone(),
                    paraphraser_id: self.paraphraser.paraphraser_id().to_string(),
                    embedder_id: self.scorers.embedder.embedder_id().to_string(),
                    gen: gen.clone(),
                    filter: filter.clone(),
                },
                pooled_target_embedding: best.pooled_target.clone().expect("set at generation"),
            });
            log::debug!("pair {i}: kept {} of {}", 1, cands.len());
        }
        stats.pairs_emitted = dataset.len();
        Ok((dataset, stats))
    }

    /// `interpolate(embed(source), mean_pool(embed(exemplars)), lam)` and
    /// the pooled target.
    pub fn conditioning(
        &self,
        source_text: &str,
        exemplars: &[&str],
        lam: f64,
    ) -> Result<(StyleEmbedding, StyleEmbedding, StyleEmbedding)> {
        if exemplars.is_empty() {
            return Err(Error::EmptyInput("target_exemplars"));
        }
        if !(0.0..=1.0).contains(&lam) {
            return Err(Error::invalid("lam", format!("must lie in [0, 1], got {lam}")));
        }
        let src = self.scorers.embedder.embed(source_text)?;
        let pooled = mean_pool(&self.scorers.embedder.embed_all(exemplars)?)?;
        let cond = interpolate(&src, &pooled, lam)?;
        Ok((cond, src, pooled))
    }

    pub fn transfer(
        &self,
        source_text: &str,
        exemplars: &[&str],
        opts: &TransferOptions,
    ) -> Result<TransferOutput> {
        if source_text.trim().is_empty() {
            return Err(Error::EmptyInput("source_text"));
        }
        if opts.rerank_k == 0 {
            return Err(Error::invalid("rerank_k", "must be at least 1"));
        }
        let (cond, src, pooled) = self.conditioning(source_text, exemplars, opts.lam)?;
        let mode = opts.mode.unwrap_or(self.model.meta.mode);
        let (inputs, paraphrases): (Vec<String>, Vec<Option<String>>) = match mode {
            ConditioningMode::Distilled => (vec![source_text.to_string()], vec![None; opts.rerank_k]),
            ConditioningMode::Reconstruction => {
                let p = self.paraphrases(
                    source_text,
                    opts.rerank_k,
                    seed::derive_labeled(opts.seed, "para"),
                )?;
                (p.clone(), p.into_iter().map(Some).collect())
            }
        };
        let requests: Vec<GenerationRequest> = if inputs.len() == 1 {
            vec![GenerationRequest {
                input: &inputs[0],
                style: &cond,
                n: opts.rerank_k,
                seed: opts.seed,
            }]
        } else {
            inputs
                .iter()
                .enumerate()
                .map(|(i, p)| GenerationRequest {
                    input: p,
                    style: &cond,
                    n: 1,
                    seed: seed::derive(opts.seed, i as u64),
                })
                .collect()
        };
        let outputs: Vec<String> =
            model::generate_batch(&self.model, &requests, opts.top_p, opts.tau, opts.max_len)?
                .into_iter()
                .flatten()
                .collect();
        let mut candidates = Vec::with_capacity(outputs.len());
        for (o, p) in outputs.into_iter().zip(paraphrases) {
            let scores = self.scorers.score(&src, &pooled, source_text, &o)?;
            candidates.push(ScoredCandidate {
                rerank_score: rerank_score(&scores)?,
                output_text: o,
                paraphrase_used: p,
                scores,
            });
        }
        let all: Vec<ScoreVector> = candidates.iter().map(|c| c.scores.clone()).collect();
        let best = best_index(&all)?;
        Ok(TransferOutput {
            output: candidates[best].output_text.clone(),
            scores: candidates[best].scores.clone(),
            best_index: best,
            candidates,
        })
    }
}

/// Fine-tunes a reconstruction checkpoint on synthetic pairs, conditioning
/// on the source text and pooled target embedding.
pub fn self_distill(
    recon: Checkpoint,
    pairs: &[TransferPair],
    settings: &TrainSettings,
) -> Result<(Checkpoint, TrainReport)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("transfer pairs"));
    }
    let examples: Vec<TrainExample> = pairs
        .iter()
        .map(|p| {
            TrainExample::new(
                p.source_text.clone(),
                p.pooled_target_embedding.clone(),
                p.output_text.clone(),
            )
        })
        .collect();
    model::fine_tune_distill(recon, &examples, settings)
}

pub fn write_pairs_jsonl(path: impl AsRef<Path>, pairs: &[TransferPair]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for p in pairs {
        writeln!(w, "{}", serde_json::to_string(p)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pairs_jsonl(path: impl AsRef<Path>) -> Result<Vec<TransferPair>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Count of each drop reason keyed by name, for reports.
pub fn drop_table(d: &DropCounts) -> BTreeMap<&'static str, usize> {
    BTreeMap::from([
        ("identical", d.dropped_identical),
        ("link", d.dropped_link),
        ("meaning", d.dropped_meaning),
        ("style", d.dropped_style),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TextRecord;
    use crate::neutralizer::RuleNeutralizer;
    use crate::style_space::FeatureStyleEmbedder;
    use crate::tokenizer::Tokenizer;
    use candle_core::DType;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn cand(src: &str, out: &str, a: f64, t: f64, p: f64, s: f64) -> TransferCandidate {
        let mut scores = ScoreVector::new(a, t, p);
        scores.aux.insert(AUX_PRIMARY.into(), p);
        scores.aux.insert(AUX_SECONDARY.into(), s);
        TransferCandidate {
            source_text: src.into(),
            paraphrase_used: None,
            target_exemplars: vec![],
            output_text: out.into(),
            scores,
            pooled_target: None,
        }
    }

    #[test]
    fn defaults_follow_published_settings() {
        let g = GenSettings::default();
        assert_eq!((g.n_paraphrases, g.target_texts_min, g.target_texts_max), (5, 4, 8));
        assert_eq!((g.top_p, g.tau), (0.80, 1.0));
        let f = FilterSettings::default();
        assert_eq!((f.min_meaning_primary, f.min_meaning_secondary), (0.7, 0.7));
        assert_eq!((f.away_floor, f.towards_floor), (0.9, 0.30));
        assert!(f.drop_identical);
    }

    #[test]
    fn filter_rules() {
        let f = FilterSettings::default();
        let cands = vec![
            cand("the soup", "the  soup", 1.0, 1.0, 1.0, 1.0),
            cand("the soup", "the soup www.x.com", 1.0, 1.0, 0.9, 0.9),
            cand("the soup", "THE SOUP", 1.0, 1.0, 0.65, 0.9),
            cand("the soup", "THE SOUP!", 0.95, 0.20, 0.8, 0.8),
            cand("the soup", "THE SOUP!!", 0.5, 0.20, 0.8, 0.8),
            cand("see www.a.com", "SEE WWW.A.COM", 0.95, 0.9, 0.8, 0.8),
        ];
        let (kept, d) = filter_candidates(&cands, &f).unwrap();
        let outs: Vec<&str> = kept.iter().map(|c| c.output_text.as_str()).collect();
        assert_eq!(outs, vec!["THE SOUP!", "SEE WWW.A.COM"]);
        assert_eq!(
            (d.dropped_identical, d.dropped_link, d.dropped_meaning, d.dropped_style),
            (1, 1, 1, 1)
        );
        let dis = FilterSettings {
            style_drop_mode: StyleDropMode::Disjunctive,
            ..f
        };
        let (kept, _) = filter_candidates(&cands, &dis).unwrap();
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn filter_needs_meaning_scores() {
        let mut c = cand("a", "b", 1.0, 1.0, 1.0, 1.0);
        c.scores.aux.clear();
        assert!(matches!(
            filter_candidates(&[c], &FilterSettings::default()),
            Err(Error::MissingScore(_))
        ));
    }

    #[test]
    fn select_best_examples() {
        let one = [cand("a", "x", 0.9, 0.3, 0.7, 1.0)];
        assert_eq!(select_best(&one).unwrap().output_text, "x");
        // sqrt(sqrt(.27) * .7) = 0.6031 < sqrt(sqrt(.25) * .9) = 0.6708
        let two = [cand("a", "x", 0.9, 0.3, 0.7, 1.0), cand("a", "y", 0.5, 0.5, 0.9, 1.0)];
        assert_eq!(select_best(&two).unwrap().output_text, "y");
        let tie = [cand("a", "x", 0.5, 0.5, 0.9, 1.0), cand("a", "y", 0.5, 0.5, 0.9, 1.0)];
        assert_eq!(select_best(&tie).unwrap().output_text, "x");
        assert!(select_best(&[]).is_err());
    }

    fn arb_cand() -> impl Strategy<Value = TransferCandidate> {
        (
            prop::sample::select(vec!["the soup", "a car", "see www.x.io"]),
            prop::sample::select(vec!["the soup", "A CAR!!", "www.y.io", "so it goes"]),
            0.0f64..=1.0,
            0.0f64..=1.0,
            0.0f64..=1.0,
            0.0f64..=1.0,
        )
            .prop_map(|(s, o, a, t, p, q)| cand(s, o, a, t, p, q))
    }

    proptest! {
        #[test]
        fn filter_idempotent_and_order_preserving(cands in prop::collection::vec(arb_cand(), 0..12)) {
            let f = FilterSettings::default();
            let (once, d) = filter_candidates(&cands, &f).unwrap();
            let (twice, _) = filter_candidates(&once, &f).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(cands.len(), once.len() + d.total());
            let mut it = cands.iter();
            for k in &once {
                prop_assert!(it.any(|c| c == k));
            }
        }

        #[test]
        fn select_best_matches_brute_force(cands in prop::collection::vec(arb_cand(), 1..10)) {
            let best = select_best(&cands).unwrap();
            let top = cands
                .iter()
                .map(|c| rerank_score(&c.scores).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(rerank_score(&best.scores).unwrap(), top);
            let first = cands.iter().position(|c| rerank_score(&c.scores).unwrap() == top).unwrap();
            prop_assert_eq!(best, &cands[first]);
        }
    }

    struct Counting {
        inner: RuleNeutralizer,
        calls: AtomicUsize,
    }

    impl Paraphraser for Counting {
        fn paraphraser_id(&self) -> &str {
            "counting"
        }
        fn paraphrase(&self, t: &str, s: &ParaphraseSettings) -> Result<Vec<String>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.paraphrase(t, s)
        }
    }

    fn corpus() -> AuthorCorpus {
        let mut recs = Vec::new();
        for (a, texts) in [
            ("loud", ["THE SOUP BURNED!!!", "MY PAN IS HOT!!", "WE COOKED RICE!!!", "IT'S GREAT!!"]),
            ("calm", ["the car was slow...", "i drove home...", "the road is long...", "we parked it..."]),
            ("mid", ["The dog ran.", "We walked home.", "It rained.", "The cat slept."]),
        ] {
            for t in texts {
                recs.push(TextRecord::new(a, t));
            }
        }
        AuthorCorpus::from_records(recs)
    }

    fn pipeline(counting: Arc<Counting>, mode: ConditioningMode) -> Pipeline {
        let c = corpus();
        let tok = Tokenizer::train(c.texts(), 120, 1).unwrap();
        let emb = Arc::new(FeatureStyleEmbedder::new(256).unwrap());
        let cfg = crate::model::ModelConfig {
            hidden_dim: 16,
            embed_dim: 256,
            n_heads: 2,
            ff_dim: 32,
            max_len: 16,
            n_layers_enc: 1,
            n_layers_dec: 1,
            ..Default::default()
        };
        let mut ckpt = Checkpoint::fresh(cfg, tok, emb.embedder_id(), DType::F32).unwrap();
        ckpt.meta.mode = mode;
        Pipeline::new(
            Arc::new(ckpt),
            counting,
            ParaphraseSettings::default(),
            Scorers::new(emb),
        )
        .unwrap()
    }

    fn counting() -> Arc<Counting> {
        Arc::new(Counting {
            inner: RuleNeutralizer::default(),
            calls: AtomicUsize::new(0),
        })
    }

    #[test]
    fn recon_dataset_shape() {
        let c = AuthorCorpus::from_records(vec![
            TextRecord::new("a", "THE SOUP!!"),
            TextRecord::new("a", "my pan..."),
            TextRecord::new("b", "It rained."),
        ]);
        let emb = FeatureStyleEmbedder::new(256).unwrap();
        let n = RuleNeutralizer::default();
        let s = ParaphraseSettings::default();
        let d = build_recon_dataset(&c, &emb, &n, &s).unwrap();
        assert_eq!(d.len(), 3);
        for e in &d {
            assert_eq!(e.style, emb.embed(&e.target).unwrap());
        }
        assert_eq!(d, build_recon_dataset(&c, &emb, &n, &s).unwrap());
        assert_eq!(build_recon_dataset(&c, &emb, &n, &s.clone().with_samples(2)).unwrap().len(), 6);
        assert!(build_recon_dataset(&AuthorCorpus::from_records(vec![]), &emb, &n, &s).is_err());
    }

    #[test]
    fn candidates_follow_settings() {
        let p = pipeline(counting(), ConditioningMode::Reconstruction);
        let c = corpus();
        let g = GenSettings {
            max_len: 6,
            ..GenSettings::default()
        };
        let a = p.generate_candidates(("loud", "calm"), &c, &g, 3).unwrap();
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|x| x.target_exemplars.len() == 4));
        assert_eq!(a, p.generate_candidates(("loud", "calm"), &c, &g, 3).unwrap());
        assert!(p.generate_candidates(("nobody", "calm"), &c, &g, 3).is_err());
    }

    #[test]
    fn pair_dataset_accounting() {
        let p = pipeline(counting(), ConditioningMode::Reconstruction);
        let c = corpus();
        let g = GenSettings {
            n_paraphrases: 2,
            max_len: 5,
            ..GenSettings::default()
        };
        let drop_all = FilterSettings {
            min_meaning_primary: 2.0,
            ..FilterSettings::default()
        };
        let (d, s) = p.generate_pair_dataset(&c, 4, &g, &drop_all, 1).unwrap();
        assert!(d.is_empty());
        assert_eq!(s.generated, 8);
        assert!(s.is_conserved());
        let (d, s) = p
            .generate_pair_dataset(&c, 4, &g, &FilterSettings::permissive(), 1)
            .unwrap();
        assert_eq!(d.len(), 4);
        assert!(s.is_conserved());
        let (again, _) = p
            .generate_pair_dataset(&c, 4, &g, &FilterSettings::permissive(), 1)
            .unwrap();
        assert_eq!(
            serde_json::to_string(&d).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn transfer_contract() {
        let probe = counting();
        let p = pipeline(probe.clone(), ConditioningMode::Distilled);
        let ex = ["the car was slow...", "i drove home..."];
        let o = TransferOptions {
            max_len: 6,
            ..TransferOptions::default()
        };
        let one = p.transfer("THE SOUP BURNED!!!", &ex, &o).unwrap();
        assert_eq!(one.candidates.len(), 1);
        assert_eq!(one.output, one.candidates[0].output_text);
        let five = p
            .transfer("THE SOUP BURNED!!!", &ex, &TransferOptions { rerank_k: 5, ..o.clone() })
            .unwrap();
        assert_eq!(five.candidates.len(), 5);
        assert_eq!(five.candidates[0].output_text, one.output);
        assert!(five.candidates[five.best_index].rerank_score >= one.candidates[0].rerank_score);
        assert_eq!(probe.calls.load(Ordering::SeqCst), 0);

        let (cond, src, _) = p.conditioning("THE SOUP BURNED!!!", &ex, 0.0).unwrap();
        assert_eq!(cond, src);
        assert!(p.transfer("THE SOUP", &[], &o).is_err());
        assert!(p.transfer("THE SOUP", &ex, &TransferOptions { lam: 1.5, ..o.clone() }).is_err());

        let recon = pipeline(probe.clone(), ConditioningMode::Reconstruction);
        let r = recon.transfer("THE SOUP BURNED!!!", &ex, &TransferOptions { rerank_k: 3, ..o }).unwrap();
        assert!(probe.calls.load(Ordering::SeqCst) > 0);
        assert!(r.candidates.iter().all(|c| c.paraphrase_used.is_some()));
    }

    #[test]
    fn distill_lineage_and_zero_steps() {
        let p = pipeline(counting(), ConditioningMode::Reconstruction);
        let c = corpus();
        let g = GenSettings {
            n_paraphrases: 2,
            max_len: 5,
            ..GenSettings::default()
        };
        let (pairs, _) = p
            .generate_pair_dataset(&c, 3, &g, &FilterSettings::permissive(), 2)
            .unwrap();
        let recon = p.model.try_clone().unwrap();
        let before = recon.model.weights_digest().unwrap();
        let parent = recon.model_id().unwrap();
        let s = TrainSettings {
            total_steps: 0,
            ..TrainSettings::default()
        };
        let (d, _) = self_distill(recon, &pairs, &s).unwrap();
        assert_eq!(d.model.weights_digest().unwrap(), before);
        let last = d.meta.lineage.last().unwrap();
        assert_eq!(last.stage, "distilled");
        assert_eq!(last.parent_model_id.as_deref(), Some(parent.as_str()));
        assert!(last.dataset_digest.is_some());
        assert_eq!(d.meta.mode, ConditioningMode::Distilled);
        assert!(self_distill(p.model.try_clone().unwrap(), &[], &s).is_err());
    }

    #[test]
    fn pairs_roundtrip_jsonl() {
        let p = pipeline(counting(), ConditioningMode::Reconstruction);
        let g = GenSettings {
            n_paraphrases: 1,
            max_len: 4,
            ..GenSettings::default()
        };
        let (pairs, _) = p
            .generate_pair_dataset(&corpus(), 2, &g, &FilterSettings::permissive(), 0)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        write_pairs_jsonl(&path, &pairs).unwrap();
        assert_eq!(read_pairs_jsonl(&path).unwrap(), pairs);
    }
}

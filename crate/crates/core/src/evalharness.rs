//! Evaluation protocols: authorship transfer tables, attribute transfer
//! tables, interpolation sweeps, Copy baselines and timing.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classify::{select_exemplars, LogisticClassifier};
use crate::corpus::AuthorCorpus;
use crate::error::{Error, Result};
use crate::metrics::{self, away_from, joint_eval, rerank_score, towards_to, FluencyScorer, ScoreVector};
use crate::pipeline::{Pipeline, TransferOptions};
use crate::seed;
use crate::style_space::{StyleEmbedder, StyleEmbedding};

/// Anything that rewrites a source text toward a set of exemplars.
pub trait TransferSystem: Send + Sync {
    fn name(&self) -> &str;
    /// Style embedder used for internal reranking, if any.
    fn rerank_embedder_id(&self) -> Option<&str> {
        None
    }
    fn transfer(&self, source: &str, exemplars: &[&str], seed: u64) -> Result<String>;
}

/// Returns the source unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct CopySource;

impl TransferSystem for CopySource {
    fn name(&self) -> &str {
        "Copy_src"
    }

    fn transfer(&self, source: &str, _: &[&str], _: u64) -> Result<String> {
        Ok(source.to_string())
    }
}

/// Returns one of the exemplars, picked by seed.
#[derive(Debug, Clone, Copy, Default)]
pub struct CopyTarget;

impl TransferSystem for CopyTarget {
    fn name(&self) -> &str {
        "Copy_tgt"
    }

    fn transfer(&self, _: &str, exemplars: &[&str], seed: u64) -> Result<String> {
        if exemplars.is_empty() {
            return Err(Error::EmptyInput("target_exemplars"));
        }
        Ok(exemplars[(seed % exemplars.len() as u64) as usize].to_string())
    }
}

/// A pipeline with fixed transfer options; the per-call seed replaces
/// `options.seed`.
pub struct PipelineSystem<'a> {
    pub name: String,
    pub pipeline: &'a Pipeline,
    pub options: TransferOptions,
}

impl TransferSystem for PipelineSystem<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn rerank_embedder_id(&self) -> Option<&str> {
        Some(self.pipeline.scorers.embedder.embedder_id())
    }

    fn transfer(&self, source: &str, exemplars: &[&str], seed: u64) -> Result<String> {
        let opts = TransferOptions {
            seed,
            ..self.options.clone()
        };
        Ok(self.pipeline.transfer(source, exemplars, &opts)?.output)
    }
}

/// Wraps a closure as a system.
pub struct FnSystem<F> {
    pub name: String,
    pub f: F,
}

impl<F> TransferSystem for FnSystem<F>
where
    F: Fn(&str, &[&str], u64) -> Result<String> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn transfer(&self, source: &str, exemplars: &[&str], seed: u64) -> Result<String> {
        (self.f)(source, exemplars, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Random,
    Single,
    Diverse,
    #[default]
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSplit {
    pub name: SplitName,
    pub source_authors: Vec<String>,
    pub target_authors: Vec<String>,
    pub texts_per_author: usize,
}

impl EvalSplit {
    pub const DEFAULT_AUTHORS: usize = 15;
    pub const DEFAULT_TEXTS: usize = 16;

    pub fn new(
        name: SplitName,
        source_authors: Vec<String>,
        target_authors: Vec<String>,
        texts_per_author: usize,
    ) -> Result<Self> {
        if source_authors.is_empty() || target_authors.is_empty() {
            return Err(Error::EmptyInput("split authors"));
        }
        if texts_per_author == 0 {
            return Err(Error::invalid("texts_per_author", "must be at least 1"));
        }
        Ok(Self {
            name,
            source_authors,
            target_authors,
            texts_per_author,
        })
    }

    /// Disjoint random source and target authors drawn from those with at
    /// least `texts_per_author` texts.
    pub fn sample(
        corpus: &AuthorCorpus,
        n_source: usize,
        n_target: usize,
        texts_per_author: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut eligible: Vec<String> = corpus
            .author_ids()
            .filter(|a| corpus.texts_of(a).map(|t| t.len()).unwrap_or(0) >= texts_per_author)
            .map(str::to_string)
            .collect();
        if eligible.len() < n_source + n_target {
            return Err(Error::invalid(
                "split",
                format!(
                    "need {} authors with {texts_per_author} texts, found {}",
                    n_source + n_target,
                    eligible.len()
                ),
            ));
        }
        eligible.shuffle(&mut seed::rng(seed));
        let target = eligible.split_off(n_source);
        Self::new(
            SplitName::Random,
            eligible,
            target.into_iter().take(n_target).collect(),
            texts_per_author,
        )
    }

    pub fn n_directions(&self) -> usize {
        self.source_authors.len() * self.target_authors.len()
    }

    pub fn n_transformations(&self) -> usize {
        self.n_directions() * self.texts_per_author
    }

    fn texts<'c>(&self, corpus: &'c AuthorCorpus, author: &str) -> Result<Vec<&'c str>> {
        let t = corpus.texts_of(author)?;
        if t.len() < self.texts_per_author {
            return Err(Error::invalid(
                "split",
                format!("author `{author}` has {} texts, need {}", t.len(), self.texts_per_author),
            ));
        }
        Ok(t[..self.texts_per_author].to_vec())
    }
}

/// Scores of one transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub source_author: String,
    pub target_author: String,
    pub source_text: String,
    pub output: String,
    pub away: f64,
    pub towards: f64,
    pub sim: f64,
    pub joint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRow {
    pub source_author: String,
    pub target_author: String,
    pub n: usize,
    pub away: f64,
    pub towards: f64,
    pub sim: f64,
    pub joint: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Aggregate {
    pub n: usize,
    pub away: f64,
    pub towards: f64,
    pub sim: f64,
    pub joint: f64,
}

/// Wall-clock seconds per transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct TimingStats {
    pub n: usize,
    pub mean_s: f64,
    pub median_s: f64,
}

impl TimingStats {
    fn of(samples: &[f64]) -> Self {
        Self {
            n: samples.len(),
            mean_s: mean(samples),
            median_s: median(samples),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub system: String,
    pub rows: Vec<DirectionRow>,
    pub aggregate: Aggregate,
    pub examples: Vec<ExampleRecord>,
    pub timing: TimingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eval_embedder_id: String,
    pub split: EvalSplit,
    pub seed: u64,
    pub systems: Vec<SystemReport>,
    #[serde(default)]
    pub config: serde_json::Value,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    }
}

/// Transformation-weighted means of a per-direction table.
pub fn aggregate_rows(rows: &[DirectionRow]) -> Aggregate {
    let n: usize = rows.iter().map(|r| r.n).sum();
    if n == 0 {
        return Aggregate::default();
    }
    let w = |f: fn(&DirectionRow) -> f64| rows.iter().map(|r| f(r) * r.n as f64).sum::<f64>() / n as f64;
    Aggregate {
        n,
        away: w(|r| r.away),
        towards: w(|r| r.towards),
        sim: w(|r| r.sim),
        joint: w(|r| r.joint),
    }
}

/// Runs every system on every (source author, target author, source text).
/// Away/Towards use `eval_embedder`; Sim is content-word cosine; Joint is the
/// per-transformation `G(G(away, towards), sim)` averaged.
pub fn evaluate_authorship(
    systems: &[&dyn TransferSystem],
    corpus: &AuthorCorpus,
    split: &EvalSplit,
    eval_embedder: &dyn StyleEmbedder,
    seed: u64,
) -> Result<EvalReport> {
    let eval_id = eval_embedder.embedder_id();
    for s in systems {
        if s.rerank_embedder_id() == Some(eval_id) {
            return Err(Error::EmbedderReuse(eval_id.to_string()));
        }
    }
    let mut centroids: HashMap<&str, StyleEmbedding> = HashMap::new();
    let mut texts: HashMap<&str, Vec<&str>> = HashMap::new();
    for a in split.source_authors.iter().chain(&split.target_authors) {
        if !texts.contains_key(a.as_str()) {
            let t = split.texts(corpus, a)?;
            centroids.insert(a, metrics::centroid(&t, eval_embedder)?);
            texts.insert(a, t);
        }
    }

    let mut reports = Vec::with_capacity(systems.len());
    for system in systems {
        let mut rows = Vec::with_capacity(split.n_directions());
        let mut examples = Vec::with_capacity(split.n_transformations());
        let mut times = Vec::with_capacity(split.n_transformations());
        let mut idx = 0u64;
        for sa in &split.source_authors {
            for ta in &split.target_authors {
                let exemplars = &texts[ta.as_str()];
                let mut scores = Vec::with_capacity(split.texts_per_author);
                for src in &texts[sa.as_str()] {
                    let t0 = Instant::now();
                    let out = system.transfer(src, exemplars, seed::derive(seed, idx))?;
                    times.push(t0.elapsed().as_secs_f64());
                    idx += 1;
                    let sv = if out.trim().is_empty() {
                        ScoreVector::zeros()
                    } else {
                        let e = eval_embedder.embed(&out)?;
                        ScoreVector::new(
                            away_from(&centroids[sa.as_str()], &e)?,
                            towards_to(&centroids[ta.as_str()], &e)?,
                            metrics::sim(src, &out),
                        )
                    };
                    let joint = rerank_score(&sv)?;
                    examples.push(ExampleRecord {
                        source_author: sa.clone(),
                        target_author: ta.clone(),
                        source_text: src.to_string(),
                        output: out,
                        away: sv.away,
                        towards: sv.towards,
                        sim: sv.sim,
                        joint,
                    });
                    scores.push((sv, joint));
                }
                let col = |f: fn(&(ScoreVector, f64)) -> f64| mean(&scores.iter().map(f).collect::<Vec<_>>());
                rows.push(DirectionRow {
                    source_author: sa.clone(),
                    target_author: ta.clone(),
                    n: scores.len(),
                    away: col(|s| s.0.away),
                    towards: col(|s| s.0.towards),
                    sim: col(|s| s.0.sim),
                    joint: col(|s| s.1),
                });
            }
        }
        reports.push(SystemReport {
            system: system.name().to_string(),
            aggregate: aggregate_rows(&rows),
            rows,
            examples,
            timing: TimingStats::of(&times),
        });
    }
    Ok(EvalReport {
        eval_embedder_id: eval_id.to_string(),
        split: split.clone(),
        seed,
        systems: reports,
        config: serde_json::Value::Null,
    })
}

impl EvalReport {
    pub fn system(&self, name: &str) -> Option<&SystemReport> {
        self.systems.iter().find(|s| s.system == name)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| System | Away | Towards | Sim | Joint |\n|---|---|---|---|---|\n");
        for s in &self.systems {
            let a = s.aggregate;
            let _ = writeln!(
                out,
                "| {} | {:.2} | {:.2} | {:.2} | {:.2} |",
                s.system, a.away, a.towards, a.sim, a.joint
            );
        }
        out
    }

    /// Per-direction rows of every system.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("system,source_author,target_author,n,away,towards,sim,joint\n");
        for s in &self.systems {
            for r in &s.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    s.system, r.source_author, r.target_author, r.n, r.away, r.towards, r.sim, r.joint
                );
            }
        }
        out
    }
}

/// A scoring classifier kept apart from exemplar selection.
pub struct AccuracyFn<'a> {
    pub id: String,
    /// True when the text belongs to the first ("formal") class.
    pub is_first_class: &'a (dyn Fn(&str) -> bool + Send + Sync),
}

/// Picks exemplars with a logistic classifier over style vectors.
pub struct ExemplarSelector<'a> {
    pub classifier: &'a LogisticClassifier,
    pub embedder: &'a dyn StyleEmbedder,
    pub threshold: f64,
}

impl ExemplarSelector<'_> {
    pub fn id(&self) -> String {
        format!("logistic:{}", self.classifier.embedder_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttrDirection {
    /// Informal inputs toward the first class.
    #[serde(rename = "to_formal")]
    ToFormal,
    #[serde(rename = "to_informal")]
    ToInformal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct AttrScores {
    pub n: usize,
    pub accuracy: f64,
    pub sim: f64,
    pub fluency: f64,
    pub joint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrExample {
    pub direction: AttrDirection,
    pub input: String,
    pub output: String,
    pub accuracy: f64,
    pub sim: f64,
    pub fluency: f64,
    pub joint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrSystemReport {
    pub system: String,
    pub overall: AttrScores,
    pub to_formal: AttrScores,
    pub to_informal: AttrScores,
    pub examples: Vec<AttrExample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeReport {
    pub accuracy_id: String,
    pub selector_id: String,
    pub fluency_id: String,
    pub num_examples: usize,
    pub exemplars_formal: Vec<String>,
    pub exemplars_informal: Vec<String>,
    pub seed: u64,
    pub systems: Vec<AttrSystemReport>,
    #[serde(default)]
    pub config: serde_json::Value,
}

fn attr_scores(ex: &[&AttrExample]) -> AttrScores {
    let col = |f: fn(&AttrExample) -> f64| mean(&ex.iter().map(|e| f(e)).collect::<Vec<_>>());
    AttrScores {
        n: ex.len(),
        accuracy: col(|e| e.accuracy),
        sim: col(|e| e.sim),
        fluency: col(|e| e.fluency),
        joint: col(|e| e.joint),
    }
}

/// Both directions of a two-class attribute task. Inputs for the formal
/// direction are the informal set and vice versa; exemplars are the
/// `num_examples` most confident texts of the target class.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_attribute(
    systems: &[&dyn TransferSystem],
    formal_set: &[&str],
    informal_set: &[&str],
    accuracy: &AccuracyFn<'_>,
    selector: &ExemplarSelector<'_>,
    fluency: &dyn FluencyScorer,
    num_examples: usize,
    seed: u64,
) -> Result<AttributeReport> {
    if formal_set.is_empty() || informal_set.is_empty() {
        return Err(Error::EmptyInput("attribute sets"));
    }
    if num_examples == 0 {
        return Err(Error::invalid("num_examples", "must be at least 1"));
    }
    if accuracy.id == selector.id() {
        return Err(Error::invalid(
            "accuracy_fn",
            "must be held out from the exemplar-selection classifier",
        ));
    }
    let pick = |texts: &[&str], positive: bool| -> Result<Vec<String>> {
        let chosen = select_exemplars(
            texts,
            selector.classifier,
            selector.embedder,
            positive,
            num_examples,
            selector.threshold,
        )?;
        if chosen.is_empty() {
            return Err(Error::EmptyInput("confident exemplars"));
        }
        if chosen.len() < num_examples {
            log::warn!("only {} of {num_examples} exemplars pass the threshold", chosen.len());
        }
        Ok(chosen.into_iter().map(str::to_string).collect())
    };
    let ex_f = pick(formal_set, true)?;
    let ex_i = pick(informal_set, false)?;
    let ex_f_ref: Vec<&str> = ex_f.iter().map(String::as_str).collect();
    let ex_i_ref: Vec<&str> = ex_i.iter().map(String::as_str).collect();

    let mut reports = Vec::new();
    for system in systems {
        let mut examples = Vec::new();
        let mut idx = 0u64;
        for (dir, inputs, exemplars, want_formal) in [
            (AttrDirection::ToFormal, informal_set, &ex_f_ref, true),
            (AttrDirection::ToInformal, formal_set, &ex_i_ref, false),
        ] {
            for input in inputs {
                let out = system.transfer(input, exemplars, seed::derive(seed, idx))?;
                idx += 1;
                let (acc, sim, fl) = if out.trim().is_empty() {
                    (0.0, 0.0, 0.0)
                } else {
                    (
                        ((accuracy.is_first_class)(&out) == want_formal) as u8 as f64,
                        metrics::sim(input, &out),
                        fluency.score(&out)?,
                    )
                };
                examples.push(AttrExample {
                    direction: dir,
                    input: input.to_string(),
                    joint: joint_eval(acc, sim, fl)?,
                    output: out,
                    accuracy: acc,
                    sim,
                    fluency: fl,
                });
            }
        }
        let of = |d: AttrDirection| attr_scores(&examples.iter().filter(|e| e.direction == d).collect::<Vec<_>>());
        reports.push(AttrSystemReport {
            system: system.name().to_string(),
            overall: attr_scores(&examples.iter().collect::<Vec<_>>()),
            to_formal: of(AttrDirection::ToFormal),
            to_informal: of(AttrDirection::ToInformal),
            examples,
        });
    }
    Ok(AttributeReport {
        accuracy_id: accuracy.id.clone(),
        selector_id: selector.id(),
        fluency_id: fluency.scorer_id().to_string(),
        num_examples,
        exemplars_formal: ex_f,
        exemplars_informal: ex_i,
        seed,
        systems: reports,
        config: serde_json::Value::Null,
    })
}

impl AttributeReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| System | Acc | Acc →F | Acc →I | Sim | Sim →F | Sim →I | Fl | Fl →F | Fl →I | Joint | Joint →F | Joint →I |\n|---|---|---|---|---|---|---|---|---|---|---|---|---|\n",
        );
        for s in &self.systems {
            let (o, f, i) = (s.overall, s.to_formal, s.to_informal);
            let _ = writeln!(
                out,
                "| {} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} |",
                s.system,
                o.accuracy, f.accuracy, i.accuracy,
                o.sim, f.sim, i.sim,
                o.fluency, f.fluency, i.fluency,
                o.joint, f.joint, i.joint,
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("system,direction,n,accuracy,sim,fluency,joint\n");
        for s in &self.systems {
            for (d, v) in [("overall", s.overall), ("to_formal", s.to_formal), ("to_informal", s.to_informal)] {
                let _ = writeln!(
                    out,
                    "{},{d},{},{},{},{},{}",
                    s.system, v.n, v.accuracy, v.sim, v.fluency, v.joint
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lam: f64,
    pub n: usize,
    pub accuracy: f64,
    pub sim: f64,
    pub towards: f64,
}

/// Transfers every input at each `lam` with per-input seeds shared across
/// the grid. Towards is measured with `style_embedder` against the
/// exemplar centroid; accuracy is the share of outputs `in_target` accepts.
pub fn interpolation_sweep(
    pipeline: &Pipeline,
    inputs: &[&str],
    exemplars: &[&str],
    lam_grid: &[f64],
    options: &TransferOptions,
    style_embedder: &dyn StyleEmbedder,
    in_target: &dyn Fn(&str) -> bool,
) -> Result<Vec<SweepRow>> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("sweep inputs"));
    }
    if exemplars.is_empty() {
        return Err(Error::EmptyInput("target_exemplars"));
    }
    if lam_grid.is_empty() {
        return Err(Error::EmptyInput("lam_grid"));
    }
    if lam_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::invalid("lam_grid", "values must lie in [0, 1]"));
    }
    if lam_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("lam_grid", "must be sorted"));
    }
    let target = metrics::centroid(exemplars, style_embedder)?;
    let mut rows = Vec::with_capacity(lam_grid.len());
    for &lam in lam_grid {
        let (mut acc, mut sim, mut tow) = (Vec::new(), Vec::new(), Vec::new());
        for (i, input) in inputs.iter().enumerate() {
            let opts = TransferOptions {
                lam,
                seed: seed::derive(options.seed, i as u64),
                ..options.clone()
            };
            let out = pipeline.transfer(input, exemplars, &opts)?.output;
            if out.trim().is_empty() {
                acc.push(0.0);
                sim.push(0.0);
                tow.push(0.0);
                continue;
            }
            acc.push(in_target(&out) as u8 as f64);
            sim.push(metrics::sim(input, &out));
            tow.push(towards_to(&target, &style_embedder.embed(&out)?)?);
        }
        rows.push(SweepRow {
            lam,
            n: inputs.len(),
            accuracy: mean(&acc),
            sim: mean(&sim),
            towards: mean(&tow),
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lam,n,accuracy,sim,towards\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.lam, r.n, r.accuracy, r.sim, r.towards);
    }
    out
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. Zero when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("spearman", "need at least two points"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub system: String,
    pub device_note: String,
    pub warmup: usize,
    pub batch_size: usize,
    pub n: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub measurements_s: Vec<f64>,
}

pub const DEFAULT_WARMUP: usize = 3;

/// Sequential per-input wall clock, batch size 1. The first `warmup` calls
/// cycle through the inputs and are not recorded.
pub fn timing_report(
    system: &dyn TransferSystem,
    inputs: &[&str],
    exemplars: &[&str],
    device_note: &str,
    warmup: usize,
    seed: u64,
) -> Result<TimingReport> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("timing inputs"));
    }
    for i in 0..warmup {
        system.transfer(inputs[i % inputs.len()], exemplars, seed::derive(seed, i as u64))?;
    }
    let mut m = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        let s = seed::derive(seed, (warmup + i) as u64);
        let t0 = Instant::now();
        system.transfer(input, exemplars, s)?;
        m.push(t0.elapsed().as_secs_f64());
    }
    Ok(TimingReport {
        system: system.name().to_string(),
        device_note: device_note.to_string(),
        warmup,
        batch_size: 1,
        n: m.len(),
        mean_s: mean(&m),
        median_s: median(&m),
        min_s: m.iter().copied().fold(f64::INFINITY, f64::min),
        max_s: m.iter().copied().fold(0.0, f64::max),
        measurements_s: m,
    })
}

impl TimingReport {
    pub fn to_markdown(&self) -> String {
        format!(
            "| System | n | warmup | mean s/it | median s/it | device |\n|---|---|---|---|---|---|\n| {} | {} | {} | {:.4} | {:.4} | {} |\n",
            self.system, self.n, self.warmup, self.mean_s, self.median_s, self.device_note
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::style_space::MarkerStyleEmbedder;
    use crate::synth::{synth_eval_corpus, Family};
    use proptest::prelude::*;

    fn toy() -> (AuthorCorpus, EvalSplit, MarkerStyleEmbedder) {
        let (c, src, tgt) = synth_eval_corpus(Family::Loud, 3, 3, 4, 0, 3).unwrap();
        let split = EvalSplit::new(SplitName::Custom, src, tgt, 4).unwrap();
        let e = MarkerStyleEmbedder::fit(c.texts()).unwrap();
        (c, split, e)
    }

    #[test]
    fn copy_baselines_are_calibrated() {
        let (c, split, e) = toy();
        let r = evaluate_authorship(&[&CopySource, &CopyTarget], &c, &split, &e, 0).unwrap();
        let s = r.system("Copy_src").unwrap().aggregate;
        assert!(s.away < 0.02 && s.towards < 0.02, "{s:?}");
        assert!((s.sim - 1.0).abs() < 1e-12 && s.joint < 0.02);
        let t = r.system("Copy_tgt").unwrap().aggregate;
        assert!(t.away > 0.98 && t.towards > 0.98, "{t:?}");
        assert_eq!(t.sim, 0.0);
        assert_eq!(t.joint, 0.0);
    }

    #[test]
    fn transformation_count() {
        let (c, _, e) = toy();
        let authors: Vec<String> = c.author_ids().map(str::to_string).collect();
        let split = EvalSplit::new(
            SplitName::Custom,
            authors[..2].to_vec(),
            authors[3..5].to_vec(),
            3,
        )
        .unwrap();
        assert_eq!(split.n_transformations(), 12);
        let r = evaluate_authorship(&[&CopySource], &c, &split, &e, 0).unwrap();
        assert_eq!(r.systems[0].examples.len(), 12);
        assert_eq!(r.systems[0].rows.len(), 4);
        assert_eq!(r.systems[0].timing.n, 12);
    }

    #[test]
    fn aggregates_reproducible_from_rows() {
        let (c, split, e) = toy();
        let r = evaluate_authorship(&[&CopySource, &CopyTarget], &c, &split, &e, 1).unwrap();
        for s in &r.systems {
            let n: f64 = s.rows.iter().map(|r| r.n as f64).sum();
            let away: f64 = s.rows.iter().map(|r| r.away * r.n as f64).sum::<f64>() / n;
            let joint: f64 = s.rows.iter().map(|r| r.joint * r.n as f64).sum::<f64>() / n;
            assert!((away - s.aggregate.away).abs() < 1e-9);
            assert!((joint - s.aggregate.joint).abs() < 1e-9);
            let ex_mean = s.examples.iter().map(|e| e.joint).sum::<f64>() / s.examples.len() as f64;
            assert!((ex_mean - s.aggregate.joint).abs() < 1e-9);
        }
        let md = r.to_markdown();
        assert!(md.contains("| Copy_src |"));
        assert_eq!(r.to_csv().lines().count(), 1 + 2 * split.n_directions());
    }

    struct Reranked;
    impl TransferSystem for Reranked {
        fn name(&self) -> &str {
            "r"
        }
        fn rerank_embedder_id(&self) -> Option<&str> {
            Some(MarkerStyleEmbedder::EMBEDDER_ID)
        }
        fn transfer(&self, s: &str, _: &[&str], _: u64) -> Result<String> {
            Ok(s.into())
        }
    }

    #[test]
    fn embedder_reuse_refused() {
        let (c, split, e) = toy();
        assert!(matches!(
            evaluate_authorship(&[&Reranked], &c, &split, &e, 0),
            Err(Error::EmbedderReuse(_))
        ));
    }

    #[test]
    fn deterministic_except_timing() {
        let (c, split, e) = toy();
        let mut a = evaluate_authorship(&[&CopyTarget], &c, &split, &e, 5).unwrap();
        let mut b = evaluate_authorship(&[&CopyTarget], &c, &split, &e, 5).unwrap();
        a.systems[0].timing = TimingStats::default();
        b.systems[0].timing = TimingStats::default();
        assert_eq!(a, b);
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]).unwrap(), 0.0);
        // Ties: ranks of y = (1.5, 1.5, 3); textbook value 0.8660...
        let r = spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]).unwrap();
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn timing_counts_and_note() {
        let inputs: Vec<String> = (0..200).map(|i| format!("text {i}")).collect();
        let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
        let r = timing_report(&CopySource, &refs, &["x"], "cpu, 1 thread", DEFAULT_WARMUP, 0).unwrap();
        assert_eq!(r.n, 200);
        assert_eq!(r.measurements_s.len(), 200);
        assert_eq!(r.device_note, "cpu, 1 thread");
        assert!(r.median_s < 1e-3);
        assert!(r.min_s <= r.median_s && r.median_s <= r.max_s);
        assert!(timing_report(&CopySource, &[], &["x"], "", 3, 0).is_err());
    }

    #[test]
    fn attribute_copy_baseline_and_direction_split() {
        use crate::classify::{is_shouting, LogisticSettings};
        use crate::metrics::CharLm;
        use crate::style_space::FeatureStyleEmbedder;
        let (c, split, _) = toy();
        // "Formal" is the calm family here.
        let formal: Vec<&str> = split.target_authors.iter().flat_map(|a| c.texts_of(a).unwrap()).collect();
        let informal: Vec<&str> = split.source_authors.iter().flat_map(|a| c.texts_of(a).unwrap()).collect();
        assert_eq!(formal.len(), informal.len());
        let fe = FeatureStyleEmbedder::new(256).unwrap();
        let clf = LogisticClassifier::fit(
            &fe.embed_all(&formal).unwrap(),
            &fe.embed_all(&informal).unwrap(),
            LogisticSettings::default(),
        )
        .unwrap();
        let selector = ExemplarSelector { classifier: &clf, embedder: &fe, threshold: 0.95 };
        let calm = |t: &str| !is_shouting(t);
        let acc = AccuracyFn { id: "case-heuristic".into(), is_first_class: &calm };
        let lm = CharLm::fit(c.texts(), 100).unwrap();
        let r = evaluate_attribute(&[&CopySource, &CopyTarget], &formal, &informal, &acc, &selector, &lm, 4, 0)
            .unwrap();
        assert_eq!(r.exemplars_formal.len(), 4);
        let copy = &r.systems[0];
        assert_eq!(copy.overall.accuracy, 0.0);
        assert_eq!(copy.overall.sim, 1.0);
        assert_eq!(copy.overall.joint, 0.0);
        let tgt = &r.systems[1];
        assert_eq!(tgt.overall.accuracy, 1.0);
        for s in &r.systems {
            let m = (s.to_formal.joint + s.to_informal.joint) / 2.0;
            assert!((m - s.overall.joint).abs() < 1e-12);
            let m = (s.to_formal.fluency + s.to_informal.fluency) / 2.0;
            assert!((m - s.overall.fluency).abs() < 1e-12);
        }
        assert!(r.to_markdown().contains("→F"));
        let same = AccuracyFn { id: selector.id(), is_first_class: &calm };
        assert!(evaluate_attribute(&[&CopySource], &formal, &informal, &same, &selector, &lm, 4, 0).is_err());
        assert!(evaluate_attribute(&[&CopySource], &[], &informal, &acc, &selector, &lm, 4, 0).is_err());
    }

    proptest! {
        #[test]
        fn spearman_is_bounded(x in proptest::collection::vec(-5.0f64..5.0, 2..20), seed in 0u64..100) {
            let mut y = x.clone();
            y.shuffle(&mut seed::rng(seed));
            let r = spearman(&x, &y).unwrap();
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            let self_r = spearman(&x, &x).unwrap();
            prop_assert!(self_r == 0.0 || (self_r - 1.0).abs() < 1e-9);
        }
    }
}

//! Zero-shot generation evaluation and the metric suite.
//!
//! For every question and every class, the model is prompted with the
//! question and the class's control code; the cleaned output is annotated and
//! the `(requested, detected)` pair recorded. Pairs are then scored like a
//! classification task: accuracy, weighted/macro/per-class F1, ordinal MAE and
//! multiclass MCC.
//!
//! Generations that failed (gateway error or unannotatable output) are kept in
//! the report as failure markers and left out of the metrics.
//!
//! [`br_score`] measures how far post-training generations drift from the
//! original model's outputs, normalised by that model's own seed-to-seed
//! variability.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::annotators::Annotator;
use crate::gateway::{build_control_prompt, Gateway, Message, PromptError, SamplingParams, TemplateSet};
use crate::http::{self, PostError};
use crate::ontology::OntologySpec;
use crate::textmetrics::{self, FeatureVector};

/// B_r denominators at or below this are flagged as degenerate.
pub const BR_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no scorable label pairs")]
    EmptyPairs,
    #[error("class `{0}` is not in the class list")]
    UnknownClass(String),
    #[error("ordinal MAE needs an ordinal ontology")]
    NotOrdinal,
    #[error("question set is empty")]
    NoQuestions,
    #[error("B_r needs at least two seeds per prompt (prompt {0})")]
    TooFewSeeds(usize),
    #[error("B_r inputs are misaligned: {pre} pre prompts, {post} post generations")]
    Misaligned { pre: usize, post: usize },
    #[error("similarity backend failed: {0}")]
    Similarity(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPair {
    pub requested: String,
    /// `None` marks a failed generation or annotation.
    pub detected: Option<String>,
}

impl LabelPair {
    pub fn new(requested: impl Into<String>, detected: impl Into<String>) -> Self {
        LabelPair {
            requested: requested.into(),
            detected: Some(detected.into()),
        }
    }

    pub fn failed(requested: impl Into<String>) -> Self {
        LabelPair {
            requested: requested.into(),
            detected: None,
        }
    }
}

/// Rows are requested classes, columns detected classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Builds the matrix from the scorable pairs; failure markers are skipped.
    pub fn from_pairs(pairs: &[LabelPair], classes: &[String]) -> Result<Self, EvalError> {
        let index: HashMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let idx = |c: &str| {
            index
                .get(c)
                .copied()
                .ok_or_else(|| EvalError::UnknownClass(c.to_string()))
        };
        let k = classes.len();
        let mut counts = vec![vec![0u64; k]; k];
        for p in pairs {
            let Some(d) = &p.detected else { continue };
            counts[idx(&p.requested)?][idx(d)?] += 1;
        }
        Ok(ConfusionMatrix {
            classes: classes.to_vec(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Requested-class counts.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Detected-class counts.
    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.classes.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    fn nonempty(&self) -> Result<f64, EvalError> {
        match self.total() {
            0 => Err(EvalError::EmptyPairs),
            n => Ok(n as f64),
        }
    }

    pub fn accuracy(&self) -> Result<f64, EvalError> {
        Ok(self.trace() as f64 / self.nonempty()?)
    }

    /// One-vs-rest F1 per class; 0 when precision + recall is 0.
    pub fn per_class_f1(&self) -> Result<Vec<f64>, EvalError> {
        self.nonempty()?;
        let rows = self.row_sums();
        let cols = self.col_sums();
        Ok((0..self.classes.len())
            .map(|i| {
                let tp = self.counts[i][i] as f64;
                let precision = if cols[i] == 0 { 0.0 } else { tp / cols[i] as f64 };
                let recall = if rows[i] == 0 { 0.0 } else { tp / rows[i] as f64 };
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            })
            .collect())
    }

    pub fn f1_macro(&self) -> Result<f64, EvalError> {
        let f1 = self.per_class_f1()?;
        Ok(f1.iter().sum::<f64>() / f1.len() as f64)
    }

    /// F1 weighted by requested-class support.
    pub fn f1_weighted(&self) -> Result<f64, EvalError> {
        let f1 = self.per_class_f1()?;
        let total = self.nonempty()?;
        Ok(self
            .row_sums()
            .iter()
            .zip(&f1)
            .map(|(&n, f)| n as f64 * f)
            .sum::<f64>()
            / total)
    }

    /// Multiclass Matthews correlation (R_K); 0 when either marginal is
    /// concentrated on one class.
    pub fn mcc(&self) -> Result<f64, EvalError> {
        let s = self.nonempty()?;
        let c = self.trace() as f64;
        let t: Vec<f64> = self.row_sums().into_iter().map(|x| x as f64).collect();
        let p: Vec<f64> = self.col_sums().into_iter().map(|x| x as f64).collect();
        let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
        let pp: f64 = p.iter().map(|x| x * x).sum();
        let tt: f64 = t.iter().map(|x| x * x).sum();
        let d1 = s * s - pp;
        let d2 = s * s - tt;
        if d1 == 0.0 || d2 == 0.0 {
            return Ok(0.0);
        }
        Ok((c * s - pt) / (d1 * d2).sqrt())
    }

    /// Mean |rank(requested) - rank(detected)| under the class order.
    pub fn mae_ordinal(&self) -> Result<f64, EvalError> {
        let total = self.nonempty()?;
        let k = self.classes.len();
        let mut sum = 0.0;
        for i in 0..k {
            for j in 0..k {
                sum += self.counts[i][j] as f64 * i.abs_diff(j) as f64;
            }
        }
        Ok(sum / total)
    }
}

impl std::fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let w = self
            .classes
            .iter()
            .map(|c| c.chars().count())
            .chain(self.counts.iter().flatten().map(|n| n.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(3);
        write!(f, "{:>w$}", "")?;
        for c in &self.classes {
            write!(f, " {c:>w$}")?;
        }
        writeln!(f)?;
        for (c, row) in self.classes.iter().zip(&self.counts) {
            write!(f, "{c:>w$}")?;
            for n in row {
                write!(f, " {n:>w$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub fn accuracy(pairs: &[LabelPair], classes: &[String]) -> Result<f64, EvalError> {
    ConfusionMatrix::from_pairs(pairs, classes)?.accuracy()
}

pub fn per_class_f1(pairs: &[LabelPair], classes: &[String]) -> Result<Vec<f64>, EvalError> {
    ConfusionMatrix::from_pairs(pairs, classes)?.per_class_f1()
}

pub fn f1_macro(pairs: &[LabelPair], classes: &[String]) -> Result<f64, EvalError> {
    ConfusionMatrix::from_pairs(pairs, classes)?.f1_macro()
}

pub fn f1_weighted(pairs: &[LabelPair], classes: &[String]) -> Result<f64, EvalError> {
    ConfusionMatrix::from_pairs(pairs, classes)?.f1_weighted()
}

pub fn mcc_multiclass(pairs: &[LabelPair], classes: &[String]) -> Result<f64, EvalError> {
    ConfusionMatrix::from_pairs(pairs, classes)?.mcc()
}

pub fn mae_ordinal(pairs: &[LabelPair], spec: &OntologySpec) -> Result<f64, EvalError> {
    if !spec.ordinal {
        return Err(EvalError::NotOrdinal);
    }
    ConfusionMatrix::from_pairs(pairs, &spec.classes)?.mae_ordinal()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSuite {
    pub n: u64,
    pub accuracy: f64,
    pub f1_weighted: f64,
    pub f1_macro: f64,
    pub per_class_f1: BTreeMap<String, f64>,
    /// Population standard deviation of the per-class F1 values.
    pub f1_std: f64,
    pub f1_min: f64,
    pub f1_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    pub mcc: f64,
}

impl MetricSuite {
    pub fn compute(matrix: &ConfusionMatrix, ordinal: bool) -> Result<Self, EvalError> {
        let f1 = matrix.per_class_f1()?;
        let mean = f1.iter().sum::<f64>() / f1.len() as f64;
        let var = f1.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / f1.len() as f64;
        Ok(MetricSuite {
            n: matrix.total(),
            accuracy: matrix.accuracy()?,
            f1_weighted: matrix.f1_weighted()?,
            f1_macro: mean,
            per_class_f1: matrix.classes.iter().cloned().zip(f1.iter().copied()).collect(),
            f1_std: var.sqrt(),
            f1_min: f1.iter().copied().fold(f64::INFINITY, f64::min),
            f1_max: f1.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mae: if ordinal { Some(matrix.mae_ordinal()?) } else { None },
            mcc: matrix.mcc()?,
        })
    }
}

/// One prompted generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub question: usize,
    pub requested: String,
    pub detected: Option<String>,
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub concept: String,
    pub template_id: String,
    pub endpoint_id: String,
    pub question_set_id: String,
    pub classes: Vec<String>,
    pub requests: usize,
    pub failures: usize,
    pub confusion: ConfusionMatrix,
    /// `None` when every generation failed.
    pub metrics: Option<MetricSuite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub br: Option<BrScore>,
    pub items: Vec<EvalItem>,
}

impl EvalReport {
    pub fn pairs(&self) -> Vec<LabelPair> {
        self.items
            .iter()
            .map(|i| LabelPair {
                requested: i.requested.clone(),
                detected: i.detected.clone(),
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV row per generation with its features, ready for plotting.
    pub fn features_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["question", "requested", "detected"];
        header.extend(FeatureVector::NAMES);
        w.write_record(&header).expect("in-memory write");
        for item in &self.items {
            let mut row = vec![
                item.question.to_string(),
                item.requested.clone(),
                item.detected.clone().unwrap_or_default(),
            ];
            match &item.features {
                Some(f) => row.extend(f.to_array().iter().map(|x| x.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), FeatureVector::NAMES.len())),
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} | template {} | endpoint {} | questions {} | requests {} | failures {}\n",
            self.concept, self.template_id, self.endpoint_id, self.question_set_id, self.requests, self.failures
        );
        if let Some(m) = &self.metrics {
            s.push_str(&format!(
                "acc {:.4}  f1w {:.4}  f1m {:.4} ± {:.4}  range [{:.4}, {:.4}]  mcc {:.4}",
                m.accuracy, m.f1_weighted, m.f1_macro, m.f1_std, m.f1_min, m.f1_max, m.mcc
            ));
            if let Some(mae) = m.mae {
                s.push_str(&format!("  mae {mae:.4}"));
            }
            s.push('\n');
        }
        if let Some(b) = &self.br {
            s.push_str(&format!("{b}\n"));
        }
        s
    }
}

/// Reads a question set: one question per non-blank line.
pub fn read_questions(path: &Path) -> Result<Vec<String>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    Ok(parse_questions(&text))
}

pub fn parse_questions(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

/// Settings for [`zero_shot_eval`].
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub template_id: String,
    pub question_set_id: String,
    pub params: SamplingParams,
    /// Concurrent gateway calls.
    pub parallelism: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            template_id: "zero-shot".into(),
            question_set_id: "inline".into(),
            params: SamplingParams::default(),
            parallelism: 4,
        }
    }
}

/// Prompts every question with every class and scores the detected classes.
pub fn zero_shot_eval(
    questions: &[String],
    spec: &OntologySpec,
    annotator: &dyn Annotator,
    gateway: &dyn Gateway,
    templates: &TemplateSet,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if questions.is_empty() {
        return Err(EvalError::NoQuestions);
    }
    templates.get(&config.template_id)?;
    let jobs: Vec<(usize, &String)> = (0..questions.len())
        .flat_map(|q| spec.classes.iter().map(move |c| (q, c)))
        .collect();
    let run = |&(q, class): &(usize, &String)| -> EvalItem {
        let fail = |error: String, text: Option<String>| EvalItem {
            question: q,
            requested: class.clone(),
            detected: None,
            text,
            features: None,
            error: Some(error),
        };
        let bundle = match build_control_prompt(
            &[Message::user(questions[q].clone())],
            class,
            spec,
            templates,
            &config.template_id,
            config.params.clone(),
        ) {
            Ok(b) => b,
            Err(e) => return fail(e.to_string(), None),
        };
        let generation = match gateway.complete(&bundle) {
            Ok(g) => g,
            Err(e) => return fail(e.to_string(), None),
        };
        match annotator.annotate(&generation.clean) {
            Ok(d) => EvalItem {
                question: q,
                requested: class.clone(),
                detected: Some(d),
                features: textmetrics::features(&generation.clean).ok(),
                text: Some(generation.clean),
                error: None,
            },
            Err(e) => fail(e.to_string(), Some(generation.clean)),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .map_err(|e| EvalError::Io(e.to_string()))?;
    let items: Vec<EvalItem> = pool.install(|| jobs.par_iter().map(run).collect());

    let pairs: Vec<LabelPair> = items
        .iter()
        .map(|i| LabelPair {
            requested: i.requested.clone(),
            detected: i.detected.clone(),
        })
        .collect();
    let confusion = ConfusionMatrix::from_pairs(&pairs, &spec.classes)?;
    let metrics = match MetricSuite::compute(&confusion, spec.ordinal) {
        Ok(m) => Some(m),
        Err(EvalError::EmptyPairs) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        concept: spec.concept.clone(),
        template_id: config.template_id.clone(),
        endpoint_id: gateway.endpoint_id(),
        question_set_id: config.question_set_id.clone(),
        classes: spec.classes.clone(),
        requests: items.len(),
        failures: items.iter().filter(|i| i.detected.is_none()).count(),
        confusion,
        metrics,
        br: None,
        items,
    })
}

/// Symmetric text similarity in `[0, 1]`.
pub trait Similarity: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, EvalError>;
}

/// F1 of clipped unigram overlap over lowercased word tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnigramF1;

impl Similarity for UnigramF1 {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, EvalError> {
        Ok(unigram_f1(a, b))
    }
}

pub fn unigram_f1(a: &str, b: &str) -> f64 {
    let ta = textmetrics::word_tokens(a);
    let tb = textmetrics::word_tokens(b);
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &ta {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0;
    for t in &tb {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / tb.len() as f64;
    let r = overlap as f64 / ta.len() as f64;
    2.0 * p * r / (p + r)
}

/// Always returns the same value.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSimilarity(pub f64);

impl Similarity for ConstantSimilarity {
    fn similarity(&self, _: &str, _: &str) -> Result<f64, EvalError> {
        Ok(self.0)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Greedy token matching F1 over token embeddings: each token is matched to
/// its most similar token on the other side by cosine; precision and recall
/// are the mean best matches. Clamped to `[0, 1]`.
pub fn greedy_match_f1(reference: &[Vec<f64>], candidate: &[Vec<f64>]) -> f64 {
    if reference.is_empty() || candidate.is_empty() {
        return if reference.is_empty() && candidate.is_empty() { 1.0 } else { 0.0 };
    }
    let best = |from: &[Vec<f64>], to: &[Vec<f64>]| {
        from.iter()
            .map(|x| to.iter().map(|y| cosine(x, y)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / from.len() as f64
    };
    let r = best(reference, candidate);
    let p = best(candidate, reference);
    if p + r <= 0.0 {
        return 0.0;
    }
    (2.0 * p * r / (p + r)).clamp(0.0, 1.0)
}

/// Token embeddings from a remote service: `POST {"text"}` answered by
/// `{"embeddings": [[f64, ...], ...]}`, one vector per token. Timeout and
/// retries follow `ONTO_CLF_TIMEOUT_MS` / `ONTO_CLF_RETRIES`.
pub struct EmbeddingSimilarity {
    url: String,
    retries: u32,
    agent: ureq::Agent,
}

impl EmbeddingSimilarity {
    pub fn new(url: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        EmbeddingSimilarity {
            url: url.into(),
            retries,
            agent: http::agent(timeout),
        }
    }

    pub fn from_env(url: impl Into<String>) -> Self {
        Self::new(
            url,
            Duration::from_millis(http::env_u64("ONTO_CLF_TIMEOUT_MS", 5000)),
            http::env_u64("ONTO_CLF_RETRIES", 1) as u32,
        )
    }

    fn embed(&self, text: &str) -> Result<Vec<Vec<f64>>, EvalError> {
        let body = serde_json::to_vec(&json!({ "text": text })).expect("request serializes");
        let mut last = PostError::Timeout;
        for _ in 0..=self.retries {
            match http::post_json(&self.agent, &self.url, &[], &body) {
                Ok(v) => {
                    #[derive(Deserialize)]
                    struct Reply {
                        embeddings: Vec<Vec<f64>>,
                    }
                    return serde_json::from_value::<Reply>(v)
                        .map(|r| r.embeddings)
                        .map_err(|e| EvalError::Similarity(e.to_string()));
                }
                Err(e) if e.is_timeout() || matches!(e, PostError::Transport(_)) => last = e,
                Err(e) => return Err(EvalError::Similarity(e.to_string())),
            }
        }
        Err(EvalError::Similarity(last.to_string()))
    }
}

impl Similarity for EmbeddingSimilarity {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, EvalError> {
        Ok(greedy_match_f1(&self.embed(a)?, &self.embed(b)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrScore {
    /// `numerator / denominator`; `None` when the denominator is degenerate.
    pub value: Option<f64>,
    pub numerator: f64,
    pub denominator: f64,
    pub degenerate: bool,
    /// Set when the ontology is not ordinal: changing class may legitimately
    /// change meaning, so drift is not necessarily a defect.
    pub caveat: bool,
}

impl BrScore {
    pub fn with_caveat_for(mut self, spec: &OntologySpec) -> Self {
        self.caveat = !spec.ordinal;
        self
    }
}

impl std::fmt::Display for BrScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.value {
            Some(v) => write!(f, "B_r {v:.4} ({:.4} / {:.4})", self.numerator, self.denominator)?,
            None => write!(f, "B_r undefined (denominator {:.2e})", self.denominator)?,
        }
        if self.caveat {
            f.write_str(" [non-ordinal concept]")?;
        }
        Ok(())
    }
}

/// `pre[i]` holds the original model's generations for prompt `i` under
/// several seeds; `post[i]` the tuned model's generation for the same prompt.
///
/// Numerator: mean over prompts of the mean similarity between `post[i]` and
/// each seed of `pre[i]`. Denominator: mean over prompts of the mean
/// similarity over distinct seed pairs of `pre[i]`.
pub fn br_score(pre: &[Vec<String>], post: &[String], sim: &dyn Similarity) -> Result<BrScore, EvalError> {
    if pre.len() != post.len() {
        return Err(EvalError::Misaligned {
            pre: pre.len(),
            post: post.len(),
        });
    }
    if pre.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (seeds, out)) in pre.iter().zip(post).enumerate() {
        if seeds.len() < 2 {
            return Err(EvalError::TooFewSeeds(i));
        }
        let mut s = 0.0;
        for seed in seeds {
            s += sim.similarity(out, seed)?;
        }
        num += s / seeds.len() as f64;
        let mut pairs = 0.0;
        let mut count = 0usize;
        for a in 0..seeds.len() {
            for b in a + 1..seeds.len() {
                pairs += sim.similarity(&seeds[a], &seeds[b])?;
                count += 1;
            }
        }
        den += pairs / count as f64;
    }
    let n = pre.len() as f64;
    let (numerator, denominator) = (num / n, den / n);
    let degenerate = denominator <= BR_EPSILON;
    Ok(BrScore {
        value: (!degenerate).then(|| numerator / denominator),
        numerator,
        denominator,
        degenerate,
        caveat: false,
    })
}

//! Utterance annotators: raw text in, ontology class out.
//!
//! CEFR-style ontologies over the six text features are annotated directly
//! from [`textmetrics`](crate::textmetrics). Polarity profiles combine two
//! classifier verdicts (emotional load and polarity) that come from a
//! [`ClassifierBackend`], either a remote service or the bundled lexicon
//! stand-ins.
//!
//! The lexicon backends are low-fidelity placeholders for trained
//! classifiers. They are deterministic and need no network, which is what the
//! tests and the offline demos rely on.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{self, PostError};
use crate::ontology::{ClassifyError, Descriptor, DescriptorValues, OntologySpec};
use crate::resources;
use crate::textmetrics::{self, TextError};

/// Polarity decision threshold of the lexicon backend.
pub const LEXICON_TAU: f64 = 0.05;

pub const LOAD_SYMBOLS: [&str; 2] = ["loaded", "nonloaded"];
pub const POLARITY_SYMBOLS: [&str; 3] = ["negative", "neutral", "positive"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotateError {
    #[error("input contains no word token")]
    BlankInput,
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("ontology `{0}` is neither text-feature based nor a load/polarity profile")]
    UnsupportedOntology(String),
}

impl From<TextError> for AnnotateError {
    fn from(_: TextError) -> Self {
        AnnotateError::BlankInput
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("classifier backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: u32, message: String },
    #[error("classifier returned label `{0}` outside its symbol set")]
    InvalidLabel(String),
    #[error("malformed classifier response: {0}")]
    Malformed(String),
}

/// Maps raw utterance text to one class of an ontology.
pub trait Annotator: Send + Sync {
    fn ontology(&self) -> &OntologySpec;

    fn annotate(&self, text: &str) -> Result<String, AnnotateError>;
}

/// Annotates through the six text features and the ontology's rules.
#[derive(Debug, Clone)]
pub struct FeatureAnnotator {
    spec: Arc<OntologySpec>,
}

impl FeatureAnnotator {
    pub fn new(spec: Arc<OntologySpec>) -> Result<Self, AnnotateError> {
        if !spec.uses_text_features() {
            return Err(AnnotateError::UnsupportedOntology(spec.concept.clone()));
        }
        Ok(FeatureAnnotator { spec })
    }
}

impl Annotator for FeatureAnnotator {
    fn ontology(&self) -> &OntologySpec {
        &self.spec
    }

    fn annotate(&self, text: &str) -> Result<String, AnnotateError> {
        let f = textmetrics::features(text)?;
        Ok(self.spec.classify(&DescriptorValues::from(&f))?)
    }
}

/// Convenience alias for the text-feature annotator over CEFR rules.
pub fn annotate_cefr(text: &str, ruleset: &OntologySpec) -> Result<String, AnnotateError> {
    let f = textmetrics::features(text)?;
    Ok(ruleset.classify(&DescriptorValues::from(&f))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierVerdict {
    pub label: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    RemoteHttp,
    Lexicon,
}

pub trait ClassifierBackend: Send + Sync {
    fn symbols(&self) -> &[String];

    fn kind(&self) -> BackendKind;

    fn classify(&self, text: &str) -> Result<ClassifierVerdict, BackendError>;
}

fn symbols(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn word_set(source: &str) -> HashSet<String> {
    resources::lexicon_lines(source).map(str::to_lowercase).collect()
}

/// Lexicon polarity scorer: `(positive hits - negative hits) / words`.
#[derive(Debug, Clone)]
pub struct LexiconPolarity {
    positive: HashSet<String>,
    negative: HashSet<String>,
    tau: f64,
    symbols: Vec<String>,
}

impl Default for LexiconPolarity {
    fn default() -> Self {
        Self::new(
            word_set(resources::POSITIVE_WORDS),
            word_set(resources::NEGATIVE_WORDS),
            LEXICON_TAU,
        )
    }
}

impl LexiconPolarity {
    pub fn new(positive: HashSet<String>, negative: HashSet<String>, tau: f64) -> Self {
        LexiconPolarity {
            positive,
            negative,
            tau,
            symbols: symbols(&POLARITY_SYMBOLS),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn score(&self, text: &str) -> f64 {
        let words = textmetrics::word_tokens(text);
        if words.is_empty() {
            return 0.0;
        }
        let pos = words.iter().filter(|w| self.positive.contains(*w)).count();
        let neg = words.iter().filter(|w| self.negative.contains(*w)).count();
        (pos as f64 - neg as f64) / words.len() as f64
    }
}

/// Polarity verdict of the bundled lexicon.
pub fn lexicon_polarity(text: &str) -> ClassifierVerdict {
    LexiconPolarity::default().verdict(text)
}

impl LexiconPolarity {
    pub fn verdict(&self, text: &str) -> ClassifierVerdict {
        let score = self.score(text);
        let label = if score > self.tau {
            "positive"
        } else if score < -self.tau {
            "negative"
        } else {
            "neutral"
        };
        let margin = (score.abs() / self.tau).min(1.0);
        ClassifierVerdict {
            label: label.into(),
            confidence: if label == "neutral" { 1.0 - margin } else { margin },
        }
    }
}

impl ClassifierBackend for LexiconPolarity {
    fn symbols(&self) -> &[String] {
        &self.symbols
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Lexicon
    }

    fn classify(&self, text: &str) -> Result<ClassifierVerdict, BackendError> {
        Ok(self.verdict(text))
    }
}

const PERSONAL_PRONOUNS: [&str; 15] = [
    "i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves", "you", "your",
    "yours", "yourself", "yourselves",
];

/// Load heuristic: loaded iff the text has an exclamation mark, a first or
/// second person pronoun together with an emotion word, or a polarity score
/// beyond twice the polarity threshold.
#[derive(Debug, Clone)]
pub struct LexiconLoad {
    polarity: LexiconPolarity,
    emotion: HashSet<String>,
    symbols: Vec<String>,
}

impl Default for LexiconLoad {
    fn default() -> Self {
        LexiconLoad {
            polarity: LexiconPolarity::default(),
            emotion: word_set(resources::EMOTION_WORDS),
            symbols: symbols(&LOAD_SYMBOLS),
        }
    }
}

impl LexiconLoad {
    fn triggers(&self, text: &str) -> (usize, f64) {
        let words = textmetrics::word_tokens(text);
        let personal = words.iter().any(|w| PERSONAL_PRONOUNS.contains(&w.as_str()));
        let emotional = words.iter().any(|w| self.emotion.contains(w));
        let score = self.polarity.score(text);
        let fired = [
            text.contains('!'),
            personal && emotional,
            score.abs() > 2.0 * self.polarity.tau,
        ];
        (fired.iter().filter(|&&b| b).count(), score)
    }
}

impl ClassifierBackend for LexiconLoad {
    fn symbols(&self) -> &[String] {
        &self.symbols
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Lexicon
    }

    fn classify(&self, text: &str) -> Result<ClassifierVerdict, BackendError> {
        let (fired, score) = self.triggers(text);
        Ok(if fired > 0 {
            ClassifierVerdict {
                label: "loaded".into(),
                confidence: fired as f64 / 3.0,
            }
        } else {
            ClassifierVerdict {
                label: "nonloaded".into(),
                confidence: 1.0 - score.abs() / (2.0 * self.polarity.tau),
            }
        })
    }
}

/// Classifier served over HTTP: `POST {"text": ...}` answered by
/// `{"label": ..., "confidence": ...}`.
///
/// Timeout and retry count default to `ONTO_CLF_TIMEOUT_MS` (5000) and
/// `ONTO_CLF_RETRIES` (1).
pub struct RemoteClassifier {
    url: String,
    symbols: Vec<String>,
    retries: u32,
    agent: ureq::Agent,
}

impl RemoteClassifier {
    pub fn new(url: impl Into<String>, symbols: Vec<String>, timeout: Duration, retries: u32) -> Self {
        RemoteClassifier {
            url: url.into(),
            symbols,
            retries,
            agent: http::agent(timeout),
        }
    }

    pub fn from_env(url: impl Into<String>, symbols: Vec<String>) -> Self {
        let timeout = Duration::from_millis(http::env_u64("ONTO_CLF_TIMEOUT_MS", 5000));
        let retries = http::env_u64("ONTO_CLF_RETRIES", 1) as u32;
        Self::new(url, symbols, timeout, retries)
    }
}

impl ClassifierBackend for RemoteClassifier {
    fn symbols(&self) -> &[String] {
        &self.symbols
    }

    fn kind(&self) -> BackendKind {
        BackendKind::RemoteHttp
    }

    fn classify(&self, text: &str) -> Result<ClassifierVerdict, BackendError> {
        let body = serde_json::to_vec(&serde_json::json!({ "text": text }))
            .expect("request serializes");
        let attempts = self.retries + 1;
        let mut last = PostError::Timeout;
        for _ in 0..attempts {
            match http::post_json(&self.agent, &self.url, &[], &body) {
                Ok(value) => {
                    let verdict: ClassifierVerdict = serde_json::from_value(value)
                        .map_err(|e| BackendError::Malformed(e.to_string()))?;
                    if !self.symbols.contains(&verdict.label) {
                        return Err(BackendError::InvalidLabel(verdict.label));
                    }
                    return Ok(verdict);
                }
                Err(PostError::Decode(m)) => return Err(BackendError::Malformed(m)),
                Err(PostError::Status(code, body)) if code < 500 => {
                    return Err(BackendError::Malformed(format!("HTTP {code}: {body}")))
                }
                Err(e) => last = e,
            }
        }
        Err(BackendError::BackendUnavailable {
            attempts,
            message: last.to_string(),
        })
    }
}

/// Combines a load verdict and a polarity verdict into a profile class.
pub struct PolarityProfileAnnotator {
    load: Arc<dyn ClassifierBackend>,
    polarity: Arc<dyn ClassifierBackend>,
    spec: Arc<OntologySpec>,
}

impl PolarityProfileAnnotator {
    pub fn new(
        load: Arc<dyn ClassifierBackend>,
        polarity: Arc<dyn ClassifierBackend>,
        spec: Arc<OntologySpec>,
    ) -> Result<Self, AnnotateError> {
        if !is_profile_ontology(&spec) {
            return Err(AnnotateError::UnsupportedOntology(spec.concept.clone()));
        }
        Ok(PolarityProfileAnnotator {
            load,
            polarity,
            spec,
        })
    }

    /// Both backends from the bundled lexicons.
    pub fn lexicon(spec: Arc<OntologySpec>) -> Result<Self, AnnotateError> {
        Self::new(
            Arc::new(LexiconLoad::default()),
            Arc::new(LexiconPolarity::default()),
            spec,
        )
    }

    pub fn verdicts(&self, text: &str) -> Result<(ClassifierVerdict, ClassifierVerdict), AnnotateError> {
        if textmetrics::word_tokens(text).is_empty() {
            return Err(AnnotateError::BlankInput);
        }
        Ok((self.load.classify(text)?, self.polarity.classify(text)?))
    }
}

impl Annotator for PolarityProfileAnnotator {
    fn ontology(&self) -> &OntologySpec {
        &self.spec
    }

    fn annotate(&self, text: &str) -> Result<String, AnnotateError> {
        let (load, polarity) = self.verdicts(text)?;
        let values = DescriptorValues::new()
            .with_symbol("load", load.label)
            .with_symbol("polarity", polarity.label);
        Ok(self.spec.classify(&values)?)
    }
}

fn is_profile_ontology(spec: &OntologySpec) -> bool {
    let domain_is = |name: &str, expected: &[&str]| match spec.descriptors.get(name) {
        Some(Descriptor::Categorical(d)) => {
            let mut d: Vec<&str> = d.iter().map(String::as_str).collect();
            d.sort_unstable();
            d == expected
        }
        _ => false,
    };
    spec.descriptors.len() == 2
        && domain_is("load", &LOAD_SYMBOLS)
        && domain_is("polarity", &POLARITY_SYMBOLS)
}

/// Picks the annotator matching an ontology's descriptors. Profile ontologies
/// use remote classifiers when `ONTO_CLF_LOAD_URL` / `ONTO_CLF_POLARITY_URL`
/// are set, and the lexicons otherwise.
pub fn annotator_for(spec: Arc<OntologySpec>) -> Result<Arc<dyn Annotator>, AnnotateError> {
    if spec.uses_text_features() {
        return Ok(Arc::new(FeatureAnnotator::new(spec)?));
    }
    if is_profile_ontology(&spec) {
        let load: Arc<dyn ClassifierBackend> = match std::env::var("ONTO_CLF_LOAD_URL") {
            Ok(url) if !url.is_empty() => {
                Arc::new(RemoteClassifier::from_env(url, symbols(&LOAD_SYMBOLS)))
            }
            _ => Arc::new(LexiconLoad::default()),
        };
        let polarity: Arc<dyn ClassifierBackend> = match std::env::var("ONTO_CLF_POLARITY_URL") {
            Ok(url) if !url.is_empty() => {
                Arc::new(RemoteClassifier::from_env(url, symbols(&POLARITY_SYMBOLS)))
            }
            _ => Arc::new(LexiconPolarity::default()),
        };
        return Ok(Arc::new(PolarityProfileAnnotator::new(load, polarity, spec)?));
    }
    Err(AnnotateError::UnsupportedOntology(spec.concept.clone()))
}

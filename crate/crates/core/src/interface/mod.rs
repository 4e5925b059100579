//! CLI and HTTP service.
//!
//! Both front ends resolve ontologies and strategies through a [`Catalog`]:
//! bundled specs are available under short ids (`cefr`, `polarity`,
//! `harder-only`, `debate`), and any other argument is read as a file path.

pub mod cli;
pub mod service;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::annotators::{annotator_for, AnnotateError, Annotator};
use crate::gateway::{Gateway, MockFixture, MockGateway, OpenAiGateway, TemplateSet};
use crate::ontology::{OntologySpec, ParseError};
use crate::resources;
use crate::strategy::{Strategy, StrategyError, StrategySpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown ontology `{0}`")]
    UnknownOntology(String),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("{path}: {source}")]
    Ontology {
        path: String,
        #[source]
        source: ParseError,
    },
    #[error("ontology `{id}` is inconsistent: {report}")]
    Inconsistent { id: String, report: String },
    #[error("strategy `{id}`: {source}")]
    Strategy {
        id: String,
        #[source]
        source: StrategyError,
    },
    #[error("ontology `{id}`: {source}")]
    Annotator {
        id: String,
        #[source]
        source: AnnotateError,
    },
    #[error("no gateway for concept `{0}`: set ONTO_LLM_URL or ship a mock fixture")]
    NoGateway(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Id derived from a file name: `specs/foo.ontology.json` → `foo`.
pub fn id_from_path(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.split('.').next().unwrap_or(&name).to_string()
}

#[derive(Debug, Clone, Serialize)]
pub struct OntologyInfo {
    pub id: String,
    pub concept: String,
    pub classes: Vec<String>,
    pub ordinal: bool,
    /// Strategies that can drive this ontology.
    pub strategies: Vec<String>,
}

/// Named ontologies and strategies, validated on registration.
#[derive(Clone)]
pub struct Catalog {
    ontologies: BTreeMap<String, Arc<OntologySpec>>,
    strategies: BTreeMap<String, StrategySpec>,
    annotators: BTreeMap<String, Arc<dyn Annotator>>,
}

impl Catalog {
    pub fn empty() -> Self {
        Catalog {
            ontologies: BTreeMap::new(),
            strategies: BTreeMap::new(),
            annotators: BTreeMap::new(),
        }
    }

    /// The two bundled ontologies and strategies.
    pub fn bundled() -> Self {
        let mut c = Self::empty();
        c.add_ontology("cefr", OntologySpec::parse(resources::CEFR_ONTOLOGY).expect("bundled"))
            .expect("bundled CEFR ontology is consistent");
        c.add_ontology("polarity", OntologySpec::parse(resources::POLARITY_ONTOLOGY).expect("bundled"))
            .expect("bundled polarity ontology is consistent");
        c.add_strategy("harder-only", StrategySpec::parse(resources::HARDER_ONLY_STRATEGY).expect("bundled"));
        c.add_strategy("debate", StrategySpec::parse(resources::DEBATE_STRATEGY).expect("bundled"));
        c
    }

    /// Registers an ontology after a consistency check.
    pub fn add_ontology(&mut self, id: &str, spec: OntologySpec) -> Result<(), ConfigError> {
        let report = spec.check_consistency();
        if !report.is_consistent() {
            return Err(ConfigError::Inconsistent {
                id: id.to_string(),
                report: report.to_string(),
            });
        }
        let spec = Arc::new(spec);
        let annotator = annotator_for(Arc::clone(&spec)).map_err(|source| ConfigError::Annotator {
            id: id.to_string(),
            source,
        })?;
        self.ontologies.insert(id.to_string(), spec);
        self.annotators.insert(id.to_string(), annotator);
        Ok(())
    }

    pub fn add_ontology_file(&mut self, path: &Path) -> Result<String, ConfigError> {
        let spec = load_ontology_file(path)?;
        let id = id_from_path(path);
        self.add_ontology(&id, spec)?;
        Ok(id)
    }

    pub fn add_strategy(&mut self, id: &str, spec: StrategySpec) {
        self.strategies.insert(id.to_string(), spec);
    }

    pub fn add_strategy_file(&mut self, path: &Path) -> Result<String, ConfigError> {
        let id = id_from_path(path);
        let spec = StrategySpec::parse(&read(path)?)
            .map_err(|source| ConfigError::Strategy { id: id.clone(), source })?;
        self.add_strategy(&id, spec);
        Ok(id)
    }

    /// Resolves an id, or registers the file at that path.
    pub fn resolve_ontology(&mut self, arg: &str) -> Result<String, ConfigError> {
        if self.ontologies.contains_key(arg) {
            return Ok(arg.to_string());
        }
        let path = Path::new(arg);
        if path.is_file() {
            return self.add_ontology_file(path);
        }
        Err(ConfigError::UnknownOntology(arg.to_string()))
    }

    pub fn resolve_strategy(&mut self, arg: &str) -> Result<String, ConfigError> {
        if self.strategies.contains_key(arg) {
            return Ok(arg.to_string());
        }
        let path = Path::new(arg);
        if path.is_file() {
            return self.add_strategy_file(path);
        }
        Err(ConfigError::UnknownStrategy(arg.to_string()))
    }

    pub fn ontology(&self, id: &str) -> Result<Arc<OntologySpec>, ConfigError> {
        self.ontologies
            .get(id)
            .cloned()
            .ok_or_else(|| ConfigError::UnknownOntology(id.to_string()))
    }

    pub fn annotator(&self, id: &str) -> Result<Arc<dyn Annotator>, ConfigError> {
        self.annotators
            .get(id)
            .cloned()
            .ok_or_else(|| ConfigError::UnknownOntology(id.to_string()))
    }

    /// The strategy `strategy_id` bound to ontology `ontology_id`.
    pub fn strategy(&self, strategy_id: &str, ontology_id: &str) -> Result<Strategy, ConfigError> {
        let spec = self
            .strategies
            .get(strategy_id)
            .cloned()
            .ok_or_else(|| ConfigError::UnknownStrategy(strategy_id.to_string()))?;
        let ontology = self.ontology(ontology_id)?;
        Strategy::new(spec, &ontology).map_err(|source| ConfigError::Strategy {
            id: strategy_id.to_string(),
            source,
        })
    }

    pub fn ontology_infos(&self) -> Vec<OntologyInfo> {
        self.ontologies
            .iter()
            .map(|(id, spec)| OntologyInfo {
                id: id.clone(),
                concept: spec.concept.clone(),
                classes: spec.classes.clone(),
                ordinal: spec.ordinal,
                strategies: self
                    .strategies
                    .iter()
                    .filter(|(_, s)| Strategy::new((*s).clone(), spec).is_ok())
                    .map(|(k, _)| k.clone())
                    .collect(),
            })
            .collect()
    }

    pub fn strategy_ids(&self) -> Vec<String> {
        self.strategies.keys().cloned().collect()
    }
}

/// Parses an ontology file, or a bundled id.
pub fn load_ontology_file(path: &Path) -> Result<OntologySpec, ConfigError> {
    OntologySpec::parse(&read(path)?).map_err(|source| ConfigError::Ontology {
        path: path.display().to_string(),
        source,
    })
}

/// Chooses the chat backend for each concept: one shared remote endpoint, or
/// the bundled mock fixtures.
#[derive(Clone, Default)]
pub struct GatewayPool {
    shared: Option<Arc<dyn Gateway>>,
    per_concept: BTreeMap<String, Arc<dyn Gateway>>,
}

impl GatewayPool {
    /// Mock gateways built from the bundled fixtures.
    pub fn mocks() -> Self {
        let mut pool = GatewayPool::default();
        for f in [MockFixture::cefr(), MockFixture::polarity()] {
            let concept = f.concept.clone();
            pool.per_concept
                .insert(concept, Arc::new(MockGateway::from_fixture(f)));
        }
        pool
    }

    /// A remote endpoint when `ONTO_LLM_URL` is set, the mocks otherwise.
    pub fn from_env() -> Self {
        match OpenAiGateway::from_env() {
            Ok(g) => Self::single(Arc::new(g)),
            Err(_) => Self::mocks(),
        }
    }

    pub fn single(gateway: Arc<dyn Gateway>) -> Self {
        GatewayPool {
            shared: Some(gateway),
            per_concept: BTreeMap::new(),
        }
    }

    pub fn with(mut self, concept: &str, gateway: Arc<dyn Gateway>) -> Self {
        self.per_concept.insert(concept.to_string(), gateway);
        self
    }

    pub fn get(&self, concept: &str) -> Result<Arc<dyn Gateway>, ConfigError> {
        self.per_concept
            .get(concept)
            .or(self.shared.as_ref())
            .cloned()
            .ok_or_else(|| ConfigError::NoGateway(concept.to_string()))
    }
}

/// Service configuration.
#[derive(Debug, Clone)]
pub struct AppConfig {
    pub ontology_files: Vec<PathBuf>,
    pub strategy_files: Vec<PathBuf>,
    pub template_file: Option<PathBuf>,
    pub template_id: String,
    pub listen: String,
    /// Transcript directory; sessions are memory-only when absent.
    pub store_dir: Option<PathBuf>,
    pub cors_origins: Vec<String>,
    pub max_retries_on_noncompliance: u32,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            ontology_files: Vec::new(),
            strategy_files: Vec::new(),
            template_file: None,
            template_id: "fine-tuned".into(),
            listen: std::env::var("ONTO_LISTEN").unwrap_or_else(|_| "127.0.0.1:8080".into()),
            store_dir: None,
            cors_origins: Vec::new(),
            max_retries_on_noncompliance: 0,
        }
    }
}

impl AppConfig {
    /// Bundled specs plus the configured files, all validated.
    pub fn catalog(&self) -> Result<Catalog, ConfigError> {
        let mut c = Catalog::bundled();
        for p in &self.ontology_files {
            c.add_ontology_file(p)?;
        }
        for p in &self.strategy_files {
            c.add_strategy_file(p)?;
        }
        Ok(c)
    }

    pub fn templates(&self) -> Result<TemplateSet, ConfigError> {
        let set = match &self.template_file {
            Some(p) => TemplateSet::parse(&read(p)?).map_err(|e| ConfigError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })?,
            None => TemplateSet::default(),
        };
        set.get(&self.template_id).map_err(|e| ConfigError::Io {
            path: "templates".into(),
            message: e.to_string(),
        })?;
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_catalog() {
        let c = Catalog::bundled();
        let infos = c.ontology_infos();
        assert_eq!(infos.len(), 2);
        let cefr = infos.iter().find(|i| i.id == "cefr").unwrap();
        assert_eq!(cefr.strategies, ["harder-only"]);
        let pol = infos.iter().find(|i| i.id == "polarity").unwrap();
        assert_eq!(pol.strategies, ["debate"]);
        assert!(c.strategy("debate", "cefr").is_err());
        assert!(c.strategy("harder-only", "cefr").is_ok());
        assert_eq!(id_from_path(Path::new("a/b/foo.ontology.json")), "foo");
    }

    #[test]
    fn gateway_pool_falls_back() {
        let pool = GatewayPool::mocks();
        assert!(pool.get("CEFR").is_ok());
        assert!(matches!(pool.get("Other"), Err(ConfigError::NoGateway(_))));
    }

    #[test]
    fn mock_fixture_replies_annotate_to_their_class() {
        let c = Catalog::bundled();
        for (id, fixture) in [("cefr", MockFixture::cefr()), ("polarity", MockFixture::polarity())] {
            let annotator = c.annotator(id).unwrap();
            assert_eq!(fixture.replies.len(), annotator.ontology().classes.len());
            for (class, text) in &fixture.replies {
                assert_eq!(&annotator.annotate(text).unwrap(), class, "{id}: {text}");
            }
        }
    }
}

//! Conversation strategies: which class the next agent utterance should
//! belong to, given the class detected on the latest user utterance.
//!
//! Strategies are data. Two kinds exist:
//!
//! * `ordinal-max`: the target is the highest class the user has produced so
//!   far ("harder-only"). Requires an ordinal ontology.
//! * `transition-table`: a total map from detected class to target class.
//!
//! Only user turns may be fed to [`Strategy::next_target`]; the agent's own
//! output never moves the state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::OntologySpec;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrategyError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("transition table has no entry for class `{0}`")]
    IncompleteTable(String),
    #[error("transition table maps `{from}` to unknown class `{to}`")]
    UnknownTarget { from: String, to: String },
    #[error("ordinal-max strategy requires an ordinal ontology")]
    NotOrdinal,
    #[error("invalid strategy document: {0}")]
    Syntax(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategySpec {
    OrdinalMax,
    TransitionTable { table: BTreeMap<String, String> },
}

impl StrategySpec {
    pub fn parse(document: &str) -> Result<Self, StrategyError> {
        serde_json::from_str(document).map_err(|e| StrategyError::Syntax(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("strategy serializes")
    }
}

/// The debate strategy over the six polarity-profile classes.
pub fn default_polarity_table() -> StrategySpec {
    let table = [
        ("L+", "L-"),
        ("L-", "¬L-"),
        ("L0", "L+"),
        ("¬L+", "¬L-"),
        ("¬L-", "¬L+"),
        ("¬L0", "¬L-"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    StrategySpec::TransitionTable { table }
}

/// Per-conversation memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyState {
    /// Highest class seen so far; `None` for stateless strategies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_max: Option<String>,
}

/// A strategy bound to the class list of one ontology.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    spec: StrategySpec,
    classes: Vec<String>,
}

impl Strategy {
    pub fn new(spec: StrategySpec, ontology: &OntologySpec) -> Result<Self, StrategyError> {
        match &spec {
            StrategySpec::OrdinalMax => {
                if !ontology.ordinal {
                    return Err(StrategyError::NotOrdinal);
                }
            }
            StrategySpec::TransitionTable { table } => {
                for class in &ontology.classes {
                    let to = table
                        .get(class)
                        .ok_or_else(|| StrategyError::IncompleteTable(class.clone()))?;
                    if !ontology.has_class(to) {
                        return Err(StrategyError::UnknownTarget {
                            from: class.clone(),
                            to: to.clone(),
                        });
                    }
                }
                if let Some(extra) = table.keys().find(|k| !ontology.has_class(k)) {
                    return Err(StrategyError::UnknownClass(extra.clone()));
                }
            }
        }
        Ok(Strategy {
            spec,
            classes: ontology.classes.clone(),
        })
    }

    pub fn spec(&self) -> &StrategySpec {
        &self.spec
    }

    pub fn initial_state(&self) -> StrategyState {
        match self.spec {
            StrategySpec::OrdinalMax => StrategyState {
                current_max: Some(self.classes[0].clone()),
            },
            StrategySpec::TransitionTable { .. } => StrategyState { current_max: None },
        }
    }

    fn rank(&self, class: &str) -> Result<usize, StrategyError> {
        self.classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| StrategyError::UnknownClass(class.to_string()))
    }

    pub fn next_target(
        &self,
        detected: &str,
        state: &StrategyState,
    ) -> Result<(String, StrategyState), StrategyError> {
        let detected_rank = self.rank(detected)?;
        match &self.spec {
            StrategySpec::OrdinalMax => {
                let current = state.current_max.as_deref().unwrap_or(&self.classes[0]);
                let target = if self.rank(current)? >= detected_rank {
                    current.to_string()
                } else {
                    detected.to_string()
                };
                let next = StrategyState {
                    current_max: Some(target.clone()),
                };
                Ok((target, next))
            }
            StrategySpec::TransitionTable { table } => Ok((table[detected].clone(), state.clone())),
        }
    }

    /// Targets for a whole sequence of detected user classes.
    pub fn trace<S: AsRef<str>>(&self, detected: &[S]) -> Result<Vec<String>, StrategyError> {
        let mut state = self.initial_state();
        let mut out = Vec::with_capacity(detected.len());
        for d in detected {
            let (target, next) = self.next_target(d.as_ref(), &state)?;
            out.push(target);
            state = next;
        }
        Ok(out)
    }
}

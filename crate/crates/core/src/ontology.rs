//! Class definitions over utterance descriptors, and the reasoning needed to
//! use them: class inference for a descriptor point, and a consistency check
//! proving the rules partition the descriptor space.
//!
//! A class is a disjunction of rules; a rule is a conjunction of predicates.
//! Numeric predicates are intervals (by default `[lo, hi)`, matching the
//! `< t` / `>= t` split convention of decision trees), categorical predicates
//! are symbol equalities. This is the whole fragment; there are no roles, no
//! subsumption, and the world is closed.
//!
//! # Document format
//!
//! ```json
//! {
//!   "concept": "CEFR",
//!   "classes": ["A1", "A2"],
//!   "ordinal": true,
//!   "descriptors": { "fkgl": "numeric", "load": { "categorical": ["loaded", "nonloaded"] } },
//!   "rules": [
//!     { "label": "A1", "predicates": [ { "feature": "fkgl", "hi": 4.5 } ] },
//!     { "label": "A2", "predicates": [ { "feature": "fkgl", "lo": 4.5 } ] }
//!   ]
//! }
//! ```
//!
//! An absent bound is infinite. `lo_closed` (default `true`) and `hi_closed`
//! (default `false`) override the interval convention.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textmetrics::FeatureVector;

/// Absolute sentinel probed on both sides of every numeric axis.
pub const SENTINEL: f64 = 1e12;

/// Relative offset used to probe either side of a rule boundary.
pub const BOUNDARY_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown descriptor `{name}`{}", at_line(*.line))]
    UnknownDescriptor { name: String, line: Option<usize> },
    #[error("unknown class `{name}`{}", at_line(*.line))]
    UnknownClass { name: String, line: Option<usize> },
    #[error("symbol `{symbol}` is not in the domain of `{name}`{}", at_line(*.line))]
    UnknownSymbol {
        name: String,
        symbol: String,
        line: Option<usize>,
    },
    #[error("invalid predicate on `{name}`{}: {message}", at_line(*.line))]
    InvalidPredicate {
        name: String,
        message: String,
        line: Option<usize>,
    },
    #[error("ontology declares no rules")]
    EmptyRuleSet,
    #[error("ontology must declare at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("class `{0}` declared twice")]
    DuplicateClass(String),
}

fn at_line(line: Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("no rule matches the descriptor values")]
    NoRuleMatches,
    #[error("descriptor values match rules of several classes: {labels:?}")]
    AmbiguousMatch { labels: Vec<String> },
    #[error("descriptor `{0}` has no value")]
    MissingDescriptor(String),
    #[error("symbol `{symbol}` is not in the domain of `{name}`")]
    UnknownSymbol { name: String, symbol: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Descriptor {
    Numeric,
    Categorical(Vec<String>),
}

/// Values of the descriptors of one utterance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DescriptorValues {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub numeric: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub categorical: BTreeMap<String, String>,
}

impl DescriptorValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_numeric(mut self, name: impl Into<String>, value: f64) -> Self {
        self.numeric.insert(name.into(), value);
        self
    }

    pub fn with_symbol(mut self, name: impl Into<String>, symbol: impl Into<String>) -> Self {
        self.categorical.insert(name.into(), symbol.into());
        self
    }
}

impl From<&FeatureVector> for DescriptorValues {
    fn from(f: &FeatureVector) -> Self {
        DescriptorValues {
            numeric: f.named().map(|(n, v)| (n.to_string(), v)).collect(),
            categorical: BTreeMap::new(),
        }
    }
}

impl fmt::Display for DescriptorValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (name, v) in &self.numeric {
            if !first {
                f.write_str(", ")?;
            }
            write!(f, "{name}={v}")?;
            first = false;
        }
        for (name, s) in &self.categorical {
            if !first {
                f.write_str(", ")?;
            }
            write!(f, "{name}={s}")?;
            first = false;
        }
        Ok(())
    }
}

/// A (possibly unbounded) real interval over one numeric descriptor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub const FULL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        lo_closed: false,
        hi_closed: false,
    };

    /// `[lo, hi)`.
    pub fn half_open(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_closed: lo.is_finite(),
            hi_closed: false,
        }
    }

    /// `x < t`.
    pub fn below(t: f64) -> Self {
        Interval::half_open(f64::NEG_INFINITY, t)
    }

    /// `x >= t`.
    pub fn at_least(t: f64) -> Self {
        Interval::half_open(t, f64::INFINITY)
    }

    fn normalized(mut self) -> Self {
        if !self.lo.is_finite() {
            self.lo_closed = false;
        }
        if !self.hi.is_finite() {
            self.hi_closed = false;
        }
        self
    }

    pub fn is_empty(&self) -> bool {
        if self.lo.is_nan() || self.hi.is_nan() {
            return true;
        }
        !(self.lo < self.hi || (self.lo == self.hi && self.lo_closed && self.hi_closed))
    }

    pub fn contains(&self, x: f64) -> bool {
        let above_lo = x > self.lo || (self.lo_closed && x == self.lo);
        let below_hi = x < self.hi || (self.hi_closed && x == self.hi);
        above_lo && below_hi
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let (lo, lo_closed) = match self.lo.partial_cmp(&other.lo) {
            Some(std::cmp::Ordering::Greater) => (self.lo, self.lo_closed),
            Some(std::cmp::Ordering::Less) => (other.lo, other.lo_closed),
            _ => (self.lo, self.lo_closed && other.lo_closed),
        };
        let (hi, hi_closed) = match self.hi.partial_cmp(&other.hi) {
            Some(std::cmp::Ordering::Less) => (self.hi, self.hi_closed),
            Some(std::cmp::Ordering::Greater) => (other.hi, other.hi_closed),
            _ => (self.hi, self.hi_closed && other.hi_closed),
        };
        Interval {
            lo,
            hi,
            lo_closed,
            hi_closed,
        }
        .normalized()
    }

    /// Some point of a non-empty interval.
    pub fn sample_point(&self) -> f64 {
        let step = |x: f64| 1f64.max(x.abs() * 1e-6);
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (false, false) => 0.0,
            (false, true) if self.hi_closed => self.hi,
            (false, true) => self.hi - step(self.hi),
            (true, false) if self.lo_closed => self.lo,
            (true, false) => self.lo + step(self.lo),
            (true, true) => {
                if self.lo_closed {
                    self.lo
                } else if self.hi_closed {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) / 2.0
                }
            }
        }
    }

    fn bounds(&self) -> impl Iterator<Item = f64> {
        [self.lo, self.hi].into_iter().filter(|b| b.is_finite())
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo_closed { '[' } else { '(' };
        let close = if self.hi_closed { ']' } else { ')' };
        let lo = if self.lo.is_finite() { self.lo.to_string() } else { "-inf".into() };
        let hi = if self.hi.is_finite() { self.hi.to_string() } else { "+inf".into() };
        write!(f, "{open}{lo}, {hi}{close}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Interval { feature: String, range: Interval },
    Equals { name: String, symbol: String },
}

impl Predicate {
    pub fn descriptor(&self) -> &str {
        match self {
            Predicate::Interval { feature, .. } => feature,
            Predicate::Equals { name, .. } => name,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Interval { feature, range } => write!(f, "{feature} in {range}"),
            Predicate::Equals { name, symbol } => write!(f, "{name} = {symbol}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub label: String,
    pub predicates: Vec<Predicate>,
}

impl Rule {
    pub fn interval(&self, feature: &str) -> Option<&Interval> {
        self.predicates.iter().find_map(|p| match p {
            Predicate::Interval { feature: f, range } if f == feature => Some(range),
            _ => None,
        })
    }

    pub fn symbol(&self, name: &str) -> Option<&str> {
        self.predicates.iter().find_map(|p| match p {
            Predicate::Equals { name: n, symbol } if n == name => Some(symbol.as_str()),
            _ => None,
        })
    }

    /// Missing descriptors count as non-matching; `classify` checks coverage
    /// before calling this.
    pub fn matches(&self, values: &DescriptorValues) -> bool {
        self.predicates.iter().all(|p| match p {
            Predicate::Interval { feature, range } => values
                .numeric
                .get(feature)
                .is_some_and(|&x| range.contains(x)),
            Predicate::Equals { name, symbol } => {
                values.categorical.get(name).is_some_and(|s| s == symbol)
            }
        })
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.predicates.is_empty() {
            return write!(f, "true -> {}", self.label);
        }
        let parts: Vec<String> = self.predicates.iter().map(ToString::to_string).collect();
        write!(f, "{} -> {}", parts.join(" and "), self.label)
    }
}

/// A concept and the rules that define its classes.
#[derive(Debug, Clone, PartialEq)]
pub struct OntologySpec {
    pub concept: String,
    pub classes: Vec<String>,
    pub ordinal: bool,
    pub descriptors: BTreeMap<String, Descriptor>,
    pub rules: Vec<Rule>,
}

// ---- document (serde) form -------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyDocument {
    concept: String,
    classes: Vec<String>,
    #[serde(default)]
    ordinal: bool,
    descriptors: BTreeMap<String, Descriptor>,
    rules: Vec<RuleDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDocument {
    label: String,
    #[serde(default)]
    predicates: Vec<PredicateDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum PredicateDocument {
    Equals(EqualsDocument),
    Interval(IntervalDocument),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EqualsDocument {
    name: String,
    equals: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalDocument {
    feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo_closed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi_closed: Option<bool>,
}

/// 1-based line of the first quoted occurrence of `needle` in `doc`.
fn locate(doc: Option<&str>, needle: &str) -> Option<usize> {
    let doc = doc?;
    let quoted = serde_json::to_string(needle).ok()?;
    let at = doc.find(&quoted)?;
    Some(doc[..at].matches('\n').count() + 1)
}

impl OntologySpec {
    /// Builds a spec from parts, enforcing the same invariants as `parse`.
    pub fn new(
        concept: impl Into<String>,
        classes: Vec<String>,
        ordinal: bool,
        descriptors: BTreeMap<String, Descriptor>,
        rules: Vec<Rule>,
    ) -> Result<Self, ParseError> {
        let spec = OntologySpec {
            concept: concept.into(),
            classes,
            ordinal,
            descriptors,
            rules,
        };
        spec.validate(None)?;
        Ok(spec)
    }

    pub fn parse(document: &str) -> Result<Self, ParseError> {
        let doc: OntologyDocument =
            serde_json::from_str(document).map_err(|e| ParseError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        let src = Some(document);

        let mut rules = Vec::with_capacity(doc.rules.len());
        for rd in doc.rules {
            let mut predicates: Vec<Predicate> = Vec::new();
            for pd in rd.predicates {
                let pred = match pd {
                    PredicateDocument::Equals(EqualsDocument { name, equals }) => {
                        Predicate::Equals {
                            name,
                            symbol: equals,
                        }
                    }
                    PredicateDocument::Interval(IntervalDocument {
                        feature,
                        lo,
                        hi,
                        lo_closed,
                        hi_closed,
                    }) => {
                        let lo_v = lo.unwrap_or(f64::NEG_INFINITY);
                        let hi_v = hi.unwrap_or(f64::INFINITY);
                        let range = Interval {
                            lo: lo_v,
                            hi: hi_v,
                            lo_closed: lo_closed.unwrap_or(true),
                            hi_closed: hi_closed.unwrap_or(false),
                        }
                        .normalized();
                        Predicate::Interval { feature, range }
                    }
                };
                merge_predicate(&mut predicates, pred, src)?;
            }
            rules.push(Rule {
                label: rd.label,
                predicates,
            });
        }

        let spec = OntologySpec {
            concept: doc.concept,
            classes: doc.classes,
            ordinal: doc.ordinal,
            descriptors: doc.descriptors,
            rules,
        };
        spec.validate(src)?;
        Ok(spec)
    }

    fn validate(&self, src: Option<&str>) -> Result<(), ParseError> {
        if self.classes.len() < 2 {
            return Err(ParseError::TooFewClasses(self.classes.len()));
        }
        let mut seen = BTreeSet::new();
        for c in &self.classes {
            if !seen.insert(c.as_str()) {
                return Err(ParseError::DuplicateClass(c.clone()));
            }
        }
        if self.rules.is_empty() {
            return Err(ParseError::EmptyRuleSet);
        }
        for rule in &self.rules {
            if !self.classes.contains(&rule.label) {
                return Err(ParseError::UnknownClass {
                    line: locate(src, &rule.label),
                    name: rule.label.clone(),
                });
            }
            let mut names = BTreeSet::new();
            for p in &rule.predicates {
                let name = p.descriptor();
                if !names.insert(name) {
                    return Err(ParseError::InvalidPredicate {
                        name: name.to_string(),
                        message: "descriptor constrained twice in one rule".into(),
                        line: locate(src, name),
                    });
                }
                match (p, self.descriptors.get(name)) {
                    (_, None) => {
                        return Err(ParseError::UnknownDescriptor {
                            name: name.to_string(),
                            line: locate(src, name),
                        })
                    }
                    (Predicate::Interval { range, .. }, Some(Descriptor::Numeric)) => {
                        if range.is_empty() {
                            return Err(ParseError::InvalidPredicate {
                                name: name.to_string(),
                                message: format!("empty interval {range}"),
                                line: locate(src, name),
                            });
                        }
                    }
                    (Predicate::Equals { symbol, .. }, Some(Descriptor::Categorical(domain))) => {
                        if !domain.contains(symbol) {
                            return Err(ParseError::UnknownSymbol {
                                name: name.to_string(),
                                symbol: symbol.clone(),
                                line: locate(src, symbol),
                            });
                        }
                    }
                    _ => {
                        return Err(ParseError::InvalidPredicate {
                            name: name.to_string(),
                            message: "predicate kind does not match descriptor kind".into(),
                            line: locate(src, name),
                        })
                    }
                }
            }
        }
        for (name, d) in &self.descriptors {
            if let Descriptor::Categorical(domain) = d {
                if domain.is_empty() {
                    return Err(ParseError::InvalidPredicate {
                        name: name.clone(),
                        message: "categorical descriptor with empty domain".into(),
                        line: locate(src, name),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = OntologyDocument {
            concept: self.concept.clone(),
            classes: self.classes.clone(),
            ordinal: self.ordinal,
            descriptors: self.descriptors.clone(),
            rules: self
                .rules
                .iter()
                .map(|r| RuleDocument {
                    label: r.label.clone(),
                    predicates: r
                        .predicates
                        .iter()
                        .map(|p| match p {
                            Predicate::Equals { name, symbol } => {
                                PredicateDocument::Equals(EqualsDocument {
                                    name: name.clone(),
                                    equals: symbol.clone(),
                                })
                            }
                            Predicate::Interval { feature, range } => {
                                PredicateDocument::Interval(IntervalDocument {
                                    feature: feature.clone(),
                                    lo: range.lo.is_finite().then_some(range.lo),
                                    hi: range.hi.is_finite().then_some(range.hi),
                                    lo_closed: (range.lo.is_finite() && !range.lo_closed)
                                        .then_some(false),
                                    hi_closed: (range.hi.is_finite() && range.hi_closed)
                                        .then_some(true),
                                })
                            }
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("ontology document serializes")
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.class_index(class).is_some()
    }

    /// Descriptors referenced by at least one rule.
    pub fn mentioned_descriptors(&self) -> BTreeSet<&str> {
        self.rules
            .iter()
            .flat_map(|r| r.predicates.iter().map(Predicate::descriptor))
            .collect()
    }

    /// Whether every numeric descriptor is one of the six text features.
    pub fn uses_text_features(&self) -> bool {
        !self.descriptors.is_empty()
            && self.descriptors.iter().all(|(n, d)| {
                *d == Descriptor::Numeric && FeatureVector::NAMES.contains(&n.as_str())
            })
    }

    pub fn classify(&self, values: &DescriptorValues) -> Result<String, ClassifyError> {
        for name in self.mentioned_descriptors() {
            match &self.descriptors[name] {
                Descriptor::Numeric => {
                    if !values.numeric.contains_key(name) {
                        return Err(ClassifyError::MissingDescriptor(name.to_string()));
                    }
                }
                Descriptor::Categorical(domain) => match values.categorical.get(name) {
                    None => return Err(ClassifyError::MissingDescriptor(name.to_string())),
                    Some(s) if !domain.contains(s) => {
                        return Err(ClassifyError::UnknownSymbol {
                            name: name.to_string(),
                            symbol: s.clone(),
                        })
                    }
                    Some(_) => {}
                },
            }
        }
        let mut labels: Vec<&str> = Vec::new();
        for rule in &self.rules {
            if rule.matches(values) && !labels.contains(&rule.label.as_str()) {
                labels.push(&rule.label);
            }
        }
        match labels.as_slice() {
            [] => Err(ClassifyError::NoRuleMatches),
            [one] => Ok(one.to_string()),
            many => Err(ClassifyError::AmbiguousMatch {
                labels: many.iter().map(|s| s.to_string()).collect(),
            }),
        }
    }

    fn default_value(&self, name: &str, values: &mut DescriptorValues) {
        match &self.descriptors[name] {
            Descriptor::Numeric => {
                values.numeric.insert(name.to_string(), 0.0);
            }
            Descriptor::Categorical(domain) => {
                values
                    .categorical
                    .insert(name.to_string(), domain[0].clone());
            }
        }
    }

    /// Pairwise disjointness and exhaustiveness, with a witness per finding.
    pub fn check_consistency(&self) -> ConsistencyReport {
        ConsistencyReport {
            overlaps: self.find_overlaps(),
            gaps: self.find_gaps(),
        }
    }

    fn find_overlaps(&self) -> Vec<Overlap> {
        let mut out = Vec::new();
        for (i, a) in self.rules.iter().enumerate() {
            for (j, b) in self.rules.iter().enumerate().skip(i + 1) {
                if a.label == b.label {
                    continue;
                }
                if let Some(witness) = self.intersection_witness(a, b) {
                    out.push(Overlap {
                        first: i,
                        second: j,
                        labels: (a.label.clone(), b.label.clone()),
                        witness,
                    });
                }
            }
        }
        out
    }

    fn intersection_witness(&self, a: &Rule, b: &Rule) -> Option<DescriptorValues> {
        let mut witness = DescriptorValues::new();
        for (name, d) in &self.descriptors {
            match d {
                Descriptor::Numeric => {
                    let ra = a.interval(name).copied().unwrap_or(Interval::FULL);
                    let rb = b.interval(name).copied().unwrap_or(Interval::FULL);
                    let both = ra.intersect(&rb);
                    if both.is_empty() {
                        return None;
                    }
                    witness.numeric.insert(name.clone(), both.sample_point());
                }
                Descriptor::Categorical(domain) => {
                    let symbol = match (a.symbol(name), b.symbol(name)) {
                        (Some(x), Some(y)) if x != y => return None,
                        (Some(x), _) | (None, Some(x)) => x.to_string(),
                        (None, None) => domain[0].clone(),
                    };
                    witness.categorical.insert(name.clone(), symbol);
                }
            }
        }
        Some(witness)
    }

    fn probe_values(&self, name: &str) -> Vec<Probe> {
        match &self.descriptors[name] {
            Descriptor::Categorical(domain) => {
                domain.iter().cloned().map(Probe::Symbol).collect()
            }
            Descriptor::Numeric => {
                let mut bounds: Vec<f64> = self
                    .rules
                    .iter()
                    .filter_map(|r| r.interval(name))
                    .flat_map(Interval::bounds)
                    .collect();
                if bounds.is_empty() {
                    return vec![Probe::Number(0.0)];
                }
                bounds.sort_by(f64::total_cmp);
                bounds.dedup();
                let mut probes = vec![-SENTINEL, SENTINEL];
                for &b in &bounds {
                    let eps = BOUNDARY_EPSILON * b.abs().max(1.0);
                    probes.extend([b - eps, b, b + eps]);
                }
                for w in bounds.windows(2) {
                    probes.push(w[0] + (w[1] - w[0]) / 2.0);
                }
                probes.sort_by(f64::total_cmp);
                probes.dedup();
                probes.into_iter().map(Probe::Number).collect()
            }
        }
    }

    /// Sweeps the probe grid descriptor by descriptor, keeping only the rules
    /// still compatible with the partial assignment. Probes leading to the
    /// same compatible-rule set are equivalent, so one representative each is
    /// explored.
    fn find_gaps(&self) -> Vec<Gap> {
        let names: Vec<&str> = self.descriptors.keys().map(String::as_str).collect();
        let probes: Vec<Vec<Probe>> = names.iter().map(|n| self.probe_values(n)).collect();
        let mut gaps = Vec::new();
        let mut assignment = DescriptorValues::new();
        let active: Vec<usize> = (0..self.rules.len()).collect();
        self.sweep(&names, &probes, 0, &active, &mut assignment, &mut gaps);
        gaps
    }

    fn sweep(
        &self,
        names: &[&str],
        probes: &[Vec<Probe>],
        depth: usize,
        active: &[usize],
        assignment: &mut DescriptorValues,
        gaps: &mut Vec<Gap>,
    ) {
        if depth == names.len() {
            return;
        }
        let name = names[depth];
        let mut groups: BTreeMap<Vec<usize>, &Probe> = BTreeMap::new();
        for probe in &probes[depth] {
            let compatible: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&r| probe.admitted_by(&self.rules[r], name))
                .collect();
            groups.entry(compatible).or_insert(probe);
        }
        for (compatible, probe) in groups {
            probe.assign(name, assignment);
            if compatible.is_empty() {
                let mut witness = assignment.clone();
                for rest in &names[depth + 1..] {
                    self.default_value(rest, &mut witness);
                }
                gaps.push(Gap { witness });
            } else {
                self.sweep(names, probes, depth + 1, &compatible, assignment, gaps);
            }
        }
        assignment.numeric.remove(name);
        assignment.categorical.remove(name);
    }
}

fn merge_predicate(
    predicates: &mut Vec<Predicate>,
    pred: Predicate,
    src: Option<&str>,
) -> Result<(), ParseError> {
    let existing = predicates
        .iter_mut()
        .find(|p| p.descriptor() == pred.descriptor());
    match (existing, pred) {
        (None, pred) => predicates.push(pred),
        (
            Some(Predicate::Interval { range, .. }),
            Predicate::Interval {
                feature,
                range: other,
            },
        ) => {
            let both = range.intersect(&other);
            if both.is_empty() {
                return Err(ParseError::InvalidPredicate {
                    line: locate(src, &feature),
                    name: feature,
                    message: "conjoined intervals do not intersect".into(),
                });
            }
            *range = both;
        }
        (Some(Predicate::Equals { symbol, .. }), Predicate::Equals { name, symbol: other }) => {
            if *symbol != other {
                return Err(ParseError::InvalidPredicate {
                    line: locate(src, &name),
                    name,
                    message: "conjoined equalities contradict".into(),
                });
            }
        }
        (Some(_), pred) => {
            let name = pred.descriptor().to_string();
            return Err(ParseError::InvalidPredicate {
                line: locate(src, &name),
                name,
                message: "mixed interval and equality predicates".into(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum Probe {
    Number(f64),
    Symbol(String),
}

impl Probe {
    fn admitted_by(&self, rule: &Rule, name: &str) -> bool {
        match self {
            Probe::Number(x) => rule.interval(name).is_none_or(|r| r.contains(*x)),
            Probe::Symbol(s) => rule.symbol(name).is_none_or(|sym| sym == s),
        }
    }

    fn assign(&self, name: &str, values: &mut DescriptorValues) {
        match self {
            Probe::Number(x) => {
                values.numeric.insert(name.to_string(), *x);
            }
            Probe::Symbol(s) => {
                values.categorical.insert(name.to_string(), s.clone());
            }
        }
    }
}

/// Two rules with different labels that can fire on the same point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Overlap {
    pub first: usize,
    pub second: usize,
    pub labels: (String, String),
    pub witness: DescriptorValues,
}

/// A descriptor point that no rule covers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub witness: DescriptorValues,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub overlaps: Vec<Overlap>,
    pub gaps: Vec<Gap>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.overlaps.is_empty() && self.gaps.is_empty()
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_consistent() {
            return writeln!(f, "consistent");
        }
        writeln!(
            f,
            "inconsistent: {} overlap(s), {} gap(s)",
            self.overlaps.len(),
            self.gaps.len()
        )?;
        for o in &self.overlaps {
            writeln!(
                f,
                "  overlap: rule #{} ({}) and rule #{} ({}) both match {}",
                o.first, o.labels.0, o.second, o.labels.1, o.witness
            )?;
        }
        for g in &self.gaps {
            writeln!(f, "  gap: no rule matches {}", g.witness)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resources;

    fn f0_spec(rules: Vec<(Interval, &str)>) -> OntologySpec {
        OntologySpec::new(
            "T",
            vec!["A".into(), "B".into()],
            false,
            BTreeMap::from([("f0".to_string(), Descriptor::Numeric)]),
            rules
                .into_iter()
                .map(|(range, label)| Rule {
                    label: label.into(),
                    predicates: vec![Predicate::Interval {
                        feature: "f0".into(),
                        range,
                    }],
                })
                .collect(),
        )
        .unwrap()
    }

    fn at(x: f64) -> DescriptorValues {
        DescriptorValues::new().with_numeric("f0", x)
    }

    #[test]
    fn classify_threshold_split() {
        let spec = f0_spec(vec![(Interval::below(6.0), "A"), (Interval::at_least(6.0), "B")]);
        assert_eq!(spec.classify(&at(2.0)).unwrap(), "A");
        assert_eq!(spec.classify(&at(6.0)).unwrap(), "B");
        assert_eq!(spec.classify(&at(5.999)).unwrap(), "A");
        assert!(spec.check_consistency().is_consistent());
    }

    #[test]
    fn classify_reports_missing_and_nan() {
        let spec = f0_spec(vec![(Interval::below(6.0), "A"), (Interval::at_least(6.0), "B")]);
        assert_eq!(
            spec.classify(&DescriptorValues::new()),
            Err(ClassifyError::MissingDescriptor("f0".into()))
        );
        assert_eq!(spec.classify(&at(f64::NAN)), Err(ClassifyError::NoRuleMatches));
    }

    #[test]
    fn overlap_detected_with_witness() {
        let spec = f0_spec(vec![(Interval::below(6.0), "A"), (Interval::below(3.0), "B")]);
        let report = spec.check_consistency();
        assert_eq!(report.overlaps.len(), 1);
        let w = &report.overlaps[0].witness;
        assert_eq!(w.numeric["f0"], 2.0);
        assert!(matches!(
            spec.classify(w),
            Err(ClassifyError::AmbiguousMatch { .. })
        ));
        // [6, inf) is uncovered
        assert_eq!(report.gaps.len(), 1);
        assert_eq!(
            spec.classify(&report.gaps[0].witness),
            Err(ClassifyError::NoRuleMatches)
        );
    }

    #[test]
    fn same_label_overlap_is_fine() {
        let spec = f0_spec(vec![
            (Interval::below(6.0), "A"),
            (Interval::below(3.0), "A"),
            (Interval::at_least(6.0), "B"),
        ]);
        assert!(spec.check_consistency().is_consistent());
    }

    #[test]
    fn gap_between_touching_open_bounds() {
        let open_lo = Interval {
            lo: 6.0,
            hi: f64::INFINITY,
            lo_closed: false,
            hi_closed: false,
        };
        let spec = f0_spec(vec![(Interval::below(6.0), "A"), (open_lo, "B")]);
        let report = spec.check_consistency();
        assert!(report.overlaps.is_empty());
        assert_eq!(report.gaps.len(), 1);
        assert_eq!(report.gaps[0].witness.numeric["f0"], 6.0);
    }

    #[test]
    fn interval_algebra() {
        let a = Interval::half_open(0.0, 5.0);
        let b = Interval::half_open(5.0, 9.0);
        assert!(a.intersect(&b).is_empty());
        let c = Interval::half_open(3.0, 9.0);
        let both = a.intersect(&c);
        assert_eq!((both.lo, both.hi, both.lo_closed, both.hi_closed), (3.0, 5.0, true, false));
        assert!(both.contains(both.sample_point()));
        assert!(Interval::FULL.contains(-1e300));
        let point = Interval {
            lo: 2.0,
            hi: 2.0,
            lo_closed: true,
            hi_closed: true,
        };
        assert!(!point.is_empty());
        assert_eq!(point.sample_point(), 2.0);
    }

    #[test]
    fn parse_bundled_cefr() {
        let spec = OntologySpec::parse(resources::CEFR_ONTOLOGY).unwrap();
        assert_eq!(spec.concept, "CEFR");
        assert_eq!(spec.classes, ["A1", "A2", "B1", "B2", "C1", "C2"]);
        assert!(spec.ordinal);
        assert!(spec.uses_text_features());
        assert!(spec.check_consistency().is_consistent());
    }

    #[test]
    fn parse_bundled_polarity() {
        let spec = OntologySpec::parse(resources::POLARITY_ONTOLOGY).unwrap();
        assert_eq!(spec.classes.len(), 6);
        assert!(!spec.ordinal);
        let v = DescriptorValues::new()
            .with_symbol("load", "loaded")
            .with_symbol("polarity", "negative");
        assert_eq!(spec.classify(&v).unwrap(), "L-");
        let v = DescriptorValues::new()
            .with_symbol("load", "nonloaded")
            .with_symbol("polarity", "neutral");
        assert_eq!(spec.classify(&v).unwrap(), "¬L0");
        assert!(spec.check_consistency().is_consistent());
    }

    #[test]
    fn missing_class_rule_is_a_gap() {
        let mut spec = OntologySpec::parse(resources::POLARITY_ONTOLOGY).unwrap();
        spec.rules.retain(|r| r.label != "¬L0");
        let report = spec.check_consistency();
        assert!(report.overlaps.is_empty());
        assert_eq!(report.gaps.len(), 1);
        let w = &report.gaps[0].witness;
        assert_eq!(w.categorical["load"], "nonloaded");
        assert_eq!(w.categorical["polarity"], "neutral");
    }

    #[test]
    fn parse_errors() {
        let doc = r#"{
  "concept": "T",
  "classes": ["A", "B"],
  "descriptors": { "f0": "numeric" },
  "rules": [
    { "label": "A", "predicates": [ { "feature": "f1", "hi": 1 } ] }
  ]
}"#;
        assert_eq!(
            OntologySpec::parse(doc),
            Err(ParseError::UnknownDescriptor {
                name: "f1".into(),
                line: Some(6)
            })
        );

        let doc = doc.replace("\"f1\"", "\"f0\"").replace("\"label\": \"A\"", "\"label\": \"Z\"");
        assert!(matches!(
            OntologySpec::parse(&doc),
            Err(ParseError::UnknownClass { line: Some(6), .. })
        ));

        let empty = r#"{"concept":"T","classes":["A","B"],"descriptors":{},"rules":[]}"#;
        assert_eq!(OntologySpec::parse(empty), Err(ParseError::EmptyRuleSet));

        let broken = "{\n  \"concept\": \"T\",\n  \"classes\": [\n}";
        assert!(matches!(
            OntologySpec::parse(broken),
            Err(ParseError::Syntax { line: 4, .. })
        ));

        let bad_symbol = r#"{"concept":"T","classes":["A","B"],
            "descriptors":{"load":{"categorical":["x","y"]}},
            "rules":[{"label":"A","predicates":[{"name":"load","equals":"z"}]}]}"#;
        assert!(matches!(
            OntologySpec::parse(bad_symbol),
            Err(ParseError::UnknownSymbol { .. })
        ));
    }

    #[test]
    fn repeated_intervals_are_collapsed() {
        let doc = r#"{"concept":"T","classes":["A","B"],"descriptors":{"f0":"numeric"},
            "rules":[
              {"label":"A","predicates":[{"feature":"f0","hi":6},{"feature":"f0","hi":3}]},
              {"label":"B","predicates":[{"feature":"f0","lo":3}]}]}"#;
        let spec = OntologySpec::parse(doc).unwrap();
        assert_eq!(spec.rules[0].predicates.len(), 1);
        assert_eq!(spec.rules[0].interval("f0").unwrap().hi, 3.0);
        assert!(spec.check_consistency().is_consistent());
    }

    #[test]
    fn json_round_trip() {
        for src in [resources::CEFR_ONTOLOGY, resources::POLARITY_ONTOLOGY] {
            let spec = OntologySpec::parse(src).unwrap();
            assert_eq!(OntologySpec::parse(&spec.to_json()).unwrap(), spec);
        }
    }
}

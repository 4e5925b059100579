//! CART-style decision trees over descriptor vectors, and the readout of
//! their leaves as ontology rules.
//!
//! Splits minimize the weighted Gini impurity of the two children. Candidate
//! thresholds are midpoints between consecutive distinct values; the left
//! child takes `x < threshold`. Ties go to the lowest feature index, then the
//! lowest threshold, so fitting is reproducible for a fixed input order.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{Descriptor, Interval, OntologySpec, ParseError, Predicate, Rule};
use crate::textmetrics::FeatureVector;

/// Weighted-impurity differences below this are treated as ties.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum InductionError {
    #[error("cannot compute impurity of an empty node")]
    EmptyNode,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("label `{0}` is not in the configured label set")]
    UnknownLabel(String),
    #[error("sample {index} has {found} features, expected {expected}")]
    DimensionMismatch {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("invalid tree config: {0}")]
    InvalidConfig(String),
    #[error("invalid training file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Ontology(#[from] ParseError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: String,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: impl Into<String>) -> Self {
        LabeledSample {
            features,
            label: label.into(),
        }
    }

    pub fn from_features(f: &FeatureVector, label: impl Into<String>) -> Self {
        Self::new(f.to_array().to_vec(), label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub label_set: Vec<String>,
    pub feature_names: Vec<String>,
}

impl TreeConfig {
    /// Config over the six text features.
    pub fn text_features(label_set: Vec<String>, max_depth: usize, min_leaf: usize) -> Self {
        TreeConfig {
            max_depth,
            min_leaf,
            label_set,
            feature_names: FeatureVector::NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Features named `f0`, `f1`, ...
    pub fn anonymous(dims: usize, label_set: Vec<String>, max_depth: usize, min_leaf: usize) -> Self {
        TreeConfig {
            max_depth,
            min_leaf,
            label_set,
            feature_names: (0..dims).map(|i| format!("f{i}")).collect(),
        }
    }

    fn validate(&self) -> Result<(), InductionError> {
        if self.max_depth < 1 {
            return Err(InductionError::InvalidConfig("max_depth must be >= 1".into()));
        }
        if self.min_leaf < 1 {
            return Err(InductionError::InvalidConfig("min_leaf must be >= 1".into()));
        }
        if self.label_set.is_empty() {
            return Err(InductionError::InvalidConfig("label set is empty".into()));
        }
        if self.feature_names.is_empty() {
            return Err(InductionError::InvalidConfig("no features".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        label: String,
        samples: usize,
        gini: f64,
    },
}

impl TreeNode {
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub feature_names: Vec<String>,
    pub label_set: Vec<String>,
    pub root: TreeNode,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> &str {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { label, .. } => return label,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaves()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(document: &str) -> Result<Self, InductionError> {
        let tree: DecisionTree = serde_json::from_str(document)?;
        tree.check_node(&tree.root)?;
        Ok(tree)
    }

    fn check_node(&self, node: &TreeNode) -> Result<(), InductionError> {
        match node {
            TreeNode::Leaf { label, .. } => {
                if !self.label_set.contains(label) {
                    return Err(InductionError::UnknownLabel(label.clone()));
                }
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= self.feature_names.len() || !threshold.is_finite() {
                    return Err(InductionError::Format(format!(
                        "bad split on feature {feature} at {threshold}"
                    )));
                }
                self.check_node(left)?;
                self.check_node(right)?;
            }
        }
        Ok(())
    }
}

fn gini_of_counts(counts: &[usize], total: usize) -> f64 {
    let n = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

/// Gini impurity `1 - sum p_k^2` of a label multiset.
pub fn gini<S: AsRef<str>>(labels: &[S]) -> Result<f64, InductionError> {
    if labels.is_empty() {
        return Err(InductionError::EmptyNode);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_insert(0) += 1;
    }
    let counts: Vec<usize> = counts.into_values().collect();
    Ok(gini_of_counts(&counts, labels.len()))
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    labels: Vec<usize>,
    cfg: &'a TreeConfig,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Grower<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.cfg.label_set.len()];
        for &i in idx {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    fn leaf(&self, idx: &[usize]) -> TreeNode {
        let counts = self.counts(idx);
        // first maximum wins, i.e. the earliest label in the label set
        let mut best = 0;
        for (k, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = k;
            }
        }
        TreeNode::Leaf {
            label: self.cfg.label_set[best].clone(),
            samples: idx.len(),
            gini: gini_of_counts(&counts, idx.len()),
        }
    }

    fn best_split(&self, idx: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let k = self.cfg.label_set.len();
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for feature in 0..self.cfg.feature_names.len() {
            order.sort_by(|&a, &b| self.rows[a][feature].total_cmp(&self.rows[b][feature]));
            let mut left = vec![0usize; k];
            let mut right = self.counts(idx);
            for pos in 1..n {
                let moved = self.labels[order[pos - 1]];
                left[moved] += 1;
                right[moved] -= 1;
                let a = self.rows[order[pos - 1]][feature];
                let b = self.rows[order[pos]][feature];
                if a >= b || pos < self.cfg.min_leaf || n - pos < self.cfg.min_leaf {
                    continue;
                }
                let mut threshold = a + (b - a) / 2.0;
                if threshold <= a {
                    threshold = b;
                }
                let impurity = (pos as f64 * gini_of_counts(&left, pos)
                    + (n - pos) as f64 * gini_of_counts(&right, n - pos))
                    / n as f64;
                if best
                    .as_ref()
                    .is_none_or(|b| impurity < b.impurity - TIE_TOLERANCE)
                {
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }

    fn grow(&self, idx: Vec<usize>, depth: usize) -> TreeNode {
        let counts = self.counts(&idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.cfg.max_depth || idx.len() < 2 * self.cfg.min_leaf {
            return self.leaf(&idx);
        }
        let Some(split) = self.best_split(&idx) else {
            return self.leaf(&idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.rows[i][split.feature] < split.threshold);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.grow(l, depth + 1)),
            right: Box::new(self.grow(r, depth + 1)),
        }
    }
}

pub fn fit_tree(data: &[LabeledSample], cfg: &TreeConfig) -> Result<DecisionTree, InductionError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(InductionError::EmptyDataset);
    }
    let dims = cfg.feature_names.len();
    let mut labels = Vec::with_capacity(data.len());
    let mut rows = Vec::with_capacity(data.len());
    for (index, s) in data.iter().enumerate() {
        if s.features.len() != dims {
            return Err(InductionError::DimensionMismatch {
                index,
                found: s.features.len(),
                expected: dims,
            });
        }
        if let Some(bad) = s.features.iter().find(|v| !v.is_finite()) {
            return Err(InductionError::Format(format!(
                "sample {index} has non-finite feature value {bad}"
            )));
        }
        let label = cfg
            .label_set
            .iter()
            .position(|l| *l == s.label)
            .ok_or_else(|| InductionError::UnknownLabel(s.label.clone()))?;
        labels.push(label);
        rows.push(s.features.clone());
    }
    let grower = Grower {
        rows: &rows,
        labels,
        cfg,
    };
    let root = grower.grow((0..data.len()).collect(), 0);
    Ok(DecisionTree {
        feature_names: cfg.feature_names.clone(),
        label_set: cfg.label_set.clone(),
        root,
    })
}

/// One conjunctive rule per leaf, bounds collapsed to the tightest interval
/// per feature.
pub fn extract_rules(tree: &DecisionTree) -> Vec<Rule> {
    fn walk(
        tree: &DecisionTree,
        node: &TreeNode,
        path: &mut BTreeMap<usize, Interval>,
        out: &mut Vec<Rule>,
    ) {
        match node {
            TreeNode::Leaf { label, .. } => out.push(Rule {
                label: label.clone(),
                predicates: path
                    .iter()
                    .map(|(&f, &range)| Predicate::Interval {
                        feature: tree.feature_names[f].clone(),
                        range,
                    })
                    .collect(),
            }),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let current = path.get(feature).copied().unwrap_or(Interval::FULL);
                for (side, child) in [
                    (Interval::below(*threshold), left),
                    (Interval::at_least(*threshold), right),
                ] {
                    path.insert(*feature, current.intersect(&side));
                    walk(tree, child, path, out);
                }
                if current == Interval::FULL {
                    path.remove(feature);
                } else {
                    path.insert(*feature, current);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(tree, &tree.root, &mut BTreeMap::new(), &mut out);
    out
}

/// Wraps the extracted rules of `tree` into an ontology over its features.
pub fn rules_to_ontology(
    tree: &DecisionTree,
    concept: &str,
    ordinal: bool,
) -> Result<OntologySpec, InductionError> {
    let descriptors = tree
        .feature_names
        .iter()
        .map(|n| (n.clone(), Descriptor::Numeric))
        .collect();
    Ok(OntologySpec::new(
        concept,
        tree.label_set.clone(),
        ordinal,
        descriptors,
        extract_rules(tree),
    )?)
}

/// Reads `feature...,label` rows. The header names the features; the last
/// column must be `label`.
pub fn read_training_csv<R: Read>(
    reader: R,
) -> Result<(Vec<String>, Vec<LabeledSample>), InductionError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols: Vec<String> = header.iter().map(str::to_string).collect();
    if cols.last().map(String::as_str) != Some("label") || cols.len() < 2 {
        return Err(InductionError::Format(
            "header must list feature columns followed by `label`".into(),
        ));
    }
    let names = cols[..cols.len() - 1].to_vec();
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut features = Vec::with_capacity(names.len());
        for (j, name) in names.iter().enumerate() {
            let raw = rec.get(j).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| {
                InductionError::Format(format!("row {}: `{name}` is not a number: `{raw}`", i + 2))
            })?;
            features.push(v);
        }
        let label = rec.get(names.len()).unwrap_or("").to_string();
        samples.push(LabeledSample { features, label });
    }
    Ok((names, samples))
}

pub fn write_training_csv<W: Write>(
    writer: W,
    feature_names: &[String],
    samples: &[LabeledSample],
) -> Result<(), InductionError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = feature_names.iter().map(String::as_str).collect();
    header.push("label");
    w.write_record(&header)?;
    for s in samples {
        let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        row.push(s.label.clone());
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Labels in order of first appearance.
pub fn labels_in_order(samples: &[LabeledSample]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in samples {
        if !out.contains(&s.label) {
            out.push(s.label.clone());
        }
    }
    out
}

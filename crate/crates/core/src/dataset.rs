//! Label-wrapped fine-tuning corpora.
//!
//! A wrapped sample encloses an utterance between two identical control codes:
//!
//! ```text
//! [CEFR: B1] Hello there. [CEFR: B1]
//! ```
//!
//! The grammar is frozen: one space after the colon and exactly one space
//! between each code and the text. [`strip`] is lenient about whitespace and
//! accepts a missing right-hand code, which is how model output usually looks.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotators::{AnnotateError, Annotator};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("text contains the reserved control-code prefix `[{concept}:`")]
    ReservedPattern { concept: String },
    #[error("text is blank")]
    BlankText,
    #[error("record `{0}` has no class")]
    UnannotatedRecord(String),
    #[error("class `{0}` has no records; every class must be represented")]
    MissingClass(String),
    #[error("record `{id}`: {source}")]
    Annotation {
        id: String,
        #[source]
        source: AnnotateError,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    InvalidSplit(Vec<f64>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The control code `[{concept}: {class}]`.
pub fn control_code(concept: &str, class: &str) -> String {
    format!("[{concept}: {class}]")
}


/// Wraps `text` (trimmed) between two control codes.
pub fn wrap(text: &str, concept: &str, class: &str) -> Result<String, DatasetError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(DatasetError::BlankText);
    }
    if code_patterns(concept).guard.is_match(text) {
        return Err(DatasetError::ReservedPattern {
            concept: concept.to_string(),
        });
    }
    let code = control_code(concept, class);
    Ok(format!("{code} {text} {code}"))
}

/// Result of [`strip_detailed`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub text: String,
    /// Class of the leading code, if one was present.
    pub class: Option<String>,
    /// Whether a trailing code was removed.
    pub right_label: bool,
}

struct CodePatterns {
    guard: Regex,
    leading: Regex,
    trailing: Regex,
}

/// Compiled once per concept.
fn code_patterns(concept: &str) -> Arc<CodePatterns> {
    static CACHE: LazyLock<Mutex<HashMap<String, Arc<CodePatterns>>>> = LazyLock::new(Default::default);
    let mut cache = CACHE.lock().expect("pattern cache");
    let entry = cache.entry(concept.to_string()).or_insert_with(|| {
        let c = regex::escape(concept);
        Arc::new(CodePatterns {
            guard: Regex::new(&format!(r"\[\s*{c}\s*:")).expect("pattern"),
            leading: Regex::new(&format!(r"^\s*\[\s*{c}\s*:\s*([^\]]*?)\s*\]")).expect("pattern"),
            trailing: Regex::new(&format!(r"\[\s*{c}\s*:\s*[^\]]*?\s*\]\s*$")).expect("pattern"),
        })
    });
    Arc::clone(entry)
}

/// Removes one leading and one trailing control code when present.
pub fn strip_detailed(s: &str, concept: &str) -> Stripped {
    let p = code_patterns(concept);
    let mut rest = s;
    let mut class = None;
    if let Some(m) = p.leading.captures(rest) {
        class = Some(m[1].to_string());
        rest = &rest[m.get(0).expect("whole match").end()..];
    }
    let mut right_label = false;
    if let Some(m) = p.trailing.find(rest) {
        right_label = true;
        rest = &rest[..m.start()];
    }
    let text = if class.is_some() || right_label {
        rest.trim().to_string()
    } else {
        s.to_string()
    };
    Stripped {
        text,
        class,
        right_label,
    }
}

/// `(text, class of the leading code)`.
pub fn strip(s: &str, concept: &str) -> (String, Option<String>) {
    let d = strip_detailed(s, concept);
    (d.text, d.class)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default)]
    pub source: String,
}

/// Reads records from a `.csv` file (header row with `id,text,class,source`)
/// or line-delimited JSON (anything else).
pub fn read_records(path: &Path) -> Result<Vec<UtteranceRecord>, DatasetError> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let file = fs::File::open(path).map_err(io_err(path))?;
    let records = if is_csv {
        read_csv_records(file, path)?
    } else {
        read_jsonl_records(BufReader::new(file), path)?
    };
    for (i, r) in records.iter().enumerate() {
        if r.text.trim().is_empty() {
            return Err(DatasetError::Format {
                path: path.to_path_buf(),
                line: i + if is_csv { 2 } else { 1 },
                message: format!("record `{}` has blank text", r.id),
            });
        }
    }
    Ok(records)
}

/// Parses line-delimited JSON records; blank lines are skipped.
pub fn parse_jsonl(source: &str) -> Result<Vec<UtteranceRecord>, DatasetError> {
    read_jsonl_records(source.as_bytes(), Path::new("<memory>"))
}

fn read_jsonl_records(reader: impl BufRead, path: &Path) -> Result<Vec<UtteranceRecord>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: UtteranceRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::Format {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        if rec.class.as_deref().is_some_and(|c| c.trim().is_empty()) {
            rec.class = None;
        }
        out.push(rec);
    }
    Ok(out)
}

fn read_csv_records(reader: impl io::Read, path: &Path) -> Result<Vec<UtteranceRecord>, DatasetError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<UtteranceRecord>().enumerate() {
        let mut rec = row.map_err(|e| DatasetError::Format {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        if rec.class.as_deref().is_some_and(|c| c.trim().is_empty()) {
            rec.class = None;
        }
        out.push(rec);
    }
    Ok(out)
}

/// Downsamples every class to the size of the smallest one.
///
/// Selection is a seeded shuffle per class; survivors keep their input order.
pub fn balance(
    records: &[UtteranceRecord],
    classes: &[String],
    seed: u64,
) -> Result<Vec<UtteranceRecord>, DatasetError> {
    let mut by_class: BTreeMap<&str, Vec<usize>> =
        classes.iter().map(|c| (c.as_str(), Vec::new())).collect();
    for (i, r) in records.iter().enumerate() {
        let class = r
            .class
            .as_deref()
            .ok_or_else(|| DatasetError::UnannotatedRecord(r.id.clone()))?;
        by_class.entry(class).or_default().push(i);
    }
    if let Some((c, _)) = by_class.iter().find(|(_, v)| v.is_empty()) {
        return Err(DatasetError::MissingClass(c.to_string()));
    }
    let quota = by_class.values().map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; records.len()];
    for indices in by_class.values_mut() {
        indices.shuffle(&mut rng);
        for &i in &indices[..quota] {
            keep[i] = true;
        }
    }
    Ok(records
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r.clone())
        .collect())
}

/// Options for [`build_corpus`].
#[derive(Debug, Clone)]
pub struct CorpusOptions {
    /// Two (train/val) or three (train/val/test) ratios summing to 1.
    pub split: Vec<f64>,
    pub seed: u64,
    pub balance: bool,
    /// Re-annotate records that already carry a class.
    pub reannotate: bool,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            split: vec![0.8, 0.2],
            seed: 7,
            balance: false,
            reannotate: false,
        }
    }
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub file: String,
    pub lines: usize,
    pub class_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub concept: String,
    pub seed: u64,
    pub balanced: bool,
    pub ratios: Vec<f64>,
    pub total: usize,
    pub class_counts: BTreeMap<String, usize>,
    pub splits: BTreeMap<String, SplitManifest>,
}

fn validate_split(split: &[f64]) -> Result<(), DatasetError> {
    let ok = (2..=3).contains(&split.len())
        && split.iter().all(|r| r.is_finite() && *r > 0.0)
        && (split.iter().sum::<f64>() - 1.0).abs() < 1e-9;
    if ok {
        Ok(())
    } else {
        Err(DatasetError::InvalidSplit(split.to_vec()))
    }
}

/// Annotates unlabeled records in parallel, then collapses internal
/// whitespace so every wrapped sample is a single line.
pub fn annotate_records(
    records: Vec<UtteranceRecord>,
    annotator: &dyn Annotator,
    reannotate: bool,
) -> Result<Vec<UtteranceRecord>, DatasetError> {
    records
        .into_par_iter()
        .map(|mut r| {
            r.text = r.text.split_whitespace().collect::<Vec<_>>().join(" ");
            if r.text.is_empty() {
                return Err(DatasetError::BlankText);
            }
            if r.class.is_none() || reannotate {
                let class = annotator
                    .annotate(&r.text)
                    .map_err(|source| DatasetError::Annotation {
                        id: r.id.clone(),
                        source,
                    })?;
                r.class = Some(class);
            }
            Ok(r)
        })
        .collect()
}

/// Writes `train.txt`, `val.txt` (and `test.txt` for three ratios) plus
/// `manifest.json` into `out_dir`. Identical inputs and seed give
/// byte-identical files.
pub fn build_corpus(
    input: &Path,
    annotator: &dyn Annotator,
    out_dir: &Path,
    options: &CorpusOptions,
) -> Result<CorpusManifest, DatasetError> {
    validate_split(&options.split)?;
    let records = read_records(input)?;
    let spec = annotator.ontology();
    let concept = spec.concept.clone();
    let mut records = annotate_records(records, annotator, options.reannotate)?;
    if options.balance {
        records = balance(&records, &spec.classes, options.seed)?;
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(options.seed));

    let n = records.len();
    let mut bounds = Vec::with_capacity(options.split.len());
    let mut start = 0;
    for (i, ratio) in options.split.iter().enumerate() {
        let end = if i + 1 == options.split.len() {
            n
        } else {
            (start + (ratio * n as f64).round() as usize).min(n)
        };
        bounds.push((start, end));
        start = end;
    }

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut manifest = CorpusManifest {
        concept: concept.clone(),
        seed: options.seed,
        balanced: options.balance,
        ratios: options.split.clone(),
        total: n,
        class_counts: BTreeMap::new(),
        splits: BTreeMap::new(),
    };
    for (name, (lo, hi)) in SPLIT_NAMES.iter().zip(bounds) {
        let file = format!("{name}.txt");
        let path = out_dir.join(&file);
        let mut chosen: Vec<&UtteranceRecord> = order[lo..hi].iter().map(|&i| &records[i]).collect();
        chosen.sort_by(|a, b| a.id.cmp(&b.id));
        let mut body = String::new();
        let mut counts = BTreeMap::new();
        for r in &chosen {
            let class = r.class.as_deref().expect("annotated above");
            let line = wrap(&r.text, &concept, class).map_err(|e| DatasetError::Format {
                path: input.to_path_buf(),
                line: 0,
                message: format!("record `{}`: {e}", r.id),
            })?;
            body.push_str(&line);
            body.push('\n');
            *counts.entry(class.to_string()).or_insert(0) += 1;
            *manifest.class_counts.entry(class.to_string()).or_insert(0) += 1;
        }
        fs::write(&path, body).map_err(io_err(&path))?;
        manifest.splits.insert(
            name.to_string(),
            SplitManifest {
                file,
                lines: chosen.len(),
                class_counts: counts,
            },
        );
    }
    let path = out_dir.join("manifest.json");
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    serde_json::to_writer_pretty(&mut f, &manifest).expect("manifest serializes");
    f.write_all(b"\n").map_err(io_err(&path))?;
    Ok(manifest)
}

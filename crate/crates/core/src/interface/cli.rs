//! The `ontoctl` command line.
//!
//! Ontology and strategy arguments accept a bundled id (`cefr`, `polarity`,
//! `harder-only`, `debate`) or a path to a JSON file. Every subcommand prints
//! machine-readable JSON with `--json`. Usage errors exit with 2, runtime
//! errors with 1.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde_json::json;

use super::service::{self, BackgroundServer};
use super::{load_ontology_file, AppConfig, Catalog, GatewayPool};
use crate::dataset::{self, CorpusOptions};
use crate::engine::{Controller, SessionStore};
use crate::eval::{self, br_score, EmbeddingSimilarity, EvalConfig, Similarity, UnigramF1};
use crate::gateway::{mock_router, Gateway, MockFixture, MockGateway, OpenAiGateway, TemplateSet};
use crate::induction::{self, fit_tree, read_training_csv, rules_to_ontology, DecisionTree, LabeledSample, TreeConfig};
use crate::ontology::OntologySpec;
use crate::resources;
use crate::textmetrics::{self, FeatureVector};

#[derive(Debug, Parser)]
#[command(name = "ontoctl", version, about = "Ontology-driven conversational control")]
pub struct Cli {
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the six text features of a file (`-` for stdin).
    Features {
        file: PathBuf,
        /// One feature vector per non-blank line instead of one for the file.
        #[arg(long, conflicts_with = "corpus")]
        lines: bool,
        /// Treat FILE as a labelled corpus and write a training CSV.
        #[arg(long)]
        corpus: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fit a decision tree on a training CSV (feature columns, then `label`).
    Fit {
        train: PathBuf,
        #[arg(long, default_value_t = 5)]
        max_depth: usize,
        #[arg(long, default_value_t = 1)]
        min_leaf: usize,
        /// Class order, comma separated; defaults to order of appearance.
        #[arg(long, value_delimiter = ',')]
        classes: Vec<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Turn a fitted tree into an ontology document.
    Rules {
        tree: PathBuf,
        #[arg(long, default_value = "CEFR")]
        concept: String,
        /// Mark the class order as ordinal.
        #[arg(long)]
        ordinal: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check that an ontology's rules are disjoint and exhaustive.
    Check { ontology: String },
    /// Annotate every record of a corpus.
    Annotate {
        ontology: String,
        corpus: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write label-wrapped train/val(/test) files and a manifest.
    BuildCorpus {
        ontology: String,
        corpus: PathBuf,
        #[arg(long, default_value = "corpus-out")]
        out: PathBuf,
        #[arg(long)]
        balance: bool,
        /// Two or three ratios summing to 1.
        #[arg(long, value_delimiter = ',', default_value = "0.8,0.2")]
        split: Vec<f64>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Re-annotate records that already carry a class.
        #[arg(long)]
        reannotate: bool,
    },
    /// Interactive conversation: one user utterance per stdin line.
    Converse {
        ontology: String,
        strategy: String,
        #[arg(long, default_value = "fine-tuned")]
        template: String,
        /// `mock` or a chat-completions URL; defaults to ONTO_LLM_URL, else mock.
        #[arg(long)]
        endpoint: Option<String>,
        /// Directory for the session transcript.
        #[arg(long)]
        transcript_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        max_retries_on_noncompliance: u32,
    },
    /// Zero-shot evaluation: every question prompted with every class.
    Eval {
        ontology: String,
        questions: PathBuf,
        #[arg(long, default_value = "zero-shot")]
        template: String,
        /// `mock`, `constant:<text>` or a chat-completions URL.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write per-generation features as CSV.
        #[arg(long)]
        features_csv: Option<PathBuf>,
    },
    /// Ratio of post-vs-pre similarity to pre-generation self-similarity.
    Br {
        /// JSON array of arrays: seed generations per prompt.
        pre: PathBuf,
        /// JSON array: one post generation per prompt.
        post: PathBuf,
        /// Token-embedding service; unigram F1 when absent.
        #[arg(long)]
        embedding_url: Option<String>,
        /// Concept the generations were steered on; sets the caveat flag.
        #[arg(long)]
        ontology: Option<String>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, env = "ONTO_LISTEN", default_value = "127.0.0.1:8080")]
        listen: String,
        /// Extra ontology files.
        #[arg(long = "ontology")]
        ontologies: Vec<PathBuf>,
        /// Extra strategy files.
        #[arg(long = "strategy")]
        strategies: Vec<PathBuf>,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long, default_value = "fine-tuned")]
        template: String,
        /// Transcript directory; sessions live in memory when absent.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Allowed browser origin; repeatable, `*` for any.
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
        #[arg(long, default_value_t = 0)]
        max_retries_on_noncompliance: u32,
    },
    /// Serve a chat-completions mock from a fixture (`cefr`, `polarity` or a path).
    ServeMock {
        fixture: String,
        #[arg(long, default_value = "127.0.0.1:8091")]
        listen: String,
    },
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CliError(String);

impl CliError {
    fn from(e: impl std::fmt::Display) -> Self {
        CliError(e.to_string())
    }
}

type CliResult = Result<i32, CliError>;

/// Standard streams, swappable for tests.
pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdin = io::stdin();
    let mut stdin = stdin.lock();
    let mut stdout = io::stdout();
    let mut stderr = io::stderr();
    run_with(
        args,
        &mut Io {
            stdin: &mut stdin,
            stdout: &mut stdout,
            stderr: &mut stderr,
        },
    )
}

pub fn run_with<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(io.stderr, "{}", e.render());
                return 2;
            }
            let _ = write!(io.stdout, "{}", e.render());
            return 0;
        }
    };
    match execute(cli, io) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: {e}");
            1
        }
    }
}

macro_rules! out {
    ($io:expr, $($arg:tt)*) => {
        writeln!($io.stdout, $($arg)*).map_err(CliError::from)?
    };
}

fn print_json(io: &mut Io<'_>, value: &serde_json::Value) -> Result<(), CliError> {
    out!(io, "{}", serde_json::to_string_pretty(value).expect("json"));
    Ok(())
}

fn read_text(path: &Path, io: &mut Io<'_>) -> Result<String, CliError> {
    if path == Path::new("-") {
        let mut s = String::new();
        io.stdin.read_to_string(&mut s).map_err(CliError::from)?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| CliError(format!("{}: {e}", path.display())))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

/// Resolves a gateway argument: `mock`, `constant:<text>` or a URL.
fn gateway_for(endpoint: Option<&str>, spec: &OntologySpec) -> Result<Arc<dyn Gateway>, CliError> {
    let env_url = std::env::var("ONTO_LLM_URL").ok().filter(|u| !u.is_empty());
    let endpoint = endpoint.map(str::to_string).or(env_url).unwrap_or_else(|| "mock".into());
    if endpoint == "mock" {
        let fixture = MockFixture::bundled(&spec.concept)
            .ok_or_else(|| CliError(format!("no bundled mock fixture for concept `{}`", spec.concept)))?;
        return Ok(Arc::new(MockGateway::from_fixture(fixture)));
    }
    if let Some(text) = endpoint.strip_prefix("constant:") {
        return Ok(Arc::new(MockGateway::constant(text)));
    }
    let key = std::env::var("ONTO_LLM_KEY").ok().filter(|k| !k.is_empty());
    let model = std::env::var("ONTO_LLM_MODEL").unwrap_or_else(|_| "default".into());
    let timeout = Duration::from_millis(crate::http::env_u64("ONTO_LLM_TIMEOUT_MS", 60_000));
    let retries = crate::http::env_u64("ONTO_LLM_RETRIES", 1) as u32;
    Ok(Arc::new(
        OpenAiGateway::new(endpoint, key, model, timeout).with_timeout_retries(retries),
    ))
}

fn features_json(f: &FeatureVector) -> serde_json::Value {
    serde_json::to_value(f).expect("features serialize")
}

fn execute(cli: Cli, io: &mut Io<'_>) -> CliResult {
    let as_json = cli.json;
    match cli.command {
        Command::Features {
            file,
            lines,
            corpus,
            output,
        } => {
            if corpus {
                let records = dataset::read_records(&file).map_err(CliError::from)?;
                let mut samples = Vec::new();
                for r in records.iter().filter(|r| r.class.is_some()) {
                    let f = textmetrics::features(&r.text)
                        .map_err(|e| CliError(format!("record `{}`: {e}", r.id)))?;
                    samples.push(LabeledSample::from_features(&f, r.class.clone().unwrap_or_default()));
                }
                let names: Vec<String> = FeatureVector::NAMES.iter().map(|s| s.to_string()).collect();
                let mut buf = Vec::new();
                induction::write_training_csv(&mut buf, &names, &samples).map_err(CliError::from)?;
                let csv = String::from_utf8(buf).expect("utf-8");
                match output {
                    Some(p) => write_file(&p, &csv)?,
                    None => write!(io.stdout, "{csv}").map_err(CliError::from)?,
                }
                return Ok(0);
            }
            let text = read_text(&file, io)?;
            let units: Vec<&str> = if lines {
                text.lines().filter(|l| !l.trim().is_empty()).collect()
            } else {
                vec![text.as_str()]
            };
            let mut rows = Vec::new();
            for u in &units {
                rows.push(textmetrics::features(u).map_err(CliError::from)?);
            }
            let rendered = if as_json {
                let v: Vec<_> = rows.iter().map(features_json).collect();
                serde_json::to_string_pretty(&if lines { json!(v) } else { v[0].clone() }).expect("json")
            } else {
                let mut s = String::new();
                for (i, f) in rows.iter().enumerate() {
                    if lines {
                        s.push_str(&format!("# line {}\n", i + 1));
                    }
                    for (name, v) in f.named() {
                        s.push_str(&format!("{name:<16}{v:.4}\n"));
                    }
                }
                s.trim_end().to_string()
            };
            match output {
                Some(p) => write_file(&p, &(rendered + "\n"))?,
                None => out!(io, "{rendered}"),
            }
            Ok(0)
        }
        Command::Fit {
            train,
            max_depth,
            min_leaf,
            classes,
            output,
        } => {
            let file = fs::File::open(&train).map_err(|e| CliError(format!("{}: {e}", train.display())))?;
            let (names, samples) = read_training_csv(file).map_err(CliError::from)?;
            let label_set = if classes.is_empty() {
                induction::labels_in_order(&samples)
            } else {
                classes
            };
            let cfg = TreeConfig {
                max_depth,
                min_leaf,
                label_set,
                feature_names: names,
            };
            let tree = fit_tree(&samples, &cfg).map_err(CliError::from)?;
            write_file(&output, &(tree.to_json() + "\n"))?;
            let correct = samples.iter().filter(|s| tree.predict(&s.features) == s.label).count();
            let summary = json!({
                "output": output,
                "samples": samples.len(),
                "depth": tree.depth(),
                "leaves": tree.leaf_count(),
                "training_accuracy": correct as f64 / samples.len() as f64,
            });
            if as_json {
                print_json(io, &summary)?;
            } else {
                out!(
                    io,
                    "fitted tree: depth {}, {} leaves, training accuracy {:.3} -> {}",
                    tree.depth(),
                    tree.leaf_count(),
                    correct as f64 / samples.len() as f64,
                    output.display()
                );
            }
            Ok(0)
        }
        Command::Rules {
            tree,
            concept,
            ordinal,
            output,
        } => {
            let tree = DecisionTree::from_json(&read_text(&tree, io)?).map_err(CliError::from)?;
            let spec = rules_to_ontology(&tree, &concept, ordinal).map_err(CliError::from)?;
            write_file(&output, &(spec.to_json() + "\n"))?;
            let report = spec.check_consistency();
            if as_json {
                print_json(
                    io,
                    &json!({"output": output, "rules": spec.rules.len(), "consistent": report.is_consistent()}),
                )?;
            } else {
                for r in &spec.rules {
                    out!(io, "{r}");
                }
                out!(io, "{} rules -> {} ({report})", spec.rules.len(), output.display());
            }
            Ok(if report.is_consistent() { 0 } else { 1 })
        }
        Command::Check { ontology } => {
            let spec = match ontology.as_str() {
                "cefr" => OntologySpec::parse(resources::CEFR_ONTOLOGY).expect("bundled"),
                "polarity" => OntologySpec::parse(resources::POLARITY_ONTOLOGY).expect("bundled"),
                path => load_ontology_file(Path::new(path)).map_err(CliError::from)?,
            };
            let report = spec.check_consistency();
            if as_json {
                print_json(
                    io,
                    &json!({
                        "consistent": report.is_consistent(),
                        "overlaps": report.overlaps.iter().map(|o| json!({
                            "rules": [o.first, o.second],
                            "labels": o.labels,
                            "witness": o.witness.to_string(),
                        })).collect::<Vec<_>>(),
                        "gaps": report.gaps.iter().map(|g| g.witness.to_string()).collect::<Vec<_>>(),
                    }),
                )?;
            } else {
                out!(io, "{}", report.to_string().trim_end());
            }
            Ok(if report.is_consistent() { 0 } else { 1 })
        }
        Command::Annotate {
            ontology,
            corpus,
            output,
        } => {
            let mut catalog = Catalog::bundled();
            let id = catalog.resolve_ontology(&ontology).map_err(CliError::from)?;
            let annotator = catalog.annotator(&id).map_err(CliError::from)?;
            let records = dataset::read_records(&corpus).map_err(CliError::from)?;
            let records = dataset::annotate_records(records, annotator.as_ref(), true).map_err(CliError::from)?;
            let mut body = String::new();
            for r in &records {
                body.push_str(&serde_json::to_string(r).expect("record serializes"));
                body.push('\n');
            }
            match output {
                Some(p) => write_file(&p, &body)?,
                None => write!(io.stdout, "{body}").map_err(CliError::from)?,
            }
            Ok(0)
        }
        Command::BuildCorpus {
            ontology,
            corpus,
            out,
            balance,
            split,
            seed,
            reannotate,
        } => {
            let mut catalog = Catalog::bundled();
            let id = catalog.resolve_ontology(&ontology).map_err(CliError::from)?;
            let annotator = catalog.annotator(&id).map_err(CliError::from)?;
            let options = CorpusOptions {
                split,
                seed,
                balance,
                reannotate,
            };
            let manifest =
                dataset::build_corpus(&corpus, annotator.as_ref(), &out, &options).map_err(CliError::from)?;
            if as_json {
                print_json(io, &serde_json::to_value(&manifest).expect("manifest"))?;
            } else {
                for (name, s) in &manifest.splits {
                    out!(io, "{name}: {} lines -> {}", s.lines, out.join(&s.file).display());
                }
                out!(io, "classes: {:?}", manifest.class_counts);
            }
            Ok(0)
        }
        Command::Converse {
            ontology,
            strategy,
            template,
            endpoint,
            transcript_dir,
            max_retries_on_noncompliance,
        } => {
            let mut catalog = Catalog::bundled();
            let oid = catalog.resolve_ontology(&ontology).map_err(CliError::from)?;
            let sid = catalog.resolve_strategy(&strategy).map_err(CliError::from)?;
            let spec = catalog.ontology(&oid).map_err(CliError::from)?;
            let templates = Arc::new(TemplateSet::default());
            templates.get(&template).map_err(CliError::from)?;
            let controller = Controller::new(
                Arc::clone(&spec),
                catalog.strategy(&sid, &oid).map_err(CliError::from)?,
                catalog.annotator(&oid).map_err(CliError::from)?,
                gateway_for(endpoint.as_deref(), &spec)?,
            )
            .with_template(templates, template)
            .with_noncompliance_retries(max_retries_on_noncompliance);
            let store = match &transcript_dir {
                Some(d) => SessionStore::on_disk(d).map_err(CliError::from)?,
                None => SessionStore::in_memory(),
            };
            let handle = store
                .insert(controller.new_session(&oid, &sid))
                .map_err(CliError::from)?;
            let mut session = handle.lock().expect("session lock");
            if !as_json {
                out!(io, "session {} | {} | classes {}", session.id(), sid, spec.classes.join(" "));
            }
            let mut failed = false;
            let mut line = String::new();
            loop {
                line.clear();
                if io.stdin.read_line(&mut line).map_err(CliError::from)? == 0 {
                    break;
                }
                if line.trim().is_empty() {
                    continue;
                }
                let result = controller.run_turn(&mut session, &line);
                store.sync(&mut session).map_err(CliError::from)?;
                match result {
                    Ok(o) => {
                        if as_json {
                            out!(io, "{}", serde_json::to_string(&service::TurnReply::from(o)).expect("json"));
                        } else {
                            out!(io, "user  [{}] -> target {}", o.detected, o.target);
                            out!(
                                io,
                                "agent [{}] {} {}",
                                o.reply_detected.as_deref().unwrap_or("?"),
                                if o.compliant { "✓" } else { "✗" },
                                o.reply
                            );
                        }
                    }
                    Err(e) => {
                        failed = true;
                        writeln!(io.stderr, "error: {e}").map_err(CliError::from)?;
                    }
                }
            }
            Ok(if failed { 1 } else { 0 })
        }
        Command::Eval {
            ontology,
            questions,
            template,
            endpoint,
            parallelism,
            output,
            features_csv,
        } => {
            let mut catalog = Catalog::bundled();
            let oid = catalog.resolve_ontology(&ontology).map_err(CliError::from)?;
            let spec = catalog.ontology(&oid).map_err(CliError::from)?;
            let annotator = catalog.annotator(&oid).map_err(CliError::from)?;
            let gateway = gateway_for(endpoint.as_deref(), &spec)?;
            let qs = eval::read_questions(&questions).map_err(CliError::from)?;
            let config = EvalConfig {
                template_id: template,
                question_set_id: questions.display().to_string(),
                parallelism,
                ..EvalConfig::default()
            };
            let report = eval::zero_shot_eval(
                &qs,
                &spec,
                annotator.as_ref(),
                gateway.as_ref(),
                &TemplateSet::default(),
                &config,
            )
            .map_err(CliError::from)?;
            if let Some(p) = &output {
                write_file(p, &(report.to_json() + "\n"))?;
            }
            if let Some(p) = &features_csv {
                write_file(p, &report.features_csv())?;
            }
            if as_json {
                out!(io, "{}", report.to_json());
            } else {
                write!(io.stdout, "{}", report.summary()).map_err(CliError::from)?;
            }
            Ok(0)
        }
        Command::Br {
            pre,
            post,
            embedding_url,
            ontology,
        } => {
            let pre: Vec<Vec<String>> =
                serde_json::from_str(&read_text(&pre, io)?).map_err(CliError::from)?;
            let post: Vec<String> = serde_json::from_str(&read_text(&post, io)?).map_err(CliError::from)?;
            let sim: Box<dyn Similarity> = match embedding_url {
                Some(u) => Box::new(EmbeddingSimilarity::from_env(u)),
                None => Box::new(UnigramF1),
            };
            let mut score = br_score(&pre, &post, sim.as_ref()).map_err(CliError::from)?;
            if let Some(o) = ontology {
                let mut catalog = Catalog::bundled();
                let id = catalog.resolve_ontology(&o).map_err(CliError::from)?;
                let spec = catalog.ontology(&id).map_err(CliError::from)?;
                score = score.with_caveat_for(&spec);
            }
            if as_json {
                print_json(io, &serde_json::to_value(&score).expect("json"))?;
            } else {
                out!(io, "{score}");
            }
            Ok(if score.degenerate { 1 } else { 0 })
        }
        Command::Serve {
            listen,
            ontologies,
            strategies,
            templates,
            template,
            store,
            cors_origins,
            max_retries_on_noncompliance,
        } => {
            let config = AppConfig {
                ontology_files: ontologies,
                strategy_files: strategies,
                template_file: templates,
                template_id: template,
                listen,
                store_dir: store,
                cors_origins,
                max_retries_on_noncompliance,
            };
            let rt = tokio::runtime::Runtime::new().map_err(CliError::from)?;
            rt.block_on(service::serve(config, GatewayPool::from_env()))
                .map_err(CliError::from)?;
            Ok(0)
        }
        Command::ServeMock { fixture, listen } => {
            let fixture = match fixture.as_str() {
                "cefr" => MockFixture::cefr(),
                "polarity" => MockFixture::polarity(),
                path => MockFixture::parse(&read_text(Path::new(path), io)?).map_err(CliError::from)?,
            };
            let server = BackgroundServer::start(mock_router(fixture), &listen).map_err(CliError::from)?;
            out!(io, "mock chat completions at {}", server.url("/v1/chat/completions"));
            io.stdout.flush().map_err(CliError::from)?;
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .map_err(CliError::from)?;
            rt.block_on(async {
                let _ = tokio::signal::ctrl_c().await;
            });
            drop(server);
            Ok(0)
        }
    }
}

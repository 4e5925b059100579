//! The conversation loop.
//!
//! One call to [`Controller::run_turn`] annotates the user's utterance,
//! advances the strategy, asks the gateway for a reply carrying the target
//! control code, and annotates the reply to record whether it complied.
//!
//! Sessions persist as append-only JSON-lines transcripts: a header record
//! followed by one record per turn. A [`SessionStore`] keeps an in-memory
//! index and reloads transcripts lazily, recomputing the strategy state by
//! folding the recorded user classes.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotators::{AnnotateError, Annotator};
use crate::gateway::{
    build_control_prompt, Gateway, GatewayError, Message, PromptError, Role, SamplingParams,
    TemplateSet,
};
use crate::ontology::OntologySpec;
use crate::strategy::{Strategy, StrategyError, StrategyState};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("turn {turn}: text is blank")]
    BlankInput { turn: usize },
    #[error("turn {turn}: annotation failed: {source}")]
    Annotation {
        turn: usize,
        #[source]
        source: AnnotateError,
    },
    #[error("turn {turn}: {source}")]
    Gateway {
        turn: usize,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("session has no pending target to retry")]
    NothingPending,
    #[error("session was created for concept `{session}`, controller serves `{controller}`")]
    ConceptMismatch { session: String, controller: String },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("transcript {path}: {message}")]
    Transcript { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl EngineError {
    pub fn gateway_error(&self) -> Option<&GatewayError> {
        match self {
            EngineError::Gateway { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub role: Role,
    pub text: String,
    /// Class of the text as annotated; `None` when an agent reply could not
    /// be annotated.
    pub detected: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compliant: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub id: String,
    pub concept: String,
    pub ontology: String,
    pub strategy: String,
    pub created_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TranscriptRecord {
    Session(SessionHeader),
    Turn(Turn),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    #[serde(flatten)]
    pub header: SessionHeader,
    pub state: StrategyState,
    pub turns: Vec<Turn>,
    /// Target computed for the last user turn when no reply was recorded.
    pub pending_target: Option<String>,
    #[serde(skip)]
    persisted: usize,
}

impl Session {
    pub fn new(ontology_id: &str, strategy_id: &str, spec: &OntologySpec, strategy: &Strategy) -> Self {
        Session {
            header: SessionHeader {
                id: uuid::Uuid::new_v4().to_string(),
                concept: spec.concept.clone(),
                ontology: ontology_id.to_string(),
                strategy: strategy_id.to_string(),
                created_ms: now_ms(),
            },
            state: strategy.initial_state(),
            turns: Vec::new(),
            pending_target: None,
            persisted: 0,
        }
    }

    pub fn id(&self) -> &str {
        &self.header.id
    }

    /// Rebuilds a session from its transcript, refolding the strategy state.
    pub fn replay(header: SessionHeader, turns: Vec<Turn>, strategy: &Strategy) -> Result<Self, StrategyError> {
        let mut state = strategy.initial_state();
        let mut pending = None;
        for t in &turns {
            match t.role {
                Role::User => {
                    let detected = t.detected.as_deref().unwrap_or_default();
                    let (target, next) = strategy.next_target(detected, &state)?;
                    state = next;
                    pending = Some(target);
                }
                Role::Agent => pending = None,
            }
        }
        let persisted = turns.len();
        Ok(Session {
            header,
            state,
            turns,
            pending_target: pending,
            persisted,
        })
    }

    /// Targets recorded on agent turns, in order.
    pub fn agent_targets(&self) -> Vec<String> {
        self.turns
            .iter()
            .filter_map(|t| t.target.clone())
            .collect()
    }

    fn history(&self) -> Vec<Message> {
        self.turns
            .iter()
            .map(|t| Message {
                role: t.role,
                text: t.text.clone(),
            })
            .collect()
    }
}

/// What one completed exchange produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub detected: String,
    pub target: String,
    pub reply: String,
    pub reply_detected: Option<String>,
    pub compliant: bool,
    /// Generations made for this turn, including non-compliant retries.
    pub attempts: u32,
}

/// Everything needed to run turns for one ontology/strategy pair.
pub struct Controller {
    pub spec: Arc<OntologySpec>,
    pub strategy: Strategy,
    pub annotator: Arc<dyn Annotator>,
    pub gateway: Arc<dyn Gateway>,
    pub templates: Arc<TemplateSet>,
    pub template_id: String,
    pub params: SamplingParams,
    /// Extra generations allowed when a reply misses its target. Zero records
    /// compliance without regenerating.
    pub max_retries_on_noncompliance: u32,
}

impl Controller {
    pub fn new(
        spec: Arc<OntologySpec>,
        strategy: Strategy,
        annotator: Arc<dyn Annotator>,
        gateway: Arc<dyn Gateway>,
    ) -> Self {
        Controller {
            spec,
            strategy,
            annotator,
            gateway,
            templates: Arc::new(TemplateSet::default()),
            template_id: "fine-tuned".into(),
            params: SamplingParams::default(),
            max_retries_on_noncompliance: 0,
        }
    }

    pub fn with_template(mut self, templates: Arc<TemplateSet>, template_id: impl Into<String>) -> Self {
        self.templates = templates;
        self.template_id = template_id.into();
        self
    }

    pub fn with_noncompliance_retries(mut self, n: u32) -> Self {
        self.max_retries_on_noncompliance = n;
        self
    }

    pub fn new_session(&self, ontology_id: &str, strategy_id: &str) -> Session {
        Session::new(ontology_id, strategy_id, &self.spec, &self.strategy)
    }

    fn check_concept(&self, session: &Session) -> Result<(), EngineError> {
        if session.header.concept != self.spec.concept {
            return Err(EngineError::ConceptMismatch {
                session: session.header.concept.clone(),
                controller: self.spec.concept.clone(),
            });
        }
        Ok(())
    }

    /// Annotates `text`, records it, advances the strategy and generates the
    /// agent reply. On a gateway error the user turn stays recorded with its
    /// target pending; see [`Controller::retry_pending`].
    pub fn run_turn(&self, session: &mut Session, text: &str) -> Result<TurnOutcome, EngineError> {
        self.check_concept(session)?;
        let turn = session.turns.len();
        let text = text.trim();
        if text.is_empty() {
            return Err(EngineError::BlankInput { turn });
        }
        let detected = self
            .annotator
            .annotate(text)
            .map_err(|source| EngineError::Annotation { turn, source })?;
        let (target, state) = self.strategy.next_target(&detected, &session.state)?;
        session.turns.push(Turn {
            index: turn,
            role: Role::User,
            text: text.to_string(),
            detected: Some(detected),
            target: None,
            compliant: None,
            raw: None,
            request_id: None,
            timestamp_ms: now_ms(),
        });
        session.state = state;
        session.pending_target = Some(target);
        self.reply(session)
    }

    /// Generates the reply for a user turn whose generation failed.
    pub fn retry_pending(&self, session: &mut Session) -> Result<TurnOutcome, EngineError> {
        self.check_concept(session)?;
        if session.pending_target.is_none() {
            return Err(EngineError::NothingPending);
        }
        self.reply(session)
    }

    fn reply(&self, session: &mut Session) -> Result<TurnOutcome, EngineError> {
        let target = session.pending_target.clone().ok_or(EngineError::NothingPending)?;
        let user = session
            .turns
            .last()
            .filter(|t| t.role == Role::User)
            .cloned()
            .ok_or(EngineError::NothingPending)?;
        let turn = session.turns.len();
        let bundle = build_control_prompt(
            &session.history(),
            &target,
            &self.spec,
            &self.templates,
            &self.template_id,
            self.params.clone(),
        )?;
        let mut attempts = 0;
        let (generation, reply_detected) = loop {
            attempts += 1;
            let g = self
                .gateway
                .complete(&bundle)
                .map_err(|source| EngineError::Gateway { turn, source })?;
            let d = self.annotator.annotate(&g.clean).ok();
            if d.as_deref() == Some(target.as_str()) || attempts > self.max_retries_on_noncompliance {
                break (g, d);
            }
        };
        let compliant = reply_detected.as_deref() == Some(target.as_str());
        session.turns.push(Turn {
            index: turn,
            role: Role::Agent,
            text: generation.clean.clone(),
            detected: reply_detected.clone(),
            target: Some(target.clone()),
            compliant: Some(compliant),
            raw: Some(generation.raw),
            request_id: Some(generation.request_id),
            timestamp_ms: now_ms(),
        });
        session.pending_target = None;
        Ok(TurnOutcome {
            detected: user.detected.unwrap_or_default(),
            target,
            reply: generation.clean,
            reply_detected,
            compliant,
            attempts,
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a transcript file.
pub fn read_transcript(path: &Path) -> Result<(SessionHeader, Vec<Turn>), EngineError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let bad = |message: String| EngineError::Transcript {
        path: path.to_path_buf(),
        message,
    };
    let mut header = None;
    let mut turns = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TranscriptRecord =
            serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", i + 1)))?;
        match rec {
            TranscriptRecord::Session(h) if header.is_none() => header = Some(h),
            TranscriptRecord::Session(_) => return Err(bad(format!("line {}: second header", i + 1))),
            TranscriptRecord::Turn(t) if header.is_some() => turns.push(t),
            TranscriptRecord::Turn(_) => return Err(bad("turn before header".into())),
        }
    }
    let header = header.ok_or_else(|| bad("missing header".into()))?;
    Ok((header, turns))
}

/// Sessions indexed in memory, optionally backed by a transcript directory
/// with one `<id>.jsonl` file per session.
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        SessionStore {
            dir: None,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self, EngineError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(SessionStore {
            dir: Some(dir),
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path_of(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    /// Registers a new session and writes its header.
    pub fn insert(&self, mut session: Session) -> Result<Arc<Mutex<Session>>, EngineError> {
        if let Some(path) = self.path_of(session.id()) {
            let mut f = fs::File::create(&path).map_err(io_err(&path))?;
            let mut line = serde_json::to_string(&TranscriptRecord::Session(session.header.clone()))
                .expect("header serializes");
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(io_err(&path))?;
        }
        self.sync(&mut session)?;
        let id = session.id().to_string();
        let handle = Arc::new(Mutex::new(session));
        self.sessions
            .lock()
            .expect("store lock")
            .insert(id, Arc::clone(&handle));
        Ok(handle)
    }

    /// Looks a session up, loading its transcript on first access. `resolve`
    /// maps a header to the strategy the session was created with.
    pub fn get(
        &self,
        id: &str,
        resolve: impl FnOnce(&SessionHeader) -> Option<Strategy>,
    ) -> Result<Arc<Mutex<Session>>, EngineError> {
        let mut index = self.sessions.lock().expect("store lock");
        if let Some(s) = index.get(id) {
            return Ok(Arc::clone(s));
        }
        let valid_id = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
        let path = self
            .path_of(id)
            .filter(|p| valid_id && p.is_file())
            .ok_or_else(|| EngineError::UnknownSession(id.to_string()))?;
        let (header, turns) = read_transcript(&path)?;
        let strategy = resolve(&header).ok_or_else(|| EngineError::Transcript {
            path: path.clone(),
            message: format!(
                "cannot resolve ontology `{}` / strategy `{}`",
                header.ontology, header.strategy
            ),
        })?;
        let session = Session::replay(header, turns, &strategy)?;
        let handle = Arc::new(Mutex::new(session));
        index.insert(id.to_string(), Arc::clone(&handle));
        Ok(handle)
    }

    /// Appends turns not yet written to the transcript.
    pub fn sync(&self, session: &mut Session) -> Result<(), EngineError> {
        let Some(path) = self.path_of(session.id()) else {
            session.persisted = session.turns.len();
            return Ok(());
        };
        if session.persisted >= session.turns.len() {
            return Ok(());
        }
        let mut buf = String::new();
        for t in &session.turns[session.persisted..] {
            buf.push_str(&serde_json::to_string(&TranscriptRecord::Turn(t.clone())).expect("turn serializes"));
            buf.push('\n');
        }
        let mut f = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        f.write_all(buf.as_bytes()).map_err(io_err(&path))?;
        session.persisted = session.turns.len();
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotators::{ClassifierBackend, PolarityProfileAnnotator};
    use crate::gateway::{GatewayErrorKind, MockGateway};
    use crate::resources;
    use crate::strategy::{default_polarity_table, StrategySpec};

    /// Annotator that reads the class from a `#CLASS` suffix.
    struct Tagged(OntologySpec);

    impl Annotator for Tagged {
        fn ontology(&self) -> &OntologySpec {
            &self.0
        }
        fn annotate(&self, text: &str) -> Result<String, AnnotateError> {
            text.rsplit_once('#')
                .map(|(_, c)| c.trim().to_string())
                .ok_or(AnnotateError::BlankInput)
        }
    }

    fn tagged_controller(spec: OntologySpec, strategy: StrategySpec, gateway: MockGateway) -> Controller {
        let spec = Arc::new(spec);
        let strategy = Strategy::new(strategy, &spec).unwrap();
        Controller::new(
            Arc::clone(&spec),
            strategy,
            Arc::new(Tagged((*spec).clone())),
            Arc::new(gateway),
        )
    }

    fn echo_gateway() -> MockGateway {
        MockGateway::from_fn("echo", |b| Ok(format!("reply #{}", b.class)))
    }

    #[test]
    fn proficiency_trace() {
        let spec = OntologySpec::parse(resources::CEFR_ONTOLOGY).unwrap();
        let c = tagged_controller(spec, StrategySpec::OrdinalMax, echo_gateway());
        let mut s = c.new_session("cefr", "harder-only");
        let a = c.run_turn(&mut s, "What is machine learning? #A1").unwrap();
        let b = c.run_turn(&mut s, "Elaborate on the mathematics. #C2").unwrap();
        assert_eq!((a.target.as_str(), b.target.as_str()), ("A1", "C2"));
        assert!(a.compliant && b.compliant);
        let c3 = c.run_turn(&mut s, "ok #A2").unwrap();
        assert_eq!(c3.target, "C2");
        assert_eq!(s.turns.len(), 6);
        assert_eq!(s.turns[1].role, Role::Agent);
    }

    #[test]
    fn polarity_trace() {
        let spec = OntologySpec::parse(resources::POLARITY_ONTOLOGY).unwrap();
        let c = tagged_controller(spec, default_polarity_table(), echo_gateway());
        let mut s = c.new_session("polarity", "debate");
        for text in ["a #L+", "b #L0", "c #¬L0", "d #L-"] {
            c.run_turn(&mut s, text).unwrap();
        }
        assert_eq!(s.agent_targets(), ["L-", "L+", "¬L-", "¬L-"]);
    }

    #[test]
    fn gateway_failure_keeps_user_turn() {
        let spec = OntologySpec::parse(resources::CEFR_ONTOLOGY).unwrap();
        let c = tagged_controller(spec.clone(), StrategySpec::OrdinalMax, MockGateway::failing(GatewayErrorKind::Timeout));
        let mut s = c.new_session("cefr", "harder-only");
        let e = c.run_turn(&mut s, "hi #B1").unwrap_err();
        assert_eq!(e.gateway_error().unwrap().kind, GatewayErrorKind::Timeout);
        assert!(matches!(e, EngineError::Gateway { turn: 1, .. }));
        assert_eq!(s.turns.len(), 1);
        assert_eq!(s.pending_target.as_deref(), Some("B1"));
        assert_eq!(s.state.current_max.as_deref(), Some("B1"));

        let ok = tagged_controller(spec, StrategySpec::OrdinalMax, echo_gateway());
        let out = ok.retry_pending(&mut s).unwrap();
        assert_eq!(out.target, "B1");
        assert_eq!(s.turns.len(), 2);
        assert!(matches!(ok.retry_pending(&mut s), Err(EngineError::NothingPending)));
    }

    #[test]
    fn noncompliance_retries_are_opt_in() {
        let spec = OntologySpec::parse(resources::CEFR_ONTOLOGY).unwrap();
        let calls = Arc::new(std::sync::atomic::AtomicU32::new(0));
        let counter = Arc::clone(&calls);
        let gw = MockGateway::from_fn("flaky", move |b| {
            let n = counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(if n % 3 == 2 { format!("x #{}", b.class) } else { "x #A1".into() })
        });
        let c = tagged_controller(spec.clone(), StrategySpec::OrdinalMax, gw.clone());
        let mut s = c.new_session("cefr", "harder-only");
        let out = c.run_turn(&mut s, "q #C1").unwrap();
        assert!(!out.compliant);
        assert_eq!(out.attempts, 1);
        let c = tagged_controller(spec, StrategySpec::OrdinalMax, gw).with_noncompliance_retries(4);
        let mut s = c.new_session("cefr", "harder-only");
        let out = c.run_turn(&mut s, "q #C1").unwrap();
        assert!(out.compliant);
        assert_eq!(out.attempts, 2);
    }

    #[test]
    fn blank_and_unannotatable_input() {
        let spec = Arc::new(OntologySpec::parse(resources::POLARITY_ONTOLOGY).unwrap());
        struct Down;
        impl ClassifierBackend for Down {
            fn symbols(&self) -> &[String] {
                &[]
            }
            fn kind(&self) -> crate::annotators::BackendKind {
                crate::annotators::BackendKind::RemoteHttp
            }
            fn classify(&self, _: &str) -> Result<crate::annotators::ClassifierVerdict, crate::annotators::BackendError> {
                Err(crate::annotators::BackendError::BackendUnavailable {
                    attempts: 2,
                    message: "down".into(),
                })
            }
        }
        let ann = PolarityProfileAnnotator::new(Arc::new(Down), Arc::new(Down), Arc::clone(&spec)).unwrap();
        let c = Controller::new(
            Arc::clone(&spec),
            Strategy::new(default_polarity_table(), &spec).unwrap(),
            Arc::new(ann),
            Arc::new(echo_gateway()),
        );
        let mut s = c.new_session("polarity", "debate");
        assert!(matches!(c.run_turn(&mut s, "  "), Err(EngineError::BlankInput { turn: 0 })));
        assert!(matches!(c.run_turn(&mut s, "hello"), Err(EngineError::Annotation { turn: 0, .. })));
        assert!(s.turns.is_empty());
    }

    #[test]
    fn transcript_round_trip_and_lazy_rehydration() {
        let dir = tempfile::tempdir().unwrap();
        let spec = OntologySpec::parse(resources::CEFR_ONTOLOGY).unwrap();
        let c = tagged_controller(spec.clone(), StrategySpec::OrdinalMax, echo_gateway());
        let store = SessionStore::on_disk(dir.path()).unwrap();
        let handle = store.insert(c.new_session("cefr", "harder-only")).unwrap();
        let id = {
            let mut s = handle.lock().unwrap();
            c.run_turn(&mut s, "a #B2").unwrap();
            c.run_turn(&mut s, "b #A1").unwrap();
            store.sync(&mut s).unwrap();
            s.id().to_string()
        };
        let original = handle.lock().unwrap().clone();

        let fresh = SessionStore::on_disk(dir.path()).unwrap();
        let resolve = |_: &SessionHeader| Strategy::new(StrategySpec::OrdinalMax, &spec).ok();
        let loaded = fresh.get(&id, resolve).unwrap();
        let loaded = loaded.lock().unwrap();
        assert_eq!(loaded.turns, original.turns);
        assert_eq!(loaded.state, original.state);
        assert_eq!(loaded.header, original.header);
        assert!(matches!(
            fresh.get("../etc", |_| None),
            Err(EngineError::UnknownSession(_))
        ));
        let lines = fs::read_to_string(dir.path().join(format!("{id}.jsonl"))).unwrap();
        assert_eq!(lines.lines().count(), 5);
    }
}

//! Two steered conversations against the bundled mock model: one on
//! proficiency with the harder-only strategy, one on polarity profiles with
//! the debate table. Transcripts are written as JSON lines and reloaded.
//!
//! ```text
//! cargo run --example converse_mock
//! ```
//!
//! Set `ONTO_LLM_URL` (and optionally `ONTO_LLM_KEY`, `ONTO_LLM_MODEL`) to
//! talk to an OpenAI-compatible endpoint instead of the mock.

use std::sync::Arc;

use ontoctl::engine::{read_transcript, Controller, Session, SessionStore};
use ontoctl::interface::{Catalog, GatewayPool};

fn converse(
    catalog: &Catalog,
    gateways: &GatewayPool,
    store: &SessionStore,
    ontology: &str,
    strategy: &str,
    user_turns: &[&str],
) -> Result<String, Box<dyn std::error::Error>> {
    let spec = catalog.ontology(ontology)?;
    let controller = Controller::new(
        Arc::clone(&spec),
        catalog.strategy(strategy, ontology)?,
        catalog.annotator(ontology)?,
        gateways.get(&spec.concept)?,
    );
    let handle = store.insert(controller.new_session(ontology, strategy))?;
    let mut session = handle.lock().expect("session lock");
    println!("== {} / {strategy} (session {})", spec.concept, session.id());
    for text in user_turns {
        let out = controller.run_turn(&mut session, text)?;
        println!("user  [{}] {text}", out.detected);
        println!(
            "agent [target {} | detected {} | {}] {}",
            out.target,
            out.reply_detected.as_deref().unwrap_or("?"),
            if out.compliant { "compliant" } else { "off target" },
            out.reply
        );
        store.sync(&mut session)?;
    }
    Ok(session.id().to_string())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = Catalog::bundled();
    let gateways = GatewayPool::from_env();
    let dir = std::env::temp_dir().join(format!("ontoctl-converse-{}", std::process::id()));
    let store = SessionStore::on_disk(&dir)?;

    let cefr_id = converse(
        &catalog,
        &gateways,
        &store,
        "cefr",
        "harder-only",
        &[
            "What is machine learning?",
            "Unsupervised representation learning identifies latent organizational regularities within unannotated, high-dimensional observational distributions.",
            "Is it hard?",
        ],
    )?;
    converse(
        &catalog,
        &gateways,
        &store,
        "polarity",
        "debate",
        &[
            "I love this idea, it is wonderful!",
            "Listen to me, it is a table!",
            "The meeting starts at nine in the second room.",
            "This plan is terrible and I hate it!",
        ],
    )?;

    // A transcript file replays to the same strategy state.
    let path = dir.join(format!("{cefr_id}.jsonl"));
    let (header, turns) = read_transcript(&path)?;
    let replayed = Session::replay(header, turns, &catalog.strategy("harder-only", "cefr")?)?;
    println!(
        "\nreloaded {} turns from {}; targets {:?}",
        replayed.turns.len(),
        path.display(),
        replayed.agent_targets()
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

//! Annotates texts with both bundled ontologies. The polarity profile is
//! computed twice: with the bundled lexicon backends, and with remote
//! classifier backends served by a small local HTTP stub.
//!
//! ```text
//! cargo run --example annotate_texts
//! cargo run --example annotate_texts -- "Some text to annotate."
//! ```

use std::sync::Arc;
use std::time::Duration;

use axum::routing::post;
use axum::{Json, Router};
use ontoctl::annotators::{
    Annotator, ClassifierBackend, LexiconLoad, LexiconPolarity, PolarityProfileAnnotator, RemoteClassifier,
    LOAD_SYMBOLS, POLARITY_SYMBOLS,
};
use ontoctl::interface::service::BackgroundServer;
use ontoctl::interface::Catalog;
use serde_json::Value;

/// An HTTP classifier that answers `{"text"}` with `{"label", "confidence"}`,
/// here backed by a lexicon so the two runs can be compared.
fn stub(backend: Arc<dyn ClassifierBackend>) -> Router {
    Router::new().route(
        "/",
        post(move |Json(req): Json<Value>| {
            let backend = Arc::clone(&backend);
            async move {
                let text = req["text"].as_str().unwrap_or_default();
                Json(serde_json::to_value(backend.classify(text).expect("lexicon backend")).expect("verdict"))
            }
        }),
    )
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut texts: Vec<String> = std::env::args().skip(1).collect();
    if texts.is_empty() {
        texts = [
            "What is machine learning?",
            "This is wonderful, I love it!",
            "The meeting starts at nine in the second room.",
            "That is a terrible and dangerous idea!",
            "Contemporary organizational theory emphasizes the interdependence between institutional structures and individual motivation.",
        ]
        .map(String::from)
        .to_vec();
    }

    let catalog = Catalog::bundled();
    let cefr = catalog.annotator("cefr")?;
    let lexicon = catalog.annotator("polarity")?;

    let load_server = BackgroundServer::start(stub(Arc::new(LexiconLoad::default())), "127.0.0.1:0")?;
    let pol_server = BackgroundServer::start(stub(Arc::new(LexiconPolarity::default())), "127.0.0.1:0")?;
    let symbols = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let remote = PolarityProfileAnnotator::new(
        Arc::new(RemoteClassifier::new(load_server.url("/"), symbols(&LOAD_SYMBOLS), Duration::from_secs(2), 1)),
        Arc::new(RemoteClassifier::new(pol_server.url("/"), symbols(&POLARITY_SYMBOLS), Duration::from_secs(2), 1)),
        catalog.ontology("polarity")?,
    )?;

    println!("{:<5} {:<6} {:<6} {:<28} text", "cefr", "lex", "remote", "load / polarity verdicts");
    for t in &texts {
        let (load, pol) = remote.verdicts(t)?;
        println!(
            "{:<5} {:<6} {:<6} {:<28} {}",
            cefr.annotate(t)?,
            lexicon.annotate(t)?,
            remote.annotate(t)?,
            format!("{} {:.2} / {} {:.2}", load.label, load.confidence, pol.label, pol.confidence),
            t
        );
    }
    Ok(())
}

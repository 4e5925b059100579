//! Starts the HTTP API on a free local port with the mock model, then drives
//! it like the chat UI would.
//!
//! ```text
//! cargo run --example http_service
//! cargo run --example http_service -- --serve 127.0.0.1:8080
//! ```
//!
//! With `--serve` the service keeps running until Ctrl-C, for use with the
//! browser client or curl.

use std::sync::Arc;

use ontoctl::engine::SessionStore;
use ontoctl::interface::service::{router, AppState, BackgroundServer};
use ontoctl::interface::{Catalog, GatewayPool};
use serde_json::{json, Value};

fn call(agent: &ureq::Agent, method: &str, url: &str, body: Option<Value>) -> Result<(u16, Value), ureq::Error> {
    let mut resp = match (method, body) {
        ("GET", _) => agent.get(url).call()?,
        (_, Some(b)) => agent.post(url).send_json(b)?,
        (_, None) => agent.post(url).send_empty()?,
    };
    let status = resp.status().as_u16();
    let v: Value = resp.body_mut().read_json()?;
    Ok((status, v))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let state = Arc::new(AppState::new(
        Catalog::bundled(),
        SessionStore::in_memory(),
        GatewayPool::from_env(),
    ));
    let app = router(state, &["*".to_string()]);

    if let Some(pos) = args.iter().position(|a| a == "--serve") {
        let addr = args.get(pos + 1).cloned().unwrap_or_else(|| "127.0.0.1:8080".into());
        let server = BackgroundServer::start(app, &addr)?;
        println!("serving on {} (Ctrl-C to stop)", server.url(""));
        loop {
            std::thread::park();
        }
    }

    let server = BackgroundServer::start(app, "127.0.0.1:0")?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into();

    let (_, health) = call(&agent, "GET", &server.url("/health"), None)?;
    println!("GET /health -> {health}");
    let (_, onts) = call(&agent, "GET", &server.url("/ontologies"), None)?;
    for o in onts["ontologies"].as_array().into_iter().flatten() {
        println!("  ontology {} ({}): {} via {}", o["id"], o["concept"], o["classes"], o["strategies"]);
    }

    let (status, session) = call(
        &agent,
        "POST",
        &server.url("/sessions"),
        Some(json!({"ontology": "polarity", "strategy": "debate"})),
    )?;
    let id = session["id"].as_str().unwrap_or_default().to_string();
    println!("POST /sessions -> {status} id {id}");

    for text in ["I love this idea, it is wonderful!", "The meeting starts at nine in the second room."] {
        let (status, turn) = call(
            &agent,
            "POST",
            &server.url(&format!("/sessions/{id}/turns")),
            Some(json!({ "text": text })),
        )?;
        println!("POST turn {text:?} -> {status}\n  {turn}");
    }

    let (status, err) = call(
        &agent,
        "POST",
        &server.url(&format!("/sessions/{id}/turns")),
        Some(json!({"text": "   "})),
    )?;
    println!("blank text -> {status} {err}");
    let (status, err) = call(&agent, "GET", &server.url("/sessions/no-such-session"), None)?;
    println!("unknown session -> {status} {err}");

    let (_, transcript) = call(&agent, "GET", &server.url(&format!("/sessions/{id}")), None)?;
    for t in transcript["turns"].as_array().into_iter().flatten() {
        println!(
            "  #{} {:<5} detected {:<4} target {:<4} {}",
            t["index"], t["role"].as_str().unwrap_or(""), t["detected"], t["target"], t["text"]
        );
    }
    Ok(())
}

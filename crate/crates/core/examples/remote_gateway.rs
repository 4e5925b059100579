//! The chat-completions client against a local OpenAI-compatible mock server.
//! Shows the request body, the raw and cleaned reply, and how an unreachable
//! endpoint surfaces as a typed error.
//!
//! ```text
//! cargo run --example remote_gateway
//! ```

use std::time::Duration;

use ontoctl::gateway::{
    build_control_prompt, chat_request, mock_router, Gateway, Message, MockFixture, OpenAiGateway,
    SamplingParams, TemplateSet,
};
use ontoctl::interface::service::BackgroundServer;
use ontoctl::interface::Catalog;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let server = BackgroundServer::start(mock_router(MockFixture::polarity()), "127.0.0.1:0")?;
    let url = server.url("/v1/chat/completions");
    let gateway = OpenAiGateway::new(&url, Some("demo-key".into()), "mock-model", Duration::from_secs(5));

    let spec = Catalog::bundled().ontology("polarity")?;
    let templates = TemplateSet::default();
    let history = [
        Message::user("Should cities ban cars from the centre?"),
        Message::agent("Many cities already limit traffic in their centres."),
        Message::user("I think it is a wonderful idea!"),
    ];
    for template in ["fine-tuned", "zero-shot"] {
        let bundle = build_control_prompt(&history, "¬L-", &spec, &templates, template, SamplingParams::default())?;
        if template == "fine-tuned" {
            println!("request body:\n{}\n", serde_json::to_string_pretty(&chat_request("mock-model", &bundle))?);
        }
        let g = gateway.complete(&bundle)?;
        println!("[{template}] {} in {} ms", g.request_id, g.latency_ms);
        println!("  raw:   {}", g.raw);
        println!("  clean: {}", g.clean);
        println!("  right label: {:?}", g.right_label);
    }

    drop(server);
    let bundle = build_control_prompt(&history, "L+", &spec, &templates, "fine-tuned", SamplingParams::default())?;
    match gateway.complete(&bundle) {
        Ok(g) => println!("unexpected reply {}", g.raw),
        Err(e) => println!("\nafter shutdown: {e}\n  {}", serde_json::to_string(&e)?),
    }
    println!("endpoint id: {}", gateway.endpoint_id());
    Ok(())
}

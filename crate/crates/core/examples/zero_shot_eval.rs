//! Zero-shot controllability evaluation: every question is asked once per
//! class, the replies are annotated and compared with the requested class.
//!
//! Three gateways are compared on the proficiency ontology: a mock that always
//! complies, a mock that always answers with the same sentence, and a mock
//! that fails half of its calls.
//!
//! ```text
//! cargo run --example zero_shot_eval
//! ```

use std::sync::atomic::{AtomicU64, Ordering};

use ontoctl::eval::{zero_shot_eval, EvalConfig};
use ontoctl::gateway::{GatewayErrorKind, MockFixture, MockGateway, TemplateSet};
use ontoctl::interface::Catalog;

const QUESTIONS: [&str; 4] = [
    "What is machine learning?",
    "How do plants make food?",
    "Why do people travel?",
    "What causes inflation?",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = Catalog::bundled();
    let spec = catalog.ontology("cefr")?;
    let annotator = catalog.annotator("cefr")?;
    let templates = TemplateSet::default();
    let questions: Vec<String> = QUESTIONS.map(String::from).to_vec();
    let config = EvalConfig {
        question_set_id: "demo-4".into(),
        ..EvalConfig::default()
    };

    let prompt = templates.render("zero-shot", &spec.concept, "B2")?;
    println!("zero-shot instruction for B2:\n  {prompt}\n");

    let compliant = MockGateway::from_fixture(MockFixture::cefr());
    let constant = MockGateway::constant("My brother works in a small shop near the station.");
    let fixture = MockFixture::cefr();
    let calls = AtomicU64::new(0);
    let flaky = MockGateway::from_fn("mock:flaky", move |b| {
        if calls.fetch_add(1, Ordering::SeqCst) % 2 == 0 {
            Err(GatewayErrorKind::Timeout)
        } else {
            fixture.reply(&b.class).ok_or(GatewayErrorKind::Malformed)
        }
    });

    for gateway in [&compliant, &constant, &flaky] {
        let report = zero_shot_eval(&questions, &spec, annotator.as_ref(), gateway, &templates, &config)?;
        print!("{}", report.summary());
        let rows = report.confusion.to_string();
        for line in rows.lines() {
            println!("    {line}");
        }
        println!();
    }
    Ok(())
}

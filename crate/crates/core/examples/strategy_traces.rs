//! Runs the two bundled strategies over fixed sequences of detected user
//! classes and prints the resulting agent targets.
//!
//! ```text
//! cargo run --example strategy_traces
//! cargo run --example strategy_traces -- A2 B1 A1 C1 B2
//! ```

use ontoctl::interface::Catalog;

fn show(catalog: &Catalog, strategy: &str, ontology: &str, detected: &[&str]) -> Result<(), Box<dyn std::error::Error>> {
    let s = catalog.strategy(strategy, ontology)?;
    let targets = s.trace(detected)?;
    println!("{strategy} on {ontology}");
    println!("  detected: {}", detected.join(" "));
    println!("  targets:  {}", targets.join(" "));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = Catalog::bundled();
    let args: Vec<String> = std::env::args().skip(1).collect();
    if !args.is_empty() {
        let detected: Vec<&str> = args.iter().map(String::as_str).collect();
        let (strategy, ontology) = if detected.iter().all(|d| d.starts_with(['A', 'B', 'C'])) {
            ("harder-only", "cefr")
        } else {
            ("debate", "polarity")
        };
        return show(&catalog, strategy, ontology, &detected);
    }

    // A beginner question followed by an expert one: the target climbs and
    // never comes back down.
    show(&catalog, "harder-only", "cefr", &["A1", "C2"])?;
    show(&catalog, "harder-only", "cefr", &["B1", "A1", "B2", "A2", "C1"])?;

    // The debate table maps each detected polarity profile to a contrasting one.
    show(&catalog, "debate", "polarity", &["L+", "L0", "¬L0", "L-"])?;
    show(&catalog, "debate", "polarity", &["¬L+", "¬L-"])?;
    Ok(())
}

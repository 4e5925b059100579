//! Fits a decision tree on the bundled CEFR seed corpus and prints the
//! resulting ontology document. This is how `resources/cefr.ontology.json`
//! was produced:
//!
//! ```text
//! cargo run --example derive_cefr_rules -- resources/cefr.ontology.json
//! ```

use ontoctl::dataset::parse_jsonl;
use ontoctl::induction::{fit_tree, rules_to_ontology, LabeledSample, TreeConfig};
use ontoctl::resources;
use ontoctl::textmetrics::features;

const MAX_DEPTH: usize = 5;
const MIN_LEAF: usize = 2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records = parse_jsonl(resources::CEFR_SEED_CORPUS)?;
    let levels: Vec<String> = ["A1", "A2", "B1", "B2", "C1", "C2"].map(String::from).to_vec();
    let mut samples = Vec::new();
    for r in &records {
        let class = r.class.clone().expect("seed records are labelled");
        samples.push(LabeledSample::from_features(&features(&r.text)?, class));
    }

    let cfg = TreeConfig::text_features(levels, MAX_DEPTH, MIN_LEAF);
    let tree = fit_tree(&samples, &cfg)?;
    let spec = rules_to_ontology(&tree, "CEFR", true)?;
    let report = spec.check_consistency();

    let correct = samples.iter().filter(|s| tree.predict(&s.features) == s.label).count();
    eprintln!(
        "{} samples, depth {}, {} leaves, training accuracy {:.3}, {}",
        samples.len(),
        tree.depth(),
        tree.leaf_count(),
        correct as f64 / samples.len() as f64,
        report
    );
    for rule in &spec.rules {
        eprintln!("  {rule}");
    }
    for (r, s) in records.iter().zip(&samples) {
        let predicted = tree.predict(&s.features);
        if predicted != s.label {
            eprintln!("  misfit {} ({} predicted {predicted})", r.id, s.label);
        }
    }

    match std::env::args().nth(1) {
        Some(path) => std::fs::write(&path, spec.to_json() + "\n")?,
        None => println!("{}", spec.to_json()),
    }
    Ok(())
}

//! Checks ontologies for overlapping and uncovered regions.
//!
//! Without arguments it checks the two bundled ontologies and a deliberately
//! broken one; otherwise each argument is an ontology file.
//!
//! ```text
//! cargo run --example check_ontology
//! cargo run --example check_ontology -- my.ontology.json
//! ```

use ontoctl::ontology::OntologySpec;
use ontoctl::resources;

/// Readability bands where B1 and B2 overlap on fkgl 9..10 and nothing
/// covers fkgl 12..13.
const BROKEN: &str = r#"{
  "concept": "Grade",
  "classes": ["A", "B1", "B2", "C"],
  "ordinal": true,
  "descriptors": { "fkgl": "numeric", "load": { "categorical": ["loaded", "nonloaded"] } },
  "rules": [
    { "label": "A",  "predicates": [ { "feature": "fkgl", "hi": 5 } ] },
    { "label": "B1", "predicates": [ { "feature": "fkgl", "lo": 5, "hi": 10 } ] },
    { "label": "B2", "predicates": [ { "feature": "fkgl", "lo": 9, "hi": 12 } ] },
    { "label": "C",  "predicates": [ { "feature": "fkgl", "lo": 13 }, { "name": "load", "equals": "nonloaded" } ] }
  ]
}"#;

fn report(name: &str, spec: &OntologySpec) {
    let r = spec.check_consistency();
    print!("{name} ({} rules): {r}", spec.rules.len());
    // Every witness reproduces its violation through `classify`.
    for o in &r.overlaps {
        println!("    classify(witness) -> {:?}", spec.classify(&o.witness));
    }
    for g in &r.gaps {
        println!("    classify(witness) -> {:?}", spec.classify(&g.witness));
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let files: Vec<String> = std::env::args().skip(1).collect();
    if files.is_empty() {
        report("cefr", &OntologySpec::parse(resources::CEFR_ONTOLOGY)?);
        report("polarity", &OntologySpec::parse(resources::POLARITY_ONTOLOGY)?);
        report("broken", &OntologySpec::parse(BROKEN)?);
    } else {
        for f in files {
            report(&f, &OntologySpec::parse(&std::fs::read_to_string(&f)?)?);
        }
    }
    Ok(())
}

//! Semantic drift score B_r: how close the controlled model's answer stays to
//! what the original model said, relative to how much the original model
//! varies across seeds.
//!
//! ```text
//! cargo run --example br_score
//! cargo run --example br_score -- http://127.0.0.1:9000/embed
//! ```
//!
//! With a URL the similarity comes from a token embedding service
//! (`POST {"text"}` answered by `{"embeddings": [[...], ...]}`); otherwise
//! unigram F1 is used.

use ontoctl::eval::{br_score, EmbeddingSimilarity, Similarity, UnigramF1};
use ontoctl::interface::Catalog;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim: Box<dyn Similarity> = match std::env::args().nth(1) {
        Some(url) => Box::new(EmbeddingSimilarity::from_env(url)),
        None => Box::new(UnigramF1),
    };

    // Three seeds of the original model for two prompts.
    let pre = vec![
        vec![
            "Machine learning lets computers learn patterns from data.".to_string(),
            "Machine learning is how computers learn from examples.".to_string(),
            "With machine learning, computers learn patterns from examples.".to_string(),
        ],
        vec![
            "Plants make food from sunlight, water and air.".to_string(),
            "Plants use sunlight to turn water and air into food.".to_string(),
            "Using sunlight, plants make sugar from water and air.".to_string(),
        ],
    ];

    let unchanged: Vec<String> = pre.iter().map(|seeds| seeds[0].clone()).collect();
    let simplified = vec![
        "Computers learn from data.".to_string(),
        "Plants make food with light.".to_string(),
    ];
    let off_topic = vec![
        "The meeting starts at nine.".to_string(),
        "He has a red car.".to_string(),
    ];

    let cefr = catalog_spec("cefr")?;
    let polarity = catalog_spec("polarity")?;
    for (name, post) in [("first seed", &unchanged), ("simplified", &simplified), ("off topic", &off_topic)] {
        let score = br_score(&pre, post, sim.as_ref())?.with_caveat_for(&cefr);
        println!("  {name}: {score}");
    }

    // Seeds with no word in common leave nothing to normalise by.
    let disjoint = vec![vec!["red apples".to_string(), "blue sky".to_string()]];
    let b = br_score(&disjoint, &["red sky".to_string()], sim.as_ref())?;
    println!("  disjoint seeds: {b}, degenerate = {}", b.degenerate);

    // Polarity control may change meaning on purpose, which the score flags.
    let b = br_score(&pre, &simplified, sim.as_ref())?.with_caveat_for(&polarity);
    println!("  on a non-ordinal concept: {b}");
    Ok(())
}

fn catalog_spec(id: &str) -> Result<ontoctl::ontology::OntologySpec, Box<dyn std::error::Error>> {
    Ok((*Catalog::bundled().ontology(id)?).clone())
}

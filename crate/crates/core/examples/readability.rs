//! Prints the six text features for a few sentences, or for the lines of a
//! file given as the first argument.
//!
//! ```text
//! cargo run --example readability
//! cargo run --example readability -- questions.txt
//! ```

use ontoctl::textmetrics::{features, mtld_tokens, segment};

const DEFAULT_TEXTS: [&str; 4] = [
    "The cat sat on the mat.",
    "What is machine learning?",
    "Many people prefer working from home because it saves time and money.",
    "The phenomenological characterization of temporality remains irreducibly controversial.",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let texts: Vec<String> = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(String::from)
            .collect(),
        None => DEFAULT_TEXTS.map(String::from).to_vec(),
    };

    println!(
        "{:>7} {:>7} {:>7} {:>7} {:>7} {:>7}  text",
        "fkgl", "fog", "cl", "mtld", "pron", "awl"
    );
    for text in &texts {
        let f = features(text)?;
        println!(
            "{:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.3} {:>7.3}  {}",
            f.fkgl, f.gunning_fog, f.coleman_liau, f.mtld, f.pronoun_density, f.avg_word_length, text
        );
    }

    let t = segment("The cat sat on the mat.")?;
    println!(
        "\n\"The cat sat on the mat.\": {} sentence, {} words, {} syllables, {} letters",
        t.sentence_count(),
        t.word_count(),
        t.syllable_count(),
        t.letter_count()
    );
    println!("MTLD of a b a b a b = {}", mtld_tokens(&["a", "b", "a", "b", "a", "b"]));
    println!("MTLD of x x x x = {}", mtld_tokens(&["x", "x", "x", "x"]));
    Ok(())
}

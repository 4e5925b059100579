//! Builds a wrapped training corpus from the bundled seed utterances: every
//! record is annotated (or keeps its label), optionally balanced, shuffled
//! with a fixed seed and split. Running it twice gives identical files.
//!
//! ```text
//! cargo run --example build_corpus
//! cargo run --example build_corpus -- out/ --balance
//! ```

use std::path::PathBuf;

use ontoctl::dataset::{build_corpus, strip, CorpusOptions};
use ontoctl::interface::Catalog;
use ontoctl::resources;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let balance = args.iter().any(|a| a == "--balance");
    let out = args
        .iter()
        .find(|a| !a.starts_with("--"))
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("ontoctl-corpus-{}", std::process::id())));

    let catalog = Catalog::bundled();
    let annotator = catalog.annotator("cefr")?;

    // Drop the hand labels so that every record goes through the annotator.
    let input = out.with_extension("input.jsonl");
    let unlabeled: String = resources::CEFR_SEED_CORPUS
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).expect("seed line");
            v.as_object_mut().expect("object").remove("class");
            format!("{v}\n")
        })
        .collect();
    std::fs::write(&input, unlabeled)?;

    let options = CorpusOptions {
        split: vec![0.7, 0.15, 0.15],
        balance,
        ..CorpusOptions::default()
    };
    let first = build_corpus(&input, annotator.as_ref(), &out, &options)?;
    let train_a = std::fs::read(out.join("train.txt"))?;
    let second = build_corpus(&input, annotator.as_ref(), &out, &options)?;
    let train_b = std::fs::read(out.join("train.txt"))?;
    assert_eq!(first, second);
    assert_eq!(train_a, train_b);

    println!("{}", serde_json::to_string_pretty(&first)?);
    let train = String::from_utf8(train_a)?;
    println!("\nfirst training lines:");
    for line in train.lines().take(3) {
        let (text, class) = strip(line, "CEFR");
        println!("  {line}\n    -> {class:?}: {text}");
    }
    println!("\nwritten to {}", out.display());
    std::fs::remove_file(&input)?;
    Ok(())
}

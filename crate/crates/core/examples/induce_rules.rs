//! Fits a CART tree on a synthetic three-class dataset, turns its leaves
//! into ontology rules and confirms that the rules classify exactly like the
//! tree.
//!
//! ```text
//! cargo run --example induce_rules
//! ```

use ontoctl::induction::{fit_tree, rules_to_ontology, DecisionTree, LabeledSample, TreeConfig};
use ontoctl::ontology::DescriptorValues;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hidden_label(x: &[f64]) -> &'static str {
    if x[0] < 4.0 {
        "low"
    } else if x[1] < 0.5 * x[0] {
        "mid"
    } else {
        "high"
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples: Vec<LabeledSample> = (0..400)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..10.0)).collect();
            let label = hidden_label(&x);
            LabeledSample::new(x, label)
        })
        .collect();

    let labels = ["low", "mid", "high"].map(String::from).to_vec();
    let tree = fit_tree(&samples, &TreeConfig::anonymous(3, labels, 4, 5))?;
    println!("tree: depth {}, {} leaves", tree.depth(), tree.leaf_count());

    let spec = rules_to_ontology(&tree, "Synthetic", true)?;
    for rule in &spec.rules {
        println!("  {rule}");
    }
    print!("consistency: {}", spec.check_consistency());

    // The JSON form round-trips.
    let reloaded = DecisionTree::from_json(&tree.to_json())?;
    assert_eq!(reloaded, tree);

    let mut mismatches = 0;
    let mut agree_with_hidden = 0;
    let probes = 10_000;
    for _ in 0..probes {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..12.0)).collect();
        let values = x
            .iter()
            .enumerate()
            .fold(DescriptorValues::new(), |v, (i, &xi)| v.with_numeric(format!("f{i}"), xi));
        let by_rules = spec.classify(&values)?;
        if by_rules != tree.predict(&x) {
            mismatches += 1;
        }
        if by_rules == hidden_label(&x) {
            agree_with_hidden += 1;
        }
    }
    println!("tree vs rules on {probes} random points: {mismatches} mismatches");
    println!(
        "agreement with the generating rule: {:.3}",
        agree_with_hidden as f64 / probes as f64
    );
    Ok(())
}

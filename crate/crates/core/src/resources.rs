//! Files shipped with the crate.
//!
//! The default CEFR ruleset is illustrative: it was fitted on the small
//! hand-labelled seed corpus in `resources/cefr_seed_corpus.jsonl` and makes no
//! claim of agreement with expert CEFR annotation. Regenerate it with the
//! `derive_cefr_rules` example.

pub const PRONOUNS: &str = include_str!("../resources/pronouns.txt");
pub const POSITIVE_WORDS: &str = include_str!("../resources/positive.txt");
pub const NEGATIVE_WORDS: &str = include_str!("../resources/negative.txt");
pub const EMOTION_WORDS: &str = include_str!("../resources/emotion.txt");

pub const CEFR_ONTOLOGY: &str = include_str!("../resources/cefr.ontology.json");
pub const POLARITY_ONTOLOGY: &str = include_str!("../resources/polarity.ontology.json");

pub const HARDER_ONLY_STRATEGY: &str = include_str!("../resources/harder-only.strategy.json");
pub const DEBATE_STRATEGY: &str = include_str!("../resources/debate.strategy.json");

pub const TEMPLATES: &str = include_str!("../resources/templates.json");

pub const CEFR_SEED_CORPUS: &str = include_str!("../resources/cefr_seed_corpus.jsonl");
pub const MOCK_CEFR_FIXTURE: &str = include_str!("../resources/mock_cefr.json");
pub const MOCK_POLARITY_FIXTURE: &str = include_str!("../resources/mock_polarity.json");

/// Non-comment, non-blank trimmed lines of a lexicon file.
pub fn lexicon_lines(source: &str) -> impl Iterator<Item = &str> {
    source
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

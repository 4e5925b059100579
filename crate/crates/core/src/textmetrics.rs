//! English tokenization and the six linguistic descriptors used to place an
//! utterance on the CEFR scale.
//!
//! All readability formulas are computed over the whole text (one utterance,
//! possibly several sentences), never per sentence.

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resources;

/// TTR threshold at which an MTLD factor is considered complete.
pub const MTLD_THRESHOLD: f64 = 0.72;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("input contains no word token")]
    BlankInput,
}

/// One word token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    /// Lowercase surface form (letters and internal apostrophes).
    pub text: String,
    /// Number of alphabetic characters.
    pub letters: usize,
    /// Heuristic syllable count, always >= 1.
    pub syllables: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedText {
    sentences: Vec<Vec<Word>>,
}

impl TokenizedText {
    pub fn sentences(&self) -> &[Vec<Word>] {
        &self.sentences
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    pub fn words(&self) -> impl Iterator<Item = &Word> {
        self.sentences.iter().flatten()
    }

    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn letter_count(&self) -> usize {
        self.words().map(|w| w.letters).sum()
    }

    pub fn syllable_count(&self) -> usize {
        self.words().map(|w| w.syllables).sum()
    }

    /// Lowercase word forms in reading order.
    pub fn tokens(&self) -> Vec<&str> {
        self.words().map(|w| w.text.as_str()).collect()
    }
}

/// The six descriptor values of one text span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub fkgl: f64,
    pub gunning_fog: f64,
    pub mtld: f64,
    pub pronoun_density: f64,
    pub coleman_liau: f64,
    pub avg_word_length: f64,
}

impl FeatureVector {
    /// Descriptor names, in the column order used by training files.
    pub const NAMES: [&'static str; 6] = [
        "fkgl",
        "gunning_fog",
        "mtld",
        "pronoun_density",
        "coleman_liau",
        "avg_word_length",
    ];

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.fkgl,
            self.gunning_fog,
            self.mtld,
            self.pronoun_density,
            self.coleman_liau,
            self.avg_word_length,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        FeatureVector {
            fkgl: v[0],
            gunning_fog: v[1],
            mtld: v[2],
            pronoun_density: v[3],
            coleman_liau: v[4],
            avg_word_length: v[5],
        }
    }

    /// `(name, value)` pairs in canonical order.
    pub fn named(&self) -> impl Iterator<Item = (&'static str, f64)> {
        Self::NAMES.into_iter().zip(self.to_array())
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}')
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Splits on `.`, `!` or `?` when followed by whitespace or end of input.
/// Abbreviations are not special-cased.
fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !is_terminator(c) {
            continue;
        }
        let at_boundary = match chars.peek() {
            None => true,
            Some(&(_, next)) => next.is_whitespace(),
        };
        if at_boundary {
            let end = i + c.len_utf8();
            out.push(&text[start..end]);
            start = end;
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

/// Maximal runs of alphabetic characters, joined across single internal
/// apostrophes ("don't" is one word, "'tis" is "tis").
pub fn word_tokens(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut words = Vec::new();
    let mut current = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphabetic() {
            current.extend(c.to_lowercase());
        } else if is_apostrophe(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphabetic())
        {
            current.push('\'');
        } else if !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
        i += 1;
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

pub fn segment(text: &str) -> Result<TokenizedText, TextError> {
    let sentences: Vec<Vec<Word>> = split_sentences(text)
        .into_iter()
        .map(|s| {
            word_tokens(s)
                .into_iter()
                .map(|w| Word {
                    letters: w.chars().filter(|c| c.is_alphabetic()).count(),
                    syllables: count_syllables(&w),
                    text: w,
                })
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(TextError::BlankInput);
    }
    Ok(TokenizedText { sentences })
}

/// Vowel-group count with a silent-final-e correction, floored at 1.
pub fn count_syllables(word: &str) -> usize {
    let chars: Vec<char> = word.chars().flat_map(char::to_lowercase).collect();
    let mut groups = 0usize;
    let mut in_group = false;
    for &c in &chars {
        if is_vowel(c) {
            if !in_group {
                groups += 1;
            }
            in_group = true;
        } else {
            in_group = false;
        }
    }
    let n = chars.len();
    if n > 2 && chars[n - 1] == 'e' && !is_vowel(chars[n - 2]) {
        groups = groups.saturating_sub(1);
    }
    groups.max(1)
}

fn ratio(a: usize, b: usize) -> f64 {
    a as f64 / b as f64
}

/// Flesch-Kincaid grade level.
pub fn fkgl(t: &TokenizedText) -> f64 {
    let words = t.word_count();
    0.39 * ratio(words, t.sentence_count()) + 11.8 * ratio(t.syllable_count(), words) - 15.59
}

pub fn gunning_fog(t: &TokenizedText) -> f64 {
    let words = t.word_count();
    let complex = t.words().filter(|w| w.syllables >= 3).count();
    0.4 * (ratio(words, t.sentence_count()) + 100.0 * ratio(complex, words))
}

pub fn coleman_liau(t: &TokenizedText) -> f64 {
    let words = t.word_count();
    let letters_per_100 = 100.0 * ratio(t.letter_count(), words);
    let sentences_per_100 = 100.0 * ratio(t.sentence_count(), words);
    0.0588 * letters_per_100 - 0.296 * sentences_per_100 - 15.8
}

fn mtld_pass<'a>(tokens: impl Iterator<Item = &'a str>) -> (f64, usize) {
    let mut factors = 0.0;
    let mut seen: HashSet<&str> = HashSet::new();
    let mut run = 0usize;
    let mut total = 0usize;
    for tok in tokens {
        total += 1;
        run += 1;
        seen.insert(tok);
        if ratio(seen.len(), run) < MTLD_THRESHOLD {
            factors += 1.0;
            seen.clear();
            run = 0;
        }
    }
    if run > 0 {
        let ttr = ratio(seen.len(), run);
        factors += (1.0 - ttr) / (1.0 - MTLD_THRESHOLD);
    }
    (factors, total)
}

fn mtld_direction<'a>(tokens: impl Iterator<Item = &'a str>) -> f64 {
    let (factors, total) = mtld_pass(tokens);
    if factors == 0.0 {
        total as f64
    } else {
        total as f64 / factors
    }
}

/// Bidirectional MTLD over a raw token sequence.
pub fn mtld_tokens<S: AsRef<str>>(tokens: &[S]) -> f64 {
    let forward = mtld_direction(tokens.iter().map(AsRef::as_ref));
    let backward = mtld_direction(tokens.iter().rev().map(AsRef::as_ref));
    (forward + backward) / 2.0
}

pub fn mtld(t: &TokenizedText) -> f64 {
    mtld_tokens(&t.tokens())
}

/// A closed-class pronoun list.
#[derive(Debug, Clone)]
pub struct PronounLexicon {
    words: HashSet<String>,
}

impl PronounLexicon {
    /// Parses one lowercase token per line; blank lines and `#` comments are
    /// skipped.
    pub fn parse(source: &str) -> Self {
        let words = resources::lexicon_lines(source)
            .map(str::to_lowercase)
            .collect();
        PronounLexicon { words }
    }

    pub fn bundled() -> &'static PronounLexicon {
        static LEXICON: OnceLock<PronounLexicon> = OnceLock::new();
        LEXICON.get_or_init(|| PronounLexicon::parse(resources::PRONOUNS))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn pronoun_density_with(t: &TokenizedText, lexicon: &PronounLexicon) -> f64 {
    let hits = t.words().filter(|w| lexicon.contains(&w.text)).count();
    ratio(hits, t.word_count())
}

pub fn pronoun_density(t: &TokenizedText) -> f64 {
    pronoun_density_with(t, PronounLexicon::bundled())
}

pub fn avg_word_length(t: &TokenizedText) -> f64 {
    ratio(t.letter_count(), t.word_count())
}

pub fn features_of(t: &TokenizedText) -> FeatureVector {
    FeatureVector {
        fkgl: fkgl(t),
        gunning_fog: gunning_fog(t),
        mtld: mtld(t),
        pronoun_density: pronoun_density(t),
        coleman_liau: coleman_liau(t),
        avg_word_length: avg_word_length(t),
    }
}

pub fn features(text: &str) -> Result<FeatureVector, TextError> {
    segment(text).map(|t| features_of(&t))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAT: &str = "The cat sat on the mat.";

    fn words_of(t: &TokenizedText) -> Vec<Vec<&str>> {
        t.sentences()
            .iter()
            .map(|s| s.iter().map(|w| w.text.as_str()).collect())
            .collect()
    }

    #[test]
    fn segments_on_terminators() {
        let t = segment("The cat sat. It ran!").unwrap();
        assert_eq!(words_of(&t), vec![vec!["the", "cat", "sat"], vec!["it", "ran"]]);

        let t = segment("Hello").unwrap();
        assert_eq!(t.sentence_count(), 1);
        assert_eq!(t.word_count(), 1);

        // abbreviations split too
        let t = segment("Dr. nothing").unwrap();
        assert_eq!(words_of(&t), vec![vec!["dr"], vec!["nothing"]]);
    }

    #[test]
    fn decimal_points_do_not_split() {
        let t = segment("It costs 3.50 dollars today.").unwrap();
        assert_eq!(t.sentence_count(), 1);
        assert_eq!(t.tokens(), vec!["it", "costs", "dollars", "today"]);
    }

    #[test]
    fn apostrophes_are_internal_only() {
        assert_eq!(word_tokens("I don't 'know' y’all"), vec!["i", "don't", "know", "y'all"]);
        let t = segment("don't").unwrap();
        assert_eq!(t.letter_count(), 4);
    }

    #[test]
    fn blank_input_rejected() {
        assert_eq!(segment(""), Err(TextError::BlankInput));
        assert_eq!(segment("   \n\t"), Err(TextError::BlankInput));
        assert_eq!(segment("42 ... !!"), Err(TextError::BlankInput));
        assert!(features("").is_err());
    }

    #[test]
    fn syllables() {
        assert_eq!(count_syllables("cat"), 1);
        assert_eq!(count_syllables("because"), 2);
        assert_eq!(count_syllables("e"), 1);
        assert_eq!(count_syllables("the"), 1);
        assert_eq!(count_syllables("free"), 1);
        assert_eq!(count_syllables("beautiful"), 3);
        assert_eq!(count_syllables("extraordinary"), 5);
        assert_eq!(count_syllables("circumstances"), 4);
        assert_eq!(count_syllables("happened"), 3);
        assert_eq!(count_syllables("rhythm"), 1);
    }

    #[test]
    fn cat_sentence_readability() {
        let t = segment(CAT).unwrap();
        assert_eq!((t.sentence_count(), t.word_count(), t.syllable_count()), (1, 6, 6));
        assert_eq!(t.letter_count(), 17);
        assert!((fkgl(&t) - -1.45).abs() < 1e-9);
        assert!((gunning_fog(&t) - 2.4).abs() < 1e-9);
        assert!((coleman_liau(&t) - -4.07333).abs() < 1e-4);
        assert!((avg_word_length(&t) - 17.0 / 6.0).abs() < 1e-12);
        assert_eq!(pronoun_density(&t), 0.0);
    }

    #[test]
    fn fkgl_is_ratio_invariant() {
        let once = fkgl(&segment(CAT).unwrap());
        let twice = fkgl(&segment(&format!("{CAT} {CAT}")).unwrap());
        assert!((once - twice).abs() < 1e-9);
    }

    #[test]
    fn fkgl_polysyllabic_trace() {
        // 1 sentence, 3 words, 5 + 4 + 3 syllables
        let t = segment("Extraordinary circumstances happened.").unwrap();
        assert_eq!(t.syllable_count(), 12);
        let expected = 0.39 * 3.0 + 11.8 * 4.0 - 15.59;
        assert!((fkgl(&t) - expected).abs() < 1e-9);
        assert!((fkgl(&t) - 32.78).abs() < 1e-9);
    }

    #[test]
    fn gunning_fog_complex_words() {
        let t = segment("The beautiful cat sat.").unwrap();
        assert!((gunning_fog(&t) - 11.6).abs() < 1e-9);
        let t = segment("A dog ran. The sun is hot.").unwrap();
        assert!((gunning_fog(&t) - 0.4 * 3.5).abs() < 1e-12);
    }

    #[test]
    fn coleman_liau_hundred_words() {
        let sentence = vec!["hello"; 20].join(" ") + ".";
        let text = vec![sentence; 5].join(" ");
        let t = segment(&text).unwrap();
        assert_eq!((t.word_count(), t.letter_count(), t.sentence_count()), (100, 500, 5));
        assert!((coleman_liau(&t) - 12.12).abs() < 1e-9);
    }

    #[test]
    fn mtld_traces() {
        assert_eq!(mtld_tokens(&["a", "b", "a", "b", "a", "b"]), 3.0);
        assert_eq!(mtld_tokens(&["x", "x", "x", "x"]), 2.0);
        assert_eq!(mtld_tokens(&["a", "b", "c", "d"]), 4.0);
    }

    #[test]
    fn mtld_partial_factor() {
        // forward: factor at "a a" (TTR .5), then [b] remains with TTR 1 -> partial 0
        // backward: [b, a] TTR 1, then a -> 2/3 < .72 -> factor; nothing left
        // forward = 3 / 1, backward = 3 / 1
        assert_eq!(mtld_tokens(&["a", "a", "b"]), 3.0);
        // [a b c a]: TTR 3/4 never drops, partial (1 - .75)/.28 both ways
        let v = mtld_tokens(&["a", "b", "c", "a"]);
        assert!((v - 4.0 / (0.25 / 0.28)).abs() < 1e-12);
    }

    #[test]
    fn pronoun_density_examples() {
        let t = segment("I like it.").unwrap();
        assert!((pronoun_density(&t) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(pronoun_density(&segment("Cats sleep.").unwrap()), 0.0);
        let t = segment("They saw them there.").unwrap();
        assert!((pronoun_density(&t) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lexicon_parsing() {
        let lex = PronounLexicon::parse("# header\nshe\n\n  HE  \n# it\n");
        assert_eq!(lex.len(), 2);
        assert!(lex.contains("he"));
        assert!(!lex.contains("it"));
        assert_eq!(PronounLexicon::bundled().len(), 61);
    }

    #[test]
    fn avg_word_length_examples() {
        assert_eq!(avg_word_length(&segment("a a a").unwrap()), 1.0);
        assert_eq!(avg_word_length(&segment("abcd").unwrap()), 4.0);
    }

    #[test]
    fn feature_vector_for_cat_sentence() {
        let f = features(CAT).unwrap();
        // "the" repeats at position 5: TTR 5/5 then 5/6 = .833, never below .72
        let partial = (1.0 - 5.0 / 6.0) / (1.0 - MTLD_THRESHOLD);
        let expected_mtld = 6.0 / partial;
        assert!((f.fkgl - -1.45).abs() < 1e-9);
        assert!((f.gunning_fog - 2.4).abs() < 1e-9);
        assert!((f.mtld - expected_mtld).abs() < 1e-9);
        assert_eq!(f.pronoun_density, 0.0);
        assert!((f.coleman_liau - -4.07).abs() < 0.01);
        assert!((f.avg_word_length - 17.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn sentence_permutation_keeps_count_features() {
        let a = features("The dog barked loudly. Everyone in the house woke up.").unwrap();
        let b = features("Everyone in the house woke up. The dog barked loudly.").unwrap();
        assert!((a.fkgl - b.fkgl).abs() < 1e-12);
        assert!((a.gunning_fog - b.gunning_fog).abs() < 1e-12);
        assert!((a.coleman_liau - b.coleman_liau).abs() < 1e-12);
        assert!((a.avg_word_length - b.avg_word_length).abs() < 1e-12);
    }
}

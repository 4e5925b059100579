//! Ontology-driven conversational control.
//!
//! Utterances are annotated with a class of a small ontology (CEFR levels
//! computed from readability features, or an emotional polarity profile). A
//! declarative strategy picks the class the next agent utterance should have,
//! and that class is passed to a language model as a bracketed control code,
//! e.g. `[CEFR: B1]`. The reply is annotated again to measure compliance.
//!
//! | module | role |
//! |---|---|
//! | [`textmetrics`] | tokenizer and the six readability/lexical features |
//! | [`induction`] | CART trees over features and rule extraction |
//! | [`ontology`] | class definitions, classification, consistency checking |
//! | [`strategy`] | next-target policies |
//! | [`annotators`] | text to class, feature based or classifier based |
//! | [`dataset`] | label wrapping, balancing, fine-tuning corpora |
//! | [`gateway`] | control prompts and chat-completion clients |
//! | [`engine`] | the conversation loop and transcripts |
//! | [`eval`] | zero-shot evaluation and metrics |
//! | [`interface`] | CLI and HTTP service |

pub mod annotators;
pub mod dataset;
pub mod engine;
pub mod eval;
pub mod gateway;
mod http;
pub mod induction;
pub mod interface;
pub mod ontology;
pub mod resources;
pub mod strategy;
pub mod textmetrics;

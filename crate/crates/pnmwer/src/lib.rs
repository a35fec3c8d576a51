//! MWER fine-tuning losses specialized for proper-noun recognition, plus the
//! surrounding toolkit: word-level alignment and WER, a lexicon tagger for
//! proper-noun spans, phonetic fuzz-dictionary construction, a small linear
//! rescorer trained with the losses, corpus evaluation metrics, and a
//! deterministic synthetic benchmark generator.

pub mod align;
pub mod cli;
pub mod corpus;
mod error;
pub mod eval;
pub mod features;
mod fileio;
pub mod fuzz;
pub mod loss;
pub mod synth;
pub mod tagger;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
pub use types::{tokenize, Beam, Hypothesis, ProperNounSpan, Token, Transcript, Utterance};

//! Core domain types shared by every other module: tokens, transcripts,
//! proper-noun spans, scored hypotheses and beams.

use crate::error::{Error, Result};

/// A single word of a transcript. Non-empty, contains no whitespace, and
/// caches its lowercase form for the case-insensitive comparisons that WER
/// and containment default to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    text: String,
    lower: String,
}

impl Token {
    /// Returns `None` if `text` is empty or contains whitespace.
    pub fn new(text: &str) -> Option<Token> {
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            return None;
        }
        Some(Token {
            text: text.to_string(),
            lower: text.to_lowercase(),
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn lower(&self) -> &str {
        &self.lower
    }

    /// Token equality under the selected case mode.
    pub fn matches(&self, other: &Token, case_sensitive: bool) -> bool {
        if case_sensitive {
            self.text == other.text
        } else {
            self.lower == other.lower
        }
    }
}

/// An ordered sequence of tokens. May be empty: an empty reference is legal
/// input for alignment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    tokens: Vec<Token>,
}

impl Transcript {
    pub fn new(tokens: Vec<Token>) -> Transcript {
        Transcript { tokens }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Joins the original token texts with single spaces. `tokenize(join(t))`
    /// is the identity on transcripts.
    pub fn join(&self) -> String {
        let mut out = String::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(tok.text());
        }
        out
    }

    /// Lowercase join, used wherever case-normalized text is compared.
    pub fn join_lower(&self) -> String {
        let mut out = String::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(tok.lower());
        }
        out
    }

    /// True iff `seq` appears as a contiguous run of whole tokens of `self`
    /// under the selected case mode. Partial-token matches do not count:
    /// "cedar rapids" is not contained in "cedar rapidss". The empty
    /// sequence is contained in nothing.
    pub fn contains_sequence(&self, seq: &[Token], case_sensitive: bool) -> bool {
        self.find_sequence(seq, case_sensitive).is_some()
    }

    /// Index of the leftmost occurrence of `seq`, if any.
    pub fn find_sequence(&self, seq: &[Token], case_sensitive: bool) -> Option<usize> {
        if seq.is_empty() || seq.len() > self.tokens.len() {
            return None;
        }
        (0..=self.tokens.len() - seq.len()).find(|&start| {
            seq.iter()
                .zip(&self.tokens[start..])
                .all(|(a, b)| a.matches(b, case_sensitive))
        })
    }

    /// Replaces `length` tokens starting at `start` with `replacement`.
    pub(crate) fn splice(&self, start: usize, length: usize, replacement: &[Token]) -> Transcript {
        let mut tokens = Vec::with_capacity(self.tokens.len() - length + replacement.len());
        tokens.extend_from_slice(&self.tokens[..start]);
        tokens.extend_from_slice(replacement);
        tokens.extend_from_slice(&self.tokens[start + length..]);
        Transcript::new(tokens)
    }
}

/// Splits on runs of whitespace, preserving the original casing of each
/// token. Empty or whitespace-only input yields an empty transcript.
pub fn tokenize(text: &str) -> Transcript {
    Transcript::new(text.split_whitespace().filter_map(Token::new).collect())
}

/// A tagged proper-noun occurrence inside a reference transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProperNounSpan {
    pub start: usize,
    /// Token count, always ≥ 1.
    pub length: usize,
}

impl ProperNounSpan {
    pub fn new(start: usize, length: usize) -> ProperNounSpan {
        ProperNounSpan { start, length }
    }

    /// One past the last covered token index.
    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn overlaps(&self, other: &ProperNounSpan) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

/// Checks that spans are non-empty, in bounds, and mutually non-overlapping.
pub fn validate_spans(spans: &[ProperNounSpan], transcript_len: usize) -> Result<()> {
    for (i, span) in spans.iter().enumerate() {
        if span.length == 0 {
            return Err(Error::InvalidInput(format!("span {i} has zero length")));
        }
        if span.end() > transcript_len {
            return Err(Error::InvalidInput(format!(
                "span {i} ({},{}) exceeds transcript length {transcript_len}",
                span.start, span.length
            )));
        }
        for other in &spans[i + 1..] {
            if span.overlaps(other) {
                return Err(Error::InvalidInput(format!(
                    "span ({},{}) overlaps span ({},{})",
                    span.start, span.length, other.start, other.length
                )));
            }
        }
    }
    Ok(())
}

/// One N-best entry: a token sequence with its raw (pre-softmax) score and
/// an optional fixed-width feature vector for the rescorer.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Transcript,
    pub score: f64,
    pub features: Option<Vec<f64>>,
}

impl Hypothesis {
    pub fn new(tokens: Transcript, score: f64) -> Hypothesis {
        Hypothesis {
            tokens,
            score,
            features: None,
        }
    }

    pub fn with_features(tokens: Transcript, score: f64, features: Vec<f64>) -> Hypothesis {
        Hypothesis {
            tokens,
            score,
            features: Some(features),
        }
    }
}

/// An ordered N-best list. Order is preserved through every transformation:
/// fuzzing maps index i to i and appends images at N + i.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Beam {
    pub hypotheses: Vec<Hypothesis>,
}

impl Beam {
    pub fn new(hypotheses: Vec<Hypothesis>) -> Beam {
        Beam { hypotheses }
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.hypotheses.iter().map(|h| h.score).collect()
    }

    /// Validates the beam invariants: at least one hypothesis, finite scores,
    /// and a single feature width across all entries that carry features.
    pub fn validate(&self) -> Result<()> {
        if self.hypotheses.is_empty() {
            return Err(Error::InvalidInput("beam is empty".into()));
        }
        let mut width: Option<usize> = None;
        for (i, hyp) in self.hypotheses.iter().enumerate() {
            if !hyp.score.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "hypothesis {i} has non-finite score {}",
                    hyp.score
                )));
            }
            if let Some(f) = &hyp.features {
                match width {
                    None => width = Some(f.len()),
                    Some(w) if w != f.len() => {
                        return Err(Error::InvalidInput(format!(
                            "hypothesis {i} has feature width {} but the beam uses {w}",
                            f.len()
                        )));
                    }
                    _ => {}
                }
                if f.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "hypothesis {i} has non-finite features"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One corpus record: reference transcript with tagged proper nouns plus the
/// first-pass beam for the same audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub reference: Transcript,
    pub proper_nouns: Vec<ProperNounSpan>,
    pub beam: Beam,
}

impl Utterance {
    /// The token slice covered by a tagged span.
    pub fn span_tokens(&self, span: &ProperNounSpan) -> &[Token] {
        &self.reference.tokens()[span.start..span.end()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(text: &str) -> Transcript {
        tokenize(text)
    }

    #[test]
    fn tokenize_splits_on_whitespace() {
        let tr = t("Population of Cedar Rapids");
        let words: Vec<&str> = tr.tokens().iter().map(Token::text).collect();
        assert_eq!(words, ["Population", "of", "Cedar", "Rapids"]);
    }

    #[test]
    fn tokenize_empty_input() {
        assert!(t("").is_empty());
        assert!(t("   \t ").is_empty());
    }

    #[test]
    fn tokenize_collapses_runs() {
        let tr = t("  play   $SONG ");
        let words: Vec<&str> = tr.tokens().iter().map(Token::text).collect();
        assert_eq!(words, ["play", "$SONG"]);
    }

    #[test]
    fn tokenize_preserves_case_and_caches_lower() {
        let tr = t("Cedar");
        assert_eq!(tr.tokens()[0].text(), "Cedar");
        assert_eq!(tr.tokens()[0].lower(), "cedar");
    }

    #[test]
    fn containment_whole_tokens_in_order() {
        let seq = t("Cedar Rapids");
        assert!(t("Population of Cedar Rapids").contains_sequence(seq.tokens(), false));
        assert!(!t("Cedar tree height").contains_sequence(seq.tokens(), false));
        // Partial-token match does not count.
        assert!(!t("Cedar Rapidss").contains_sequence(seq.tokens(), false));
    }

    #[test]
    fn containment_case_modes() {
        let seq = t("cedar rapids");
        assert!(t("population of Cedar Rapids").contains_sequence(seq.tokens(), false));
        assert!(!t("population of Cedar Rapids").contains_sequence(seq.tokens(), true));
    }

    #[test]
    fn containment_empty_sequence_is_false() {
        assert!(!t("a b").contains_sequence(&[], false));
    }

    #[test]
    fn find_sequence_is_leftmost() {
        let tr = t("go to cedar then cedar again");
        assert_eq!(tr.find_sequence(t("cedar").tokens(), false), Some(2));
    }

    #[test]
    fn splice_replaces_span() {
        let tr = t("directions to beaumont please");
        let out = tr.splice(2, 1, t("walmart").tokens());
        assert_eq!(out.join(), "directions to walmart please");
    }

    #[test]
    fn span_validation() {
        let spans = [ProperNounSpan::new(0, 2), ProperNounSpan::new(1, 1)];
        assert!(validate_spans(&spans, 4).is_err());
        let spans = [ProperNounSpan::new(0, 2), ProperNounSpan::new(2, 1)];
        assert!(validate_spans(&spans, 3).is_ok());
        assert!(validate_spans(&spans, 2).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn word_strategy() -> impl Strategy<Value = String> {
            proptest::sample::select(vec!["Cedar", "rapids", "to", "play", "$SONG", "a"])
                .prop_map(str::to_string)
        }

        proptest! {
            #[test]
            fn join_tokenize_roundtrip(words in proptest::collection::vec(word_strategy(), 0..8)) {
                let t = tokenize(&words.join(" "));
                prop_assert_eq!(tokenize(&t.join()), t);
            }

            #[test]
            fn containment_implies_length_bound(
                hay in proptest::collection::vec(word_strategy(), 0..8),
                needle in proptest::collection::vec(word_strategy(), 0..8),
            ) {
                let hay = tokenize(&hay.join(" "));
                let needle = tokenize(&needle.join(" "));
                if hay.contains_sequence(needle.tokens(), false) {
                    prop_assert!(needle.len() <= hay.len());
                }
                if !hay.is_empty() {
                    prop_assert!(hay.contains_sequence(hay.tokens(), false));
                }
            }
        }
    }

    #[test]
    fn beam_validation_catches_bad_input() {
        assert!(Beam::new(vec![]).validate().is_err());
        let bad = Beam::new(vec![Hypothesis::new(t("a"), f64::NAN)]);
        assert!(bad.validate().is_err());
        let mismatched = Beam::new(vec![
            Hypothesis::with_features(t("a"), 0.0, vec![1.0, 2.0]),
            Hypothesis::with_features(t("b"), 0.0, vec![1.0]),
        ]);
        assert!(mismatched.validate().is_err());
    }
}

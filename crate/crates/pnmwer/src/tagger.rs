//! Proper-noun span tagging. A longest-match lexicon tagger with an optional
//! capitalization heuristic stands in for an external POS tagger; pre-tagged
//! spans in input files are preserved so any external tagger can be plugged
//! in upstream.

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{ProperNounSpan, Token, Transcript, Utterance};

/// Longest entry length, in tokens. Bounds the matcher's cost per position.
pub const MAX_ENTRY_TOKENS: usize = 5;

/// A set of known proper-noun token sequences of 1 to 5 tokens.
///
/// Entries are stored case-normalized by default; when built case-sensitive
/// they keep their original form and must match exactly.
#[derive(Debug, Clone, Default)]
pub struct ProperNounLexicon {
    entries: HashSet<Vec<String>>,
    max_len: usize,
    case_sensitive: bool,
}

impl ProperNounLexicon {
    pub fn new(case_sensitive: bool) -> ProperNounLexicon {
        ProperNounLexicon {
            entries: HashSet::new(),
            max_len: 0,
            case_sensitive,
        }
    }

    /// Adds one entry given as whitespace-separated tokens. Returns whether
    /// the entry was new. Empty entries and entries longer than
    /// [`MAX_ENTRY_TOKENS`] are rejected.
    pub fn insert(&mut self, entry: &str) -> Result<bool> {
        let tokens: Vec<String> = entry
            .split_whitespace()
            .map(|t| self.normalize(t))
            .collect();
        if tokens.is_empty() {
            return Err(Error::InvalidInput("empty lexicon entry".into()));
        }
        if tokens.len() > MAX_ENTRY_TOKENS {
            return Err(Error::InvalidInput(format!(
                "lexicon entry {:?} has {} tokens, maximum is {MAX_ENTRY_TOKENS}",
                entry,
                tokens.len()
            )));
        }
        self.max_len = self.max_len.max(tokens.len());
        Ok(self.entries.insert(tokens))
    }

    fn normalize(&self, token: &str) -> String {
        if self.case_sensitive {
            token.to_string()
        } else {
            token.to_lowercase()
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Iterates entries as space-joined strings, in arbitrary order.
    pub fn entries(&self) -> impl Iterator<Item = String> + '_ {
        self.entries.iter().map(|e| e.join(" "))
    }

    fn matches_at(&self, tokens: &[Token], start: usize, len: usize) -> bool {
        if start + len > tokens.len() {
            return false;
        }
        let key: Vec<String> = tokens[start..start + len]
            .iter()
            .map(|t| {
                if self.case_sensitive {
                    t.text().to_string()
                } else {
                    t.lower().to_string()
                }
            })
            .collect();
        self.entries.contains(&key)
    }

    /// Loads the plain-text lexicon format: one entry per line, tokens
    /// separated by spaces, `#` comment lines and blank lines ignored.
    pub fn load(path: &Path, case_sensitive: bool) -> Result<ProperNounLexicon> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lexicon = ProperNounLexicon::new(case_sensitive);
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            lexicon
                .insert(trimmed)
                .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        }
        Ok(lexicon)
    }
}

/// Tags maximal non-overlapping proper-noun spans in a transcript.
///
/// Pass 1 takes the longest lexicon match at each position, left to right.
/// Pass 2, when `heuristics` is set, tags any remaining maximal run of
/// capitalized tokens that does not start the sentence. Output is sorted by
/// start index.
pub fn tag(
    transcript: &Transcript,
    lexicon: &ProperNounLexicon,
    heuristics: bool,
) -> Vec<ProperNounSpan> {
    let tokens = transcript.tokens();
    let mut spans = Vec::new();
    let mut covered = vec![false; tokens.len()];

    let mut pos = 0;
    while pos < tokens.len() {
        let longest = (1..=lexicon.max_len.min(tokens.len() - pos))
            .rev()
            .find(|&len| lexicon.matches_at(tokens, pos, len));
        match longest {
            Some(len) => {
                spans.push(ProperNounSpan::new(pos, len));
                covered[pos..pos + len].iter_mut().for_each(|c| *c = true);
                pos += len;
            }
            None => pos += 1,
        }
    }

    if heuristics {
        let capitalized = |t: &Token| t.text().chars().next().is_some_and(char::is_uppercase);
        let mut pos = 0;
        while pos < tokens.len() {
            if covered[pos] || !capitalized(&tokens[pos]) {
                pos += 1;
                continue;
            }
            let start = pos;
            while pos < tokens.len() && !covered[pos] && capitalized(&tokens[pos]) {
                pos += 1;
            }
            // A run beginning the sentence is ambiguous sentence case; skip it.
            if start > 0 {
                spans.push(ProperNounSpan::new(start, pos - start));
            }
        }
    }

    spans.sort();
    spans
}

/// Merges pre-existing spans with newly tagged ones: union of both sets with
/// overlaps resolved by keeping the longer span, ties to the earlier start.
fn merge_spans(existing: &[ProperNounSpan], tagged: Vec<ProperNounSpan>) -> Vec<ProperNounSpan> {
    let mut candidates: Vec<ProperNounSpan> = existing.iter().copied().chain(tagged).collect();
    candidates.sort();
    candidates.dedup();
    candidates.sort_by(|a, b| b.length.cmp(&a.length).then(a.start.cmp(&b.start)));

    let mut accepted: Vec<ProperNounSpan> = Vec::new();
    for span in candidates {
        if !accepted.iter().any(|a| a.overlaps(&span)) {
            accepted.push(span);
        }
    }
    accepted.sort();
    accepted
}

/// Applies [`tag`] to each record of a corpus stream, merging with any spans
/// already present. Malformed records pass through as errors so callers can
/// report them and keep going.
pub fn tag_corpus<'a, I>(
    records: I,
    lexicon: &'a ProperNounLexicon,
    heuristics: bool,
) -> impl Iterator<Item = Result<Utterance>> + 'a
where
    I: Iterator<Item = Result<Utterance>> + 'a,
{
    records.map(move |record| {
        record.map(|mut utt| {
            let tagged = tag(&utt.reference, lexicon, heuristics);
            utt.proper_nouns = merge_spans(&utt.proper_nouns, tagged);
            utt
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::tokenize;

    fn lexicon(entries: &[&str]) -> ProperNounLexicon {
        let mut lex = ProperNounLexicon::new(false);
        for e in entries {
            lex.insert(e).unwrap();
        }
        lex
    }

    #[test]
    fn tags_single_word_entry() {
        let spans = tag(
            &tokenize("directions to Beaumont"),
            &lexicon(&["beaumont"]),
            false,
        );
        assert_eq!(spans, vec![ProperNounSpan::new(2, 1)]);
    }

    #[test]
    fn partial_sequence_does_not_tag() {
        let spans = tag(
            &tokenize("cedar tree height"),
            &lexicon(&["cedar rapids"]),
            false,
        );
        assert!(spans.is_empty());
    }

    #[test]
    fn tags_multi_token_entry() {
        let spans = tag(
            &tokenize("population of Cedar Rapids"),
            &lexicon(&["cedar rapids"]),
            false,
        );
        assert_eq!(spans, vec![ProperNounSpan::new(2, 2)]);
    }

    #[test]
    fn longest_match_wins() {
        let lex = lexicon(&["cedar", "cedar rapids"]);
        let spans = tag(&tokenize("visit cedar rapids today"), &lex, false);
        assert_eq!(spans, vec![ProperNounSpan::new(1, 2)]);
    }

    #[test]
    fn capitalization_heuristic() {
        let spans = tag(
            &tokenize("Directions to Fort Dodge now"),
            &lexicon(&[]),
            true,
        );
        // "Directions" starts the sentence, so only the later run is tagged.
        assert_eq!(spans, vec![ProperNounSpan::new(2, 2)]);
    }

    #[test]
    fn heuristic_skips_lexicon_covered_tokens() {
        let lex = lexicon(&["fort dodge"]);
        let spans = tag(&tokenize("go to Fort Dodge Iowa"), &lex, true);
        assert_eq!(
            spans,
            vec![ProperNounSpan::new(2, 2), ProperNounSpan::new(4, 1)]
        );
    }

    #[test]
    fn case_sensitive_lexicon() {
        let mut lex = ProperNounLexicon::new(true);
        lex.insert("Beaumont").unwrap();
        assert!(tag(&tokenize("to Beaumont"), &lex, false).len() == 1);
        assert!(tag(&tokenize("to beaumont"), &lex, false).is_empty());
    }

    #[test]
    fn rejects_bad_entries() {
        let mut lex = ProperNounLexicon::new(false);
        assert!(lex.insert("").is_err());
        assert!(lex.insert("a b c d e f").is_err());
        assert!(lex.insert("a b c d e").is_ok());
    }

    #[test]
    fn merge_keeps_earlier_span_on_equal_length() {
        let existing = [ProperNounSpan::new(2, 2)];
        let merged = merge_spans(&existing, vec![ProperNounSpan::new(3, 2)]);
        assert_eq!(merged, vec![ProperNounSpan::new(2, 2)]);
    }

    #[test]
    fn merge_prefers_longer_span() {
        let existing = [ProperNounSpan::new(2, 1)];
        let merged = merge_spans(&existing, vec![ProperNounSpan::new(1, 3)]);
        assert_eq!(merged, vec![ProperNounSpan::new(1, 3)]);
    }

    #[test]
    fn merge_unions_disjoint_spans() {
        let existing = [ProperNounSpan::new(0, 1)];
        let merged = merge_spans(&existing, vec![ProperNounSpan::new(2, 1)]);
        assert_eq!(
            merged,
            vec![ProperNounSpan::new(0, 1), ProperNounSpan::new(2, 1)]
        );
    }

    #[test]
    fn tag_corpus_fills_spans_and_passes_errors_through() {
        let lex = lexicon(&["beaumont"]);
        let records = vec![
            Ok(Utterance {
                id: "u1".into(),
                reference: tokenize("directions to beaumont"),
                proper_nouns: vec![],
                beam: crate::types::Beam::new(vec![crate::types::Hypothesis::new(
                    tokenize("directions to beaumont"),
                    0.0,
                )]),
            }),
            Err(Error::InvalidInput("broken record".into())),
        ];
        let out: Vec<_> = tag_corpus(records.into_iter(), &lex, false).collect();
        assert_eq!(out.len(), 2);
        assert_eq!(
            out[0].as_ref().unwrap().proper_nouns,
            vec![ProperNounSpan::new(2, 1)]
        );
        assert!(out[1].is_err());
    }

    #[test]
    fn empty_corpus_stays_empty() {
        let lex = lexicon(&["beaumont"]);
        let out: Vec<_> = tag_corpus(std::iter::empty(), &lex, false).collect();
        assert!(out.is_empty());
    }

    #[test]
    fn tagging_is_idempotent() {
        let lex = lexicon(&["cedar rapids"]);
        let tr = tokenize("population of cedar rapids");
        let first = tag(&tr, &lex, false);
        let merged = merge_spans(&first, tag(&tr, &lex, false));
        assert_eq!(first, merged);
    }

    #[test]
    fn spans_never_overlap_and_stay_in_bounds() {
        let lex = lexicon(&["cedar rapids", "rapids", "cedar", "des moines"]);
        for text in [
            "cedar rapids cedar rapids",
            "rapids cedar rapids des moines cedar",
            "des moines des moines rapids",
        ] {
            let tr = tokenize(text);
            let spans = tag(&tr, &lex, true);
            crate::types::validate_spans(&spans, tr.len()).unwrap();
        }
    }
}

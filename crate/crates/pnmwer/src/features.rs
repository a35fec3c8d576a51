//! Per-hypothesis feature computation shared by the synthetic generator and
//! the trainer. Features stand in for the evidence a second-pass model would
//! extract from audio: how well the hypothesis matches the spoken reference
//! phonetically and orthographically.
//!
//! Distances are computed on the disagreement region (tokens left after
//! stripping the longest common prefix and suffix), so a one-word difference
//! in a long carrier phrase is not diluted by the shared words.
//!
//! The generator adds seeded jitter on top of these values when it writes
//! corpora; hypotheses synthesized later (fuzzed beam entries) are
//! featurized noiselessly with the same function.

use crate::align::edit_distance;
use crate::fuzz::{phonetic_distance, phonetic_key};
use crate::types::{Token, Transcript};

/// Number of informative feature dimensions; wider vectors are padded with
/// zeros (jitter-only dimensions in generated corpora).
pub const CORE_FEATURES: usize = 3;

/// Deterministic features of a hypothesis against its utterance's reference:
/// phonetic match (1 − normalized sound-class edit distance over the
/// disagreement region), spelling match (1 − normalized character edit
/// distance over the same region), and a signed length feature
/// log((1 + hyp tokens) / (1 + reference tokens)), then zero padding up to
/// `width`.
///
/// When the disagreement is pure insertion or pure omission (one side of the
/// region empty), both match features read 1.0: every expected word was
/// heard, so the mismatch is visible only through the length feature. This
/// models an acoustic matcher that scores substituted material and leaves
/// dropped or added words to a separate fluency signal.
pub fn hypothesis_features(hyp: &Transcript, reference: &Transcript, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    if width == 0 {
        return out;
    }
    let (h_core, r_core) = disagreement_region(hyp.tokens(), reference.tokens());
    if h_core.is_empty() || r_core.is_empty() {
        out[0] = 1.0;
        if width > 1 {
            out[1] = 1.0;
        }
    } else {
        out[0] = 1.0 - phonetic_distance(&phonetic_key(h_core), &phonetic_key(r_core));
        if width > 1 {
            out[1] = spelling_match(h_core, r_core);
        }
    }
    if width > 2 {
        out[2] = length_feature(hyp.len(), reference.len());
    }
    out
}

/// Strips the longest common (case-insensitive) token prefix, then the
/// longest common suffix of what remains.
fn disagreement_region<'a>(hyp: &'a [Token], reference: &'a [Token]) -> (&'a [Token], &'a [Token]) {
    let mut prefix = 0;
    while prefix < hyp.len()
        && prefix < reference.len()
        && hyp[prefix].matches(&reference[prefix], false)
    {
        prefix += 1;
    }
    let limit = hyp.len().min(reference.len()) - prefix;
    let mut suffix = 0;
    while suffix < limit
        && hyp[hyp.len() - 1 - suffix].matches(&reference[reference.len() - 1 - suffix], false)
    {
        suffix += 1;
    }
    (
        &hyp[prefix..hyp.len() - suffix],
        &reference[prefix..reference.len() - suffix],
    )
}

fn join_lower(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(tok.lower());
    }
    out
}

fn spelling_match(hyp: &[Token], reference: &[Token]) -> f64 {
    let a: Vec<char> = join_lower(hyp).chars().collect();
    let b: Vec<char> = join_lower(reference).chars().collect();
    let max_len = a.len().max(b.len());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - edit_distance(&a, &b) as f64 / max_len as f64
}

/// Positive when the hypothesis is longer than the reference, negative when
/// shorter, zero at equal length.
fn length_feature(hyp_len: usize, ref_len: usize) -> f64 {
    ((1 + hyp_len) as f64 / (1 + ref_len) as f64).ln()
}

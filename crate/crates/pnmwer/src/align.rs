//! Word-level Levenshtein alignment, word-error counting, and the
//! beam-relative error term used by the MWER losses.

use std::collections::BTreeSet;

use crate::types::{Beam, Transcript};

/// Edit counts from aligning a hypothesis against a reference, plus the set
/// of reference token positions that were substituted (the input to VWER).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AlignmentStats {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub substituted_ref_positions: BTreeSet<usize>,
}

impl AlignmentStats {
    pub fn total_errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Levenshtein word alignment with unit costs. Token comparison is
/// case-insensitive, the WER convention throughout this crate.
///
/// Among minimal-cost alignments the backtrace is canonical: alignment steps
/// (match or substitution) are preferred over deletions, and deletions over
/// insertions, scanning right to left. This prefers substitutions over
/// insertion+deletion pairs and pushes unmatched tokens toward earlier
/// positions, so `substituted_ref_positions` is deterministic.
pub fn align(hyp: &Transcript, reference: &Transcript) -> AlignmentStats {
    let h = hyp.tokens();
    let r = reference.tokens();
    let m = h.len();
    let n = r.len();

    // cost[i][j] = edit distance between h[..i] and r[..j].
    let mut cost = vec![vec![0usize; n + 1]; m + 1];
    for (i, row) in cost.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in cost[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let sub = if h[i - 1].matches(&r[j - 1], false) {
                0
            } else {
                1
            };
            cost[i][j] = (cost[i - 1][j - 1] + sub)
                .min(cost[i - 1][j] + 1)
                .min(cost[i][j - 1] + 1);
        }
    }

    let mut stats = AlignmentStats::default();
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let sub = if h[i - 1].matches(&r[j - 1], false) {
                0
            } else {
                1
            };
            if cost[i][j] == cost[i - 1][j - 1] + sub {
                if sub == 1 {
                    stats.substitutions += 1;
                    stats.substituted_ref_positions.insert(j - 1);
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && cost[i][j] == cost[i][j - 1] + 1 {
            stats.deletions += 1;
            j -= 1;
        } else {
            stats.insertions += 1;
            i -= 1;
        }
    }
    stats
}

/// Number of word errors: substitutions + insertions + deletions.
pub fn word_errors(hyp: &Transcript, reference: &Transcript) -> usize {
    align(hyp, reference).total_errors()
}

/// The beam-relative error term: each hypothesis's word-error count minus
/// the unweighted mean over the beam handed in. For a fuzzed beam of size 2N
/// the mean is taken over all 2N entries. Sums to zero by construction.
pub fn relative_word_errors(beam: &Beam, reference: &Transcript) -> Vec<f64> {
    let errors: Vec<f64> = beam
        .hypotheses
        .iter()
        .map(|h| word_errors(&h.tokens, reference) as f64)
        .collect();
    if errors.is_empty() {
        return errors;
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    errors.into_iter().map(|w| w - mean).collect()
}

/// Plain edit distance between two symbol slices. Used for phonetic-key and
/// spelling distances; `align` keeps its own matrix because it backtraces.
pub(crate) fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        curr[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            curr[j] = sub.min(prev[j] + 1).min(curr[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

//! Corpus metrics: WER, proper-noun missed rate, OOV and rare-word rates,
//! vocabulary word error rate (VWER), and the VWER threshold-sweep curves
//! that attribute improvements to rare or common words.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::align::align;
use crate::error::{Error, Result};
use crate::fileio;
use crate::types::{ProperNounSpan, Token, Transcript};

pub const VOCAB_HEADER: &str = "pnmwer-vocab v1";
pub const REPORT_HEADER: &str = "pnmwer-report v1";
pub const PLOT_HEADER: &str = "pnmwer-plot v1";

/// Word → training-corpus occurrence count. Lookups of absent words yield 0
/// (out of vocabulary). Words are stored lowercase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VocabStats {
    counts: BTreeMap<String, u64>,
}

impl VocabStats {
    pub fn from_references<'a, I>(references: I) -> VocabStats
    where
        I: IntoIterator<Item = &'a Transcript>,
    {
        let mut counts = BTreeMap::new();
        for reference in references {
            for token in reference.tokens() {
                *counts.entry(token.lower().to_string()).or_insert(0) += 1;
            }
        }
        VocabStats { counts }
    }

    pub fn add(&mut self, word: &str, count: u64) {
        if count > 0 {
            *self.counts.entry(word.to_lowercase()).or_insert(0) += count;
        }
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(&word.to_lowercase()).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// The training-vocabulary subset occurring at least `threshold` times.
    /// Threshold 0 denotes the entire training vocabulary.
    pub fn vocabulary_at(&self, threshold: u64) -> BTreeSet<String> {
        self.counts
            .iter()
            .filter(|(_, &c)| c >= threshold)
            .map(|(w, _)| w.clone())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fileio::write_body(
            path,
            VOCAB_HEADER,
            self.counts.iter().map(|(w, c)| format!("{w}\t{c}")),
        )
    }

    pub fn load(path: &Path) -> Result<VocabStats> {
        let mut stats = VocabStats::default();
        for (lineno, line) in fileio::read_body(path, VOCAB_HEADER)? {
            let Some((word, count)) = line.split_once('\t') else {
                return Err(Error::parse(path, lineno, "expected word<TAB>count"));
            };
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad count {count:?}")))?;
            if count == 0 {
                return Err(Error::parse(path, lineno, "zero count is not storable"));
            }
            stats.add(word, count);
        }
        Ok(stats)
    }
}

/// One scored utterance: the decoded transcript joined with its reference
/// and the reference's tagged spans.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedUtterance {
    pub id: String,
    pub hypothesis: Transcript,
    pub reference: Transcript,
    pub proper_nouns: Vec<ProperNounSpan>,
}

/// Corpus-level error totals by type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl ErrorCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Corpus WER fragment: total errors over total reference words.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WerSummary {
    pub wer: f64,
    pub total_ref_words: usize,
    pub errors: ErrorCounts,
}

/// WER = Σ word errors / Σ reference lengths across the corpus.
pub fn corpus_wer(decodes: &[DecodedUtterance]) -> Result<WerSummary> {
    if decodes.is_empty() {
        return Err(Error::UndefinedRate("corpus WER of an empty corpus".into()));
    }
    let mut errors = ErrorCounts::default();
    let mut total_ref_words = 0usize;
    for d in decodes {
        let stats = align(&d.hypothesis, &d.reference);
        errors.substitutions += stats.substitutions;
        errors.insertions += stats.insertions;
        errors.deletions += stats.deletions;
        total_ref_words += d.reference.len();
    }
    if total_ref_words == 0 {
        return Err(Error::UndefinedRate(
            "corpus WER with zero reference words".into(),
        ));
    }
    Ok(WerSummary {
        wer: errors.total() as f64 / total_ref_words as f64,
        total_ref_words,
        errors,
    })
}

/// Vocabulary word error rate: substitution errors on reference positions
/// whose word is in `vocab`, divided by the total number of in-vocabulary
/// reference positions. Deletions and insertions are excluded.
pub fn vwer(decodes: &[DecodedUtterance], vocab: &BTreeSet<String>) -> Result<f64> {
    if vocab.is_empty() {
        return Err(Error::UndefinedRate("VWER over an empty vocabulary".into()));
    }
    let mut substituted = 0usize;
    let mut occurrences = 0usize;
    for d in decodes {
        let stats = align(&d.hypothesis, &d.reference);
        for (pos, token) in d.reference.tokens().iter().enumerate() {
            if !vocab.contains(token.lower()) {
                continue;
            }
            occurrences += 1;
            if stats.substituted_ref_positions.contains(&pos) {
                substituted += 1;
            }
        }
    }
    if occurrences == 0 {
        return Err(Error::UndefinedRate(format!(
            "VWER: no reference occurrences of the {}-word vocabulary",
            vocab.len()
        )));
    }
    Ok(substituted as f64 / occurrences as f64)
}

/// One point of a threshold sweep. `value` is absent where the rate was
/// undefined (a gap point, not an abort).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: u64,
    pub value: Option<f64>,
}

/// Per-threshold difference vwer(a) − vwer(b) over vocabularies of words
/// occurring at least `threshold` times in training. Both decode sets must
/// cover the same utterances.
pub fn vwer_diff_curve(
    decodes_a: &[DecodedUtterance],
    decodes_b: &[DecodedUtterance],
    stats: &VocabStats,
    thresholds: &[u64],
) -> Result<Vec<CurvePoint>> {
    if decodes_a.len() != decodes_b.len()
        || decodes_a
            .iter()
            .zip(decodes_b)
            .any(|(a, b)| a.id != b.id || a.reference != b.reference)
    {
        return Err(Error::InvalidInput(
            "VWER difference requires the same references on both sides".into(),
        ));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "thresholds must be strictly ascending".into(),
        ));
    }
    let mut curve = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let vocab = stats.vocabulary_at(threshold);
        let value = match (vwer(decodes_a, &vocab), vwer(decodes_b, &vocab)) {
            (Ok(a), Ok(b)) => Some(a - b),
            _ => None,
        };
        curve.push(CurvePoint { threshold, value });
    }
    Ok(curve)
}

/// (oov_rate, rare_word_rate) over reference token positions: the fraction
/// with training count 0, and the fraction with count below `rare_threshold`
/// (which includes the OOV positions).
pub fn rates<'a, I>(references: I, stats: &VocabStats, rare_threshold: u64) -> Result<(f64, f64)>
where
    I: IntoIterator<Item = &'a Transcript>,
{
    if rare_threshold == 0 {
        return Err(Error::InvalidInput(
            "rare threshold must be at least 1".into(),
        ));
    }
    let mut positions = 0usize;
    let mut oov = 0usize;
    let mut rare = 0usize;
    for reference in references {
        for token in reference.tokens() {
            positions += 1;
            let count = stats.count(token.lower());
            if count == 0 {
                oov += 1;
            }
            if count < rare_threshold {
                rare += 1;
            }
        }
    }
    if positions == 0 {
        return Err(Error::UndefinedRate(
            "word rates over an empty corpus".into(),
        ));
    }
    Ok((
        oov as f64 / positions as f64,
        rare as f64 / positions as f64,
    ))
}

/// Fraction of (utterance, tagged proper noun) pairs whose token sequence is
/// not contained in the decoded hypothesis.
pub fn proper_noun_missed_rate(decodes: &[DecodedUtterance]) -> Result<f64> {
    let mut total = 0usize;
    let mut missed = 0usize;
    for d in decodes {
        for span in &d.proper_nouns {
            let seq = &d.reference.tokens()[span.start..span.end()];
            total += 1;
            if !d.hypothesis.contains_sequence(seq, false) {
                missed += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::UndefinedRate(
            "proper-noun missed rate over a corpus with no tagged proper nouns".into(),
        ));
    }
    Ok(missed as f64 / total as f64)
}

/// The full per-run report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub wer: WerSummary,
    /// Absent when the corpus has no tagged proper nouns.
    pub proper_noun_missed_rate: Option<f64>,
    pub oov_rate: f64,
    pub rare_word_rate: f64,
    pub rare_threshold: u64,
    pub vwer_curve: Vec<CurvePoint>,
}

/// Computes every metric of the report in one pass over the decodes.
pub fn evaluate(
    decodes: &[DecodedUtterance],
    stats: &VocabStats,
    thresholds: &[u64],
    rare_threshold: u64,
) -> Result<EvalReport> {
    let wer = corpus_wer(decodes)?;
    let proper_noun_missed = match proper_noun_missed_rate(decodes) {
        Ok(rate) => Some(rate),
        Err(Error::UndefinedRate(_)) => None,
        Err(e) => return Err(e),
    };
    let (oov_rate, rare_word_rate) =
        rates(decodes.iter().map(|d| &d.reference), stats, rare_threshold)?;
    let mut vwer_curve = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let vocab = stats.vocabulary_at(threshold);
        let value = vwer(decodes, &vocab).ok();
        vwer_curve.push(CurvePoint { threshold, value });
    }
    Ok(EvalReport {
        wer,
        proper_noun_missed_rate: proper_noun_missed,
        oov_rate,
        rare_word_rate,
        rare_threshold,
        vwer_curve,
    })
}

impl EvalReport {
    /// Machine-readable key/value lines.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut lines = vec![
            format!("wer\t{}", self.wer.wer),
            format!("total_ref_words\t{}", self.wer.total_ref_words),
            format!("substitutions\t{}", self.wer.errors.substitutions),
            format!("insertions\t{}", self.wer.errors.insertions),
            format!("deletions\t{}", self.wer.errors.deletions),
            match self.proper_noun_missed_rate {
                Some(rate) => format!("proper_noun_missed_rate\t{rate}"),
                None => "proper_noun_missed_rate\tNA".to_string(),
            },
            format!("oov_rate\t{}", self.oov_rate),
            format!("rare_word_rate\t{}", self.rare_word_rate),
            format!("rare_threshold\t{}", self.rare_threshold),
        ];
        for point in &self.vwer_curve {
            match point.value {
                Some(v) => lines.push(format!("vwer@{}\t{v}", point.threshold)),
                None => lines.push(format!("vwer@{}\tNA", point.threshold)),
            }
        }
        fileio::write_body(path, REPORT_HEADER, lines)
    }

    /// Columnar text table for humans.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let mut row = |k: &str, v: String| {
            out.push_str(&format!("{k:<28}{v}\n"));
        };
        row("wer", format!("{:.4}", self.wer.wer));
        row("total_ref_words", self.wer.total_ref_words.to_string());
        row(
            "errors (sub/ins/del)",
            format!(
                "{}/{}/{}",
                self.wer.errors.substitutions,
                self.wer.errors.insertions,
                self.wer.errors.deletions
            ),
        );
        row(
            "proper_noun_missed_rate",
            self.proper_noun_missed_rate
                .map_or("NA".to_string(), |r| format!("{r:.4}")),
        );
        row("oov_rate", format!("{:.4}", self.oov_rate));
        row(
            &format!("rare_word_rate (<{})", self.rare_threshold),
            format!("{:.4}", self.rare_word_rate),
        );
        for point in &self.vwer_curve {
            row(
                &format!("vwer@{}", point.threshold),
                point.value.map_or("NA".to_string(), |v| format!("{v:.6}")),
            );
        }
        out
    }
}

/// Writes a (threshold, value) plot-data file; the header comment echoes the
/// threshold grid. Gap points are written as NA.
pub fn save_plot_data(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut lines = Vec::with_capacity(curve.len() + 1);
    let grid: Vec<String> = curve.iter().map(|p| p.threshold.to_string()).collect();
    lines.push(format!("# thresholds: {}", grid.join(" ")));
    for point in curve {
        match point.value {
            Some(v) => lines.push(format!("{}\t{v}", point.threshold)),
            None => lines.push(format!("{}\tNA", point.threshold)),
        }
    }
    fileio::write_body(path, PLOT_HEADER, lines)
}

/// Convenience for tests and callers scoring in memory.
pub fn decoded(
    id: &str,
    hypothesis: &Transcript,
    reference: &Transcript,
    proper_nouns: &[ProperNounSpan],
) -> DecodedUtterance {
    DecodedUtterance {
        id: id.to_string(),
        hypothesis: hypothesis.clone(),
        reference: reference.clone(),
        proper_nouns: proper_nouns.to_vec(),
    }
}

#[allow(dead_code)]
fn span_tokens<'a>(reference: &'a Transcript, span: &ProperNounSpan) -> &'a [Token] {
    &reference.tokens()[span.start..span.end()]
}

//! Fuzz-dictionary construction and the FUZZ beam operation: mine n-gram
//! confusions from co-hypothesized decodings, filter them by phonetic
//! similarity, and use the surviving alternatives to synthesize hard
//! negatives for the fuzzed MWER loss.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::align::edit_distance;
use crate::error::{Error, Result};
use crate::fileio;
use crate::types::{Beam, Hypothesis, ProperNounSpan, Token, Transcript};

pub const CONFUSIONS_HEADER: &str = "pnmwer-confusions v1";
pub const DICTIONARY_HEADER: &str = "pnmwer-fuzzdict v1";

/// Upper bound on stored alternatives per dictionary key.
pub const MAX_ALTERNATIVES: usize = 25;

/// A sound-class code for a token sequence.
///
/// Letters map to classes: vocalic letters (a e i o u y h w) are dropped
/// except that the first letter of a token always emits its class ('0' for
/// vocalic); b/p → 1, f/v → 2, c/k/q/g/j → 3, s/z/x → 4, d/t → 5, l → 6,
/// m/n → 7, r → 8. Adjacent duplicate classes collapse. Per-token keys are
/// joined with '-'. Non-alphabetic characters are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PhoneticKey(String);

impl PhoneticKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn symbols(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

fn sound_class(c: char) -> Option<char> {
    match c {
        'a' | 'e' | 'i' | 'o' | 'u' | 'y' | 'h' | 'w' => Some('0'),
        'b' | 'p' => Some('1'),
        'f' | 'v' => Some('2'),
        'c' | 'k' | 'q' | 'g' | 'j' => Some('3'),
        's' | 'z' | 'x' => Some('4'),
        'd' | 't' => Some('5'),
        'l' => Some('6'),
        'm' | 'n' => Some('7'),
        'r' => Some('8'),
        _ => None,
    }
}

fn word_key(word: &str) -> String {
    let mut out = String::new();
    let mut first = true;
    for c in word.to_lowercase().chars() {
        let Some(class) = sound_class(c) else {
            continue;
        };
        if first {
            out.push(class);
            first = false;
            continue;
        }
        if class == '0' {
            continue;
        }
        if out.as_bytes().last() != Some(&(class as u8)) {
            out.push(class);
        }
    }
    out
}

/// Sound-class key for a token sequence. Empty input yields an empty key.
pub fn phonetic_key(tokens: &[Token]) -> PhoneticKey {
    let keys: Vec<String> = tokens.iter().map(|t| word_key(t.lower())).collect();
    PhoneticKey(keys.join("-"))
}

/// Key for whitespace-separated text; convenience for joined n-grams.
pub fn phonetic_key_str(text: &str) -> PhoneticKey {
    let keys: Vec<String> = text.split_whitespace().map(word_key).collect();
    PhoneticKey(keys.join("-"))
}

/// Normalized edit distance between two keys in [0, 1]: Levenshtein over key
/// symbols divided by the longer length; 0 when both keys are empty.
pub fn phonetic_distance(a: &PhoneticKey, b: &PhoneticKey) -> f64 {
    let max_len = a.symbols().len().max(b.symbols().len());
    if max_len == 0 {
        return 0.0;
    }
    edit_distance(a.symbols(), b.symbols()) as f64 / max_len as f64
}

/// Directional co-hypothesis counts: (a, b) counts utterances in which some
/// hypothesis contained n-gram `a` while another hypothesis of the same
/// utterance contained n-gram `b`. N-grams are stored as space-joined
/// lowercase text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    counts: BTreeMap<(String, String), u64>,
}

impl ConfusionCounts {
    pub fn count(&self, a: &str, b: &str) -> u64 {
        self.counts
            .get(&(a.to_string(), b.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u64)> + '_ {
        self.counts
            .iter()
            .map(|((a, b), c)| (a.as_str(), b.as_str(), *c))
    }

    pub fn add(&mut self, a: String, b: String, count: u64) {
        *self.counts.entry((a, b)).or_insert(0) += count;
    }

    /// Candidates `b` recorded against key `a`, with their counts.
    fn candidates_for<'a>(&'a self, a: &str) -> impl Iterator<Item = (&'a str, u64)> + 'a {
        let lo = (a.to_string(), String::new());
        self.counts
            .range(lo..)
            .take_while({
                let a = a.to_string();
                move |((k, _), _)| *k == a
            })
            .map(|((_, b), c)| (b.as_str(), *c))
    }

    /// Writes the tab-separated (a, b, count) triples, sorted.
    pub fn save(&self, path: &Path) -> Result<()> {
        fileio::write_body(
            path,
            CONFUSIONS_HEADER,
            self.iter().map(|(a, b, c)| format!("{a}\t{b}\t{c}")),
        )
    }

    pub fn load(path: &Path) -> Result<ConfusionCounts> {
        let mut counts = ConfusionCounts::default();
        for (lineno, line) in fileio::read_body(path, CONFUSIONS_HEADER)? {
            let mut parts = line.split('\t');
            let (Some(a), Some(b), Some(c)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::parse(path, lineno, "expected a<TAB>b<TAB>count"));
            };
            let count: u64 = c
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad count {c:?}")))?;
            if a == b || count == 0 {
                return Err(Error::parse(path, lineno, "invalid confusion pair"));
            }
            counts.add(a.to_string(), b.to_string(), count);
        }
        Ok(counts)
    }
}

fn ngrams_up_to(transcript: &Transcript, max_n: usize) -> BTreeSet<String> {
    let tokens = transcript.tokens();
    let mut grams = BTreeSet::new();
    for n in 1..=max_n.min(tokens.len()) {
        for window in tokens.windows(n) {
            let joined = window
                .iter()
                .map(Token::lower)
                .collect::<Vec<_>>()
                .join(" ");
            grams.insert(joined);
        }
    }
    grams
}

/// Counts directional n-gram co-hypothesis pairs across a decoding stream.
///
/// For every ordered pair of distinct hypotheses of one utterance, each
/// n-gram pair (a, b) with a ≠ b and orders 1..=max_n counts once per
/// utterance. Utterances with fewer than two hypotheses contribute nothing.
pub fn mine_confusions<I>(decodings: I, max_n: usize) -> Result<ConfusionCounts>
where
    I: IntoIterator<Item = (String, Vec<Transcript>)>,
{
    if !(1..=5).contains(&max_n) {
        return Err(Error::InvalidInput(format!(
            "max_n must be in 1..=5, got {max_n}"
        )));
    }
    let mut counts = ConfusionCounts::default();
    for (_id, hypotheses) in decodings {
        if hypotheses.len() < 2 {
            continue;
        }
        let grams: Vec<BTreeSet<String>> =
            hypotheses.iter().map(|h| ngrams_up_to(h, max_n)).collect();
        let mut seen: HashSet<(&str, &str)> = HashSet::new();
        for (i, from) in grams.iter().enumerate() {
            for (j, to) in grams.iter().enumerate() {
                if i == j {
                    continue;
                }
                for a in from {
                    for b in to {
                        if a != b {
                            seen.insert((a.as_str(), b.as_str()));
                        }
                    }
                }
            }
        }
        for (a, b) in seen {
            counts.add(a.to_string(), b.to_string(), 1);
        }
    }
    Ok(counts)
}

/// One stored alternative for a dictionary key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzEntry {
    /// The alternative's tokens, lowercase.
    pub tokens: Vec<String>,
    /// Phonetic distance to the key at build time.
    pub distance: f64,
    /// Co-hypothesis count at build time.
    pub count: u64,
}

impl FuzzEntry {
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Map from proper-noun token sequences to at most 25 phonetically similar
/// alternatives, sorted by descending count, then ascending distance, then
/// lexicographically.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FuzzDictionary {
    entries: BTreeMap<String, Vec<FuzzEntry>>,
}

impl FuzzDictionary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Alternatives for a token sequence; empty when the key is unknown.
    pub fn lookup(&self, key: &[Token]) -> &[FuzzEntry] {
        let joined = key.iter().map(Token::lower).collect::<Vec<_>>().join(" ");
        self.entries.get(&joined).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[FuzzEntry])> + '_ {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            key: &'a str,
            alts: Vec<(String, f64, u64)>,
        }
        let lines = self.entries.iter().map(|(key, alts)| {
            let line = Line {
                key,
                alts: alts
                    .iter()
                    .map(|e| (e.joined(), e.distance, e.count))
                    .collect(),
            };
            serde_json::to_string(&line).expect("dictionary line serializes")
        });
        fileio::write_body(path, DICTIONARY_HEADER, lines.collect::<Vec<_>>())
    }

    pub fn load(path: &Path) -> Result<FuzzDictionary> {
        #[derive(Deserialize)]
        struct Line {
            key: String,
            alts: Vec<(String, f64, u64)>,
        }
        let mut entries = BTreeMap::new();
        for (lineno, line) in fileio::read_body(path, DICTIONARY_HEADER)? {
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            if parsed.alts.is_empty() || parsed.alts.len() > MAX_ALTERNATIVES {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!(
                        "key {:?} has {} alternatives",
                        parsed.key,
                        parsed.alts.len()
                    ),
                ));
            }
            let alts: Vec<FuzzEntry> = parsed
                .alts
                .into_iter()
                .map(|(text, distance, count)| FuzzEntry {
                    tokens: text.split_whitespace().map(str::to_string).collect(),
                    distance,
                    count,
                })
                .collect();
            if alts.iter().any(|a| a.joined() == parsed.key) {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("key {:?} lists itself as an alternative", parsed.key),
                ));
            }
            entries.insert(parsed.key, alts);
        }
        Ok(FuzzDictionary { entries })
    }
}

/// Builds the fuzz dictionary: for each key, keep candidates co-hypothesized
/// at least `min_count` times within `max_distance` phonetically, sort, and
/// truncate to [`MAX_ALTERNATIVES`]. Keys with no surviving candidate are
/// omitted.
pub fn build_fuzz_dictionary(
    confusions: &ConfusionCounts,
    keys: &BTreeSet<String>,
    max_distance: f64,
    min_count: u64,
) -> Result<FuzzDictionary> {
    if !(0.0..=1.0).contains(&max_distance) {
        return Err(Error::InvalidInput(format!(
            "max_distance must be in [0, 1], got {max_distance}"
        )));
    }
    if min_count == 0 {
        return Err(Error::InvalidInput("min_count must be at least 1".into()));
    }
    let mut entries = BTreeMap::new();
    for key in keys {
        let key_lower = key.to_lowercase();
        let key_phon = phonetic_key_str(&key_lower);
        let mut alts: Vec<FuzzEntry> = confusions
            .candidates_for(&key_lower)
            .filter(|(b, count)| *count >= min_count && *b != key_lower)
            .filter_map(|(b, count)| {
                let distance = phonetic_distance(&key_phon, &phonetic_key_str(b));
                (distance <= max_distance).then(|| FuzzEntry {
                    tokens: b.split_whitespace().map(str::to_string).collect(),
                    distance,
                    count,
                })
            })
            .collect();
        if alts.is_empty() {
            continue;
        }
        alts.sort_by(|x, y| {
            y.count
                .cmp(&x.count)
                .then(x.distance.total_cmp(&y.distance))
                .then_with(|| x.tokens.cmp(&y.tokens))
        });
        alts.truncate(MAX_ALTERNATIVES);
        entries.insert(key_lower, alts);
    }
    Ok(FuzzDictionary { entries })
}

/// Core of the FUZZ operation. Returns the fuzzed transcript when a tagged
/// proper noun shared by hypothesis and reference had a dictionary
/// alternative, `None` when the hypothesis is left unchanged.
fn fuzz_transcript<R: Rng>(
    hyp: &Transcript,
    reference: &Transcript,
    spans: &[ProperNounSpan],
    dict: &FuzzDictionary,
    rng: &mut R,
) -> Option<Transcript> {
    // Shared proper noun: the longest, ties to the earliest in the reference.
    let shared = spans
        .iter()
        .filter(|s| {
            let seq = &reference.tokens()[s.start..s.end()];
            hyp.contains_sequence(seq, false)
        })
        .min_by(|a, b| b.length.cmp(&a.length).then(a.start.cmp(&b.start)))?;
    let seq = &reference.tokens()[shared.start..shared.end()];
    let alts = dict.lookup(seq);
    if alts.is_empty() {
        return None;
    }
    let alt = &alts[rng.gen_range(0..alts.len())];
    let replacement: Vec<Token> = alt.tokens.iter().filter_map(|t| Token::new(t)).collect();
    let at = hyp.find_sequence(seq, false)?;
    Some(hyp.splice(at, shared.length, &replacement))
}

/// FUZZ(y, y*): replaces the leftmost occurrence of the selected shared
/// proper noun with an alternative drawn uniformly from the dictionary;
/// returns the hypothesis unchanged when it shares no tagged proper noun
/// with the reference or the dictionary has no entry for it.
pub fn fuzz_hypothesis<R: Rng>(
    hyp: &Transcript,
    reference: &Transcript,
    spans: &[ProperNounSpan],
    dict: &FuzzDictionary,
    rng: &mut R,
) -> Transcript {
    fuzz_transcript(hyp, reference, spans, dict, rng).unwrap_or_else(|| hyp.clone())
}

/// B ∪ FUZZ(B): the original beam followed by the FUZZ image of each
/// hypothesis in order, size exactly 2N, duplicates retained. Fuzzed entries
/// carry their source's score as a placeholder; entries actually modified
/// drop their features, since they are synthesized hypotheses that must be
/// re-featurized or re-scored by the caller.
pub fn fuzz_beam<R: Rng>(
    beam: &Beam,
    reference: &Transcript,
    spans: &[ProperNounSpan],
    dict: &FuzzDictionary,
    rng: &mut R,
) -> Beam {
    let mut hypotheses = beam.hypotheses.clone();
    hypotheses.reserve(beam.len());
    for hyp in &beam.hypotheses {
        match fuzz_transcript(&hyp.tokens, reference, spans, dict, rng) {
            Some(tokens) => hypotheses.push(Hypothesis::new(tokens, hyp.score)),
            None => hypotheses.push(hyp.clone()),
        }
    }
    Beam::new(hypotheses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::tokenize;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn key(text: &str) -> PhoneticKey {
        phonetic_key_str(text)
    }

    #[test]
    fn doubled_letters_share_a_key() {
        assert_eq!(key("walmart"), key("wallmart"));
        assert_eq!(key("walmart").as_str(), "06785");
    }

    #[test]
    fn empty_input_empty_key() {
        assert!(key("").is_empty());
        assert!(phonetic_key(&[]).is_empty());
    }

    #[test]
    fn distinct_words_are_far_apart() {
        // beaumont → 175, cedar → 358: all three symbols differ.
        assert_eq!(key("beaumont").as_str(), "175");
        assert_eq!(key("cedar").as_str(), "358");
        assert!(phonetic_distance(&key("beaumont"), &key("cedar")) > 0.5);
    }

    #[test]
    fn vocalic_first_letter_is_kept() {
        assert_eq!(key("alma").as_str(), "067");
        assert_eq!(key("houston").as_str(), "0457");
    }

    #[test]
    fn multi_token_keys_use_separator() {
        assert_eq!(key("cedar rapids").as_str(), "358-8154");
    }

    #[test]
    fn distance_identity_and_extremes() {
        let k = key("beaumont");
        assert_eq!(phonetic_distance(&k, &k), 0.0);
        assert_eq!(phonetic_distance(&key(""), &key("")), 0.0);
        assert_eq!(phonetic_distance(&key(""), &k), 1.0);
    }

    #[test]
    fn distance_one_symbol_in_four() {
        // Four-symbol keys differing in the last symbol only.
        let a = key("bolmar");
        let b = key("bolmad");
        assert_eq!(a.as_str(), "1678");
        assert_eq!(b.as_str(), "1675");
        assert!((phonetic_distance(&a, &b) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mining_counts_cross_pairs_once_per_utterance() {
        let decodings = vec![(
            "u1".to_string(),
            vec![tokenize("call mom"), tokenize("call tom")],
        )];
        let counts = mine_confusions(decodings, 1).unwrap();
        assert_eq!(counts.count("mom", "tom"), 1);
        assert_eq!(counts.count("tom", "mom"), 1);
        assert_eq!(counts.count("call", "tom"), 1);
        assert_eq!(counts.count("mom", "mom"), 0);
        assert_eq!(counts.count("call", "call"), 0);
    }

    #[test]
    fn mining_empty_stream() {
        let counts = mine_confusions(Vec::new(), 3).unwrap();
        assert!(counts.is_empty());
    }

    #[test]
    fn mining_accumulates_across_utterances() {
        let utt = |id: &str| {
            (
                id.to_string(),
                vec![tokenize("go to walmart"), tokenize("go to beaumont")],
            )
        };
        let counts = mine_confusions(vec![utt("u1"), utt("u2")], 1).unwrap();
        assert_eq!(counts.count("walmart", "beaumont"), 2);
    }

    #[test]
    fn mining_single_hypothesis_contributes_nothing() {
        let decodings = vec![("u1".to_string(), vec![tokenize("call mom")])];
        assert!(mine_confusions(decodings, 1).unwrap().is_empty());
    }

    #[test]
    fn mining_rejects_bad_order() {
        assert!(mine_confusions(Vec::new(), 0).is_err());
        assert!(mine_confusions(Vec::new(), 6).is_err());
    }

    fn keys_of(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn dictionary_filters_and_sorts() {
        let mut confusions = ConfusionCounts::default();
        // Distances to "beaumont" (key 175): beaumond 0, bowman 1/3, cedar 1.
        confusions.add("beaumont".into(), "beaumond".into(), 5);
        confusions.add("beaumont".into(), "bowman".into(), 3);
        confusions.add("beaumont".into(), "cedar".into(), 9);
        let dict = build_fuzz_dictionary(&confusions, &keys_of(&["beaumont"]), 0.34, 1).unwrap();
        let alts: Vec<String> = dict
            .lookup(tokenize("beaumont").tokens())
            .iter()
            .map(FuzzEntry::joined)
            .collect();
        assert_eq!(alts, vec!["beaumond", "bowman"]);
    }

    #[test]
    fn dictionary_truncates_to_25() {
        let mut confusions = ConfusionCounts::default();
        for i in 0..30 {
            // Same phonetic key as "bat" (15) via doubled letters.
            confusions.add(
                "bat".into(),
                format!("b{}at", "b".repeat(i + 1)),
                2 + i as u64,
            );
        }
        let dict = build_fuzz_dictionary(&confusions, &keys_of(&["bat"]), 1.0, 1).unwrap();
        assert_eq!(
            dict.lookup(tokenize("bat").tokens()).len(),
            MAX_ALTERNATIVES
        );
    }

    #[test]
    fn dictionary_empty_confusions() {
        let dict =
            build_fuzz_dictionary(&ConfusionCounts::default(), &keys_of(&["x"]), 0.5, 1).unwrap();
        assert!(dict.is_empty());
    }

    #[test]
    fn dictionary_min_count_filter() {
        let mut confusions = ConfusionCounts::default();
        confusions.add("beaumont".into(), "beaumond".into(), 1);
        let dict = build_fuzz_dictionary(&confusions, &keys_of(&["beaumont"]), 0.34, 2).unwrap();
        assert!(dict.is_empty());
    }

    fn one_entry_dict(key: &str, alt: &str) -> FuzzDictionary {
        let mut confusions = ConfusionCounts::default();
        confusions.add(key.into(), alt.into(), 5);
        build_fuzz_dictionary(&confusions, &keys_of(&[key]), 1.0, 1).unwrap()
    }

    #[test]
    fn fuzz_replaces_shared_noun() {
        let dict = one_entry_dict("beaumont", "walmart");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reference = tokenize("directions to beaumont");
        let out = fuzz_hypothesis(
            &reference.clone(),
            &reference,
            &[ProperNounSpan::new(2, 1)],
            &dict,
            &mut rng,
        );
        assert_eq!(out.join(), "directions to walmart");
    }

    #[test]
    fn fuzz_identity_when_no_shared_noun() {
        let dict = one_entry_dict("beaumont", "walmart");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hyp = tokenize("directions to dallas");
        let out = fuzz_hypothesis(
            &hyp,
            &tokenize("directions to beaumont"),
            &[ProperNounSpan::new(2, 1)],
            &dict,
            &mut rng,
        );
        assert_eq!(out, hyp);
    }

    #[test]
    fn fuzz_identity_when_dictionary_misses() {
        let dict = one_entry_dict("other", "word");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reference = tokenize("directions to beaumont");
        let out = fuzz_hypothesis(
            &reference.clone(),
            &reference,
            &[ProperNounSpan::new(2, 1)],
            &dict,
            &mut rng,
        );
        assert_eq!(out, reference);
    }

    #[test]
    fn fuzz_replaces_leftmost_occurrence_only() {
        let dict = one_entry_dict("cedar", "sitar");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reference = tokenize("cedar falls near cedar");
        let out = fuzz_hypothesis(
            &reference.clone(),
            &reference,
            &[ProperNounSpan::new(0, 1)],
            &dict,
            &mut rng,
        );
        assert_eq!(out.join(), "sitar falls near cedar");
    }

    #[test]
    fn fuzz_prefers_longest_then_earliest_span() {
        let mut confusions = ConfusionCounts::default();
        confusions.add("cedar rapids".into(), "cedar rabids".into(), 5);
        confusions.add("alma".into(), "helma".into(), 5);
        let dict = build_fuzz_dictionary(&confusions, &keys_of(&["cedar rapids", "alma"]), 1.0, 1)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reference = tokenize("alma near cedar rapids");
        let spans = [ProperNounSpan::new(0, 1), ProperNounSpan::new(2, 2)];
        let out = fuzz_hypothesis(&reference.clone(), &reference, &spans, &dict, &mut rng);
        assert_eq!(out.join(), "alma near cedar rabids");
    }

    #[test]
    fn fuzz_beam_duplicates_when_nothing_shared() {
        let dict = one_entry_dict("beaumont", "walmart");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let beam = Beam::new(vec![
            Hypothesis::new(tokenize("go to dallas"), 0.5),
            Hypothesis::new(tokenize("go to austin"), -0.5),
        ]);
        let out = fuzz_beam(
            &beam,
            &tokenize("go to beaumont"),
            &[ProperNounSpan::new(2, 1)],
            &dict,
            &mut rng,
        );
        assert_eq!(out.len(), 4);
        assert_eq!(out.hypotheses[2], beam.hypotheses[0]);
        assert_eq!(out.hypotheses[3], beam.hypotheses[1]);
    }

    #[test]
    fn fuzz_beam_appends_fuzzed_image() {
        let dict = one_entry_dict("beaumont", "walmart");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reference = tokenize("go to beaumont");
        let beam = Beam::new(vec![Hypothesis::with_features(
            reference.clone(),
            1.25,
            vec![1.0, 2.0],
        )]);
        let out = fuzz_beam(
            &beam,
            &reference,
            &[ProperNounSpan::new(2, 1)],
            &dict,
            &mut rng,
        );
        assert_eq!(out.len(), 2);
        assert_eq!(out.hypotheses[0], beam.hypotheses[0]);
        assert_eq!(out.hypotheses[1].tokens.join(), "go to walmart");
        assert_eq!(out.hypotheses[1].score, 1.25);
        // Modified entries are synthesized: no observed features.
        assert!(out.hypotheses[1].features.is_none());
    }

    #[test]
    fn fuzz_beam_deterministic_under_seed() {
        let mut confusions = ConfusionCounts::default();
        for alt in ["peaumont", "beaumond", "baumont"] {
            confusions.add("beaumont".into(), alt.into(), 3);
        }
        let dict = build_fuzz_dictionary(&confusions, &keys_of(&["beaumont"]), 1.0, 1).unwrap();
        let reference = tokenize("go to beaumont");
        let beam = Beam::new(vec![
            Hypothesis::new(reference.clone(), 0.0),
            Hypothesis::new(tokenize("go to beaumont now"), 0.1),
        ]);
        let spans = [ProperNounSpan::new(2, 1)];
        let a = fuzz_beam(
            &beam,
            &reference,
            &spans,
            &dict,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        let b = fuzz_beam(
            &beam,
            &reference,
            &spans,
            &dict,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn confusions_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("confusions.tsv");
        let mut counts = ConfusionCounts::default();
        counts.add("cedar rapids".into(), "cedar rabids".into(), 4);
        counts.add("alma".into(), "helma".into(), 1);
        counts.save(&path).unwrap();
        assert_eq!(ConfusionCounts::load(&path).unwrap(), counts);
    }

    #[test]
    fn dictionary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.jsonl");
        let mut confusions = ConfusionCounts::default();
        confusions.add("beaumont".into(), "beaumond".into(), 5);
        confusions.add("beaumont".into(), "bowman".into(), 3);
        let dict = build_fuzz_dictionary(&confusions, &keys_of(&["beaumont"]), 0.5, 1).unwrap();
        dict.save(&path).unwrap();
        assert_eq!(FuzzDictionary::load(&path).unwrap(), dict);
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_bounded(a in "[a-z]{0,10}", b in "[a-z]{0,10}") {
            let (ka, kb) = (key(&a), key(&b));
            let d_ab = phonetic_distance(&ka, &kb);
            let d_ba = phonetic_distance(&kb, &ka);
            prop_assert_eq!(d_ab, d_ba);
            prop_assert!((0.0..=1.0).contains(&d_ab));
            if ka == kb {
                prop_assert_eq!(d_ab, 0.0);
            } else {
                prop_assert!(d_ab > 0.0);
            }
        }

        #[test]
        fn fuzz_beam_structure(n in 1usize..8, seed in 0u64..1000) {
            let dict = one_entry_dict("beaumont", "walmart");
            let reference = tokenize("go to beaumont");
            let beam = Beam::new(
                (0..n)
                    .map(|i| Hypothesis::new(
                        if i % 2 == 0 { reference.clone() } else { tokenize("go to dallas") },
                        i as f64,
                    ))
                    .collect(),
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = fuzz_beam(&beam, &reference, &[ProperNounSpan::new(2, 1)], &dict, &mut rng);
            prop_assert_eq!(out.len(), 2 * n);
            prop_assert_eq!(&out.hypotheses[..n], beam.hypotheses.as_slice());
        }

        #[test]
        fn mining_is_order_independent(perm_seed in 0u64..100) {
            use rand::seq::SliceRandom;
            let mut hyps = vec![
                tokenize("call mom now"),
                tokenize("call tom now"),
                tokenize("tall tom cow"),
            ];
            let base = mine_confusions(
                vec![("u".to_string(), hyps.clone())],
                2,
            ).unwrap();
            hyps.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            let permuted = mine_confusions(vec![("u".to_string(), hyps)], 2).unwrap();
            // Directional counts over all ordered pairs are permutation-invariant.
            prop_assert_eq!(base, permuted);
        }
    }
}

//! The corpus and decodes file formats: one JSON record per line under a
//! one-line version header. Scores and features round-trip bit-exactly
//! because floats are written in shortest decimal form.
//!
//! Corpus record layout:
//! `{"id":…, "ref":…, "spans":[[start,length],…], "hyps":[[text,score,features|null],…]}`

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{tokenize, Beam, Hypothesis, ProperNounSpan, Transcript, Utterance};

pub const CORPUS_HEADER: &str = "pnmwer-corpus v1";
pub const DECODES_HEADER: &str = "pnmwer-decodes v1";

#[derive(Serialize, Deserialize)]
struct HypRecord(String, f64, Option<Vec<f64>>);

#[derive(Serialize, Deserialize)]
struct CorpusRecord {
    id: String,
    #[serde(rename = "ref")]
    reference: String,
    spans: Vec<(usize, usize)>,
    hyps: Vec<HypRecord>,
}

impl CorpusRecord {
    fn from_utterance(utt: &Utterance) -> CorpusRecord {
        CorpusRecord {
            id: utt.id.clone(),
            reference: utt.reference.join(),
            spans: utt
                .proper_nouns
                .iter()
                .map(|s| (s.start, s.length))
                .collect(),
            hyps: utt
                .beam
                .hypotheses
                .iter()
                .map(|h| HypRecord(h.tokens.join(), h.score, h.features.clone()))
                .collect(),
        }
    }

    fn into_utterance(self) -> Result<Utterance> {
        let reference = tokenize(&self.reference);
        let proper_nouns: Vec<ProperNounSpan> = self
            .spans
            .iter()
            .map(|&(start, length)| ProperNounSpan::new(start, length))
            .collect();
        crate::types::validate_spans(&proper_nouns, reference.len())?;
        let beam = Beam::new(
            self.hyps
                .into_iter()
                .map(|HypRecord(text, score, features)| Hypothesis {
                    tokens: tokenize(&text),
                    score,
                    features,
                })
                .collect(),
        );
        beam.validate()?;
        let utterance = Utterance {
            id: self.id,
            reference,
            proper_nouns,
            beam,
        };
        if utterance.id.is_empty() {
            return Err(Error::InvalidInput("empty utterance id".into()));
        }
        Ok(utterance)
    }
}

/// Streams corpus records, yielding one result per line so malformed records
/// can be reported individually. Duplicate ids are record-level errors.
pub fn read_corpus_records(
    path: &Path,
) -> Result<impl Iterator<Item = Result<Utterance>> + use<'_>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    match lines.next() {
        Some((_, Ok(first))) if first == CORPUS_HEADER => {}
        Some((_, Ok(first))) => {
            return Err(Error::parse(
                path,
                1,
                format!("expected header {CORPUS_HEADER:?}, found {first:?}"),
            ));
        }
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => {
            return Err(Error::parse(
                path,
                1,
                format!("missing header {CORPUS_HEADER:?}"),
            ))
        }
    }
    let mut seen_ids: HashSet<String> = HashSet::new();
    Ok(lines.filter_map(move |(i, line)| {
        let lineno = i + 1;
        let line = match line {
            Ok(line) => line,
            Err(e) => return Some(Err(Error::io(path, e))),
        };
        if line.is_empty() {
            return None;
        }
        let record: CorpusRecord = match serde_json::from_str(&line) {
            Ok(record) => record,
            Err(e) => return Some(Err(Error::parse(path, lineno, e.to_string()))),
        };
        let utterance = record
            .into_utterance()
            .map_err(|e| Error::parse(path, lineno, e.to_string()));
        if let Ok(utt) = &utterance {
            if !seen_ids.insert(utt.id.clone()) {
                return Some(Err(Error::parse(
                    path,
                    lineno,
                    format!("duplicate utterance id {:?}", utt.id),
                )));
            }
        }
        Some(utterance)
    }))
}

/// Reads a whole corpus, failing on the first malformed record.
pub fn read_corpus(path: &Path) -> Result<Vec<Utterance>> {
    read_corpus_records(path)?.collect()
}

pub fn write_corpus(path: &Path, utterances: &[Utterance]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "{CORPUS_HEADER}").map_err(|e| Error::io(path, e))?;
    for utt in utterances {
        let record = CorpusRecord::from_utterance(utt);
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::InvalidInput(format!("utterance {}: {e}", utt.id)))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct DecodeRecord {
    id: String,
    text: String,
}

/// (utterance id, decoded transcript) pairs, in file order.
pub fn read_decodes(path: &Path) -> Result<Vec<(String, Transcript)>> {
    let mut decodes = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (lineno, line) in crate::fileio::read_body(path, DECODES_HEADER)? {
        let record: DecodeRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate utterance id {:?}", record.id),
            ));
        }
        decodes.push((record.id, tokenize(&record.text)));
    }
    Ok(decodes)
}

pub fn write_decodes(path: &Path, decodes: &[(String, Transcript)]) -> Result<()> {
    let lines: Vec<String> = decodes
        .iter()
        .map(|(id, text)| {
            serde_json::to_string(&DecodeRecord {
                id: id.clone(),
                text: text.join(),
            })
            .expect("decode record serializes")
        })
        .collect();
    crate::fileio::write_body(path, DECODES_HEADER, lines)
}

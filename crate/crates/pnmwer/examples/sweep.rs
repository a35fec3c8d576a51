//! Toy-scale λ and τ sweeps on the synthetic corpus: trains the rescorer
//! with each loss setting and reports eval WER, proper-noun missed rate, and
//! the rate of decodes that land on a dictionary fuzz of the spoken name.
//!
//! Usage: cargo run --release --example sweep [seed]

use std::collections::BTreeSet;

use pnmwer::eval::{corpus_wer, proper_noun_missed_rate, DecodedUtterance};
use pnmwer::fuzz::{build_fuzz_dictionary, mine_confusions, FuzzDictionary};
use pnmwer::synth::{generate, SynthConfig};
use pnmwer::trainer::{decode, train, LossKind, RescorerModel, TrainConfig};
use pnmwer::types::Utterance;

fn decode_all(model: &RescorerModel, eval: &[Utterance]) -> Vec<DecodedUtterance> {
    eval.iter()
        .map(|utt| DecodedUtterance {
            id: utt.id.clone(),
            hypothesis: decode(model, utt).expect("decodable"),
            reference: utt.reference.clone(),
            proper_nouns: utt.proper_nouns.clone(),
        })
        .collect()
}

/// Fraction of eval utterances whose decode misses the tagged name and
/// contains a dictionary fuzz of it instead.
fn missed_fuzz_rate(decodes: &[DecodedUtterance], dict: &FuzzDictionary) -> f64 {
    let mut hits = 0usize;
    for d in decodes {
        let span = &d.proper_nouns[0];
        let seq = &d.reference.tokens()[span.start..span.end()];
        if d.hypothesis.contains_sequence(seq, false) {
            continue;
        }
        let confused = dict.lookup(seq).iter().any(|alt| {
            let alt_tokens: Vec<_> = alt
                .tokens
                .iter()
                .filter_map(|t| pnmwer::Token::new(t))
                .collect();
            d.hypothesis.contains_sequence(&alt_tokens, false)
        });
        if confused {
            hits += 1;
        }
    }
    hits as f64 / decodes.len() as f64
}

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(42);
    let config = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let out = generate(&config).expect("generation succeeds");
    println!(
        "seed {seed}: {} train / {} eval",
        out.train.len(),
        out.eval.len()
    );

    let base = TrainConfig {
        loss: LossKind::Standard,
        lambda: 1.0,
        tau: 1.0,
        learning_rate: 0.3,
        epochs: 3,
        batch_size: 16,
        seed,
    };

    let zero = RescorerModel::zeros(config.feature_width);
    let baseline = decode_all(&zero, &out.eval);
    println!(
        "zero model: wer {:.4}, missed {:.4}",
        corpus_wer(&baseline).unwrap().wer,
        proper_noun_missed_rate(&baseline).unwrap()
    );

    println!("\nlambda sweep (aug loss):");
    for lambda in [1.0, 1.5, 3.0, 4.5, 10.0, 100.0] {
        let cfg = TrainConfig {
            loss: if lambda == 1.0 {
                LossKind::Standard
            } else {
                LossKind::Aug
            },
            lambda,
            ..base.clone()
        };
        let (model, _) = train(&out.train, &cfg, None).expect("training succeeds");
        let decodes = decode_all(&model, &out.eval);
        println!(
            "  lambda {lambda:>5}: wer {:.4}, missed {:.4}",
            corpus_wer(&decodes).unwrap().wer,
            proper_noun_missed_rate(&decodes).unwrap()
        );
    }

    let decodings = out
        .train
        .iter()
        .map(|u| {
            (
                u.id.clone(),
                u.beam.hypotheses.iter().map(|h| h.tokens.clone()).collect(),
            )
        })
        .collect::<Vec<_>>();
    let confusions = mine_confusions(decodings, 2).expect("mining succeeds");
    let keys: BTreeSet<String> = out.lexicon.entries().collect();
    let dict = build_fuzz_dictionary(&confusions, &keys, 0.30, 2).expect("dict builds");
    println!("\ndictionary: {} keys", dict.len());

    println!("\ntau sweep (fuzzed loss):");
    for tau in [0.0, 0.1, 0.25, 0.5, 1.0] {
        let cfg = TrainConfig {
            loss: LossKind::Fuzzed,
            tau,
            ..base.clone()
        };
        let (model, _) = train(&out.train, &cfg, Some(&dict)).expect("training succeeds");
        let decodes = decode_all(&model, &out.eval);
        println!(
            "  tau {tau:>4}: wer {:.4}, missed {:.4}, missed-fuzz {:.4}",
            corpus_wer(&decodes).unwrap().wer,
            proper_noun_missed_rate(&decodes).unwrap(),
            missed_fuzz_rate(&decodes, &dict)
        );
    }
}

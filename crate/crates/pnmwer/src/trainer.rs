//! A small linear rescorer fine-tuned with the MWER losses. It stands in for
//! a second-pass rescoring decoder: it only needs to assign a differentiable
//! score to each beam hypothesis, which keeps every loss effect auditable.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::word_errors;
use crate::error::{Error, Result};
use crate::features::hypothesis_features;
use crate::fileio;
use crate::fuzz::FuzzDictionary;
use crate::loss::{mwer_loss, mwer_loss_aug, mwer_loss_fuzzed, LossReport};
use crate::types::{Beam, Hypothesis, Transcript, Utterance};

pub const MODEL_HEADER: &str = "pnmwer-model v1";

/// Fraction of the input corpus held out (from the end) for per-epoch metrics.
const HELD_OUT_FRACTION: f64 = 0.1;

/// A linear scorer: score(h) = weights · features + bias.
#[derive(Debug, Clone, PartialEq)]
pub struct RescorerModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl RescorerModel {
    /// The all-zeros model of a given feature width: the uniform-posterior
    /// baseline and the deterministic initialization for training.
    pub fn zeros(width: usize) -> RescorerModel {
        RescorerModel {
            weights: vec![0.0; width],
            bias: 0.0,
        }
    }

    pub fn width(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return Err(Error::InvalidInput(format!(
                "feature width {} does not match model width {}",
                features.len(),
                self.weights.len()
            )));
        }
        let dot: f64 = self.weights.iter().zip(features).map(|(w, x)| w * x).sum();
        Ok(dot + self.bias)
    }

    /// Plain decimal text, round-trippable bit-exactly: Rust's shortest
    /// float formatting parses back to the same f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut lines = Vec::with_capacity(self.weights.len() + 2);
        lines.push(format!("width {}", self.weights.len()));
        lines.push(format!("bias {}", self.bias));
        for w in &self.weights {
            lines.push(format!("w {w}"));
        }
        fileio::write_body(path, MODEL_HEADER, lines)
    }

    pub fn load(path: &Path) -> Result<RescorerModel> {
        let body = fileio::read_body(path, MODEL_HEADER)?;
        let mut width: Option<usize> = None;
        let mut bias: Option<f64> = None;
        let mut weights = Vec::new();
        for (lineno, line) in body {
            let bad = || Error::parse(path, lineno, format!("unexpected line {line:?}"));
            let (kind, value) = line.split_once(' ').ok_or_else(bad)?;
            match kind {
                "width" => width = Some(value.parse().map_err(|_| bad())?),
                "bias" => bias = Some(value.parse().map_err(|_| bad())?),
                "w" => weights.push(value.parse().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let (Some(width), Some(bias)) = (width, bias) else {
            return Err(Error::parse(path, 1, "missing width or bias line"));
        };
        if weights.len() != width {
            return Err(Error::parse(
                path,
                1,
                format!("expected {width} weights, found {}", weights.len()),
            ));
        }
        Ok(RescorerModel { weights, bias })
    }
}

/// Which fine-tuning loss to train with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Standard,
    Aug,
    Fuzzed,
    FuzzedDedup,
}

impl LossKind {
    pub fn needs_dictionary(&self) -> bool {
        matches!(self, LossKind::Fuzzed | LossKind::FuzzedDedup)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            LossKind::Standard => "standard",
            LossKind::Aug => "aug",
            LossKind::Fuzzed => "fuzzed",
            LossKind::FuzzedDedup => "fuzzed-dedup",
        };
        f.write_str(name)
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<LossKind> {
        match s {
            "standard" => Ok(LossKind::Standard),
            "aug" => Ok(LossKind::Aug),
            "fuzzed" => Ok(LossKind::Fuzzed),
            "fuzzed-dedup" => Ok(LossKind::FuzzedDedup),
            other => Err(Error::Usage(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// Training hyperparameters. All randomness (shuffling, τ gates, fuzz draws)
/// flows from `seed`.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub lambda: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 1.0 {
            return Err(Error::Usage(format!(
                "lambda must be ≥ 1, got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Usage(format!(
                "tau must be in [0, 1], got {}",
                self.tau
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Usage(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Usage("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the training metrics log.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub held_out_wer: Option<f64>,
    pub held_out_pn_missed: Option<f64>,
}

/// Replaces every hypothesis score with the model's score of its features.
/// Order and tokens are unchanged. Missing or mismatched features are
/// rejected.
pub fn rescore_beam(model: &RescorerModel, beam: &Beam) -> Result<Beam> {
    let mut rescored = beam.clone();
    for (k, hyp) in rescored.hypotheses.iter_mut().enumerate() {
        let features = hyp
            .features
            .as_ref()
            .ok_or_else(|| Error::InvalidInput(format!("hypothesis {k} carries no features")))?;
        hyp.score = model
            .score(features)
            .map_err(|e| Error::InvalidInput(format!("hypothesis {k}: {e}")))?;
    }
    Ok(rescored)
}

/// Picks the hypothesis with maximal rescored score; ties break to the
/// lowest beam index.
pub fn decode(model: &RescorerModel, utterance: &Utterance) -> Result<Transcript> {
    let rescored =
        rescore_beam(model, &utterance.beam).map_err(|e| e.in_utterance(&utterance.id))?;
    let mut best: Option<(usize, f64)> = None;
    for (i, hyp) in rescored.hypotheses.iter().enumerate() {
        // Strict comparison keeps the lowest index on ties.
        if best.is_none_or(|(_, s)| hyp.score > s) {
            best = Some((i, hyp.score));
        }
    }
    let (index, _) =
        best.ok_or_else(|| Error::InvalidInput("empty beam".into()).in_utterance(&utterance.id))?;
    Ok(rescored.hypotheses[index].tokens.clone())
}

/// Features used for scoring and for the parameter chain rule: file-borne
/// entries keep their stored features; synthesized (fuzzed) entries are
/// featurized against the reference.
fn features_of(hyp: &Hypothesis, reference: &Transcript, width: usize) -> Vec<f64> {
    match &hyp.features {
        Some(f) => f.clone(),
        None => hypothesis_features(&hyp.tokens, reference, width),
    }
}

fn utterance_loss(
    model: &RescorerModel,
    utterance: &Utterance,
    config: &TrainConfig,
    dict: Option<&FuzzDictionary>,
    rng: &mut ChaCha8Rng,
) -> Result<LossReport> {
    let rescored = rescore_beam(model, &utterance.beam)?;
    match config.loss {
        LossKind::Standard => mwer_loss(&rescored, &utterance.reference),
        LossKind::Aug => mwer_loss_aug(
            &rescored,
            &utterance.reference,
            &utterance.proper_nouns,
            config.lambda,
        ),
        LossKind::Fuzzed | LossKind::FuzzedDedup => {
            let dict = dict.expect("checked by train()");
            let width = model.width();
            mwer_loss_fuzzed(
                &rescored,
                &utterance.reference,
                &utterance.proper_nouns,
                dict,
                config.tau,
                config.loss == LossKind::FuzzedDedup,
                |h| model.score(&features_of(h, &utterance.reference, width)),
                rng,
            )
        }
    }
}

/// Mini-batch gradient descent on the configured loss. The per-utterance
/// score gradients from the loss module are chained into the parameters
/// (∂score/∂weights = features, ∂score/∂bias = 1) and averaged per batch.
/// Returns the trained model and one metrics record per epoch, computed on
/// a held-out tail split.
pub fn train(
    corpus: &[Utterance],
    config: &TrainConfig,
    dict: Option<&FuzzDictionary>,
) -> Result<(RescorerModel, Vec<EpochMetrics>)> {
    config.validate()?;
    if config.loss.needs_dictionary() && dict.is_none() {
        return Err(Error::Usage(format!(
            "loss kind {} requires a fuzz dictionary",
            config.loss
        )));
    }
    if corpus.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }

    // Consistent feature width across the corpus.
    let mut width: Option<usize> = None;
    for utt in corpus {
        utt.beam.validate().map_err(|e| e.in_utterance(&utt.id))?;
        for (k, hyp) in utt.beam.hypotheses.iter().enumerate() {
            let f = hyp.features.as_ref().ok_or_else(|| {
                Error::InvalidInput(format!("hypothesis {k} carries no features"))
                    .in_utterance(&utt.id)
            })?;
            match width {
                None => width = Some(f.len()),
                Some(w) if w != f.len() => {
                    return Err(Error::InvalidInput(format!(
                        "feature width {} does not match corpus width {w}",
                        f.len()
                    ))
                    .in_utterance(&utt.id));
                }
                _ => {}
            }
        }
    }
    let width = width.expect("non-empty corpus has a width");

    let held_out_len = ((corpus.len() as f64) * HELD_OUT_FRACTION).floor() as usize;
    let (train_split, held_out) = corpus.split_at(corpus.len() - held_out_len);

    let mut model = RescorerModel::zeros(width);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_split.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grad_w = vec![0.0; width];
            let mut grad_b = 0.0;
            let mut batch_loss = 0.0;
            for &i in batch {
                let utt = &train_split[i];
                let report = utterance_loss(&model, utt, config, dict, &mut rng)
                    .map_err(|e| e.in_utterance(&utt.id))?;
                for (k, hyp) in report.beam_used.hypotheses.iter().enumerate() {
                    let g = report.gradient[k];
                    let features = features_of(hyp, &utt.reference, width);
                    for (gw, x) in grad_w.iter_mut().zip(&features) {
                        *gw += g * x;
                    }
                    grad_b += g;
                }
                batch_loss += report.loss;
            }
            let scale = batch.len() as f64;
            let mean_loss = batch_loss / scale;
            if !mean_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged: non-finite mean loss at epoch {epoch}, batch {batch_index}"
                )));
            }
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= config.learning_rate * g / scale;
            }
            model.bias -= config.learning_rate * grad_b / scale;
            if model.weights.iter().any(|w| !w.is_finite()) || !model.bias.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged: non-finite parameters at epoch {epoch}, batch {batch_index}"
                )));
            }
            epoch_loss += batch_loss;
        }

        metrics.push(EpochMetrics {
            epoch,
            mean_loss: epoch_loss / train_split.len() as f64,
            held_out_wer: held_out_wer(&model, held_out)?,
            held_out_pn_missed: held_out_pn_missed(&model, held_out)?,
        });
    }

    Ok((model, metrics))
}

fn held_out_wer(model: &RescorerModel, held_out: &[Utterance]) -> Result<Option<f64>> {
    let mut errors = 0usize;
    let mut ref_words = 0usize;
    for utt in held_out {
        let decoded = decode(model, utt)?;
        errors += word_errors(&decoded, &utt.reference);
        ref_words += utt.reference.len();
    }
    if ref_words == 0 {
        return Ok(None);
    }
    Ok(Some(errors as f64 / ref_words as f64))
}

fn held_out_pn_missed(model: &RescorerModel, held_out: &[Utterance]) -> Result<Option<f64>> {
    let mut missed = 0usize;
    let mut total = 0usize;
    for utt in held_out {
        if utt.proper_nouns.is_empty() {
            continue;
        }
        let decoded = decode(model, utt)?;
        for span in &utt.proper_nouns {
            total += 1;
            if !decoded.contains_sequence(utt.span_tokens(span), false) {
                missed += 1;
            }
        }
    }
    if total == 0 {
        return Ok(None);
    }
    Ok(Some(missed as f64 / total as f64))
}

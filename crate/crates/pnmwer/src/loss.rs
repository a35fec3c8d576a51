//! The MWER fine-tuning losses over an N-best beam: the standard expected
//! word-error loss, the proper-noun-augmented variant that multiplies the
//! loss term of hypotheses missing a tagged proper noun, and the fuzzed
//! variant over a doubled beam of phonetically confusable negatives. All
//! three report analytic gradients with respect to the hypothesis scores.

use rand::Rng;

use crate::align::relative_word_errors;
use crate::error::{Error, Result};
use crate::fuzz::{fuzz_beam, FuzzDictionary};
use crate::types::{Beam, Hypothesis, ProperNounSpan, Transcript};

/// A probability distribution over a beam: the softmax of the hypothesis
/// scores over exactly the beam handed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    probabilities: Vec<f64>,
}

impl Posterior {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Softmax over the beam's scores with max-subtraction for stability.
/// Non-finite scores are rejected.
pub fn posterior(beam: &Beam) -> Result<Posterior> {
    if beam.is_empty() {
        return Err(Error::InvalidInput("posterior of an empty beam".into()));
    }
    let scores = beam.scores();
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score {bad}")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let norm: f64 = exps.iter().sum();
    Ok(Posterior {
        probabilities: exps.into_iter().map(|e| e / norm).collect(),
    })
}

/// Loss value with everything needed to audit it: the posterior, the
/// beam-relative error terms, the per-hypothesis loss multipliers, and the
/// gradient of the loss with respect to each hypothesis score. `beam_used`
/// is the beam the loss was actually computed over, which for the fuzzed
/// loss is the doubled (or deduplicated) beam.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub posteriors: Posterior,
    pub w_hat: Vec<f64>,
    /// ∂loss/∂score_k for each hypothesis of `beam_used`.
    pub gradient: Vec<f64>,
    /// The λ in effect; 1 when the loss has no augmentation.
    pub lambda: f64,
    /// Per-hypothesis multiplier c_k ∈ {1, λ}; all ones when not augmented.
    pub hyp_multipliers: Vec<f64>,
    pub beam_used: Beam,
}

impl LossReport {
    /// Recomputes Σ p_k·ŵ_k·c_k from the report's own fields.
    pub fn recompute_loss(&self) -> f64 {
        self.posteriors
            .probabilities()
            .iter()
            .zip(&self.w_hat)
            .zip(&self.hyp_multipliers)
            .map(|((p, w), c)| p * w * c)
            .sum()
    }
}

/// Shared core: L = Σ p_k·ŵ_k·c_k with gradient p_k·(ŵ_k·c_k − L).
fn expected_error_loss(
    beam: Beam,
    reference: &Transcript,
    multipliers: Vec<f64>,
    lambda: f64,
) -> Result<LossReport> {
    let posteriors = posterior(&beam)?;
    let w_hat = relative_word_errors(&beam, reference);
    let p = posteriors.probabilities();
    let loss: f64 = p
        .iter()
        .zip(&w_hat)
        .zip(&multipliers)
        .map(|((p, w), c)| p * w * c)
        .sum();
    let gradient: Vec<f64> = p
        .iter()
        .zip(&w_hat)
        .zip(&multipliers)
        .map(|((p, w), c)| p * (w * c - loss))
        .collect();
    Ok(LossReport {
        loss,
        posteriors,
        w_hat,
        gradient,
        lambda,
        hyp_multipliers: multipliers,
        beam_used: beam,
    })
}

/// The standard MWER loss: the posterior-weighted mean of the beam-relative
/// word-error terms, L = Σ p_k·Ŵ_k.
pub fn mwer_loss(beam: &Beam, reference: &Transcript) -> Result<LossReport> {
    let multipliers = vec![1.0; beam.len()];
    expected_error_loss(beam.clone(), reference, multipliers, 1.0)
}

/// The proper-noun-augmented loss: a hypothesis that fails to contain some
/// tagged proper noun of the reference has its loss term multiplied by λ.
/// The condition fires once per hypothesis regardless of how many nouns are
/// missed. With λ = 1 this reduces exactly to [`mwer_loss`].
pub fn mwer_loss_aug(
    beam: &Beam,
    reference: &Transcript,
    spans: &[ProperNounSpan],
    lambda: f64,
) -> Result<LossReport> {
    if !lambda.is_finite() || lambda < 1.0 {
        return Err(Error::InvalidInput(format!(
            "lambda must be finite and at least 1, got {lambda}"
        )));
    }
    let multipliers: Vec<f64> = beam
        .hypotheses
        .iter()
        .map(|hyp| {
            let misses_some = spans.iter().any(|span| {
                let seq = &reference.tokens()[span.start..span.end()];
                !hyp.tokens.contains_sequence(seq, false)
            });
            if misses_some {
                lambda
            } else {
                1.0
            }
        })
        .collect();
    expected_error_loss(beam.clone(), reference, multipliers, lambda)
}

/// Merges exact duplicates (same token text) of a beam, keeping the first
/// occurrence of each distinct hypothesis with its score and features.
pub fn dedup_beam(beam: &Beam) -> Beam {
    let mut seen: Vec<&Transcript> = Vec::new();
    let mut hypotheses: Vec<Hypothesis> = Vec::new();
    for hyp in &beam.hypotheses {
        if seen.iter().any(|t| **t == hyp.tokens) {
            continue;
        }
        seen.push(&hyp.tokens);
        hypotheses.push(hyp.clone());
    }
    Beam::new(hypotheses)
}

/// The fuzzed MWER loss. Draws u uniform in [0, 1); when u ≥ τ the standard
/// loss of the input beam is returned. Otherwise the beam is doubled with
/// the FUZZ image of each hypothesis, every entry is re-scored with
/// `rescore`, and the loss is computed over all 2N entries, duplicates each
/// keeping their own probability mass. With `dedup` set, exact duplicates
/// are merged before the softmax instead.
///
/// The input beam is expected to carry the same scores `rescore` would
/// assign, so that the τ gate switches between losses of one scorer.
#[allow(clippy::too_many_arguments)]
pub fn mwer_loss_fuzzed<R: Rng>(
    beam: &Beam,
    reference: &Transcript,
    spans: &[ProperNounSpan],
    dict: &FuzzDictionary,
    tau: f64,
    dedup: bool,
    rescore: impl Fn(&Hypothesis) -> Result<f64>,
    rng: &mut R,
) -> Result<LossReport> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!(
            "tau must be in [0, 1], got {tau}"
        )));
    }
    let gate: f64 = rng.gen();
    if gate >= tau {
        return mwer_loss(beam, reference);
    }
    let mut doubled = fuzz_beam(beam, reference, spans, dict, rng);
    for (k, hyp) in doubled.hypotheses.iter_mut().enumerate() {
        hyp.score = rescore(hyp)
            .map_err(|e| Error::InvalidInput(format!("rescoring hypothesis {k} failed: {e}")))?;
    }
    let used = if dedup { dedup_beam(&doubled) } else { doubled };
    let multipliers = vec![1.0; used.len()];
    expected_error_loss(used, reference, multipliers, 1.0)
}

/// Central finite differences on each score of `beam` against the analytic
/// gradient of `loss_fn`. Returns the maximum over coordinates of
/// |analytic − numeric| / max(1e-8, |numeric|).
///
/// `loss_fn` must be a pure function of (beam, reference) whose reported
/// gradient covers exactly the input beam's scores.
pub fn gradient_check<F>(
    loss_fn: F,
    beam: &Beam,
    reference: &Transcript,
    epsilon: f64,
) -> Result<f64>
where
    F: Fn(&Beam, &Transcript) -> Result<LossReport>,
{
    if epsilon <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let base = loss_fn(beam, reference)?;
    if base.gradient.len() != beam.len() {
        return Err(Error::InvalidInput(
            "loss_fn gradient does not cover the input beam".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for k in 0..beam.len() {
        let mut plus = beam.clone();
        plus.hypotheses[k].score += epsilon;
        let mut minus = beam.clone();
        minus.hypotheses[k].score -= epsilon;
        let loss_plus = loss_fn(&plus, reference)?.loss;
        let loss_minus = loss_fn(&minus, reference)?.loss;
        let numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
        let deviation = (base.gradient[k] - numeric).abs() / numeric.abs().max(1e-8);
        worst = worst.max(deviation);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzz::{build_fuzz_dictionary, ConfusionCounts};
    use crate::types::tokenize;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn t(text: &str) -> Transcript {
        tokenize(text)
    }

    fn beam(entries: &[(&str, f64)]) -> Beam {
        Beam::new(
            entries
                .iter()
                .map(|(text, score)| Hypothesis::new(t(text), *score))
                .collect(),
        )
    }

    #[test]
    fn posterior_uniform_for_equal_scores() {
        let p = posterior(&beam(&[("a", 2.0), ("b", 2.0), ("c", 2.0), ("d", 2.0)])).unwrap();
        for prob in p.probabilities() {
            assert!((prob - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_closed_form() {
        let p = posterior(&beam(&[("a", 3f64.ln()), ("b", 0.0)])).unwrap();
        assert!((p.probabilities()[0] - 0.75).abs() < 1e-12);
        assert!((p.probabilities()[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn posterior_shift_invariance() {
        let base = beam(&[("a", 0.3), ("b", -1.2), ("c", 2.0)]);
        let mut shifted = base.clone();
        for h in &mut shifted.hypotheses {
            h.score += 123.456;
        }
        let p0 = posterior(&base).unwrap();
        let p1 = posterior(&shifted).unwrap();
        for (a, b) in p0.probabilities().iter().zip(p1.probabilities()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_rejects_non_finite() {
        assert!(posterior(&beam(&[("a", f64::NAN)])).is_err());
        assert!(posterior(&beam(&[("a", f64::INFINITY)])).is_err());
    }

    #[test]
    fn mwer_loss_uniform_weights_on_centered_values() {
        // W = [0, 2] under the reference, equal scores.
        let b = beam(&[("a b", 0.5), ("x y", 0.5)]);
        let report = mwer_loss(&b, &t("a b")).unwrap();
        assert_eq!(report.w_hat, vec![-1.0, 1.0]);
        assert!(report.loss.abs() < 1e-12);
    }

    #[test]
    fn mwer_loss_weighted() {
        // p = [0.75, 0.25], Ŵ = [−1, 1] → L = −0.5.
        let b = beam(&[("a b", 3f64.ln()), ("x y", 0.0)]);
        let report = mwer_loss(&b, &t("a b")).unwrap();
        assert!((report.loss - (-0.5)).abs() < 1e-12);
        // Recompute identity from the report's own fields.
        assert!((report.recompute_loss() - report.loss).abs() < 1e-9);
    }

    #[test]
    fn mwer_loss_identical_hypotheses_is_flat() {
        let b = beam(&[("a b", 1.0), ("a b", -1.0), ("a b", 0.0)]);
        let report = mwer_loss(&b, &t("c d")).unwrap();
        assert_eq!(report.loss, 0.0);
        assert!(report.gradient.iter().all(|g| g.abs() < 1e-12));
    }

    fn aug_example() -> (Beam, Transcript, Vec<ProperNounSpan>) {
        // Reference tags "cedar rapids"; the first hypothesis misses it with
        // two errors, the second is exact: W = [2, 0], Ŵ = [1, −1].
        let reference = t("play cedar rapids");
        let spans = vec![ProperNounSpan::new(1, 2)];
        let b = beam(&[("play walmart store", 0.0), ("play cedar rapids", 0.0)]);
        (b, reference, spans)
    }

    #[test]
    fn aug_loss_direct_computation() {
        let (b, reference, spans) = aug_example();
        let report = mwer_loss_aug(&b, &reference, &spans, 3.0).unwrap();
        // L = 0.5·1·3 + 0.5·(−1)·1 = 1.0
        assert!((report.loss - 1.0).abs() < 1e-12);
        assert_eq!(report.hyp_multipliers, vec![3.0, 1.0]);
        assert_eq!(report.lambda, 3.0);
        assert!((report.recompute_loss() - report.loss).abs() < 1e-9);
    }

    #[test]
    fn aug_loss_reduces_to_standard_at_lambda_one() {
        let (b, reference, spans) = aug_example();
        let standard = mwer_loss(&b, &reference).unwrap();
        let aug = mwer_loss_aug(&b, &reference, &spans, 1.0).unwrap();
        assert!((standard.loss - aug.loss).abs() < 1e-12);
        for (a, s) in aug.gradient.iter().zip(&standard.gradient) {
            assert!((a - s).abs() < 1e-12);
        }
    }

    #[test]
    fn aug_loss_without_tagged_nouns_is_standard() {
        let b = beam(&[("a b", 0.7), ("a c", -0.2)]);
        let reference = t("a b");
        let standard = mwer_loss(&b, &reference).unwrap();
        let aug = mwer_loss_aug(&b, &reference, &[], 10.0).unwrap();
        assert_eq!(standard.loss, aug.loss);
    }

    #[test]
    fn aug_loss_rejects_bad_lambda() {
        let (b, reference, spans) = aug_example();
        assert!(mwer_loss_aug(&b, &reference, &spans, 0.5).is_err());
        assert!(mwer_loss_aug(&b, &reference, &spans, f64::NAN).is_err());
    }

    fn tiny_dict() -> FuzzDictionary {
        let mut confusions = ConfusionCounts::default();
        confusions.add("beaumont".into(), "bowman".into(), 5);
        let keys: BTreeSet<String> = ["beaumont".to_string()].into();
        build_fuzz_dictionary(&confusions, &keys, 1.0, 1).unwrap()
    }

    fn identity_rescore(h: &Hypothesis) -> Result<f64> {
        Ok(h.score)
    }

    #[test]
    fn fuzzed_tau_zero_is_standard() {
        let b = beam(&[("go to beaumont", 0.4), ("go to dallas", -0.3)]);
        let reference = t("go to beaumont");
        let spans = [ProperNounSpan::new(2, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fuzzed = mwer_loss_fuzzed(
            &b,
            &reference,
            &spans,
            &tiny_dict(),
            0.0,
            false,
            identity_rescore,
            &mut rng,
        )
        .unwrap();
        let standard = mwer_loss(&b, &reference).unwrap();
        assert_eq!(fuzzed.loss, standard.loss);
        assert_eq!(fuzzed.beam_used.len(), 2);
    }

    #[test]
    fn fuzzed_tau_one_always_doubles() {
        let b = beam(&[("go to beaumont", 0.4), ("go to dallas", -0.3)]);
        let reference = t("go to beaumont");
        let spans = [ProperNounSpan::new(2, 1)];
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let report = mwer_loss_fuzzed(
                &b,
                &reference,
                &spans,
                &tiny_dict(),
                1.0,
                false,
                identity_rescore,
                &mut rng,
            )
            .unwrap();
            assert_eq!(report.beam_used.len(), 4);
        }
    }

    #[test]
    fn fuzzed_single_hypothesis_direct_computation() {
        // N = 1, hypothesis equals the reference, one dictionary fuzz, equal
        // scores after rescoring: W = [0, 1], Ŵ = [−0.5, 0.5], L = 0.
        let reference = t("go to beaumont");
        let b = beam(&[("go to beaumont", 0.0)]);
        let spans = [ProperNounSpan::new(2, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let report = mwer_loss_fuzzed(
            &b,
            &reference,
            &spans,
            &tiny_dict(),
            1.0,
            false,
            |_| Ok(0.0),
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.beam_used.len(), 2);
        assert_eq!(report.w_hat, vec![-0.5, 0.5]);
        assert!(report.loss.abs() < 1e-12);
    }

    #[test]
    fn fuzzed_empty_dictionary_matches_original_loss() {
        // Doubling with copies halves every posterior but leaves the
        // weighted sum unchanged.
        let b = beam(&[
            ("go to beaumont", 0.9),
            ("go to dallas", -0.2),
            ("go home", 0.1),
        ]);
        let reference = t("go to beaumont");
        let spans = [ProperNounSpan::new(2, 1)];
        let empty = FuzzDictionary::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fuzzed = mwer_loss_fuzzed(
            &b,
            &reference,
            &spans,
            &empty,
            1.0,
            false,
            identity_rescore,
            &mut rng,
        )
        .unwrap();
        let standard = mwer_loss(&b, &reference).unwrap();
        assert_eq!(fuzzed.beam_used.len(), 6);
        assert!((fuzzed.loss - standard.loss).abs() < 1e-9);
    }

    #[test]
    fn fuzzed_dedup_with_empty_dictionary_is_standard() {
        let b = beam(&[("go to beaumont", 0.9), ("go to dallas", -0.2)]);
        let reference = t("go to beaumont");
        let spans = [ProperNounSpan::new(2, 1)];
        let empty = FuzzDictionary::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let report = mwer_loss_fuzzed(
            &b,
            &reference,
            &spans,
            &empty,
            1.0,
            true,
            identity_rescore,
            &mut rng,
        )
        .unwrap();
        let standard = mwer_loss(&b, &reference).unwrap();
        assert_eq!(report.beam_used.len(), 2);
        assert!((report.loss - standard.loss).abs() < 1e-12);
    }

    #[test]
    fn fuzzed_rescore_failure_is_reported() {
        let b = beam(&[("go to beaumont", 0.0)]);
        let reference = t("go to beaumont");
        let spans = [ProperNounSpan::new(2, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = mwer_loss_fuzzed(
            &b,
            &reference,
            &spans,
            &tiny_dict(),
            1.0,
            false,
            |_| Err(Error::InvalidInput("no features".into())),
            &mut rng,
        );
        assert!(err.is_err());
    }

    #[test]
    fn gradient_check_constant_w_hat_is_zero() {
        let b = beam(&[("a b", 0.4), ("a b", -0.1), ("a b", 1.3)]);
        let dev = gradient_check(mwer_loss, &b, &t("a b"), 1e-4).unwrap();
        assert!(dev < 1e-9, "deviation {dev}");
    }

    #[test]
    fn gradient_check_standard_loss() {
        use rand::Rng as _;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let texts = [
            "a b c", "a b d", "a x", "b c", "a b c d", "x y z", "a", "c b a",
        ];
        let b = Beam::new(
            texts
                .iter()
                .map(|s| Hypothesis::new(t(s), rng.gen_range(-2.0..2.0)))
                .collect(),
        );
        let dev = gradient_check(mwer_loss, &b, &t("a b c"), 1e-5).unwrap();
        assert!(dev < 1e-5, "deviation {dev}");
    }

    #[test]
    fn gradient_check_aug_loss() {
        let (b, reference, spans) = aug_example();
        let spans_owned = spans.clone();
        let dev = gradient_check(
            move |beam, reference| mwer_loss_aug(beam, reference, &spans_owned, 3.0),
            &b,
            &reference,
            1e-4,
        )
        .unwrap();
        assert!(dev < 1e-5, "deviation {dev}");
    }

    #[test]
    fn gradient_sums_to_zero() {
        let (b, reference, spans) = aug_example();
        for lambda in [1.0, 3.0, 10.0] {
            let report = mwer_loss_aug(&b, &reference, &spans, lambda).unwrap();
            let sum: f64 = report.gradient.iter().sum();
            assert!(sum.abs() < 1e-9);
        }
    }

    #[test]
    fn loss_is_bounded_by_max_w_hat() {
        let b = beam(&[("a b c", 1.4), ("x y", -0.7), ("a c", 0.2)]);
        let reference = t("a b c");
        let report = mwer_loss(&b, &reference).unwrap();
        let bound = report.w_hat.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        assert!(report.loss.abs() <= bound + 1e-12);
    }

    #[test]
    fn aug_loss_monotone_in_lambda() {
        let (b, reference, spans) = aug_example();
        let mut last = f64::NEG_INFINITY;
        for lambda in [1.0, 2.0, 3.0, 5.0, 10.0] {
            let loss = mwer_loss_aug(&b, &reference, &spans, lambda).unwrap().loss;
            assert!(loss > last);
            last = loss;
        }
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let b = beam(&[("a b", 1.0), ("c d", 2.0), ("a b", 3.0)]);
        let deduped = dedup_beam(&b);
        assert_eq!(deduped.len(), 2);
        assert_eq!(deduped.hypotheses[0].score, 1.0);
        assert_eq!(deduped.hypotheses[1].score, 2.0);
    }

    proptest! {
        #[test]
        fn posterior_sums_to_one(scores in proptest::collection::vec(-5.0f64..5.0, 1..=16)) {
            let b = Beam::new(
                scores.iter().map(|&s| Hypothesis::new(t("a"), s)).collect(),
            );
            let p = posterior(&b).unwrap();
            let sum: f64 = p.probabilities().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(p.probabilities().iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn loss_shift_invariance(
            scores in proptest::collection::vec(-3.0f64..3.0, 2..=8),
            shift in -50.0f64..50.0,
        ) {
            let texts = ["a b", "a c", "x y", "a b c", "b", "c a", "x", "a"];
            let b = Beam::new(
                scores
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| Hypothesis::new(t(texts[i % texts.len()]), s))
                    .collect(),
            );
            let mut shifted = b.clone();
            for h in &mut shifted.hypotheses {
                h.score += shift;
            }
            let reference = t("a b");
            let l0 = mwer_loss(&b, &reference).unwrap();
            let l1 = mwer_loss(&shifted, &reference).unwrap();
            prop_assert!((l0.loss - l1.loss).abs() < 1e-9);
            for (g0, g1) in l0.gradient.iter().zip(&l1.gradient) {
                prop_assert!((g0 - g1).abs() < 1e-9);
            }
        }
    }
}

//! Deterministic synthetic corpus generator. Produces voice-command style
//! utterances that embed one proper noun each, with first-pass beams whose
//! distractors replace the name by a phonetically close confuser or by a
//! more common name. Feature vectors are built so a linear rescorer can
//! separate correct from incorrect hypotheses while the zero model cannot.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::VocabStats;
use crate::features::hypothesis_features;
use crate::fuzz::{phonetic_distance, phonetic_key};
use crate::tagger::ProperNounLexicon;
use crate::types::{tokenize, Beam, Hypothesis, ProperNounSpan, Transcript, Utterance};

/// Placeholder token marking the name slot in a carrier template.
pub const NAME_SLOT: &str = "<NAME>";

/// Per-distractor draw probabilities for the four error classes. Whatever
/// remains goes to common-name substitutions.
///
/// Confusers are scarce in training beams, the way hard negatives are scarce
/// in first-pass decodings; evaluation beams stress them. Insertions (the
/// name plus a filler word, an ordinary error that still contains the name)
/// outnumber omissions (the name dropped entirely, a missed name) in
/// training, so protecting names trades against ordinary errors.
#[derive(Debug, Clone, Copy)]
struct DistractorRates {
    confuser: f64,
    insertion: f64,
    omission: f64,
}

const TRAIN_RATES: DistractorRates = DistractorRates {
    confuser: 0.05,
    insertion: 0.25,
    omission: 0.10,
};
const EVAL_RATES: DistractorRates = DistractorRates {
    confuser: 0.45,
    insertion: 0.25,
    omission: 0.12,
};

/// Filler words a first pass may hallucinate after a name.
const FILLERS: [&str; 3] = ["seven", "signal", "record"];

/// Scale of the jitter on first-pass scores.
const RAW_SCORE_JITTER: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub train_utterances: usize,
    pub eval_utterances: usize,
    /// Number of distinct names; sampled with a power-law long tail.
    pub inventory_size: usize,
    pub confusers_per_name: usize,
    pub templates: Vec<String>,
    pub beam_size: usize,
    pub feature_width: usize,
    /// Power-law exponent of the name distribution; 0 is uniform.
    pub skew: f64,
    /// Uniform jitter added to every stored feature value.
    pub noise_scale: f64,
    /// Fraction of beams whose reference entry is dropped, for robustness
    /// experiments. The default 0 keeps the reference in every beam.
    pub drop_reference_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            seed: 42,
            train_utterances: 5000,
            eval_utterances: 1000,
            inventory_size: 120,
            confusers_per_name: 4,
            templates: default_templates(),
            beam_size: 4,
            feature_width: 6,
            skew: 1.1,
            noise_scale: 0.08,
            drop_reference_rate: 0.0,
        }
    }
}

pub fn default_templates() -> Vec<String> {
    [
        "directions to <NAME>",
        "navigate to <NAME>",
        "play <NAME> now",
        "call <NAME> now",
        "directions to <NAME> please",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.beam_size < 2 {
            return Err(Error::InvalidInput("beam size must be at least 2".into()));
        }
        if self.feature_width < 2 {
            return Err(Error::InvalidInput(
                "feature width must be at least 2".into(),
            ));
        }
        if self.skew < 0.0 || !self.skew.is_finite() {
            return Err(Error::InvalidInput(format!(
                "skew must be non-negative, got {}",
                self.skew
            )));
        }
        if self.noise_scale < 0.0 || !self.noise_scale.is_finite() {
            return Err(Error::InvalidInput(format!(
                "noise scale must be non-negative, got {}",
                self.noise_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.drop_reference_rate) {
            return Err(Error::InvalidInput(
                "drop_reference_rate must be in [0, 1]".into(),
            ));
        }
        if self.inventory_size < 2 {
            return Err(Error::InvalidInput(
                "name inventory must hold at least 2 names".into(),
            ));
        }
        if self.confusers_per_name == 0 {
            return Err(Error::InvalidInput(
                "confusers per name must be at least 1".into(),
            ));
        }
        if self.train_utterances == 0 || self.eval_utterances == 0 {
            return Err(Error::InvalidInput(
                "utterance counts must be positive".into(),
            ));
        }
        if self.templates.is_empty() {
            return Err(Error::InvalidInput(
                "at least one template is required".into(),
            ));
        }
        for template in &self.templates {
            let slots = template
                .split_whitespace()
                .filter(|t| *t == NAME_SLOT)
                .count();
            if slots != 1 {
                return Err(Error::InvalidInput(format!(
                    "template {template:?} must contain the {NAME_SLOT} token exactly once"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub train: Vec<Utterance>,
    pub eval: Vec<Utterance>,
    pub lexicon: ProperNounLexicon,
    pub stats: VocabStats,
}

const ONSETS: [&str; 18] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "br", "st", "kr", "tr", "gl",
];
const NUCLEI: [&str; 12] = [
    "a", "e", "i", "o", "u", "ar", "el", "in", "on", "or", "an", "er",
];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

fn syllable<R: Rng>(rng: &mut R) -> String {
    let mut s = String::new();
    s.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
    s.push_str(NUCLEI[rng.gen_range(0..NUCLEI.len())]);
    s
}

fn name_word<R: Rng>(rng: &mut R) -> String {
    let syllables = 2 + usize::from(rng.gen::<f64>() < 0.3);
    (0..syllables).map(|_| syllable(rng)).collect()
}

/// Letter-level perturbations that keep the sound-class key close: double a
/// consonant, swap a vowel, swap a same-class consonant, or drop/extend the
/// final letter.
fn perturb_word<R: Rng>(word: &str, rng: &mut R) -> String {
    let chars: Vec<char> = word.chars().collect();
    let same_class = |c: char| -> Option<char> {
        match c {
            'b' => Some('p'),
            'p' => Some('b'),
            'd' => Some('t'),
            't' => Some('d'),
            'f' => Some('v'),
            'v' => Some('f'),
            's' => Some('z'),
            'z' => Some('s'),
            'm' => Some('n'),
            'n' => Some('m'),
            'k' => Some('c'),
            'c' => Some('k'),
            'g' => Some('j'),
            'j' => Some('g'),
            _ => None,
        }
    };
    for _ in 0..8 {
        match rng.gen_range(0..4u8) {
            0 => {
                // Double a consonant.
                let spots: Vec<usize> = (0..chars.len())
                    .filter(|&i| !VOWELS.contains(&chars[i]))
                    .collect();
                if !spots.is_empty() {
                    let i = spots[rng.gen_range(0..spots.len())];
                    let mut out = chars.clone();
                    out.insert(i, chars[i]);
                    return out.into_iter().collect();
                }
            }
            1 => {
                // Swap a vowel.
                let spots: Vec<usize> = (0..chars.len())
                    .filter(|&i| VOWELS.contains(&chars[i]))
                    .collect();
                if !spots.is_empty() {
                    let i = spots[rng.gen_range(0..spots.len())];
                    let replacement = VOWELS[rng.gen_range(0..VOWELS.len())];
                    if replacement != chars[i] {
                        let mut out = chars.clone();
                        out[i] = replacement;
                        return out.into_iter().collect();
                    }
                }
            }
            2 => {
                // Same-class consonant swap.
                let spots: Vec<usize> = (0..chars.len())
                    .filter(|&i| same_class(chars[i]).is_some())
                    .collect();
                if !spots.is_empty() {
                    let i = spots[rng.gen_range(0..spots.len())];
                    let mut out = chars.clone();
                    out[i] = same_class(chars[i]).unwrap();
                    return out.into_iter().collect();
                }
            }
            _ => {
                // Trailing-letter edit.
                if chars.len() >= 5 && rng.gen::<bool>() {
                    return chars[..chars.len() - 1].iter().collect();
                }
                let mut out: String = chars.iter().collect();
                out.push(if rng.gen::<bool>() { 's' } else { 'e' });
                return out;
            }
        }
    }
    // Fall back to an always-applicable edit.
    let mut out: String = chars.iter().collect();
    out.push('s');
    out
}

#[derive(Debug, Clone)]
struct Inventory {
    /// Name token sequences, most common first.
    names: Vec<Vec<String>>,
    /// Confusers per name, each the name with one word perturbed.
    confusers: Vec<Vec<Vec<String>>>,
    /// Cumulative sampling weights.
    cumulative: Vec<f64>,
    /// Commonness score in [0, 1] per rank under the sampling law.
    commonness: Vec<f64>,
}

impl Inventory {
    fn build(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Inventory> {
        let mut used: std::collections::HashSet<String> = config
            .templates
            .iter()
            .flat_map(|t| t.split_whitespace().map(str::to_string))
            .collect();
        let mut names: Vec<Vec<String>> = Vec::with_capacity(config.inventory_size);
        while names.len() < config.inventory_size {
            let words = if rng.gen::<f64>() < 0.25 {
                vec![name_word(rng), name_word(rng)]
            } else {
                vec![name_word(rng)]
            };
            let joined = words.join(" ");
            if used.insert(joined) {
                names.push(words);
            }
        }

        let mut confusers = Vec::with_capacity(names.len());
        for name in &names {
            let mut list: Vec<Vec<String>> = Vec::with_capacity(config.confusers_per_name);
            let mut attempts = 0;
            while list.len() < config.confusers_per_name {
                attempts += 1;
                if attempts > 200 {
                    return Err(Error::InvalidInput(format!(
                        "cannot derive {} distinct confusers for name {:?}",
                        config.confusers_per_name,
                        name.join(" ")
                    )));
                }
                let mut candidate = name.clone();
                let word = rng.gen_range(0..candidate.len());
                candidate[word] = perturb_word(&candidate[word], rng);
                let joined = candidate.join(" ");
                if used.insert(joined) {
                    list.push(candidate);
                }
            }
            confusers.push(list);
        }

        let weights: Vec<f64> = (0..names.len())
            .map(|k| ((k + 1) as f64).powf(-config.skew))
            .collect();
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut total = 0.0;
        for w in &weights {
            total += w;
            cumulative.push(total);
        }
        let (w_max, w_min) = (weights[0], *weights.last().unwrap());
        let commonness: Vec<f64> = weights
            .iter()
            .map(|&w| {
                if config.skew == 0.0 || w_max == w_min {
                    0.5
                } else {
                    (w / w_min).ln() / (w_max / w_min).ln()
                }
            })
            .collect();
        Ok(Inventory {
            names,
            confusers,
            cumulative,
            commonness,
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.names.len() - 1)
    }
}

struct TemplateParts {
    prefix: Vec<String>,
    suffix: Vec<String>,
}

fn split_template(template: &str) -> TemplateParts {
    let tokens: Vec<&str> = template.split_whitespace().collect();
    let slot = tokens
        .iter()
        .position(|t| *t == NAME_SLOT)
        .expect("validated");
    TemplateParts {
        prefix: tokens[..slot].iter().map(|s| s.to_string()).collect(),
        suffix: tokens[slot + 1..].iter().map(|s| s.to_string()).collect(),
    }
}

fn fill(parts: &TemplateParts, words: &[String]) -> Transcript {
    let mut text = parts.prefix.join(" ");
    for w in words {
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(w);
    }
    if !parts.suffix.is_empty() {
        text.push(' ');
        text.push_str(&parts.suffix.join(" "));
    }
    tokenize(&text)
}

fn jitter<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    scale * (2.0 * rng.gen::<f64>() - 1.0)
}

/// Standard normal via Box–Muller; heavier tails than the uniform jitter so
/// hard cases exist at every noise scale.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn build_utterance(
    id: String,
    inventory: &Inventory,
    templates: &[TemplateParts],
    config: &SynthConfig,
    rates: DistractorRates,
    rng: &mut ChaCha8Rng,
) -> Utterance {
    let name_idx = inventory.sample(rng);
    let template = &templates[rng.gen_range(0..templates.len())];
    let name = &inventory.names[name_idx];
    let reference = fill(template, name);
    let span = ProperNounSpan::new(template.prefix.len(), name.len());

    // Common-name substitution no longer than the spoken name, keeping every
    // distractor's error count within the name length.
    let other_name = |rng: &mut ChaCha8Rng| -> (Vec<String>, f64) {
        loop {
            let other = inventory.sample(rng);
            if other != name_idx && inventory.names[other].len() <= name.len() {
                return (inventory.names[other].clone(), inventory.commonness[other]);
            }
        }
    };

    // Slot fillers: the spoken name plus beam_size − 1 distractors.
    let mut fillers: Vec<(Vec<String>, f64)> = Vec::with_capacity(config.beam_size);
    if rng.gen::<f64>() < config.drop_reference_rate {
        fillers.push(other_name(rng));
    } else {
        fillers.push((name.clone(), inventory.commonness[name_idx]));
    }
    for _ in 1..config.beam_size {
        let draw: f64 = rng.gen();
        if draw < rates.confuser {
            let list = &inventory.confusers[name_idx];
            fillers.push((list[rng.gen_range(0..list.len())].clone(), 0.0));
        } else if draw < rates.confuser + rates.insertion {
            // The name plus a hallucinated filler: contains the name, one
            // ordinary insertion error.
            let mut words = name.clone();
            words.push(FILLERS[rng.gen_range(0..FILLERS.len())].to_string());
            fillers.push((words, inventory.commonness[name_idx]));
        } else if draw < rates.confuser + rates.insertion + rates.omission {
            // The name dropped entirely: a missed name, length-only evidence.
            fillers.push((Vec::new(), 0.0));
        } else {
            fillers.push(other_name(rng));
        }
    }

    let mut entries: Vec<(f64, Hypothesis)> = Vec::with_capacity(fillers.len());
    for (words, commonness) in fillers {
        entries.push(score_entry(
            words, commonness, template, &reference, config, rng,
        ));
    }

    // First-pass order: best raw score first; stable under ties.
    entries.sort_by(|a, b| b.0.total_cmp(&a.0));
    let beam = Beam::new(entries.into_iter().map(|(_, h)| h).collect());

    Utterance {
        id,
        reference,
        proper_nouns: vec![span],
        beam,
    }
}

/// Builds one scored, featurized beam entry from its slot filler.
fn score_entry(
    words: Vec<String>,
    commonness: f64,
    template: &TemplateParts,
    reference: &Transcript,
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> (f64, Hypothesis) {
    let tokens = fill(template, &words);
    let acoustic = 1.0
        - phonetic_distance(
            &phonetic_key(tokens.tokens()),
            &phonetic_key(reference.tokens()),
        );
    // The first pass favors common words: that is the bias the rescorer has
    // to unlearn.
    let raw = 2.0 * commonness + acoustic + jitter(rng, RAW_SCORE_JITTER);
    let mut features = hypothesis_features(&tokens, reference, config.feature_width);
    for f in &mut features {
        *f += config.noise_scale * gaussian(rng);
    }
    (raw, Hypothesis::with_features(tokens, raw, features))
}

/// Generates the train and eval corpora, the lexicon of all names, and the
/// training-frequency table. Deterministic for a fixed config.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let inventory = Inventory::build(config, &mut rng)?;
    let templates: Vec<TemplateParts> =
        config.templates.iter().map(|t| split_template(t)).collect();

    let mut train = Vec::with_capacity(config.train_utterances);
    for i in 0..config.train_utterances {
        train.push(build_utterance(
            format!("train-{i:06}"),
            &inventory,
            &templates,
            config,
            TRAIN_RATES,
            &mut rng,
        ));
    }
    let mut eval = Vec::with_capacity(config.eval_utterances);
    for i in 0..config.eval_utterances {
        eval.push(build_utterance(
            format!("eval-{i:06}"),
            &inventory,
            &templates,
            config,
            EVAL_RATES,
            &mut rng,
        ));
    }

    let mut lexicon = ProperNounLexicon::new(false);
    for name in &inventory.names {
        lexicon.insert(&name.join(" "))?;
    }
    let stats = VocabStats::from_references(train.iter().map(|u| &u.reference));

    Ok(SynthOutput {
        train,
        eval,
        lexicon,
        stats,
    })
}

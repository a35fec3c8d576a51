//! Command-line surface tying the pipeline together:
//! synth → tag → mine → build-dict → train → decode → eval.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::corpus;
use crate::error::{Error, Result};
use crate::eval::{self, DecodedUtterance, VocabStats};
use crate::fuzz::{build_fuzz_dictionary, mine_confusions, ConfusionCounts, FuzzDictionary};
use crate::synth::{self, SynthConfig};
use crate::tagger::{tag_corpus, ProperNounLexicon};
use crate::trainer::{self, LossKind, RescorerModel, TrainConfig};
use crate::types::Utterance;

#[derive(Parser)]
#[command(
    name = "pnmwer",
    version,
    about = "Proper-noun-aware MWER losses, fuzz dictionaries, and N-best rescoring tools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic train/eval corpus pair with lexicon and stats.
    Synth(SynthArgs),
    /// Tag proper-noun spans in a corpus from a lexicon.
    Tag(TagArgs),
    /// Mine n-gram confusion pairs from co-hypothesized decodings.
    Mine(MineArgs),
    /// Filter mined confusions into a fuzz dictionary.
    BuildDict(BuildDictArgs),
    /// Fine-tune the rescorer with an MWER loss.
    Train(TrainArgs),
    /// Rescore beams and emit the best hypothesis per utterance.
    Decode(DecodeArgs),
    /// Score decodes against references: WER, rates, VWER sweep.
    Eval(EvalArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_eval: PathBuf,
    #[arg(long)]
    out_lexicon: PathBuf,
    #[arg(long)]
    out_stats: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    train_utterances: usize,
    #[arg(long, default_value_t = 1000)]
    eval_utterances: usize,
    #[arg(long, default_value_t = 120)]
    inventory: usize,
    #[arg(long, default_value_t = 4)]
    confusers: usize,
    /// Carrier template with a <NAME> slot; repeatable.
    #[arg(long = "template")]
    templates: Vec<String>,
    #[arg(long, default_value_t = 4)]
    beam: usize,
    #[arg(long, default_value_t = 4)]
    features: usize,
    #[arg(long, default_value_t = 1.1)]
    skew: f64,
    #[arg(long, default_value_t = 0.06)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    drop_reference_rate: f64,
}

#[derive(Args)]
pub struct TagArgs {
    corpus: PathBuf,
    lexicon: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also tag capitalized runs that are not at sentence start.
    #[arg(long)]
    heuristics: bool,
    /// Match lexicon entries exactly instead of case-normalized.
    #[arg(long)]
    case_sensitive: bool,
}

#[derive(Args)]
pub struct MineArgs {
    /// Corpus file whose beams provide the co-hypothesized n-grams.
    decodings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    max_n: usize,
}

#[derive(Args)]
pub struct BuildDictArgs {
    confusions: PathBuf,
    /// Lexicon file listing the proper nouns to build entries for.
    keys: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.34)]
    max_distance: f64,
    #[arg(long, default_value_t = 2)]
    min_count: u64,
}

#[derive(Args)]
pub struct TrainArgs {
    corpus: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    /// Append-only metrics log, one line per epoch.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long, default_value = "standard", value_parser = parse_loss_kind)]
    loss: LossKind,
    #[arg(long, default_value_t = 3.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 4)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn parse_loss_kind(s: &str) -> Result<LossKind> {
    s.parse()
}

#[derive(Args)]
pub struct DecodeArgs {
    corpus: PathBuf,
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    decodes: PathBuf,
    /// Corpus file providing references and tagged spans.
    refs: PathBuf,
    stats: PathBuf,
    #[arg(long)]
    report_out: PathBuf,
    #[arg(long)]
    plot_out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 10, 100, 1000, 10000, 100000])]
    thresholds: Vec<u64>,
    #[arg(long, default_value_t = 1000)]
    rare_threshold: u64,
    /// Second decodes file; the plot becomes the (baseline − this run)
    /// VWER difference curve.
    #[arg(long)]
    baseline: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Tag(args) => run_tag(args),
        Command::Mine(args) => run_mine(args),
        Command::BuildDict(args) => run_build_dict(args),
        Command::Train(args) => run_train(args),
        Command::Decode(args) => run_decode(args),
        Command::Eval(args) => run_eval(args),
    }
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        seed: args.seed,
        train_utterances: args.train_utterances,
        eval_utterances: args.eval_utterances,
        inventory_size: args.inventory,
        confusers_per_name: args.confusers,
        templates: if args.templates.is_empty() {
            synth::default_templates()
        } else {
            args.templates
        },
        beam_size: args.beam,
        feature_width: args.features,
        skew: args.skew,
        noise_scale: args.noise,
        drop_reference_rate: args.drop_reference_rate,
    };
    let output = synth::generate(&config)?;
    corpus::write_corpus(&args.out_train, &output.train)?;
    corpus::write_corpus(&args.out_eval, &output.eval)?;
    let mut entries: Vec<String> = output.lexicon.entries().collect();
    entries.sort();
    let file =
        std::fs::File::create(&args.out_lexicon).map_err(|e| Error::io(&args.out_lexicon, e))?;
    let mut writer = std::io::BufWriter::new(file);
    for entry in entries {
        writeln!(writer, "{entry}").map_err(|e| Error::io(&args.out_lexicon, e))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(&args.out_lexicon, e))?;
    output.stats.save(&args.out_stats)?;
    Ok(())
}

fn run_tag(args: TagArgs) -> Result<()> {
    let lexicon = ProperNounLexicon::load(&args.lexicon, args.case_sensitive)?;
    let records = corpus::read_corpus_records(&args.corpus)?;
    let mut tagged: Vec<Utterance> = Vec::new();
    let mut failures = 0usize;
    for result in tag_corpus(records, &lexicon, args.heuristics) {
        match result {
            Ok(utt) => tagged.push(utt),
            Err(e) => {
                failures += 1;
                eprintln!("tag: {e}");
            }
        }
    }
    corpus::write_corpus(&args.out, &tagged)?;
    if failures > 0 {
        return Err(Error::InvalidInput(format!(
            "{failures} record(s) failed; successful records were written"
        )));
    }
    Ok(())
}

fn run_mine(args: MineArgs) -> Result<()> {
    if !(1..=5).contains(&args.max_n) {
        return Err(Error::Usage(format!(
            "--max-n must be in 1..=5, got {}",
            args.max_n
        )));
    }
    let records = corpus::read_corpus_records(&args.decodings)?;
    let mut decodings: Vec<(String, Vec<crate::types::Transcript>)> = Vec::new();
    let mut failures = 0usize;
    for result in records {
        match result {
            Ok(utt) => decodings.push((
                utt.id,
                utt.beam.hypotheses.into_iter().map(|h| h.tokens).collect(),
            )),
            Err(e) => {
                failures += 1;
                eprintln!("mine: {e}");
            }
        }
    }
    let counts = mine_confusions(decodings, args.max_n)?;
    counts.save(&args.out)?;
    if failures > 0 {
        return Err(Error::InvalidInput(format!(
            "{failures} record(s) failed; counts were written for the rest"
        )));
    }
    Ok(())
}

fn run_build_dict(args: BuildDictArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.max_distance) {
        return Err(Error::Usage(format!(
            "--max-distance must be in [0, 1], got {}",
            args.max_distance
        )));
    }
    if args.min_count == 0 {
        return Err(Error::Usage("--min-count must be at least 1".into()));
    }
    let counts = ConfusionCounts::load(&args.confusions)?;
    let lexicon = ProperNounLexicon::load(&args.keys, false)?;
    let keys: BTreeSet<String> = lexicon.entries().collect();
    let dict = build_fuzz_dictionary(&counts, &keys, args.max_distance, args.min_count)?;
    dict.save(&args.out)
}

fn run_train(args: TrainArgs) -> Result<()> {
    if args.loss.needs_dictionary() && args.dict.is_none() {
        return Err(Error::Usage(format!(
            "--loss {} requires --dict",
            args.loss
        )));
    }
    let dict = match &args.dict {
        Some(path) => Some(FuzzDictionary::load(path)?),
        None => None,
    };
    let utterances = corpus::read_corpus(&args.corpus)?;
    let config = TrainConfig {
        loss: args.loss,
        lambda: args.lambda,
        tau: args.tau,
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch,
        seed: args.seed,
    };
    let (model, metrics) = trainer::train(&utterances, &config, dict.as_ref())?;
    model.save(&args.model_out)?;
    if let Some(path) = &args.metrics_out {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        for epoch in &metrics {
            let line = serde_json::to_string(epoch).expect("metrics line serializes");
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn run_decode(args: DecodeArgs) -> Result<()> {
    let model = RescorerModel::load(&args.model)?;
    let utterances = corpus::read_corpus(&args.corpus)?;
    let mut decodes = Vec::with_capacity(utterances.len());
    for utt in &utterances {
        decodes.push((utt.id.clone(), trainer::decode(&model, utt)?));
    }
    corpus::write_decodes(&args.out, &decodes)
}

/// Joins decodes with their reference corpus by utterance id, aborting with
/// the first mismatches listed when the two disagree.
fn join_decodes(
    decodes: Vec<(String, crate::types::Transcript)>,
    references: &[Utterance],
) -> Result<Vec<DecodedUtterance>> {
    let ref_by_id: std::collections::HashMap<&str, &Utterance> =
        references.iter().map(|u| (u.id.as_str(), u)).collect();
    let decode_ids: std::collections::HashSet<&str> =
        decodes.iter().map(|(id, _)| id.as_str()).collect();
    let mut mismatches: Vec<String> = decodes
        .iter()
        .filter(|(id, _)| !ref_by_id.contains_key(id.as_str()))
        .map(|(id, _)| format!("decode {id} has no reference"))
        .collect();
    mismatches.extend(
        references
            .iter()
            .filter(|u| !decode_ids.contains(u.id.as_str()))
            .map(|u| format!("reference {} has no decode", u.id)),
    );
    if !mismatches.is_empty() {
        mismatches.truncate(10);
        return Err(Error::InvalidInput(format!(
            "utterance ids do not match:\n  {}",
            mismatches.join("\n  ")
        )));
    }
    Ok(decodes
        .into_iter()
        .map(|(id, hypothesis)| {
            let reference = ref_by_id[id.as_str()];
            DecodedUtterance {
                id,
                hypothesis,
                reference: reference.reference.clone(),
                proper_nouns: reference.proper_nouns.clone(),
            }
        })
        .collect())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let decodes = corpus::read_decodes(&args.decodes)?;
    let references = corpus::read_corpus(&args.refs)?;
    let stats = VocabStats::load(&args.stats)?;
    let scored = join_decodes(decodes, &references)?;
    let report = eval::evaluate(&scored, &stats, &args.thresholds, args.rare_threshold)?;
    report.save(&args.report_out)?;
    print!("{}", report.table());
    match &args.baseline {
        Some(path) => {
            let baseline = join_decodes(corpus::read_decodes(path)?, &references)?;
            let curve = eval::vwer_diff_curve(&baseline, &scored, &stats, &args.thresholds)?;
            eval::save_plot_data(&args.plot_out, &curve)?;
        }
        None => {
            eval::save_plot_data(&args.plot_out, &report.vwer_curve)?;
        }
    }
    Ok(())
}

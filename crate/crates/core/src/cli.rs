//! `tbm` command line: `synth`, `train`, `eval` and `generate`.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 runtime failure
//! (training divergence).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::synth::{generate_synthetic_corpus, SynthConfig};
use crate::data::{
    detokenize, extract_all, load_corpus, read_context, save_corpus, save_fragments, split_dataset, Corpus,
    DialogueFragment, FileHeader, FragmentFile, KnowledgeVocab, Split, Vocab, FORMAT_VERSION, FRAGMENT_FORMAT,
};
use crate::metrics::{paired_bootstrap, MetricReport, PER_EXAMPLE_METRICS};
use crate::model::{Ablation, TbmModel};
use crate::train::{train, EpochStats};
use crate::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

const PREDICTIONS_FORMAT: &str = "tbm-predictions";
const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Parser, Debug)]
#[command(name = "tbm", version, about = "Judge-question generation for court debates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic debate corpus
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Number of dialogues
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Extract fragments, split 8:1:1 and train
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// key=value configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for checkpoints, log and splits
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated ablation flags, e.g. disable_copy,disable_role
        #[arg(long)]
        ablation: Option<String>,
        /// Configuration override, repeatable
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Decode a split and score it
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        #[arg(long)]
        beam: Option<usize>,
        /// Directory for predictions and report (default: the model's directory)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Second checkpoint for a paired significance test
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Row label in the printed table
        #[arg(long, default_value = "TBM")]
        name: String,
    },
    /// Generate the next judge question for one fragment
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        fragment: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } | Error::NonFiniteGradient { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn io_context(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Usage(format!("{}: {e}", path.display()))
}

fn with_path<T>(path: &Path, r: crate::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        Error::Io(io) => CliError::Usage(format!("{}: {io}", path.display())),
        other => other.into(),
    })
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth { out, n, seed } => cmd_synth(&out, n, seed),
        Command::Train {
            corpus,
            config,
            out,
            ablation,
            overrides,
            epochs,
            seed,
        } => {
            let cfg = resolve_config(config.as_deref(), ablation.as_deref(), &overrides, epochs, seed)?;
            cmd_train(&corpus, &out, cfg)
        }
        Command::Eval {
            model,
            corpus,
            split,
            beam,
            out,
            compare,
            name,
        } => cmd_eval(&model, &corpus, split, beam, out.as_deref(), compare.as_deref(), &name),
        Command::Generate { model, fragment, beam } => cmd_generate(&model, &fragment, beam),
    }
}

/// Merges the config file, `--set` overrides, then dedicated flags.
pub fn resolve_config(
    file: Option<&Path>,
    ablation: Option<&str>,
    overrides: &[String],
    epochs: Option<usize>,
    seed: Option<u64>,
) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(io_context(path))?;
        cfg.apply_text(&text)?;
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(flags) = ablation {
        for flag in flags.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            if !cfg.model.ablation.set(flag, true) {
                return Err(CliError::Usage(format!(
                    "unknown ablation flag `{flag}` (expected one of {})",
                    Ablation::NAMES.join(", ")
                )));
            }
        }
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_synth(out: &Path, n: usize, seed: u64) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let corpus = generate_synthetic_corpus(&SynthConfig::new(n, seed));
    with_path(out, save_corpus(out, &corpus))?;
    print!("{}", corpus_table(&corpus));
    Ok(())
}

/// Dialogue and fragment statistics in a `Dataset #Samples #Utterances
/// #avg_length` table.
pub fn corpus_table(corpus: &Corpus) -> String {
    let dialogues = corpus.dialogues.len();
    let utterances: usize = corpus.dialogues.iter().map(|d| d.turns.len()).sum();
    let fragments = extract_all(&corpus.dialogues);
    let frag_utts: usize = fragments.iter().map(|f| f.context().len() + 1).sum();
    let avg = |u: usize, n: usize| if n == 0 { 0.0 } else { u as f64 / n as f64 };
    let mut s = format!(
        "{:<12}{:>10}{:>14}{:>14}\n",
        "Dataset", "#Samples", "#Utterances", "#avg_length"
    );
    s.push_str(&format!(
        "{:<12}{:>10}{:>14}{:>14.2}\n",
        "fragments",
        fragments.len(),
        frag_utts,
        avg(frag_utts, fragments.len())
    ));
    s.push_str(&format!(
        "{:<12}{:>10}{:>14}{:>14.2}\n",
        "Total",
        dialogues,
        utterances,
        avg(utterances, dialogues)
    ));
    s
}

fn split_corpus(corpus: &Corpus, seed: u64) -> Result<Split<DialogueFragment>, CliError> {
    Ok(split_dataset(extract_all(&corpus.dialogues), seed)?)
}

fn build_vocab(train: &[DialogueFragment], min_freq: usize) -> Vocab {
    Vocab::build(
        train
            .iter()
            .flat_map(|f| f.context().iter().chain(std::iter::once(f.target())))
            .flat_map(|u| u.tokens())
            .map(String::as_str),
        min_freq,
    )
}

fn build_knowledge(corpus: &Corpus) -> KnowledgeVocab {
    KnowledgeVocab::build(
        corpus
            .dialogues
            .iter()
            .flat_map(|d| &d.turns)
            .flat_map(|u| u.elements())
            .map(String::as_str),
    )
}

/// Writes to a sibling temporary file, then renames over `path`.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_context(&tmp))?;
    fs::rename(&tmp, path).map_err(io_context(path))
}

fn save_checkpoint(path: &Path, model: &TbmModel, config: &BTreeMap<String, String>) -> Result<(), CliError> {
    let ck = Checkpoint {
        model: model.clone(),
        config: config.clone(),
    };
    write_atomic(path, &ck.to_json()?)
}

fn cmd_train(corpus_path: &Path, out: &Path, cfg: RunConfig) -> Result<(), CliError> {
    let corpus = with_path(corpus_path, load_corpus(corpus_path))?;
    let split = split_corpus(&corpus, cfg.train.seed)?;
    let vocab = build_vocab(&split.train, cfg.min_freq);
    let knowledge = build_knowledge(&corpus);
    fs::create_dir_all(out).map_err(io_context(out))?;

    let config_map = cfg.to_map();
    fs::write(out.join("config.resolved"), cfg.to_text()).map_err(io_context(out))?;
    for (name, part) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
        let file = FragmentFile {
            header: Some(FileHeader::new(FRAGMENT_FORMAT, config_map.clone())),
            fragments: part.clone(),
        };
        let path = out.join(format!("fragments.{name}.jsonl"));
        with_path(&path, save_fragments(&path, &file))?;
    }

    let model = TbmModel::new(cfg.model, vocab, knowledge, cfg.train.seed)?;
    let last_good = out.join("last_good.ckpt");
    let best_path = out.join("best.ckpt");
    save_checkpoint(&last_good, &model, &config_map)?;

    let log_path = out.join("train.log");
    let mut log = fs::File::create(&log_path).map_err(io_context(&log_path))?;
    let header = serde_json::json!({"format": "tbm-train-log", "version": FORMAT_VERSION, "config": config_map});
    writeln!(log, "# {header}").map_err(io_context(&log_path))?;

    println!(
        "fragments: train={} dev={} test={}  vocab={}",
        split.train.len(),
        split.dev.len(),
        split.test.len(),
        model.vocab.len()
    );
    let mut observer = |stats: &EpochStats, model: &TbmModel, is_best: bool| -> crate::Result<()> {
        writeln!(log, "{}", stats.log_line())?;
        log.flush()?;
        println!("{}", stats.log_line());
        save_checkpoint(&last_good, model, &config_map).map_err(|e| Error::Invalid(e.message().to_string()))?;
        if is_best {
            save_checkpoint(&best_path, model, &config_map).map_err(|e| Error::Invalid(e.message().to_string()))?;
        }
        Ok(())
    };
    let outcome = train(model, &split.train, &split.dev, cfg.train, &mut observer, &|_| false)?;
    if !best_path.exists() {
        save_checkpoint(&best_path, &outcome.best, &config_map)?;
    }
    println!("best epoch: {}", outcome.best_epoch);
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, RunConfig), CliError> {
    let ck = with_path(path, Checkpoint::load(path))?;
    let cfg = RunConfig::from_map(&ck.config)?;
    Ok((ck, cfg))
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    id: &'a str,
    prediction: &'a [String],
    reference: &'a [String],
}

fn decode_all(
    model: &TbmModel,
    fragments: &[DialogueFragment],
    beam: usize,
    max_len: usize,
) -> crate::Result<Vec<Vec<String>>> {
    fragments
        .par_iter()
        .map(|f| model.generate(f.context(), beam, max_len))
        .collect()
}

/// Re-derives the split a checkpoint was trained on and checks its vocabulary.
fn checkpoint_split(ck: &Checkpoint, cfg: &RunConfig, corpus: &Corpus) -> Result<Split<DialogueFragment>, CliError> {
    let split = split_corpus(corpus, cfg.train.seed)?;
    let vocab = build_vocab(&split.train, cfg.min_freq);
    if vocab.hash() != ck.model.vocab.hash() {
        return Err(Error::VocabMismatch {
            expected: ck.model.vocab.hash(),
            found: vocab.hash(),
        }
        .into());
    }
    Ok(split)
}

fn cmd_eval(
    model_path: &Path,
    corpus_path: &Path,
    split_name: SplitName,
    beam: Option<usize>,
    out: Option<&Path>,
    compare: Option<&Path>,
    name: &str,
) -> Result<(), CliError> {
    let (ck, cfg) = load_checkpoint(model_path)?;
    let beam = beam.unwrap_or(cfg.decode_beam);
    if beam == 0 {
        return Err(CliError::Usage("--beam must be at least 1".into()));
    }
    let corpus = with_path(corpus_path, load_corpus(corpus_path))?;
    let split = checkpoint_split(&ck, &cfg, &corpus)?;
    let fragments = match split_name {
        SplitName::Train => &split.train,
        SplitName::Dev => &split.dev,
        SplitName::Test => &split.test,
    };
    let predictions = decode_all(&ck.model, fragments, beam, cfg.decode_max_len)?;
    let references: Vec<Vec<String>> = fragments.iter().map(|f| f.target().tokens().to_vec()).collect();
    let report = MetricReport::compute(&predictions, &references)?;

    let out_dir = match out {
        Some(p) => p.to_path_buf(),
        None => model_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    fs::create_dir_all(&out_dir).map_err(io_context(&out_dir))?;
    let config_json = serde_json::to_string(&ck.config).map_err(Error::from)?;

    let mut pred_text = serde_json::to_string(&serde_json::json!({
        "format": PREDICTIONS_FORMAT,
        "version": FORMAT_VERSION,
        "config": ck.config,
    }))
    .map_err(Error::from)?;
    pred_text.push('\n');
    for ((f, p), r) in fragments.iter().zip(&predictions).zip(&references) {
        let rec = PredictionRecord {
            id: f.id(),
            prediction: p,
            reference: r,
        };
        pred_text.push_str(&serde_json::to_string(&rec).map_err(Error::from)?);
        pred_text.push('\n');
    }
    let split_label = split_name.as_str();
    let pred_path = out_dir.join(format!("predictions.{split_label}.jsonl"));
    fs::write(&pred_path, pred_text).map_err(io_context(&pred_path))?;

    let mut extra = vec![("split", format!("\"{split_label}\"")), ("beam", beam.to_string())];
    let mut rows = vec![report.table_row(name)];
    if let Some(other_path) = compare {
        let (other, other_cfg) = load_checkpoint(other_path)?;
        if other.model.vocab.hash() != ck.model.vocab.hash() {
            return Err(Error::VocabMismatch {
                expected: ck.model.vocab.hash(),
                found: other.model.vocab.hash(),
            }
            .into());
        }
        let other_pred = decode_all(&other.model, fragments, beam, other_cfg.decode_max_len)?;
        let other_report = MetricReport::compute(&other_pred, &references)?;
        let mut sig = BTreeMap::new();
        for metric in PER_EXAMPLE_METRICS {
            let p = paired_bootstrap(
                &report.per_example[metric],
                &other_report.per_example[metric],
                BOOTSTRAP_RESAMPLES,
                cfg.train.seed,
            )?;
            sig.insert(metric, p);
        }
        extra.push(("compare", other_report.to_json(&[]).trim_end().to_string()));
        extra.push(("p_values", serde_json::to_string(&sig).map_err(Error::from)?));
        rows.push(other_report.table_row("compare"));
    }
    extra.push(("config", config_json));
    extra.push(("version", FORMAT_VERSION.to_string()));
    let report_path = out_dir.join(format!("report.{split_label}.json"));
    fs::write(&report_path, report.to_json(&extra)).map_err(io_context(&report_path))?;

    println!("{}", MetricReport::table_header());
    for row in rows {
        println!("{row}");
    }
    Ok(())
}

fn cmd_generate(model_path: &Path, fragment_path: &Path, beam: Option<usize>) -> Result<(), CliError> {
    let (ck, cfg) = load_checkpoint(model_path)?;
    let text = fs::read_to_string(fragment_path).map_err(io_context(fragment_path))?;
    let context = read_context(&text)?;
    let beam = beam.unwrap_or(cfg.decode_beam);
    if beam == 0 {
        return Err(CliError::Usage("--beam must be at least 1".into()));
    }
    let tokens = ck.model.generate(&context, beam, cfg.decode_max_len)?;
    println!("{}", detokenize(&tokens));
    Ok(())
}

//! `slotrte`: generate corpora, train, evaluate and explain slot-based triple extractors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use slotrte::data::{
    generate_synthetic, load_corpus_dir, write_corpus, CorpusManifest, CorpusSplits, Example, HeadWord,
};
use slotrte::eval::{evaluate, export_explanations, MatchMode};
use slotrte::slot_attn::Variant;
use slotrte::trainer::{train, Checkpoint, TrainConfig, TrainOptions};
use slotrte::Error;

#[derive(Parser, Debug)]
#[command(name = "slotrte", version, about = "Slot-attention relational triple extraction")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Overrides the seed of the manifest or training config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Attention variant; overrides the config (train) or the checkpoint (eval, explain).
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Softmax,
    Ot,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Softmax => Variant::Softmax,
            VariantArg::Ot => Variant::OptimalTransport,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Exact,
    Partial,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum HeadArg {
    First,
    Last,
}

impl From<HeadArg> for HeadWord {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::First => HeadWord::First,
            HeadArg::Last => HeadWord::Last,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Default,
    RareRelation,
    OverlapHeavy,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus directory from a manifest.
    GenData {
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        manifest: Option<PathBuf>,
        /// Built-in manifest to use instead of a file.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a corpus directory and write a checkpoint plus run record.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Stop once validation exact F1 reaches this value.
        #[arg(long)]
        stop_at_f1: Option<f64>,
        #[arg(long, value_enum, default_value = "last")]
        head_word: HeadArg,
    },
    /// Score a checkpoint on a corpus split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Add per-pattern and per-count slices.
        #[arg(long)]
        breakdown: bool,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        #[arg(long, value_enum, default_value = "last")]
        head_word: HeadArg,
    },
    /// Export attention maps, decoded triples and heatmaps per sentence.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Refinement iteration to show (1-based); defaults to the last.
        #[arg(long)]
        iteration: Option<usize>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Number of sentences to export.
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
}

fn pick(splits: CorpusSplits, split: Split) -> Vec<Example> {
    match split {
        Split::Train => splits.train,
        Split::Valid => splits.valid,
        Split::Test => splits.test,
    }
}

fn load_checkpoint(path: &Path, variant: Option<VariantArg>) -> slotrte::Result<Checkpoint> {
    let mut ck = Checkpoint::load(path)?;
    if let Some(v) = variant {
        ck.config.variant = v.into();
    }
    Ok(ck)
}

fn run(cli: Cli) -> slotrte::Result<()> {
    let common = cli.common;
    match cli.command {
        Command::GenData { manifest, preset, out } => {
            let mut m = match (manifest, preset) {
                (Some(path), _) => CorpusManifest::load(&path)?,
                (None, Some(Preset::RareRelation)) => CorpusManifest::rare_relation(),
                (None, Some(Preset::OverlapHeavy)) => CorpusManifest::overlap_heavy(),
                (None, _) => CorpusManifest::default(),
            };
            if let Some(seed) = common.seed {
                m.seed = seed;
            }
            let corpus = generate_synthetic(&m)?;
            write_corpus(&out, &corpus)?;
            log::info!(
                "wrote {} / {} / {} sentences to {}",
                corpus.train.len(),
                corpus.valid.len(),
                corpus.test.len(),
                out.display()
            );
        }
        Command::Train { config, data, out, stop_at_f1, head_word } => {
            let mut cfg = TrainConfig::load(&config)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(v) = common.variant {
                cfg.variant = v.into();
            }
            let splits = load_corpus_dir(&data, head_word.into())?;
            let opts = TrainOptions { stop_at_f1, head_word: head_word.into(), ..TrainOptions::default() };
            let outcome = train(&splits.train, &splits.valid, &splits.relations, &cfg, &opts)?;
            fs::create_dir_all(&out)?;
            outcome.checkpoint.save(&out.join("checkpoint.json"))?;
            outcome.record.write_csv(&out.join("run.csv"))?;
            cfg.save(&out.join("config.toml"))?;
            log::info!("best validation exact F1 {:.4} at epoch {}", outcome.best_f1, outcome.best_epoch);
        }
        Command::Eval { checkpoint, data, mode, breakdown, split, head_word } => {
            let ck = load_checkpoint(&checkpoint, common.variant)?;
            let (model, vocab) = (ck.model()?, ck.vocabulary()?);
            let splits = load_corpus_dir(&data, head_word.into())?;
            if splits.relations != ck.relations()? {
                return Err(Error::Config("corpus relation inventory differs from the checkpoint's".into()));
            }
            let examples = pick(splits, split);
            let report = evaluate(&model, &vocab, &examples, head_word.into())?;
            let mode = match mode {
                ModeArg::Exact => MatchMode::Exact,
                ModeArg::Partial => MatchMode::Partial,
            };
            print!("{}", report.render(mode, breakdown));
        }
        Command::Explain { checkpoint, data, out, iteration, split, limit } => {
            let ck = load_checkpoint(&checkpoint, common.variant)?;
            let (model, vocab, relations) = (ck.model()?, ck.vocabulary()?, ck.relations()?);
            let splits = load_corpus_dir(&data, HeadWord::Last)?;
            let examples = pick(splits, split);
            let take = limit.min(examples.len());
            let files = export_explanations(&model, &vocab, &relations, &examples[..take], &out, iteration)?;
            log::info!("wrote {} files for {take} sentences to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else if matches!(e, Error::Config(_)) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.common.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

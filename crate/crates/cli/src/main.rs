//! `logq`: build corpora, train and evaluate agents, run the embedding
//! baseline, dump transcripts and play against a trained questioner.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or digest error, 3 numeric
//! failure during training.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use logq_core::baseline::{evaluate_baseline_with, Aggregation};
use logq_core::corpus::{ingest_pairs, read_pairs_file, write_pairs, Manifest};
use logq_core::embeddings::DEFAULT_LIMIT;
use logq_core::eval::dump_transcripts;
use logq_core::game::GameSet;
use logq_core::play::play_interactive;
use logq_core::qbot::QBotError;
use logq_core::{
    build_corpus, derive_seed, evaluate, synthetic, train, Agents, Checkpoint, Corpus, EmbeddingTable, GameConfig,
    GameError, LossRegime, OpenVocabulary, Partition, RunOptions, SentenceSet, TrainConfig, TrainError, Trainer,
};

#[derive(Parser)]
#[command(name = "logq", version, about = "Two-agent sentence guessing game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample sentence sets from paired sentences and split them.
    BuildCorpus(BuildCorpusArgs),
    /// Train both agents.
    Train(TrainArgs),
    /// Game accuracy and splitting-word prediction on one split.
    Eval(EvalArgs),
    /// Embedding splitter accuracy over the corpus.
    Baseline(BaselineArgs),
    /// Answer the questioner yourself.
    Play(PlayArgs),
    /// Write decoded transcripts as JSON lines.
    Dump(DumpArgs),
}

#[derive(Args)]
struct BuildCorpusArgs {
    /// Tab-separated sentence pair file; may be repeated.
    #[arg(long = "pairs")]
    pairs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    num_sets: usize,
    #[arg(long)]
    seed: u64,
    /// Generate this many templated pairs; random vectors for their
    /// vocabulary are written to OUT/embeddings.txt.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Annotate splitting words against this vector file's vocabulary.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Width of the generated vectors.
    #[arg(long, default_value_t = 100)]
    embed_dim: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = ["1", "5", "10"])]
    ql: String,
    #[arg(long, value_parser = ["game", "sw,game", "game,sw"])]
    loss: String,
    #[arg(long, default_value_t = 0.7)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    pretrain_abot: usize,
    #[arg(long)]
    seed: u64,
    /// Encoder hidden size per direction.
    #[arg(long, default_value_t = logq_core::train::DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    /// Stop after the epoch that crosses this many seconds.
    #[arg(long)]
    time_budget: Option<u64>,
    /// Sample answer bits during training instead of thresholding.
    #[arg(long)]
    sampled_bits: bool,
    /// Gumbel-softmax temperature of the question channel.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Offset added to the gating weights.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test_sw")]
    split: String,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(
        long,
        conflicts_with = "random_embeddings",
        required_unless_present = "random_embeddings"
    )]
    embeddings: Option<PathBuf>,
    /// Use independent standard-normal vectors of this width.
    #[arg(long, requires = "seed")]
    random_embeddings: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to one partition; all sets with splitting words otherwise.
    #[arg(long)]
    split: Option<String>,
    #[arg(long, default_value = "max", value_parser = ["max", "sum", "mean"])]
    aggregation: String,
}

#[derive(Args)]
struct PlayArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    set_id: Option<String>,
    /// Corpus directory; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Seed for picking a set when no id is given.
    #[arg(long)]
    seed: Option<u64>,
    /// Also append the session transcript to this file.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    limit: u64,
    #[arg(long, default_value = "test_sw")]
    split: String,
}

/// Errors that map to the usage exit code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug)]
struct DigestMismatch {
    expected: String,
    found: String,
}

impl std::fmt::Display for DigestMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "vocabulary digest mismatch: corpus has {}, got {}",
            self.expected, self.found
        )
    }
}

impl std::error::Error for DigestMismatch {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(TrainError::NonFiniteLoss { .. }) = cause.downcast_ref::<TrainError>() {
            return 3;
        }
        if let Some(GameError::QBot(QBotError::DegenerateGate)) = cause.downcast_ref::<GameError>() {
            return 3;
        }
        if let Some(TrainError::Game(GameError::QBot(QBotError::DegenerateGate))) = cause.downcast_ref::<TrainError>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::BuildCorpus(a) => build_corpus_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Baseline(a) => baseline_cmd(a),
        Command::Play(a) => play_cmd(a),
        Command::Dump(a) => dump_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn partition(name: &str) -> Result<Partition> {
    Partition::parse(name).ok_or_else(|| Usage(format!("unknown split {name:?}")).into())
}

fn load_corpus(dir: &Path) -> Result<(Corpus, Option<Manifest>)> {
    let corpus = Corpus::load(dir).with_context(|| format!("loading corpus from {}", dir.display()))?;
    let manifest = Manifest::load(dir)?;
    Ok((corpus, manifest))
}

fn check_digest(manifest: Option<&Manifest>, digest: &str) -> Result<()> {
    if let Some(expected) = manifest.and_then(|m| m.vocab_digest.as_deref()) {
        if expected != digest {
            return Err(DigestMismatch {
                expected: expected.to_string(),
                found: digest.to_string(),
            }
            .into());
        }
    }
    Ok(())
}

fn game_sets(corpus: &Corpus, p: Partition, table: &EmbeddingTable) -> Vec<GameSet> {
    corpus
        .partition(p)
        .into_iter()
        .map(|s| GameSet::new(s, table))
        .collect()
}

fn build_corpus_cmd(a: BuildCorpusArgs) -> Result<()> {
    if a.pairs.is_empty() && a.synthetic.is_none() {
        return Err(Usage("give --pairs FILE or --synthetic K".into()).into());
    }
    std::fs::create_dir_all(&a.out)?;
    let mut pairs = Vec::new();
    for p in &a.pairs {
        pairs.extend(read_pairs_file(p).with_context(|| format!("reading {}", p.display()))?);
    }
    let mut table = None;
    let mut embeddings = None;
    if let Some(k) = a.synthetic {
        let generated = synthetic::corpus_pairs(k, a.seed);
        write_pairs(&a.out.join("pairs.tsv"), &generated)?;
        pairs.extend(generated);
        if a.embeddings.is_none() {
            let t = synthetic::corpus_embeddings(a.embed_dim, a.seed);
            t.write(&a.out.join("embeddings.txt"))?;
            table = Some(t);
            embeddings = Some("embeddings.txt".to_string());
        }
    }
    if let Some(path) = &a.embeddings {
        table = Some(EmbeddingTable::load(path, DEFAULT_LIMIT).with_context(|| format!("loading {}", path.display()))?);
        embeddings = Some(path.display().to_string());
    }
    let graph = ingest_pairs(&pairs)?;
    let corpus = match &table {
        Some(t) => build_corpus(&graph, a.num_sets, t, a.seed)?,
        None => build_corpus(&graph, a.num_sets, &OpenVocabulary, a.seed)?,
    };
    corpus.write(&a.out)?;
    Manifest {
        num_sets: a.num_sets,
        seed: a.seed,
        vocab_digest: table.as_ref().map(|t| t.digest()),
        embeddings,
    }
    .write(&a.out)?;
    let counts: serde_json::Map<String, serde_json::Value> = Partition::ALL
        .iter()
        .map(|p| (p.name().to_string(), corpus.splits.get(*p).len().into()))
        .collect();
    print_json(&counts)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let (corpus, manifest) = load_corpus(&a.data)?;
    let table = EmbeddingTable::load(&a.embeddings, DEFAULT_LIMIT)
        .with_context(|| format!("loading {}", a.embeddings.display()))?;
    check_digest(manifest.as_ref(), &table.digest())?;
    let loss = LossRegime::parse(&a.loss).ok_or_else(|| Usage(format!("unknown loss {:?}", a.loss)))?;
    let ql: usize = a.ql.parse()?;

    let train_sets = game_sets(&corpus, Partition::TrainSw, &table);
    let dev_sets = game_sets(&corpus, Partition::DevSw, &table);
    let agents = Agents::new(&table, a.hidden, a.seed);
    let mut game = GameConfig::new(agents.qbot.dims, ql);
    game.temperature = a.temperature;
    game.gamma = a.gamma;
    if let Err(e) = game.validate() {
        return Err(Usage(e.to_string()).into());
    }
    let config = TrainConfig {
        loss,
        alpha: a.alpha,
        pretrain_steps: a.pretrain_abot,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
        sampled_bits: a.sampled_bits,
        ..TrainConfig::default()
    };
    if let Err(e) = config.validate() {
        return Err(Usage(e.to_string()).into());
    }
    let opts = RunOptions {
        out_dir: Some(a.out.clone()),
        data_dir: Some(a.data.canonicalize().unwrap_or(a.data.clone())),
        time_budget: a.time_budget.map(Duration::from_secs),
        verbose: !a.quiet,
    };
    let summary = train(
        Trainer::new(agents, game, config),
        &train_sets,
        &dev_sets,
        &table,
        &opts,
    )?;
    match summary.best_dev {
        Some(r) => print_json(&r),
        None => print_json(&serde_json::json!({ "steps": summary.trainer.step })),
    }
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let split = partition(&a.split)?;
    let ckpt = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let (corpus, manifest) = load_corpus(&a.data)?;
    check_digest(manifest.as_ref(), &ckpt.vocab_digest)?;
    let agents = ckpt.agents()?;
    let table = ckpt.vocabulary_table();
    let sets = game_sets(&corpus, split, &table);
    print_json(&evaluate(&agents, &sets, &ckpt.game, split.name())?)
}

fn corpus_tokens(sets: &[SentenceSet]) -> Vec<String> {
    let mut tokens: Vec<String> = sets
        .iter()
        .flat_map(|s| s.sentences.iter().flat_map(|x| logq_core::text::tokenize(x)))
        .collect();
    tokens.sort();
    tokens.dedup();
    tokens
}

fn baseline_cmd(a: BaselineArgs) -> Result<()> {
    let (corpus, _) = load_corpus(&a.data)?;
    let agg = Aggregation::parse(&a.aggregation).expect("checked by clap");
    let sets: Vec<SentenceSet> = match &a.split {
        Some(name) => corpus.partition(partition(name)?).into_iter().cloned().collect(),
        None => corpus.sets.clone(),
    };
    let table = match (&a.embeddings, a.random_embeddings) {
        (Some(path), _) => {
            EmbeddingTable::load(path, DEFAULT_LIMIT).with_context(|| format!("loading {}", path.display()))?
        }
        (None, Some(dim)) => EmbeddingTable::random(&corpus_tokens(&corpus.sets), dim, a.seed.unwrap_or(0)),
        (None, None) => bail!(Usage("give --embeddings or --random-embeddings".into())),
    };
    print_json(&evaluate_baseline_with(&sets, &table, agg))
}

fn play_cmd(a: PlayArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let data = match a.data.clone().or_else(|| ckpt.data_dir.clone().map(PathBuf::from)) {
        Some(d) => d,
        None => return Err(Usage("checkpoint records no corpus; pass --data".into()).into()),
    };
    let (corpus, manifest) = load_corpus(&data)?;
    check_digest(manifest.as_ref(), &ckpt.vocab_digest)?;
    let set = match &a.set_id {
        Some(id) => corpus.find(id).with_context(|| format!("no set with id {id}"))?.clone(),
        None => {
            let pool = corpus.partition(Partition::TestSw);
            if pool.is_empty() {
                bail!("corpus has no test sets");
            }
            let seed = a.seed.unwrap_or_else(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map_or(0, |d| d.as_nanos() as u64)
            });
            pool[(derive_seed(seed, 0) % pool.len() as u64) as usize].clone()
        }
    };
    let agents = ckpt.agents()?;
    let table = ckpt.vocabulary_table();
    let game_set = GameSet::new(&set, &table);
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut output = io::stdout();
    let transcript = play_interactive(
        &agents,
        &game_set,
        &set.sentences,
        &ckpt.game,
        &table,
        a.seed.unwrap_or(0),
        &mut input,
        &mut output,
    )?;
    if let Some(path) = &a.transcript {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        serde_json::to_writer(&mut f, &transcript)?;
        writeln!(f)?;
    }
    Ok(())
}

fn dump_cmd(a: DumpArgs) -> Result<()> {
    let split = partition(&a.split)?;
    let ckpt = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let (corpus, manifest) = load_corpus(&a.data)?;
    check_digest(manifest.as_ref(), &ckpt.vocab_digest)?;
    let agents = ckpt.agents()?;
    let table = ckpt.vocabulary_table();
    let sets = game_sets(&corpus, split, &table);
    let out = BufWriter::new(File::create(&a.out)?);
    let written = dump_transcripts(&agents, &sets, &ckpt.game, a.limit as usize, &table, out)?;
    eprintln!("wrote {} transcripts to {}", written.len(), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_map_to_exit_codes() {
        let nonfinite = anyhow::Error::from(TrainError::NonFiniteLoss { step: 4, dump: None });
        assert_eq!(exit_code(&nonfinite), 3);
        let gate = anyhow::Error::from(TrainError::Game(GameError::QBot(QBotError::DegenerateGate)));
        assert_eq!(exit_code(&gate), 3);
        assert_eq!(exit_code(&anyhow::Error::from(Usage("bad".into()))), 1);
        let digest = anyhow::Error::from(DigestMismatch {
            expected: "a".into(),
            found: "b".into(),
        });
        assert_eq!(exit_code(&digest.context("loading")), 2);
        assert_eq!(exit_code(&anyhow::Error::from(TrainError::EmptyTrain)), 2);
    }
}

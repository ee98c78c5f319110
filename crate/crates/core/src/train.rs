//! Optimization: end-to-end game training under the three loss regimes,
//! answerer pretraining on token membership, early stopping on dev
//! accuracy, checkpoints and the metric log.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abot;
use crate::checkpoint::{Checkpoint, CheckpointError, TrainState};
use crate::embeddings::EmbeddingTable;
use crate::eval::{self, MetricsReport};
use crate::game::{self, Agents, Answerer, GameConfig, GameError, GameSet, LossRegime, Mode, PROB_FLOOR};
use crate::params::{clip_global_norm, Adam, AdamConfig, GradSet};
use crate::seed::derive_seed;
use crate::tape::Tape;

/// Episodes summed sequentially inside one parallel work unit. Fixed so
/// gradient sums do not depend on the thread count.
const CHUNK: usize = 4;

/// Encoder hidden size per direction used when none is given.
pub const DEFAULT_HIDDEN: usize = 32;

const TARGET_STREAM: u64 = 0x7461_7267;
const PRETRAIN_STREAM: u64 = 0x7072_6574;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training partition is empty")]
    EmptyTrain,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at step {step}; batch dumped to {dump:?}")]
    NonFiniteLoss { step: u64, dump: Option<PathBuf> },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossRegime,
    /// Weight of the first-named loss in a two-loss regime.
    pub alpha: f64,
    /// Answerer pretraining steps before game training.
    pub pretrain_steps: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Sample answer bits from the responder instead of thresholding.
    pub sampled_bits: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossRegime::Game,
            alpha: 0.7,
            pretrain_steps: 0,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            batch_size: 32,
            epochs: 30,
            patience: 3,
            seed: 0,
            sampled_bits: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return bad("alpha must be in (0.5, 1]");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        if self.learning_rate.is_nan() || self.clip_norm.is_nan() || self.learning_rate <= 0.0 || self.clip_norm <= 0.0
        {
            return bad("learning rate and clip norm must be positive");
        }
        Ok(())
    }
}

/// One entry of the metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub split: String,
    pub game_acc: f64,
    pub sw_pred: Option<f64>,
    pub loss: f64,
}

/// Losses of one optimization step (batch means).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub loss: f64,
    pub game_loss: f64,
    pub sw_loss: Option<f64>,
    pub grad_norm: f64,
}

/// Optimizer state for both agents.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    pub agents: Agents,
    pub game: GameConfig,
    pub config: TrainConfig,
    pub qbot_opt: Adam,
    pub abot_opt: Adam,
    /// Completed game-training steps.
    pub step: u64,
}

/// One episode scheduled in a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scheduled {
    pub set: usize,
    pub target: usize,
    pub seed: u64,
}

impl Trainer {
    pub fn new(agents: Agents, game: GameConfig, config: TrainConfig) -> Self {
        let adam = AdamConfig {
            learning_rate: config.learning_rate,
            ..Default::default()
        };
        Self {
            qbot_opt: Adam::new(adam, &agents.qbot.params),
            abot_opt: Adam::new(adam, &agents.abot.params),
            agents,
            game,
            config,
            step: 0,
        }
    }

    pub fn steps_per_epoch(&self, train_len: usize) -> u64 {
        train_len.div_ceil(self.config.batch_size) as u64
    }

    /// Episodes of game-training step `step`: a slice of the epoch's
    /// seeded permutation, one random target per set.
    pub fn schedule(&self, step: u64, train_len: usize) -> Vec<Scheduled> {
        let per_epoch = self.steps_per_epoch(train_len);
        let epoch = step / per_epoch;
        let within = (step % per_epoch) as usize;
        let mut order: Vec<usize> = (0..train_len).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, epoch)));
        let start = within * self.config.batch_size;
        let end = (start + self.config.batch_size).min(train_len);
        let step_seed = derive_seed(self.config.seed ^ TARGET_STREAM, step);
        order[start..end]
            .iter()
            .enumerate()
            .map(|(i, &set)| {
                let seed = derive_seed(step_seed, i as u64);
                let target = ChaCha8Rng::seed_from_u64(seed).gen_range(0..self.game.candidates);
                Scheduled { set, target, seed }
            })
            .collect()
    }

    /// Loss weights for a batch: the game loss is averaged over every
    /// episode, the splitting-word loss over episodes whose set has
    /// splitting words. The SW loss is only used for one-token questions.
    fn batch_weights(&self, batch: &[Scheduled], train: &[GameSet]) -> (f64, f64) {
        let (wg, ws) = self.config.loss.weights(self.config.alpha);
        let with_sw = batch.iter().filter(|s| train[s.set].has_splitting_words()).count();
        let sw_on = ws > 0.0 && self.game.question_len == 1 && with_sw > 0;
        if sw_on {
            (wg / batch.len() as f64, ws / with_sw as f64)
        } else {
            (1.0 / batch.len() as f64, 0.0)
        }
    }

    /// Loss and gradients of a batch without updating parameters.
    pub fn batch_gradients(
        &self,
        batch: &[Scheduled],
        train: &[GameSet],
    ) -> Result<(StepReport, GradSet, GradSet), TrainError> {
        let snapshot = self.agents.snapshot();
        let (wg, ws) = self.batch_weights(batch, train);
        let mode = Mode::Train {
            sampled_bits: self.config.sampled_bits,
        };
        type Partial = (f64, f64, f64, usize, GradSet, GradSet);
        let chunks: Vec<Result<Partial, TrainError>> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut gq = GradSet::zeros_for(&self.agents.qbot.params);
                let mut ga = GradSet::zeros_for(&self.agents.abot.params);
                let (mut total, mut game_sum, mut sw_sum, mut sw_count) = (0.0, 0.0, 0.0, 0usize);
                for s in chunk {
                    let set = &train[s.set];
                    let mut tape = Tape::new();
                    let r = game::rollout(
                        &mut tape,
                        &self.agents,
                        &snapshot,
                        set,
                        s.target,
                        &self.game,
                        mode,
                        s.seed,
                        Answerer::ABot,
                    )?;
                    let lg = game::game_loss_node(&mut tape, r.final_distribution, s.target);
                    game_sum += tape.scalar(lg);
                    let mut loss = tape.scale(lg, wg);
                    if ws > 0.0 {
                        if let Some(ls) = game::sw_loss_node(&mut tape, r.first_question_dist, &set.splitting_ids) {
                            sw_sum += tape.scalar(ls);
                            sw_count += 1;
                            let weighted = tape.scale(ls, ws);
                            loss = tape.add(loss, weighted);
                        }
                    }
                    total += tape.scalar(loss);
                    let mut grads = tape.backward(loss);
                    gq.add_assign(&GradSet::collect(&self.agents.qbot.params, &mut grads, &r.qbot.all));
                    let av = r.abot.expect("answerer bound");
                    ga.add_assign(&GradSet::collect(&self.agents.abot.params, &mut grads, &av.all));
                }
                Ok((total, game_sum, sw_sum, sw_count, gq, ga))
            })
            .collect();

        let mut gq = GradSet::zeros_for(&self.agents.qbot.params);
        let mut ga = GradSet::zeros_for(&self.agents.abot.params);
        let (mut total, mut game_sum, mut sw_sum, mut sw_count) = (0.0, 0.0, 0.0, 0usize);
        for c in chunks {
            let (t, g, s, n, q, a) = c?;
            total += t;
            game_sum += g;
            sw_sum += s;
            sw_count += n;
            gq.add_assign(&q);
            ga.add_assign(&a);
        }
        let report = StepReport {
            step: self.step,
            loss: total,
            game_loss: game_sum / batch.len() as f64,
            sw_loss: (sw_count > 0).then(|| sw_sum / sw_count as f64),
            grad_norm: (gq.sq_norm() + ga.sq_norm()).sqrt(),
        };
        Ok((report, gq, ga))
    }

    /// One optimization step over the scheduled batch.
    pub fn train_step(&mut self, train: &[GameSet], dump_dir: Option<&Path>) -> Result<StepReport, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyTrain);
        }
        let batch = self.schedule(self.step, train.len());
        let (report, mut gq, mut ga) = self.batch_gradients(&batch, train)?;
        if !report.loss.is_finite() || !gq.all_finite() || !ga.all_finite() {
            let dump = match dump_dir {
                Some(dir) => Some(dump_batch(dir, self.step, &batch, train, &report)?),
                None => None,
            };
            return Err(TrainError::NonFiniteLoss { step: self.step, dump });
        }
        clip_global_norm(&mut [&mut gq, &mut ga], self.config.clip_norm);
        self.qbot_opt.step(&mut self.agents.qbot.params, &gq);
        self.abot_opt.step(&mut self.agents.abot.params, &ga);
        self.step += 1;
        Ok(report)
    }

    /// Pretrains the answerer to say whether a one-token question occurs in
    /// its sentence. Uses its own optimizer state. Returns per-step losses.
    pub fn pretrain_abot(&mut self, sets: &[GameSet], steps: usize) -> Result<Vec<f64>, TrainError> {
        if sets.is_empty() {
            return Err(TrainError::EmptyTrain);
        }
        let mut opt = Adam::new(
            AdamConfig {
                learning_rate: self.config.learning_rate,
                ..Default::default()
            },
            &self.agents.abot.params,
        );
        let mut losses = Vec::with_capacity(steps);
        for step in 0..steps {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed ^ PRETRAIN_STREAM, step as u64));
            let examples: Vec<MembershipExample> = (0..self.config.batch_size)
                .map(|_| MembershipExample::sample(sets, self.game.dims.vocab, &mut rng))
                .collect();
            let (loss, mut grads) = membership_gradients(&self.agents, &examples);
            clip_global_norm(&mut [&mut grads], self.config.clip_norm);
            opt.step(&mut self.agents.abot.params, &grads);
            losses.push(loss);
        }
        Ok(losses)
    }

    pub fn checkpoint(&self, table: &EmbeddingTable, data_dir: Option<&Path>, state: TrainState) -> Checkpoint {
        Checkpoint::from_trainer(self, table, data_dir, state)
    }
}

fn dump_batch(
    dir: &Path,
    step: u64,
    batch: &[Scheduled],
    train: &[GameSet],
    report: &StepReport,
) -> Result<PathBuf, TrainError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("nonfinite-step{step}.json"));
    let episodes: Vec<serde_json::Value> = batch
        .iter()
        .map(|s| {
            serde_json::json!({
                "set_id": train[s.set].id,
                "target": s.target,
                "seed": s.seed,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "step": step,
        "loss": report.loss.to_string(),
        "game_loss": report.game_loss.to_string(),
        "episodes": episodes,
    });
    fs::write(&path, serde_json::to_vec_pretty(&doc)?)?;
    Ok(path)
}

/// A (sentence, token, label) triple for answerer pretraining.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MembershipExample {
    pub sentence: Vec<usize>,
    pub token: usize,
    pub present: bool,
}

impl MembershipExample {
    /// Half positives (a token of the sentence), half negatives drawn from
    /// the other sentences of the same set when possible, else from the
    /// whole vocabulary.
    pub fn sample(sets: &[GameSet], vocab: usize, rng: &mut impl Rng) -> Self {
        let set = &sets[rng.gen_range(0..sets.len())];
        let i = rng.gen_range(0..set.sentences.len());
        let sentence = set.sentences[i].clone();
        if rng.gen_bool(0.5) {
            let token = sentence[rng.gen_range(0..sentence.len())];
            return Self {
                sentence,
                token,
                present: true,
            };
        }
        let mut others: Vec<usize> = set
            .sentences
            .iter()
            .flatten()
            .copied()
            .filter(|t| !sentence.contains(t))
            .collect();
        others.sort_unstable();
        others.dedup();
        let token = if others.is_empty() {
            loop {
                let t = rng.gen_range(crate::embeddings::SPECIALS.len()..vocab);
                if !sentence.contains(&t) {
                    break t;
                }
            }
        } else {
            others[rng.gen_range(0..others.len())]
        };
        Self {
            sentence,
            token,
            present: false,
        }
    }
}

/// Binary cross-entropy of the responder's confidence on a one-token
/// question against the membership label.
pub fn membership_loss(confidence: f64, present: bool) -> f64 {
    if present {
        -confidence.max(PROB_FLOOR).ln()
    } else {
        -(1.0 - confidence).max(PROB_FLOOR).ln()
    }
}

/// Mean membership loss and answerer gradients over `examples`.
pub fn membership_gradients(agents: &Agents, examples: &[MembershipExample]) -> (f64, GradSet) {
    let snapshot = agents.abot.params.snapshot();
    let vocab = agents.abot.dims.vocab;
    let scale = 1.0 / examples.len() as f64;
    let parts: Vec<(f64, GradSet)> = examples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = GradSet::zeros_for(&agents.abot.params);
            let mut total = 0.0;
            for ex in chunk {
                let mut tape = Tape::new();
                let av = agents.abot.bind(&mut tape, &snapshot);
                let enc = abot::encode_answer(&mut tape, &av, &ex.sentence);
                let mut row = vec![0.0; vocab];
                row[ex.token] = 1.0;
                let row = tape.constant_vec(row);
                let q = abot::encode_question(&mut tape, &av, &[row]);
                let r = abot::respond(&mut tape, &av, enc, q, abot::BitMode::Threshold);
                let target = if ex.present {
                    r.confidence
                } else {
                    tape.one_minus(r.confidence)
                };
                let ln = tape.ln_clamped(target, PROB_FLOOR);
                let loss = tape.scale(ln, -scale);
                total += tape.scalar(loss);
                let mut grads = tape.backward(loss);
                g.add_assign(&GradSet::collect(&agents.abot.params, &mut grads, &av.all));
            }
            (total, g)
        })
        .collect();
    let mut g = GradSet::zeros_for(&agents.abot.params);
    let mut total = 0.0;
    for (t, part) in parts {
        total += t;
        g.add_assign(&part);
    }
    (total, g)
}

/// Fraction of examples where the thresholded answer equals the label.
pub fn membership_accuracy(agents: &Agents, examples: &[MembershipExample]) -> f64 {
    let snapshot = agents.abot.params.snapshot();
    let vocab = agents.abot.dims.vocab;
    let correct = examples
        .par_iter()
        .filter(|ex| {
            let mut tape = Tape::new();
            let av = agents.abot.bind(&mut tape, &snapshot);
            let enc = abot::encode_answer(&mut tape, &av, &ex.sentence);
            let mut row = vec![0.0; vocab];
            row[ex.token] = 1.0;
            let row = tape.constant_vec(row);
            let q = abot::encode_question(&mut tape, &av, &[row]);
            let r = abot::respond(&mut tape, &av, enc, q, abot::BitMode::Threshold);
            (tape.scalar(r.bit) == 1.0) == ex.present
        })
        .count();
    correct as f64 / examples.len() as f64
}

/// Where and how often training reports.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Output directory for checkpoints and the metric log.
    pub out_dir: Option<PathBuf>,
    /// Corpus directory, recorded in checkpoints.
    pub data_dir: Option<PathBuf>,
    /// Wall-clock budget; training stops after the epoch that exceeds it.
    pub time_budget: Option<std::time::Duration>,
    /// Print one progress line per epoch to stderr.
    pub verbose: bool,
}

/// Outcome of a full training run.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub trainer: Trainer,
    pub best_dev: Option<MetricsReport>,
    pub history: Vec<MetricRecord>,
    /// Mean training loss of each step.
    pub losses: Vec<f64>,
    pub pretrain_losses: Vec<f64>,
}

/// Full run: optional answerer pretraining, then epochs of game training
/// with dev evaluation after each epoch and early stopping. The returned
/// trainer holds the best-on-dev parameters.
pub fn train(
    mut trainer: Trainer,
    train_sets: &[GameSet],
    dev_sets: &[GameSet],
    table: &EmbeddingTable,
    opts: &RunOptions,
) -> Result<TrainSummary, TrainError> {
    trainer.config.validate()?;
    trainer.game.validate()?;
    if train_sets.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let started = Instant::now();
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
        File::create(dir.join(METRICS_FILE))?;
    }
    let pretrain_losses = if trainer.config.pretrain_steps > 0 {
        let steps = trainer.config.pretrain_steps;
        trainer.pretrain_abot(train_sets, steps)?
    } else {
        Vec::new()
    };

    let per_epoch = trainer.steps_per_epoch(train_sets.len());
    let mut history = Vec::new();
    let mut losses = Vec::new();
    let mut best: Option<(MetricsReport, Agents)> = None;
    let mut stale = 0usize;

    for epoch in 0..trainer.config.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..per_epoch {
            let r = trainer.train_step(train_sets, opts.out_dir.as_deref())?;
            epoch_loss += r.loss;
            losses.push(r.loss);
        }
        epoch_loss /= per_epoch as f64;

        let dev = if dev_sets.is_empty() {
            None
        } else {
            Some(eval::evaluate(&trainer.agents, dev_sets, &trainer.game, "dev_sw")?)
        };
        let record = MetricRecord {
            step: trainer.step,
            split: "dev_sw".into(),
            game_acc: dev.as_ref().map_or(f64::NAN, |d| d.game_acc),
            sw_pred: dev.as_ref().and_then(|d| d.sw_pred),
            loss: epoch_loss,
        };
        if opts.verbose {
            eprintln!(
                "epoch {epoch:>3} step {:>6} loss {:.4} dev_acc {:.4} sw_pred {} ({:.0?})",
                trainer.step,
                epoch_loss,
                record.game_acc,
                record.sw_pred.map_or("n/a".into(), |s| format!("{s:.4}")),
                started.elapsed()
            );
        }
        if let Some(dir) = &opts.out_dir {
            let mut log = OpenOptions::new().append(true).open(dir.join(METRICS_FILE))?;
            serde_json::to_writer(&mut log, &record)?;
            log.write_all(b"\n")?;
        }
        history.push(record);

        let improved = match (&dev, &best) {
            (Some(d), Some((b, _))) => d.game_acc > b.game_acc,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improved {
            stale = 0;
            best = Some((dev.clone().expect("dev exists"), trainer.agents.clone()));
        } else {
            stale += 1;
        }
        let state = TrainState {
            step: trainer.step,
            epoch: epoch as u64 + 1,
            best_dev_acc: best.as_ref().map(|(b, _)| b.game_acc),
            stale_epochs: stale as u64,
        };
        if let Some(dir) = &opts.out_dir {
            trainer
                .checkpoint(table, opts.data_dir.as_deref(), state.clone())
                .save(&dir.join(LATEST_CHECKPOINT))?;
            if improved {
                trainer
                    .checkpoint(table, opts.data_dir.as_deref(), state)
                    .save(&dir.join(BEST_CHECKPOINT))?;
            }
        }
        if dev.is_some() && stale >= trainer.config.patience {
            break;
        }
        if opts.time_budget.is_some_and(|b| started.elapsed() > b) {
            break;
        }
    }

    let best_dev = best.map(|(report, agents)| {
        trainer.agents = agents;
        report
    });
    Ok(TrainSummary {
        trainer,
        best_dev,
        history,
        losses,
        pretrain_losses,
    })
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

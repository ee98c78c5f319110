//! Game accuracy, splitting-word prediction, and transcript dumps.
//!
//! Every set is played once per candidate as the target, with noise-free
//! argmax decoding and a thresholded responder, so evaluation is a pure
//! function of the parameters.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::game::{play_with_snapshot, Agents, EpisodeOutcome, GameConfig, GameError, GameSet, GameTranscript, Mode};
use crate::seed::derive_seed;

/// Summary of one evaluation pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub game_acc: f64,
    /// `None` when undefined: question length above 1, or no set with
    /// splitting words.
    pub sw_pred: Option<f64>,
    pub episodes: usize,
    pub correct: usize,
    pub config_digest: String,
}

/// Seed recorded for the episode of `set_index` with `target`.
pub fn episode_seed(set_index: usize, target: usize) -> u64 {
    derive_seed(set_index as u64, target as u64)
}

/// Plays every set with every candidate as target. Results are in set
/// order, then target order.
pub fn play_all(agents: &Agents, sets: &[GameSet], cfg: &GameConfig) -> Result<Vec<EpisodeOutcome>, GameError> {
    let snapshot = agents.snapshot();
    let per_set: Vec<Result<Vec<EpisodeOutcome>, GameError>> = sets
        .par_iter()
        .enumerate()
        .map(|(i, set)| {
            (0..cfg.candidates)
                .map(|t| play_with_snapshot(agents, &snapshot, set, t, cfg, Mode::Eval, episode_seed(i, t)))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(sets.len() * cfg.candidates);
    for r in per_set {
        out.extend(r?);
    }
    Ok(out)
}

/// Fraction of correct guesses in a list of transcripts.
pub fn recount(transcripts: &[GameTranscript]) -> f64 {
    if transcripts.is_empty() {
        return 0.0;
    }
    transcripts.iter().filter(|t| t.correct).count() as f64 / transcripts.len() as f64
}

/// Fraction of episodes (over sets with splitting words) whose first
/// question token is one of the set's splitting words.
pub fn sw_rate(outcomes: &[EpisodeOutcome], sets: &[GameSet], cfg: &GameConfig) -> Option<f64> {
    if cfg.question_len != 1 {
        return None;
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for (i, o) in outcomes.iter().enumerate() {
        let set = &sets[i / cfg.candidates];
        if !set.has_splitting_words() {
            continue;
        }
        total += 1;
        if set.splitting_ids.contains(&o.transcript.rounds[0].question_ids[0]) {
            hits += 1;
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Game accuracy and splitting-word prediction over `sets`.
pub fn evaluate(agents: &Agents, sets: &[GameSet], cfg: &GameConfig, split: &str) -> Result<MetricsReport, GameError> {
    let outcomes = play_all(agents, sets, cfg)?;
    Ok(report(&outcomes, sets, cfg, split))
}

pub fn report(outcomes: &[EpisodeOutcome], sets: &[GameSet], cfg: &GameConfig, split: &str) -> MetricsReport {
    let correct = outcomes.iter().filter(|o| o.transcript.correct).count();
    MetricsReport {
        split: split.to_string(),
        game_acc: if outcomes.is_empty() {
            0.0
        } else {
            correct as f64 / outcomes.len() as f64
        },
        sw_pred: sw_rate(outcomes, sets, cfg),
        episodes: outcomes.len(),
        correct,
        config_digest: cfg.digest(),
    }
}

pub fn evaluate_game_accuracy(agents: &Agents, sets: &[GameSet], cfg: &GameConfig) -> Result<MetricsReport, GameError> {
    evaluate(agents, sets, cfg, "eval")
}

pub fn evaluate_sw_prediction(agents: &Agents, sets: &[GameSet], cfg: &GameConfig) -> Result<Option<f64>, GameError> {
    if cfg.question_len != 1 {
        return Ok(None);
    }
    Ok(evaluate(agents, sets, cfg, "eval")?.sw_pred)
}

/// Writes transcripts of the first `limit` sets as JSON lines, one block of
/// `N` episodes per set. Returns the transcripts written.
pub fn dump_transcripts(
    agents: &Agents,
    sets: &[GameSet],
    cfg: &GameConfig,
    limit: usize,
    table: &EmbeddingTable,
    mut out: impl Write,
) -> Result<Vec<GameTranscript>, DumpError> {
    let chosen = &sets[..limit.min(sets.len())];
    let outcomes = play_all(agents, chosen, cfg)?;
    let mut written = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let mut t = o.transcript;
        t.decode(table);
        serde_json::to_writer(&mut out, &t)?;
        out.write_all(b"\n")?;
        written.push(t);
    }
    out.flush()?;
    Ok(written)
}

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("transcript json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

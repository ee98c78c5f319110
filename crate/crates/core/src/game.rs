//! Episodes of the guessing game and the losses computed from them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::abot::{self, ABotParameters, ABotVars, BitMode};
use crate::corpus::SentenceSet;
use crate::embeddings::EmbeddingTable;
use crate::qbot::{self, Channel, ModelDims, QBotError, QBotParameters, QBotVars};
use crate::seed::derive_seed;
use crate::tape::{Shared, Tape, Var};

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("set {id} has {found} sentences, game expects {expected}")]
    ConfigMismatch { id: String, expected: usize, found: usize },
    #[error("target {target} out of range for {candidates} candidates")]
    BadTarget { target: usize, candidates: usize },
    #[error("invalid game config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    QBot(#[from] QBotError),
}

/// Shape of one game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    /// Candidate sentences `N`.
    pub candidates: usize,
    /// Question rounds, `log2(N)`.
    pub rounds: usize,
    /// Tokens per question `L`.
    pub question_len: usize,
    /// Gating offset.
    pub gamma: f64,
    /// Gumbel-softmax temperature.
    pub temperature: f64,
    /// Straight-through one-hot channel during training.
    pub hard_channel: bool,
    pub dims: ModelDims,
}

impl GameConfig {
    pub fn new(dims: ModelDims, question_len: usize) -> Self {
        Self {
            candidates: 4,
            rounds: 2,
            question_len,
            gamma: 1.0,
            temperature: 1.0,
            hard_channel: true,
            dims,
        }
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |m: String| Err(GameError::InvalidConfig(m));
        if self.candidates < 2 || !self.candidates.is_power_of_two() {
            return bad(format!("N = {} is not a power of two", self.candidates));
        }
        if self.rounds != self.candidates.trailing_zeros() as usize {
            return bad(format!(
                "rounds = {} but log2(N) = {}",
                self.rounds,
                self.candidates.trailing_zeros()
            ));
        }
        if self.question_len == 0 {
            return bad("question length must be at least 1".into());
        }
        if self.temperature <= 0.0 || self.gamma < 0.0 {
            return bad("temperature must be positive and gamma non-negative".into());
        }
        Ok(())
    }

    /// Short hash of the serialized config.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }
}

/// Both agents' parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Agents {
    pub qbot: QBotParameters,
    pub abot: ABotParameters,
}

impl Agents {
    /// Independently initialized agents; both embedding matrices start from
    /// `table`.
    pub fn new(table: &EmbeddingTable, hidden: usize, seed: u64) -> Self {
        Self {
            qbot: QBotParameters::new(table, hidden, derive_seed(seed, 1)),
            abot: ABotParameters::new(table, hidden, derive_seed(seed, 2)),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            qbot: self.qbot.params.snapshot(),
            abot: self.abot.params.snapshot(),
        }
    }

    pub fn digest(&self) -> String {
        format!("{}:{}", self.qbot.params.digest(), self.abot.params.digest())
    }
}

/// `f64` views of both agents for binding onto tapes.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub qbot: Vec<Shared>,
    pub abot: Vec<Shared>,
}

/// A sentence set converted to token ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameSet {
    pub id: String,
    pub sentences: Vec<Vec<usize>>,
    /// Ids of the set's splitting words.
    pub splitting_ids: Vec<usize>,
}

impl GameSet {
    pub fn new(set: &SentenceSet, table: &EmbeddingTable) -> Self {
        Self {
            id: set.id.clone(),
            sentences: set.sentences.iter().map(|s| table.encode(s)).collect(),
            splitting_ids: set.splitting_words.iter().filter_map(|w| table.get(w)).collect(),
        }
    }

    pub fn has_splitting_words(&self) -> bool {
        !self.splitting_ids.is_empty()
    }
}

/// Training rollouts use the noisy relaxed channel; evaluation decodes by
/// argmax with a thresholded responder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train { sampled_bits: bool },
    Eval,
}

/// Who answers the questions.
pub enum Answerer<'a> {
    ABot,
    /// External answers, e.g. a person at a terminal. Receives the round
    /// index and the question's token ids.
    External(&'a mut dyn FnMut(usize, &[usize]) -> bool),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerSource {
    Abot,
    Human,
}

/// One question/answer exchange.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub question_ids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub question: Vec<String>,
    pub response: u8,
    pub source: AnswerSource,
    /// Attention over candidates when the question was produced.
    pub attention: Vec<f64>,
}

/// Audit record of one episode. Indices are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameTranscript {
    pub set_id: String,
    pub target: usize,
    pub seed: u64,
    pub rounds: Vec<RoundRecord>,
    pub final_distribution: Vec<f64>,
    pub guess: usize,
    pub correct: bool,
}

impl GameTranscript {
    /// Fills in decoded question tokens.
    pub fn decode(&mut self, table: &EmbeddingTable) {
        for r in &mut self.rounds {
            r.question = r.question_ids.iter().map(|&i| table.token(i).to_string()).collect();
        }
    }
}

/// Tape handles of a finished rollout.
#[derive(Debug)]
pub struct Rollout {
    pub transcript: GameTranscript,
    pub final_distribution: Var,
    /// Noise-free vocabulary distribution at round 1, decoder step 1.
    pub first_question_dist: Var,
    pub qbot: QBotVars,
    pub abot: Option<ABotVars>,
}

/// Plays one episode onto `tape`.
///
/// Per round: memory read, question, answer (from the target sentence
/// only), combiner adjustment, sentence gating, hidden update. A final
/// memory read after the last round gives the guess distribution.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    tape: &mut Tape,
    agents: &Agents,
    snapshot: &Snapshot,
    set: &GameSet,
    target: usize,
    cfg: &GameConfig,
    mode: Mode,
    seed: u64,
    mut answerer: Answerer<'_>,
) -> Result<Rollout, GameError> {
    if set.sentences.len() != cfg.candidates {
        return Err(GameError::ConfigMismatch {
            id: set.id.clone(),
            expected: cfg.candidates,
            found: set.sentences.len(),
        });
    }
    if target >= cfg.candidates {
        return Err(GameError::BadTarget {
            target,
            candidates: cfg.candidates,
        });
    }
    let qv = agents.qbot.bind(tape, &snapshot.qbot);
    let av = match answerer {
        Answerer::ABot => Some(agents.abot.bind(tape, &snapshot.abot)),
        Answerer::External(_) => None,
    };
    let answer_enc = av
        .as_ref()
        .map(|av| abot::encode_answer(tape, av, &set.sentences[target]));

    let mut memory = qbot::encode_sentences(tape, &qv, &set.sentences);
    let mut h = qv.h0;
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut first_question_dist = None;

    for round in 0..cfg.rounds {
        let work = qbot::memory_read(tape, h, memory);
        let channel = match mode {
            Mode::Train { .. } => Channel {
                temperature: cfg.temperature,
                hard: cfg.hard_channel,
                noise_seed: Some(derive_seed(seed, 2 * round as u64)),
            },
            Mode::Eval => Channel {
                temperature: cfg.temperature,
                hard: true,
                noise_seed: None,
            },
        };
        let query = qbot::produce_query(tape, &qv, work.combined, cfg.question_len, &channel);
        first_question_dist.get_or_insert(query.first_step_dist);

        let (response, source) = match (&mut answerer, &av, answer_enc) {
            (Answerer::ABot, Some(av), Some(enc)) => {
                let q = abot::encode_question(tape, av, &query.rows);
                let bits = match mode {
                    Mode::Train { sampled_bits: true } => BitMode::Sampled(derive_seed(seed, 2 * round as u64 + 1)),
                    _ => BitMode::Threshold,
                };
                (abot::respond(tape, av, enc, q, bits).bit, AnswerSource::Abot)
            }
            (Answerer::External(f), _, _) => {
                let yes = f(round, &query.hard_ids);
                (
                    tape.constant_vec(vec![if yes { 1.0 } else { 0.0 }]),
                    AnswerSource::Human,
                )
            }
            _ => unreachable!("answerer and bound agents agree"),
        };

        rounds.push(RoundRecord {
            question_ids: query.hard_ids.clone(),
            question: Vec::new(),
            response: tape.scalar(response) as u8,
            source,
            attention: tape.value(work.attention).to_vec(),
        });

        let adjusted = qbot::adjust_combined(tape, &qv, work.combined, response);
        memory = qbot::gate_sentences(tape, memory, work.attention, response, cfg.gamma)?;
        h = qbot::update_hidden(tape, &qv, h, adjusted);
    }

    let last = qbot::memory_read(tape, h, memory);
    let final_distribution: Vec<f64> = tape.value(last.attention).to_vec();
    let guess = qbot::guess(&final_distribution);
    Ok(Rollout {
        transcript: GameTranscript {
            set_id: set.id.clone(),
            target,
            seed,
            rounds,
            final_distribution,
            guess,
            correct: guess == target,
        },
        final_distribution: last.attention,
        first_question_dist: first_question_dist.expect("at least one round"),
        qbot: qv,
        abot: av,
    })
}

/// Plain results of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub transcript: GameTranscript,
    pub final_distribution: Vec<f64>,
    pub first_question_dist: Vec<f64>,
}

/// Plays one episode between the two agents.
pub fn play_episode(
    agents: &Agents,
    set: &GameSet,
    target: usize,
    cfg: &GameConfig,
    mode: Mode,
    seed: u64,
) -> Result<EpisodeOutcome, GameError> {
    let snapshot = agents.snapshot();
    play_with_snapshot(agents, &snapshot, set, target, cfg, mode, seed)
}

pub(crate) fn play_with_snapshot(
    agents: &Agents,
    snapshot: &Snapshot,
    set: &GameSet,
    target: usize,
    cfg: &GameConfig,
    mode: Mode,
    seed: u64,
) -> Result<EpisodeOutcome, GameError> {
    let mut tape = Tape::new();
    let r = rollout(
        &mut tape,
        agents,
        snapshot,
        set,
        target,
        cfg,
        mode,
        seed,
        Answerer::ABot,
    )?;
    Ok(EpisodeOutcome {
        final_distribution: tape.value(r.final_distribution).to_vec(),
        first_question_dist: tape.value(r.first_question_dist).to_vec(),
        transcript: r.transcript,
    })
}

/// Which losses drive training; the first-named one is weighted higher.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossRegime {
    #[serde(rename = "game")]
    Game,
    #[serde(rename = "sw,game")]
    SwGame,
    #[serde(rename = "game,sw")]
    GameSw,
}

impl LossRegime {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "game" => Some(Self::Game),
            "sw,game" => Some(Self::SwGame),
            "game,sw" => Some(Self::GameSw),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Game => "game",
            Self::SwGame => "sw,game",
            Self::GameSw => "game,sw",
        }
    }

    /// `(game weight, sw weight)` for primary weight `alpha`.
    pub fn weights(self, alpha: f64) -> (f64, f64) {
        match self {
            Self::Game => (1.0, 0.0),
            Self::SwGame => (1.0 - alpha, alpha),
            Self::GameSw => (alpha, 1.0 - alpha),
        }
    }
}

/// `-ln p[target]`.
pub fn game_loss(p: &[f64], target: usize) -> f64 {
    -p[target].max(PROB_FLOOR).ln()
}

/// Cross-entropy against the uniform distribution over `sws`.
pub fn sw_loss(dist: &[f64], sws: &[usize]) -> Option<f64> {
    if sws.is_empty() {
        return None;
    }
    Some(-sws.iter().map(|&w| dist[w].max(PROB_FLOOR).ln()).sum::<f64>() / sws.len() as f64)
}

pub fn combined_loss(regime: LossRegime, alpha: f64, game: f64, sw: f64) -> f64 {
    let (wg, ws) = regime.weights(alpha);
    match regime {
        LossRegime::Game => game,
        _ => wg * game + ws * sw,
    }
}

/// Tape version of [`game_loss`].
pub fn game_loss_node(tape: &mut Tape, p: Var, target: usize) -> Var {
    let pt = tape.element(p, target);
    let ln = tape.ln_clamped(pt, PROB_FLOOR);
    tape.scale(ln, -1.0)
}

/// Tape version of [`sw_loss`].
pub fn sw_loss_node(tape: &mut Tape, dist: Var, sws: &[usize]) -> Option<Var> {
    if sws.is_empty() {
        return None;
    }
    let terms: Vec<Var> = sws
        .iter()
        .map(|&w| {
            let pw = tape.element(dist, w);
            tape.ln_clamped(pw, PROB_FLOOR)
        })
        .collect();
    let all = tape.concat(&terms);
    let total = tape.sum(all);
    Some(tape.scale(total, -1.0 / sws.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        assert_eq!(game_loss(&[0.0, 1.0, 0.0, 0.0], 1), 0.0);
        assert!((game_loss(&[0.25; 4], 2) - 4f64.ln()).abs() < 1e-12);
        assert!((game_loss(&[0.5, 0.5, 0.0, 0.0], 0) - 2f64.ln()).abs() < 1e-12);
        assert!(game_loss(&[0.0, 1.0], 0).is_finite());

        assert_eq!(sw_loss(&[0.0, 1.0, 0.0], &[1]), Some(0.0));
        let v = 50;
        let uniform = vec![1.0 / v as f64; v];
        assert!((sw_loss(&uniform, &[3, 7]).unwrap() - (v as f64).ln()).abs() < 1e-12);
        assert!((sw_loss(&[0.5, 0.5, 0.0], &[0, 1]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(sw_loss(&[1.0], &[]), None);
    }

    #[test]
    fn combined_examples() {
        assert_eq!(combined_loss(LossRegime::Game, 0.7, 1.3, 9.0), 1.3);
        assert!((combined_loss(LossRegime::SwGame, 0.7, 0.0, 1.0) - 0.7).abs() < 1e-12);
        assert!((combined_loss(LossRegime::GameSw, 0.7, 1.0, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regime_names_round_trip() {
        for r in [LossRegime::Game, LossRegime::SwGame, LossRegime::GameSw] {
            assert_eq!(LossRegime::parse(r.name()), Some(r));
        }
        assert_eq!(LossRegime::parse("sw"), None);
    }

    #[test]
    fn config_validation() {
        let dims = ModelDims {
            vocab: 10,
            embed: 4,
            hidden: 3,
        };
        let mut cfg = GameConfig::new(dims, 1);
        cfg.validate().unwrap();
        cfg.rounds = 3;
        assert!(cfg.validate().is_err());
        cfg.candidates = 8;
        cfg.validate().unwrap();
        cfg.candidates = 6;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tape_losses_match_plain_losses() {
        let mut tape = Tape::new();
        let p = tape.constant_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let g = game_loss_node(&mut tape, p, 2);
        assert!((tape.scalar(g) - game_loss(&[0.1, 0.2, 0.3, 0.4], 2)).abs() < 1e-15);
        let s = sw_loss_node(&mut tape, p, &[0, 3]).unwrap();
        assert!((tape.scalar(s) - sw_loss(&[0.1, 0.2, 0.3, 0.4], &[0, 3]).unwrap()).abs() < 1e-15);
    }
}

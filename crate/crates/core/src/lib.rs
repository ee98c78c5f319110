//! A questioner and an answerer learn to play a four-way sentence guessing
//! game over two rounds of one-token questions and yes/no answers.
//!
//! The crate covers corpus construction, embedding tables, both agents,
//! episode rollout and training, an embedding baseline for finding
//! splitting words, evaluation and checkpoints.

pub mod abot;
pub mod baseline;
pub mod checkpoint;
pub mod corpus;
pub mod embeddings;
pub mod eval;
pub mod game;
pub mod nn;
pub mod params;
pub mod play;
pub mod qbot;
pub mod seed;
pub mod synthetic;
pub mod tape;
pub mod text;
pub mod train;

pub use abot::ABotParameters;
pub use baseline::{best_splitter, evaluate_baseline, split_distribution, Aggregation, SplitDistribution};
pub use checkpoint::{Checkpoint, CheckpointError, TrainState};
pub use corpus::{build_corpus, find_splitting_words, Corpus, CorpusError, PairGraph, Partition, SentenceSet};
pub use embeddings::{EmbeddingError, EmbeddingTable, OpenVocabulary, Vocabulary};
pub use eval::{evaluate, MetricsReport};
pub use game::{play_episode, Agents, GameConfig, GameError, GameSet, GameTranscript, LossRegime, Mode};
pub use qbot::{ModelDims, QBotParameters};
pub use seed::derive_seed;
pub use train::{train, RunOptions, TrainConfig, TrainError, TrainSummary, Trainer};

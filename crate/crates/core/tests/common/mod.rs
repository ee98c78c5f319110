#![allow(dead_code)]

pub mod gradcheck;

use logq_core::corpus::{build_corpus, ingest_pairs, Corpus, SentenceSet};
use logq_core::game::{Agents, GameConfig, GameSet};
use logq_core::{synthetic, EmbeddingTable};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn toks(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// `w0 .. w{n-1}`.
pub fn word_list(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i}")).collect()
}

/// Four random sentences of `len` words drawn from `words`.
pub fn random_set(words: &[String], len: usize, rng: &mut impl Rng) -> Vec<String> {
    (0..4)
        .map(|_| {
            (0..len)
                .map(|_| words.choose(rng).unwrap().as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

pub fn game_sets(sets: &[SentenceSet], table: &EmbeddingTable) -> Vec<GameSet> {
    sets.iter().map(|s| GameSet::new(s, table)).collect()
}

/// Small random agents over a toy vocabulary.
pub fn toy_agents(vocab: usize, dim: usize, hidden: usize, seed: u64) -> (EmbeddingTable, Agents, GameConfig) {
    let table = EmbeddingTable::random(&word_list(vocab), dim, seed);
    let agents = Agents::new(&table, hidden, seed);
    let cfg = GameConfig::new(agents.qbot.dims, 1);
    (table, agents, cfg)
}

/// Toy sets annotated against `table`.
pub fn toy_sets(table: &EmbeddingTable, count: usize, len: usize, seed: u64) -> Vec<SentenceSet> {
    let words = word_list(table.len() - 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let sentences = random_set(&words, len, &mut rng);
            SentenceSet {
                id: format!("toy-{i}"),
                splitting_words: logq_core::find_splitting_words(&sentences, table),
                sentences,
            }
        })
        .collect()
}

/// Synthetic corpus with its generated random vectors.
pub fn synthetic_corpus(pairs: usize, sets: usize, dim: usize, seed: u64) -> (Corpus, EmbeddingTable) {
    let table = EmbeddingTable::random(&synthetic::vocabulary(), dim, seed);
    let graph = ingest_pairs(&synthetic::generate_pairs(pairs, seed)).unwrap();
    (build_corpus(&graph, sets, &table, seed).unwrap(), table)
}

/// Every token of the set in exactly half of the sentences, by explicit
/// per-sentence membership counting over the whole token inventory.
pub fn brute_force_sws(sentences: &[String], in_vocab: impl Fn(&str) -> bool) -> Vec<String> {
    let tokenized: Vec<Vec<String>> = sentences.iter().map(|s| logq_core::text::tokenize(s)).collect();
    let inventory: std::collections::BTreeSet<&String> = tokenized.iter().flatten().collect();
    inventory
        .into_iter()
        .filter(|t| tokenized.iter().filter(|s| s.contains(t)).count() == sentences.len() / 2)
        .filter(|t| in_vocab(t))
        .cloned()
        .collect()
}

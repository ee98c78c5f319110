//! Fixtures shared by the benchmarks.

use logq_core::corpus::ingest_pairs;
use logq_core::{build_corpus, synthetic, Agents, Corpus, EmbeddingTable, GameConfig, GameSet, SentenceSet};

/// A synthetic corpus with agents of the default width.
pub struct Fixture {
    pub corpus: Corpus,
    pub table: EmbeddingTable,
    pub agents: Agents,
    pub game: GameConfig,
}

impl Fixture {
    pub fn new(dim: usize, hidden: usize) -> Self {
        let table = synthetic::corpus_embeddings(dim, 1);
        let graph = ingest_pairs(&synthetic::corpus_pairs(4000, 1)).expect("generated pairs");
        let corpus = build_corpus(&graph, 1000, &table, 1).expect("enough walks");
        let agents = Agents::new(&table, hidden, 1);
        let game = GameConfig::new(agents.qbot.dims, 1);
        Self {
            corpus,
            table,
            agents,
            game,
        }
    }

    /// Sets with splitting words.
    pub fn sw_sets(&self, n: usize) -> Vec<&SentenceSet> {
        self.corpus
            .sets
            .iter()
            .filter(|s| s.has_splitting_words())
            .take(n)
            .collect()
    }

    pub fn game_sets(&self, n: usize) -> Vec<GameSet> {
        self.sw_sets(n)
            .into_iter()
            .map(|s| GameSet::new(s, &self.table))
            .collect()
    }
}

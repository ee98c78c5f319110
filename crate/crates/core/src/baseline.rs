//! Non-learned splitter: scores each vocabulary token by how cleanly its
//! embedding affinity divides a set two against two.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceSet;
use crate::embeddings::{EmbeddingTable, SPECIALS};
use crate::tape::softmax;
use crate::text::tokenize;

/// Two scores closer than this are a tie.
pub const TIE_TOLERANCE: f64 = 1e-14;

/// How word-level dot products become one sentence affinity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Sum,
    Mean,
}

impl Aggregation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "max" => Some(Self::Max),
            "sum" => Some(Self::Sum),
            "mean" => Some(Self::Mean),
            _ => None,
        }
    }

    fn apply(self, dots: &[f64]) -> f64 {
        match self {
            Self::Max => dots.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Self::Sum => dots.iter().sum(),
            Self::Mean => dots.iter().sum::<f64>() / dots.len() as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitDistribution {
    pub token: usize,
    pub probs: Vec<f64>,
    /// 0-based, `best_pair.0 < best_pair.1`.
    pub best_pair: (usize, usize),
    pub score: f64,
}

/// In-vocabulary vectors of each sentence's words, as f64.
struct SetVectors {
    sentences: Vec<Vec<Vec<f64>>>,
}

impl SetVectors {
    fn new(set: &SentenceSet, table: &EmbeddingTable) -> Self {
        let sentences = set
            .sentences
            .iter()
            .map(|s| {
                tokenize(s)
                    .iter()
                    .filter_map(|w| table.get(w).filter(|&id| id >= SPECIALS.len()))
                    .map(|id| table.vector(id).iter().map(|&x| f64::from(x)).collect())
                    .collect()
            })
            .collect();
        Self { sentences }
    }

    fn distribution(&self, token: usize, table: &EmbeddingTable, agg: Aggregation) -> SplitDistribution {
        let v: Vec<f64> = table.vector(token).iter().map(|&x| f64::from(x)).collect();
        let affinities: Vec<f64> = self
            .sentences
            .iter()
            .map(|words| {
                if words.is_empty() {
                    return 0.0;
                }
                let dots: Vec<f64> = words
                    .iter()
                    .map(|w| w.iter().zip(&v).map(|(a, b)| a * b).sum())
                    .collect();
                agg.apply(&dots)
            })
            .collect();
        let probs = softmax(&affinities);
        let mut best_pair = (0, 1);
        let mut score = f64::INFINITY;
        for i in 0..probs.len() {
            for j in i + 1..probs.len() {
                let ce = -0.5 * probs[i].ln() - 0.5 * probs[j].ln();
                if ce < score {
                    score = ce;
                    best_pair = (i, j);
                }
            }
        }
        SplitDistribution {
            token,
            probs,
            best_pair,
            score,
        }
    }
}

/// Affinity of `token` to each sentence (max word dot product), softmaxed,
/// and the two-hot target it is closest to.
pub fn split_distribution(token: usize, set: &SentenceSet, table: &EmbeddingTable) -> SplitDistribution {
    split_distribution_with(token, set, table, Aggregation::Max)
}

pub fn split_distribution_with(
    token: usize,
    set: &SentenceSet,
    table: &EmbeddingTable,
    agg: Aggregation,
) -> SplitDistribution {
    SetVectors::new(set, table).distribution(token, table, agg)
}

/// Vocabulary token with the lowest split score; ties go to the
/// lexicographically smallest token string.
pub fn best_splitter(set: &SentenceSet, table: &EmbeddingTable) -> Option<usize> {
    best_splitter_with(set, table, Aggregation::Max)
}

pub fn best_splitter_with(set: &SentenceSet, table: &EmbeddingTable, agg: Aggregation) -> Option<usize> {
    let vectors = SetVectors::new(set, table);
    let scored: Vec<(usize, f64)> = (SPECIALS.len()..table.len())
        .into_par_iter()
        .map(|id| (id, vectors.distribution(id, table, agg).score))
        .collect();
    let min = scored.iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
    scored
        .into_iter()
        .filter(|(_, s)| *s <= min + TIE_TOLERANCE)
        .map(|(id, _)| id)
        .min_by(|a, b| table.token(*a).cmp(table.token(*b)))
}

/// Outcome of running the splitter over many sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub sets: usize,
    pub hits: usize,
    pub accuracy: f64,
    pub aggregation: Aggregation,
}

/// Fraction of sets whose best splitter is one of their splitting words.
/// Sets without splitting words are ignored.
pub fn evaluate_baseline(sets: &[SentenceSet], table: &EmbeddingTable) -> BaselineReport {
    evaluate_baseline_with(sets, table, Aggregation::Max)
}

pub fn evaluate_baseline_with(sets: &[SentenceSet], table: &EmbeddingTable, agg: Aggregation) -> BaselineReport {
    let eligible: Vec<&SentenceSet> = sets.iter().filter(|s| s.has_splitting_words()).collect();
    let hits = eligible
        .par_iter()
        .filter(|s| {
            best_splitter_with(s, table, agg).is_some_and(|id| s.splitting_words.iter().any(|w| w == table.token(id)))
        })
        .count();
    BaselineReport {
        sets: eligible.len(),
        hits,
        accuracy: if eligible.is_empty() {
            0.0
        } else {
            hits as f64 / eligible.len() as f64
        },
        aggregation: agg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toks(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn abcd() -> (SentenceSet, EmbeddingTable) {
        let set = SentenceSet {
            id: "t".into(),
            sentences: toks(&["a b", "a c", "d b", "d c"]),
            splitting_words: toks(&["a", "b", "c", "d"]),
        };
        (set, EmbeddingTable::one_hot(&toks(&["a", "b", "c", "d"]), 1.0))
    }

    #[test]
    fn orthonormal_example() {
        let (set, table) = abcd();
        let d = split_distribution(table.lookup("a"), &set, &table);
        let hi = std::f64::consts::E / (2.0 * std::f64::consts::E + 2.0);
        assert_abs_diff_eq!(d.probs[0], hi, epsilon = 1e-12);
        assert_abs_diff_eq!(d.probs[1], hi, epsilon = 1e-12);
        assert_abs_diff_eq!(d.probs[2], 0.5 - hi, epsilon = 1e-12);
        assert_eq!(d.best_pair, (0, 1));
        assert_abs_diff_eq!(d.score, 1.0064, epsilon = 1e-4);
        assert_eq!(best_splitter(&set, &table).map(|i| table.token(i)), Some("a"));
    }

    #[test]
    fn shared_embedding_is_uniform() {
        let entries = ["a", "b", "c", "d"]
            .iter()
            .map(|t| (t.to_string(), vec![0.5f32, 0.5]))
            .collect();
        let table = EmbeddingTable::from_vectors(2, entries);
        let (set, _) = abcd();
        for id in 4..8 {
            let d = split_distribution(id, &set, &table);
            for p in &d.probs {
                assert_abs_diff_eq!(*p, 0.25, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(d.score, 2.0 * 2f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn unused_token_does_not_change_the_choice() {
        let (set, table) = abcd();
        let bigger = EmbeddingTable::one_hot(&toks(&["a", "b", "c", "d", "aardvark"]), 1.0);
        assert_eq!(
            best_splitter(&set, &table).map(|i| table.token(i).to_string()),
            best_splitter(&set, &bigger).map(|i| bigger.token(i).to_string())
        );
    }

    #[test]
    fn string_matching_limit_finds_the_only_splitter() {
        let set = SentenceSet {
            id: "t".into(),
            sentences: toks(&["x p", "x q", "y r", "z s"]),
            splitting_words: toks(&["x"]),
        };
        let table = EmbeddingTable::one_hot(&toks(&["p", "q", "r", "s", "x", "y", "z"]), 20.0);
        let best = best_splitter(&set, &table).unwrap();
        assert_eq!(table.token(best), "x");
        let report = evaluate_baseline(std::slice::from_ref(&set), &table);
        assert_eq!((report.sets, report.hits), (1, 1));
    }

    #[test]
    fn aggregations_parse() {
        assert_eq!(Aggregation::parse("mean"), Some(Aggregation::Mean));
        assert_eq!(Aggregation::parse("median"), None);
    }
}

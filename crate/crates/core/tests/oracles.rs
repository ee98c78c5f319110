mod common;

use std::collections::{BTreeMap, HashSet};

use common::{brute_force_sws, game_sets, synthetic_corpus, word_list};
use logq_core::corpus::{ingest_pairs, sample_walk};
use logq_core::eval::play_all;
use logq_core::qbot::{gumbel_row, Channel};
use logq_core::tape::{softmax, Tape};
use logq_core::{best_splitter, find_splitting_words, Agents, EmbeddingTable, GameConfig, OpenVocabulary};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn splitting_words_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut words = word_list(30);
    words.extend(["Dog", "dog,", "the", "The", "isn't", "ball."].map(String::from));
    let table = EmbeddingTable::random(&word_list(20), 4, 1);
    let mut with_sw = 0;
    for _ in 0..1000 {
        let sentences: Vec<String> = (0..4)
            .map(|_| {
                let len = rng.gen_range(1..8);
                (0..len)
                    .map(|_| words.choose(&mut rng).unwrap().as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let expected = brute_force_sws(&sentences, |t| table.get(t).is_some());
        assert_eq!(find_splitting_words(&sentences, &table), expected, "{sentences:?}");
        let open = brute_force_sws(&sentences, |_| true);
        assert_eq!(find_splitting_words(&sentences, &OpenVocabulary), open, "{sentences:?}");
        with_sw += usize::from(!expected.is_empty());
    }
    assert!(with_sw > 100, "too few sets exercised the positive case");
}

fn simple_four_paths(nodes: usize, edges: &[(usize, usize)]) -> HashSet<Vec<usize>> {
    let adjacent = |a: usize, b: usize| edges.iter().any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b));
    let mut out = HashSet::new();
    for a in 0..nodes {
        for b in 0..nodes {
            for c in 0..nodes {
                for d in 0..nodes {
                    let p = [a, b, c, d];
                    let distinct = p.iter().collect::<HashSet<_>>().len() == 4;
                    if distinct && adjacent(a, b) && adjacent(b, c) && adjacent(c, d) {
                        out.insert(p.to_vec());
                    }
                }
            }
        }
    }
    out
}

#[test]
fn walks_are_simple_four_paths() {
    let graph = ingest_pairs(&[("a", "b"), ("b", "c"), ("c", "a"), ("c", "d")]).unwrap();
    let name = |i: usize| graph.nodes()[i].clone();
    let id = |s: &str| graph.nodes().iter().position(|n| n == s).unwrap();
    let edges = [("a", "b"), ("b", "c"), ("c", "a"), ("c", "d")].map(|(x, y)| (id(x), id(y)));
    let oracle = simple_four_paths(graph.node_count(), &edges);
    assert_eq!(oracle.len(), 4);

    let mut seen = HashSet::new();
    for seed in 0..500 {
        let walk = sample_walk(&graph, seed).unwrap();
        assert!(
            oracle.contains(&walk),
            "{:?}",
            walk.iter().map(|&i| name(i)).collect::<Vec<_>>()
        );
        seen.insert(walk);
    }
    assert_eq!(seen, oracle);
}

#[test]
fn gumbel_samples_follow_softmax() {
    let logits = vec![1.5, 0.0, -1.0, 0.7, 0.2];
    let probs = softmax(&logits);
    let n = 10_000;
    let mut counts = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let channel = Channel {
        temperature: 1.0,
        hard: true,
        noise_seed: None,
    };
    for _ in 0..n {
        let mut tape = Tape::new();
        let l = tape.constant_vec(logits.clone());
        let (_, id) = gumbel_row(&mut tape, l, &channel, Some(&mut rng));
        *counts.entry(id).or_insert(0usize) += 1;
    }
    for (k, p) in probs.iter().enumerate() {
        let freq = counts.get(&k).copied().unwrap_or(0) as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() <= 3.0 * se, "token {k}: {freq} vs {p}");
    }
}

#[test]
fn untrained_agents_play_at_chance() {
    let (corpus, table) = synthetic_corpus(3000, 1000, 32, 5);
    let sets: Vec<_> = corpus.sets.iter().take(500).cloned().collect();
    let sets = game_sets(&sets, &table);
    let agents = Agents::new(&table, 8, 17);
    let cfg = GameConfig::new(agents.qbot.dims, 1);
    let outcomes = play_all(&agents, &sets, &cfg).unwrap();
    assert!(outcomes.len() >= 2000);
    let n = outcomes.len() as f64;
    let acc = outcomes.iter().filter(|o| o.transcript.correct).count() as f64 / n;
    let half_width = 1.96 * (acc * (1.0 - acc) / n).sqrt();
    println!("untrained accuracy {acc:.4} +/- {half_width:.4}");
    assert!((acc - 0.25).abs() <= half_width, "{acc} +/- {half_width}");
}

#[test]
fn random_embeddings_find_splitting_words() {
    let (corpus, _) = synthetic_corpus(6000, 2000, 8, 3);
    let sets: Vec<_> = corpus
        .sets
        .iter()
        .filter(|s| s.has_splitting_words())
        .take(1000)
        .collect();
    assert_eq!(sets.len(), 1000);
    let table = EmbeddingTable::random(&logq_core::synthetic::vocabulary(), 256, 8);
    let hits = sets
        .iter()
        .filter(|s| best_splitter(s, &table).is_some_and(|id| s.splitting_words.iter().any(|w| w == table.token(id))))
        .count();
    println!("random D=256 splitter hits {hits}/1000");
    assert!(hits >= 990);
}

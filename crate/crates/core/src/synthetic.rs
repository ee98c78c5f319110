//! Templated paired-sentence generator for desk-scale corpora.
//!
//! Sentences fill the slots `det adj noun verb prep det place .`. Each pair
//! links an existing passage to a copy with one or two slots changed, so the
//! pair graph grows into trees whose walks give sets of closely related
//! sentences. Whether a walk has a splitting word depends on which slots the
//! walk's edges changed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embeddings::EmbeddingTable;
use crate::seed::derive_seed;

const DETERMINERS: &[&str] = &["a", "the"];
const ADJECTIVES: &[&str] = &["white", "black", "brown", "small", "big", "young", "old", "happy"];
const NOUNS: &[&str] = &["dog", "cat", "man", "woman", "boy", "girl", "child", "horse"];
const VERBS: &[&str] = &["runs", "sits", "jumps", "plays", "sleeps", "walks", "waits", "rests"];
const PREPOSITIONS: &[&str] = &["in", "on", "near", "by", "under", "behind"];
const PLACES: &[&str] = &["park", "street", "field", "beach", "yard", "house", "car", "river"];

const SLOTS: [&[&str]; 7] = [DETERMINERS, ADJECTIVES, NOUNS, VERBS, PREPOSITIONS, DETERMINERS, PLACES];

/// Probability that a new pair starts from an already generated passage.
const REUSE: f64 = 0.85;
/// Inclusive range of slots changed between the two sides of a pair.
const EDITS: (usize, usize) = (2, 4);

type Template = [usize; 7];

fn render(t: &Template) -> String {
    let mut words: Vec<&str> = t.iter().zip(SLOTS).map(|(i, slot)| slot[*i]).collect();
    words.push(".");
    words.join(" ")
}

fn random_template(rng: &mut impl Rng) -> Template {
    let mut t = [0; 7];
    for (v, slot) in t.iter_mut().zip(SLOTS) {
        *v = rng.gen_range(0..slot.len());
    }
    t
}

fn edit(t: &Template, rng: &mut impl Rng) -> Template {
    let mut out = *t;
    let edits = rng.gen_range(EDITS.0..=EDITS.1);
    let mut slots: Vec<usize> = (0..SLOTS.len()).collect();
    slots.shuffle(rng);
    for &s in &slots[..edits] {
        let choices = SLOTS[s].len();
        out[s] = (out[s] + rng.gen_range(1..choices)) % choices;
    }
    out
}

/// `count` sentence pairs, deterministic in `seed`.
pub fn generate_pairs(count: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<Template> = Vec::new();
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let base = if !pool.is_empty() && rng.gen_bool(REUSE) {
            *pool.choose(&mut rng).unwrap()
        } else {
            let t = random_template(&mut rng);
            pool.push(t);
            t
        };
        let other = edit(&base, &mut rng);
        pool.push(other);
        pairs.push((render(&base), render(&other)));
    }
    pairs
}

const PAIR_STREAM: u64 = 0x5359_4e54;
const EMBED_STREAM: u64 = 0x454d_4244;

/// Pairs for a synthetic corpus built with `seed`.
pub fn corpus_pairs(count: usize, seed: u64) -> Vec<(String, String)> {
    generate_pairs(count, derive_seed(seed, PAIR_STREAM))
}

/// Random vectors over [`vocabulary`] for a synthetic corpus built with `seed`.
pub fn corpus_embeddings(dim: usize, seed: u64) -> EmbeddingTable {
    EmbeddingTable::random(&vocabulary(), dim, derive_seed(seed, EMBED_STREAM))
}

/// Every token the generator can emit, deduplicated, in first-use order.
pub fn vocabulary() -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for slot in SLOTS {
        for w in slot {
            if !out.iter().any(|o| o == w) {
                out.push(w.to_string());
            }
        }
    }
    out.push(".".into());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    #[test]
    fn pairs_are_deterministic_and_differ() {
        let a = generate_pairs(50, 9);
        assert_eq!(a, generate_pairs(50, 9));
        assert_ne!(a, generate_pairs(50, 10));
        for (x, y) in &a {
            assert_ne!(x, y);
        }
    }

    #[test]
    fn generated_tokens_are_in_vocabulary() {
        let vocab = vocabulary();
        for (x, y) in generate_pairs(200, 1) {
            for t in tokenize(&x).into_iter().chain(tokenize(&y)) {
                assert!(vocab.contains(&t), "{t}");
            }
        }
    }
}

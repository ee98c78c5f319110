//! Game corpora: sentence-pair graphs, 4-sentence sets sampled by walking
//! the graph, splitting-word annotation, and the six train/dev/test
//! partitions.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::Vocabulary;
use crate::seed::derive_seed;
use crate::text::{normalize, tokenize};

/// Sentences per emitted set.
pub const SET_SIZE: usize = 4;
/// Walk attempts per set before giving up.
pub const WALK_ATTEMPTS: usize = 64;

pub const SETS_FILE: &str = "sets.jsonl";
pub const SPLITS_FILE: &str = "splits.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no sentence pairs supplied")]
    EmptyInput,
    #[error("every pair collapses to a self-pair after normalization")]
    AllDegenerate,
    #[error("pair record {record} has an empty passage after normalization")]
    EmptyPassage { record: usize },
    #[error("malformed pairs line {line}: expected two tab-separated columns")]
    MalformedPairs { line: usize },
    #[error("graph has {nodes} passages; at least {SET_SIZE} are needed")]
    GraphTooSmall { nodes: usize },
    #[error("no simple {SET_SIZE}-passage walk found in {WALK_ATTEMPTS} attempts")]
    DeadEnd,
    #[error("could only build {built} of {wanted} unique sets")]
    InsufficientGraph { built: usize, wanted: usize },
    #[error("at least 10 sets are required, got {0}")]
    TooFewSets(usize),
    #[error("invalid sentence set {id}: {reason}")]
    InvalidSet { id: String, reason: String },
    #[error("unknown set id {0} in splits")]
    UnknownId(String),
    #[error("corpus json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Undirected "has been paired with" graph over normalized passages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairGraph {
    nodes: Vec<String>,
    adjacency: Vec<Vec<usize>>,
}

impl PairGraph {
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sorted neighbour ids of node `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }
}

/// Builds the pair graph. Passages are deduplicated by normalized form;
/// repeated pairings collapse into one edge and self-pairs are dropped.
pub fn ingest_pairs<A, B>(records: &[(A, B)]) -> Result<PairGraph, CorpusError>
where
    A: AsRef<str>,
    B: AsRef<str>,
{
    if records.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut edges: Vec<BTreeSet<usize>> = Vec::new();
    let mut intern = |text: String, nodes: &mut Vec<String>, edges: &mut Vec<BTreeSet<usize>>| {
        *ids.entry(text.clone()).or_insert_with(|| {
            nodes.push(text);
            edges.push(BTreeSet::new());
            nodes.len() - 1
        })
    };
    for (i, (a, b)) in records.iter().enumerate() {
        let (a, b) = (normalize(a.as_ref()), normalize(b.as_ref()));
        if a.is_empty() || b.is_empty() {
            return Err(CorpusError::EmptyPassage { record: i + 1 });
        }
        if a == b {
            continue;
        }
        let ia = intern(a, &mut nodes, &mut edges);
        let ib = intern(b, &mut nodes, &mut edges);
        edges[ia].insert(ib);
        edges[ib].insert(ia);
    }
    if nodes.is_empty() {
        return Err(CorpusError::AllDegenerate);
    }
    Ok(PairGraph {
        nodes,
        adjacency: edges.into_iter().map(|s| s.into_iter().collect()).collect(),
    })
}

/// Reads a two-column, tab-separated UTF-8 pair file. Blank lines are skipped.
pub fn read_pairs(reader: impl BufRead) -> Result<Vec<(String, String)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(a), Some(b), None) => out.push((a.to_string(), b.to_string())),
            _ => return Err(CorpusError::MalformedPairs { line: i + 1 }),
        }
    }
    Ok(out)
}

pub fn read_pairs_file(path: &Path) -> Result<Vec<(String, String)>, CorpusError> {
    read_pairs(BufReader::new(File::open(path)?))
}

pub fn write_pairs(path: &Path, pairs: &[(String, String)]) -> Result<(), CorpusError> {
    let mut out = BufWriter::new(File::create(path)?);
    for (a, b) in pairs {
        writeln!(out, "{a}\t{b}")?;
    }
    out.flush()?;
    Ok(())
}

/// Candidate sentences of one game plus their splitting words.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSet {
    pub id: String,
    pub sentences: Vec<String>,
    pub splitting_words: Vec<String>,
}

impl SentenceSet {
    pub fn has_splitting_words(&self) -> bool {
        !self.splitting_words.is_empty()
    }

    /// Checks the set invariants: a power-of-two number (at least 2) of
    /// pairwise distinct sentences, and every annotated splitting word
    /// present in exactly half of them.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |reason: String| CorpusError::InvalidSet {
            id: self.id.clone(),
            reason,
        };
        let n = self.sentences.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(bad(format!("{n} sentences is not a power of two")));
        }
        let tokenized: Vec<Vec<String>> = self.sentences.iter().map(|s| tokenize(s)).collect();
        let distinct: HashSet<&Vec<String>> = tokenized.iter().collect();
        if distinct.len() != n {
            return Err(bad("sentences are not pairwise distinct".into()));
        }
        for w in &self.splitting_words {
            let count = tokenized.iter().filter(|t| t.contains(w)).count();
            if count != n / 2 {
                return Err(bad(format!("splitting word {w:?} occurs in {count} sentences")));
            }
        }
        Ok(())
    }

    /// Sorted sentence tuple used for deduplication.
    fn dedup_key(&self) -> Vec<String> {
        let mut k = self.sentences.clone();
        k.sort();
        k
    }
}

/// Every in-vocabulary token present in exactly half of the sentences,
/// counting presence per sentence rather than frequency. Sorted.
pub fn find_splitting_words<S: AsRef<str>>(sentences: &[S], vocab: &impl Vocabulary) -> Vec<String> {
    let half = sentences.len() / 2;
    let mut counts: HashMap<String, usize> = HashMap::new();
    for s in sentences {
        let types: HashSet<String> = tokenize(s.as_ref()).into_iter().collect();
        for t in types {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut out: Vec<String> = counts
        .into_iter()
        .filter(|(t, c)| *c == half && vocab.contains(t))
        .map(|(t, _)| t)
        .collect();
    out.sort();
    out
}

/// Samples a simple walk of [`SET_SIZE`] passages. Each step moves to a
/// uniformly chosen unvisited neighbour; a walk that runs out of unvisited
/// neighbours is abandoned and restarted from a fresh start node.
pub fn sample_walk(graph: &PairGraph, seed: u64) -> Result<Vec<usize>, CorpusError> {
    if graph.node_count() < SET_SIZE {
        return Err(CorpusError::GraphTooSmall {
            nodes: graph.node_count(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'attempt: for _ in 0..WALK_ATTEMPTS {
        let mut path = vec![rng.gen_range(0..graph.node_count())];
        while path.len() < SET_SIZE {
            let last = *path.last().unwrap();
            let open: Vec<usize> = graph
                .neighbors(last)
                .iter()
                .copied()
                .filter(|n| !path.contains(n))
                .collect();
            match open.choose(&mut rng) {
                Some(&next) => path.push(next),
                None => continue 'attempt,
            }
        }
        return Ok(path);
    }
    Err(CorpusError::DeadEnd)
}

/// One sentence set from a graph walk, without splitting-word annotation.
pub fn sample_sentence_set(graph: &PairGraph, seed: u64) -> Result<SentenceSet, CorpusError> {
    let path = sample_walk(graph, seed)?;
    Ok(SentenceSet {
        id: format!("walk-{seed:016x}"),
        sentences: path.iter().map(|&i| graph.nodes[i].clone()).collect(),
        splitting_words: Vec::new(),
    })
}

/// Names of the six partitions, in file order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Partition {
    TrainSw,
    DevSw,
    TestSw,
    TrainNoSw,
    DevNoSw,
    TestNoSw,
}

impl Partition {
    pub const ALL: [Partition; 6] = [
        Partition::TrainSw,
        Partition::DevSw,
        Partition::TestSw,
        Partition::TrainNoSw,
        Partition::DevNoSw,
        Partition::TestNoSw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Partition::TrainSw => "train_sw",
            Partition::DevSw => "dev_sw",
            Partition::TestSw => "test_sw",
            Partition::TrainNoSw => "train_nosw",
            Partition::DevNoSw => "dev_nosw",
            Partition::TestNoSw => "test_nosw",
        }
    }

    /// Accepts partition names and the short evaluation aliases `dev`
    /// (with-SW dev set) and `test`.
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "dev" => Some(Partition::DevSw),
            "test" => Some(Partition::TestSw),
            _ => Self::ALL.into_iter().find(|p| p.name() == name),
        }
    }
}

/// Set ids per partition.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplits {
    pub train_sw: Vec<String>,
    pub dev_sw: Vec<String>,
    pub test_sw: Vec<String>,
    pub train_nosw: Vec<String>,
    pub dev_nosw: Vec<String>,
    pub test_nosw: Vec<String>,
}

impl CorpusSplits {
    pub fn get(&self, p: Partition) -> &[String] {
        match p {
            Partition::TrainSw => &self.train_sw,
            Partition::DevSw => &self.dev_sw,
            Partition::TestSw => &self.test_sw,
            Partition::TrainNoSw => &self.train_nosw,
            Partition::DevNoSw => &self.dev_nosw,
            Partition::TestNoSw => &self.test_nosw,
        }
    }

    fn get_mut(&mut self, p: Partition) -> &mut Vec<String> {
        match p {
            Partition::TrainSw => &mut self.train_sw,
            Partition::DevSw => &mut self.dev_sw,
            Partition::TestSw => &mut self.test_sw,
            Partition::TrainNoSw => &mut self.train_nosw,
            Partition::DevNoSw => &mut self.dev_nosw,
            Partition::TestNoSw => &mut self.test_nosw,
        }
    }

    pub fn total(&self) -> usize {
        Partition::ALL.iter().map(|p| self.get(*p).len()).sum()
    }
}

/// Sizes of an 80/10/10 split of `n` items: dev and test each take
/// `floor(n / 10)`, train the remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let tenth = n / 10;
    (n - 2 * tenth, tenth, tenth)
}

/// Sets plus their partitioning.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub sets: Vec<SentenceSet>,
    pub splits: CorpusSplits,
}

impl Corpus {
    /// Sets of a partition, in split order.
    pub fn partition(&self, p: Partition) -> Vec<&SentenceSet> {
        let by_id: HashMap<&str, &SentenceSet> = self.sets.iter().map(|s| (s.id.as_str(), s)).collect();
        self.splits
            .get(p)
            .iter()
            .filter_map(|id| by_id.get(id.as_str()).copied())
            .collect()
    }

    pub fn find(&self, id: &str) -> Option<&SentenceSet> {
        self.sets.iter().find(|s| s.id == id)
    }

    /// Writes `sets.jsonl` and `splits.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(File::create(dir.join(SETS_FILE))?);
        for set in &self.sets {
            serde_json::to_writer(&mut out, set)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        let mut out = BufWriter::new(File::create(dir.join(SPLITS_FILE))?);
        serde_json::to_writer_pretty(&mut out, &self.splits)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    /// Loads and validates a corpus directory.
    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let reader = BufReader::new(File::open(dir.join(SETS_FILE))?);
        let mut sets = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let set: SentenceSet = serde_json::from_str(&line)?;
            set.validate()?;
            sets.push(set);
        }
        let splits: CorpusSplits = serde_json::from_reader(BufReader::new(File::open(dir.join(SPLITS_FILE))?))?;
        let ids: HashSet<&str> = sets.iter().map(|s| s.id.as_str()).collect();
        for p in Partition::ALL {
            if let Some(missing) = splits.get(p).iter().find(|id| !ids.contains(id.as_str())) {
                return Err(CorpusError::UnknownId(missing.clone()));
            }
        }
        Ok(Self { sets, splits })
    }
}

/// Samples `num_sets` unique sentence sets, annotates splitting words
/// against `vocab`, and partitions them. A pure function of its arguments.
pub fn build_corpus(
    graph: &PairGraph,
    num_sets: usize,
    vocab: &impl Vocabulary,
    seed: u64,
) -> Result<Corpus, CorpusError> {
    if num_sets < 10 {
        return Err(CorpusError::TooFewSets(num_sets));
    }
    let budget = num_sets * 20 + 1_000;
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut sets = Vec::with_capacity(num_sets);
    for attempt in 0..budget {
        if sets.len() == num_sets {
            break;
        }
        let mut set = match sample_sentence_set(graph, derive_seed(seed, attempt as u64)) {
            Ok(s) => s,
            Err(CorpusError::DeadEnd) => continue,
            Err(e) => return Err(e),
        };
        if !seen.insert(set.dedup_key()) {
            continue;
        }
        set.id = format!("set-{:06}", sets.len());
        set.splitting_words = find_splitting_words(&set.sentences, vocab);
        sets.push(set);
    }
    if sets.len() < num_sets {
        return Err(CorpusError::InsufficientGraph {
            built: sets.len(),
            wanted: num_sets,
        });
    }
    let splits = partition_sets(&sets, derive_seed(seed, u64::MAX));
    Ok(Corpus { sets, splits })
}

/// Partitions sets into with/without-SW subsets and splits each 80/10/10
/// after a seeded shuffle.
pub fn partition_sets(sets: &[SentenceSet], seed: u64) -> CorpusSplits {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = CorpusSplits::default();
    let groups = [
        (true, [Partition::TrainSw, Partition::DevSw, Partition::TestSw]),
        (false, [Partition::TrainNoSw, Partition::DevNoSw, Partition::TestNoSw]),
    ];
    for (with_sw, parts) in groups {
        let mut ids: Vec<String> = sets
            .iter()
            .filter(|s| s.has_splitting_words() == with_sw)
            .map(|s| s.id.clone())
            .collect();
        ids.shuffle(&mut rng);
        let (train, dev, _) = split_sizes(ids.len());
        let test = ids.split_off(train + dev);
        let dev_ids = ids.split_off(train);
        *splits.get_mut(parts[0]) = ids;
        *splits.get_mut(parts[1]) = dev_ids;
        *splits.get_mut(parts[2]) = test;
    }
    splits
}

/// Build parameters and the digest of the vocabulary used for annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub num_sets: usize,
    pub seed: u64,
    /// `None` when splitting words were annotated against an open vocabulary.
    pub vocab_digest: Option<String>,
    /// Vector file written or used by the build, relative to the corpus dir
    /// when it lives there.
    pub embeddings: Option<String>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<(), CorpusError> {
        let f = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    /// `Ok(None)` when the corpus has no manifest.
    pub fn load(dir: &Path) -> Result<Option<Self>, CorpusError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_reader(BufReader::new(File::open(path)?))?))
    }
}

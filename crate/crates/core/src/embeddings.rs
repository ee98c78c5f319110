//! Pretrained word vectors and the shared open vocabulary.
//!
//! The vector file format is the plain-text one used by GloVe: one token per
//! line followed by `D` space-separated decimals. The table always starts with
//! four special tokens, so ids `0..4` are stable across vocabularies.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const SOS: &str = "<sos>";
pub const EOS: &str = "<eos>";
pub const SPECIALS: [&str; 4] = [PAD, UNK, SOS, EOS];

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const SOS_ID: usize = 2;
pub const EOS_ID: usize = 3;

/// Default number of leading file tokens kept as the open vocabulary.
pub const DEFAULT_LIMIT: usize = 20_000;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding file is empty")]
    EmptyFile,
    #[error("malformed embedding line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("limit must be at least 1")]
    ZeroLimit,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Membership test used when annotating splitting words.
pub trait Vocabulary {
    fn contains(&self, token: &str) -> bool;
}

/// Vocabulary accepting every token; used when no vector file is supplied.
#[derive(Clone, Copy, Debug, Default)]
pub struct OpenVocabulary;

impl Vocabulary for OpenVocabulary {
    fn contains(&self, _token: &str) -> bool {
        true
    }
}

/// Ordered vocabulary with one `dim`-wide vector per token.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    /// Row-major `tokens.len() x dim`.
    vectors: Vec<f32>,
}

impl Vocabulary for EmbeddingTable {
    fn contains(&self, token: &str) -> bool {
        self.index.get(token).is_some_and(|&id| id >= SPECIALS.len())
    }
}

impl EmbeddingTable {
    /// Builds a table from non-special tokens and their vectors. Duplicate
    /// tokens keep their first occurrence. Specials are prepended: zero
    /// vectors, except `<unk>` which is the mean of the supplied vectors.
    pub fn from_vectors(dim: usize, entries: Vec<(String, Vec<f32>)>) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let mut vectors = vec![0.0f32; SPECIALS.len() * dim];
        let mut sum = vec![0.0f64; dim];
        let mut loaded = 0usize;
        for (token, vec) in entries {
            assert_eq!(vec.len(), dim, "vector width mismatch for {token}");
            if index.contains_key(&token) {
                continue;
            }
            index.insert(token.clone(), tokens.len());
            tokens.push(token);
            for (s, v) in sum.iter_mut().zip(&vec) {
                *s += f64::from(*v);
            }
            vectors.extend_from_slice(&vec);
            loaded += 1;
        }
        if loaded > 0 {
            for (j, s) in sum.iter().enumerate() {
                vectors[UNK_ID * dim + j] = (s / loaded as f64) as f32;
            }
        }
        Self {
            dim,
            tokens,
            index,
            vectors,
        }
    }

    /// Table over `tokens` with independent standard-normal components.
    pub fn random(tokens: &[String], dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = tokens
            .iter()
            .map(|t| {
                let v = (0..dim)
                    .map(|_| {
                        let x: f64 = StandardNormal.sample(&mut rng);
                        x as f32
                    })
                    .collect();
                (t.clone(), v)
            })
            .collect();
        Self::from_vectors(dim, entries)
    }

    /// Table in which every token's vector is `scale` times its own basis
    /// vector, so dot products reduce to exact string matching.
    pub fn one_hot(tokens: &[String], scale: f32) -> Self {
        let dim = tokens.len();
        let entries = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut v = vec![0.0; dim];
                v[i] = scale;
                (t.clone(), v)
            })
            .collect();
        Self::from_vectors(dim, entries)
    }

    pub fn load(path: &Path, limit: usize) -> Result<Self, EmbeddingError> {
        let file = File::open(path)?;
        Self::read(BufReader::new(file), limit)
    }

    /// Reads at most `limit` leading lines of a vector file.
    pub fn read(reader: impl BufRead, limit: usize) -> Result<Self, EmbeddingError> {
        if limit == 0 {
            return Err(EmbeddingError::ZeroLimit);
        }
        let mut dim = None;
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            if i >= limit {
                break;
            }
            let line = line?;
            let lineno = i + 1;
            let mut fields = line.trim_end_matches(['\r', '\n']).split(' ');
            let token = fields.next().unwrap_or_default();
            if token.is_empty() {
                return Err(EmbeddingError::MalformedLine {
                    line: lineno,
                    reason: "missing token".into(),
                });
            }
            let values = fields
                .filter(|f| !f.is_empty())
                .map(|f| match f.parse::<f32>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(EmbeddingError::MalformedLine {
                        line: lineno,
                        reason: format!("non-numeric component {f:?}"),
                    }),
                })
                .collect::<Result<Vec<f32>, _>>()?;
            let d = *dim.get_or_insert(values.len());
            if values.is_empty() || values.len() != d {
                return Err(EmbeddingError::MalformedLine {
                    line: lineno,
                    reason: format!("expected {d} components, found {}", values.len()),
                });
            }
            entries.push((token.to_string(), values));
        }
        let Some(dim) = dim else {
            return Err(EmbeddingError::EmptyFile);
        };
        Ok(Self::from_vectors(dim, entries))
    }

    /// Writes the non-special rows in vector-file format.
    pub fn write(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut out = BufWriter::new(File::create(path)?);
        for id in SPECIALS.len()..self.len() {
            write!(out, "{}", self.tokens[id])?;
            for v in self.vector(id) {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Id of `token`, or of `<unk>` when it is out of vocabulary.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Id of `token` when it is in vocabulary.
    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector(&self, id: usize) -> &[f32] {
        &self.vectors[id * self.dim..(id + 1) * self.dim]
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    /// Token ids of a normalized sentence.
    pub fn encode(&self, sentence: &str) -> Vec<usize> {
        crate::text::tokenize(sentence).iter().map(|t| self.lookup(t)).collect()
    }

    /// SHA-256 over the ordered token list; identifies the vocabulary a
    /// checkpoint was trained with.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

//! The questioner.
//!
//! The Q-Bot encodes every candidate sentence once, then each round
//!
//! 1. attends over the sentence memories with its hidden game state
//!    ([`memory_read`]), producing a combined vector and a distribution that
//!    doubles as its current guess;
//! 2. decodes a question from the combined vector through a Gumbel-softmax
//!    channel ([`produce_query`]);
//! 3. folds the answer bit back in: [`adjust_combined`] transforms the
//!    combined vector, [`gate_sentences`] rescales the memories, and
//!    [`update_hidden`] advances the game state.
//!
//! All operations record onto a [`Tape`] so training can differentiate
//! through whole episodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{EmbeddingTable, SOS_ID};
use crate::nn::{bidirectional_encode, register_embedding, register_linear, LstmSlots, LstmVars};
use crate::params::{bind, Matrix, ParamSet};
use crate::tape::{Shared, Tape, Var};

#[derive(Debug, Error, PartialEq)]
pub enum QBotError {
    #[error("gate weights sum to zero")]
    DegenerateGate,
}

/// Widths shared by both agents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Vocabulary size `V`, specials included.
    pub vocab: usize,
    /// Word vector width `D`.
    pub embed: usize,
    /// Hidden units per recurrent direction `H`; sentence encodings and the
    /// game state are `2H` wide.
    pub hidden: usize,
}

impl ModelDims {
    pub fn encoding(&self) -> usize {
        2 * self.hidden
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Slots {
    embed: usize,
    enc_fwd: LstmSlots,
    enc_bwd: LstmSlots,
    w_d: usize,
    dec: LstmSlots,
    out_w: usize,
    out_b: usize,
    w_a: usize,
    w_h: usize,
    w_c: usize,
    b_h: usize,
    h0: usize,
}

/// Every learnable weight of the questioner.
#[derive(Clone, Debug, PartialEq)]
pub struct QBotParameters {
    pub dims: ModelDims,
    pub params: ParamSet,
    slots: Slots,
}

impl QBotParameters {
    /// Fresh parameters; the embedding matrix is copied from `table`.
    pub fn new(table: &EmbeddingTable, hidden: usize, seed: u64) -> Self {
        let dims = ModelDims {
            vocab: table.len(),
            embed: table.dim(),
            hidden,
        };
        Self::layout(dims, Some(table), seed)
    }

    fn layout(dims: ModelDims, table: Option<&EmbeddingTable>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let e = dims.encoding();
        let embed = match table {
            Some(t) => register_embedding(&mut p, "q.embed", t),
            None => p.push("q.embed", Matrix::zeros(dims.vocab, dims.embed)),
        };
        let slots = Slots {
            embed,
            enc_fwd: LstmSlots::register(&mut p, "q.enc_fwd", dims.embed, dims.hidden, &mut rng),
            enc_bwd: LstmSlots::register(&mut p, "q.enc_bwd", dims.embed, dims.hidden, &mut rng),
            w_d: register_linear(&mut p, "q.w_d", e, e, &mut rng),
            dec: LstmSlots::register(&mut p, "q.dec", dims.embed, e, &mut rng),
            out_w: register_linear(&mut p, "q.out_w", dims.vocab, e, &mut rng),
            out_b: p.push("q.out_b", Matrix::zeros(dims.vocab, 1)),
            w_a: register_linear(&mut p, "q.w_a", e, e, &mut rng),
            w_h: register_linear(&mut p, "q.w_h", e, e, &mut rng),
            w_c: register_linear(&mut p, "q.w_c", e, e, &mut rng),
            b_h: p.push("q.b_h", Matrix::zeros(e, 1)),
            h0: p.push("q.h0", Matrix::zeros(e, 1)),
        };
        Self { dims, params: p, slots }
    }

    /// Rebuilds parameters from stored tensors, checking names and shapes.
    pub fn from_params(dims: ModelDims, params: ParamSet) -> Result<Self, String> {
        let mut out = Self::layout(dims, None, 0);
        check_layout(&out.params, &params)?;
        out.params = params;
        Ok(out)
    }

    pub fn bind(&self, tape: &mut Tape, snapshot: &[Shared]) -> QBotVars {
        let v = bind(tape, snapshot);
        let s = &self.slots;
        QBotVars {
            embed: v[s.embed],
            enc_fwd: s.enc_fwd.vars(&v),
            enc_bwd: s.enc_bwd.vars(&v),
            w_d: v[s.w_d],
            dec: s.dec.vars(&v),
            out_w: v[s.out_w],
            out_b: v[s.out_b],
            w_a: v[s.w_a],
            w_h: v[s.w_h],
            w_c: v[s.w_c],
            b_h: v[s.b_h],
            h0: v[s.h0],
            all: v,
        }
    }

    /// Mutable access to a named tensor (tests and tools).
    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        let i = self.params.names().iter().position(|n| n == name)?;
        Some(self.params.tensor_mut(i))
    }
}

pub(crate) fn check_layout(expected: &ParamSet, found: &ParamSet) -> Result<(), String> {
    if expected.names() != found.names() {
        return Err(format!(
            "parameter names differ: expected {:?}, found {:?}",
            expected.names(),
            found.names()
        ));
    }
    for ((name, a), b) in expected.iter().zip(found.tensors()) {
        if (a.rows, a.cols) != (b.rows, b.cols) || b.data.len() != b.rows * b.cols {
            return Err(format!(
                "{name}: expected {}x{}, found {}x{}",
                a.rows, a.cols, b.rows, b.cols
            ));
        }
    }
    Ok(())
}

/// Q-Bot parameters bound to one tape.
#[derive(Clone, Debug)]
pub struct QBotVars {
    pub embed: Var,
    pub enc_fwd: LstmVars,
    pub enc_bwd: LstmVars,
    pub w_d: Var,
    pub dec: LstmVars,
    pub out_w: Var,
    pub out_b: Var,
    pub w_a: Var,
    pub w_h: Var,
    pub w_c: Var,
    pub b_h: Var,
    pub h0: Var,
    /// All vars in parameter-slot order.
    pub all: Vec<Var>,
}

/// Per-round intermediate values.
#[derive(Clone, Copy, Debug)]
pub struct RoundWork {
    /// Attention-weighted combination of the memories.
    pub combined: Var,
    /// Attention over sentences; also the current guess distribution.
    pub attention: Var,
}

/// Encodes each sentence independently into one `2H` memory row.
pub fn encode_sentences(tape: &mut Tape, q: &QBotVars, sentences: &[Vec<usize>]) -> Var {
    let rows: Vec<Var> = sentences
        .iter()
        .map(|ids| {
            let inputs: Vec<Var> = ids.iter().map(|&id| tape.row(q.embed, id)).collect();
            bidirectional_encode(tape, &q.enc_fwd, &q.enc_bwd, &inputs)
        })
        .collect();
    tape.stack_rows(&rows)
}

/// One-hop dot-product attention of `h` over the memory rows.
pub fn memory_read(tape: &mut Tape, h: Var, memory: Var) -> RoundWork {
    let scores = tape.matvec(memory, h);
    let attention = tape.softmax(scores);
    let combined = tape.vecmat(attention, memory);
    RoundWork { combined, attention }
}

/// How the question channel discretizes each decoder step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Channel {
    /// Gumbel-softmax temperature.
    pub temperature: f64,
    /// Straight-through one-hot forward values.
    pub hard: bool,
    /// Seed for Gumbel noise; `None` disables noise (pure argmax decoding).
    pub noise_seed: Option<u64>,
}

/// A decoded question on the tape.
#[derive(Clone, Debug)]
pub struct QueryVars {
    /// Channel rows, `L` of them, each over the vocabulary.
    pub rows: Vec<Var>,
    /// Argmax token of each row.
    pub hard_ids: Vec<usize>,
    /// Noise-free softmax over the vocabulary at decoder step 1.
    pub first_step_dist: Var,
}

/// A question as plain values, for transcripts and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct Question {
    pub soft: Vec<Vec<f64>>,
    pub hard_ids: Vec<usize>,
}

impl QueryVars {
    pub fn values(&self, tape: &Tape) -> Question {
        Question {
            soft: self.rows.iter().map(|r| tape.value(*r).to_vec()).collect(),
            hard_ids: self.hard_ids.clone(),
        }
    }
}

/// Standard Gumbel sample.
pub fn gumbel(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    -(-u.ln()).ln()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// One Gumbel-softmax row over `logits`.
pub fn gumbel_row(tape: &mut Tape, logits: Var, channel: &Channel, rng: Option<&mut ChaCha8Rng>) -> (Var, usize) {
    let perturbed = match rng {
        Some(rng) => {
            let noise: Vec<f64> = (0..tape.value(logits).len()).map(|_| gumbel(rng)).collect();
            let noise = tape.constant_vec(noise);
            tape.add(logits, noise)
        }
        None => logits,
    };
    let scaled = tape.scale(perturbed, 1.0 / channel.temperature);
    let soft = tape.softmax(scaled);
    let id = argmax(tape.value(soft));
    if channel.hard {
        let mut one_hot = vec![0.0; tape.value(soft).len()];
        one_hot[id] = 1.0;
        (tape.straight_through(one_hot, soft), id)
    } else {
        (soft, id)
    }
}

/// Decodes an `len`-token question from the combined vector.
pub fn produce_query(tape: &mut Tape, q: &QBotVars, combined: Var, len: usize, channel: &Channel) -> QueryVars {
    assert!(len >= 1, "question length must be positive");
    assert!(channel.temperature > 0.0, "temperature must be positive");
    let mut rng = channel.noise_seed.map(ChaCha8Rng::seed_from_u64);
    let proj = tape.matvec(q.w_d, combined);
    let mut h = tape.tanh(proj);
    let mut c = tape.constant_vec(vec![0.0; q.dec.hidden]);
    let mut x = tape.row(q.embed, SOS_ID);
    let mut rows = Vec::with_capacity(len);
    let mut hard_ids = Vec::with_capacity(len);
    let mut first_step_dist = None;
    for _ in 0..len {
        (h, c) = q.dec.step(tape, x, h, c);
        let logits = tape.matvec(q.out_w, h);
        let logits = tape.add(logits, q.out_b);
        if first_step_dist.is_none() {
            first_step_dist = Some(tape.softmax(logits));
        }
        let (row, id) = gumbel_row(tape, logits, channel, rng.as_mut());
        x = tape.vecmat(row, q.embed);
        rows.push(row);
        hard_ids.push(id);
    }
    QueryVars {
        rows,
        hard_ids,
        first_step_dist: first_step_dist.expect("len >= 1"),
    }
}

/// `r * c_o + (1 - r) * tanh(W_a c_o)` for the scalar answer node `r`.
pub fn adjust_combined(tape: &mut Tape, q: &QBotVars, combined: Var, response: Var) -> Var {
    let mapped = tape.matvec(q.w_a, combined);
    let mapped = tape.tanh(mapped);
    let keep = tape.scalar_mul(response, combined);
    let flip = tape.one_minus(response);
    let swap = tape.scalar_mul(flip, mapped);
    tape.add(keep, swap)
}

/// Rescales memory row `i` by `w_i + gamma`, where `w` renormalizes
/// `r * p + (1 - r) * (1 - p)` to a distribution.
pub fn gate_sentences(
    tape: &mut Tape,
    memory: Var,
    attention: Var,
    response: Var,
    gamma: f64,
) -> Result<Var, QBotError> {
    let agree = tape.scalar_mul(response, attention);
    let flip = tape.one_minus(response);
    let rest = tape.one_minus(attention);
    let disagree = tape.scalar_mul(flip, rest);
    let raw = tape.add(agree, disagree);
    let total = tape.sum(raw);
    if tape.scalar(total) <= 0.0 {
        return Err(QBotError::DegenerateGate);
    }
    let weights = tape.div_scalar(raw, total);
    let factors = tape.offset(weights, gamma);
    Ok(tape.row_scale(memory, factors))
}

/// `tanh(W_h h + W_c c_a + b_h)`.
pub fn update_hidden(tape: &mut Tape, q: &QBotVars, h: Var, adjusted: Var) -> Var {
    let a = tape.matvec(q.w_h, h);
    let b = tape.matvec(q.w_c, adjusted);
    let s = tape.add(a, b);
    let s = tape.add(s, q.b_h);
    tape.tanh(s)
}

/// Guessed sentence (0-based): the argmax of `p`, lowest index on ties.
pub fn guess(p: &[f64]) -> usize {
    argmax(p)
}

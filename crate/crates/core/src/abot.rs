//! The answerer. It only ever sees the target sentence and the questions;
//! each answer is one bit produced by a two-layer perceptron followed by a
//! straight-through threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embeddings::EmbeddingTable;
use crate::nn::{bidirectional_encode, register_embedding, register_linear, LstmSlots, LstmVars};
use crate::params::{bind, Matrix, ParamSet};
use crate::qbot::{check_layout, ModelDims};
use crate::tape::{Shared, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Slots {
    embed: usize,
    sent_fwd: LstmSlots,
    sent_bwd: LstmSlots,
    ques_fwd: LstmSlots,
    ques_bwd: LstmSlots,
    l1_w: usize,
    l1_b: usize,
    l2_w: usize,
    l2_b: usize,
}

/// Every learnable weight of the answerer. Storage is never shared with
/// the questioner.
#[derive(Clone, Debug, PartialEq)]
pub struct ABotParameters {
    pub dims: ModelDims,
    pub params: ParamSet,
    slots: Slots,
}

impl ABotParameters {
    /// Fresh parameters with responder width `2H`.
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
        let enc = dims.encoding();
        let embed = match table {
            Some(t) => register_embedding(&mut p, "a.embed", t),
            None => p.push("a.embed", Matrix::zeros(dims.vocab, dims.embed)),
        };
        let slots = Slots {
            embed,
            sent_fwd: LstmSlots::register(&mut p, "a.sent_fwd", dims.embed, dims.hidden, &mut rng),
            sent_bwd: LstmSlots::register(&mut p, "a.sent_bwd", dims.embed, dims.hidden, &mut rng),
            ques_fwd: LstmSlots::register(&mut p, "a.ques_fwd", dims.embed, dims.hidden, &mut rng),
            ques_bwd: LstmSlots::register(&mut p, "a.ques_bwd", dims.embed, dims.hidden, &mut rng),
            l1_w: register_linear(&mut p, "a.l1_w", enc, 2 * enc, &mut rng),
            l1_b: p.push("a.l1_b", Matrix::zeros(enc, 1)),
            l2_w: register_linear(&mut p, "a.l2_w", 1, enc, &mut rng),
            l2_b: p.push("a.l2_b", Matrix::zeros(1, 1)),
        };
        Self { dims, params: p, slots }
    }

    pub fn from_params(dims: ModelDims, params: ParamSet) -> Result<Self, String> {
        let mut out = Self::layout(dims, None, 0);
        check_layout(&out.params, &params)?;
        out.params = params;
        Ok(out)
    }

    pub fn bind(&self, tape: &mut Tape, snapshot: &[Shared]) -> ABotVars {
        let v = bind(tape, snapshot);
        let s = &self.slots;
        ABotVars {
            embed: v[s.embed],
            sent_fwd: s.sent_fwd.vars(&v),
            sent_bwd: s.sent_bwd.vars(&v),
            ques_fwd: s.ques_fwd.vars(&v),
            ques_bwd: s.ques_bwd.vars(&v),
            l1_w: v[s.l1_w],
            l1_b: v[s.l1_b],
            l2_w: v[s.l2_w],
            l2_b: v[s.l2_b],
            all: v,
        }
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        let i = self.params.names().iter().position(|n| n == name)?;
        Some(self.params.tensor_mut(i))
    }
}

/// A-Bot parameters bound to one tape.
#[derive(Clone, Debug)]
pub struct ABotVars {
    pub embed: Var,
    pub sent_fwd: LstmVars,
    pub sent_bwd: LstmVars,
    pub ques_fwd: LstmVars,
    pub ques_bwd: LstmVars,
    pub l1_w: Var,
    pub l1_b: Var,
    pub l2_w: Var,
    pub l2_b: Var,
    pub all: Vec<Var>,
}

/// How the responder turns its confidence into a bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitMode {
    /// `confidence >= 0.5`.
    Threshold,
    /// Bernoulli draw with the given seed.
    Sampled(u64),
}

/// One answer on the tape.
#[derive(Clone, Copy, Debug)]
pub struct ResponseVars {
    /// Forward value is the bit; its gradient flows unchanged into
    /// `confidence`.
    pub bit: Var,
    pub confidence: Var,
}

/// Plain answer values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Response {
    pub bit: u8,
    pub confidence: f64,
}

impl ResponseVars {
    pub fn values(&self, tape: &Tape) -> Response {
        Response {
            bit: tape.scalar(self.bit) as u8,
            confidence: tape.scalar(self.confidence),
        }
    }
}

/// Encodes the target sentence; the only sentence the answerer sees.
pub fn encode_answer(tape: &mut Tape, a: &ABotVars, sentence: &[usize]) -> Var {
    let inputs: Vec<Var> = sentence.iter().map(|&id| tape.row(a.embed, id)).collect();
    bidirectional_encode(tape, &a.sent_fwd, &a.sent_bwd, &inputs)
}

/// Encodes channel rows (soft or one-hot) through the answerer's own
/// embedding matrix, so gradients reach the questioner's decoder.
pub fn encode_question(tape: &mut Tape, a: &ABotVars, rows: &[Var]) -> Var {
    assert!(!rows.is_empty(), "empty question");
    let inputs: Vec<Var> = rows.iter().map(|r| tape.vecmat(*r, a.embed)).collect();
    bidirectional_encode(tape, &a.ques_fwd, &a.ques_bwd, &inputs)
}

/// Confidence `sigmoid(l2(tanh(l1([e_A; q]))))` and its straight-through bit.
pub fn respond(tape: &mut Tape, a: &ABotVars, answer: Var, question: Var, mode: BitMode) -> ResponseVars {
    let x = tape.concat(&[answer, question]);
    let z1 = tape.matvec(a.l1_w, x);
    let z1 = tape.add(z1, a.l1_b);
    let hidden = tape.tanh(z1);
    let z2 = tape.matvec(a.l2_w, hidden);
    let z2 = tape.add(z2, a.l2_b);
    let confidence = tape.sigmoid(z2);
    let c = tape.scalar(confidence);
    let bit = match mode {
        BitMode::Threshold => c >= 0.5,
        BitMode::Sampled(seed) => ChaCha8Rng::seed_from_u64(seed).gen::<f64>() < c,
    };
    let bit = tape.straight_through(vec![if bit { 1.0 } else { 0.0 }], confidence);
    ResponseVars { bit, confidence }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qbot::QBotParameters;

    fn table() -> EmbeddingTable {
        let tokens: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        EmbeddingTable::random(&tokens, 5, 2)
    }

    #[test]
    fn answer_encoding_is_2h_and_pure() {
        let ap = ABotParameters::new(&table(), 3, 9);
        let mut tape = Tape::new();
        let av = ap.bind(&mut tape, &ap.params.snapshot());
        let e1 = encode_answer(&mut tape, &av, &[4, 5, 6]);
        let e2 = encode_answer(&mut tape, &av, &[4, 5, 6]);
        assert_eq!(tape.value(e1).len(), 6);
        assert_eq!(tape.value(e1), tape.value(e2));
    }

    #[test]
    fn answerer_and_questioner_encodings_differ() {
        let t = table();
        let ap = ABotParameters::new(&t, 3, 9);
        let qp = QBotParameters::new(&t, 3, 10);
        let mut tape = Tape::new();
        let av = ap.bind(&mut tape, &ap.params.snapshot());
        let qv = qp.bind(&mut tape, &qp.params.snapshot());
        let ea = encode_answer(&mut tape, &av, &[4, 5]);
        let mem = crate::qbot::encode_sentences(&mut tape, &qv, &[vec![4, 5]]);
        assert_ne!(tape.value(ea), tape.value(mem));
    }

    #[test]
    fn one_hot_question_encodes_its_token() {
        let ap = ABotParameters::new(&table(), 3, 1);
        let mut tape = Tape::new();
        let av = ap.bind(&mut tape, &ap.params.snapshot());
        let mut row = vec![0.0; 8];
        row[6] = 1.0;
        let row = tape.constant_vec(row);
        let q = encode_question(&mut tape, &av, &[row]);
        let emb = tape.row(av.embed, 6);
        let direct = bidirectional_encode(&mut tape, &av.ques_fwd, &av.ques_bwd, &[emb]);
        assert_eq!(tape.value(q), tape.value(direct));
    }

    #[test]
    fn zero_responder_says_yes_at_half() {
        let mut ap = ABotParameters::new(&table(), 3, 1);
        for name in ["a.l1_w", "a.l1_b", "a.l2_w", "a.l2_b"] {
            ap.tensor_mut(name).unwrap().data.fill(0.0);
        }
        let mut tape = Tape::new();
        let av = ap.bind(&mut tape, &ap.params.snapshot());
        let e = tape.constant_vec(vec![0.3; 6]);
        let q = tape.constant_vec(vec![-0.7; 6]);
        let r = respond(&mut tape, &av, e, q, BitMode::Threshold).values(&tape);
        assert_eq!(
            r,
            Response {
                bit: 1,
                confidence: 0.5
            }
        );
    }

    #[test]
    fn straight_through_gradient_is_identity() {
        let ap = ABotParameters::new(&table(), 3, 4);
        let mut tape = Tape::new();
        let av = ap.bind(&mut tape, &ap.params.snapshot());
        let e = tape.constant_vec(vec![0.1; 6]);
        let q = tape.constant_vec(vec![0.2; 6]);
        let r = respond(&mut tape, &av, e, q, BitMode::Threshold);
        let loss = tape.scale(r.bit, 2.5);
        let g = tape.backward(loss);
        assert_eq!(g.get(r.bit).unwrap(), &[2.5]);
        assert_eq!(g.get(r.confidence).unwrap(), &[2.5]);
        let l1 = g.get(av.l1_w).unwrap();
        assert!(l1.iter().any(|x| *x != 0.0));
    }

    #[test]
    fn sampled_bits_are_seeded() {
        let ap = ABotParameters::new(&table(), 3, 4);
        let mut tape = Tape::new();
        let av = ap.bind(&mut tape, &ap.params.snapshot());
        let e = tape.constant_vec(vec![0.1; 6]);
        let q = tape.constant_vec(vec![0.2; 6]);
        let bits: Vec<u8> = (0..64)
            .map(|s| respond(&mut tape, &av, e, q, BitMode::Sampled(s)).values(&tape).bit)
            .collect();
        let again: Vec<u8> = (0..64)
            .map(|s| respond(&mut tape, &av, e, q, BitMode::Sampled(s)).values(&tape).bit)
            .collect();
        assert_eq!(bits, again);
        assert!(bits.contains(&0) && bits.contains(&1));
    }
}

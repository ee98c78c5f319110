//! Recurrent building blocks shared by both agents.

use rand::Rng;

use crate::params::{Matrix, ParamSet};
use crate::tape::{Tape, Var};

/// Parameter slots of one LSTM direction. Gate order is input, forget,
/// candidate, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmSlots {
    pub w_in: usize,
    pub w_hid: usize,
    pub bias: usize,
    pub hidden: usize,
}

impl LstmSlots {
    /// Registers an LSTM with `input` features and `hidden` units under
    /// `prefix`. Weights are uniform in `±1/sqrt(hidden)`; the forget-gate
    /// bias starts at 1.
    pub fn register(params: &mut ParamSet, prefix: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f32).sqrt();
        let w_in = params.push(format!("{prefix}.w_in"), Matrix::uniform(4 * hidden, input, bound, rng));
        let w_hid = params.push(
            format!("{prefix}.w_hid"),
            Matrix::uniform(4 * hidden, hidden, bound, rng),
        );
        let mut b = Matrix::zeros(4 * hidden, 1);
        b.data[hidden..2 * hidden].fill(1.0);
        let bias = params.push(format!("{prefix}.bias"), b);
        Self {
            w_in,
            w_hid,
            bias,
            hidden,
        }
    }

    pub fn vars(&self, vars: &[Var]) -> LstmVars {
        LstmVars {
            w_in: vars[self.w_in],
            w_hid: vars[self.w_hid],
            bias: vars[self.bias],
            hidden: self.hidden,
        }
    }
}

/// An LSTM direction bound to a tape.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_in: Var,
    pub w_hid: Var,
    pub bias: Var,
    pub hidden: usize,
}

impl LstmVars {
    /// One step; returns the new `(h, c)`.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> (Var, Var) {
        let n = self.hidden;
        let a = tape.matvec(self.w_in, x);
        let b = tape.matvec(self.w_hid, h);
        let pre = tape.add(a, b);
        let pre = tape.add(pre, self.bias);
        let i = tape.slice(pre, 0, n);
        let i = tape.sigmoid(i);
        let f = tape.slice(pre, n, n);
        let f = tape.sigmoid(f);
        let g = tape.slice(pre, 2 * n, n);
        let g = tape.tanh(g);
        let o = tape.slice(pre, 3 * n, n);
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, c);
        let write = tape.mul(i, g);
        let c_next = tape.add(keep, write);
        let squashed = tape.tanh(c_next);
        let h_next = tape.mul(o, squashed);
        (h_next, c_next)
    }

    /// Final hidden state after running over `inputs` in order from zero
    /// initial state.
    pub fn run<'a>(&self, tape: &mut Tape, inputs: impl Iterator<Item = &'a Var>) -> Var {
        let mut h = tape.constant_vec(vec![0.0; self.hidden]);
        let mut c = tape.constant_vec(vec![0.0; self.hidden]);
        for x in inputs {
            (h, c) = self.step(tape, *x, h, c);
        }
        h
    }
}

/// Bidirectional encoding: the final forward state concatenated with the
/// final backward state (the backward pass ends on the first input).
pub fn bidirectional_encode(tape: &mut Tape, fwd: &LstmVars, bwd: &LstmVars, inputs: &[Var]) -> Var {
    assert!(!inputs.is_empty(), "cannot encode an empty sequence");
    let hf = fwd.run(tape, inputs.iter());
    let hb = bwd.run(tape, inputs.iter().rev());
    tape.concat(&[hf, hb])
}

/// Registers a `rows x cols` dense map uniform in `±1/sqrt(cols)`.
pub fn register_linear(params: &mut ParamSet, name: &str, rows: usize, cols: usize, rng: &mut impl Rng) -> usize {
    let bound = 1.0 / (cols as f32).sqrt();
    params.push(name, Matrix::uniform(rows, cols, bound, rng))
}

/// Registers an embedding matrix initialized from a vocabulary table.
pub fn register_embedding(params: &mut ParamSet, name: &str, table: &crate::embeddings::EmbeddingTable) -> usize {
    params.push(
        name,
        Matrix {
            rows: table.len(),
            cols: table.dim(),
            data: table.vectors().to_vec(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::bind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lstm_state_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::new();
        let slots = LstmSlots::register(&mut p, "l", 3, 4, &mut rng);
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &p.snapshot());
        let lstm = slots.vars(&vars);
        let xs: Vec<Var> = (0..20).map(|i| tape.constant_vec(vec![i as f64, -1.0, 2.0])).collect();
        let h = lstm.run(&mut tape, xs.iter());
        assert_eq!(tape.value(h).len(), 4);
        assert!(tape.value(h).iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn bidirectional_reads_both_ends() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ParamSet::new();
        let f = LstmSlots::register(&mut p, "f", 2, 3, &mut rng);
        let b = LstmSlots::register(&mut p, "b", 2, 3, &mut rng);
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &p.snapshot());
        let (fv, bv) = (f.vars(&vars), b.vars(&vars));
        let x1 = tape.constant_vec(vec![1.0, 0.0]);
        let x2 = tape.constant_vec(vec![0.0, 1.0]);
        let e12 = bidirectional_encode(&mut tape, &fv, &bv, &[x1, x2]);
        let e21 = bidirectional_encode(&mut tape, &fv, &bv, &[x2, x1]);
        assert_eq!(tape.value(e12).len(), 6);
        assert_ne!(tape.value(e12), tape.value(e21));
    }
}

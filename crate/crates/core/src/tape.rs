//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation of one forward pass. Values are
//! row-major matrices; vectors are stored as `n x 1`. Calling
//! [`Tape::backward`] on a scalar node returns gradients for every node that
//! depends on a leaf created with [`Tape::param`] or [`Tape::shared_param`].
//!
//! One tape is built per episode. Parameter values are shared between tapes
//! through `Arc`, so concurrent episodes over one parameter snapshot do not
//! copy weights.

use std::sync::Arc;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Dense values shared between a parameter snapshot and the tapes reading it.
#[derive(Clone, Debug)]
pub struct Shared {
    pub rows: usize,
    pub cols: usize,
    pub data: Arc<Vec<f64>>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatVec(Var, Var),
    VecMat(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    ScalarMul(Var, Var),
    DivScalar(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Ln(Var, f64),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Row(Var, usize),
    StackRows(Vec<Var>),
    RowScale(Var, Var),
    Sum(Var),
    Dot(Var, Var),
    Element(Var, usize),
    PassThrough(Var),
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Arc<Vec<f64>>,
    op: Op,
    tracked: bool,
}

/// Operation recorder for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
}

impl Grads {
    /// Gradient of the loss with respect to `v`, or `None` when `v` does not
    /// influence the loss (or is untracked).
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for o in &mut out {
        *o /= total;
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, tracked: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value: Arc::new(value),
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.value(v).len(), 1);
        self.value(v)[0]
    }

    /// Untracked input.
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        assert_eq!(rows * cols, data.len(), "constant shape mismatch");
        self.push(rows, cols, data, Op::Leaf, false)
    }

    pub fn constant_vec(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.constant(n, 1, data)
    }

    /// Tracked input whose gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        assert_eq!(rows * cols, data.len(), "param shape mismatch");
        self.push(rows, cols, data, Op::Leaf, true)
    }

    /// Tracked input backed by shared storage.
    pub fn shared_param(&mut self, shared: &Shared) -> Var {
        self.nodes.push(Node {
            rows: shared.rows,
            cols: shared.cols,
            value: Arc::clone(&shared.data),
            op: Op::Leaf,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// `W x` for `W: m x n`, `x: n`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (m, n) = self.shape(w);
        assert_eq!(self.value(x).len(), n, "matvec: width mismatch");
        let wv = self.value(w);
        let xv = self.value(x);
        let out: Vec<f64> = wv
            .chunks_exact(n)
            .map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        let t = self.tracked(&[w, x]);
        self.push(m, 1, out, Op::MatVec(w, x), t)
    }

    /// `x^T M` for `x: m`, `M: m x n`; returns a length-`n` vector.
    pub fn vecmat(&mut self, x: Var, m: Var) -> Var {
        let (rows, cols) = self.shape(m);
        assert_eq!(self.value(x).len(), rows, "vecmat: height mismatch");
        let mut out = vec![0.0; cols];
        let xv = self.value(x);
        let mv = self.value(m);
        for (xi, row) in xv.iter().zip(mv.chunks_exact(cols)) {
            if *xi == 0.0 {
                continue;
            }
            for (o, r) in out.iter_mut().zip(row) {
                *o += xi * r;
            }
        }
        let t = self.tracked(&[x, m]);
        self.push(cols, 1, out, Op::VecMat(x, m), t)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.value(a).len(), self.value(b).len(), "elementwise shape mismatch");
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let t = self.tracked(&[a, b]);
        self.push(r, c, out, op, t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        let t = self.tracked(&[a]);
        self.push(r, c, out, op, t)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| k * x, Op::Scale(a, k))
    }

    /// `a + k` elementwise.
    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| x + k, Op::Offset(a))
    }

    /// `1 - a` elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.offset(neg, 1.0)
    }

    /// Scalar node `s` times tensor `a`.
    pub fn scalar_mul(&mut self, s: Var, a: Var) -> Var {
        let k = self.scalar(s);
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| k * x).collect();
        let t = self.tracked(&[s, a]);
        self.push(r, c, out, Op::ScalarMul(s, a), t)
    }

    /// Tensor `a` divided by scalar node `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar(s);
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x / k).collect();
        let t = self.tracked(&[s, a]);
        self.push(r, c, out, Op::DivScalar(a, s), t)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    /// Natural log with inputs clamped below at `floor`. Clamped entries
    /// receive zero gradient.
    pub fn ln_clamped(&mut self, a: Var, floor: f64) -> Var {
        self.map(a, |x| x.max(floor).ln(), Op::Ln(a, floor))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = softmax(self.value(a));
        let t = self.tracked(&[a]);
        self.push(r, c, out, Op::Softmax(a), t)
    }

    /// Concatenate vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(self.value(*p));
        }
        let n = out.len();
        let t = self.tracked(parts);
        self.push(n, 1, out, Op::Concat(parts.to_vec()), t)
    }

    /// Contiguous sub-vector `a[start..start + len]`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a)[start..start + len].to_vec();
        let t = self.tracked(&[a]);
        self.push(len, 1, out, Op::Slice(a, start), t)
    }

    /// Row `i` of matrix `m` as a vector.
    pub fn row(&mut self, m: Var, i: usize) -> Var {
        let (rows, cols) = self.shape(m);
        assert!(i < rows, "row index {i} out of range {rows}");
        let out = self.value(m)[i * cols..(i + 1) * cols].to_vec();
        let t = self.tracked(&[m]);
        self.push(cols, 1, out, Op::Row(m, i), t)
    }

    /// Stack equal-length vectors into a matrix, one per row.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack_rows: no rows");
        let cols = self.value(rows[0]).len();
        let mut out = Vec::with_capacity(cols * rows.len());
        for r in rows {
            assert_eq!(self.value(*r).len(), cols, "stack_rows: ragged rows");
            out.extend_from_slice(self.value(*r));
        }
        let t = self.tracked(rows);
        self.push(rows.len(), cols, out, Op::StackRows(rows.to_vec()), t)
    }

    /// Scale row `i` of `m` by `s[i]`.
    pub fn row_scale(&mut self, m: Var, s: Var) -> Var {
        let (rows, cols) = self.shape(m);
        assert_eq!(self.value(s).len(), rows, "row_scale: length mismatch");
        let sv = self.value(s);
        let out = self
            .value(m)
            .chunks_exact(cols)
            .zip(sv)
            .flat_map(|(row, k)| row.iter().map(move |x| x * k))
            .collect();
        let t = self.tracked(&[m, s]);
        self.push(rows, cols, out, Op::RowScale(m, s), t)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).iter().sum();
        let t = self.tracked(&[a]);
        self.push(1, 1, vec![total], Op::Sum(a), t)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).len(), self.value(b).len(), "dot: length mismatch");
        let total = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        let t = self.tracked(&[a, b]);
        self.push(1, 1, vec![total], Op::Dot(a, b), t)
    }

    /// Element `i` of `a` as a scalar node.
    pub fn element(&mut self, a: Var, i: usize) -> Var {
        let x = self.value(a)[i];
        let t = self.tracked(&[a]);
        self.push(1, 1, vec![x], Op::Element(a, i), t)
    }

    /// Straight-through node: the forward value is `forward`, while the
    /// backward pass routes the incoming gradient unchanged into `surrogate`.
    pub fn straight_through(&mut self, forward: Vec<f64>, surrogate: Var) -> Var {
        let (r, c) = self.shape(surrogate);
        assert_eq!(forward.len(), r * c, "straight_through: shape mismatch");
        let t = self.tracked(&[surrogate]);
        self.push(r, c, forward, Op::PassThrough(surrogate), t)
    }

    /// Reverse pass from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { grads }
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        // Accumulates `f(i)` into the gradient buffer of `v` when `v` is tracked.
        fn acc(tape: &Tape, grads: &mut [Option<Vec<f64>>], v: Var, f: impl Fn(&mut [f64])) {
            if !tape.nodes[v.0].tracked {
                return;
            }
            let len = tape.nodes[v.0].value.len();
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(buf);
        }

        match &node.op {
            Op::Leaf => {}
            Op::MatVec(w, x) => {
                let (_, n) = self.shape(*w);
                let xv = self.value(*x);
                let wv = self.value(*w);
                acc(self, grads, *w, |buf| {
                    for (gi, row) in g.iter().zip(buf.chunks_exact_mut(n)) {
                        if *gi == 0.0 {
                            continue;
                        }
                        for (b, xj) in row.iter_mut().zip(xv) {
                            *b += gi * xj;
                        }
                    }
                });
                acc(self, grads, *x, |buf| {
                    for (gi, row) in g.iter().zip(wv.chunks_exact(n)) {
                        if *gi == 0.0 {
                            continue;
                        }
                        for (b, wij) in buf.iter_mut().zip(row) {
                            *b += gi * wij;
                        }
                    }
                });
            }
            Op::VecMat(x, m) => {
                let (_, cols) = self.shape(*m);
                let xv = self.value(*x);
                let mv = self.value(*m);
                acc(self, grads, *x, |buf| {
                    for (b, row) in buf.iter_mut().zip(mv.chunks_exact(cols)) {
                        *b += row.iter().zip(g).map(|(r, gj)| r * gj).sum::<f64>();
                    }
                });
                acc(self, grads, *m, |buf| {
                    for (xi, row) in xv.iter().zip(buf.chunks_exact_mut(cols)) {
                        if *xi == 0.0 {
                            continue;
                        }
                        for (b, gj) in row.iter_mut().zip(g) {
                            *b += xi * gj;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    acc(self, grads, v, |buf| buf.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                }
            }
            Op::Sub(a, b) => {
                acc(self, grads, *a, |buf| buf.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(self, grads, *b, |buf| buf.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                acc(self, grads, *a, |buf| {
                    for ((x, gi), bi) in buf.iter_mut().zip(g).zip(bv.iter()) {
                        *x += gi * bi;
                    }
                });
                acc(self, grads, *b, |buf| {
                    for ((x, gi), ai) in buf.iter_mut().zip(g).zip(av.iter()) {
                        *x += gi * ai;
                    }
                });
            }
            Op::Scale(a, k) => {
                acc(self, grads, *a, |buf| {
                    buf.iter_mut().zip(g).for_each(|(x, y)| *x += k * y)
                });
            }
            Op::Offset(a) | Op::PassThrough(a) => {
                acc(self, grads, *a, |buf| buf.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::ScalarMul(s, a) => {
                let k = self.scalar(*s);
                let av = self.value(*a);
                acc(self, grads, *s, |buf| {
                    buf[0] += av.iter().zip(g).map(|(x, y)| x * y).sum::<f64>();
                });
                acc(self, grads, *a, |buf| {
                    buf.iter_mut().zip(g).for_each(|(x, y)| *x += k * y)
                });
            }
            Op::DivScalar(a, s) => {
                let k = self.scalar(*s);
                let out = &node.value;
                acc(self, grads, *a, |buf| {
                    buf.iter_mut().zip(g).for_each(|(x, y)| *x += y / k)
                });
                acc(self, grads, *s, |buf| {
                    buf[0] -= out.iter().zip(g).map(|(o, y)| o * y).sum::<f64>() / k;
                });
            }
            Op::Tanh(a) => {
                let out = &node.value;
                acc(self, grads, *a, |buf| {
                    for ((x, gi), o) in buf.iter_mut().zip(g).zip(out.iter()) {
                        *x += gi * (1.0 - o * o);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let out = &node.value;
                acc(self, grads, *a, |buf| {
                    for ((x, gi), o) in buf.iter_mut().zip(g).zip(out.iter()) {
                        *x += gi * o * (1.0 - o);
                    }
                });
            }
            Op::Ln(a, floor) => {
                let av = self.value(*a);
                acc(self, grads, *a, |buf| {
                    for ((x, gi), ai) in buf.iter_mut().zip(g).zip(av.iter()) {
                        if *ai > *floor {
                            *x += gi / ai;
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let out = &node.value;
                let inner: f64 = out.iter().zip(g).map(|(o, gi)| o * gi).sum();
                acc(self, grads, *a, |buf| {
                    for ((x, gi), o) in buf.iter_mut().zip(g).zip(out.iter()) {
                        *x += o * (gi - inner);
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    let seg = &g[offset..offset + len];
                    acc(self, grads, *p, |buf| {
                        buf.iter_mut().zip(seg).for_each(|(x, y)| *x += y)
                    });
                    offset += len;
                }
            }
            Op::Slice(a, start) => {
                acc(self, grads, *a, |buf| {
                    buf[*start..*start + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(x, y)| *x += y)
                });
            }
            Op::Row(m, i) => {
                let cols = g.len();
                acc(self, grads, *m, |buf| {
                    buf[i * cols..(i + 1) * cols]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(x, y)| *x += y)
                });
            }
            Op::StackRows(rows) => {
                let cols = node.cols;
                for (i, r) in rows.iter().enumerate() {
                    let seg = &g[i * cols..(i + 1) * cols];
                    acc(self, grads, *r, |buf| {
                        buf.iter_mut().zip(seg).for_each(|(x, y)| *x += y)
                    });
                }
            }
            Op::RowScale(m, s) => {
                let cols = node.cols;
                let mv = self.value(*m);
                let sv = self.value(*s);
                acc(self, grads, *m, |buf| {
                    for ((brow, grow), k) in buf.chunks_exact_mut(cols).zip(g.chunks_exact(cols)).zip(sv.iter()) {
                        brow.iter_mut().zip(grow).for_each(|(x, y)| *x += k * y);
                    }
                });
                acc(self, grads, *s, |buf| {
                    for ((b, grow), mrow) in buf.iter_mut().zip(g.chunks_exact(cols)).zip(mv.chunks_exact(cols)) {
                        *b += grow.iter().zip(mrow).map(|(x, y)| x * y).sum::<f64>();
                    }
                });
            }
            Op::Sum(a) => {
                acc(self, grads, *a, |buf| buf.iter_mut().for_each(|x| *x += g[0]));
            }
            Op::Dot(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                acc(self, grads, *a, |buf| {
                    buf.iter_mut().zip(bv.iter()).for_each(|(x, y)| *x += g[0] * y)
                });
                acc(self, grads, *b, |buf| {
                    buf.iter_mut().zip(av.iter()).for_each(|(x, y)| *x += g[0] * y)
                });
            }
            Op::Element(a, i) => {
                acc(self, grads, *a, |buf| buf[*i] += g[0]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central differences of `f` at `x`.
    fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let eps = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut up = x.to_vec();
                let mut dn = x.to_vec();
                up[i] += eps;
                dn[i] -= eps;
                (f(&up) - f(&dn)) / (2.0 * eps)
            })
            .collect()
    }

    fn check(x: Vec<f64>, build: impl Fn(&mut Tape, Var) -> Var) {
        let mut tape = Tape::new();
        let v = tape.param(x.len(), 1, x.clone());
        let out = build(&mut tape, v);
        let grads = tape.backward(out);
        let analytic = grads.get(v).unwrap().to_vec();
        let numeric = numeric_grad(&x, |xs| {
            let mut t = Tape::new();
            let v = t.param(xs.len(), 1, xs.to_vec());
            let o = build(&mut t, v);
            t.scalar(o)
        });
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn matvec_vecmat_gradients() {
        check(vec![0.3, -0.2, 0.5, 0.1, 0.7, -0.4], |t, v| {
            let w = t.param(2, 3, vec![0.5, -1.0, 0.2, 0.3, 0.8, -0.6]);
            let x = t.slice(v, 0, 3);
            let y = t.matvec(w, x);
            let z = t.tanh(y);
            let m = t.stack_rows(&[v, v]);
            let r = t.vecmat(z, m);
            let s = t.softmax(r);
            let e = t.element(s, 2);
            t.ln_clamped(e, 1e-12)
        });
    }

    #[test]
    fn scalar_ops_gradients() {
        check(vec![0.4, 0.1, 0.3, 0.2], |t, v| {
            let s = t.sum(v);
            let w = t.div_scalar(v, s);
            let k = t.element(v, 0);
            let sig = t.sigmoid(k);
            let a = t.scalar_mul(sig, w);
            let b = t.one_minus(a);
            let m = t.stack_rows(&[v, b]);
            let rs_scale = t.slice(b, 0, 2);
            let rs = t.row_scale(m, rs_scale);
            let flat = t.row(rs, 1);
            let p = t.mul(flat, v);
            let d = t.dot(p, b);
            let c = t.concat(&[d, k]);
            let q = t.sub(c, c);
            let q2 = t.add(q, c);
            let out = t.sum(q2);
            t.scale(out, 1.5)
        });
    }

    #[test]
    fn pass_through_routes_gradient_to_surrogate() {
        let mut tape = Tape::new();
        let x = tape.param(2, 1, vec![0.2, 0.9]);
        let s = tape.softmax(x);
        let hard = tape.straight_through(vec![0.0, 1.0], s);
        assert_eq!(tape.value(hard), &[0.0, 1.0]);
        let w = tape.constant_vec(vec![3.0, -1.0]);
        let out = tape.dot(hard, w);
        let grads = tape.backward(out);
        assert_eq!(grads.get(hard).unwrap(), &[3.0, -1.0]);
        assert_eq!(grads.get(s).unwrap(), &[3.0, -1.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant_vec(vec![1.0, 2.0]);
        let p = tape.param(2, 1, vec![0.5, 0.5]);
        let d = tape.dot(c, p);
        let g = tape.backward(d);
        assert!(g.get(c).is_none());
        assert_eq!(g.get(p).unwrap(), &[1.0, 2.0]);
    }
}

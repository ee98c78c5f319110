//! Named parameter tensors, the Adam optimizer, and gradient utilities.
//!
//! Parameters persist as `f32` (that is what checkpoints store); every
//! forward and backward pass runs in `f64` on a [`Tape`].

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::tape::{Shared, Tape, Var};

/// Row-major `f32` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Entries drawn uniformly from `[-bound, bound]`.
    pub fn uniform(rows: usize, cols: usize, bound: f32, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self { rows, cols, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shared(&self) -> Shared {
        Shared {
            rows: self.rows,
            cols: self.cols,
            data: Arc::new(self.data.iter().map(|&x| f64::from(x)).collect()),
        }
    }
}

/// Ordered collection of named tensors owned by one agent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its slot.
    pub fn push(&mut self, name: impl Into<String>, m: Matrix) -> usize {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(m);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensor(&self, slot: usize) -> &Matrix {
        &self.tensors[slot]
    }

    pub fn tensor_mut(&mut self, slot: usize) -> &mut Matrix {
        &mut self.tensors[slot]
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Shape-compatible copy with every entry zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|m| Matrix::zeros(m.rows, m.cols)).collect(),
        }
    }

    /// Shared `f64` views for binding onto many tapes.
    pub fn snapshot(&self) -> Vec<Shared> {
        self.tensors.iter().map(Matrix::shared).collect()
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, m) in self.iter() {
            h.update(name.as_bytes());
            h.update((m.rows as u64).to_le_bytes());
            h.update((m.cols as u64).to_le_bytes());
            for v in &m.data {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|m| m.data.iter().all(|v| v.is_finite()))
    }
}

/// Binds a snapshot onto a tape; the returned vars follow slot order.
pub fn bind(tape: &mut Tape, snapshot: &[Shared]) -> Vec<Var> {
    snapshot.iter().map(|s| tape.shared_param(s)).collect()
}

/// Dense `f64` gradients, one buffer per parameter slot.
#[derive(Clone, Debug, PartialEq)]
pub struct GradSet {
    pub tensors: Vec<Vec<f64>>,
}

impl GradSet {
    pub fn zeros_for(params: &ParamSet) -> Self {
        Self {
            tensors: params.tensors().iter().map(|m| vec![0.0; m.len()]).collect(),
        }
    }

    /// Collects gradients for `vars` (slot order) from a backward pass.
    pub fn collect(params: &ParamSet, grads: &mut crate::tape::Grads, vars: &[Var]) -> Self {
        let tensors = vars
            .iter()
            .zip(params.tensors())
            .map(|(v, m)| grads.take(*v).unwrap_or_else(|| vec![0.0; m.len()]))
            .collect();
        Self { tensors }
    }

    pub fn add_assign(&mut self, other: &GradSet) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in &mut self.tensors {
            for x in t.iter_mut() {
                *x *= k;
            }
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors.iter().flatten().map(|x| x * x).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|x| x.is_finite())
    }
}

/// Rescales all gradient sets jointly so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(sets: &mut [&mut GradSet], max_norm: f64) -> f64 {
    let norm = sets.iter().map(|g| g.sq_norm()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in sets.iter_mut() {
            g.scale(k);
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates for one [`ParamSet`]. Moments are stored as `f32`
/// so checkpointed optimizer state round-trips exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub steps: u64,
    pub first: ParamSet,
    pub second: ParamSet,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        Self {
            config,
            steps: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &GradSet) {
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for slot in 0..params.len() {
            let g = &grads.tensors[slot];
            let m = &mut self.first.tensor_mut(slot).data;
            let v = &mut self.second.tensor_mut(slot).data;
            let p = &mut params.tensor_mut(slot).data;
            for i in 0..p.len() {
                let mi = c.beta1 * f64::from(m[i]) + (1.0 - c.beta1) * g[i];
                let vi = c.beta2 * f64::from(v[i]) + (1.0 - c.beta2) * g[i] * g[i];
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = c.learning_rate * (mi / bias1) / ((vi / bias2).sqrt() + c.epsilon);
                p[i] = (f64::from(p[i]) - update) as f32;
            }
        }
    }
}

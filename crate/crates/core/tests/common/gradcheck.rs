use logq_core::qbot::{self, QBotVars};
use logq_core::tape::{Tape, Var};
use logq_core::Agents;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::toy_agents;

pub const E: usize = 4;
const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

struct Input {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn random_inputs(seed: u64) -> Vec<Input> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |rows: usize, cols: usize, scale: f64| Input {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect(),
    };
    vec![
        make(E, 1, 1.0), // h
        make(4, E, 1.0), // memory
        make(1, 1, 2.0), // response logit
        make(E, E, 0.8), // w_a
        make(E, E, 0.8), // w_h
        make(E, E, 0.8), // w_c
        make(E, 1, 0.5), // b_h
    ]
}

/// One round of read, adjust, gate and update, followed by the final read,
/// reduced to a scalar. The answer is a soft value in (0, 1).
fn composed_loss(tape: &mut Tape, base: &QBotVars, inputs: &[Var], target: usize, gamma: f64) -> Var {
    let mut q = base.clone();
    q.w_a = inputs[3];
    q.w_h = inputs[4];
    q.w_c = inputs[5];
    q.b_h = inputs[6];
    let (h, memory) = (inputs[0], inputs[1]);
    let response = tape.sigmoid(inputs[2]);

    let work = qbot::memory_read(tape, h, memory);
    let adjusted = qbot::adjust_combined(tape, &q, work.combined, response);
    let gated = qbot::gate_sentences(tape, memory, work.attention, response, gamma).unwrap();
    let h2 = qbot::update_hidden(tape, &q, h, adjusted);
    let last = qbot::memory_read(tape, h2, gated);

    let p = tape.element(last.attention, target);
    let nll = tape.ln_clamped(p, 1e-300);
    let nll = tape.scale(nll, -1.0);
    let extra = tape.sum(adjusted);
    let extra = tape.scale(extra, 0.3);
    tape.add(nll, extra)
}

fn evaluate(agents: &Agents, inputs: &[Input], target: usize, gamma: f64) -> (f64, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let base = agents.qbot.bind(&mut tape, &agents.qbot.params.snapshot());
    let vars: Vec<Var> = inputs
        .iter()
        .map(|i| tape.param(i.rows, i.cols, i.data.clone()))
        .collect();
    let loss = composed_loss(&mut tape, &base, &vars, target, gamma);
    let grads = tape.backward(loss);
    let g = vars
        .iter()
        .zip(inputs)
        .map(|(v, i)| {
            grads
                .get(*v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; i.data.len()])
        })
        .collect();
    (tape.scalar(loss), g)
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference
/// gradients over every input entry, for several seeds and offsets.
#[allow(clippy::needless_range_loop)]
pub fn worst_relative_error() -> f64 {
    let (_, agents, _) = toy_agents(6, 3, E / 2, 1);
    let mut worst: f64 = 0.0;
    for (seed, gamma) in [(1u64, 1.0), (2, 0.25), (3, 0.0), (4, 1.0)] {
        let mut inputs = random_inputs(seed);
        let target = seed as usize % 4;
        let (_, analytic) = evaluate(&agents, &inputs, target, gamma);
        for k in 0..inputs.len() {
            for j in 0..inputs[k].data.len() {
                let x = inputs[k].data[j];
                inputs[k].data[j] = x + STEP;
                let (up, _) = evaluate(&agents, &inputs, target, gamma);
                inputs[k].data[j] = x - STEP;
                let (down, _) = evaluate(&agents, &inputs, target, gamma);
                inputs[k].data[j] = x;
                let numeric = (up - down) / (2.0 * STEP);
                worst = worst.max(relative_error(analytic[k][j], numeric));
            }
        }
    }
    worst
}

/// Names of parameter tensors that got an all-zero gradient from one batch,
/// under each loss regime.
pub fn tensors_without_gradient() -> Vec<String> {
    use logq_core::{LossRegime, TrainConfig, Trainer};
    let (table, agents, mut cfg) = toy_agents(30, 6, 4, 21);
    // <sos> starts as a zero vector, so decoder input weights only see a
    // gradient from the second token on.
    cfg.question_len = 2;
    let sets = super::game_sets(&super::toy_sets(&table, 16, 5, 22), &table);
    let mut missing = Vec::new();
    for loss in [LossRegime::Game, LossRegime::SwGame] {
        let config = TrainConfig {
            loss,
            batch_size: 16,
            ..Default::default()
        };
        let trainer = Trainer::new(agents.clone(), cfg.clone(), config);
        let batch = trainer.schedule(0, sets.len());
        let (_, gq, ga) = trainer.batch_gradients(&batch, &sets).unwrap();
        for (params, grads) in [(&agents.qbot.params, &gq), (&agents.abot.params, &ga)] {
            for (name, g) in params.names().iter().zip(&grads.tensors) {
                if g.iter().all(|x| *x == 0.0) {
                    missing.push(format!("{name} ({})", loss.name()));
                }
            }
        }
    }
    missing
}

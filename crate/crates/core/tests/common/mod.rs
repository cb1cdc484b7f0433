//! Helpers shared by the super-graph and acceptance suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tinylight::nn::{ParamId, Tape, Tensor, Var};
use tinylight::supergraph::{SuperGraph, SuperGraphSpec};

/// Three features, two blocks per hidden layer, random θ, biases and logits.
pub fn random_small(seed: u64) -> SuperGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SuperGraphSpec {
        input_dims: vec![3, 2, 4],
        hidden1_dims: vec![4, 5],
        hidden2_dims: vec![3, 4],
        outputs: 3,
    };
    let scale = vec![0.5, 1.0, 0.25];
    let mut sg = SuperGraph::new(spec, scale, &mut rng).unwrap();
    let ids: Vec<ParamId> = sg.store.ids().collect();
    for id in ids {
        for v in &mut sg.store.get_mut(id).data {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    sg
}

/// A batch of raw per-feature inputs with matching actions and targets.
pub struct Batch {
    pub inputs: Vec<Tensor>,
    pub actions: Vec<usize>,
    pub targets: Vec<f64>,
}

pub fn random_batch(sg: &SuperGraph, rows: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let inputs = sg
        .spec
        .input_dims
        .iter()
        .map(|&d| {
            let data = (0..rows * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            Tensor::from_vec(rows, d, data).unwrap()
        })
        .collect();
    Batch {
        inputs,
        actions: (0..rows)
            .map(|_| rng.gen_range(0..sg.spec.outputs))
            .collect(),
        targets: (0..rows).map(|_| rng.gen_range(-3.0..3.0)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composite {
    Td,
    Entropy,
    Combined,
}

pub fn loss_value(sg: &SuperGraph, b: &Batch, which: Composite, beta: f64) -> f64 {
    let mut tape = Tape::new(&sg.store);
    let scaled = sg.scale_inputs(b.inputs.clone()).unwrap();
    let vars: Vec<Var> = scaled.into_iter().map(|t| tape.input(t)).collect();
    let l = sg
        .record_losses(&mut tape, &vars, &b.actions, &b.targets, beta)
        .unwrap();
    let v = match which {
        Composite::Td => l.td,
        Composite::Entropy => l.entropy,
        Composite::Combined => l.combined,
    };
    tape.value(v).item()
}

/// Largest relative error between analytic gradients and a fourth-order
/// central difference over every scalar of the parameters selected by `wants`.
/// Gradients near 1e-6 make a two-point difference noise-bound, while steps
/// of 1e-4 start straddling ReLU kinks; 3e-5 sits between the two.
pub fn max_fd_error(
    sg: &SuperGraph,
    b: &Batch,
    which: Composite,
    beta: f64,
    wants: &dyn Fn(ParamId) -> bool,
) -> f64 {
    const H: f64 = 3e-5;
    let grads = {
        let mut tape = Tape::new(&sg.store);
        let scaled = sg.scale_inputs(b.inputs.clone()).unwrap();
        let vars: Vec<Var> = scaled.into_iter().map(|t| tape.input(t)).collect();
        let l = sg
            .record_losses(&mut tape, &vars, &b.actions, &b.targets, beta)
            .unwrap();
        let v = match which {
            Composite::Td => l.td,
            Composite::Entropy => l.entropy,
            Composite::Combined => l.combined,
        };
        tape.backward(v, wants).unwrap()
    };
    let mut probe = sg.clone();
    let mut worst: f64 = 0.0;
    for id in sg.store.ids().filter(|&id| wants(id)) {
        for k in 0..sg.store.get(id).data.len() {
            let x0 = sg.store.get(id).data[k];
            let mut at = |offset: f64| {
                probe.store.get_mut(id).data[k] = x0 + offset;
                loss_value(&probe, b, which, beta)
            };
            let (up2, up, down, down2) = (at(2.0 * H), at(H), at(-H), at(-2.0 * H));
            probe.store.get_mut(id).data[k] = x0;
            let numeric = (8.0 * (up - down) - (up2 - down2)) / (12.0 * H);
            let analytic = grads.get(id).map_or(0.0, |g| g.data[k]);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

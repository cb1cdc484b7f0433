use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentError, State};
use crate::nn::{self, Linear, NnError, ParamId, ParamStore, Tape, Tensor, Var};
use crate::sim::{IntersectionId, Simulation};
use crate::supergraph::{SubGraph, SuperGraph};

/// A Q-value network the DQN trainer can drive.
pub trait QNetwork: Clone {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn input_dims(&self) -> Vec<usize>;
    /// Raw per-input batches (`B × dim`) to network inputs.
    fn scale_inputs(&self, raw: Vec<Tensor>) -> Result<Vec<Tensor>, AgentError>;
    fn forward(&self, tape: &mut Tape<'_>, inputs: &[Var]) -> Result<Var, AgentError>;
    fn q_values(&self, state: &State) -> Result<Vec<f64>, AgentError>;

    /// True for architecture weights, which only the α-step updates.
    fn is_alpha(&self, _id: ParamId) -> bool {
        false
    }

    /// `Σ_I H(α_I)` on the tape, for networks with architecture weights.
    fn entropy(&self, _tape: &mut Tape<'_>) -> Option<Result<Var, AgentError>> {
        None
    }

    /// Stacks states into one tensor per input.
    fn batch(&self, states: &[&State]) -> Result<Vec<Tensor>, AgentError> {
        let dims = self.input_dims();
        let raw = dims
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                let mut data = Vec::with_capacity(states.len() * d);
                for s in states {
                    data.extend_from_slice(&s[k]);
                }
                Tensor::from_vec(states.len(), d, data)
            })
            .collect::<Result<Vec<Tensor>, NnError>>()?;
        self.scale_inputs(raw)
    }
}

impl QNetwork for SuperGraph {
    fn params(&self) -> &ParamStore {
        &self.store
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn input_dims(&self) -> Vec<usize> {
        self.spec.input_dims.clone()
    }
    fn scale_inputs(&self, raw: Vec<Tensor>) -> Result<Vec<Tensor>, AgentError> {
        Ok(SuperGraph::scale_inputs(self, raw)?)
    }
    fn forward(&self, tape: &mut Tape<'_>, inputs: &[Var]) -> Result<Var, AgentError> {
        Ok(self.forward_tape(tape, inputs)?)
    }
    fn q_values(&self, state: &State) -> Result<Vec<f64>, AgentError> {
        Ok(SuperGraph::q_values(self, state)?)
    }
    fn is_alpha(&self, id: ParamId) -> bool {
        SuperGraph::is_alpha(self, id)
    }
    fn entropy(&self, tape: &mut Tape<'_>) -> Option<Result<Var, AgentError>> {
        Some(self.entropy_tape(tape).map_err(AgentError::from))
    }
}

impl QNetwork for SubGraph {
    fn params(&self) -> &ParamStore {
        &self.store
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn input_dims(&self) -> Vec<usize> {
        self.input_dims.clone()
    }
    fn scale_inputs(&self, raw: Vec<Tensor>) -> Result<Vec<Tensor>, AgentError> {
        Ok(SubGraph::scale_inputs(self, raw)?)
    }
    fn forward(&self, tape: &mut Tape<'_>, inputs: &[Var]) -> Result<Var, AgentError> {
        Ok(self.forward_tape(tape, inputs)?)
    }
    fn q_values(&self, state: &State) -> Result<Vec<f64>, AgentError> {
        let refs: Vec<&[f64]> = state.iter().map(Vec::as_slice).collect();
        Ok(SubGraph::q_values(self, &refs)?)
    }
}

/// Single-input perceptron with ReLU on every hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub store: ParamStore,
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `widths = [in, h1, …, out]`.
    pub fn new<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| store.add_linear(&format!("layer{k}"), w[0], w[1], rng))
            .collect();
        Self { store, layers }
    }

    pub fn num_params(&self) -> usize {
        self.store.numel(self.store.ids())
    }

    pub fn forward_values(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (k, l) in self.layers.iter().enumerate() {
            h = crate::supergraph::dense_values(&self.store, &h, *l);
            if k + 1 < self.layers.len() {
                h = nn::relu(&h);
            }
        }
        h
    }
}

impl QNetwork for Mlp {
    fn params(&self) -> &ParamStore {
        &self.store
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn input_dims(&self) -> Vec<usize> {
        vec![self.layers[0].fan_in]
    }
    fn scale_inputs(&self, raw: Vec<Tensor>) -> Result<Vec<Tensor>, AgentError> {
        Ok(raw)
    }
    fn forward(&self, tape: &mut Tape<'_>, inputs: &[Var]) -> Result<Var, AgentError> {
        let mut h = inputs[0];
        for (k, l) in self.layers.iter().enumerate() {
            h = tape.linear(h, *l)?;
            if k + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
    fn q_values(&self, state: &State) -> Result<Vec<f64>, AgentError> {
        Ok(self.forward_values(&state[0]))
    }
}

/// Occupancy (vehicles over capacity) of incoming lanes that are green in
/// the current phase, and of those that are red.
pub fn green_red_density(sim: &Simulation, intersection: IntersectionId) -> [f64; 2] {
    let net = sim.network();
    let inter = net.intersection(intersection);
    let phase = &inter.phases[sim.signal(intersection).current_phase];
    let mut acc = [(0usize, 0usize); 2];
    for &lane in &inter.in_lanes {
        let green = phase
            .links
            .iter()
            .any(|&l| net.links[l.index()].from == lane);
        let slot = &mut acc[usize::from(!green)];
        slot.0 += sim.lane_vehicle_count(lane);
        slot.1 += net.lane(lane).capacity;
    }
    acc.map(|(n, cap)| if cap == 0 { 0.0 } else { n as f64 / cap as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ecolight_shape_costs() {
        let m = Mlp::new(&[2, 10, 10, 2], &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(m.num_params(), 162);
    }

    #[test]
    fn tape_and_values_agree() {
        let m = Mlp::new(&[3, 4, 2], &mut ChaCha8Rng::seed_from_u64(1));
        let x = vec![0.5, -1.0, 2.0];
        let mut tape = Tape::new(&m.store);
        let v = tape.input(Tensor::row_vector(x.clone()));
        let q = QNetwork::forward(&m, &mut tape, &[v]).unwrap();
        let direct = m.forward_values(&x);
        for (a, b) in tape.value(q).data.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

//! The over-complete policy network and its sparsification.
//!
//! Layer 1 holds one component per candidate feature, layers 2 and 3 hold
//! parallel dense blocks, and layer 4 is the single Q-value head. Every edge
//! out of component `i` of layer `I` is scaled by the shared weight
//! `α_{i|I} = softmax(logits_I)_i`. Edges into layers 2 and 3 are
//! `ReLU(Linear(·))`; edges into the head are plain `Linear(·)` so that
//! Q-values can go negative.

mod subgraph;

pub use subgraph::{random_path, SubGraph, SubGraphManifest};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{self, Linear, NnError, ParamId, ParamStore, Tape, Tensor, Var};

/// Number of α-weighted layers (inputs, first hidden, second hidden).
pub const ALPHA_LAYERS: usize = 3;

pub const DEFAULT_HIDDEN_DIMS: [usize; 5] = [16, 18, 20, 22, 24];

/// Retained components per α layer for the deployed policy.
pub const DEFAULT_KEEP: [usize; ALPHA_LAYERS] = [2, 1, 1];

#[derive(Debug, Error)]
pub enum SupergraphError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("expected {expected} input features, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("feature {index} has dimension {got}, expected {expected}")]
    InputDim {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("cannot keep {keep} components of layer {layer}, which has {available}")]
    Keep {
        layer: usize,
        keep: usize,
        available: usize,
    },
    #[error("entropy weight must be non-negative, got {0}")]
    NegativeBeta(f64),
    #[error("invalid spec: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperGraphSpec {
    /// Dimension of each layer-1 feature component.
    pub input_dims: Vec<usize>,
    pub hidden1_dims: Vec<usize>,
    pub hidden2_dims: Vec<usize>,
    /// Number of phases.
    pub outputs: usize,
}

impl SuperGraphSpec {
    /// The default block layout on top of the given feature dimensions.
    pub fn with_inputs(input_dims: Vec<usize>, outputs: usize) -> Self {
        Self {
            input_dims,
            hidden1_dims: DEFAULT_HIDDEN_DIMS.to_vec(),
            hidden2_dims: DEFAULT_HIDDEN_DIMS.to_vec(),
            outputs,
        }
    }

    pub fn validate(&self) -> Result<(), SupergraphError> {
        for (name, dims) in [
            ("input", &self.input_dims),
            ("hidden1", &self.hidden1_dims),
            ("hidden2", &self.hidden2_dims),
        ] {
            if dims.is_empty() || dims.contains(&0) {
                return Err(SupergraphError::Spec(format!(
                    "{name} layer needs at least one component and positive dims"
                )));
            }
        }
        if self.outputs == 0 {
            return Err(SupergraphError::Spec("outputs must be positive".into()));
        }
        Ok(())
    }

    /// Components per α layer.
    pub fn layer_sizes(&self) -> [usize; ALPHA_LAYERS] {
        [
            self.input_dims.len(),
            self.hidden1_dims.len(),
            self.hidden2_dims.len(),
        ]
    }
}

/// Number of single-path sub-graphs: one component chosen per layer.
pub fn count_subgraphs(spec: &SuperGraphSpec) -> u128 {
    spec.layer_sizes().iter().map(|&n| n as u128).product()
}

/// `Σ_I H(softmax(logits_I))`.
pub fn entropy_loss(alphas: &[Vec<f64>]) -> f64 {
    alphas
        .iter()
        .map(|a| nn::entropy(a).expect("softmax output is normalized"))
        .sum()
}

/// `td + β·ent`.
pub fn combined_loss(td: f64, ent: f64, beta: f64) -> Result<f64, SupergraphError> {
    if beta < 0.0 {
        return Err(SupergraphError::NegativeBeta(beta));
    }
    Ok(td + beta * ent)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperGraph {
    pub spec: SuperGraphSpec,
    pub store: ParamStore,
    pub logits: [ParamId; ALPHA_LAYERS],
    /// `edges1[i][j]`: input `i` → first-hidden block `j`.
    pub edges1: Vec<Vec<Linear>>,
    /// `edges2[i][j]`: first-hidden block `i` → second-hidden block `j`.
    pub edges2: Vec<Vec<Linear>>,
    /// `head[i]`: second-hidden block `i` → Q-values.
    pub head: Vec<Linear>,
    /// Per-input multiplier applied to raw feature values.
    pub input_scale: Vec<f64>,
}

impl SuperGraph {
    pub fn new<R: Rng>(
        spec: SuperGraphSpec,
        input_scale: Vec<f64>,
        rng: &mut R,
    ) -> Result<Self, SupergraphError> {
        spec.validate()?;
        if input_scale.len() != spec.input_dims.len() {
            return Err(SupergraphError::InputCount {
                expected: spec.input_dims.len(),
                got: input_scale.len(),
            });
        }
        let mut store = ParamStore::new();
        let sizes = spec.layer_sizes();
        let logits = [0, 1, 2].map(|l| store.add(format!("alpha{l}"), Tensor::zeros(1, sizes[l])));
        let edges1 = spec
            .input_dims
            .iter()
            .enumerate()
            .map(|(i, &din)| {
                spec.hidden1_dims
                    .iter()
                    .enumerate()
                    .map(|(j, &dout)| store.add_linear(&format!("e1.{i}.{j}"), din, dout, rng))
                    .collect()
            })
            .collect();
        let edges2 = spec
            .hidden1_dims
            .iter()
            .enumerate()
            .map(|(i, &din)| {
                spec.hidden2_dims
                    .iter()
                    .enumerate()
                    .map(|(j, &dout)| store.add_linear(&format!("e2.{i}.{j}"), din, dout, rng))
                    .collect()
            })
            .collect();
        let head = spec
            .hidden2_dims
            .iter()
            .enumerate()
            .map(|(i, &din)| store.add_linear(&format!("head.{i}"), din, spec.outputs, rng))
            .collect();
        Ok(Self {
            spec,
            store,
            logits,
            edges1,
            edges2,
            head,
            input_scale,
        })
    }

    pub fn is_alpha(&self, id: ParamId) -> bool {
        self.logits.contains(&id)
    }

    pub fn alphas(&self) -> [Vec<f64>; ALPHA_LAYERS] {
        self.logits.map(|id| nn::softmax(&self.store.get(id).data))
    }

    pub fn entropy(&self) -> f64 {
        entropy_loss(&self.alphas())
    }

    fn check_inputs(
        &self,
        dims: impl ExactSizeIterator<Item = usize>,
    ) -> Result<(), SupergraphError> {
        if dims.len() != self.spec.input_dims.len() {
            return Err(SupergraphError::InputCount {
                expected: self.spec.input_dims.len(),
                got: dims.len(),
            });
        }
        for (index, (got, &expected)) in dims.zip(&self.spec.input_dims).enumerate() {
            if got != expected {
                return Err(SupergraphError::InputDim {
                    index,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    /// Scales raw per-feature batches (`B × dim` each) into network inputs.
    pub fn scale_inputs(&self, raw: Vec<Tensor>) -> Result<Vec<Tensor>, SupergraphError> {
        self.check_inputs(raw.iter().map(|t| t.cols))?;
        Ok(raw
            .into_iter()
            .zip(&self.input_scale)
            .map(|(mut t, &s)| {
                t.data.iter_mut().for_each(|v| *v *= s);
                t
            })
            .collect())
    }

    /// Records the batched forward pass; `inputs` are already scaled.
    pub fn forward_tape(
        &self,
        tape: &mut Tape<'_>,
        inputs: &[Var],
    ) -> Result<Var, SupergraphError> {
        let alpha: Vec<Var> = self
            .logits
            .iter()
            .map(|&id| {
                let z = tape.param(id);
                tape.softmax(z)
            })
            .collect();

        let mix = |tape: &mut Tape<'_>, from: &[Var], edges: &[Vec<Linear>], a: Var, relu: bool| {
            let fan_out = edges[0].len();
            (0..fan_out)
                .map(|j| {
                    let mut terms = Vec::with_capacity(from.len());
                    for (i, &x) in from.iter().enumerate() {
                        let y = tape.linear(x, edges[i][j])?;
                        terms.push(if relu { tape.relu(y) } else { y });
                    }
                    let index: Vec<usize> = (0..from.len()).collect();
                    tape.weighted_sum(&terms, a, &index)
                })
                .collect::<Result<Vec<Var>, NnError>>()
        };

        let h1 = mix(tape, inputs, &self.edges1, alpha[0], true)?;
        let h2 = mix(tape, &h1, &self.edges2, alpha[1], true)?;
        let head: Vec<Vec<Linear>> = self.head.iter().map(|&l| vec![l]).collect();
        let q = mix(tape, &h2, &head, alpha[2], false)?;
        Ok(q[0])
    }

    /// Q-values for one state of raw feature vectors.
    pub fn q_values(&self, raw: &[Vec<f64>]) -> Result<Vec<f64>, SupergraphError> {
        self.q_values_with_alpha(raw, &self.alphas())
    }

    /// Tape-free forward with explicit layer weights in place of `softmax(logits)`.
    pub fn q_values_with_alpha(
        &self,
        raw: &[Vec<f64>],
        alphas: &[Vec<f64>; ALPHA_LAYERS],
    ) -> Result<Vec<f64>, SupergraphError> {
        self.check_inputs(raw.iter().map(Vec::len))?;
        let inputs: Vec<Vec<f64>> = raw
            .iter()
            .zip(&self.input_scale)
            .map(|(x, &s)| x.iter().map(|v| v * s).collect())
            .collect();
        let h1 = mix_dense(&self.store, &inputs, &self.edges1, &alphas[0], true);
        let h2 = mix_dense(&self.store, &h1, &self.edges2, &alphas[1], true);
        let head: Vec<Vec<Linear>> = self.head.iter().map(|&l| vec![l]).collect();
        Ok(mix_dense(&self.store, &h2, &head, &alphas[2], false).remove(0))
    }

    /// Parameters trained by the θ-step.
    pub fn theta_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.store.ids().filter(|id| !self.is_alpha(*id))
    }

    /// Records `Σ_I H(softmax(logits_I))` on the tape.
    pub fn entropy_tape(&self, tape: &mut Tape<'_>) -> Result<Var, SupergraphError> {
        let mut total: Option<Var> = None;
        for &id in &self.logits {
            let z = tape.param(id);
            let a = tape.softmax(z);
            let h = tape.entropy(a)?;
            total = Some(match total {
                Some(t) => tape.add(t, h)?,
                None => h,
            });
        }
        Ok(total.expect("three α layers"))
    }

    /// Records mean L¹ over the batch, L², and `L¹ + β·L²`.
    pub fn record_losses(
        &self,
        tape: &mut Tape<'_>,
        inputs: &[Var],
        actions: &[usize],
        targets: &[f64],
        beta: f64,
    ) -> Result<LossVars, SupergraphError> {
        if beta < 0.0 {
            return Err(SupergraphError::NegativeBeta(beta));
        }
        let q = self.forward_tape(tape, inputs)?;
        let err = tape.td_error(q, actions, targets)?;
        let td = tape.mean(err);
        let entropy = self.entropy_tape(tape)?;
        let weighted = tape.scale(entropy, beta);
        let combined = tape.add(td, weighted)?;
        Ok(LossVars {
            td,
            entropy,
            combined,
        })
    }

    /// One α-only descent step on L² alone; returns L² before the step.
    pub fn entropy_step(&mut self, opt: &mut nn::Optimizer) -> Result<f64, SupergraphError> {
        let grads = {
            let mut tape = Tape::new(&self.store);
            let h = self.entropy_tape(&mut tape)?;
            let logits = self.logits;
            let value = tape.value(h).item();
            (tape.backward(h, |id| logits.contains(&id))?, value)
        };
        opt.step(&mut self.store, &grads.0);
        Ok(grads.1)
    }
}

/// Scalar loss nodes recorded by [`SuperGraph::record_losses`].
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub td: Var,
    pub entropy: Var,
    pub combined: Var,
}

pub(crate) fn dense_values(store: &ParamStore, x: &[f64], l: Linear) -> Vec<f64> {
    let w = store.get(l.weight);
    let mut y = store.get(l.bias).data.clone();
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            for (o, &wij) in y.iter_mut().zip(w.row(i)) {
                *o += xi * wij;
            }
        }
    }
    y
}

fn mix_dense(
    store: &ParamStore,
    from: &[Vec<f64>],
    edges: &[Vec<Linear>],
    alpha: &[f64],
    relu: bool,
) -> Vec<Vec<f64>> {
    (0..edges[0].len())
        .map(|j| {
            let mut out = vec![0.0; edges[0][j].fan_out];
            for (i, x) in from.iter().enumerate() {
                if alpha[i] == 0.0 {
                    continue;
                }
                let mut y = dense_values(store, x, edges[i][j]);
                if relu {
                    y = nn::relu(&y);
                }
                out.iter_mut().zip(&y).for_each(|(o, v)| *o += alpha[i] * v);
            }
            out
        })
        .collect()
}

/// Indices of the `keep` largest weights, largest first; ties go to the lower index.
pub fn top_k(alpha: &[f64], keep: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..alpha.len()).collect();
    idx.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b)));
    idx.truncate(keep);
    idx
}

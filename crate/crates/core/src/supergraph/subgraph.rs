use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{dense_values, top_k, SuperGraph, SuperGraphSpec, SupergraphError, ALPHA_LAYERS};
use crate::nn::{self, Linear, NnError, ParamStore, Tape, Tensor, Var};

/// A sparse path through the super-graph with its α weights folded into θ.
///
/// Since every retained α is positive, `α·ReLU(Wx+b) = ReLU(αWx+αb)`, so the
/// deployed network is a plain sum of dense edges with no mixing weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGraph {
    /// Retained layer-1 components, as indices into the super-graph inputs.
    pub inputs: Vec<usize>,
    /// Retained first-hidden blocks, as indices into the super-graph blocks.
    pub hidden1: Vec<usize>,
    pub hidden2: Vec<usize>,
    pub input_dims: Vec<usize>,
    pub hidden1_dims: Vec<usize>,
    pub hidden2_dims: Vec<usize>,
    pub outputs: usize,
    pub store: ParamStore,
    /// `edges1[i][j]`: retained input `i` → retained block `j`.
    pub edges1: Vec<Vec<Linear>>,
    pub edges2: Vec<Vec<Linear>>,
    pub head: Vec<Linear>,
    /// Per-input multiplier on raw feature values. Kept separate during
    /// training so that optimizer steps act on normalized weights.
    pub input_scale: Vec<f64>,
}

/// Human-readable description of what was kept, with renormalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGraphManifest {
    pub inputs: Vec<usize>,
    pub hidden1: Vec<usize>,
    pub hidden2: Vec<usize>,
    pub weights: [Vec<f64>; ALPHA_LAYERS],
}

fn renormalized(alpha: &[f64], keep: &[usize]) -> Vec<f64> {
    let s: f64 = keep.iter().map(|&i| alpha[i]).sum();
    keep.iter().map(|&i| alpha[i] / s).collect()
}

fn copy_scaled(src: &ParamStore, l: Linear, c: f64, dst: &mut ParamStore, name: &str) -> Linear {
    let scaled = |id| {
        let mut t: Tensor = src.get(id).clone();
        t.data.iter_mut().for_each(|v| *v *= c);
        t
    };
    Linear {
        weight: dst.add(format!("{name}.weight"), scaled(l.weight)),
        bias: dst.add(format!("{name}.bias"), scaled(l.bias)),
        fan_in: l.fan_in,
        fan_out: l.fan_out,
    }
}

fn check_keep(spec: &SuperGraphSpec, keep: [usize; ALPHA_LAYERS]) -> Result<(), SupergraphError> {
    for (layer, (&k, n)) in keep.iter().zip(spec.layer_sizes()).enumerate() {
        if k == 0 || k > n {
            return Err(SupergraphError::Keep {
                layer: layer + 1,
                keep: k,
                available: n,
            });
        }
    }
    Ok(())
}

impl SuperGraph {
    /// Keeps the `keep[l]` highest-weight components of each α layer
    /// (ties to the lower index) and folds the renormalized weights into θ.
    pub fn extract(
        &self,
        keep: [usize; ALPHA_LAYERS],
    ) -> Result<(SubGraph, SubGraphManifest), SupergraphError> {
        check_keep(&self.spec, keep)?;
        let alphas = self.alphas();
        let kept: Vec<Vec<usize>> = (0..ALPHA_LAYERS)
            .map(|l| {
                let mut k = top_k(&alphas[l], keep[l]);
                k.sort_unstable();
                k
            })
            .collect();
        let weights = [0, 1, 2].map(|l| renormalized(&alphas[l], &kept[l]));

        let mut store = ParamStore::new();
        let edges1 = kept[0]
            .iter()
            .zip(&weights[0])
            .map(|(&i, &w)| {
                kept[1]
                    .iter()
                    .map(|&j| {
                        copy_scaled(
                            &self.store,
                            self.edges1[i][j],
                            w,
                            &mut store,
                            &format!("e1.{i}.{j}"),
                        )
                    })
                    .collect()
            })
            .collect();
        let edges2 = kept[1]
            .iter()
            .zip(&weights[1])
            .map(|(&i, &w)| {
                kept[2]
                    .iter()
                    .map(|&j| {
                        copy_scaled(
                            &self.store,
                            self.edges2[i][j],
                            w,
                            &mut store,
                            &format!("e2.{i}.{j}"),
                        )
                    })
                    .collect()
            })
            .collect();
        let head = kept[2]
            .iter()
            .zip(&weights[2])
            .map(|(&i, &w)| {
                copy_scaled(
                    &self.store,
                    self.head[i],
                    w,
                    &mut store,
                    &format!("head.{i}"),
                )
            })
            .collect();

        let sub = SubGraph {
            inputs: kept[0].clone(),
            hidden1: kept[1].clone(),
            hidden2: kept[2].clone(),
            input_dims: kept[0].iter().map(|&i| self.spec.input_dims[i]).collect(),
            hidden1_dims: kept[1].iter().map(|&i| self.spec.hidden1_dims[i]).collect(),
            hidden2_dims: kept[2].iter().map(|&i| self.spec.hidden2_dims[i]).collect(),
            outputs: self.spec.outputs,
            store,
            edges1,
            edges2,
            head,
            input_scale: kept[0].iter().map(|&i| self.input_scale[i]).collect(),
        };
        let manifest = SubGraphManifest {
            inputs: kept[0].clone(),
            hidden1: kept[1].clone(),
            hidden2: kept[2].clone(),
            weights,
        };
        Ok((sub, manifest))
    }
}

/// A uniformly random path with fresh Glorot weights, for the random-search
/// ablation. Deterministic given the RNG state.
pub fn random_path<R: Rng>(
    spec: &SuperGraphSpec,
    input_scale: &[f64],
    keep: [usize; ALPHA_LAYERS],
    rng: &mut R,
) -> Result<SubGraph, SupergraphError> {
    spec.validate()?;
    check_keep(spec, keep)?;
    let sizes = spec.layer_sizes();
    let kept: Vec<Vec<usize>> = (0..ALPHA_LAYERS)
        .map(|l| {
            let mut k = sample(rng, sizes[l], keep[l]).into_vec();
            k.sort_unstable();
            k
        })
        .collect();
    let input_dims: Vec<usize> = kept[0].iter().map(|&i| spec.input_dims[i]).collect();
    let hidden1_dims: Vec<usize> = kept[1].iter().map(|&i| spec.hidden1_dims[i]).collect();
    let hidden2_dims: Vec<usize> = kept[2].iter().map(|&i| spec.hidden2_dims[i]).collect();

    let mut store = ParamStore::new();
    let mut layer = |name: &str, fan_in: &[usize], fan_out: &[usize]| -> Vec<Vec<Linear>> {
        fan_in
            .iter()
            .enumerate()
            .map(|(i, &din)| {
                fan_out
                    .iter()
                    .enumerate()
                    .map(|(j, &dout)| store.add_linear(&format!("{name}.{i}.{j}"), din, dout, rng))
                    .collect()
            })
            .collect()
    };
    let edges1 = layer("e1", &input_dims, &hidden1_dims);
    let edges2 = layer("e2", &hidden1_dims, &hidden2_dims);
    let head = layer("head", &hidden2_dims, &[spec.outputs])
        .into_iter()
        .map(|v| v[0])
        .collect();
    Ok(SubGraph {
        inputs: kept[0].clone(),
        hidden1: kept[1].clone(),
        hidden2: kept[2].clone(),
        input_dims,
        hidden1_dims,
        hidden2_dims,
        outputs: spec.outputs,
        store,
        edges1,
        edges2,
        head,
        input_scale: kept[0].iter().map(|&i| input_scale[i]).collect(),
    })
}

impl SubGraph {
    fn check_inputs(
        &self,
        dims: impl ExactSizeIterator<Item = usize>,
    ) -> Result<(), SupergraphError> {
        if dims.len() != self.input_dims.len() {
            return Err(SupergraphError::InputCount {
                expected: self.input_dims.len(),
                got: dims.len(),
            });
        }
        for (index, (got, &expected)) in dims.zip(&self.input_dims).enumerate() {
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

    /// Picks this sub-graph's inputs out of a full per-feature state.
    pub fn select<'a, T>(&self, full: &'a [T]) -> Vec<&'a T> {
        self.inputs.iter().map(|&i| &full[i]).collect()
    }

    /// Q-values for raw inputs, one vector per retained feature.
    pub fn q_values(&self, raw: &[&[f64]]) -> Result<Vec<f64>, SupergraphError> {
        self.check_inputs(raw.iter().map(|x| x.len()))?;
        let sum_edges = |from: &[Vec<f64>], edges: &[Vec<Linear>], relu: bool| -> Vec<Vec<f64>> {
            (0..edges[0].len())
                .map(|j| {
                    let mut out = vec![0.0; edges[0][j].fan_out];
                    for (i, x) in from.iter().enumerate() {
                        let mut y = dense_values(&self.store, x, edges[i][j]);
                        if relu {
                            y = nn::relu(&y);
                        }
                        out.iter_mut().zip(&y).for_each(|(o, v)| *o += v);
                    }
                    out
                })
                .collect()
        };
        let x: Vec<Vec<f64>> = raw
            .iter()
            .zip(&self.input_scale)
            .map(|(x, &s)| x.iter().map(|v| v * s).collect())
            .collect();
        let h1 = sum_edges(&x, &self.edges1, true);
        let h2 = sum_edges(&h1, &self.edges2, true);
        let head: Vec<Vec<Linear>> = self.head.iter().map(|&l| vec![l]).collect();
        Ok(sum_edges(&h2, &head, false).remove(0))
    }

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

    /// Batched forward on scaled inputs.
    pub fn forward_tape(
        &self,
        tape: &mut Tape<'_>,
        inputs: &[Var],
    ) -> Result<Var, SupergraphError> {
        fn layer(
            tape: &mut Tape<'_>,
            from: &[Var],
            edges: &[Vec<Linear>],
            relu: bool,
        ) -> Result<Vec<Var>, NnError> {
            (0..edges[0].len())
                .map(|j| {
                    let mut acc: Option<Var> = None;
                    for (i, &x) in from.iter().enumerate() {
                        let mut y = tape.linear(x, edges[i][j])?;
                        if relu {
                            y = tape.relu(y);
                        }
                        acc = Some(match acc {
                            Some(a) => tape.add(a, y)?,
                            None => y,
                        });
                    }
                    Ok(acc.expect("at least one incoming edge"))
                })
                .collect()
        }
        let h1 = layer(tape, inputs, &self.edges1, true)?;
        let h2 = layer(tape, &h1, &self.edges2, true)?;
        let head: Vec<Vec<Linear>> = self.head.iter().map(|&l| vec![l]).collect();
        Ok(layer(tape, &h2, &head, false)?[0])
    }

    /// Scalar parameter count.
    pub fn num_params(&self) -> usize {
        self.store.numel(self.store.ids())
    }

    /// True for the single-chain shape (one block per hidden layer) that
    /// code generation and the closed-form cost model support.
    pub fn is_single_chain(&self) -> bool {
        self.hidden1.len() == 1 && self.hidden2.len() == 1
    }

    /// Copy with the input scale folded into the first-layer weights, so it
    /// takes raw feature values directly. Q-values are unchanged.
    pub fn fold_input_scale(&self) -> SubGraph {
        let mut out = self.clone();
        for (row, &s) in out.edges1.iter().zip(&self.input_scale) {
            for l in row {
                out.store
                    .get_mut(l.weight)
                    .data
                    .iter_mut()
                    .for_each(|w| *w *= s);
            }
        }
        out.input_scale = vec![1.0; self.input_scale.len()];
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> SuperGraph {
        let spec = SuperGraphSpec {
            input_dims: vec![3, 2, 4],
            hidden1_dims: vec![5, 6],
            hidden2_dims: vec![4, 3],
            outputs: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut sg = SuperGraph::new(spec, vec![0.5, 1.0, 2.0], &mut rng).unwrap();
        for id in sg.theta_ids().collect::<Vec<ParamId>>() {
            if sg.store.name(id).ends_with("bias") {
                for b in &mut sg.store.get_mut(id).data {
                    *b = rng.gen_range(-0.3..0.3);
                }
            }
        }
        for (l, z) in
            sg.logits
                .into_iter()
                .zip([vec![0.3, -1.0, 0.8], vec![0.1, 0.5], vec![1.2, -0.4]])
        {
            sg.store.get_mut(l).data = z;
        }
        sg
    }

    #[test]
    fn keep_out_of_range_is_rejected() {
        let sg = small();
        assert!(matches!(
            sg.extract([0, 1, 1]),
            Err(SupergraphError::Keep { layer: 1, .. })
        ));
        assert!(matches!(
            sg.extract([1, 3, 1]),
            Err(SupergraphError::Keep { layer: 2, .. })
        ));
    }

    #[test]
    fn extraction_picks_top_weights() {
        let sg = small();
        let (sub, manifest) = sg.extract([2, 1, 1]).unwrap();
        assert_eq!(sub.inputs, vec![0, 2]);
        assert_eq!(sub.hidden1, vec![1]);
        assert_eq!(sub.hidden2, vec![0]);
        assert!((manifest.weights[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(manifest.weights[1], vec![1.0]);
        assert_eq!(sub.input_dims, vec![3, 4]);
        // (3+4)·6 + 6 + 6 + 6·4 + 4 + 4·2 + 2 weights and biases.
        assert_eq!(sub.num_params(), 42 + 12 + 28 + 10);
    }

    #[test]
    fn folding_preserves_q_values() {
        let sg = small();
        let (sub, _) = sg.extract([2, 1, 1]).unwrap();
        let x0 = [1.0, -2.0, 0.5];
        let x2 = [0.0, 3.0, 1.0, -1.0];
        let a = sub.q_values(&[&x0, &x2]).unwrap();
        let b = sub.fold_input_scale().q_values(&[&x0, &x2]).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_matches_tape_free_forward() {
        let sg = small();
        let (sub, _) = sg.extract([2, 2, 1]).unwrap();
        let rows = [
            [1.0, 0.0, 2.0, 0.5, -1.0, 0.0, 3.0],
            [0.2, 0.4, -0.6, 1.0, 1.0, 2.0, -2.0],
        ];
        let t0 =
            Tensor::from_vec(2, 3, rows.iter().flat_map(|r| r[..3].to_vec()).collect()).unwrap();
        let t2 =
            Tensor::from_vec(2, 4, rows.iter().flat_map(|r| r[3..].to_vec()).collect()).unwrap();
        let scaled = sub.scale_inputs(vec![t0, t2]).unwrap();
        let mut tape = Tape::new(&sub.store);
        let vars: Vec<Var> = scaled.into_iter().map(|t| tape.input(t)).collect();
        let q = sub.forward_tape(&mut tape, &vars).unwrap();
        for (r, row) in rows.iter().enumerate() {
            let expect = sub.q_values(&[&row[..3], &row[3..]]).unwrap();
            for (u, v) in tape.value(q).row(r).iter().zip(&expect) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_path_is_seeded() {
        let sg = small();
        let draw = |seed| {
            random_path(
                &sg.spec,
                &sg.input_scale,
                [2, 1, 1],
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap()
        };
        assert_eq!(draw(4), draw(4));
        let p = draw(5);
        assert_eq!(p.inputs.len(), 2);
        assert!(p.inputs[0] < p.inputs[1]);
    }
}

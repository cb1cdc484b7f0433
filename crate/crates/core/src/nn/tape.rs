use super::params::{Linear, ParamId, ParamStore, Tensor};
use super::NnError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Linear {
        x: Var,
        layer: Linear,
    },
    Relu(Var),
    Add(Var, Var),
    Scale(Var, f64),
    /// `Σ_k w[index[k]] · xs[k]` with `w` a row vector.
    WeightedSum {
        xs: Vec<Var>,
        weights: Var,
        index: Vec<usize>,
    },
    Softmax(Var),
    Entropy(Var),
    Sum(Var),
    Mean(Var),
    SumSquares(Var),
    /// Per-row `(target − q[action])²`; targets are constants.
    TdError {
        q: Var,
        actions: Vec<usize>,
        targets: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Records a forward computation for a single reverse sweep.
///
/// Parameters are read from the borrowed store; gradients come back as a
/// [`Grads`] keyed by [`ParamId`].
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

/// Per-parameter gradients of one backward pass.
#[derive(Debug, Clone, Default)]
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    /// Multiplies every gradient by `c`.
    pub fn scale(&mut self, c: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.data.iter_mut().for_each(|v| *v *= c);
        }
    }
}

fn add_into(slot: &mut Option<Tensor>, rows: usize, cols: usize, f: impl FnOnce(&mut Tensor)) {
    let t = slot.get_or_insert_with(|| Tensor::zeros(rows, cols));
    f(t);
}

fn check(op: &'static str, expected: (usize, usize), got: (usize, usize)) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::Shape { op, expected, got })
    }
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Input, t)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.get(id).clone();
        self.push(Op::Param(id), value)
    }

    pub fn linear(&mut self, x: Var, layer: Linear) -> Result<Var, NnError> {
        let xv = self.value(x);
        check("linear", (xv.rows, layer.fan_in), xv.shape())?;
        let w = self.store.get(layer.weight);
        let b = self.store.get(layer.bias);
        check("linear weight", (layer.fan_in, layer.fan_out), w.shape())?;
        let mut y = Tensor::zeros(xv.rows, layer.fan_out);
        for r in 0..xv.rows {
            let out = y.row_mut(r);
            out.copy_from_slice(&b.data);
            for (i, &xi) in xv.row(r).iter().enumerate() {
                if xi != 0.0 {
                    for (o, &wij) in out.iter_mut().zip(w.row(i)) {
                        *o += xi * wij;
                    }
                }
            }
        }
        Ok(self.push(Op::Linear { x, layer }, y))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut y = self.value(x).clone();
        y.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(Op::Relu(x), y)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (av, bv) = (self.value(a), self.value(b));
        check("add", av.shape(), bv.shape())?;
        let mut y = av.clone();
        y.data.iter_mut().zip(&bv.data).for_each(|(x, &z)| *x += z);
        Ok(self.push(Op::Add(a, b), y))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let mut y = self.value(x).clone();
        y.data.iter_mut().for_each(|v| *v *= c);
        self.push(Op::Scale(x, c), y)
    }

    /// `Σ_k weights[0, index[k]] · xs[k]`; all `xs` share one shape.
    pub fn weighted_sum(
        &mut self,
        xs: &[Var],
        weights: Var,
        index: &[usize],
    ) -> Result<Var, NnError> {
        assert_eq!(xs.len(), index.len(), "one weight index per term");
        let w = self.value(weights);
        if w.rows != 1 {
            return Err(NnError::Shape {
                op: "weighted_sum weights",
                expected: (1, w.cols),
                got: w.shape(),
            });
        }
        let shape = self.value(xs[0]).shape();
        let mut y = Tensor::zeros(shape.0, shape.1);
        for (&x, &k) in xs.iter().zip(index) {
            let xv = self.value(x);
            check("weighted_sum", shape, xv.shape())?;
            let a = self.value(weights).data[k];
            y.data
                .iter_mut()
                .zip(&xv.data)
                .for_each(|(o, &v)| *o += a * v);
        }
        Ok(self.push(
            Op::WeightedSum {
                xs: xs.to_vec(),
                weights,
                index: index.to_vec(),
            },
            y,
        ))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, z: Var) -> Var {
        let zv = self.value(z);
        let mut y = Tensor::zeros(zv.rows, zv.cols);
        for r in 0..zv.rows {
            y.row_mut(r)
                .copy_from_slice(&super::functional::softmax(zv.row(r)));
        }
        self.push(Op::Softmax(z), y)
    }

    /// Sum of row entropies; each row must be a probability vector.
    pub fn entropy(&mut self, p: Var) -> Result<Var, NnError> {
        let pv = self.value(p);
        let mut h = 0.0;
        for r in 0..pv.rows {
            h += super::functional::entropy(pv.row(r))?;
        }
        Ok(self.push(Op::Entropy(p), Tensor::scalar(h)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let m = xv.data.iter().sum::<f64>() / xv.data.len().max(1) as f64;
        self.push(Op::Mean(x), Tensor::scalar(m))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().map(|v| v * v).sum();
        self.push(Op::SumSquares(x), Tensor::scalar(s))
    }

    /// Per-row squared TD error against constant targets, shape `B × 1`.
    pub fn td_error(&mut self, q: Var, actions: &[usize], targets: &[f64]) -> Result<Var, NnError> {
        let qv = self.value(q);
        check("td_error", (actions.len(), qv.cols), qv.shape())?;
        assert_eq!(actions.len(), targets.len());
        let data = (0..qv.rows)
            .map(|r| {
                let e = targets[r] - qv.row(r)[actions[r]];
                e * e
            })
            .collect();
        let y = Tensor::from_vec(qv.rows, 1, data)?;
        Ok(self.push(
            Op::TdError {
                q,
                actions: actions.to_vec(),
                targets: targets.to_vec(),
            },
            y,
        ))
    }

    /// Reverse sweep from the scalar `loss`. Gradients are produced only for
    /// parameters where `wants` is true, and intermediate gradients only
    /// where some wanted parameter lies upstream.
    pub fn backward(&self, loss: Var, wants: impl Fn(ParamId) -> bool) -> Result<Grads, NnError> {
        if self.nodes.is_empty() {
            return Err(NnError::EmptyTape);
        }
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(NnError::NonScalarLoss(lv.rows, lv.cols));
        }

        let n = loss.0 + 1;
        let mut needs = vec![false; n];
        for i in 0..n {
            needs[i] = match &self.nodes[i].op {
                Op::Input => false,
                Op::Param(id) => wants(*id),
                Op::Linear { x, layer } => needs[x.0] || wants(layer.weight) || wants(layer.bias),
                Op::Relu(x) | Op::Scale(x, _) | Op::Softmax(x) | Op::Entropy(x) => needs[x.0],
                Op::Sum(x) | Op::Mean(x) | Op::SumSquares(x) => needs[x.0],
                Op::TdError { q, .. } => needs[q.0],
                Op::Add(a, b) => needs[a.0] || needs[b.0],
                Op::WeightedSum { xs, weights, .. } => {
                    needs[weights.0] || xs.iter().any(|x| needs[x.0])
                }
            };
        }

        let mut grads = Grads {
            grads: vec![None; self.store.len()],
        };
        let mut node_grads: Vec<Option<Tensor>> = vec![None; n];
        node_grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..n).rev() {
            if !needs[i] {
                continue;
            }
            let Some(g) = node_grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let s = g.shape();
                    add_into(&mut grads.grads[id.0], s.0, s.1, |t| {
                        t.data.iter_mut().zip(&g.data).for_each(|(a, &b)| *a += b)
                    });
                }
                Op::Linear { x, layer } => {
                    let xv = self.value(*x);
                    let w = self.store.get(layer.weight);
                    if wants(layer.weight) {
                        add_into(
                            &mut grads.grads[layer.weight.0],
                            layer.fan_in,
                            layer.fan_out,
                            |dw| {
                                for r in 0..xv.rows {
                                    let dy = g.row(r);
                                    for (i, &xi) in xv.row(r).iter().enumerate() {
                                        if xi != 0.0 {
                                            for (d, &gy) in dw.row_mut(i).iter_mut().zip(dy) {
                                                *d += xi * gy;
                                            }
                                        }
                                    }
                                }
                            },
                        );
                    }
                    if wants(layer.bias) {
                        add_into(&mut grads.grads[layer.bias.0], 1, layer.fan_out, |db| {
                            for r in 0..g.rows {
                                db.data
                                    .iter_mut()
                                    .zip(g.row(r))
                                    .for_each(|(d, &gy)| *d += gy);
                            }
                        });
                    }
                    if needs[x.0] {
                        add_into(&mut node_grads[x.0], xv.rows, xv.cols, |dx| {
                            for r in 0..g.rows {
                                let dy = g.row(r);
                                if dy.iter().all(|&v| v == 0.0) {
                                    continue;
                                }
                                for (i, d) in dx.row_mut(r).iter_mut().enumerate() {
                                    *d += w.row(i).iter().zip(dy).map(|(a, b)| a * b).sum::<f64>();
                                }
                            }
                        });
                    }
                }
                Op::Relu(x) => {
                    let y = &node.value;
                    add_into(&mut node_grads[x.0], y.rows, y.cols, |dx| {
                        for ((d, &gy), &yv) in dx.data.iter_mut().zip(&g.data).zip(&y.data) {
                            if yv > 0.0 {
                                *d += gy;
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        if needs[v.0] {
                            add_into(&mut node_grads[v.0], g.rows, g.cols, |d| {
                                d.data.iter_mut().zip(&g.data).for_each(|(x, &y)| *x += y)
                            });
                        }
                    }
                }
                Op::Scale(x, c) => {
                    add_into(&mut node_grads[x.0], g.rows, g.cols, |d| {
                        d.data
                            .iter_mut()
                            .zip(&g.data)
                            .for_each(|(x, &y)| *x += c * y)
                    });
                }
                Op::WeightedSum { xs, weights, index } => {
                    let w = self.value(*weights);
                    let mut dw = vec![0.0; w.cols];
                    for (&x, &k) in xs.iter().zip(index) {
                        if needs[weights.0] {
                            dw[k] += self
                                .value(x)
                                .data
                                .iter()
                                .zip(&g.data)
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        }
                        if needs[x.0] {
                            let a = w.data[k];
                            add_into(&mut node_grads[x.0], g.rows, g.cols, |d| {
                                d.data
                                    .iter_mut()
                                    .zip(&g.data)
                                    .for_each(|(x, &y)| *x += a * y)
                            });
                        }
                    }
                    if needs[weights.0] {
                        add_into(&mut node_grads[weights.0], 1, w.cols, |d| {
                            d.data.iter_mut().zip(&dw).for_each(|(x, &y)| *x += y)
                        });
                    }
                }
                Op::Softmax(z) => {
                    let p = &node.value;
                    add_into(&mut node_grads[z.0], p.rows, p.cols, |dz| {
                        for r in 0..p.rows {
                            let (pr, gr) = (p.row(r), g.row(r));
                            let dot: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
                            for ((d, &pi), &gi) in dz.row_mut(r).iter_mut().zip(pr).zip(gr) {
                                *d += pi * (gi - dot);
                            }
                        }
                    });
                }
                Op::Entropy(p) => {
                    let pv = self.value(*p);
                    let gs = g.item();
                    add_into(&mut node_grads[p.0], pv.rows, pv.cols, |dp| {
                        for (d, &v) in dp.data.iter_mut().zip(&pv.data) {
                            // 0·ln 0 is taken as 0, so a vanishing entry has no gradient.
                            if v > 0.0 {
                                *d -= gs * (v.ln() + 1.0);
                            }
                        }
                    });
                }
                Op::Sum(x) | Op::Mean(x) => {
                    let xv = self.value(*x);
                    let c = match node.op {
                        Op::Mean(_) => g.item() / xv.data.len().max(1) as f64,
                        _ => g.item(),
                    };
                    add_into(&mut node_grads[x.0], xv.rows, xv.cols, |d| {
                        d.data.iter_mut().for_each(|v| *v += c)
                    });
                }
                Op::SumSquares(x) => {
                    let xv = self.value(*x);
                    let c = 2.0 * g.item();
                    add_into(&mut node_grads[x.0], xv.rows, xv.cols, |d| {
                        d.data
                            .iter_mut()
                            .zip(&xv.data)
                            .for_each(|(a, &b)| *a += c * b)
                    });
                }
                Op::TdError {
                    q,
                    actions,
                    targets,
                } => {
                    let qv = self.value(*q);
                    add_into(&mut node_grads[q.0], qv.rows, qv.cols, |dq| {
                        for r in 0..qv.rows {
                            let a = actions[r];
                            let e = targets[r] - qv.row(r)[a];
                            dq.row_mut(r)[a] += -2.0 * e * g.data[r];
                        }
                    });
                }
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store_with_linear(
        fan_in: usize,
        fan_out: usize,
        w: Vec<f64>,
        b: Vec<f64>,
    ) -> (ParamStore, Linear) {
        let mut s = ParamStore::new();
        let weight = s.add("w", Tensor::from_vec(fan_in, fan_out, w).unwrap());
        let bias = s.add("b", Tensor::row_vector(b));
        (
            s,
            Linear {
                weight,
                bias,
                fan_in,
                fan_out,
            },
        )
    }

    #[test]
    fn linear_examples() {
        let (s, l) = store_with_linear(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]);
        let mut t = Tape::new(&s);
        let x = t.input(Tensor::row_vector(vec![3.0, -4.0]));
        let y = t.linear(x, l).unwrap();
        assert_eq!(t.value(y).data, vec![3.0, -4.0]);

        let (s, l) = store_with_linear(2, 3, vec![0.0; 6], vec![1.0, 2.0, 3.0]);
        let mut t = Tape::new(&s);
        let x = t.input(Tensor::row_vector(vec![3.0, -4.0]));
        let y = t.linear(x, l).unwrap();
        assert_eq!(t.value(y).data, vec![1.0, 2.0, 3.0]);

        let bad = t.input(Tensor::row_vector(vec![1.0; 3]));
        assert!(matches!(t.linear(bad, l), Err(NnError::Shape { .. })));
    }

    #[test]
    fn linear_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = ParamStore::new();
        let l = s.add_linear("l", 4, 3, &mut rng);
        s.get_mut(l.bias).data = vec![0.5, -0.25, 0.125];
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut t = Tape::new(&s);
        let xv = t.input(Tensor::from_vec(2, 4, x.clone()).unwrap());
        let y = t.linear(xv, l).unwrap();
        let w = s.get(l.weight);
        for r in 0..2 {
            for j in 0..3 {
                let mut acc = s.get(l.bias).data[j];
                for i in 0..4 {
                    acc += w.data[i * 3 + j] * x[r * 4 + i];
                }
                assert!((t.value(y).row(r)[j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut s = ParamStore::new();
        let p = s.add("x", Tensor::row_vector(vec![1.0, 2.0]));
        let mut t = Tape::new(&s);
        let x = t.param(p);
        let l = t.sum_squares(x);
        let g = t.backward(l, |_| true).unwrap();
        assert_eq!(g.get(p).unwrap().data, vec![2.0, 4.0]);
    }

    #[test]
    fn entropy_of_softmax_is_stationary_at_uniform() {
        let mut s = ParamStore::new();
        let p = s.add("z", Tensor::row_vector(vec![0.7; 6]));
        let mut t = Tape::new(&s);
        let z = t.param(p);
        let a = t.softmax(z);
        let h = t.entropy(a).unwrap();
        let g = t.backward(h, |_| true).unwrap();
        assert!(g.get(p).unwrap().data.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn backward_errors() {
        let s = ParamStore::new();
        let t = Tape::new(&s);
        assert!(matches!(
            t.backward(Var(0), |_| true),
            Err(NnError::EmptyTape)
        ));
        let mut t = Tape::new(&s);
        let x = t.input(Tensor::row_vector(vec![1.0, 2.0]));
        assert!(matches!(
            t.backward(x, |_| true),
            Err(NnError::NonScalarLoss(1, 2))
        ));
    }

    #[test]
    fn unwanted_parameters_get_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = ParamStore::new();
        let l = s.add_linear("l", 3, 2, &mut rng);
        let mut t = Tape::new(&s);
        let x = t.input(Tensor::row_vector(vec![1.0, 0.0, -1.0]));
        let y = t.linear(x, l).unwrap();
        let loss = t.sum_squares(y);
        let g = t.backward(loss, |id| id == l.bias).unwrap();
        assert!(g.get(l.weight).is_none());
        assert!(g.get(l.bias).is_some());
    }
}

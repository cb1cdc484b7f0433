use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::Grads;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Adam with bias correction. Moments are created lazily per parameter, so
/// one instance can own a subset of a store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: u64,
    m: Vec<Option<Vec<f64>>>,
    v: Vec<Option<Vec<f64>>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (id, g) in grads.iter() {
            if self.m.len() <= id.0 {
                self.m.resize(id.0 + 1, None);
                self.v.resize(id.0 + 1, None);
            }
            let n = g.data.len();
            let m = self.m[id.0].get_or_insert_with(|| vec![0.0; n]);
            let v = self.v[id.0].get_or_insert_with(|| vec![0.0; n]);
            let p = store.get_mut(id);
            for k in 0..n {
                let gk = g.data[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p.data[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
}

/// A first-order optimizer together with its state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam(Adam),
    Sgd(Sgd),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Self::Adam(Adam::new(lr)),
            OptimizerKind::Sgd => Self::Sgd(Sgd { lr }),
        }
    }

    /// Updates exactly the parameters present in `grads`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        match self {
            Self::Adam(a) => a.step(store, grads),
            Self::Sgd(s) => {
                for (id, g) in grads.iter() {
                    let p = store.get_mut(id);
                    p.data
                        .iter_mut()
                        .zip(&g.data)
                        .for_each(|(x, &d)| *x -= s.lr * d);
                }
            }
        }
    }
}

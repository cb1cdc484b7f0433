use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::Optimizer;
use super::NnError;

/// Row-major 2-D array. Batches are rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::Shape {
                op: "tensor",
                expected: (rows, cols),
                got: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::row_vector(vec![v])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// A dense layer: weight `Fin × Fout`, bias `1 × Fout`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Owns every trainable tensor of a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    /// Glorot-uniform weight in `±sqrt(6/(Fin+Fout))`, zero bias.
    pub fn add_linear<R: Rng>(
        &mut self,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Linear {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        let weight = self.add(
            format!("{name}.weight"),
            Tensor {
                rows: fan_in,
                cols: fan_out,
                data: w,
            },
        );
        let bias = self.add(format!("{name}.bias"), Tensor::zeros(1, fan_out));
        Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Total scalar count over `ids`.
    pub fn numel(&self, ids: impl IntoIterator<Item = ParamId>) -> usize {
        ids.into_iter().map(|id| self.get(id).data.len()).sum()
    }

    /// `self ← (1−τ)·self + τ·online` over every tensor.
    pub fn soft_update_from(&mut self, online: &ParamStore, tau: f64) -> Result<(), NnError> {
        if self.tensors.len() != online.tensors.len() {
            return Err(NnError::Shape {
                op: "soft_update",
                expected: (self.tensors.len(), 1),
                got: (online.tensors.len(), 1),
            });
        }
        for (t, o) in self.tensors.iter_mut().zip(&online.tensors) {
            if t.shape() != o.shape() {
                return Err(NnError::Shape {
                    op: "soft_update",
                    expected: t.shape(),
                    got: o.shape(),
                });
            }
            for (a, &b) in t.data.iter_mut().zip(&o.data) {
                *a = (1.0 - tau) * *a + tau * b;
            }
        }
        Ok(())
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters plus optional optimizer state, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub params: ParamStore,
    #[serde(default)]
    pub optimizers: Vec<Optimizer>,
}

impl Checkpoint {
    pub fn new(params: ParamStore, optimizers: Vec<Optimizer>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            params,
            optimizers,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|source| NnError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| NnError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {}",
                ck.version
            )));
        }
        for t in &ck.params.tensors {
            if t.data.len() != t.rows * t.cols {
                return Err(NnError::Checkpoint(
                    "tensor data does not match its shape".into(),
                ));
            }
        }
        Ok(ck)
    }
}

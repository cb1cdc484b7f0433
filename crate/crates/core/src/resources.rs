//! Integer parameter and FLOP ledger.
//!
//! Atomic costs follow the usual counting: one multiply and one add per
//! weight, one add per bias, two operations per ReLU element, three per
//! softmax element. Model reports are declarative lists of rows so that each
//! published breakdown is reproduced line for line, and totals are always
//! the plain sum of rows.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::supergraph::SubGraph;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResourceError {
    #[error("{op} needs positive dimensions")]
    NonPositive { op: &'static str },
    #[error("unknown model '{0}' (expected one of: {known})", known = ModelId::ALL.map(|m| m.name()).join(", "))]
    UnknownModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cost {
    pub params: u64,
    pub flops: u64,
}

impl std::ops::Add for Cost {
    type Output = Cost;
    fn add(self, o: Cost) -> Cost {
        Cost {
            params: self.params + o.params,
            flops: self.flops + o.flops,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtomicOp {
    Linear {
        fan_in: u64,
        fan_out: u64,
    },
    /// 1x1 kernel applied at every one of `height × width` positions.
    Conv2d {
        c_in: u64,
        c_out: u64,
        height: u64,
        width: u64,
    },
    Relu {
        features: u64,
    },
    /// `(X × Y) · (Y × Z)`.
    Matmul {
        x: u64,
        y: u64,
        z: u64,
    },
    Softmax {
        features: u64,
    },
}

impl AtomicOp {
    pub fn cost(self) -> Result<Cost, ResourceError> {
        use AtomicOp::*;
        let (op, dims): (&'static str, &[u64]) = match &self {
            Linear { fan_in, fan_out } => ("Linear", &[*fan_in, *fan_out]),
            Conv2d {
                c_in,
                c_out,
                height,
                width,
            } => ("Conv2d", &[*c_in, *c_out, *height, *width]),
            Relu { features } => ("relu", std::slice::from_ref(features)),
            Matmul { x, y, z } => ("matmul", &[*x, *y, *z]),
            Softmax { features } => ("softmax", std::slice::from_ref(features)),
        };
        if dims.contains(&0) {
            return Err(ResourceError::NonPositive { op });
        }
        Ok(match self {
            Linear { fan_in, fan_out } => Cost {
                params: (fan_in + 1) * fan_out,
                flops: (2 * fan_in + 1) * fan_out,
            },
            Conv2d {
                c_in,
                c_out,
                height,
                width,
            } => Cost {
                params: (c_in + 1) * c_out,
                flops: (2 * c_in + 1) * c_out * height * width,
            },
            Relu { features } => Cost {
                params: 0,
                flops: 2 * features,
            },
            Matmul { x, y, z } => Cost {
                params: 0,
                flops: 2 * y * x * z,
            },
            Softmax { features } => Cost {
                params: 0,
                flops: 3 * features,
            },
        })
    }
}

/// What a row charges: a sequence of atomic ops (e.g. `relu(Linear)`), or a
/// plain operation count for bookkeeping steps that are not atomic ops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Ops(Vec<AtomicOp>),
    Count(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostItem {
    pub description: String,
    pub term: Term,
    pub multiplicity: u64,
}

impl CostItem {
    pub fn ops(description: impl Into<String>, ops: Vec<AtomicOp>) -> Self {
        Self {
            description: description.into(),
            term: Term::Ops(ops),
            multiplicity: 1,
        }
    }

    pub fn count(description: impl Into<String>, n: u64) -> Self {
        Self {
            description: description.into(),
            term: Term::Count(n),
            multiplicity: 1,
        }
    }

    pub fn times(mut self, k: u64) -> Self {
        self.multiplicity *= k;
        self
    }

    fn cost(&self) -> Result<Cost, ResourceError> {
        let unit = match &self.term {
            Term::Ops(ops) => ops.iter().try_fold(
                Cost {
                    params: 0,
                    flops: 0,
                },
                |acc, op| Ok(acc + op.cost()?),
            )?,
            Term::Count(n) => Cost {
                params: *n,
                flops: *n,
            },
        };
        Ok(Cost {
            params: unit.params * self.multiplicity,
            flops: unit.flops * self.multiplicity,
        })
    }
}

/// Intersection geometry the model costs depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntersectionMeta {
    pub lanes_in: u64,
    pub lanes_out: u64,
    pub phases: u64,
    pub links: u64,
    /// Neighborhood size including the target, for graph-attention models.
    pub neighbors: u64,
}

impl IntersectionMeta {
    pub const JINAN: IntersectionMeta = IntersectionMeta {
        lanes_in: 12,
        lanes_out: 12,
        phases: 9,
        links: 36,
        neighbors: 5,
    };
}

/// A parameter table and a FLOP table, each an ordered list of rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCostSpec {
    pub name: String,
    pub param_items: Vec<CostItem>,
    pub flop_items: Vec<CostItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub description: String,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub model: String,
    pub param_rows: Vec<ReportRow>,
    pub flop_rows: Vec<ReportRow>,
    pub total_params: u64,
    pub total_flops: u64,
    /// Parameter storage at 4 bytes per weight.
    pub footprint_bytes: u64,
    /// Parameter storage at 2 bytes per weight (q15).
    pub quantized_footprint_bytes: u64,
}

impl ModelCostSpec {
    pub fn evaluate(&self) -> Result<ResourceReport, ResourceError> {
        let rows =
            |items: &[CostItem], pick: fn(Cost) -> u64| -> Result<Vec<ReportRow>, ResourceError> {
                items
                    .iter()
                    .map(|it| {
                        Ok(ReportRow {
                            description: it.description.clone(),
                            value: pick(it.cost()?),
                        })
                    })
                    .collect()
            };
        let param_rows = rows(&self.param_items, |c| c.params)?;
        let flop_rows = rows(&self.flop_items, |c| c.flops)?;
        let total_params = param_rows.iter().map(|r| r.value).sum();
        let total_flops = flop_rows.iter().map(|r| r.value).sum();
        Ok(ResourceReport {
            model: self.name.clone(),
            param_rows,
            flop_rows,
            total_params,
            total_flops,
            footprint_bytes: 4 * total_params,
            quantized_footprint_bytes: 2 * total_params,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelId {
    TinyLight,
    EcoLight,
    Frap,
    MpLight,
    CoLight,
    Sotl,
    MaxPressure,
    FixedTime,
}

impl ModelId {
    pub const ALL: [ModelId; 8] = [
        ModelId::TinyLight,
        ModelId::EcoLight,
        ModelId::Frap,
        ModelId::MpLight,
        ModelId::CoLight,
        ModelId::Sotl,
        ModelId::MaxPressure,
        ModelId::FixedTime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::TinyLight => "TinyLight",
            ModelId::EcoLight => "EcoLight",
            ModelId::Frap => "FRAP",
            ModelId::MpLight => "MPLight",
            ModelId::CoLight => "CoLight",
            ModelId::Sotl => "SOTL",
            ModelId::MaxPressure => "MaxPressure",
            ModelId::FixedTime => "FixedTime",
        }
    }
}

impl FromStr for ModelId {
    type Err = ResourceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ResourceError::UnknownModel(s.to_string()))
    }
}

fn linear(fan_in: u64, fan_out: u64) -> AtomicOp {
    AtomicOp::Linear { fan_in, fan_out }
}

fn relu_linear(fan_in: u64, fan_out: u64) -> Vec<AtomicOp> {
    vec![
        linear(fan_in, fan_out),
        AtomicOp::Relu { features: fan_out },
    ]
}

/// Built-in breakdown for `model` at the given intersection.
pub fn model_spec(model: ModelId, m: IntersectionMeta) -> ModelCostSpec {
    let (params, flops) = match model {
        ModelId::TinyLight => tinylight_items(m),
        ModelId::EcoLight => (
            vec![
                CostItem::ops("Layer 1 to layer 2", vec![linear(2, 10)]),
                CostItem::ops("Layer 2 to layer 3", vec![linear(10, 10)]),
                CostItem::ops("Layer 3 to output layer", vec![linear(10, 2)]),
            ],
            vec![
                CostItem::ops("Layer 1 to layer 2", relu_linear(2, 10)),
                CostItem::ops("Layer 2 to layer 3", relu_linear(10, 10)),
                CostItem::ops("Layer 3 to output layer", vec![linear(10, 2)]),
            ],
        ),
        ModelId::Frap | ModelId::MpLight => frap_items(m),
        ModelId::CoLight => colight_items(m),
        ModelId::Sotl => (
            vec![CostItem::count("Green and red thresholds", 2)],
            vec![
                CostItem::count("Incoming-lane additions", m.lanes_in),
                CostItem::count("Threshold comparisons", 2),
            ],
        ),
        ModelId::MaxPressure => (
            vec![],
            vec![
                CostItem::count("Lane summations", m.lanes_in + m.lanes_out),
                CostItem::count("Phase comparisons", m.phases),
            ],
        ),
        ModelId::FixedTime => (vec![], vec![]),
    };
    ModelCostSpec {
        name: model.name().to_string(),
        param_items: params,
        flop_items: flops,
    }
}

/// TinyLight instance sampled on a Jinan intersection: features of 12 and 9
/// dims, hidden widths 18 and 20. The parameter row for the second feature
/// is instantiated with 10 inputs, as printed in the published table.
fn tinylight_items(m: IntersectionMeta) -> (Vec<CostItem>, Vec<CostItem>) {
    let (f1, f2, h1, h2, p) = (12, 9, 18, 20, m.phases);
    (
        vec![
            CostItem::ops("Feature 1 to layer 2", vec![linear(f1, h1)]),
            CostItem::ops("Feature 2 to layer 2", vec![linear(f2 + 1, h1)]),
            CostItem::ops("Layer 2 to layer 3", vec![linear(h1, h2)]),
            CostItem::ops("Layer 3 to output layer", vec![linear(h2, p)]),
        ],
        vec![
            CostItem::ops("Feature 1 to layer 2", relu_linear(f1, h1)),
            CostItem::ops("Feature 2 to layer 2", relu_linear(f2, h1)),
            CostItem::count("Element-wise sum on layer 2", h1),
            CostItem::ops("Layer 2 to layer 3", relu_linear(h1, h2)),
            CostItem::ops("Layer 3 to output layer", vec![linear(h2, p)]),
        ],
    )
}

fn frap_items(m: IntersectionMeta) -> (Vec<CostItem>, Vec<CostItem>) {
    let (emb, rep, pair, conv) = (4, 16, 32, 20);
    let (p, q) = (m.phases, m.phases - 1);
    let c2d = |c_in, c_out, height, width| AtomicOp::Conv2d {
        c_in,
        c_out,
        height,
        width,
    };
    (
        vec![
            CostItem::ops("Phase embedding", vec![linear(1, emb)]),
            CostItem::ops("Vehicle embedding", vec![linear(1, emb)]),
            CostItem::ops("Lane-link embedding", vec![linear(2 * emb, rep)]),
            CostItem::ops("Relationship embedding", vec![linear(1, emb)]),
            CostItem::ops("Pair of phases", vec![c2d(pair, conv, 1, 1)]),
            CostItem::ops("Competition mask", vec![c2d(emb, conv, 1, 1)]),
            CostItem::ops("Q-value layer 1 to layer 2", vec![c2d(conv, conv, 1, 1)]),
            CostItem::ops("Q-value layer 2 to layer 3", vec![c2d(conv, 1, 1, 1)]),
        ],
        vec![
            CostItem::ops("Phase embedding", relu_linear(1, emb)),
            CostItem::ops("Vehicle embedding", relu_linear(1, emb)),
            CostItem::ops("Lane-link embedding", relu_linear(2 * emb, rep)),
            CostItem::ops("Relationship embedding", relu_linear(1, emb)),
            CostItem::ops("Pair of phases", vec![c2d(pair, conv, p, q)]),
            CostItem::ops("Competition mask", vec![c2d(emb, conv, p, q)]),
            CostItem::ops(
                "Q-value layer 1 to layer 2",
                vec![
                    c2d(conv, conv, p, q),
                    AtomicOp::Relu {
                        features: conv * p * q,
                    },
                ],
            ),
            CostItem::ops("Q-value layer 2 to layer 3", vec![c2d(conv, 1, p, q)]),
            CostItem::ops(
                "Phase-based aggregation",
                vec![AtomicOp::Matmul {
                    x: rep,
                    y: m.links,
                    z: p,
                }],
            ),
            // The published row multiplies by the conv width (20), not by D_rep.
            CostItem::count("Mask over cube", conv * p * q),
            CostItem::count("Summation over phase", p * q),
        ],
    )
}

fn colight_items(m: IntersectionMeta) -> (Vec<CostItem>, Vec<CostItem>) {
    let (emb, att, rep, heads) = (32, 32, 32, 5);
    let n = m.neighbors;
    // Observation: incoming and outgoing lane counts plus the phase one-hot.
    let obs = m.lanes_in + m.lanes_out + m.phases;
    (
        vec![
            CostItem::ops(
                "Observation embedding layer 1 to layer 2",
                vec![linear(obs, emb)],
            ),
            CostItem::ops(
                "Observation embedding layer 2 to layer 3",
                vec![linear(emb, emb)],
            ),
            CostItem::ops("Embedding to attention heads", vec![linear(emb, att)]).times(heads),
            CostItem::ops(
                "Neighbor embeddings to attention heads",
                vec![linear(emb, att)],
            )
            .times(heads),
            CostItem::ops(
                "Embedding to hidden representation per head",
                vec![linear(emb, rep)],
            )
            .times(heads),
            CostItem::ops("Q-value layer 1 to layer 2", vec![linear(rep, rep)]),
            CostItem::ops("Q-value layer 2 to layer 3", vec![linear(rep, m.phases)]),
        ],
        vec![
            CostItem::ops("Target embedding layer 1", relu_linear(obs, emb)),
            CostItem::ops("Target embedding layer 2", relu_linear(emb, emb)),
            CostItem::ops(
                "Neighbor embeddings",
                [relu_linear(obs, emb), relu_linear(emb, emb)].concat(),
            )
            .times(n - 1),
            CostItem::ops("Embedding to attention heads", relu_linear(emb, att)).times(heads),
            CostItem::ops("Neighbor attention dense layer", relu_linear(emb, att)).times(n * heads),
            CostItem::ops(
                "Attention logits",
                vec![AtomicOp::Matmul { x: n, y: att, z: 1 }],
            )
            .times(heads),
            CostItem::ops("Attention softmax", vec![AtomicOp::Softmax { features: n }])
                .times(heads),
            CostItem::ops("Hidden representation dense layer", relu_linear(emb, rep)).times(heads),
            CostItem::ops(
                "Weighting by attention",
                vec![AtomicOp::Matmul { x: 1, y: n, z: rep }],
            )
            .times(heads),
            CostItem::count("Averaging over heads", (heads + 1) * rep),
            CostItem::ops("Q-value layer 1 to layer 2", relu_linear(rep, rep)),
            CostItem::ops("Q-value layer 2 to layer 3", vec![linear(rep, m.phases)]),
        ],
    )
}

pub fn report(model: ModelId, meta: IntersectionMeta) -> ResourceReport {
    model_spec(model, meta)
        .evaluate()
        .expect("built-in specs have positive dimensions")
}

/// Cost breakdown derived from a sub-graph's actual dimensions.
pub fn subgraph_spec(sub: &SubGraph) -> ModelCostSpec {
    let mut params = Vec::new();
    let mut flops = Vec::new();
    let as_u64 = |d: usize| d as u64;
    for (i, row) in sub.edges1.iter().enumerate() {
        for (j, l) in row.iter().enumerate() {
            let d = format!(
                "Feature {} to layer 2 block {}",
                sub.inputs[i] + 1,
                sub.hidden1[j]
            );
            params.push(CostItem::ops(
                d.clone(),
                vec![linear(as_u64(l.fan_in), as_u64(l.fan_out))],
            ));
            flops.push(CostItem::ops(
                d,
                relu_linear(as_u64(l.fan_in), as_u64(l.fan_out)),
            ));
        }
    }
    let sums = |fan_in: usize, width: u64, layer: &str, flops: &mut Vec<CostItem>| {
        if fan_in > 1 {
            flops.push(CostItem::count(
                format!("Element-wise sum on {layer}"),
                (fan_in as u64 - 1) * width,
            ));
        }
    };
    for &w in &sub.hidden1_dims {
        sums(sub.edges1.len(), as_u64(w), "layer 2", &mut flops);
    }
    for (i, row) in sub.edges2.iter().enumerate() {
        for (j, l) in row.iter().enumerate() {
            let d = format!(
                "Layer 2 block {} to layer 3 block {}",
                sub.hidden1[i], sub.hidden2[j]
            );
            params.push(CostItem::ops(
                d.clone(),
                vec![linear(as_u64(l.fan_in), as_u64(l.fan_out))],
            ));
            flops.push(CostItem::ops(
                d,
                relu_linear(as_u64(l.fan_in), as_u64(l.fan_out)),
            ));
        }
    }
    for &w in &sub.hidden2_dims {
        sums(sub.edges2.len(), as_u64(w), "layer 3", &mut flops);
    }
    for (i, l) in sub.head.iter().enumerate() {
        let d = format!("Layer 3 block {} to output layer", sub.hidden2[i]);
        params.push(CostItem::ops(
            d.clone(),
            vec![linear(as_u64(l.fan_in), as_u64(l.fan_out))],
        ));
        flops.push(CostItem::ops(
            d,
            vec![linear(as_u64(l.fan_in), as_u64(l.fan_out))],
        ));
    }
    sums(
        sub.head.len(),
        as_u64(sub.outputs),
        "output layer",
        &mut flops,
    );
    ModelCostSpec {
        name: "TinyLight sub-graph".into(),
        param_items: params,
        flop_items: flops,
    }
}

pub fn report_subgraph(sub: &SubGraph) -> ResourceReport {
    subgraph_spec(sub)
        .evaluate()
        .expect("sub-graph layers have positive dimensions")
}

/// Ratio of two integer totals.
pub fn ratio(numerator: u64, denominator: u64) -> f64 {
    numerator as f64 / denominator as f64
}

impl ResourceReport {
    pub fn to_table(&self) -> String {
        let width = self
            .param_rows
            .iter()
            .chain(&self.flop_rows)
            .map(|r| r.description.len())
            .max()
            .unwrap_or(0)
            .max(20);
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.model);
        for (title, rows, total) in [
            ("Parameters", &self.param_rows, self.total_params),
            ("FLOPs", &self.flop_rows, self.total_flops),
        ] {
            let _ = writeln!(out, "  {title}");
            for r in rows {
                let _ = writeln!(out, "    {:<width$}  {:>9}", r.description, group(r.value));
            }
            let _ = writeln!(out, "    {:<width$}  {:>9}", "Total", group(total));
        }
        let _ = writeln!(
            out,
            "  Footprint: {} bytes (f32), {} bytes (q15)",
            group(self.footprint_bytes),
            group(self.quantized_footprint_bytes)
        );
        out
    }

    /// Rows as `description,params,flops`; the column a row does not belong
    /// to is left empty. The last row carries the totals.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["description", "params", "flops"])?;
        for r in &self.param_rows {
            w.write_record([r.description.as_str(), &r.value.to_string(), ""])?;
        }
        for r in &self.flop_rows {
            w.write_record([r.description.as_str(), "", &r.value.to_string()])?;
        }
        w.write_record([
            "Total",
            &self.total_params.to_string(),
            &self.total_flops.to_string(),
        ])?;
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Thousands separators, e.g. `1,001`.
fn group(v: u64) -> String {
    let s = v.to_string();
    let mut out = String::new();
    for (k, ch) in s.chars().enumerate() {
        if k > 0 && (s.len() - k).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(rows: &[ReportRow]) -> Vec<u64> {
        rows.iter().map(|r| r.value).collect()
    }

    #[test]
    fn atomic_examples() {
        assert_eq!(
            linear(12, 18).cost().unwrap(),
            Cost {
                params: 234,
                flops: 450
            }
        );
        assert_eq!(AtomicOp::Relu { features: 32 }.cost().unwrap().flops, 64);
        assert_eq!(
            AtomicOp::Matmul { x: 1, y: 5, z: 32 }.cost().unwrap().flops,
            320
        );
        assert_eq!(AtomicOp::Softmax { features: 5 }.cost().unwrap().flops, 15);
        assert!(linear(0, 3).cost().is_err());
        let fused = CostItem::ops("", relu_linear(12, 18)).cost().unwrap();
        assert_eq!(
            fused,
            Cost {
                params: 234,
                flops: 486
            }
        );
    }

    #[test]
    fn conv_on_single_cell_equals_linear() {
        for (a, b) in [(1, 1), (7, 3), (32, 20)] {
            let conv = AtomicOp::Conv2d {
                c_in: a,
                c_out: b,
                height: 1,
                width: 1,
            };
            assert_eq!(conv.cost().unwrap(), linear(a, b).cost().unwrap());
        }
    }

    #[test]
    fn published_rows() {
        let m = IntersectionMeta::JINAN;
        let t = report(ModelId::TinyLight, m);
        assert_eq!(values(&t.param_rows), [234, 198, 380, 189]);
        assert_eq!(values(&t.flop_rows), [486, 378, 18, 780, 369]);
        assert_eq!((t.total_params, t.total_flops), (1_001, 2_031));

        let e = report(ModelId::EcoLight, m);
        assert_eq!(values(&e.param_rows), [30, 110, 22]);
        assert_eq!(values(&e.flop_rows), [70, 230, 42]);

        let f = report(ModelId::Frap, m);
        assert_eq!(values(&f.param_rows), [8, 8, 144, 8, 660, 100, 420, 21]);
        assert_eq!(
            values(&f.flop_rows),
            [20, 20, 304, 20, 93_600, 12_960, 61_920, 2_952, 10_368, 1_440, 72]
        );
        assert_eq!((f.total_params, f.total_flops), (1_369, 183_676));

        let c = report(ModelId::CoLight, m);
        assert_eq!(
            values(&c.param_rows),
            [1_088, 1_056, 5_280, 5_280, 5_280, 1_056, 297]
        );
        assert_eq!(
            values(&c.flop_rows),
            [2_208, 2_144, 17_408, 10_720, 53_600, 1_600, 75, 10_720, 1_600, 192, 2_144, 585]
        );
        assert_eq!((c.total_params, c.total_flops), (19_337, 102_996));
    }

    #[test]
    fn rule_based_costs() {
        let m = IntersectionMeta::JINAN;
        let s = report(ModelId::Sotl, m);
        assert_eq!((s.total_params, s.total_flops), (2, 14));
        let mp = report(ModelId::MaxPressure, m);
        assert_eq!((mp.total_params, mp.total_flops), (0, 33));
        let ft = report(ModelId::FixedTime, m);
        assert_eq!((ft.total_params, ft.total_flops), (0, 0));
    }

    #[test]
    fn model_names_parse() {
        for m in ModelId::ALL {
            assert_eq!(m.name().parse::<ModelId>().unwrap(), m);
        }
        assert_eq!("mplight".parse::<ModelId>().unwrap(), ModelId::MpLight);
        assert!("DQN".parse::<ModelId>().is_err());
    }

    #[test]
    fn multiplicity_scales_rows() {
        let one = CostItem::ops("x", relu_linear(5, 7)).cost().unwrap();
        let four = CostItem::ops("x", relu_linear(5, 7))
            .times(4)
            .cost()
            .unwrap();
        assert_eq!(
            four,
            Cost {
                params: 4 * one.params,
                flops: 4 * one.flops
            }
        );
    }

    #[test]
    fn table_and_csv_output() {
        let r = report(ModelId::TinyLight, IntersectionMeta::JINAN);
        let t = r.to_table();
        assert!(t.contains("1,001") && t.contains("2,031"));
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("description,params,flops\n"));
        assert!(csv.ends_with("Total,1001,2031\n"));
        assert_eq!(group(183_676), "183,676");
        assert_eq!(group(7), "7");
    }
}

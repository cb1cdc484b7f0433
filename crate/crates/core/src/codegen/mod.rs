//! Standalone C for an extracted sub-graph, a q15 variant with a bit-exact
//! Rust mirror, the test-vector file format and the host harness.
//!
//! # Generated file layout
//!
//! One `.c` file, no heap, no libm. The q15 variant includes `<stdint.h>`
//! and nothing else; float32 includes nothing. With prefix `tl`:
//!
//! * `TL_NUM_INPUTS`, `TL_IN<k>_DIM`, `TL_TOTAL_INPUTS`, `TL_NUM_PHASES` and
//!   `TL_BUF_LEN` (ping-pong buffer length) as macros.
//! * `static const` weight tables named `tl_e1_<i>_<j>_w` / `_b` (retained
//!   input `i` to first-hidden block `j`), `tl_e2_<i>_<j>_w` / `_b` and
//!   `tl_head_<i>_w` / `_b`. Weights are row-major `[fan_in][fan_out]`.
//! * `void tl_forward(const T in0[..], const T in1[..], ..., Q q[TL_NUM_PHASES])`
//!   where `T`/`Q` are `float`/`float` or `int16_t`/`int32_t`. Inputs are raw
//!   feature values; normalization is already folded into the first layer.
//! * `void tl_forward_packed(const T x[TL_TOTAL_INPUTS], Q q[..])`, the same
//!   call with inputs concatenated.
//! * q15 only: `void tl_quantize_packed(const float x[..], int16_t out[..])`.
//! * Optional `int tl_argmax(const Q q[..])`, ties to the lowest index.
//! * `TL_MODEL_*` aliases used by the host harness.
//!
//! Each edge computes `ReLU(W·x + b)` (no ReLU into the head) and the
//! edges into a block are summed, so only linear maps, ReLU and sums occur.

mod harness;
mod quant;
mod vectors;

pub use harness::{run_harness, HarnessError, HarnessResult, ARGMAX_MARGIN};
pub use quant::{quantize_q15, Q15Edge, Q15Model, MIN_CALIBRATION_STATES};
pub use vectors::{emit_test_vectors, InputSource, Reference, TestVector, TestVectorSet};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Linear;
use crate::supergraph::SubGraph;

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("symbol prefix {0:?} is not a C identifier")]
    Prefix(String),
    #[error("non-finite constant in {0}")]
    NonFinite(String),
    #[error("unsupported structure: {0}")]
    Unsupported(String),
    #[error("q15 needs at least {needed} calibration states, got {got}")]
    Calibration { needed: usize, got: usize },
    #[error("q15 precision requires a quantized model")]
    MissingQuantization,
    #[error("test vectors line {line}: {message}")]
    Vectors { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Float32,
    Q15,
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::Float32 => "float32",
            Precision::Q15 => "q15",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodegenOptions {
    pub precision: Precision,
    pub prefix: String,
    pub emit_argmax: bool,
    pub test_vector_count: usize,
}

impl Default for CodegenOptions {
    fn default() -> Self {
        Self {
            precision: Precision::Float32,
            prefix: "tl".to_string(),
            emit_argmax: true,
            test_vector_count: 1000,
        }
    }
}

/// Static sizes of a generated file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    /// Scalar constants in the weight tables.
    pub constants: usize,
    /// Bytes of `static const` tables (ROM).
    pub static_bytes: usize,
    /// Bytes of the two ping-pong activation buffers (stack RAM).
    pub work_bytes: usize,
}

impl Footprint {
    pub const ROM_LIMIT: usize = 32_768;
    pub const RAM_LIMIT: usize = 2_048;

    pub fn within_limits(&self) -> bool {
        self.static_bytes + self.work_bytes <= Self::ROM_LIMIT && self.work_bytes <= Self::RAM_LIMIT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedC {
    pub source: String,
    pub footprint: Footprint,
}

fn check_prefix(prefix: &str) -> Result<(), CodegenError> {
    let mut chars = prefix.chars();
    let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(CodegenError::Prefix(prefix.to_string()))
    }
}

fn check_structure(sub: &SubGraph) -> Result<(), CodegenError> {
    if sub.input_dims.is_empty()
        || sub.hidden1_dims.is_empty()
        || sub.hidden2_dims.is_empty()
        || sub.outputs == 0
    {
        return Err(CodegenError::Unsupported(
            "every layer needs at least one component".into(),
        ));
    }
    Ok(())
}

/// Length of each ping-pong buffer: the widest concatenated hidden layer.
fn buf_len(sub: &SubGraph) -> usize {
    let h1: usize = sub.hidden1_dims.iter().sum();
    let h2: usize = sub.hidden2_dims.iter().sum();
    h1.max(h2)
}

pub fn footprint(sub: &SubGraph, precision: Precision) -> Footprint {
    let constants = sub.num_params();
    let width = match precision {
        Precision::Float32 => 4,
        Precision::Q15 => 2,
    };
    Footprint {
        constants,
        static_bytes: constants * width,
        work_bytes: 2 * buf_len(sub) * width,
    }
}

/// Shortest round-trip decimal with a `f` suffix.
fn c_float(v: f32, what: &str) -> Result<String, CodegenError> {
    if !v.is_finite() {
        return Err(CodegenError::NonFinite(what.to_string()));
    }
    let mut s = format!("{v:?}");
    if !s.contains(['.', 'e']) {
        s.push_str(".0");
    }
    s.push('f');
    Ok(s)
}

fn write_table<T: std::fmt::Display>(out: &mut String, ty: &str, name: &str, values: &[T]) {
    let _ = write!(out, "static const {ty} {name}[{}] = {{", values.len());
    for (k, v) in values.iter().enumerate() {
        if k % 8 == 0 {
            out.push_str("\n    ");
        } else {
            out.push(' ');
        }
        let _ = write!(out, "{v},");
    }
    out.push_str("\n};\n");
}

/// One edge's tables and name stem, in forward order.
struct EdgeRef {
    name: String,
    linear: Linear,
}

fn edge_refs(sub: &SubGraph, prefix: &str) -> (Vec<Vec<EdgeRef>>, Vec<Vec<EdgeRef>>, Vec<EdgeRef>) {
    let layer = |edges: &[Vec<Linear>], tag: &str| -> Vec<Vec<EdgeRef>> {
        edges
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, &linear)| EdgeRef {
                        name: format!("{prefix}_{tag}_{i}_{j}"),
                        linear,
                    })
                    .collect()
            })
            .collect()
    };
    let head = sub
        .head
        .iter()
        .enumerate()
        .map(|(i, &linear)| EdgeRef {
            name: format!("{prefix}_head_{i}"),
            linear,
        })
        .collect();
    (layer(&sub.edges1, "e1"), layer(&sub.edges2, "e2"), head)
}

fn header_macros(out: &mut String, sub: &SubGraph, upper: &str) {
    let _ = writeln!(out, "#define {upper}_NUM_INPUTS {}", sub.input_dims.len());
    for (k, d) in sub.input_dims.iter().enumerate() {
        let _ = writeln!(out, "#define {upper}_IN{k}_DIM {d}");
    }
    let _ = writeln!(
        out,
        "#define {upper}_TOTAL_INPUTS {}",
        sub.input_dims.iter().sum::<usize>()
    );
    let _ = writeln!(out, "#define {upper}_NUM_PHASES {}", sub.outputs);
    let _ = writeln!(out, "#define {upper}_BUF_LEN {}\n", buf_len(sub));
}

/// `(in0, in1, …)` parameter list and the packed-call argument list.
fn input_params(sub: &SubGraph, ty: &str) -> (String, String) {
    let params = (0..sub.input_dims.len())
        .map(|k| format!("const {ty} in{k}[{}]", sub.input_dims[k]))
        .collect::<Vec<_>>()
        .join(", ");
    let mut offset = 0;
    let args = sub
        .input_dims
        .iter()
        .map(|&d| {
            let a = format!("x + {offset}");
            offset += d;
            a
        })
        .collect::<Vec<_>>()
        .join(", ");
    (params, args)
}

/// Sources for each hidden/output block: `(source expr, offset)` per layer.
struct Plan {
    /// Per layer, per block: buffer expression and offset where it is written.
    h1: Vec<(String, usize)>,
    h2: Vec<(String, usize)>,
}

fn plan(sub: &SubGraph) -> Plan {
    let place = |dims: &[usize], buf: &str| -> Vec<(String, usize)> {
        let mut offset = 0;
        dims.iter()
            .map(|&d| {
                let p = (buf.to_string(), offset);
                offset += d;
                p
            })
            .collect()
    };
    Plan {
        h1: place(&sub.hidden1_dims, "buf_a"),
        h2: place(&sub.hidden2_dims, "buf_b"),
    }
}

fn float_edge(out: &mut String, e: &EdgeRef, src: &str, dst: &str, relu: bool) {
    let (n_in, n_out) = (e.linear.fan_in, e.linear.fan_out);
    let _ = writeln!(out, "    for (o = 0; o < {n_out}; ++o) {{");
    let _ = writeln!(out, "        float acc = {}_b[o];", e.name);
    let _ = writeln!(out, "        for (i = 0; i < {n_in}; ++i) {{");
    let _ = writeln!(
        out,
        "            acc += {src}[i] * {}_w[i * {n_out} + o];",
        e.name
    );
    out.push_str("        }\n");
    if relu {
        let _ = writeln!(out, "        {dst}[o] += acc > 0.0f ? acc : 0.0f;");
    } else {
        let _ = writeln!(out, "        {dst}[o] += acc;");
    }
    out.push_str("    }\n");
}

fn emit_float(sub: &SubGraph, opts: &CodegenOptions) -> Result<String, CodegenError> {
    let p = &opts.prefix;
    let upper = p.to_ascii_uppercase();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "/* Sub-graph forward pass, float32. Generated; do not edit. */\n"
    );
    header_macros(&mut out, sub, &upper);

    let (e1, e2, head) = edge_refs(sub, p);
    for e in e1
        .iter()
        .flatten()
        .chain(e2.iter().flatten())
        .chain(head.iter())
    {
        for (suffix, id) in [("w", e.linear.weight), ("b", e.linear.bias)] {
            let name = format!("{}_{suffix}", e.name);
            let vals = sub
                .store
                .get(id)
                .data
                .iter()
                .map(|&v| c_float(v as f32, &name))
                .collect::<Result<Vec<_>, _>>()?;
            write_table(&mut out, "float", &name, &vals);
        }
    }
    out.push('\n');

    let (params, args) = input_params(sub, "float");
    let np = sub.outputs;
    let _ = writeln!(out, "void {p}_forward({params}, float q[{np}]);");
    let _ = writeln!(
        out,
        "void {p}_forward_packed(const float x[{upper}_TOTAL_INPUTS], float q[{np}]);"
    );
    if opts.emit_argmax {
        let _ = writeln!(out, "int {p}_argmax(const float q[{np}]);");
    }
    out.push('\n');

    let pl = plan(sub);
    let _ = writeln!(out, "void {p}_forward({params}, float q[{np}])\n{{");
    let _ = writeln!(
        out,
        "    float buf_a[{upper}_BUF_LEN];\n    float buf_b[{upper}_BUF_LEN];\n    int i, o;\n"
    );
    let _ = writeln!(out, "    for (o = 0; o < {upper}_BUF_LEN; ++o) {{\n        buf_a[o] = 0.0f;\n        buf_b[o] = 0.0f;\n    }}");
    let _ = writeln!(
        out,
        "    for (o = 0; o < {np}; ++o) {{\n        q[o] = 0.0f;\n    }}"
    );
    for (i, row) in e1.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            let (buf, off) = &pl.h1[j];
            float_edge(
                &mut out,
                e,
                &format!("in{i}"),
                &format!("({buf} + {off})"),
                true,
            );
        }
    }
    for (i, row) in e2.iter().enumerate() {
        let (sbuf, soff) = &pl.h1[i];
        for (j, e) in row.iter().enumerate() {
            let (buf, off) = &pl.h2[j];
            float_edge(
                &mut out,
                e,
                &format!("({sbuf} + {soff})"),
                &format!("({buf} + {off})"),
                true,
            );
        }
    }
    for (i, e) in head.iter().enumerate() {
        let (sbuf, soff) = &pl.h2[i];
        float_edge(&mut out, e, &format!("({sbuf} + {soff})"), "q", false);
    }
    out.push_str("}\n\n");

    let _ = writeln!(
        out,
        "void {p}_forward_packed(const float x[{upper}_TOTAL_INPUTS], float q[{np}])\n{{\n    {p}_forward({args}, q);\n}}\n"
    );
    if opts.emit_argmax {
        write_argmax(&mut out, p, "float", np);
    }
    let _ = writeln!(out, "#define TL_MODEL_Q15 0");
    let _ = writeln!(out, "#define TL_MODEL_TOTAL_INPUTS {upper}_TOTAL_INPUTS");
    let _ = writeln!(out, "#define TL_MODEL_OUTPUTS {upper}_NUM_PHASES");
    let _ = writeln!(out, "#define TL_MODEL_FORWARD_PACKED {p}_forward_packed");
    Ok(out)
}

fn write_argmax(out: &mut String, p: &str, ty: &str, np: usize) {
    let _ = writeln!(
        out,
        "int {p}_argmax(const {ty} q[{np}])\n{{\n    int k, best = 0;\n    for (k = 1; k < {np}; ++k) {{\n        if (q[k] > q[best]) {{\n            best = k;\n        }}\n    }}\n    return best;\n}}\n"
    );
}

/// Emits the C source. q15 requires `quant`, built from the same sub-graph.
pub fn emit_c(
    sub: &SubGraph,
    opts: &CodegenOptions,
    quant: Option<&Q15Model>,
) -> Result<GeneratedC, CodegenError> {
    check_prefix(&opts.prefix)?;
    check_structure(sub)?;
    let folded = sub.fold_input_scale();
    let source = match opts.precision {
        Precision::Float32 => emit_float(&folded, opts)?,
        Precision::Q15 => quant::emit_q15(quant.ok_or(CodegenError::MissingQuantization)?, opts)?,
    };
    Ok(GeneratedC {
        source,
        footprint: footprint(sub, opts.precision),
    })
}

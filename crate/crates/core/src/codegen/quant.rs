//! Post-training q15 quantization with power-of-two per-tensor scales.
//!
//! A tensor with exponent `e` stores `round(v / 2^e)` in `[-32767, 32767]`.
//! Because every scale is a power of two, each requantization is a rounding
//! shift and the input quantizer is an exact float multiply, so the Rust
//! mirror below reproduces the generated C bit for bit.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    check_prefix, check_structure, write_argmax, write_table, CodegenError, CodegenOptions,
};
use crate::nn::Linear;
use crate::supergraph::SubGraph;

pub const MIN_CALIBRATION_STATES: usize = 100;
const Q_MAX: i64 = 32_767;
/// Products of two q15 values are shifted down by this before accumulation.
const PRODUCT_SHIFT: i32 = 15;

/// Smallest exponent whose scale covers `max_abs`; unit scale when degenerate.
fn exponent_for(max_abs: f64) -> i32 {
    if max_abs <= 0.0 || !max_abs.is_finite() {
        return 0;
    }
    let mut e = (max_abs / Q_MAX as f64).log2().ceil() as i32;
    while max_abs / 2f64.powi(e) > Q_MAX as f64 {
        e += 1;
    }
    e
}

fn quantize_value(v: f64, e: i32) -> i16 {
    (v / 2f64.powi(e))
        .round()
        .clamp(-(Q_MAX as f64), Q_MAX as f64) as i16
}

fn sat32(v: i64) -> i32 {
    v.clamp(-(i32::MAX as i64), i32::MAX as i64) as i32
}

/// Right shift by `s`, rounding half away from zero.
fn rshr(v: i64, s: i32) -> i64 {
    if s == 0 {
        return v;
    }
    if s >= 40 {
        return 0;
    }
    let half = 1i64 << (s - 1);
    if v >= 0 {
        (v + half) >> s
    } else {
        -((-v + half) >> s)
    }
}

/// Re-expresses `v` (units `2^from`) in units `2^to`.
fn rescale(v: i32, from: i32, to: i32) -> i32 {
    let d = from - to;
    if d >= 0 {
        if d > 31 {
            return match v {
                0 => 0,
                v if v > 0 => i32::MAX,
                _ => -i32::MAX,
            };
        }
        sat32(v as i64 * (1i64 << d))
    } else {
        sat32(rshr(v as i64, -d))
    }
}

/// Quantizes one raw input as the generated C does, in f32.
fn quantize_input(x: f32, inv_scale: f32) -> i16 {
    let v = (x * inv_scale).clamp(-(Q_MAX as f32), Q_MAX as f32);
    if v >= 0.0 {
        (v + 0.5) as i32 as i16
    } else {
        -((-v + 0.5) as i32) as i16
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Q15Edge {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `[fan_in][fan_out]`, units `2^weight_exp`.
    pub weight: Vec<i16>,
    /// Units `2^pre_exp`.
    pub bias: Vec<i16>,
    pub weight_exp: i32,
    pub input_exp: i32,
    /// Exponent of the pre-activation `W·x + b`.
    pub pre_exp: i32,
    /// Exponent of the block this edge feeds.
    pub out_exp: i32,
    pub relu: bool,
}

impl Q15Edge {
    fn acc_exp(&self) -> i32 {
        self.weight_exp + self.input_exp + PRODUCT_SHIFT
    }

    /// This edge's contribution to output `o` of its block, in `2^out_exp` units.
    fn contribution(&self, x: &[i16], o: usize) -> i32 {
        let mut acc: i32 = 0;
        for (i, &xi) in x.iter().enumerate() {
            let p = rshr(
                self.weight[i * self.fan_out + o] as i64 * xi as i64,
                PRODUCT_SHIFT,
            );
            acc = sat32(acc as i64 + p);
        }
        let mut pre =
            sat32(rescale(acc, self.acc_exp(), self.pre_exp) as i64 + self.bias[o] as i64);
        if self.relu && pre < 0 {
            pre = 0;
        }
        rescale(pre, self.pre_exp, self.out_exp)
    }
}

/// Quantized tables and exponents of one sub-graph (input scale folded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Q15Model {
    pub input_dims: Vec<usize>,
    pub hidden1_dims: Vec<usize>,
    pub hidden2_dims: Vec<usize>,
    pub outputs: usize,
    pub input_exps: Vec<i32>,
    pub hidden1_exps: Vec<i32>,
    pub hidden2_exps: Vec<i32>,
    pub q_exp: i32,
    pub edges1: Vec<Vec<Q15Edge>>,
    pub edges2: Vec<Vec<Q15Edge>>,
    pub head: Vec<Q15Edge>,
}

fn block_forward(from: &[Vec<i16>], edges: &[Vec<Q15Edge>], dims: &[usize]) -> Vec<Vec<i16>> {
    dims.iter()
        .enumerate()
        .map(|(j, &d)| {
            (0..d)
                .map(|o| {
                    let total = from.iter().enumerate().fold(0i32, |t, (i, x)| {
                        sat32(t as i64 + edges[i][j].contribution(x, o) as i64)
                    });
                    total.clamp(-(Q_MAX as i32), Q_MAX as i32) as i16
                })
                .collect()
        })
        .collect()
}

impl Q15Model {
    pub fn total_inputs(&self) -> usize {
        self.input_dims.iter().sum()
    }

    pub fn num_constants(&self) -> usize {
        self.edges1
            .iter()
            .flatten()
            .chain(self.edges2.iter().flatten())
            .chain(&self.head)
            .map(|e| e.weight.len() + e.bias.len())
            .sum()
    }

    /// Input quantizer of the generated `quantize_packed`.
    pub fn quantize_inputs(&self, packed: &[f32]) -> Vec<i16> {
        let mut out = Vec::with_capacity(packed.len());
        let mut offset = 0;
        for (&d, &e) in self.input_dims.iter().zip(&self.input_exps) {
            let inv = 2f32.powi(-e);
            out.extend(
                packed[offset..offset + d]
                    .iter()
                    .map(|&x| quantize_input(x, inv)),
            );
            offset += d;
        }
        out
    }

    /// Integer Q-values for quantized packed inputs; units `2^q_exp`.
    pub fn forward_quantized(&self, packed: &[i16]) -> Vec<i32> {
        let mut offset = 0;
        let inputs: Vec<Vec<i16>> = self
            .input_dims
            .iter()
            .map(|&d| {
                let v = packed[offset..offset + d].to_vec();
                offset += d;
                v
            })
            .collect();
        let h1 = block_forward(&inputs, &self.edges1, &self.hidden1_dims);
        let h2 = block_forward(&h1, &self.edges2, &self.hidden2_dims);
        (0..self.outputs)
            .map(|o| {
                h2.iter().zip(&self.head).fold(0i32, |t, (x, e)| {
                    sat32(t as i64 + e.contribution(x, o) as i64)
                })
            })
            .collect()
    }

    /// Raw packed inputs to integer Q-values, exactly as the generated C.
    pub fn forward(&self, packed: &[f32]) -> Vec<i32> {
        self.forward_quantized(&self.quantize_inputs(packed))
    }

    pub fn dequantize(&self, q: &[i32]) -> Vec<f64> {
        let s = 2f64.powi(self.q_exp);
        q.iter().map(|&v| v as f64 * s).collect()
    }
}

/// Running max-abs of every quantized tensor over the calibration set.
struct Ranges {
    inputs: Vec<f64>,
    pre1: Vec<Vec<f64>>,
    pre2: Vec<Vec<f64>>,
    pre_head: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    q: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dense(sub: &SubGraph, x: &[f64], l: Linear) -> Vec<f64> {
    crate::supergraph::dense_values(&sub.store, x, l)
}

fn calibrate(sub: &SubGraph, states: &[Vec<Vec<f64>>]) -> Ranges {
    let bias_abs = |l: Linear| max_abs(&sub.store.get(l.bias).data);
    let mut r = Ranges {
        inputs: vec![0.0; sub.input_dims.len()],
        pre1: sub
            .edges1
            .iter()
            .map(|row| row.iter().map(|&l| bias_abs(l)).collect())
            .collect(),
        pre2: sub
            .edges2
            .iter()
            .map(|row| row.iter().map(|&l| bias_abs(l)).collect())
            .collect(),
        pre_head: sub.head.iter().map(|&l| bias_abs(l)).collect(),
        h1: vec![0.0; sub.hidden1_dims.len()],
        h2: vec![0.0; sub.hidden2_dims.len()],
        q: 0.0,
    };
    let layer = |from: &[Vec<f64>],
                 edges: &[Vec<Linear>],
                 pre: &mut Vec<Vec<f64>>,
                 relu: bool|
     -> Vec<Vec<f64>> {
        (0..edges[0].len())
            .map(|j| {
                let mut out = vec![0.0; edges[0][j].fan_out];
                for (i, x) in from.iter().enumerate() {
                    let y = dense(sub, x, edges[i][j]);
                    pre[i][j] = pre[i][j].max(max_abs(&y));
                    for (o, v) in out.iter_mut().zip(&y) {
                        *o += if relu { v.max(0.0) } else { *v };
                    }
                }
                out
            })
            .collect()
    };
    let head: Vec<Vec<Linear>> = sub.head.iter().map(|&l| vec![l]).collect();
    for s in states {
        for (m, x) in r.inputs.iter_mut().zip(s) {
            *m = m.max(max_abs(x));
        }
        let h1 = layer(s, &sub.edges1, &mut r.pre1, true);
        let h2 = layer(&h1, &sub.edges2, &mut r.pre2, true);
        let mut pre_head: Vec<Vec<f64>> = r.pre_head.iter().map(|&v| vec![v]).collect();
        let q = layer(&h2, &head, &mut pre_head, false).remove(0);
        r.pre_head = pre_head.into_iter().map(|v| v[0]).collect();
        for (m, h) in r.h1.iter_mut().zip(&h1) {
            *m = m.max(max_abs(h));
        }
        for (m, h) in r.h2.iter_mut().zip(&h2) {
            *m = m.max(max_abs(h));
        }
        r.q = r.q.max(max_abs(&q));
    }
    r
}

fn quantize_edge(
    sub: &SubGraph,
    l: Linear,
    input_exp: i32,
    pre_max: f64,
    out_exp: i32,
    relu: bool,
) -> Q15Edge {
    let w = &sub.store.get(l.weight).data;
    let b = &sub.store.get(l.bias).data;
    let weight_exp = exponent_for(max_abs(w));
    let pre_exp = exponent_for(pre_max);
    Q15Edge {
        fan_in: l.fan_in,
        fan_out: l.fan_out,
        weight: w.iter().map(|&v| quantize_value(v, weight_exp)).collect(),
        bias: b.iter().map(|&v| quantize_value(v, pre_exp)).collect(),
        weight_exp,
        input_exp,
        pre_exp,
        out_exp,
        relu,
    }
}

/// Quantizes `sub` (its input scale folded in) using raw calibration
/// states, one vector per retained input.
pub fn quantize_q15(sub: &SubGraph, states: &[Vec<Vec<f64>>]) -> Result<Q15Model, CodegenError> {
    check_structure(sub)?;
    if states.len() < MIN_CALIBRATION_STATES {
        return Err(CodegenError::Calibration {
            needed: MIN_CALIBRATION_STATES,
            got: states.len(),
        });
    }
    let sub = sub.fold_input_scale();
    let r = calibrate(&sub, states);
    let input_exps: Vec<i32> = r.inputs.iter().map(|&m| exponent_for(m)).collect();
    if input_exps.iter().any(|&e| !(-126..=127).contains(&-e)) {
        return Err(CodegenError::Unsupported(
            "input scale outside the f32 exponent range".into(),
        ));
    }
    let hidden1_exps: Vec<i32> = r.h1.iter().map(|&m| exponent_for(m)).collect();
    let hidden2_exps: Vec<i32> = r.h2.iter().map(|&m| exponent_for(m)).collect();
    let q_exp = exponent_for(r.q);
    let edges1 = sub
        .edges1
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &l)| {
                    quantize_edge(&sub, l, input_exps[i], r.pre1[i][j], hidden1_exps[j], true)
                })
                .collect()
        })
        .collect();
    let edges2 = sub
        .edges2
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &l)| {
                    quantize_edge(
                        &sub,
                        l,
                        hidden1_exps[i],
                        r.pre2[i][j],
                        hidden2_exps[j],
                        true,
                    )
                })
                .collect()
        })
        .collect();
    let head = sub
        .head
        .iter()
        .enumerate()
        .map(|(i, &l)| quantize_edge(&sub, l, hidden2_exps[i], r.pre_head[i], q_exp, false))
        .collect();
    Ok(Q15Model {
        input_dims: sub.input_dims.clone(),
        hidden1_dims: sub.hidden1_dims.clone(),
        hidden2_dims: sub.hidden2_dims.clone(),
        outputs: sub.outputs,
        input_exps,
        hidden1_exps,
        hidden2_exps,
        q_exp,
        edges1,
        edges2,
        head,
    })
}

const HELPERS: &str = r"static int32_t PFX_sat32(int64_t v)
{
    if (v > INT32_MAX) {
        return INT32_MAX;
    }
    if (v < -INT32_MAX) {
        return -INT32_MAX;
    }
    return (int32_t)v;
}

static int64_t PFX_rshr(int64_t v, int s)
{
    int64_t half;
    if (s == 0) {
        return v;
    }
    if (s >= 40) {
        return 0;
    }
    half = (int64_t)1 << (s - 1);
    return v >= 0 ? (v + half) >> s : -((-v + half) >> s);
}

static int32_t PFX_rescale(int32_t v, int d)
{
    if (d > 31) {
        return v == 0 ? 0 : (v > 0 ? INT32_MAX : -INT32_MAX);
    }
    if (d >= 0) {
        return PFX_sat32((int64_t)v * ((int64_t)1 << d));
    }
    return PFX_sat32(PFX_rshr(v, -d));
}

static int16_t PFX_clamp16(int32_t v)
{
    return (int16_t)(v > 32767 ? 32767 : (v < -32767 ? -32767 : v));
}

static int16_t PFX_quantize1(float x, float inv)
{
    float v = x * inv;
    if (v > 32767.0f) {
        v = 32767.0f;
    }
    if (v < -32767.0f) {
        v = -32767.0f;
    }
    return v >= 0.0f ? (int16_t)(int32_t)(v + 0.5f) : (int16_t)(-(int32_t)(-v + 0.5f));
}

";

/// Statement adding edge `e`'s contribution for output `o` to `total`.
fn q15_edge(out: &mut String, p: &str, name: &str, e: &Q15Edge, src: &str) {
    let _ = writeln!(out, "        acc = 0;");
    let _ = writeln!(out, "        for (i = 0; i < {}; ++i) {{", e.fan_in);
    let _ = writeln!(
        out,
        "            acc = {p}_sat32((int64_t)acc + {p}_rshr((int64_t){name}_w[i * {} + o] * {src}[i], {PRODUCT_SHIFT}));",
        e.fan_out
    );
    out.push_str("        }\n");
    let _ = writeln!(
        out,
        "        pre = {p}_sat32((int64_t){p}_rescale(acc, {}) + {name}_b[o]);",
        e.acc_exp() - e.pre_exp
    );
    if e.relu {
        out.push_str("        if (pre < 0) {\n            pre = 0;\n        }\n");
    }
    let _ = writeln!(
        out,
        "        total = {p}_sat32((int64_t)total + {p}_rescale(pre, {}));",
        e.pre_exp - e.out_exp
    );
}

fn f32_hex_pow2(e: i32) -> String {
    format!("0x1p{e}f")
}

pub(super) fn emit_q15(m: &Q15Model, opts: &CodegenOptions) -> Result<String, CodegenError> {
    check_prefix(&opts.prefix)?;
    let p = &opts.prefix;
    let upper = p.to_ascii_uppercase();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "/* Sub-graph forward pass, q15 fixed point. Generated; do not edit. */\n"
    );
    out.push_str("#include <stdint.h>\n\n");
    let _ = writeln!(out, "#define {upper}_NUM_INPUTS {}", m.input_dims.len());
    for (k, (d, e)) in m.input_dims.iter().zip(&m.input_exps).enumerate() {
        let _ = writeln!(out, "#define {upper}_IN{k}_DIM {d}");
        let _ = writeln!(out, "#define {upper}_IN{k}_EXP {e}");
    }
    let _ = writeln!(out, "#define {upper}_TOTAL_INPUTS {}", m.total_inputs());
    let _ = writeln!(out, "#define {upper}_NUM_PHASES {}", m.outputs);
    let _ = writeln!(out, "/* Q-values are in units of 2^{upper}_Q_EXP. */");
    let _ = writeln!(out, "#define {upper}_Q_EXP {}", m.q_exp);
    let h1: usize = m.hidden1_dims.iter().sum();
    let h2: usize = m.hidden2_dims.iter().sum();
    let _ = writeln!(out, "#define {upper}_BUF_LEN {}\n", h1.max(h2));

    let name1 = |i: usize, j: usize| format!("{p}_e1_{i}_{j}");
    let name2 = |i: usize, j: usize| format!("{p}_e2_{i}_{j}");
    let name_head = |i: usize| format!("{p}_head_{i}");
    let mut tables: Vec<(String, &Q15Edge)> = Vec::new();
    for (i, row) in m.edges1.iter().enumerate() {
        tables.extend(row.iter().enumerate().map(|(j, e)| (name1(i, j), e)));
    }
    for (i, row) in m.edges2.iter().enumerate() {
        tables.extend(row.iter().enumerate().map(|(j, e)| (name2(i, j), e)));
    }
    tables.extend(m.head.iter().enumerate().map(|(i, e)| (name_head(i), e)));
    for (name, e) in &tables {
        write_table(&mut out, "int16_t", &format!("{name}_w"), &e.weight);
        write_table(&mut out, "int16_t", &format!("{name}_b"), &e.bias);
    }
    out.push('\n');
    out.push_str(&HELPERS.replace("PFX", p));

    let np = m.outputs;
    let params = (0..m.input_dims.len())
        .map(|k| format!("const int16_t in{k}[{}]", m.input_dims[k]))
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(out, "void {p}_quantize_packed(const float x[{upper}_TOTAL_INPUTS], int16_t out[{upper}_TOTAL_INPUTS]);");
    let _ = writeln!(out, "void {p}_forward({params}, int32_t q[{np}]);");
    let _ = writeln!(
        out,
        "void {p}_forward_packed(const int16_t x[{upper}_TOTAL_INPUTS], int32_t q[{np}]);"
    );
    if opts.emit_argmax {
        let _ = writeln!(out, "int {p}_argmax(const int32_t q[{np}]);");
    }
    out.push('\n');

    let _ = writeln!(out, "void {p}_quantize_packed(const float x[{upper}_TOTAL_INPUTS], int16_t out[{upper}_TOTAL_INPUTS])\n{{\n    int i;");
    let mut offset = 0;
    for (&d, &e) in m.input_dims.iter().zip(&m.input_exps) {
        let _ = writeln!(
            out,
            "    for (i = {offset}; i < {}; ++i) {{\n        out[i] = {p}_quantize1(x[i], {});\n    }}",
            offset + d,
            f32_hex_pow2(-e)
        );
        offset += d;
    }
    out.push_str("}\n\n");

    let _ = writeln!(out, "void {p}_forward({params}, int32_t q[{np}])\n{{");
    let _ = writeln!(out, "    int16_t buf_a[{upper}_BUF_LEN];\n    int16_t buf_b[{upper}_BUF_LEN];\n    int32_t acc, pre, total;\n    int i, o;\n");
    let mut off = 0;
    for (j, &d) in m.hidden1_dims.iter().enumerate() {
        let _ = writeln!(out, "    for (o = 0; o < {d}; ++o) {{\n        total = 0;");
        for (i, row) in m.edges1.iter().enumerate() {
            q15_edge(&mut out, p, &name1(i, j), &row[j], &format!("in{i}"));
        }
        let _ = writeln!(
            out,
            "        buf_a[{off} + o] = {p}_clamp16(total);\n    }}"
        );
        off += d;
    }
    let h1_offsets: Vec<usize> = m
        .hidden1_dims
        .iter()
        .scan(0, |s, &d| {
            let o = *s;
            *s += d;
            Some(o)
        })
        .collect();
    let mut off = 0;
    for (j, &d) in m.hidden2_dims.iter().enumerate() {
        let _ = writeln!(out, "    for (o = 0; o < {d}; ++o) {{\n        total = 0;");
        for (i, row) in m.edges2.iter().enumerate() {
            q15_edge(
                &mut out,
                p,
                &name2(i, j),
                &row[j],
                &format!("(buf_a + {})", h1_offsets[i]),
            );
        }
        let _ = writeln!(
            out,
            "        buf_b[{off} + o] = {p}_clamp16(total);\n    }}"
        );
        off += d;
    }
    let _ = writeln!(out, "    for (o = 0; o < {np}; ++o) {{\n        total = 0;");
    let mut h2_off = 0;
    for (i, e) in m.head.iter().enumerate() {
        q15_edge(
            &mut out,
            p,
            &name_head(i),
            e,
            &format!("(buf_b + {h2_off})"),
        );
        h2_off += m.hidden2_dims[i];
    }
    out.push_str("        q[o] = total;\n    }\n}\n\n");

    let mut offset = 0;
    let args = m
        .input_dims
        .iter()
        .map(|&d| {
            let a = format!("x + {offset}");
            offset += d;
            a
        })
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(
        out,
        "void {p}_forward_packed(const int16_t x[{upper}_TOTAL_INPUTS], int32_t q[{np}])\n{{\n    {p}_forward({args}, q);\n}}\n"
    );
    if opts.emit_argmax {
        write_argmax(&mut out, p, "int32_t", np);
    }
    let _ = writeln!(out, "#define TL_MODEL_Q15 1");
    let _ = writeln!(out, "#define TL_MODEL_TOTAL_INPUTS {upper}_TOTAL_INPUTS");
    let _ = writeln!(out, "#define TL_MODEL_OUTPUTS {upper}_NUM_PHASES");
    let _ = writeln!(out, "#define TL_MODEL_QUANTIZE_PACKED {p}_quantize_packed");
    let _ = writeln!(out, "#define TL_MODEL_FORWARD_PACKED {p}_forward_packed");
    Ok(out)
}

//! Test-vector files consumed by the host harness and the MCU harness.
//!
//! Plain text, whitespace separated, one record per line:
//!
//! ```text
//! tinylight-test-vectors 1
//! precision float32
//! inputs 12 9
//! outputs 4
//! count 2
//! <TOTAL_INPUTS f32 inputs> <outputs reference Q-values> <argmax>
//! ...
//! ```
//!
//! Inputs are raw feature values, concatenated in retained-input order.
//! float32 references are the f64 model output on the f32 inputs, rounded to
//! f32. q15 references are the integer Q-values of the bit-exact mirror
//! (units `2^Q_EXP`). The argmax breaks ties to the lowest index.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CodegenError, Precision, Q15Model};
use crate::supergraph::SubGraph;

const MAGIC: &str = "tinylight-test-vectors";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TestVector {
    pub inputs: Vec<f32>,
    pub expected: Vec<f64>,
    pub argmax: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestVectorSet {
    pub precision: Precision,
    pub input_dims: Vec<usize>,
    pub outputs: usize,
    pub vectors: Vec<TestVector>,
}

/// Where vector inputs come from.
pub enum InputSource<'a> {
    /// Observed states, one vector per retained input. Sampled without
    /// replacement while possible.
    Recorded(&'a [Vec<Vec<f64>>]),
    /// Independent uniform draws, one `(low, high)` per packed input.
    Uniform(&'a [(f64, f64)]),
}

pub enum Reference<'a> {
    Float(&'a SubGraph),
    Q15(&'a Q15Model),
}

impl Reference<'_> {
    fn precision(&self) -> Precision {
        match self {
            Reference::Float(_) => Precision::Float32,
            Reference::Q15(_) => Precision::Q15,
        }
    }

    fn input_dims(&self) -> &[usize] {
        match self {
            Reference::Float(s) => &s.input_dims,
            Reference::Q15(m) => &m.input_dims,
        }
    }

    fn outputs(&self) -> usize {
        match self {
            Reference::Float(s) => s.outputs,
            Reference::Q15(m) => m.outputs,
        }
    }

    fn evaluate(&self, packed: &[f32]) -> Result<Vec<f64>, CodegenError> {
        match self {
            Reference::Float(sub) => {
                let wide: Vec<f64> = packed.iter().map(|&v| v as f64).collect();
                let mut offset = 0;
                let parts: Vec<&[f64]> = sub
                    .input_dims
                    .iter()
                    .map(|&d| {
                        let s = &wide[offset..offset + d];
                        offset += d;
                        s
                    })
                    .collect();
                let q = sub
                    .q_values(&parts)
                    .map_err(|e| CodegenError::Unsupported(e.to_string()))?;
                Ok(q.into_iter().map(|v| v as f32 as f64).collect())
            }
            Reference::Q15(m) => Ok(m.forward(packed).into_iter().map(f64::from).collect()),
        }
    }
}

/// Index of the largest value, ties to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > values[best] { k } else { best })
}

/// Deterministic for a given reference, count, seed and source.
pub fn emit_test_vectors(
    reference: Reference<'_>,
    count: usize,
    seed: u64,
    source: InputSource<'_>,
) -> Result<TestVectorSet, CodegenError> {
    let dims = reference.input_dims().to_vec();
    let total: usize = dims.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f32>> = match source {
        InputSource::Recorded(states) => {
            if states.is_empty() && count > 0 {
                return Err(CodegenError::Unsupported(
                    "no recorded states to sample".into(),
                ));
            }
            let mut order: Vec<usize> = Vec::new();
            while order.len() < count {
                let mut round: Vec<usize> = (0..states.len()).collect();
                round.shuffle(&mut rng);
                order.extend(round);
            }
            order.truncate(count);
            order
                .into_iter()
                .map(|k| {
                    let s = &states[k];
                    if s.len() != dims.len() || s.iter().zip(&dims).any(|(x, &d)| x.len() != d) {
                        return Err(CodegenError::Unsupported(
                            "recorded state does not match the sub-graph inputs".into(),
                        ));
                    }
                    Ok(s.iter().flatten().map(|&v| v as f32).collect())
                })
                .collect::<Result<_, _>>()?
        }
        InputSource::Uniform(ranges) => {
            if ranges.len() != total {
                return Err(CodegenError::Unsupported(format!(
                    "{} uniform ranges for {total} inputs",
                    ranges.len()
                )));
            }
            (0..count)
                .map(|_| {
                    ranges
                        .iter()
                        .map(|&(lo, hi)| {
                            if hi > lo {
                                rng.gen_range(lo..hi) as f32
                            } else {
                                lo as f32
                            }
                        })
                        .collect()
                })
                .collect()
        }
    };
    let vectors = inputs
        .into_iter()
        .map(|inputs| {
            let expected = reference.evaluate(&inputs)?;
            if expected.iter().any(|v| !v.is_finite()) {
                return Err(CodegenError::NonFinite("reference Q-values".into()));
            }
            let argmax = argmax(&expected);
            Ok(TestVector {
                inputs,
                expected,
                argmax,
            })
        })
        .collect::<Result<_, CodegenError>>()?;
    Ok(TestVectorSet {
        precision: reference.precision(),
        input_dims: dims,
        outputs: reference.outputs(),
        vectors,
    })
}

fn bad(line: usize, message: impl Into<String>) -> CodegenError {
    CodegenError::Vectors {
        line,
        message: message.into(),
    }
}

impl TestVectorSet {
    pub fn total_inputs(&self) -> usize {
        self.input_dims.iter().sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let dims: Vec<String> = self.input_dims.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(out, "precision {}", self.precision);
        let _ = writeln!(out, "inputs {}", dims.join(" "));
        let _ = writeln!(out, "outputs {}", self.outputs);
        let _ = writeln!(out, "count {}", self.vectors.len());
        for v in &self.vectors {
            let mut fields: Vec<String> = v.inputs.iter().map(|x| format!("{x:?}")).collect();
            fields.extend(v.expected.iter().map(|&q| match self.precision {
                Precision::Float32 => format!("{:?}", q as f32),
                Precision::Q15 => format!("{}", q as i64),
            }));
            fields.push(v.argmax.to_string());
            let _ = writeln!(out, "{}", fields.join(" "));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CodegenError> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
        let mut header = |key: &str| -> Result<(usize, Vec<&str>), CodegenError> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| bad(0, format!("missing `{key}` line")))?;
            let mut words = line.split_whitespace();
            if words.next() != Some(key) {
                return Err(bad(n, format!("expected `{key}`")));
            }
            Ok((n, words.collect()))
        };
        let (n, magic) = header(MAGIC)?;
        if magic != [VERSION.to_string()] {
            return Err(bad(n, "unsupported version"));
        }
        let (n, prec) = header("precision")?;
        let precision = match prec.as_slice() {
            ["float32"] => Precision::Float32,
            ["q15"] => Precision::Q15,
            _ => return Err(bad(n, "precision must be float32 or q15")),
        };
        let (n, dims) = header("inputs")?;
        let input_dims = dims
            .iter()
            .map(|d| d.parse::<usize>().ok().filter(|&d| d > 0))
            .collect::<Option<Vec<_>>>()
            .filter(|d| !d.is_empty())
            .ok_or_else(|| bad(n, "inputs must be positive integers"))?;
        let one = |n: usize, w: Vec<&str>| -> Result<usize, CodegenError> {
            match w.as_slice() {
                [v] => v.parse().map_err(|_| bad(n, "expected an integer")),
                _ => Err(bad(n, "expected one integer")),
            }
        };
        let (n, w) = header("outputs")?;
        let outputs = one(n, w)?;
        if outputs == 0 {
            return Err(bad(n, "outputs must be positive"));
        }
        let (n, w) = header("count")?;
        let count = one(n, w)?;
        let total: usize = input_dims.iter().sum();
        let mut vectors = Vec::with_capacity(count);
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.len() != total + outputs + 1 {
                return Err(bad(
                    n,
                    format!(
                        "expected {} fields, got {}",
                        total + outputs + 1,
                        words.len()
                    ),
                ));
            }
            let inputs = words[..total]
                .iter()
                .map(|w| {
                    w.parse::<f32>()
                        .map_err(|_| bad(n, format!("bad input {w:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let expected = words[total..total + outputs]
                .iter()
                .map(|w| {
                    w.parse::<f64>()
                        .map_err(|_| bad(n, format!("bad reference {w:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let argmax: usize = words[total + outputs]
                .parse()
                .map_err(|_| bad(n, "bad argmax"))?;
            if argmax >= outputs {
                return Err(bad(n, "argmax out of range"));
            }
            vectors.push(TestVector {
                inputs,
                expected,
                argmax,
            });
        }
        if vectors.len() != count {
            return Err(bad(
                0,
                format!("count says {count}, found {}", vectors.len()),
            ));
        }
        Ok(Self {
            precision,
            input_dims,
            outputs,
            vectors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TestVectorSet {
        TestVectorSet {
            precision: Precision::Float32,
            input_dims: vec![2, 1],
            outputs: 2,
            vectors: vec![TestVector {
                inputs: vec![1.5, -0.1, 3.0],
                expected: vec![-0.25, 0.125],
                argmax: 1,
            }],
        }
    }

    #[test]
    fn text_layout() {
        let text = sample().to_text();
        assert_eq!(
            text,
            "tinylight-test-vectors 1\nprecision float32\ninputs 2 1\noutputs 2\ncount 1\n1.5 -0.1 3.0 -0.25 0.125 1\n"
        );
        assert_eq!(TestVectorSet::parse(&text).unwrap(), sample());
    }

    #[test]
    fn header_only_file() {
        let mut set = sample();
        set.vectors.clear();
        let text = set.to_text();
        assert_eq!(text.lines().count(), 5);
        assert!(TestVectorSet::parse(&text).unwrap().vectors.is_empty());
    }

    #[test]
    fn malformed_files_name_the_line() {
        let text = sample().to_text().replace("-0.25 0.125 1", "-0.25 1");
        assert!(matches!(
            TestVectorSet::parse(&text),
            Err(CodegenError::Vectors { line: 6, .. })
        ));
        let text = sample().to_text().replace("count 1", "count 2");
        assert!(TestVectorSet::parse(&text).is_err());
        let text = sample().to_text().replace("float32", "int8");
        assert!(matches!(
            TestVectorSet::parse(&text),
            Err(CodegenError::Vectors { line: 2, .. })
        ));
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}

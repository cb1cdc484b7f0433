//! Compiles generated C with the host compiler and checks it against a
//! test-vector set.

use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TestVectorSet;

/// Argmax disagreements count only when the reference's top two Q-values
/// differ by more than this.
pub const ARGMAX_MARGIN: f64 = 1e-4;

const MAIN: &str = include_str!("harness_main.c");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("C compiler failed:\n{0}")]
    Compile(String),
    #[error("harness run failed: {0}")]
    Run(String),
    #[error("unreadable harness output {0:?}")]
    Output(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnessResult {
    pub vectors: usize,
    pub max_abs_diff: f64,
    pub argmax_mismatches: usize,
    pub pass: bool,
}

fn compile(dir: &Path, source: &str) -> Result<std::path::PathBuf, HarnessError> {
    std::fs::write(dir.join("model.c"), source)?;
    std::fs::write(dir.join("harness.c"), MAIN)?;
    let exe = dir.join("harness");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let out = Command::new(cc)
        .current_dir(dir)
        .args([
            "-std=c99",
            "-Wall",
            "-Wextra",
            "-Werror",
            "-pedantic",
            "-O2",
            "harness.c",
            "-o",
        ])
        .arg(&exe)
        .arg("-lm")
        .output()?;
    if !out.status.success() {
        return Err(HarnessError::Compile(
            String::from_utf8_lossy(&out.stderr).into_owned(),
        ));
    }
    Ok(exe)
}

/// Passes when every output is within `tolerance` of its reference and no
/// argmax disagrees outside the tie margin. Q15 differences are in integer
/// Q units, so a bit-exact build has `max_abs_diff == 0`.
pub fn run_harness(
    source: &str,
    vectors: &TestVectorSet,
    tolerance: f64,
) -> Result<HarnessResult, HarnessError> {
    let dir = tempfile::tempdir()?;
    let exe = compile(dir.path(), source)?;
    let path = dir.path().join("vectors.txt");
    std::fs::write(&path, vectors.to_text())?;
    let out = Command::new(&exe).arg(&path).output()?;
    if !out.status.success() {
        return Err(HarnessError::Run(
            String::from_utf8_lossy(&out.stderr).trim().to_string(),
        ));
    }
    let text = String::from_utf8_lossy(&out.stdout).trim().to_string();
    #[derive(Deserialize)]
    struct Line {
        vectors: usize,
        max_abs_diff: f64,
        argmax_mismatches: usize,
    }
    let line: Line = serde_json::from_str(&text).map_err(|_| HarnessError::Output(text.clone()))?;
    if line.vectors == 0 {
        log::warn!("test-vector set is empty; nothing was checked");
    }
    Ok(HarnessResult {
        vectors: line.vectors,
        max_abs_diff: line.max_abs_diff,
        argmax_mismatches: line.argmax_mismatches,
        pass: line.max_abs_diff <= tolerance && line.argmax_mismatches == 0,
    })
}

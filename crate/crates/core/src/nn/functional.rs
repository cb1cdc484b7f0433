//! Tape-free reference implementations, used for inference and as oracles.

use super::NnError;

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Max-subtracted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Shannon entropy in nats with `0·ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64, NnError> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || p.iter().any(|&v| v < 0.0) {
        return Err(NnError::NotNormalized { sum });
    }
    Ok(-p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>())
}

/// Squared temporal-difference error `(r + γ·max q′·(1−done) − q[a])²`.
pub fn td_loss(
    q: &[f64],
    action: usize,
    reward: f64,
    q_next: &[f64],
    done: bool,
    gamma: f64,
) -> f64 {
    let err = td_target(reward, q_next, done, gamma) - q[action];
    err * err
}

pub(crate) fn td_target(reward: f64, q_next: &[f64], done: bool, gamma: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}
